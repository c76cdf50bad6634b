"""Panel-based Gauss-Legendre quadrature for oscillatory protocol integrals.

The coupling amplitudes integrate products of a (possibly sharply
switched) schedule with phase factors exp(i [eps_i t +/- phi(t, t0)]).
Panels are split at schedule switch points and limited in width so each
holds at most a fraction of an oscillation period; the node count is
then doubled until two consecutive estimates agree.
"""

from __future__ import annotations

import numpy as np

from .errors import QuadratureError

_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gl_nodes(order: int):
    if order not in _GL_CACHE:
        x, w = np.polynomial.legendre.leggauss(order)
        _GL_CACHE[order] = (x, w)
    return _GL_CACHE[order]


def _build_panels(a: float, b: float, breakpoints, max_freq: float, max_width: float):
    pts = {a, b}
    for p in breakpoints or ():
        if a < p < b:
            pts.add(float(p))
    edges = sorted(pts)
    width_cap = b - a
    if max_freq > 0:
        width_cap = min(width_cap, 5.0 / max_freq)
    if max_width and max_width > 0:
        width_cap = min(width_cap, max_width)
    panels = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        n = max(1, int(np.ceil((hi - lo) / width_cap)))
        sub = np.linspace(lo, hi, n + 1)
        panels.extend(zip(sub[:-1], sub[1:]))
    return panels


def _evaluate(f, panels, order: int) -> complex:
    x, w = _gl_nodes(order)
    los = np.array([p[0] for p in panels])
    his = np.array([p[1] for p in panels])
    half = (his - los) / 2
    mid = (his + los) / 2
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    vals = np.asarray(f(nodes))
    vals = vals.reshape(len(panels), order)
    return complex(np.sum(vals @ w * half))

def integrate_oscillatory(
    f,
    a: float,
    b: float,
    breakpoints=None,
    max_freq: float = 0.0,
    max_width: float = 0.0,
    rel_tol: float = 1e-10,
    abs_tol: float = 0.0,
    order: int = 16,
    max_refine: int = 5,
):
    """Integrate a vectorised complex integrand f over [a, b].

    Refines by doubling the panel count until two successive estimates
    differ by less than max(abs_tol, rel_tol * scale); raises
    QuadratureError with diagnostics if that never happens.
    """
    if b <= a:
        return 0.0 + 0.0j
    panels = _build_panels(a, b, breakpoints, max_freq, max_width)
    est = _evaluate(f, panels, order)
    scale = max(abs(est), (b - a) * 1e-300)
    for _ in range(max_refine):
        panels = [p for lo, hi in panels for p in ((lo, (lo + hi) / 2), ((lo + hi) / 2, hi))]
        new = _evaluate(f, panels, order)
        delta = abs(new - est)
        est, scale = new, max(abs(new), scale)
        if delta <= max(abs_tol, rel_tol * scale):
            return est
    raise QuadratureError(
        f"quadrature did not converge over [{a}, {b}]: last delta {delta:.3e} "
        f"with {len(panels)} panels",
        estimate=est,
        last_delta=delta,
        panels=len(panels),
    )
