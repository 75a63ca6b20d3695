"""Grid scans with golden-section refinement for one-dimensional maxima.

Criterion suprema and extremal-point searches share the same pattern: scan a
fixed grid, then polish every grid-local maximum by golden-section search in
the bracketing cell.  Results are deterministic and never fall below the best
grid value.
"""

from __future__ import annotations

import numpy as np

_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0  # 1/phi
_INVPHI2 = (3.0 - np.sqrt(5.0)) / 2.0  # 1/phi^2


def golden_max(f, a: float, b: float, tol: float = 1e-10, max_iter: int = 200):
    """Maximize a unimodal scalar function on [a, b]; returns (x, f(x))."""
    if b < a:
        a, b = b, a
    if b - a <= tol:
        x = 0.5 * (a + b)
        return x, f(x)
    h = b - a
    c = a + _INVPHI2 * h
    d = a + _INVPHI * h
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if h <= tol:
            break
        if fc > fd:
            b, d, fd = d, c, fc
            h = b - a
            c = a + _INVPHI2 * h
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            h = b - a
            d = a + _INVPHI * h
            fd = f(d)
    if fc > fd:
        return c, fc
    return d, fd


def golden_max_batch(f, lo, hi, tol: float = 1e-10, max_iter: int = 200):
    """Vectorized golden-section maximization over per-row brackets.

    ``f`` maps an array of points (one per row) to an array of values; all
    rows are refined in lockstep, with a single batched evaluation per
    iteration (the freshly inserted probe point of each row).
    """
    a = np.array(lo, dtype=float)
    b = np.array(hi, dtype=float)
    h = b - a
    c = a + _INVPHI2 * h
    d = a + _INVPHI * h
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if np.all(h <= tol):
            break
        left = fc > fd  # maximum bracketed in [a, d]
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        h = b - a
        fresh = np.where(left, a + _INVPHI2 * h, a + _INVPHI * h)
        ffresh = f(fresh)
        c, d = np.where(left, fresh, d), np.where(left, c, fresh)
        fc, fd = np.where(left, ffresh, fd), np.where(left, fc, ffresh)
    best_left = fc > fd
    x = np.where(best_left, c, d)
    v = np.where(best_left, fc, fd)
    return x, v


def local_max_indices(values: np.ndarray) -> np.ndarray:
    """Indices of grid-local maxima (endpoints count against one neighbor)."""
    v = np.asarray(values, dtype=float)
    n = v.size
    if n == 1:
        return np.array([0])
    up = np.empty(n, dtype=bool)
    down = np.empty(n, dtype=bool)
    up[0] = True
    up[1:] = v[1:] >= v[:-1]
    down[-1] = True
    down[:-1] = v[:-1] >= v[1:]
    return np.flatnonzero(up & down)


def polished_local_maxima(f, nodes: np.ndarray, values: np.ndarray | None = None, tol: float = 1e-10):
    """Polish every grid-local maximum of f on the nodes.

    Returns (points, values) sorted by point; each entry is at least as large
    as its grid seed, and brackets are the neighboring grid cells.
    """
    nodes = np.asarray(nodes, dtype=float)
    if values is None:
        values = f(nodes)
    values = np.asarray(values, dtype=float)
    pts, vals = [], []
    for i in local_max_indices(values):
        a = nodes[max(i - 1, 0)]
        b = nodes[min(i + 1, nodes.size - 1)]
        x, v = golden_max(f, a, b, tol=tol)
        if values[i] >= v:
            x, v = nodes[i], values[i]
        pts.append(x)
        vals.append(v)
    order = np.argsort(pts)
    return np.asarray(pts)[order], np.asarray(vals)[order]


def polished_max(f, nodes: np.ndarray, values: np.ndarray | None = None, tol: float = 1e-10):
    """Supremum of f over the interval spanned by the grid; returns (x, value)."""
    pts, vals = polished_local_maxima(f, nodes, values, tol=tol)
    i = int(np.argmax(vals))
    return float(pts[i]), float(vals[i])
