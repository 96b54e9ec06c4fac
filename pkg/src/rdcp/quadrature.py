"""Composite Gauss-Legendre quadrature helpers shared by the numeric modules."""

from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def _gl_rule(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def panel_nodes(edges: np.ndarray, order: int):
    """Gauss-Legendre nodes/weights on each panel [edges[i], edges[i+1]].

    Returns (nodes, weights) with shape (n_panels, order); ravel for a flat
    composite rule.
    """
    edges = np.asarray(edges, dtype=float)
    x, w = _gl_rule(order)
    lo = edges[:-1, None]
    hi = edges[1:, None]
    half = 0.5 * (hi - lo)
    nodes = 0.5 * (hi + lo) + half * x[None, :]
    weights = half * w[None, :]
    return nodes, weights


def integrate_panels(f, edges: np.ndarray, order: int) -> np.ndarray:
    """Per-panel integrals of a vectorized callable f."""
    nodes, weights = panel_nodes(edges, order)
    return np.sum(f(nodes.ravel()).reshape(nodes.shape) * weights, axis=1)


def cumulative_integral(f, edges: np.ndarray, order: int) -> np.ndarray:
    """Cumulative integral of f from edges[0] to every edge (first entry 0)."""
    vals = integrate_panels(f, edges, order)
    out = np.empty(len(edges), dtype=float)
    out[0] = 0.0
    np.cumsum(vals, out=out[1:])
    return out


def geometric_edges(lo: float, hi: float, n_panels: int, include_zero: bool = False) -> np.ndarray:
    """Geometrically spaced panel edges on [lo, hi], optionally prefixed by 0."""
    if not 0.0 < lo < hi:
        raise ValueError(f"need 0 < lo < hi, got lo={lo}, hi={hi}")
    edges = np.geomspace(lo, hi, n_panels + 1)
    edges[0], edges[-1] = lo, hi
    if include_zero:
        edges = np.concatenate(([0.0], edges))
    return edges
