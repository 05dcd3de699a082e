"""Forward/backward for one graph layer of each kind.

Aggregation operators are cached on the Graph instance (graphs are immutable,
so the cache stays valid).  All segment reductions run over edge arrays sorted
by (destination, source), which pins the floating-point summation order.
"""

import numpy as np
import scipy.sparse as sp

from ..graph import Graph, normalized_adjacency

LEAKY_SLOPE = 0.2


def _graph_cache(g: Graph) -> dict:
    cache = g.__dict__.get("_layer_cache")
    if cache is None:
        cache = {}
        g.__dict__["_layer_cache"] = cache
    return cache


def gcn_operator(g: Graph) -> sp.csr_matrix:
    cache = _graph_cache(g)
    if "gcn" not in cache:
        cache["gcn"] = normalized_adjacency(g)
    return cache["gcn"]


def mean_operator(g: Graph):
    """Row-normalized adjacency (neighbor mean, zero row for isolated nodes)."""
    cache = _graph_cache(g)
    if "mean" not in cache:
        adj = g.adjacency
        deg = g.degrees.astype(np.float64)
        inv = np.where(deg > 0, 1.0 / np.maximum(deg, 1), 0.0)
        m = sp.diags(inv) @ adj
        cache["mean"] = (m.tocsr(), m.T.tocsr())
    return cache["mean"]


def gat_edges(g: Graph):
    """Self-looped edge arrays (dst, src, segment starts) sorted by (dst, src)."""
    cache = _graph_cache(g)
    if "gat" not in cache:
        adj = (g.adjacency + sp.identity(g.num_nodes, format="csr")).tocsr()
        adj.sort_indices()
        indptr = adj.indptr
        src = adj.indices.astype(np.int64)
        dst = np.repeat(np.arange(g.num_nodes, dtype=np.int64), np.diff(indptr))
        cache["gat"] = (dst, src, indptr)
    return cache["gat"]


def layer_forward(kind: str, g: Graph, h: np.ndarray, w: np.ndarray, a_vec):
    """Returns (pre_activation, cache_for_backward)."""
    if kind == "gcn":
        m = gcn_operator(g) @ h
        return m @ w, {"m": m}
    if kind == "sage":
        mop, _ = mean_operator(g)
        m = mop @ h
        d = h.shape[1]
        z = h @ w[:d] + m @ w[d:]
        return z, {"m": m}
    if kind == "gat":
        dst, src, indptr = gat_edges(g)
        starts = indptr[:-1]
        d_out = w.shape[1]
        gproj = h @ w
        q = gproj @ a_vec[:d_out]
        r = gproj @ a_vec[d_out:]
        pre = q[dst] + r[src]
        e = np.where(pre > 0, pre, LEAKY_SLOPE * pre)
        seg_max = np.maximum.reduceat(e, starts)
        ex = np.exp(e - seg_max[dst])
        denom = np.add.reduceat(ex, starts)
        alpha = ex / denom[dst]
        attn = sp.csr_matrix((alpha, src, indptr), shape=(g.num_nodes, g.num_nodes))
        z = attn @ gproj
        return z, {"gproj": gproj, "pre": pre, "alpha": alpha, "attn": attn}
    raise ValueError(f"unknown layer kind {kind!r}")


def layer_backward(kind: str, g: Graph, h: np.ndarray, w: np.ndarray, a_vec,
                   cache: dict, dz: np.ndarray):
    """Gradient of the pre-activation output w.r.t. (w, a_vec, h).

    Returns (dw, da, dh); da is None except for gat.
    """
    if kind == "gcn":
        dw = cache["m"].T @ dz
        dh = gcn_operator(g) @ (dz @ w.T)        # operator is symmetric
        return dw, None, dh
    if kind == "sage":
        d = h.shape[1]
        _, mop_t = mean_operator(g)
        dw = np.concatenate([h.T @ dz, cache["m"].T @ dz], axis=0)
        dh = dz @ w[:d].T + mop_t @ (dz @ w[d:].T)
        return dw, None, dh
    if kind == "gat":
        dst, src, indptr = gat_edges(g)
        starts = indptr[:-1]
        d_out = w.shape[1]
        gproj, pre, alpha, attn = (cache["gproj"], cache["pre"],
                                   cache["alpha"], cache["attn"])
        dgproj = attn.T @ dz
        dalpha = np.einsum("ij,ij->i", dz[dst], gproj[src])
        t = alpha * dalpha
        seg_t = np.add.reduceat(t, starts)
        de = t - alpha * seg_t[dst]
        dpre = de * np.where(pre > 0, 1.0, LEAKY_SLOPE)
        dq = np.add.reduceat(dpre, starts)
        dr = np.zeros(g.num_nodes)
        np.add.at(dr, src, dpre)
        dgproj = dgproj + np.outer(dq, a_vec[:d_out]) + np.outer(dr, a_vec[d_out:])
        dw = h.T @ dgproj
        da = np.concatenate([gproj.T @ dq, gproj.T @ dr])
        dh = dgproj @ w.T
        return dw, da, dh
    raise ValueError(f"unknown layer kind {kind!r}")
