"""Independent reference computations used only by the tests."""

import numpy as np
from scipy.spatial import cKDTree


def mesh_triangles(nt, ns, periodic_s=False):
    """Vertex-id triples of the two triangles per quad; ids ``i * ns + j``."""
    i, j = np.meshgrid(np.arange(nt - 1), np.arange(ns - 1), indexing="ij")
    a, b = i * ns + j, i * ns + j + 1
    c, d = (i + 1) * ns + j, (i + 1) * ns + j + 1
    tris = np.concatenate([np.stack([a, b, d], -1).reshape(-1, 3), np.stack([a, d, c], -1).reshape(-1, 3)])
    topo = tris.copy()
    if periodic_s:
        # last column is the first one again
        col = topo % ns
        topo = np.where(col == ns - 1, topo - (ns - 1), topo)
    return tris, topo


def _segment_triangle(p0, p1, a, b, c, eps=1e-12):
    """Moller-Trumbore, vectorized. Returns (hit mask, points)."""
    d = p1 - p0
    e1, e2 = b - a, c - a
    pv = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, pv)
    ok = np.abs(det) > eps
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    tv = p0 - a
    u = np.einsum("ij,ij->i", tv, pv) * inv
    qv = np.cross(tv, e1)
    v = np.einsum("ij,ij->i", d, qv) * inv
    t = np.einsum("ij,ij->i", e2, qv) * inv
    hit = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t >= 0) & (t <= 1)
    return hit, p0 + t[:, None] * d


def brute_force_self_intersections(points, periodic_s=False, chunk=200_000):
    """Intersection points of non-adjacent triangles of a ``(nt, ns, 3)`` grid mesh."""
    nt, ns, _ = points.shape
    V = points.reshape(-1, 3)
    tris, topo = mesh_triangles(nt, ns, periodic_s)
    T = V[tris]
    cen = T.mean(axis=1)
    rad = np.max(np.linalg.norm(T - cen[:, None, :], axis=-1), axis=1)
    pairs = cKDTree(cen).query_pairs(2 * rad.max(), output_type="ndarray")
    out = []
    for k in range(0, len(pairs), chunk):
        p = pairs[k:k + chunk]
        i, j = p[:, 0], p[:, 1]
        near = np.linalg.norm(cen[i] - cen[j], axis=1) <= rad[i] + rad[j]
        shared = np.zeros(len(p), dtype=bool)
        for u in range(3):
            for w in range(3):
                shared |= topo[i, u] == topo[j, w]
        keep = near & ~shared
        i, j = i[keep], j[keep]
        for A, B in ((i, j), (j, i)):
            for e in range(3):
                hit, q = _segment_triangle(T[A, e], T[A, (e + 1) % 3], T[B, 0], T[B, 1], T[B, 2])
                if np.any(hit):
                    out.append(q[hit])
    return np.concatenate(out) if out else np.zeros((0, 3))


def directed_hausdorff(a, b):
    """max over ``a`` of the distance to the nearest point of ``b``."""
    if len(a) == 0:
        return 0.0
    if len(b) == 0:
        return np.inf
    return float(np.max(cKDTree(b).query(a)[0]))


def max_edge(points):
    dt = np.linalg.norm(np.diff(points, axis=0), axis=-1)
    ds = np.linalg.norm(np.diff(points, axis=1), axis=-1)
    return float(max(dt.max(), ds.max()))
