"""Self-intersections of Heisenberg minimal surfaces.

Heisenberg characteristics are straight lines ``q(t, s) = gamma(s) + t v(s)``
with ``v = (cos phi, sin phi, (x0 sin phi - y0 cos phi) / 2)``, so two rulings
``a != b`` meet iff::

    gamma(a) - gamma(b) = tau1 v(a) + tau2 v(b)

The meeting point is ``q* = gamma(a) - tau1 v(a) = gamma(b) + tau2 v(b)``,
i.e. ``q(-tau1, a) = q(tau2, b)``.

The solver scans ``det[gamma(a) - gamma(b), v(a), v(b)]`` on an ``(a, b)``
grid, refines every sign-change cell with Gauss-Newton on ``(a, b, tau1,
tau2)``, and groups the solutions into loci. Where ``v(a)`` and ``v(b)`` are
parallel the pair carries a whole line of solutions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

__all__ = ["Locus", "IntersectionLocus", "h1_self_intersections", "umbrella_intersection_germ", "ruling"]

PAR_RTOL = 1e-8
FD_STEP = 1e-6


def ruling(curve, s):
    """``(gamma(s), v(s))`` for the straight characteristics of a Heisenberg surface."""
    g = curve.eval(s)
    x0, y0, phi = g[..., 0], g[..., 1], g[..., 3]
    c, sn = np.cos(phi), np.sin(phi)
    v = np.stack([c, sn, 0.5 * (x0 * sn - y0 * c)], axis=-1)
    return g[..., :3], v


@dataclass
class Locus:
    kind: str  # IsolatedPoint, Segment, Line or Family
    pairs: np.ndarray  # (n, 4) rows (a, b, tau1, tau2)
    points: np.ndarray  # (n, 3) intersection points
    direction: np.ndarray | None = None  # for Line: direction of the line
    t_bounds: tuple | None = None  # for Line: admissible range of -tau1

    def sample(self, n=200):
        """Point cloud of the locus; a Line is sampled over ``t_bounds``."""
        if self.kind != "Line":
            return self.points
        lo, hi = self.t_bounds if self.t_bounds else (-1.0, 1.0)
        return self.points[0] + np.linspace(lo, hi, n)[:, None] * self.direction

    def to_dict(self):
        out = {
            "kind": self.kind,
            "pairs": self.pairs.tolist(),
            "points": self.points.tolist(),
        }
        if self.kind == "Line":
            out["direction"] = self.direction.tolist()
            out["t_bounds"] = None if self.t_bounds is None else list(self.t_bounds)
        if len(self.points):
            out["bounds"] = [self.points.min(axis=0).tolist(), self.points.max(axis=0).tolist()]
        return out


@dataclass
class IntersectionLocus:
    loci: list = field(default_factory=list)

    @property
    def pairs(self):
        return np.concatenate([l.pairs for l in self.loci]) if self.loci else np.zeros((0, 4))

    @property
    def points(self):
        return np.concatenate([l.points for l in self.loci]) if self.loci else np.zeros((0, 3))

    def __len__(self):
        return len(self.loci)

    def kinds(self):
        return [l.kind for l in self.loci]

    def to_dict(self):
        return {"loci": [l.to_dict() for l in self.loci]}


def _residual(curve, a, b, t1, t2):
    ga, va = ruling(curve, a)
    gb, vb = ruling(curve, b)
    return ga - gb - t1[:, None] * va - t2[:, None] * vb, va, vb


def _d_ruling(curve, s):
    g1, v1 = ruling(curve, s + FD_STEP)
    g0, v0 = ruling(curve, s - FD_STEP)
    return (g1 - g0) / (2 * FD_STEP), (v1 - v0) / (2 * FD_STEP)


def _gauss_newton(curve, a, b, t1, t2, tol, maxiter=30):
    x = np.stack([a, b, t1, t2], axis=-1).astype(float)
    for _ in range(maxiter):
        r, va, vb = _residual(curve, x[:, 0], x[:, 1], x[:, 2], x[:, 3])
        if np.all(np.linalg.norm(r, axis=1) < 1e-3 * tol):
            break
        dga, dva = _d_ruling(curve, x[:, 0])
        dgb, dvb = _d_ruling(curve, x[:, 1])
        J = np.stack([dga - x[:, 2:3] * dva, -dgb - x[:, 3:4] * dvb, -va, -vb], axis=-1)
        step = np.einsum("nij,nj->ni", np.linalg.pinv(J, rcond=1e-10), r)
        x -= step
        if np.all(np.linalg.norm(step, axis=1) < 1e-14):
            break
    r, va, vb = _residual(curve, x[:, 0], x[:, 1], x[:, 2], x[:, 3])
    return x, np.linalg.norm(r, axis=1), va, vb


def _period(curve):
    """Period of the lifted curve when its ends coincide (angle mod 2 pi), else None."""
    lo, hi = curve.s_range
    g = curve.eval(np.array([lo, hi]))
    dphi = (g[1, 3] - g[0, 3]) / (2 * np.pi)
    if np.allclose(g[0, :3], g[1, :3], atol=1e-9) and abs(dphi - round(dphi)) < 1e-9:
        return hi - lo
    return None


def _sep(a, b, period):
    d = np.abs(a - b)
    if period:
        d = np.mod(d, period)
        d = np.minimum(d, period - d)
    return d


def h1_self_intersections(curve, grid_n=400, tol=1e-8, t_range=None, window=None):
    """Solve the ruling-intersection system over ``s_range^2`` (or ``window^2``).

    ``t_range`` keeps only points with ``-tau1`` and ``tau2`` inside the range
    (a finite piece of the surface). ``tol`` is relative to the bounding box
    of ``gamma``.
    """
    lo, hi = window if window is not None else curve.s_range
    period = _period(curve)
    s = np.linspace(lo, hi, grid_n)
    ds = s[1] - s[0]
    g, v = ruling(curve, s)
    L = max(float(np.max(np.ptp(g, axis=0))), 1e-12)
    atol = tol * L

    # det[gamma(a) - gamma(b), v(a), v(b)] on the grid
    cross = np.cross(v[:, None, :], v[None, :, :])
    diff = g[:, None, :] - g[None, :, :]
    det = np.einsum("abk,abk->ab", diff, cross) / L
    sgn = np.sign(det)
    cells = np.zeros((grid_n - 1, grid_n - 1), dtype=bool)
    corners = [sgn[:-1, :-1], sgn[1:, :-1], sgn[:-1, 1:], sgn[1:, 1:]]
    cells |= (np.max(corners, axis=0) > 0) & (np.min(corners, axis=0) < 0)
    cells |= np.any([c == 0 for c in corners], axis=0)
    ia, ib = np.nonzero(cells)
    a0 = s[ia] + 0.5 * ds
    b0 = s[ib] + 0.5 * ds
    keep = (a0 < b0) & (_sep(a0, b0, period) > 2 * ds)
    x, pts = _transversal_pairs(curve, a0[keep], b0[keep], atol, (lo, hi), ds, period, t_range)

    loci = _line_loci(curve, _collinear_pairs(curve, s, g, v, L, atol, period), ds, t_range)
    loci += _curve_loci(x, pts, ds, L, period)
    loci.sort(key=lambda l: (l.kind, tuple(np.round(l.points[0], 9))))
    return IntersectionLocus(loci)


def _transversal_pairs(curve, a0, b0, atol, bounds, ds, period, t_range):
    """Refine seeds into solutions with ``v(a)``, ``v(b)`` not parallel."""
    empty = np.zeros((0, 4)), np.zeros((0, 3))
    if len(a0) == 0:
        return empty
    lo, hi = bounds
    ga, va = ruling(curve, a0)
    gb, vb = ruling(curve, b0)
    A = np.stack([va, vb], axis=-1)
    tau = np.einsum("nij,nj->ni", np.linalg.pinv(A), ga - gb)
    x, res, va, vb = _gauss_newton(curve, a0, b0, tau[:, 0], tau[:, 1], atol)
    # order each pair as a < b; swapping gives tau1' = -tau2, tau2' = -tau1
    swap = x[:, 0] > x[:, 1]
    x[swap] = np.stack([x[swap, 1], x[swap, 0], -x[swap, 3], -x[swap, 2]], axis=-1)
    va = np.where(swap[:, None], vb, va)
    ok = (res < atol) & (x[:, 0] >= lo - 1e-9) & (x[:, 1] <= hi + 1e-9)
    ok &= _sep(x[:, 0], x[:, 1], period) > 2 * ds
    _, vb = ruling(curve, x[:, 1])
    ok &= np.linalg.norm(np.cross(va, vb), axis=1) > PAR_RTOL * np.linalg.norm(va, axis=1) * np.linalg.norm(vb, axis=1)
    if t_range is not None:
        ok &= (-x[:, 2] >= t_range[0] - 1e-9) & (-x[:, 2] <= t_range[1] + 1e-9)
        ok &= (x[:, 3] >= t_range[0] - 1e-9) & (x[:, 3] <= t_range[1] + 1e-9)
    x, va = x[ok], va[ok]
    if len(x) == 0:
        return empty
    ga, _ = ruling(curve, x[:, 0])
    return x, ga - x[:, 2:3] * va


def _collinear_pairs(curve, s, g, v, L, atol, period):
    """Pairs ``(a, b)`` whose rulings lie on one line, i.e. overlap along a segment."""
    vn = v / np.linalg.norm(v, axis=1, keepdims=True)
    par = np.linalg.norm(np.cross(vn[:, None, :], vn[None, :, :]), axis=-1)
    diff = (g[:, None, :] - g[None, :, :]) / L
    off = np.linalg.norm(np.cross(diff, vn[:, None, :]), axis=-1)
    m = par + off
    n = len(s)
    ds = s[1] - s[0]
    # local minima over 3x3 neighbourhoods, upper triangle, clearly below the grid resolution
    pad = np.pad(m, 1, constant_values=np.inf)
    nb = np.min([pad[1 + i:n + 1 + i, 1 + j:n + 1 + j] for i in (-1, 0, 1) for j in (-1, 0, 1)], axis=0)
    ia, ib = np.nonzero((m <= nb) & (m < 20 * ds))
    keep = (s[ia] < s[ib]) & (_sep(s[ia], s[ib], period) > 2 * ds)
    out = []
    for a, b in zip(s[ia][keep], s[ib][keep]):
        def fun(p):
            ga, va = ruling(curve, np.array([p[0]]))
            gb, vb = ruling(curve, np.array([p[1]]))
            u = va[0] / np.linalg.norm(va[0])
            return np.concatenate([np.cross(u, vb[0] / np.linalg.norm(vb[0])), np.cross(u, (ga[0] - gb[0]) / L)])
        sol = least_squares(fun, [a, b], xtol=1e-15, ftol=1e-15, gtol=1e-15)
        if np.linalg.norm(sol.fun) * L < atol and _sep(sol.x[0], sol.x[1], period) > 2 * ds:
            a1, b1 = sorted(sol.x)
            if s[0] - 1e-9 <= a1 and b1 <= s[-1] + 1e-9:
                out.append((a1, b1))
    if not out:
        return np.zeros((0, 2))
    out = np.array(out)
    if period:
        out = np.mod(out - s[0], period) + s[0]
        out.sort(axis=1)
    # dedupe
    uniq = []
    for row in out:
        if not any(np.max(np.abs(row - u)) < 1e-6 for u in uniq):
            uniq.append(row)
    return np.array(uniq)


def _line_loci(curve, ab, ds, t_range):
    out = []
    for a, b in ab:
        ga, v = ruling(curve, np.array([a]))
        gb, vb = ruling(curve, np.array([b]))
        direction = v[0] / np.linalg.norm(v[0])
        base = ga[0]
        bounds = None
        if t_range is not None:
            # points gamma(a) + t v(a) with t in t_range that also lie on ruling b within t_range
            sgn = np.sign(np.dot(v[0], vb[0]))
            scale = np.linalg.norm(v[0]) / np.linalg.norm(vb[0])
            offset = np.dot(ga[0] - gb[0], vb[0]) / np.dot(vb[0], vb[0])
            # t_b = offset + sgn * scale * t_a
            lo_b = sorted(((t_range[0] - offset) / (sgn * scale), (t_range[1] - offset) / (sgn * scale)))
            lo_t, hi_t = max(t_range[0], lo_b[0]), min(t_range[1], lo_b[1])
            if lo_t > hi_t:
                continue
            n = np.linalg.norm(v[0])
            bounds = (lo_t * n, hi_t * n)
        out.append(Locus("Line", np.array([[a, b, np.nan, np.nan]]), base[None, :], direction, bounds))
    return out


def _curve_loci(x, pts, ds, L, period):
    if len(x) == 0:
        return []
    order = np.argsort(x[:, 0])
    x, pts = x[order], pts[order]
    # connected components in (a, b) with a generous link radius
    ab = x[:, :2].copy()
    pairs = cKDTree(ab).query_pairs(4 * ds, output_type="ndarray")
    if period:
        for shift in ((period, 0), (0, period), (period, period), (period, -period)):
            q = cKDTree(ab + np.array(shift)).query_ball_point(ab, 4 * ds)
            extra = [(i, j) for i, js in enumerate(q) for j in js]
            if extra:
                pairs = np.concatenate([pairs.reshape(-1, 2), np.array(extra)])
    n = len(x)
    pairs = pairs.reshape(-1, 2)
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    out = []
    for lab in np.unique(labels):
        idx = np.flatnonzero(labels == lab)
        P = pts[idx]
        spread = float(np.max(np.ptp(P, axis=0))) if len(P) > 1 else 0.0
        if spread <= 1e-7 * L:
            kind = "IsolatedPoint"
            out.append(Locus(kind, x[idx[:1]], P[:1]))
            continue
        centred = P - P.mean(axis=0)
        sv = np.linalg.svd(centred, compute_uv=False)
        kind = "Segment" if sv[1] <= 1e-6 * max(sv[0], 1e-300) else "Family"
        out.append(Locus(kind, x[idx], P))
    return out


def umbrella_intersection_germ(curve, singular_point, window=0.5, grid_n=201, tol=1e-8, radius=None):
    """Loci of the solver restricted to ``(a, b)`` near the singular parameter.

    Keeps the loci that reach the singular point, i.e. come within
    ``radius`` (default: 2 grid cells of the window, in space) of it.
    """
    s0 = float(singular_point.s)
    lo = max(curve.s_range[0], s0 - window)
    hi = min(curve.s_range[1], s0 + window)
    found = h1_self_intersections(curve, grid_n=grid_n, tol=tol, window=(lo, hi))
    q0 = np.asarray(singular_point.q, dtype=float)
    if radius is None:
        g, v = ruling(curve, np.linspace(lo, hi, grid_n))
        radius = 2 * float(np.max(np.linalg.norm(np.diff(g, axis=0), axis=1))) + 1e-12
    germ = []
    for loc in found.loci:
        if loc.kind == "Line":
            d = loc.direction
            w = loc.points[0] - q0
            dist = np.linalg.norm(w - np.dot(w, d) * d)
        else:
            dist = float(np.min(np.linalg.norm(loc.points - q0, axis=1)))
        if dist <= radius:
            germ.append(loc)
    return IntersectionLocus(germ)
