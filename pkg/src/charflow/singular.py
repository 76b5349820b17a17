"""Characteristic points, singular curves and their classification.

Characteristic points of the projected surface are zeros of
``phi(t, s) = xi3^t``, the third frame component of the transported
generator. Its ``t``-derivative is available exactly from the transported
components, ``d phi/dt = xi1^t sin(phi) - xi2^t cos(phi)``, which is what
makes double roots (tangency points, strong curves) tractable.

Roots are refined by short integrations started from the nearest mesh node,
so a refinement costs a handful of RK4 steps instead of a full column.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .lift import DEFAULT_STEP, closed_form_h1, coords_to_xi, flow_to, lifted_field, xi_to_coords
from .frame import to_frame_components
from .surface import characteristic_node_mask, phi_from_mesh

__all__ = [
    "CharPoint",
    "SingularCurve",
    "SingularReport",
    "NotCharacteristic",
    "UnresolvedClassification",
    "StepCollapse",
    "NormalizationFailed",
    "LoopThroughSingular",
    "phi_grid",
    "find_characteristic_points",
    "classify",
    "classify_many",
    "refine_root",
    "trace_simple_curve",
    "assemble_curves",
    "h1_discriminant",
    "h1_singular_points",
    "h1_singular_curves",
    "winding_index",
    "umbrella_frame_test",
]

ROOT_TOL = 1e-9
VALUE_BAND = 1e-8
DERIV_BAND = 1e-6
DERIV_STEP = 1e-5
STRONG_SAMPLES = 20

REGULAR = "Regular"
GENERIC = "GenericSingular"
TANGENCY = "TangencyOrderK"
STRONG = "StronglySingularMember"
ISOLATED = "Isolated"
UNCLASSIFIED = "Unclassified"


class NotCharacteristic(ValueError):
    """``xi3`` does not vanish at the requested point."""


class UnresolvedClassification(ArithmeticError):
    """A derivative estimate sits on the edge of the zero band."""


class StepCollapse(ArithmeticError):
    """Continuation could not advance and no anchor was found."""


class NormalizationFailed(ArithmeticError):
    """The generator cannot be reduced to ``xi1 = xi2 = xi3 = 0``."""


class LoopThroughSingular(ArithmeticError):
    """A winding loop passes through a masked node."""


@dataclass
class CharPoint:
    t: float
    s: float
    q: np.ndarray
    kind: str = UNCLASSIFIED
    order: int | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def label(self):
        if self.kind == TANGENCY:
            return f"TangencyOrderK({'>=5' if self.order >= 5 else self.order})"
        return self.kind

    def to_dict(self):
        return {
            "t": float(self.t),
            "s": float(self.s),
            "x": float(self.q[0]),
            "y": float(self.q[1]),
            "z": float(self.q[2]),
            "kind": self.label,
            "diagnostics": {k: _plain(v) for k, v in sorted(self.diagnostics.items())},
        }


def _plain(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


@dataclass
class SingularCurve:
    samples: list
    kind: str  # "Simple" or "Strong"
    anchor: CharPoint | None = None
    stop_reason: tuple = ()
    anchors: list = field(default_factory=list)  # every end that closed at a singular point

    def polyline(self):
        return np.array([p.q for p in self.samples]) if self.samples else np.zeros((0, 3))

    def to_dict(self):
        return {
            "kind": self.kind,
            "anchor": None if self.anchor is None else self.anchor.to_dict(),
            "anchors": [a.to_dict() for a in self.anchors],
            "stop_reason": list(self.stop_reason),
            "samples": [[float(p.t), float(p.s), *map(float, p.q)] for p in self.samples],
        }


@dataclass
class SingularReport:
    char_points: list
    curves: list
    indices: list = field(default_factory=list)

    def to_dict(self):
        return {
            "char_points": [p.to_dict() for p in self.char_points],
            "curves": [c.to_dict() for c in self.curves],
            "indices": self.indices,
        }


# --- evaluation helpers -------------------------------------------------------


def _phi_parts(y, xi):
    """``(xi3, d xi3/dt)`` from lifted states and frame components."""
    return xi[..., 2], xi[..., 0] * np.sin(y[..., 3]) - xi[..., 1] * np.cos(y[..., 3])


def phi_grid(mesh):
    """``xi3^t`` at every node."""
    return mesh.xi_t[..., 2]


def dphi_grid(mesh):
    return _phi_parts(mesh.nodes, mesh.xi_t)[1]


class _Column:
    """Local evaluator of ``(state, xi)`` along characteristics from known nodes."""

    def __init__(self, structure, y, xi, t0, step):
        self.structure = structure
        self.y = np.atleast_2d(y)
        self.w = xi_to_coords(structure, self.y, np.atleast_2d(xi))
        self.t0 = np.atleast_1d(np.asarray(t0, dtype=float))
        self.step = step

    def at(self, t, members=None):
        idx = slice(None) if members is None else members
        dt = np.asarray(t, dtype=float) - self.t0[idx]
        if not np.any(dt):
            y = self.y[idx].copy()
            return y, coords_to_xi(self.structure, y, self.w[idx])
        y, w = flow_to(self.structure, self.y[idx], self.w[idx], dt, self.step)
        return y, coords_to_xi(self.structure, y, w)


def _column_states(structure, curve, t, s, step=DEFAULT_STEP):
    """``(state, xi)`` at parameters ``(t_k, s_k)`` integrated from the curve."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    t = np.broadcast_to(np.asarray(t, dtype=float), s.shape)
    y0 = curve.eval(s)
    xi0 = curve.tangent(s)
    return _Column(structure, y0, xi0, np.zeros_like(s), step).at(t)


def _bracketed_newton(fn, a, b, fa, fb, xtol, maxiter=60):
    """Batched Newton safeguarded by bisection; ``fn(x, idx) -> (value, derivative)``."""
    a, b, fa, fb = (np.array(v, dtype=float) for v in (a, b, fa, fb))
    x = np.where(fb != fa, (a * fb - b * fa) / np.where(fb != fa, fb - fa, 1.0), 0.5 * (a + b))
    active = np.ones(len(a), dtype=bool)
    for _ in range(maxiter):
        if not np.any(active):
            break
        idx = np.flatnonzero(active)
        f, df = fn(x[idx], idx)
        same = f * fa[idx] > 0
        a[idx] = np.where(same, x[idx], a[idx])
        fa[idx] = np.where(same, f, fa[idx])
        b[idx] = np.where(same, b[idx], x[idx])
        fb[idx] = np.where(same, fb[idx], f)
        with np.errstate(divide="ignore", invalid="ignore"):
            xn = x[idx] - f / df
        lo, hi = np.minimum(a[idx], b[idx]), np.maximum(a[idx], b[idx])
        bad = ~np.isfinite(xn) | (xn <= lo) | (xn >= hi)
        xn = np.where(bad, 0.5 * (lo + hi), xn)
        done = (f == 0) | (np.abs(xn - x[idx]) <= xtol)
        x[idx] = np.where(f == 0, x[idx], xn)
        active[idx[done]] = False
    return x


def _illinois(fn, a, b, fa, fb, xtol, maxiter=100):
    """Batched Illinois regula falsi; ``fn(x, active_index) -> values``."""
    a, b, fa, fb = (np.array(v, dtype=float) for v in (a, b, fa, fb))
    x = np.full(len(a), np.inf)
    side = np.zeros(len(a), dtype=int)
    active = np.abs(b - a) > xtol
    for _ in range(maxiter):
        if not np.any(active):
            break
        idx = np.flatnonzero(active)
        denom = fb[idx] - fa[idx]
        xs = np.where(denom != 0, (a[idx] * fb[idx] - b[idx] * fa[idx]) / np.where(denom != 0, denom, 1), 0.5 * (a[idx] + b[idx]))
        xs = np.clip(xs, np.minimum(a[idx], b[idx]), np.maximum(a[idx], b[idx]))
        fx = fn(xs, idx)
        moved = np.abs(xs - x[idx])
        x[idx] = xs
        exact = fx == 0
        left = (fx * fa[idx] > 0) & ~exact
        # left: root lies in [x, b]
        a_new, fa_new = a[idx].copy(), fa[idx].copy()
        b_new, fb_new = b[idx].copy(), fb[idx].copy()
        a_new[left], fa_new[left] = xs[left], fx[left]
        fb_new[left & (side[idx] == 1)] *= 0.5
        right = ~left & ~exact
        b_new[right], fb_new[right] = xs[right], fx[right]
        fa_new[right & (side[idx] == -1)] *= 0.5
        side[idx] = np.where(left, 1, np.where(right, -1, 0))
        a[idx], fa[idx], b[idx], fb[idx] = a_new, fa_new, b_new, fb_new
        # one end can stay fixed for a while, so the step size also counts
        done = exact | (np.abs(b[idx] - a[idx]) <= xtol) | (moved <= 0.1 * xtol) | (np.abs(fx) < 1e-15)
        active[idx[done]] = False
    return x


# --- detection ---------------------------------------------------------------


def _scale(mesh):
    return max(1.0, float(np.nanmax(np.abs(mesh.curve.tangent(mesh.s_grid)[:, :3]))))


def find_characteristic_points(mesh, tol=ROOT_TOL, zero_band=VALUE_BAND, dedupe=1e-7):
    """Zeros of ``xi3^t`` on the mesh, refined off-grid to ``tol`` in ``t``.

    Simple roots come from sign changes along each column. Double roots come
    from sign changes of ``d phi/dt`` whose refined critical value lies inside
    the zero band. Points with the same projection (within ``dedupe``) are
    merged.
    """
    structure = mesh.structure
    phi = phi_grid(mesh)
    dphi = dphi_grid(mesh)
    scale = _scale(mesh)
    band = zero_band * scale
    tg = mesh.t_grid

    roots = []  # (t, s_index, kind, node_index)
    nt, ns = phi.shape
    exact = np.argwhere(np.abs(phi) <= 1e-14 * scale)
    for i, j in exact:
        roots.append((tg[i], j, "node", i))
    cross = np.argwhere(phi[:-1] * phi[1:] < 0)
    crit = np.argwhere((dphi[:-1] * dphi[1:] < 0))

    def local(pairs):
        ii, jj = pairs[:, 0], pairs[:, 1]
        return _Column(structure, mesh.nodes[ii, jj], mesh.xi_t[ii, jj], tg[ii], mesh.step)

    if len(cross):
        col = local(cross)
        ii = cross[:, 0]

        def f(t, idx):
            y, xi = col.at(t, idx)
            return _phi_parts(y, xi)

        ts = _bracketed_newton(f, tg[ii], tg[ii + 1], phi[ii, cross[:, 1]], phi[ii + 1, cross[:, 1]], tol)
        roots += [(t, j, "simple", i) for t, (i, j) in zip(ts, cross)]

    if len(crit):
        # skip cells already holding a simple root unless the critical value
        # has the opposite sign (two roots in one cell)
        col = local(crit)
        ii, jj = crit[:, 0], crit[:, 1]

        def g(t, idx):
            y, xi = col.at(t, idx)
            return _phi_parts(y, xi)[1]

        tc = _illinois(g, tg[ii], tg[ii + 1], dphi[ii, jj], dphi[ii + 1, jj], tol)
        y, xi = col.at(tc)
        vc = _phi_parts(y, xi)[0]
        for k, (i, j) in enumerate(crit):
            lo, hi = phi[i, j], phi[i + 1, j]
            if abs(vc[k]) <= band:
                roots.append((tc[k], j, "double", i))
            elif lo * hi > 0 and vc[k] * lo < 0:
                # two simple roots inside one cell
                for a_, b_, fa_, fb_ in ((tg[i], tc[k], lo, vc[k]), (tc[k], tg[i + 1], vc[k], hi)):
                    sub = _Column(structure, mesh.nodes[i, j], mesh.xi_t[i, j], tg[i], mesh.step)
                    t_r = _illinois(lambda t, idx: _phi_parts(*sub.at(t))[0], [a_], [b_], [fa_], [fb_], tol)[0]
                    roots.append((t_r, j, "simple", i))

    if not roots:
        return []
    priority = {"node": 0, "double": 1, "simple": 2}
    roots.sort(key=lambda r: (r[1], priority[r[2]], r[0]))
    ts = np.array([r[0] for r in roots])
    js = np.array([r[1] for r in roots])
    ii = np.array([r[3] for r in roots])
    col = _Column(structure, mesh.nodes[ii, js], mesh.xi_t[ii, js], tg[ii], mesh.step)
    y, xi = col.at(ts)
    val, der = _phi_parts(y, xi)

    out = []
    keep = np.ones(len(roots), dtype=bool)
    if len(roots) > 1:
        from scipy.spatial import cKDTree

        for a, b in sorted(cKDTree(y[:, :3]).query_pairs(dedupe * scale)):
            if keep[a]:
                keep[b] = False
    # noise roots: a flat sign change right next to a double root of the same column
    flat = np.abs(der) < DERIV_BAND * scale
    for k in np.flatnonzero(flat & keep):
        if roots[k][2] != "simple":
            continue
        near = [m_ for m_ in range(len(roots)) if m_ != k and keep[m_] and js[m_] == js[k]
                and roots[m_][2] != "simple" and abs(ts[m_] - ts[k]) <= 1e-3]
        if near:
            keep[k] = False
    for k, (t, j, how, _) in enumerate(roots):
        if not keep[k]:
            continue
        q = y[k, :3]
        out.append(CharPoint(
            t=float(t), s=float(mesh.s_grid[j]), q=q.copy(),
            diagnostics={"phi": float(val[k]), "dphi_dt": float(der[k]), "root": how,
                         "phi_angle": float(y[k, 3])},
        ))
    return out


# --- classification ------------------------------------------------------------


def _shifted_data(structure, curve, t_hat, s, step):
    """Data of the shifted curve ``s -> exp(t_hat V) Gamma(s)``."""
    y, xi = _column_states(structure, curve, t_hat, s, step)
    phi0, phi1 = _phi_parts(y, xi)
    c, sn = np.cos(y[:, 3]), np.sin(y[:, 3])
    g = lifted_field(structure, y)[:, 3]
    lam = xi[:, 0] * c + xi[:, 1] * sn
    return {"y": y, "xi": xi, "phi0": phi0, "phi1": phi1, "lam": lam, "xi4n": xi[:, 3] - lam * g,
            "phi2": xi[:, 3] + structure.c12(y[:, :3])[0] * xi[:, 0] + structure.c12(y[:, :3])[1] * xi[:, 1]}


def classify(structure, curve, s_hat, char_point, step=DEFAULT_STEP, interval_step=1e-3):
    """Assign a kind to a characteristic point at ``(t_hat, s_hat)``.

    The curve is first shifted along the flow to ``t_hat`` so the point sits on
    the (shifted) generating curve; the decision tree then reads the shifted
    ``phi0 = xi3``, ``phi1 = xi1 sin(phi) - xi2 cos(phi)`` and their
    ``s``-derivatives.
    """
    return classify_many(structure, curve, [(s_hat, char_point)], step, interval_step)[0]


def _offsets(interval_step):
    h = DERIV_STEP
    return np.concatenate([
        [0.0, h, -h, 2 * h, -2 * h, 1e-3, -1e-3, 1e-2, -1e-2],
        (np.arange(STRONG_SAMPLES) - (STRONG_SAMPLES - 1) / 2) * interval_step,
    ])


def classify_many(structure, curve, items, step=DEFAULT_STEP, interval_step=1e-3, errors="raise"):
    """:func:`classify` for a list of ``(s_hat, char_point)`` pairs with one batched flow.

    With ``errors="mark"`` a point that cannot be classified keeps the kind
    Unclassified and records the reason under ``diagnostics["error"]``.
    """
    if not items:
        return []
    offsets = _offsets(interval_step)
    m = len(offsets)
    t_all = np.repeat([float(p.t) for _, p in items], m)
    s_all = np.concatenate([float(s) + offsets for s, _ in items])
    d_all = _shifted_data(structure, curve, t_all, s_all, step)
    out = []
    for k, (s_hat, p) in enumerate(items):
        d = {key: val[k * m:(k + 1) * m] for key, val in d_all.items()}
        try:
            out.append(_decide(curve, float(p.t), float(s_hat), d))
        except (NotCharacteristic, UnresolvedClassification) as exc:
            if errors == "raise":
                raise
            bad = CharPoint(float(p.t), float(s_hat), np.asarray(p.q, float).copy(), UNCLASSIFIED,
                            diagnostics={**p.diagnostics, "error": f"{type(exc).__name__}: {exc}"})
            out.append(bad)
    return out


def _decide(curve, t_hat, s_hat, d):
    h = DERIV_STEP
    scale = max(1.0, float(np.linalg.norm(curve.tangent(np.array([s_hat]))[0])))
    vband, dband = VALUE_BAND * scale, DERIV_BAND * scale

    phi0, phi1 = d["phi0"], d["phi1"]
    d1 = (phi0[1] - phi0[2]) / (2 * h)
    d2 = (phi0[3] - phi0[4]) / (4 * h)
    diag = {"phi0": phi0[0], "phi1": phi1[0], "phi2": d["phi2"][0], "dphi0_ds": d1,
            "xi4_normalized": d["xi4n"][0], "dphi_dt": phi1[0]}
    q = d["y"][0, :3]
    point = CharPoint(t_hat, s_hat, q.copy(), diagnostics=diag)

    if abs(phi0[0]) > vband:
        raise NotCharacteristic(f"xi3 = {phi0[0]:.3g} at (t, s) = ({t_hat:.6g}, {s_hat:.6g})")
    if abs(phi1[0]) > vband:
        point.kind = REGULAR
        return point

    tail = slice(9, None)
    horizontal = np.linalg.norm(d["xi"][tail, :3], axis=1)
    if np.all(horizontal <= vband):
        point.kind = ISOLATED
        return point
    if np.all(np.abs(phi0[tail]) <= vband) and np.all(np.abs(phi1[tail]) <= vband):
        point.kind = STRONG
        return point

    det1 = d["xi4n"][0] * d1
    det2 = d["xi4n"][0] * d2
    diag["umbrella_det"] = det1
    big1, big2 = abs(det1) > dband, abs(det2) > dband
    if big1 and big2:
        point.kind = GENERIC
        return point
    if big1 != big2:
        raise UnresolvedClassification(f"umbrella determinant {det1:.3g} / {det2:.3g} straddles {dband:.1g}")

    near = 0.5 * (abs(phi0[5]) + abs(phi0[6]))
    far = 0.5 * (abs(phi0[7]) + abs(phi0[8]))
    if near <= vband or far <= vband:
        k = 5
    else:
        k = int(min(5, max(2, round(math.log10(far / near)))))
    diag["tangency_slope"] = math.log10(far / near) if near > 0 and far > 0 else float("inf")
    point.kind = TANGENCY
    point.order = k
    return point


def umbrella_frame_test(structure, curve, s_hat, t_hat=0.0, step=DEFAULT_STEP, tol=1e-8):
    """Determinant of ``v1 = eta, v2 = xi4 (-sin X1 + cos X2), v3 = d/ds xi``.

    The generator is shifted to ``t_hat`` and reduced by ``xi - lambda V`` so
    that its first three components vanish at ``s_hat``. Returns
    ``(det, det != 0)``.
    """
    h = DERIV_STEP
    d = _shifted_data(structure, curve, t_hat, s_hat + np.array([0.0, h, -h]), step)
    scale = max(1.0, float(np.linalg.norm(curve.tangent(np.array([s_hat]))[0])))
    if abs(d["phi0"][0]) > VALUE_BAND * scale or abs(d["phi1"][0]) > VALUE_BAND * scale:
        raise NormalizationFailed(
            f"xi3 = {d['phi0'][0]:.3g}, xi1 sin - xi2 cos = {d['phi1'][0]:.3g} at s = {s_hat}")
    y = d["y"]
    phi = y[:, 3]
    reduced = d["xi"][:, :3].copy()
    reduced[:, 0] -= d["lam"] * np.cos(phi)
    reduced[:, 1] -= d["lam"] * np.sin(phi)
    dxi = (reduced[1] - reduced[2]) / (2 * h)
    fr = structure.frame(y[0, :3])
    c, sn = np.cos(phi[0]), np.sin(phi[0])
    v1 = fr @ np.array([c, sn, 0.0])
    v2 = d["xi4n"][0] * (fr @ np.array([-sn, c, 0.0]))
    v3 = fr @ dxi
    det = float(np.linalg.det(np.stack([v1, v2, v3], axis=1)))
    return det, abs(det) > tol


# --- continuation ----------------------------------------------------------------


def _newton_t(col, t, tol=1e-12, maxiter=30, max_move=None):
    """Newton on ``phi`` in ``t`` for a single local column. Returns ``(t, phi, dphi)`` or None."""
    t0 = float(t)
    for _ in range(maxiter):
        y, xi = col.at(np.array([t]))
        f, df = (v[0] for v in _phi_parts(y, xi))
        if df == 0:
            return None
        dt = -f / df
        t += dt
        if max_move is not None and abs(t - t0) > max_move:
            return None
        if abs(dt) < tol:
            y, xi = col.at(np.array([t]))
            f, df = (v[0] for v in _phi_parts(y, xi))
            return t, f, df, y[0]
    return None


def refine_root(structure, curve, t_guess, s, step=DEFAULT_STEP, max_move=None):
    """Characteristic point on the column ``s`` nearest ``t_guess`` (Newton), or None."""
    col = _Column(structure, *_column_states(structure, curve, t_guess, s, step), np.array([float(t_guess)]), step)
    got = _newton_t(col, float(t_guess), max_move=max_move)
    if got is None:
        return None
    t, _, dphi, y = got
    return CharPoint(t, float(s), y[:3].copy(), REGULAR, diagnostics={"dphi_dt": dphi})


def _newton_batch(col, t, max_move, tol=1e-12, maxiter=30):
    """Newton on ``phi`` for every member of a local column; None where it fails."""
    t = np.array(t, dtype=float)
    t0 = t.copy()
    max_move = np.broadcast_to(max_move, t.shape)
    alive = np.ones(len(t), dtype=bool)
    conv = np.zeros(len(t), dtype=bool)
    for _ in range(maxiter):
        idx = np.flatnonzero(alive & ~conv)
        if len(idx) == 0:
            break
        y, xi = col.at(t[idx], idx)
        f, df = _phi_parts(y, xi)
        with np.errstate(divide="ignore", invalid="ignore"):
            dt = -f / df
        bad = ~np.isfinite(dt)
        t[idx] = np.where(bad, t[idx], t[idx] + dt)
        bad |= np.abs(t[idx] - t0[idx]) > max_move[idx]
        alive[idx[bad]] = False
        conv[idx[~bad & (np.abs(dt) < tol)]] = True
    out = [None] * len(t)
    ok = np.flatnonzero(conv & alive)
    if len(ok):
        y, xi = col.at(t[ok], ok)
        f, df = _phi_parts(y, xi)
        for n, k in enumerate(ok):
            out[k] = (float(t[k]), float(f[n]), float(df[n]), y[n])
    return out


def _anchor(structure, curve, t, s, step, delta=1e-4, maxiter=12):
    """Solve ``phi = d phi/dt = 0`` near ``(t, s)`` with a quadratic local model."""
    for _ in range(maxiter):
        tt = np.array([t, t + delta, t - delta, t, t])
        ss = np.array([s, s, s, s + delta, s - delta])
        y, xi = _column_states(structure, curve, tt, ss, step)
        f, ft = _phi_parts(y, xi)
        ftt = (ft[1] - ft[2]) / (2 * delta)
        fs = (f[3] - f[4]) / (2 * delta)
        fss = (f[3] - 2 * f[0] + f[4]) / delta**2
        fts = (ft[3] - ft[4]) / (2 * delta)
        if ftt == 0:
            return None
        # dt from the derivative equation, then a quadratic in ds
        a0 = -ft[0] / ftt
        a1 = -fts / ftt
        A = 0.5 * fss + fts * a1 + 0.5 * ftt * a1**2
        B = fs + ft[0] * a1 + fts * a0 + ftt * a0 * a1
        C = f[0] + ft[0] * a0 + 0.5 * ftt * a0**2
        if abs(A) < 1e-14:
            ds = -C / B if B != 0 else 0.0
        else:
            disc = B * B - 4 * A * C
            if disc >= 0:
                r = np.array([(-B + math.sqrt(disc)) / (2 * A), (-B - math.sqrt(disc)) / (2 * A)])
                ds = float(r[np.argmin(np.abs(r))])
            else:
                ds = -B / (2 * A)
        dt = a0 + a1 * ds
        t, s = t + dt, s + ds
        if abs(dt) < 1e-11 and abs(ds) < 1e-11:
            break
    y, xi = _column_states(structure, curve, t, s, step)
    f, ft = _phi_parts(y, xi)
    return t, s, float(f[0]), float(ft[0]), y[0]


def trace_simple_curve(structure, curve, seed, s_step=None, mesh=None, t_range=None,
                       step=DEFAULT_STEP, min_step_factor=2.0**-10, dphi_stop=1e-6):
    """Continue ``phi(t(s), s) = 0`` from a Regular seed in both ``s``-directions.

    Columns are taken from ``mesh`` (built over ``t_range`` when absent) and
    roots are refined by Newton from the nearest node. When a column has no
    matching root the step is halved with freshly integrated columns; once
    it falls below ``s_step * min_step_factor`` the turning point is located
    by solving ``phi = d phi/dt = 0``, or StepCollapse is raised.
    """
    from .surface import solve_cauchy

    if mesh is None:
        s_step = s_step or 0.01
        lo, hi = curve.s_range
        n_lo = int(math.floor((seed.s - lo) / s_step + 1e-9))
        n_hi = int(math.floor((hi - seed.s) / s_step + 1e-9))
        s_grid = seed.s + s_step * np.arange(-n_lo, n_hi + 1)
        if s_grid[0] > lo + 1e-12:
            s_grid = np.concatenate([[lo], s_grid])
        if s_grid[-1] < hi - 1e-12:
            s_grid = np.concatenate([s_grid, [hi]])
        t_lo, t_hi = t_range or (seed.t - 3.0, seed.t + 3.0)
        t_grid = np.linspace(t_lo, t_hi, int(math.ceil((t_hi - t_lo) / 0.02)) + 1)
        mesh = solve_cauchy(structure, curve, t_grid, s_grid, step)
    s_step = s_step or mesh.hs
    tg, sg = mesh.t_grid, mesh.s_grid
    phi = phi_grid(mesh)
    j0 = int(np.argmin(np.abs(sg - seed.s)))

    col = _Column(structure, *_column_states(structure, curve, seed.t, seed.s, step), np.array([seed.t]), step)
    start = _newton_t(col, seed.t)
    if start is None:
        raise StepCollapse("seed does not converge to a root")
    t_seed, _, d_seed, y_seed = start
    if abs(d_seed) < dphi_stop:
        raise ValueError("seed is not a Regular characteristic point")
    sign = np.sign(d_seed)
    seed_pt = CharPoint(t_seed, float(seed.s), y_seed[:3].copy(), REGULAR, diagnostics={"dphi_dt": d_seed})

    def node_col(i, j):
        return _Column(structure, mesh.nodes[i, j], mesh.xi_t[i, j], tg[i], step)

    def go(direction):
        pts = [seed_pt]
        anchor = None
        reason = "boundary"
        s_cur, t_cur = seed_pt.s, seed_pt.t
        slope = 0.0
        cols = [j for j in (range(j0, len(sg)) if direction > 0 else range(j0, -1, -1))
                if direction * (sg[j] - s_cur) > 1e-12]
        k = 0
        while k < len(cols):
            j = cols[k]
            s_target = sg[j]
            pred = t_cur + slope * (s_target - s_cur)
            hit = None
            if tg[0] <= pred <= tg[-1]:
                i = int(np.clip(np.searchsorted(tg, pred) - 1, 0, len(tg) - 2))
                hit = _newton_t(node_col(i, j), pred, max_move=4 * mesh.ht + 2 * abs(s_target - s_cur))
            if hit is not None and np.sign(hit[2]) == sign and abs(hit[2]) >= dphi_stop:
                t_new, _, dval, y = hit
                slope = (t_new - t_cur) / (s_target - s_cur)
                s_cur, t_cur = s_target, t_new
                pts.append(CharPoint(t_new, s_target, y[:3].copy(), REGULAR, diagnostics={"dphi_dt": dval}))
                k += 1
                continue
            if not (tg[0] <= pred <= tg[-1]):
                reason = "t_range"
                break
            # bracket the end of the branch between s_cur and the failing
            # column, cutting it into 11 pieces per round with fresh columns
            s_fail = s_target
            reached = False
            while abs(s_fail - s_cur) >= s_step * min_step_factor:
                s_try = s_cur + (s_fail - s_cur) * np.arange(1, 12) / 11.0
                p_try = t_cur + slope * (s_try - s_cur)
                fresh = _Column(structure, *_column_states(structure, curve, p_try, s_try, step), p_try, step)
                hits = _newton_batch(fresh, p_try, 4 * mesh.ht + 2 * np.abs(s_try - s_cur))
                for m_, hit in enumerate(hits):
                    if hit is None or np.sign(hit[2]) != sign or abs(hit[2]) < dphi_stop:
                        s_fail = float(s_try[m_])
                        break
                    t_new, _, dval, y = hit
                    slope = (t_new - t_cur) / (s_try[m_] - s_cur)
                    s_cur, t_cur = float(s_try[m_]), t_new
                    pts.append(CharPoint(t_new, s_cur, y[:3].copy(), REGULAR, diagnostics={"dphi_dt": dval}))
                else:
                    reached = True
                    break
            if reached:
                s_cur = float(s_target)
                k += 1
                continue
            found = _anchor(structure, curve, t_cur, s_cur, step)
            if found is not None:
                ta, sa, fa, fta, ya = found
                near = abs(sa - s_cur) <= 10 * s_step and abs(ta - t_cur) <= 10 * s_step + 4 * mesh.ht
                if near and abs(fa) <= 1e-8 and abs(fta) <= 1e-5:
                    anchor = CharPoint(ta, sa, ya[:3].copy(), UNCLASSIFIED,
                                       diagnostics={"phi": fa, "dphi_dt": fta})
                    reason = "anchor"
                    break
            raise StepCollapse(f"continuation stalled at s={s_cur:.9g}, t={t_cur:.9g}")
        return pts, anchor, reason

    back, anchor_b, why_b = go(-1)
    fwd, anchor_f, why_f = go(+1)
    samples = back[::-1] + fwd[1:]
    anchors = [a for a in (anchor_b, anchor_f) if a is not None]
    curve_out = SingularCurve(samples, "Simple", anchors[0] if anchors else None, (why_b, why_f), anchors)
    return curve_out


def assemble_curves(points, mesh):
    """Group per-column roots into polylines by continuity in ``t`` across columns."""
    regular = [p for p in points if p.kind in (REGULAR, UNCLASSIFIED) and abs(p.diagnostics.get("dphi_dt", 0)) > DERIV_BAND]
    strong = [p for p in points if p.kind == STRONG]
    curves = []
    by_col = {}
    for p in regular:
        by_col.setdefault(p.s, []).append(p)
    open_: list = []
    gap = 4 * max(mesh.ht, mesh.hs)
    for s in sorted(by_col):
        nxt = []
        pool = list(by_col[s])
        for c in open_:
            last = c.samples[-1]
            cand = [p for p in pool if np.sign(p.diagnostics["dphi_dt"]) == np.sign(last.diagnostics["dphi_dt"])
                    and abs(p.t - last.t) <= gap and abs(p.s - last.s) <= 1.5 * mesh.hs]
            if cand:
                best = min(cand, key=lambda p: abs(p.t - last.t))
                pool.remove(best)
                c.samples.append(best)
                nxt.append(c)
            else:
                curves.append(c)
        for p in pool:
            nxt.append(SingularCurve([p], "Simple"))
        open_ = nxt
    curves += open_
    if strong:
        curves.append(SingularCurve(sorted(strong, key=lambda p: p.s), "Strong"))
    return curves


# --- Heisenberg closed forms -------------------------------------------------------


def _h1_parts(curve, s):
    s = np.asarray(s, dtype=float)
    xi = curve.tangent(s)
    phi = curve.eval(s)[..., 3]
    lin = xi[..., 0] * np.sin(phi) - xi[..., 1] * np.cos(phi)
    return xi, lin


def h1_discriminant(curve, s):
    """``(xi1 sin(phi) - xi2 cos(phi))^2 + 2 xi3 xi4`` along the curve."""
    xi, lin = _h1_parts(curve, s)
    return lin**2 + 2 * xi[..., 2] * xi[..., 3]


def h1_singular_points(curve, n=4001, tol=ROOT_TOL, zero_band=VALUE_BAND):
    """Roots of the discriminant with ``t_hat = (xi1 sin - xi2 cos) / xi4``.

    Sign changes are refined with Brent's method. Touching zeros are local
    minima of ``|D|`` refined by bounded minimization and accepted inside the
    zero band. Runs of ``D = 0`` (strong curves, planes) are skipped.
    """
    lo, hi = curve.s_range
    s = np.linspace(lo, hi, n)
    D = h1_discriminant(curve, s)
    scale = max(1.0, float(np.max(np.abs(D))))
    band = zero_band * scale

    def Df(x):
        return float(h1_discriminant(curve, np.array([x]))[0])

    zero = np.abs(D) <= band
    # long runs of zeros are degenerate sets, not isolated points
    run_id = np.cumsum(np.concatenate([[1], np.diff(zero.astype(int)) != 0]))
    long_runs = {r for r in np.unique(run_id[zero]) if np.count_nonzero(run_id == r) >= STRONG_SAMPLES}
    in_run = np.array([z and run_id[k] in long_runs for k, z in enumerate(zero)])

    roots = []
    for k in np.flatnonzero(D[:-1] * D[1:] < 0):
        if in_run[k] or in_run[k + 1]:
            continue
        roots.append(optimize.brentq(Df, s[k], s[k + 1], xtol=tol * 1e-3, rtol=4 * np.finfo(float).eps))
    absd = np.abs(D)
    for k in range(1, n - 1):
        if in_run[k]:
            continue
        if absd[k] > 1e-3 * scale or not (absd[k] < absd[k - 1] or absd[k] < absd[k + 1]):
            continue
        if absd[k] <= absd[k - 1] and absd[k] <= absd[k + 1] and D[k - 1] * D[k + 1] > 0 and D[k] * D[k - 1] >= 0:
            res = optimize.minimize_scalar(lambda x: abs(Df(x)), bounds=(s[k - 1], s[k + 1]),
                                           method="bounded", options={"xatol": tol * 1e-3})
            if abs(Df(res.x)) <= band:
                roots.append(float(res.x))
        elif D[k] == 0 and D[k - 1] * D[k + 1] < 0:
            roots.append(float(s[k]))
    for k in (0, n - 1):
        if absd[k] <= band and not in_run[k]:
            roots.append(float(s[k]))
    roots = sorted(roots)
    merged = []
    for r in roots:
        if not merged or abs(r - merged[-1]) > 10 * tol:
            merged.append(r)

    out = []
    for r in merged:
        xi, lin = _h1_parts(curve, np.array([r]))
        xi4 = xi[0, 3]
        if xi4 == 0:
            continue
        t_hat = float(lin[0] / xi4)
        q = closed_form_h1(tuple(curve.eval(np.array([r]))[0]), t_hat)
        out.append(CharPoint(t_hat, float(r), np.asarray(q, dtype=float),
                             diagnostics={"D": Df(r), "xi4": float(xi4)}))
    return out


def h1_singular_curves(curve, s):
    """Both branch points ``t*_pm = (lin +- sqrt(D)) / xi4`` at parameter ``s``.

    Returns a list of ``(t, q)`` pairs; empty when ``D < 0`` or ``xi4 = 0``.
    """
    xi, lin = _h1_parts(curve, np.array([float(s)]))
    D = float(lin[0] ** 2 + 2 * xi[0, 2] * xi[0, 3])
    xi4 = float(xi[0, 3])
    if D < 0 or xi4 == 0:
        return []
    root = math.sqrt(D)
    g = tuple(curve.eval(np.array([float(s)]))[0])
    out = []
    for t in ((lin[0] + root) / xi4, (lin[0] - root) / xi4):
        out.append((float(t), np.asarray(closed_form_h1(g, t), dtype=float)))
    return out


# --- index ---------------------------------------------------------------------------


def _loop_increments(angles):
    inc = np.diff(angles)
    return inc - np.pi * np.round(inc / np.pi)


def winding_index(structure, mesh, isolated_point, radius_cells=3):
    """Turns of the recovered characteristic direction around a point.

    ``isolated_point`` is a CharPoint or a node index ``(i, j)``. When the
    point's whole mesh row projects to one point (a flow-out of a vertical
    curve), the loop is the row ``radius_cells`` away, closed periodically in
    ``s``; otherwise it is the square of index radius ``radius_cells``.
    """
    phi = phi_from_mesh(structure, mesh)
    nt, ns = phi.shape
    if isinstance(isolated_point, CharPoint):
        i = int(np.argmin(np.abs(mesh.t_grid - isolated_point.t)))
        j = int(np.argmin(np.abs(mesh.s_grid - isolated_point.s)))
    else:
        i, j = map(int, isolated_point)
    r = int(radius_cells)
    row = mesh.projected[i]
    collapsed = np.max(np.linalg.norm(row - row[0], axis=-1)) <= 1e-9 * max(1.0, float(np.max(np.abs(row))))
    if collapsed:
        k = i + r if i + r < nt - 1 else i - r
        loop = [(k, jj) for jj in range(1, ns - 1)]
    else:
        if not (r <= i < nt - r and r <= j < ns - r):
            raise LoopThroughSingular("loop leaves the mesh")
        loop = ([(i - r, jj) for jj in range(j - r, j + r)] + [(ii, j + r) for ii in range(i - r, i + r)]
                + [(i + r, jj) for jj in range(j + r, j - r, -1)] + [(ii, j - r) for ii in range(i + r, i - r, -1)])
    near = np.ma.getmaskarray(phi) | characteristic_node_mask(phi_grid(mesh))
    if any(near[a, b] for a, b in loop):
        raise LoopThroughSingular("loop passes through a characteristic (masked) node")
    vals = [phi[a, b] for a, b in loop]
    angles = np.array([float(v) for v in vals] + [float(vals[0])])
    total = float(np.sum(_loop_increments(angles)))
    # orientation: signed area of the loop in horizontal frame components at the centre
    centre = mesh.projected[i, j]
    pts = np.array([mesh.projected[a, b] for a, b in loop]) - centre
    comps = to_frame_components(structure, np.broadcast_to(centre, pts.shape), pts, check=False)[:, :2]
    nxt = np.roll(comps, -1, axis=0)
    area = float(np.sum(comps[:, 0] * nxt[:, 1] - comps[:, 1] * nxt[:, 0]))
    sign = -1 if area < 0 else 1
    return int(round(sign * total / (2 * np.pi)))
