"""Generating curves, the Cauchy problem, and minimality diagnostics on meshes.

A surface is the flow-out of a generating curve ``s -> Gamma(s) = (q0(s), phi(s))``
under the characteristic field; its mesh is a tensor grid in ``(t, s)`` whose
columns are characteristics. Verification works from the projected geometry
alone: the horizontal direction is recovered from mesh tangents, so the
residual checks never look at the stored angle except to fix a global branch.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .expr import compile_vector
from .frame import to_frame_components
from .lift import (
    DEFAULT_STEP,
    closed_form_e2,
    closed_form_h1,
    coords_to_xi,
    flow_nodes,
    lifted_field,
    xi_to_coords,
)

__all__ = [
    "DegenerateGeneratingCurve",
    "GeneratingCurve",
    "SurfaceMesh",
    "ResidualReport",
    "curve_from_functions",
    "curve_from_expressions",
    "solve_cauchy",
    "check_nondegeneracy",
    "phi_from_mesh",
    "characteristic_node_mask",
    "residual_parametric",
    "residual_levelset",
    "horizontal_area",
    "first_variation",
]

CURVE_FD_STEP = 1e-5
NONDEGENERACY_RTOL = 1e-9


class DegenerateGeneratingCurve(ValueError):
    """The generating curve is tangent to the characteristic field somewhere."""


@dataclass(frozen=True)
class GeneratingCurve:
    """Initial curve in the bundle.

    ``position(s)`` returns states ``(..., 4)``; ``velocity(s)``, when given,
    returns their coordinate derivatives. Without it the tangent is a central
    difference of ``position``.
    """

    structure: object
    position: Callable[[np.ndarray], np.ndarray]
    s_range: tuple
    velocity: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = "curve"

    @property
    def provenance(self):
        return "analytic" if self.velocity is not None else "finite-difference"

    def eval(self, s):
        return np.asarray(self.position(np.asarray(s, dtype=float)), dtype=float)

    def coord_tangent(self, s):
        s = np.asarray(s, dtype=float)
        if self.velocity is not None:
            return np.asarray(self.velocity(s), dtype=float)
        h = CURVE_FD_STEP
        return (self.eval(s + h) - self.eval(s - h)) / (2 * h)

    def tangent(self, s):
        """Frame components ``(xi1, xi2, xi3, xi4)`` of ``Gamma'(s)``."""
        return coords_to_xi(self.structure, self.eval(s), self.coord_tangent(s))


def _stack_fns(fns):
    def call(s):
        s = np.asarray(s, dtype=float)
        return np.stack([np.broadcast_to(np.asarray(f(s), dtype=float), s.shape) for f in fns], axis=-1)

    return call


def curve_from_functions(structure, fns, s_range, dfns=None, name="curve"):
    """Build a curve from four scalar functions of ``s`` (and optionally their derivatives)."""
    if len(fns) != 4 or (dfns is not None and len(dfns) != 4):
        raise ValueError("a generating curve needs four component functions")
    return GeneratingCurve(
        structure=structure,
        position=_stack_fns(fns),
        s_range=tuple(map(float, s_range)),
        velocity=None if dfns is None else _stack_fns(dfns),
        name=name,
    )


def curve_from_expressions(structure, text, s_range, name="curve"):
    """``"x0(s), y0(s), z0(s), phi(s)"`` -> curve with a finite-difference tangent."""
    fns = compile_vector(text, ["s"], length=4)
    return curve_from_functions(structure, fns, s_range, name=name)


@dataclass(frozen=True)
class SurfaceMesh:
    structure: object
    curve: GeneratingCurve
    t_grid: np.ndarray  # (nt,)
    s_grid: np.ndarray  # (ns,)
    nodes: np.ndarray  # (nt, ns, 4) lifted states
    xi_t: np.ndarray  # (nt, ns, 4) transported generator, frame components
    step: float = DEFAULT_STEP

    @property
    def projected(self):
        return self.nodes[..., :3]

    @property
    def shape(self):
        return self.nodes.shape[:2]

    @property
    def ht(self):
        return float(np.max(np.diff(self.t_grid))) if len(self.t_grid) > 1 else 0.0

    @property
    def hs(self):
        return float(np.max(np.diff(self.s_grid))) if len(self.s_grid) > 1 else 0.0


def _check_grid(g, name):
    g = np.asarray(g, dtype=float)
    if g.ndim != 1 or g.size == 0 or not np.all(np.isfinite(g)):
        raise ValueError(f"{name} must be a nonempty finite vector")
    if g.size > 1 and np.any(np.diff(g) <= 0):
        raise ValueError(f"{name} must be strictly increasing")
    return g


def check_nondegeneracy(structure, curve, s_samples):
    """Rank test of ``xi`` against ``V`` along the curve.

    Returns ``(ok, worst_s, worst_ratio)`` where the ratio is the smallest over
    largest singular value of the 2x4 matrix with rows ``xi(s)`` and
    ``(cos phi, sin phi, 0, g)``.
    """
    s = np.atleast_1d(np.asarray(s_samples, dtype=float))
    y = curve.eval(s)
    xi = curve.tangent(s)
    v = lifted_field(structure, y)
    vf = np.stack([np.cos(y[:, 3]), np.sin(y[:, 3]), np.zeros(len(s)), v[:, 3]], axis=-1)
    sv = np.linalg.svd(np.stack([xi, vf], axis=1), compute_uv=False)
    ratio = sv[:, 1] / np.where(sv[:, 0] > 0, sv[:, 0], 1.0)
    k = int(np.argmin(ratio))
    return bool(ratio[k] > NONDEGENERACY_RTOL), float(s[k]), float(ratio[k])


def _threads():
    try:
        return max(1, int(os.environ.get("CHARFLOW_THREADS", "1")))
    except ValueError:
        return 1


def solve_cauchy(structure, curve, t_grid, s_grid, step=DEFAULT_STEP):
    """Flow the generating curve out along characteristics.

    Positions use the closed form when the structure has one; the lifted
    angle and the transported tangent ``xi^t`` always come from RK4.
    """
    t_grid = _check_grid(t_grid, "t_grid")
    s_grid = _check_grid(s_grid, "s_grid")
    ok, worst_s, ratio = check_nondegeneracy(structure, curve, s_grid)
    if not ok:
        raise DegenerateGeneratingCurve(f"xi is parallel to V at s={worst_s:.6g} (ratio {ratio:.3g})")

    y0 = curve.eval(s_grid)
    w0 = xi_to_coords(structure, y0, curve.tangent(s_grid))
    chunks = np.array_split(np.arange(len(s_grid)), min(_threads(), len(s_grid)))

    def run(idx):
        return flow_nodes(structure, y0[idx], w0[idx], t_grid, step)

    if len(chunks) == 1:
        parts = [run(chunks[0])]
    else:
        with ThreadPoolExecutor(len(chunks)) as pool:
            parts = list(pool.map(run, chunks))
    ys = np.concatenate([p[0] for p in parts], axis=1)
    ws = np.concatenate([p[1] for p in parts], axis=1)
    xi_t = coords_to_xi(structure, ys, ws)

    exact = {"H1": closed_form_h1, "E2": closed_form_e2}.get(structure.closed_form)
    if exact is not None:
        ys[..., :3] = exact(tuple(y0.T), t_grid[:, None])
    return SurfaceMesh(structure, curve, t_grid, s_grid, ys, xi_t, step)


# --- geometry recovered from the mesh ---------------------------------------


def _central(a, axis, grid):
    """Central difference along ``axis`` on a possibly nonuniform grid; NaN at the ends."""
    a = np.moveaxis(np.asarray(a, dtype=float), axis, 0)
    out = np.full_like(a, np.nan)
    if a.shape[0] >= 3:
        span = (grid[2:] - grid[:-2]).reshape((-1,) + (1,) * (a.ndim - 1))
        out[1:-1] = (a[2:] - a[:-2]) / span
    return np.moveaxis(out, 0, axis)


def _nearest_mod_pi(theta, ref):
    return theta - np.pi * np.round((theta - ref) / np.pi)


def _unwrap_line(values, start):
    """Propagate a mod-pi branch along a 1D array from ``values[start]`` outward."""
    out = values.copy()
    for rng in (range(start + 1, len(out)), range(start - 1, -1, -1)):
        prev = out[start]
        for k in rng:
            if np.isnan(out[k]):
                continue
            if not np.isnan(prev):
                out[k] = _nearest_mod_pi(out[k], prev)
            prev = out[k]
    return out


def phi_from_mesh(structure, mesh, degenerate_rtol=1e-8):
    """Angle of the horizontal line ``TW cap Delta`` at interior nodes.

    Returns a masked array; boundary nodes and nodes where the tangent plane
    is horizontal or the tangents are collinear are masked.
    """
    q = mesh.projected
    a = _central(q, 0, mesh.t_grid)
    b = _central(q, 1, mesh.s_grid)
    with np.errstate(invalid="ignore"):
        fa = to_frame_components(structure, q, np.nan_to_num(a), check=False)
        fb = to_frame_components(structure, q, np.nan_to_num(b), check=False)
    h = fb[..., 2:3] * fa - fa[..., 2:3] * fb
    size = np.linalg.norm(fa, axis=-1) * np.linalg.norm(fb, axis=-1)
    h12 = np.hypot(h[..., 0], h[..., 1])
    bad = np.isnan(a[..., 0]) | np.isnan(b[..., 0]) | ~(h12 > degenerate_rtol * size)
    theta = np.where(bad, np.nan, np.arctan2(h[..., 1], h[..., 0]))

    valid = np.argwhere(~bad)
    if len(valid) == 0:
        return np.ma.masked_invalid(theta)
    centre = np.array(theta.shape) / 2.0
    i0, j0 = valid[np.argmin(np.sum((valid - centre) ** 2, axis=1))]
    theta[i0, j0] = _nearest_mod_pi(theta[i0, j0], mesh.nodes[i0, j0, 3])
    theta[i0] = _unwrap_line(theta[i0], j0)
    for j in range(theta.shape[1]):
        col = theta[:, j]
        if np.isnan(col[i0]):
            # start from the nearest valid node of the column, aligned to the row
            rows = np.flatnonzero(~np.isnan(col))
            if len(rows) == 0:
                continue
            r = rows[np.argmin(np.abs(rows - i0))]
            ref = theta[i0, j - 1] if j > 0 and not np.isnan(theta[i0, j - 1]) else mesh.nodes[r, j, 3]
            col[r] = _nearest_mod_pi(col[r], ref)
            theta[:, j] = _unwrap_line(col, r)
        else:
            theta[:, j] = _unwrap_line(col, i0)
    return np.ma.masked_invalid(theta)


def characteristic_node_mask(phi, zero_tol=1e-8):
    """Nodes adjacent to a zero of ``phi = xi3^t`` along ``t``.

    Flags both ends of sign-changing edges, near-zero nodes, and local
    extrema whose parabolic fit touches or crosses zero between nodes.
    """
    phi = np.asarray(phi, dtype=float)
    mask = np.abs(phi) <= zero_tol
    cross = phi[:-1] * phi[1:] < 0
    mask[:-1] |= cross
    mask[1:] |= cross
    if phi.shape[0] >= 3:
        lo, mid, hi = phi[:-2], phi[1:-1], phi[2:]
        curv = hi - 2 * mid + lo
        with np.errstate(divide="ignore", invalid="ignore"):
            vertex_at = -(hi - lo) / (2 * curv)
            vertex = mid - (hi - lo) ** 2 / (8 * curv)
        touch = (np.abs(vertex_at) <= 1) & ((vertex * mid <= 0) | (np.abs(vertex) <= zero_tol))
        mask[1:-1] |= touch & np.isfinite(vertex)
    return mask


def _dilate(mask, radius):
    out = mask.copy()
    for _ in range(radius):
        grown = out.copy()
        grown[1:] |= out[:-1]
        grown[:-1] |= out[1:]
        grown[:, 1:] |= out[:, :-1]
        grown[:, :-1] |= out[:, 1:]
        out = grown
    return out


@dataclass(frozen=True)
class ResidualReport:
    values: np.ndarray  # NaN where masked
    mask: np.ndarray  # True = excluded
    max_abs: float
    rms: float
    shape: tuple = field(default=())

    @classmethod
    def build(cls, values, mask):
        values = np.where(mask, np.nan, values)
        live = values[~mask]
        live = live[np.isfinite(live)]
        max_abs = float(np.max(np.abs(live))) if live.size else 0.0
        rms = float(np.sqrt(np.mean(live**2))) if live.size else 0.0
        return cls(values, mask | ~np.isfinite(values), max_abs, rms, tuple(np.shape(values)))

    @property
    def masked_count(self):
        return int(np.count_nonzero(self.mask))

    def to_dict(self):
        return {
            "max_abs": self.max_abs,
            "rms": self.rms,
            "masked_count": self.masked_count,
            "grid": list(self.shape),
        }


def residual_parametric(structure, mesh, mask_radius=2):
    """``d phi/dt + cos(phi) c12^1 + sin(phi) c12^2`` with ``phi`` recovered from geometry."""
    phi = phi_from_mesh(structure, mesh)
    phi_f = phi.filled(np.nan)
    dphi = _central(phi_f, 0, mesh.t_grid)
    c1, c2 = structure.c12(mesh.projected)
    r = dphi + np.cos(phi_f) * c1 + np.sin(phi_f) * c2
    near = _dilate(characteristic_node_mask(mesh.xi_t[..., 2]), mask_radius)
    return ResidualReport.build(r, near | np.isnan(r))


def _along(structure, i, F, q, h):
    """``X_i F`` at ``q`` by a central difference along the straight line ``q + e X_i(q)``."""
    d = structure.field(i, q)
    return (F(q + h * d) - F(q - h * d)) / (2 * h)


def residual_levelset(structure, F, points, h=1e-3):
    """Level-set form of the minimal-surface equation for ``{F = 0}`` at ``points``.

    ``F`` maps ``(..., 3)`` arrays to scalars. Points with ``D1 < 10 h^2`` are
    masked as near the characteristic set.
    """
    q = np.asarray(points, dtype=float)
    f1 = _along(structure, 1, F, q, h)
    f2 = _along(structure, 2, F, q, h)
    f11 = _along(structure, 1, lambda p: _along(structure, 1, F, p, h), q, h)
    f22 = _along(structure, 2, lambda p: _along(structure, 2, F, p, h), q, h)
    f12 = _along(structure, 1, lambda p: _along(structure, 2, F, p, h), q, h)
    f21 = _along(structure, 2, lambda p: _along(structure, 1, F, p, h), q, h)
    d1 = np.hypot(f1, f2)
    mask = d1 < 10 * h**2
    c1, c2 = structure.c12(q)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = (f11 * f2**2 + f22 * f1**2 - f1 * f2 * (f12 + f21)) / d1**3 + (c2 * f1 - c1 * f2) / d1
    return ResidualReport.build(r, mask)


# --- horizontal area ----------------------------------------------------------


def _tri_area(structure, p0, p1, p2):
    centroid = (p0 + p1 + p2) / 3.0
    u = to_frame_components(structure, centroid, p1 - p0, check=False)
    v = to_frame_components(structure, centroid, p2 - p0, check=False)
    n = np.cross(u, v)
    return 0.5 * np.hypot(n[..., 0], n[..., 1])


def _region(mask, shape):
    if mask is None:
        return slice(None), slice(None)
    if isinstance(mask, tuple):
        return mask
    mask = np.asarray(mask, dtype=bool)
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if len(rows) == 0:
        return slice(0, 0), slice(0, 0)
    box = (slice(rows[0], rows[-1] + 1), slice(cols[0], cols[-1] + 1))
    if not mask[box].all() or mask.sum() != mask[box].size:
        raise ValueError("region mask must select a rectangular subgrid")
    return box


def horizontal_area(structure, mesh, region=None):
    """Horizontal area of a rectangular block of nodes.

    ``mesh`` is a SurfaceMesh or an ``(nt, ns, 3)`` array of points; ``region``
    is a boolean node mask or a pair of slices. Each quad contributes the mean
    over its two diagonal splits.
    """
    q = mesh.projected if isinstance(mesh, SurfaceMesh) else np.asarray(mesh, dtype=float)
    q = q[_region(region, q.shape[:2])]
    if q.shape[0] < 2 or q.shape[1] < 2:
        return 0.0
    a, b, c, d = q[:-1, :-1], q[1:, :-1], q[1:, 1:], q[:-1, 1:]
    split1 = _tri_area(structure, a, b, c) + _tri_area(structure, a, c, d)
    split2 = _tri_area(structure, a, b, d) + _tri_area(structure, b, c, d)
    return float(np.sum(0.5 * (split1 + split2)))


def first_variation(structure, mesh, bump, eps, region=None):
    """Central difference ``(A(+eps) - A(-eps)) / (2 eps)`` of the horizontal area.

    ``bump`` is an ``(nt, ns, 3)`` array of coordinate displacements that
    should vanish on the boundary of the region.
    """
    q = mesh.projected if isinstance(mesh, SurfaceMesh) else np.asarray(mesh, dtype=float)
    bump = np.asarray(bump, dtype=float)
    if not np.any(bump):
        return 0.0
    plus = horizontal_area(structure, q + eps * bump, region)
    minus = horizontal_area(structure, q - eps * bump, region)
    return (plus - minus) / (2 * eps)
