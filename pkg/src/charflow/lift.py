"""Characteristic flow on the horizontal spherical bundle ``M x S^1``.

A lifted point is a state ``(x, y, z, phi)``; the angle ``phi`` gives the unit
horizontal direction ``cos(phi) X1 + sin(phi) X2`` and is kept unwrapped. The
generalized characteristic field is::

    V = cos(phi) X1 + sin(phi) X2 + g d/dphi,   g = -c12^1 cos(phi) - c12^2 sin(phi)

Integration is classical fixed-step RK4. Tangent vectors are pushed forward
along the flow by integrating the variational equation ``w' = DV w``; the
Jacobian-vector product is a central difference of ``V`` (step ``1e-5``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .frame import from_frame_components, to_frame_components

__all__ = [
    "NonFinite",
    "LiftedPoint",
    "Trajectory",
    "char_field",
    "lifted_field",
    "integrate_characteristic",
    "integrate_characteristics",
    "closed_form_h1",
    "closed_form_e2",
    "transport_xi",
    "taylor_xi3",
    "xi_to_coords",
    "coords_to_xi",
]

DEFAULT_STEP = 1e-3
JVP_STEP = 1e-5


class NonFinite(FloatingPointError):
    """The integrated state left the finite range."""


class LiftedPoint(NamedTuple):
    q: tuple
    phi: float

    def as_array(self):
        return np.array([*self.q, self.phi], dtype=float)


def as_state(p):
    """Coerce a LiftedPoint, a ``(q, phi)`` pair or a length-4 sequence to an array."""
    if isinstance(p, LiftedPoint):
        return p.as_array()
    if isinstance(p, tuple) and len(p) == 2 and np.ndim(p[0]) == 1:
        return np.array([*p[0], p[1]], dtype=float)
    return np.asarray(p, dtype=float)


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray  # (n,)
    states: np.ndarray  # (n, 4) rows (x, y, z, phi)
    transported: np.ndarray | None = None  # (n, 4) frame components of xi^t

    @property
    def q(self):
        return self.states[:, :3]

    @property
    def phi(self):
        return self.states[:, 3]


def lifted_field(structure, y):
    """``V`` at lifted states ``y`` of shape ``(..., 4)``, in coordinates."""
    q = y[..., :3]
    phi = y[..., 3]
    c, s = np.cos(phi), np.sin(phi)
    out = np.empty(y.shape)
    out[..., :3] = c[..., None] * structure.X1(q) + s[..., None] * structure.X2(q)
    c1, c2 = structure.c12(q)
    out[..., 3] = -c1 * c - c2 * s
    return out


def char_field(structure, p):
    """Projected part ``cos(phi) X1 + sin(phi) X2`` of ``V`` and the angle rate ``g``."""
    v = lifted_field(structure, as_state(p))
    return v[..., :3], v[..., 3]


def _rhs(structure, y, w):
    """Right-hand side of the coupled flow / variational system."""
    if w is None:
        return lifted_field(structure, y), None
    norm = np.linalg.norm(w, axis=-1, keepdims=True)
    unit = np.divide(w, norm, out=np.zeros_like(w), where=norm > 0)
    stacked = np.stack([y, y + JVP_STEP * unit, y - JVP_STEP * unit])
    f = lifted_field(structure, stacked)
    return f[0], (f[1] - f[2]) / (2.0 * JVP_STEP) * norm


def _rk4_step(structure, y, w, h):
    """One RK4 step; ``h`` is a scalar or an array broadcastable to ``y[..., :1]``."""
    k1, l1 = _rhs(structure, y, w)
    if w is None:
        k2, _ = _rhs(structure, y + 0.5 * h * k1, None)
        k3, _ = _rhs(structure, y + 0.5 * h * k2, None)
        k4, _ = _rhs(structure, y + h * k3, None)
        return y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4), None
    k2, l2 = _rhs(structure, y + 0.5 * h * k1, w + 0.5 * h * l1)
    k3, l3 = _rhs(structure, y + 0.5 * h * k2, w + 0.5 * h * l2)
    k4, l4 = _rhs(structure, y + h * k3, w + h * l3)
    return (y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4),
            w + h / 6.0 * (l1 + 2 * l2 + 2 * l3 + l4))


def _substeps(span, step):
    return max(1, math.ceil(abs(span) / step - 1e-9))


def flow_nodes(structure, y0, w0, times, step=DEFAULT_STEP):
    """Integrate from ``t = 0`` to each of ``times`` (any order, may straddle 0).

    ``y0`` has shape ``(N, 4)``; ``w0`` is ``None`` or ``(N, 4)`` coordinate
    tangent vectors. Returns arrays of shape ``(len(times), N, 4)``.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    times = np.asarray(times, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    ys = np.empty((len(times),) + y0.shape)
    ws = None if w0 is None else np.empty_like(ys)
    order = np.argsort(times)
    for branch in (order[times[order] >= 0], order[times[order] < 0][::-1]):
        y, w, t = y0.copy(), None if w0 is None else np.asarray(w0, float).copy(), 0.0
        for idx in branch:
            target = times[idx]
            n = _substeps(target - t, step)
            h = (target - t) / n
            for _ in range(n):
                y, w = _rk4_step(structure, y, w, h)
            if not np.all(np.isfinite(y)):
                raise NonFinite(f"state became non-finite before t={target}")
            t = target
            ys[idx] = y
            if ws is not None:
                ws[idx] = w
    return ys, ws


def flow_to(structure, y0, w0, t_end, step=DEFAULT_STEP):
    """Integrate each member of a batch to its own end time ``t_end[i]``.

    All members take the same number of uniform substeps, so the effective step
    is ``|t_end[i]| / n`` with ``n = ceil(max|t_end| / step)``.
    """
    t_end = np.asarray(t_end, dtype=float)
    n = _substeps(np.max(np.abs(t_end)) if t_end.size else 0.0, step)
    h = (t_end / n)[..., None]
    y = np.asarray(y0, dtype=float).copy()
    w = None if w0 is None else np.asarray(w0, dtype=float).copy()
    for _ in range(n):
        y, w = _rk4_step(structure, y, w, h)
    if not np.all(np.isfinite(y)):
        raise NonFinite("state became non-finite")
    return y, w


def _grid(t_span, step):
    t0, t1 = map(float, t_span)
    if not (math.isfinite(t0) and math.isfinite(t1)):
        raise ValueError("t_span must be finite")
    if step <= 0:
        raise ValueError("step must be positive")
    n = _substeps(t1 - t0, step)
    return t0 + (t1 - t0) * np.arange(n + 1) / n


def integrate_characteristics(structure, p0s, t_span, step=DEFAULT_STEP):
    """Batch version of :func:`integrate_characteristic`.

    ``p0s`` has shape ``(N, 4)`` and holds the states at ``t_span[0]``. Returns
    ``(times, states)`` with ``states`` of shape ``(n_nodes, N, 4)``; nodes are
    in integration order, so ``times`` decreases for a backward span.
    """
    grid = _grid(t_span, step)
    y = np.atleast_2d(np.asarray(p0s, dtype=float))
    out = np.empty((len(grid),) + y.shape)
    out[0] = y
    for k in range(1, len(grid)):
        y, _ = _rk4_step(structure, y, None, grid[k] - grid[k - 1])
        out[k] = y
    if not np.all(np.isfinite(out)):
        raise NonFinite("state became non-finite")
    return grid, out


def integrate_characteristic(structure, p0, t_span, step=DEFAULT_STEP):
    """Fixed-step RK4 integral curve of ``V`` starting at ``p0`` at time ``t_span[0]``.

    Node spacing is ``step`` whenever ``step`` divides the span, otherwise the
    span is split into the fewest equal steps not exceeding ``step``.
    """
    times, states = integrate_characteristics(structure, as_state(p0)[None, :], t_span, step)
    return Trajectory(times=times, states=states[:, 0, :])


def xi_to_coords(structure, y, xi):
    """Frame components ``(xi1..xi4)`` at lifted states ``y`` -> coordinate vectors."""
    xi = np.asarray(xi, dtype=float)
    dq = from_frame_components(structure, y[..., :3], xi[..., :3])
    return np.concatenate([dq, xi[..., 3:4]], axis=-1)


def coords_to_xi(structure, y, w):
    """Coordinate tangent vectors at lifted states ``y`` -> frame components."""
    a = to_frame_components(structure, y[..., :3], w[..., :3], check=False)
    return np.concatenate([a, w[..., 3:4]], axis=-1)


def transport_xi(structure, trajectory, xi0):
    """Push ``xi0`` (frame components at the first node) forward along ``trajectory``.

    Returns an ``(n, 4)`` array of frame components ``xi^t`` at every node,
    in the extended frame ``X1, X2, X3, d/dphi``.
    """
    times = trajectory.times
    y = trajectory.states[0][None, :].copy()
    w = xi_to_coords(structure, y, np.asarray(xi0, dtype=float)[None, :])
    out = np.empty((len(times), 4))
    ws = np.empty((len(times), 4))
    ws[0] = w[0]
    for k in range(1, len(times)):
        y, w = _rk4_step(structure, y, w, times[k] - times[k - 1])
        ws[k] = w[0]
    out[:] = coords_to_xi(structure, trajectory.states, ws)
    return out


def closed_form_h1(gamma_point, t):
    """Heisenberg characteristics are straight lines through ``(x0, y0, z0)``."""
    x0, y0, z0, phi = (np.asarray(v, dtype=float) for v in gamma_point)
    t = np.asarray(t, dtype=float)
    c, s = np.cos(phi), np.sin(phi)
    return np.stack(np.broadcast_arrays(
        t * c + x0,
        t * s + y0,
        0.5 * t * (x0 * s - y0 * c) + z0,
    ), axis=-1)


def closed_form_e2(gamma_point, t):
    """Integral of ``x' = cos(phi) cos z, y' = cos(phi) sin z, z' = sin(phi)``.

    For ``sin(phi) != 0`` this equals
    ``x0 + cot(phi) (sin z - sin z0)``, ``y0 - cot(phi) (cos z - cos z0)``.
    It is written with ``sinc`` so that the ``sin(phi) = 0`` case
    ``(x0 + t cos(phi) cos z0, y0 + t cos(phi) sin z0, z0)`` is the same formula.
    """
    x0, y0, z0, phi = (np.asarray(v, dtype=float) for v in gamma_point)
    t = np.asarray(t, dtype=float)
    a = t * np.sin(phi)  # total rotation of z
    mid = z0 + 0.5 * a
    # (sin(z0 + a) - sin z0) / sin(phi) = t cos(mid) sinc(a/2)
    sinc = np.sinc(a / (2.0 * np.pi))
    scale = t * np.cos(phi) * sinc
    return np.stack(np.broadcast_arrays(
        x0 + scale * np.cos(mid),
        y0 + scale * np.sin(mid),
        z0 + a,
    ), axis=-1)


def taylor_xi3(structure, p0, xi0, t):
    """Quadratic model of the transported third component ``xi3^t``.

    ``xi3 + t (xi1 sin(phi) - xi2 cos(phi)) - t^2/2 (xi4 + c12^1 xi1 + c12^2 xi2)``
    with the constants taken at ``p0``. Accurate to ``O(t^3)`` when ``xi3 = 0``;
    for ``xi3 != 0`` the exact second-order term also carries
    ``xi3 * (c13, c23 combinations)``, which this model leaves out.
    """
    y = as_state(p0)
    xi1, xi2, xi3, xi4 = np.asarray(xi0, dtype=float)
    c1, c2 = structure.c12(y[:3])
    phi = y[3]
    t = np.asarray(t, dtype=float)
    lin = xi1 * np.sin(phi) - xi2 * np.cos(phi)
    return xi3 + t * lin - 0.5 * t**2 * (xi4 + c1 * xi1 + c2 * xi2)
