"""Contact sub-Riemannian structures on 3-manifolds given by an orthonormal frame.

A structure is a horizontal orthonormal pair ``X1, X2`` spanning the contact
plane, the Reeb field ``X3`` completing it to a frame, and the structural
constants ``c[i,j,k]`` defined by::

    [X_i, X_j] = - sum_k c_ij^k X_k

All field evaluators act on arrays of points of shape ``(..., 3)`` and return
vectors of the same shape. Constants are supplied analytically; the
finite-difference bracket in this module only validates them.

Orientation of the builtins: the Reeb field is chosen as ``X3 = [X1, X2]``, so
``c_12^3 = -1`` in both the Heisenberg group and the roto-translation group
``E2`` (where additionally ``c_23^1 = -1``).
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from .expr import compile_scalar, compile_vector

__all__ = [
    "SingularFrame",
    "ContactStructure",
    "ValidationReport",
    "frame_matrix",
    "to_frame_components",
    "from_frame_components",
    "numeric_bracket",
    "validate_structure",
    "builtin_heisenberg",
    "builtin_e2",
    "load_structure",
    "get_structure",
]

COND_LIMIT = 1e12
FD_STEP = 1e-4

# independent constants c_ij^k with i < j, 1-based
CONSTANT_KEYS = [(i, j, k) for (i, j) in ((1, 2), (1, 3), (2, 3)) for k in (1, 2, 3)]


class SingularFrame(ArithmeticError):
    """The frame ``X1, X2, X3`` fails to be a basis at some point."""


def _const(value):
    value = float(value)
    return lambda q: np.full(np.shape(q)[:-1], value)


@dataclass(frozen=True)
class ContactStructure:
    """A (2,3) contact sub-Riemannian structure.

    ``constants`` maps ``(i, j, k)`` with ``i < j`` to an evaluator ``q -> c_ij^k(q)``;
    missing entries are zero and ``c_ji^k = -c_ij^k``.
    """

    name: str
    X1: Callable[[np.ndarray], np.ndarray]
    X2: Callable[[np.ndarray], np.ndarray]
    X3: Callable[[np.ndarray], np.ndarray]
    constants: Mapping[tuple, Callable] = field(default_factory=dict)
    is_lie_group: bool = False
    closed_form: str | None = None  # "H1", "E2" or None

    def frame(self, q):
        """Frame matrices with columns ``X1(q), X2(q), X3(q)``; shape ``(..., 3, 3)``."""
        q = np.asarray(q, dtype=float)
        return np.stack([self.X1(q), self.X2(q), self.X3(q)], axis=-1)

    def field(self, i, q):
        return (self.X1, self.X2, self.X3)[i - 1](np.asarray(q, dtype=float))

    def structural_constant(self, i, j, k, q):
        q = np.asarray(q, dtype=float)
        if i == j:
            return np.zeros(q.shape[:-1])
        if i > j:
            return -self.structural_constant(j, i, k, q)
        fn = self.constants.get((i, j, k))
        return np.zeros(q.shape[:-1]) if fn is None else np.asarray(fn(q), dtype=float)

    def c12(self, q):
        """The pair ``(c_12^1, c_12^2)`` that drives the angle equation.

        Absent constants come back as the scalar 0.0, which broadcasts.
        """
        out = []
        for k in (1, 2):
            fn = self.constants.get((1, 2, k))
            out.append(0.0 if fn is None else np.asarray(fn(np.asarray(q, dtype=float)), dtype=float))
        return tuple(out)

    def constant_array(self, q):
        """All constants as an array ``c[..., i, j, k]`` (0-based indices)."""
        q = np.asarray(q, dtype=float)
        out = np.zeros(q.shape[:-1] + (3, 3, 3))
        for i in range(3):
            for j in range(3):
                for k in range(3):
                    out[..., i, j, k] = self.structural_constant(i + 1, j + 1, k + 1, q)
        return out


def frame_matrix(structure, q):
    """3x3 matrix whose columns are the frame fields at the single point ``q``."""
    q = np.asarray(q, dtype=float)
    if not np.all(np.isfinite(q)):
        raise ValueError(f"non-finite point {q!r}")
    m = structure.frame(q)
    if np.linalg.cond(m) > COND_LIMIT:
        raise SingularFrame(f"frame of {structure.name!r} is singular at {q.tolist()}")
    return m


def to_frame_components(structure, q, v, check=True):
    """Components ``a`` with ``v = a1 X1(q) + a2 X2(q) + a3 X3(q)``.

    Works on batches: ``q`` and ``v`` of shape ``(..., 3)``.
    """
    m = structure.frame(q)
    v = np.asarray(v, dtype=float)
    if check and np.any(np.linalg.cond(m) > COND_LIMIT):
        raise SingularFrame(f"frame of {structure.name!r} is singular")
    m, v = np.broadcast_arrays(m, v[..., None])
    return np.linalg.solve(m, v)[..., 0]


def from_frame_components(structure, q, a):
    """Coordinate vector ``a1 X1(q) + a2 X2(q) + a3 X3(q)``."""
    return np.einsum("...ij,...j->...i", structure.frame(q), np.asarray(a, dtype=float))


def _directional(fn, q, v, h):
    """Central difference of ``fn`` at ``q`` in coordinate direction(s) ``v``."""
    return (fn(q + h * v) - fn(q - h * v)) / (2.0 * h)


def numeric_bracket(structure, i, j, q, h=FD_STEP):
    """Lie bracket ``[X_i, X_j](q) = DX_j X_i - DX_i X_j`` by central differences."""
    if h <= 0:
        raise ValueError("finite-difference step must be positive")
    q = np.asarray(q, dtype=float)
    fi = (structure.X1, structure.X2, structure.X3)[i - 1]
    fj = (structure.X1, structure.X2, structure.X3)[j - 1]
    xi, xj = fi(q), fj(q)
    # D X . v = sum_k v_k dX/dq_k; the Jacobian is built column by column
    eye = np.eye(3)
    dxj = np.stack([_directional(fj, q, eye[k], h) for k in range(3)], axis=-1)
    dxi = np.stack([_directional(fi, q, eye[k], h) for k in range(3)], axis=-1)
    return np.einsum("...ab,...b->...a", dxj, xi) - np.einsum("...ab,...b->...a", dxi, xj)


@dataclass
class ValidationReport:
    name: str
    tol: float
    bracket_deviation: np.ndarray  # per point, max over pairs (i, j)
    normalization_deviation: np.ndarray  # per point, deviation from |c12^3| = 1, c13^3 = c23^3 = 0
    antisymmetry_deviation: float
    jacobi_deviation: float | None
    min_abs_det: float
    nonzero_constants: dict
    violations: list

    @property
    def passed(self):
        return not self.violations

    def to_dict(self):
        return {
            "name": self.name,
            "tol": self.tol,
            "passed": self.passed,
            "max_bracket_deviation": float(np.max(self.bracket_deviation)),
            "max_normalization_deviation": float(np.max(self.normalization_deviation)),
            "antisymmetry_deviation": self.antisymmetry_deviation,
            "jacobi_deviation": self.jacobi_deviation,
            "min_abs_det": self.min_abs_det,
            "nonzero_constants": self.nonzero_constants,
            "violations": self.violations,
        }


def validate_structure(structure, sample_points, tol=1e-6, h=FD_STEP):
    """Check the frame and its constants at ``sample_points`` (shape ``(n, 3)``).

    Checks, per point: the bracket relations against the finite-difference
    bracket, antisymmetry, the contact normalization ``|c_12^3| = 1``,
    ``c_13^3 = c_23^3 = 0``, and for Lie groups the three constant-coefficient
    Jacobi relations. Raises :class:`SingularFrame` if the frame degenerates.
    """
    pts = np.atleast_2d(np.asarray(sample_points, dtype=float))
    if pts.shape[0] < 1:
        raise ValueError("need at least one sample point")
    frames = structure.frame(pts)
    dets = np.linalg.det(frames)
    if np.any(np.linalg.cond(frames) > COND_LIMIT):
        raise SingularFrame(f"frame of {structure.name!r} degenerates on the sample")
    c = structure.constant_array(pts)  # (n, 3, 3, 3)
    violations = []

    bracket_dev = np.zeros(len(pts))
    for i, j in ((1, 2), (1, 3), (2, 3)):
        num = numeric_bracket(structure, i, j, pts, h)
        model = np.einsum("nk,nak->na", c[:, i - 1, j - 1, :], frames)
        dev = np.max(np.abs(num + model), axis=-1)
        bracket_dev = np.maximum(bracket_dev, dev)
        if np.max(dev) >= tol:
            violations.append(f"bracket [X{i},X{j}] deviates by {np.max(dev):.3e}")

    antisym = float(np.max(np.abs(c + np.swapaxes(c, 1, 2))))
    if antisym >= tol:
        violations.append(f"antisymmetry violated by {antisym:.3e}")

    norm_dev = np.maximum.reduce([
        np.abs(np.abs(c[:, 0, 1, 2]) - 1.0),
        np.abs(c[:, 0, 2, 2]),
        np.abs(c[:, 1, 2, 2]),
    ])
    if np.max(norm_dev) >= tol:
        violations.append(f"contact normalization |c12^3|=1, c13^3=c23^3=0 violated by {np.max(norm_dev):.3e}")

    jac = None
    if structure.is_lie_group:
        spread = float(np.max(np.ptp(c, axis=0)))
        c12_1, c12_2 = c[:, 0, 1, 0], c[:, 0, 1, 1]
        c13_1, c13_2 = c[:, 0, 2, 0], c[:, 0, 2, 1]
        c23_1, c23_2 = c[:, 1, 2, 0], c[:, 1, 2, 1]
        rel = np.stack([
            c13_1 + c23_2,
            c12_1 * c13_1 + c12_2 * c23_1,
            c12_1 * c13_2 + c12_2 * c23_2,
        ])
        jac = float(max(np.max(np.abs(rel)), spread))
        if jac >= tol:
            violations.append(f"Lie-group Jacobi relations violated by {jac:.3e}")

    nonzero = {}
    for i, j, k in CONSTANT_KEYS:
        vals = c[:, i - 1, j - 1, k - 1]
        if np.max(np.abs(vals)) > tol:
            nonzero[f"c{i}{j}^{k}"] = float(vals[0]) if np.ptp(vals) < tol else "varies"

    return ValidationReport(
        name=structure.name,
        tol=tol,
        bracket_deviation=bracket_dev,
        normalization_deviation=norm_dev,
        antisymmetry_deviation=antisym,
        jacobi_deviation=jac,
        min_abs_det=float(np.min(np.abs(dets))),
        nonzero_constants=nonzero,
        violations=violations,
    )


# --- builtins ---------------------------------------------------------------


def _heis_x1(q):
    out = np.zeros(np.shape(q))
    out[..., 0] = 1.0
    out[..., 2] = -0.5 * q[..., 1]
    return out


def _heis_x2(q):
    out = np.zeros(np.shape(q))
    out[..., 1] = 1.0
    out[..., 2] = 0.5 * q[..., 0]
    return out


def _heis_x3(q):
    out = np.zeros(np.shape(q))
    out[..., 2] = 1.0
    return out


def builtin_heisenberg():
    """Heisenberg group: ``X1 = dx - y/2 dz``, ``X2 = dy + x/2 dz``, Reeb ``X3 = dz``."""
    return ContactStructure(
        name="heisenberg",
        X1=_heis_x1,
        X2=_heis_x2,
        X3=_heis_x3,
        constants={(1, 2, 3): _const(-1.0)},
        is_lie_group=True,
        closed_form="H1",
    )


def _e2_x1(q):
    out = np.zeros(np.shape(q))
    out[..., 0] = np.cos(q[..., 2])
    out[..., 1] = np.sin(q[..., 2])
    return out


def _e2_x2(q):
    out = np.zeros(np.shape(q))
    out[..., 2] = 1.0
    return out


def _e2_x3(q):
    out = np.zeros(np.shape(q))
    out[..., 0] = np.sin(q[..., 2])
    out[..., 1] = -np.cos(q[..., 2])
    return out


def builtin_e2():
    """Roto-translations: ``X1 = cos z dx + sin z dy``, ``X2 = dz``.

    The Reeb field is ``X3 = [X1, X2] = sin z dx - cos z dy``, giving
    ``c_12^3 = c_23^1 = -1``. The angle ``z`` is kept unwrapped.
    """
    return ContactStructure(
        name="e2",
        X1=_e2_x1,
        X2=_e2_x2,
        X3=_e2_x3,
        constants={(1, 2, 3): _const(-1.0), (2, 3, 1): _const(-1.0)},
        is_lie_group=True,
        closed_form="E2",
    )


BUILTINS = {"heisenberg": builtin_heisenberg, "h1": builtin_heisenberg, "e2": builtin_e2}

_COORD_ALIASES = {"x": "q1", "y": "q2", "z": "q3"}


def _field_from_exprs(text):
    comps = compile_vector(text, ["q1", "q2", "q3"], length=3, aliases=_COORD_ALIASES)

    def fn(q):
        q = np.asarray(q, dtype=float)
        return np.stack([c(q[..., 0], q[..., 1], q[..., 2]) for c in comps], axis=-1)

    return fn


def _scalar_from_expr(text):
    f = compile_scalar(text, ["q1", "q2", "q3"], aliases=_COORD_ALIASES)
    return lambda q: f(q[..., 0], q[..., 1], q[..., 2])


def load_structure(path):
    """Read a structure definition file (INI syntax).

    Example::

        [structure]
        name = solvable
        lie_group = true
        X1 = exp(-q2), 0, exp(-q2) - 1
        X2 = 0, 1, 0
        X3 = 0, 0, 1

        [constants]
        c12_1 = -1
        c12_3 = -1

    Coordinates are ``q1, q2, q3`` (aliases ``x, y, z``). Constants default to 0;
    keys are ``cIJ_K`` with ``I < J``.
    """
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keep the case of X1, c12_1, ...
    text = Path(path).read_text()
    parser.read_string(text)
    if "structure" not in parser:
        raise ValueError(f"{path}: missing [structure] section")
    sec = parser["structure"]
    for key in ("X1", "X2", "X3"):
        if key not in sec:
            raise ValueError(f"{path}: missing field {key}")
    consts = {}
    if "constants" in parser:
        for key, value in parser["constants"].items():
            try:
                ij, k = key[1:].split("_")
                i, j, k = int(ij[0]), int(ij[1]), int(k)
            except (ValueError, IndexError):
                raise ValueError(f"{path}: bad constant key {key!r}") from None
            if (i, j, k) not in CONSTANT_KEYS:
                raise ValueError(f"{path}: constant key {key!r} must have i < j in 1..3")
            consts[(i, j, k)] = _scalar_from_expr(value)
    if (1, 2, 3) not in consts:
        raise ValueError(f"{path}: c12_3 (the Reeb orientation, +1 or -1) must be declared")
    return ContactStructure(
        name=sec.get("name", Path(path).stem),
        X1=_field_from_exprs(sec["X1"]),
        X2=_field_from_exprs(sec["X2"]),
        X3=_field_from_exprs(sec["X3"]),
        constants=consts,
        is_lie_group=sec.getboolean("lie_group", fallback=False),
        closed_form=None,
    )


def get_structure(spec):
    """Builtin by name (``heisenberg``, ``e2``) or a definition file path."""
    if isinstance(spec, ContactStructure):
        return spec
    key = str(spec).lower()
    if key in BUILTINS:
        return BUILTINS[key]()
    return load_structure(spec)
