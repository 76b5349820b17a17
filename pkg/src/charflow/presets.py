"""Named generating curves with analytic tangents.

Each preset carries its structure, default ranges and, where known, the
level-set function of the resulting surface.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .frame import builtin_e2, builtin_heisenberg
from .surface import curve_from_functions

__all__ = ["Preset", "PRESETS", "get_preset", "h1_polynomial_curve"]

TAU = 2 * np.pi


@dataclass(frozen=True)
class Preset:
    name: str
    structure: str
    fns: tuple
    dfns: tuple
    t_range: tuple
    s_range: tuple
    description: str
    levelset: Callable | None = None

    def curve(self, structure=None):
        structure = structure or {"heisenberg": builtin_heisenberg, "e2": builtin_e2}[self.structure]()
        return curve_from_functions(structure, self.fns, self.s_range, self.dfns, name=self.name)


def _c(v):
    return lambda s: np.full(np.shape(s), float(v))


def _zero(s):
    return np.zeros(np.shape(s))


def _one(s):
    return np.ones(np.shape(s))


def _h1(name, fns, dfns, t_range, s_range, description):
    return Preset(name, "heisenberg", tuple(fns), tuple(dfns), t_range, s_range, description)


def e2_family_a(B=1.0, C=0.0):
    """``y = x + B (sin z + cos z) + C``: constant angle ``atan2(-1, B)``."""
    phi = float(np.arctan2(-1.0, B))
    return Preset(
        "e2-a", "e2",
        (lambda s: s, lambda s: s + B + C, _zero, _c(phi)),
        (_one, _one, _zero, _zero),
        (-1.0, 1.0), (-1.0, 1.0),
        f"E2 plane family y = x + B(sin z + cos z) + C, B={B}, C={C}",
        lambda q: q[..., 1] - q[..., 0] - B * (np.sin(q[..., 2]) + np.cos(q[..., 2])) - C,
    )


def e2_family_b(A=1.0, B=1.0, C=0.0):
    """``A x + B sin z = C``: constant angle ``atan2(-A, B)``, needs ``A != 0``."""
    if A == 0:
        raise ValueError("family b needs A != 0 to place the curve at z = 0")
    phi = float(np.arctan2(-A, B))
    return Preset(
        "e2-b", "e2",
        (_c(C / A), lambda s: s, _zero, _c(phi)),
        (_zero, _one, _zero, _zero),
        (-1.0, 1.0), (-1.0, 1.0),
        f"E2 family A x + B sin z = C, A={A}, B={B}, C={C}",
        lambda q: A * q[..., 0] + B * np.sin(q[..., 2]) - C,
    )


def e2_family_c():
    """``x cos z + y sin z = 0``, started on the line ``x = z = 0``."""
    return Preset(
        "e2-c", "e2",
        (_zero, lambda s: s, _zero, lambda s: np.arctan2(-1.0, s)),
        (_zero, _one, _zero, lambda s: 1.0 / (1.0 + s**2)),
        (-1.0, 1.0), (0.2, 2.0),
        "E2 surface x cos z + y sin z = 0",
        lambda q: q[..., 0] * np.cos(q[..., 2]) + q[..., 1] * np.sin(q[..., 2]),
    )


PRESETS = {
    p.name: p
    for p in [
        _h1("helicoid-ccw", (_zero, _zero, lambda s: s, lambda s: s), (_zero, _zero, _one, _one),
            (-2.0, 2.0), (0.0, TAU), "counter-clockwise helicoid (t cos s, t sin s, s)"),
        _h1("helicoid-cw", (_zero, _zero, lambda s: -s, lambda s: s), (_zero, _zero, lambda s: -_one(s), _one),
            (-2.0, 2.0), (0.0, TAU), "clockwise helicoid (t cos s, t sin s, -s)"),
        _h1("example-7", (_zero, _zero, lambda s: s**3 / 6, lambda s: s), (_zero, _zero, lambda s: s**2 / 2, _one),
            (-2.0, 2.0), (-2.0, 2.0), "surface (t cos s, t sin s, s^3/6) with a tangency point"),
        _h1("example-strong", (np.sin, lambda s: -np.cos(s), lambda s: 1 + s / 2, lambda s: s),
            (np.cos, np.sin, lambda s: 0.5 * _one(s), _one),
            (-2.0, 2.0), (0.0, TAU), "surface containing a strongly singular curve"),
        _h1("example-selfint", (lambda s: -2 * np.cos(s), lambda s: -2 * np.sin(s), np.cos, lambda s: s),
            (lambda s: 2 * np.sin(s), lambda s: -2 * np.cos(s), lambda s: -np.sin(s), _one),
            (0.0, 4.0), (0.0, TAU), "self-intersecting surface ((t-2) cos s, (t-2) sin s, cos s)"),
        _h1("umbrella", (_zero, _zero, lambda s: s**2 / 2, lambda s: s), (_zero, _zero, lambda s: s, _one),
            (-1.0, 1.0), (-1.0, 1.0), "generic singular point: Whitney umbrella at the origin"),
        _h1("vertical-plane", (_zero, _zero, _zero, lambda s: s), (_zero, _zero, _zero, _one),
            (-1.0, 1.0), (0.0, TAU), "plane Delta_0 with an isolated characteristic point"),
        e2_family_a(),
        e2_family_b(),
        e2_family_c(),
        Preset("e2-vertical", "e2", (lambda s: s, _zero, _zero, _c(np.pi / 2)), (_one, _zero, _zero, _zero),
               (-1.0, 1.0), (-1.0, 1.0), "vertical translates (s, 0, t)",
               lambda q: q[..., 1]),
    ]
}


def get_preset(name):
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def vertical_curve(structure, base, s_range=(0.0, TAU)):
    """``s -> (base, s)``: a vertical curve whose flow-out is the plane through ``base``."""
    x0, y0, z0 = map(float, base)
    return curve_from_functions(structure, (_c(x0), _c(y0), _c(z0), lambda s: s),
                                s_range, (_zero, _zero, _zero, _one), name="vertical")


def h1_polynomial_curve(structure, coeffs, s_range=(-1.0, 1.0)):
    """Curve whose four components are polynomials in ``s`` (coefficients low to high)."""
    polys = [np.polynomial.Polynomial(c) for c in coeffs]
    return curve_from_functions(structure, polys, s_range, [p.deriv() for p in polys], name="polynomial")
