import numpy as np
import pytest

from charflow.frame import builtin_heisenberg
from charflow.presets import PRESETS, vertical_curve
from charflow.singular import (GENERIC, ISOLATED, REGULAR, STRONG, TANGENCY, CharPoint, LoopThroughSingular,
                               NotCharacteristic, StepCollapse, assemble_curves, classify, classify_many, find_characteristic_points,
                               h1_discriminant, h1_singular_curves, h1_singular_points, refine_root,
                               trace_simple_curve, umbrella_frame_test, winding_index)
from charflow.surface import solve_cauchy
from conftest import preset_mesh

SQ2 = np.sqrt(2.0)


def _curve(name):
    return PRESETS[name].curve(builtin_heisenberg())


def test_helicoid_simple_curves(H):
    mesh = preset_mesh("helicoid-ccw", 41, 33)
    pts = classify_many(H, mesh.curve, [(p.s, p) for p in find_characteristic_points(mesh)])
    assert len(pts) == 2 * 33
    assert all(p.kind == REGULAR for p in pts)
    assert np.max(np.abs(np.abs([p.t for p in pts]) - SQ2)) < 1e-6
    curves = assemble_curves(pts, mesh)
    assert [c.kind for c in curves] == ["Simple", "Simple"]
    assert sorted(round(c.samples[0].t, 6) for c in curves) == [round(-SQ2, 6), round(SQ2, 6)]


def test_helicoid_trace_full_period(H):
    curve = _curve("helicoid-ccw")
    traced = trace_simple_curve(H, curve, CharPoint(1.4, 1.0, np.zeros(3)), s_step=0.1, t_range=(-2, 2))
    s = np.array([p.s for p in traced.samples])
    assert s.min() == pytest.approx(0.0) and s.max() == pytest.approx(2 * np.pi)
    assert np.max(np.abs([p.t - SQ2 for p in traced.samples])) < 1e-6
    assert traced.anchor is None


def test_clockwise_helicoid_has_no_characteristic_points():
    assert find_characteristic_points(preset_mesh("helicoid-cw", 41, 33)) == []
    assert h1_singular_points(_curve("helicoid-cw")) == []


def test_example7_discriminant_and_point(H):
    curve = _curve("example-7")
    s = np.linspace(-2, 2, 101)
    assert np.max(np.abs(h1_discriminant(curve, s) - s**2)) < 1e-9
    pts = h1_singular_points(curve)
    assert len(pts) == 1
    assert abs(pts[0].s) < 1e-6 and abs(pts[0].t) < 1e-6 and np.linalg.norm(pts[0].q) < 1e-6
    p = classify(H, curve, 0.0, CharPoint(0.0, 0.0, np.zeros(3)))
    assert p.kind == TANGENCY and p.order == 2 and p.label == "TangencyOrderK(2)"
    det, generic = umbrella_frame_test(H, curve, 0.0)
    assert abs(det) < 1e-8 and not generic


def test_example7_branches_traced(H):
    curve = _curve("example-7")
    for seed in (CharPoint(1.0, 1.0, np.zeros(3)), CharPoint(-1.0, 1.0, np.zeros(3))):
        traced = trace_simple_curve(H, curve, seed, s_step=0.05, t_range=(-2, 2))
        err = 0.0
        for p in traced.samples:
            sgn = np.sign(seed.t) * np.sign(p.s) if p.s != 0 else 1
            ref = np.array([sgn * p.s * np.cos(p.s), sgn * p.s * np.sin(p.s), p.s**3 / 6])
            err = max(err, np.linalg.norm(p.q - ref))
        assert err < 1e-5
        assert traced.anchor is not None and np.linalg.norm(traced.anchor.q) < 1e-5


def test_strong_curve(H):
    curve = _curve("example-strong")
    s = np.linspace(0, 2 * np.pi, 101)
    assert np.max(np.abs(h1_discriminant(curve, s))) < 1e-9
    mesh = preset_mesh("example-strong", 41, 33)
    pts = classify_many(H, curve, [(p.s, p) for p in find_characteristic_points(mesh)])
    assert len(pts) == 33
    assert all(p.kind == STRONG for p in pts)
    assert max(abs(p.t) for p in pts) < 1e-9
    curves = assemble_curves(pts, mesh)
    assert [c.kind for c in curves] == ["Strong"]


def test_example8_singular_points(H):
    curve = _curve("example-selfint")
    pts = h1_singular_points(curve)
    found = sorted((round(p.s, 6), round(p.t, 6)) for p in pts)
    assert found == [(0.0, 2.0), (round(np.pi, 6), 2.0), (round(2 * np.pi, 6), 2.0)]
    q = {round(p.s, 3): p.q for p in pts}
    assert np.allclose(q[0.0], [0, 0, 1], atol=1e-6) and np.allclose(q[round(np.pi, 3)], [0, 0, -1], atol=1e-6)
    # the mesh-based search sees the same two points as double roots
    mesh = preset_mesh("example-selfint", 41, 41)
    gen = find_characteristic_points(mesh)
    for s0, z0 in ((0.0, 1.0), (np.pi, -1.0)):
        near = [p for p in gen if abs(p.s - s0) < 1e-9]
        assert len(near) == 1 and abs(near[0].t - 2) < 1e-6 and abs(near[0].q[2] - z0) < 1e-6


def test_example8_branch(H):
    curve = _curve("example-selfint")
    traced = trace_simple_curve(H, curve, CharPoint(2 + np.sqrt(2), 1.5 * np.pi, np.zeros(3)),
                                s_step=0.05, t_range=(0, 4))
    s = np.array([p.s for p in traced.samples])
    t = np.array([p.t for p in traced.samples])
    assert np.max(np.abs(t - (2 + np.sqrt(np.maximum(0, -2 * np.sin(s)))))) < 1e-5
    # the branch closes at both singular points, where it meets t- = 2 - sqrt(-2 sin s)
    ends = sorted((a.s, a.t) for a in traced.anchors)
    assert np.allclose(ends, [(np.pi, 2.0), (2 * np.pi, 2.0)], atol=1e-6)
    for s0 in (0.5 * np.pi * 3 + 0.3,):
        cf = h1_singular_curves(curve, s0)
        assert sorted(round(a, 9) for a, _ in cf) == sorted(round(2 + sg * np.sqrt(-2 * np.sin(s0)), 9) for sg in (1, -1))


def test_umbrella(H):
    curve = _curve("umbrella")
    p = classify(H, curve, 0.0, CharPoint(0.0, 0.0, np.zeros(3)))
    assert p.kind == GENERIC
    det, generic = umbrella_frame_test(H, curve, 0.0)
    assert generic and det == pytest.approx(1.0, abs=1e-6)


def test_umbrella_branches_tangent_at_anchor(H):
    curve = _curve("umbrella")
    for seed in (CharPoint(0.77, 0.3, np.zeros(3)), CharPoint(-0.77, 0.3, np.zeros(3))):
        traced = trace_simple_curve(H, curve, seed, t_range=(-1, 1))
        assert traced.anchor is not None and np.linalg.norm(traced.anchor.q) < 1e-8
        sign = np.sign(seed.t)
        # walk down the branch to distance 1e-3 from the anchor
        from scipy.optimize import brentq
        dist = lambda s: np.linalg.norm(refine_root(H, curve, sign * np.sqrt(2 * s), s).q) - 1e-3  # noqa: E731
        s = brentq(dist, 1e-9, 1e-4, xtol=1e-16)
        q = refine_root(H, curve, sign * np.sqrt(2 * s), s).q
        # characteristic through the anchor points along (cos 0, sin 0, 0)
        angle = np.arccos(min(1.0, abs(q[0]) / np.linalg.norm(q)))
        assert angle < 1e-3


def test_not_characteristic(H):
    with pytest.raises(NotCharacteristic):
        classify(H, _curve("helicoid-ccw"), 1.0, CharPoint(0.5, 1.0, np.zeros(3)))


def test_regular_seed_required(H):
    with pytest.raises((ValueError, StepCollapse)):
        trace_simple_curve(H, _curve("example-strong"), CharPoint(0.0, 1.0, np.zeros(3)), s_step=0.1, t_range=(-1, 1))


def test_vertical_plane_isolated(H, rng):
    for _ in range(10):
        base = rng.uniform(-2, 2, 3)
        curve = vertical_curve(H, base)
        mesh = solve_cauchy(H, curve, np.linspace(-1, 1, 20 + 1), np.linspace(0, 2 * np.pi, 33), step=1e-2)
        pts = find_characteristic_points(mesh)
        assert len(pts) == 1
        p = classify(H, curve, pts[0].s, pts[0])
        assert p.kind == ISOLATED and np.allclose(p.q, base, atol=1e-9)
        assert winding_index(H, mesh, p) == 1


def test_winding_index_regular_square_is_zero(H):
    mesh = preset_mesh("helicoid-ccw", 41, 41)
    assert winding_index(H, mesh, (10, 20)) == 0


def test_winding_loop_through_masked(H):
    mesh = preset_mesh("helicoid-ccw", 41, 41)
    i = int(np.argmin(np.abs(mesh.t_grid - SQ2)))
    with pytest.raises(LoopThroughSingular):
        winding_index(H, mesh, (i - 3, 20), radius_cells=3)
