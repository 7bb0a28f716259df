import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from shapely.geometry import MultiPoint, Polygon

from snapjump.inverse import (
    CONTROL_HI,
    CONTROL_LO,
    ReachableRegion,
    SolverConfig,
    descend,
    is_reachable,
    perimeter_controls,
    point_in_polygon,
    reachable_region,
    sample_reachable_target,
    solve,
)
from snapjump.surrogate import TrainConfig, train

LO = np.array([0.01, 0.1, 0.3, 0.1])
HI = np.array([0.19, 0.3, 2.0, 0.6])


def toy_apex(X):
    """Smooth stand-in for the forward model with the right qualitative shape."""
    da, eps, mbar, mu = X.T
    x = 30 * da * eps / (0.5 + mbar) + 0.5 * mu
    y = 60 * eps / (0.5 + mbar) - 5 * da + 0.3 * mu
    return np.column_stack([x, y])


@pytest.fixture(scope="module")
def model():
    X = np.random.default_rng(0).uniform(LO, HI, (1500, 4))
    cfg = TrainConfig(hidden=(48, 48, 48), epochs=60, lr=2e-3, batch_schedule=((0, 32), (30, 128)), seed=1)
    return train(X, toy_apex(X), cfg).model


@pytest.fixture(scope="module")
def region(model):
    return reachable_region(model, 0.768, 0.3, 30, 30)


def winding_number(p, poly):
    """Sum of signed angles subtended by the edges."""
    a = poly - p
    b = np.roll(a, -1, axis=0)
    ang = np.arctan2(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0], (a * b).sum(axis=1))
    return int(round(ang.sum() / (2 * np.pi)))


def edge_distance(p, poly):
    a, b = poly, np.roll(poly, -1, axis=0)
    ab = b - a
    t = np.clip(((p - a) * ab).sum(axis=1) / (ab * ab).sum(axis=1), 0, 1)
    return np.hypot(*(a + t[:, None] * ab - p).T).min()


def random_star_polygon(rng, k):
    ang = np.sort(rng.uniform(0, 2 * np.pi, k))
    r = rng.uniform(0.3, 1.0, k)
    return np.column_stack([r * np.cos(ang), r * np.sin(ang)]) + rng.normal(0, 2, 2)


def test_perimeter_is_counter_clockwise_box_boundary():
    c = perimeter_controls(4, 3)
    assert len(c) == 2 * (4 + 3)
    assert Polygon(c).exterior.is_ccw
    assert np.allclose(c.min(axis=0), CONTROL_LO) and np.allclose(c.max(axis=0), CONTROL_HI)
    assert len({tuple(r) for r in c}) == len(c)


def test_region_shapes(region):
    assert region.images.shape == (2, 30, 30)
    assert region.polygon.shape == (2 * 60, 2)
    assert region.simple
    assert np.all((region.dalpha > CONTROL_LO[0]) & (region.dalpha < CONTROL_HI[0]))
    rows = list(region.rows())
    assert len(rows) == 900 and len(rows[0]) == 4


def test_grid_images_inside_region(region):
    pts = region.points
    assert all(is_reachable(p, region) for p in pts)
    hull = MultiPoint(np.vstack([pts, region.polygon])).convex_hull
    assert all(hull.buffer(1e-12).contains(MultiPoint([p])) for p in pts[::37])


def test_far_targets_unreachable(region):
    assert not is_reachable((0.0, 1e3), region)
    assert not is_reachable((-1e3, 5.0), region)


def test_vertices_and_edges_count_as_inside():
    sq = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    for v in sq:
        assert point_in_polygon(v, sq)
    for a, b in zip(sq, np.roll(sq, -1, axis=0)):
        assert point_in_polygon(0.5 * (a + b), sq)
    assert point_in_polygon((0.5, 0.5), sq)
    assert not point_in_polygon((1.5, 0.5), sq)
    assert not point_in_polygon((-1e-6, 0.5), sq)
    # ray through a vertex
    tri = np.array([[0.0, 0.0], [2.0, 1.0], [0.0, 2.0]])
    assert point_in_polygon((1.0, 1.0), tri)
    assert not point_in_polygon((-1.0, 1.0), tri)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_ray_cast_agrees_with_winding_number(seed):
    rng = np.random.default_rng(seed)
    poly = random_star_polygon(rng, int(rng.integers(3, 30)))
    lo, hi = poly.min(axis=0) - 0.2, poly.max(axis=0) + 0.2
    for p in rng.uniform(lo, hi, (50, 2)):
        if edge_distance(p, poly) < 1e-9:
            continue
        assert point_in_polygon(p, poly) == (winding_number(p, poly) != 0)


def test_ray_cast_agrees_with_winding_on_region(region):
    rng = np.random.default_rng(1)
    poly = region.polygon
    lo, hi = poly.min(axis=0), poly.max(axis=0)
    span = hi - lo
    disagree = 0
    for p in rng.uniform(lo - 0.1 * span, hi + 0.1 * span, (10_000, 2)):
        if edge_distance(p, poly) < 1e-9:
            continue
        disagree += point_in_polygon(p, poly) != (winding_number(p, poly) != 0)
    assert disagree == 0


def test_folded_region_falls_back_to_grid_test(region):
    bowtie = np.array([[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]])
    folded = ReachableRegion(region.mbar, region.mu, region.dalpha, region.eps, region.images, bowtie, False)
    # the bowtie is ignored: grid images count, a point inside the bowtie far from them does not
    assert is_reachable(region.points[100], folded)
    far = np.array([0.5, 0.25])
    assert np.hypot(*(region.points - far).T).min() > region.cell_diameter()
    assert not is_reachable(far, folded)


def test_self_consistent_target_is_recovered(model, region):
    rng = np.random.default_rng(2)
    for _ in range(5):
        c0 = rng.uniform(CONTROL_LO, CONTROL_HI)
        target = model(np.r_[c0, 0.768, 0.3])
        sol = solve(target, 0.768, 0.3, model, region=region)
        assert sol.reachable
        assert sol.cost < 1e-6
        assert np.hypot(sol.pred_x - target[0], sol.pred_y - target[1]) < 1e-3
        assert not sol.near_boundary


def test_unreachable_target_reported(model, region):
    sol = solve((0.0, 1e3), 0.768, 0.3, model, region=region)
    assert not sol.reachable
    assert np.isnan(sol.dalpha)
    d = sol.to_dict()
    assert d["reachable"] is False and set(d) >= {"dalpha", "eps", "pred_x", "pred_y", "cost", "time_s"}


def test_descent_is_monotone_and_feasible(model, region):
    rng = np.random.default_rng(3)
    starts = rng.uniform(CONTROL_LO - 0.05, CONTROL_HI + 0.05, (8, 2))
    target = sample_reachable_target(region, rng)
    c, J, pred, it, hist = descend(model, starts, target, 0.768, 0.3, SolverConfig(max_iter=200))
    assert np.all(np.diff(hist, axis=0) <= 0.0)
    assert np.all((c >= CONTROL_LO) & (c <= CONTROL_HI))
    np.testing.assert_allclose(pred, model(np.column_stack([c, np.full((8, 2), [0.768, 0.3])])), rtol=1e-12)
    assert J.min() < hist[0].min()


def test_near_boundary_flag_for_point_just_outside_reach(model, region):
    # a target on the polygon edge far from any start may not be hit exactly; the flag must
    # agree with the reported cost either way
    target = region.polygon[len(region.polygon) // 3]
    sol = solve(target, 0.768, 0.3, model, region=region)
    assert sol.reachable
    assert sol.near_boundary == (sol.cost > SolverConfig().warn_cost)


def test_sampled_targets_are_reachable(region):
    rng = np.random.default_rng(4)
    for _ in range(20):
        assert is_reachable(sample_reachable_target(region, rng), region)


def test_heavier_robot_has_smaller_region(model):
    areas = [Polygon(reachable_region(model, mb, 0.3, 20, 20).polygon).area for mb in (0.3, 1.0, 2.0)]
    assert areas[0] > areas[1] > areas[2]


def test_polish_never_increases_cost(model, region):
    from snapjump.inverse import polish

    rng = np.random.default_rng(5)
    starts = rng.uniform(CONTROL_LO, CONTROL_HI, (6, 2))
    target = sample_reachable_target(region, rng)
    r0 = model(np.column_stack([starts, np.full((6, 2), [0.768, 0.3])])) - target
    c, J, _ = polish(model, starts, target, 0.768, 0.3)
    assert np.all(J <= (r0 * r0).sum(axis=1))
    assert np.all((c >= CONTROL_LO) & (c <= CONTROL_HI))


def test_folded_region_targets_are_images_of_controls(model, region):
    bowtie = np.array([[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]])
    folded = ReachableRegion(region.mbar, region.mu, region.dalpha, region.eps, region.images, bowtie, False)
    rng = np.random.default_rng(6)
    for _ in range(3):
        state = rng.bit_generator.state
        target = sample_reachable_target(folded, rng, model=model)
        rng2 = np.random.default_rng()
        rng2.bit_generator.state = state
        c = rng2.uniform(CONTROL_LO, CONTROL_HI)
        np.testing.assert_array_equal(target, model(np.r_[c, region.mbar, region.mu]))
        sol = solve(target, region.mbar, region.mu, model, region=folded)
        assert sol.reachable and sol.cost < 1e-6
