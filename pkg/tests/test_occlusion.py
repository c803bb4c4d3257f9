"""Exact rectangle-union visibility versus hand values and Monte Carlo."""

import numpy as np
import pytest

from percept_sweep.sensors import occlusion_fraction


def test_two_overlapping_occluders_hand_value():
    target = (0.0, 10.0, 0.0, 10.0)
    occluders = [
        ((0.0, 6.0, 0.0, 10.0), 5.0),   # covers 60
        ((4.0, 10.0, 0.0, 5.0), 5.0),   # covers 30, overlaps 10
    ]
    assert occlusion_fraction(target, 10.0, occluders) == pytest.approx(0.2, abs=1e-12)


def test_no_occluders_fully_visible():
    assert occlusion_fraction((0.0, 1.0, 0.0, 1.0), 10.0, []) == 1.0


def test_full_cover_invisible():
    target = (2.0, 3.0, 2.0, 3.0)
    assert occlusion_fraction(target, 10.0, [((0.0, 5.0, 0.0, 5.0), 1.0)]) == 0.0


def test_zero_area_target_counts_as_occluded():
    assert occlusion_fraction((1.0, 1.0, 0.0, 2.0), 10.0, []) == 0.0


def test_only_strictly_nearer_boxes_occlude():
    target = (0.0, 1.0, 0.0, 1.0)
    behind = [((-1.0, 2.0, -1.0, 2.0), 11.0)]
    same_depth = [((-1.0, 2.0, -1.0, 2.0), 10.0)]
    assert occlusion_fraction(target, 10.0, behind) == 1.0
    assert occlusion_fraction(target, 10.0, same_depth) == 1.0


def test_disjoint_occluder_ignored():
    target = (0.0, 1.0, 0.0, 1.0)
    assert occlusion_fraction(target, 10.0, [((5.0, 6.0, 5.0, 6.0), 1.0)]) == 1.0


def test_matches_monte_carlo_on_random_configurations():
    rng = np.random.default_rng(20240817)
    for _ in range(20):
        tx0, ty0 = rng.uniform(-5.0, 5.0, size=2)
        tx1 = tx0 + rng.uniform(0.5, 6.0)
        ty1 = ty0 + rng.uniform(0.5, 6.0)
        target = (float(tx0), float(tx1), float(ty0), float(ty1))
        occluders = []
        for _ in range(rng.integers(1, 6)):
            ox0 = rng.uniform(tx0 - 3.0, tx1)
            oy0 = rng.uniform(ty0 - 3.0, ty1)
            rect = (float(ox0), float(ox0 + rng.uniform(0.3, 5.0)),
                    float(oy0), float(oy0 + rng.uniform(0.3, 5.0)))
            occluders.append((rect, float(rng.uniform(0.5, 9.5))))

        exact = occlusion_fraction(target, 5.0, occluders)

        xs = rng.uniform(tx0, tx1, size=100_000)
        ys = rng.uniform(ty0, ty1, size=100_000)
        covered = np.zeros(xs.shape, dtype=bool)
        for (x0, x1, y0, y1), depth in occluders:
            if depth >= 5.0:
                continue
            covered |= (xs >= x0) & (xs <= x1) & (ys >= y0) & (ys <= y1)
        mc = 1.0 - float(np.mean(covered))
        assert exact == pytest.approx(mc, abs=0.01)
