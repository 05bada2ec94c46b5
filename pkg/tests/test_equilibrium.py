import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mwpool.radtrans import (
    Grid,
    PhysicsParams,
    apply_deltas,
    equilibrium_update,
    ionized_radius,
    solve_neutral_fraction,
    stromgren_radius,
)
from mwpool.radtrans.tracing import GridDelta

positive = st.floats(1e-12, 1e12)


def delta(*entries):
    return GridDelta.decode_array(GridDelta(list(entries)).encode())


def test_no_radiation_is_neutral():
    assert solve_neutral_fraction(0.0, 3.0) == 1.0


def test_golden_case():
    assert abs(solve_neutral_fraction(2.0, 2.0) - (3 - math.sqrt(5)) / 2) <= 1e-12


def test_strong_field_asymptote():
    x = solve_neutral_fraction(1e12, 1.0)
    assert x == pytest.approx(1e-12, rel=1e-9)


@given(g=positive, a=positive)
def test_residual_and_bounds(g, a):
    x = solve_neutral_fraction(g, a)
    assert 0.0 <= x <= 1.0
    assert abs(g * x - a * (1 - x) ** 2) <= 1e-12 * max(g, a)


@given(g1=positive, g2=positive, a=positive)
def test_monotone_in_gamma(g1, g2, a):
    lo, hi = sorted((g1, g2))
    assert solve_neutral_fraction(hi, a) <= solve_neutral_fraction(lo, a)


def test_vectorized_matches_scalar():
    g = np.array([0.0, 0.5, 2.0, 1e6])
    a = np.array([1.0, 1.0, 2.0, 0.5])
    assert solve_neutral_fraction(g, a).tolist() == [solve_neutral_fraction(x, y) for x, y in zip(g, a)]


def test_apply_deltas_union_and_sum():
    a = delta((0, 0, 0, 1.0), (1, 0, 0, 2.0))
    b = delta((1, 0, 0, 0.5), (0, 1, 1, 4.0))
    absorbed, hits = apply_deltas(2, [(1, b), (0, a)])
    assert absorbed[0, 0, 0] == 1.0 and absorbed[1, 0, 0] == 2.5 and absorbed[0, 1, 1] == 4.0
    assert hits.sum() == 4 and hits[1, 0, 0] == 2
    assert apply_deltas(2, [])[0].sum() == 0.0


def test_fold_order_fixed_by_key():
    # values chosen so float addition order changes the sum
    vals = [1e16, 1.0, -1e16, 1.0]
    parts = [(k, delta((0, 0, 0, v))) for k, v in enumerate(vals)]
    ref = apply_deltas(1, parts)[0]
    assert apply_deltas(1, parts[::-1])[0].tobytes() == ref.tobytes()
    assert apply_deltas(1, [parts[2], parts[0], parts[3], parts[1]])[0].tobytes() == ref.tobytes()


def test_equilibrium_update_untouched_cells():
    grid = Grid.uniform(3, 1.0, 1.0)
    grid.neutral[:] = 0.5
    absorbed = np.zeros((3, 3, 3))
    absorbed[1, 1, 1] = 0.5  # gamma = 0.5 / (1 * 0.5) = 1 = alpha n
    x, change = equilibrium_update(grid, absorbed, PhysicsParams(1.0, 1.0, 1.0))
    assert x[1, 1, 1] == pytest.approx((3 - math.sqrt(5)) / 2, abs=1e-15)
    assert x[0, 0, 0] == 1.0 and change == 0.5


def test_fully_ionized_cell_uses_floor():
    grid = Grid.uniform(1, 1.0, 1.0)
    grid.neutral[:] = 0.0
    x, _ = equilibrium_update(grid, np.ones((1, 1, 1)), PhysicsParams(1.0, 1.0, 1.0))
    assert 0.0 <= x[0, 0, 0] < 1e-20


def test_stromgren_examples():
    assert stromgren_radius(4 * math.pi / 3, 1.0, 1.0) == pytest.approx(1.0, rel=1e-15)
    assert stromgren_radius(8 * 4 * math.pi / 3, 1.0, 1.0) == pytest.approx(2.0, rel=1e-15)
    assert stromgren_radius(4 * math.pi / 3, 1.0, 2.0) == pytest.approx(2 ** (-2 / 3), rel=1e-15)


def test_ionized_radius_examples():
    grid = Grid.uniform(3, 1.0, 1.0)
    assert ionized_radius(grid) == 0.0
    grid.neutral[1, 1, 1] = 0.1
    assert ionized_radius(grid) == pytest.approx(0.6204, abs=1e-4)
    grid.neutral[:] = 0.0
    assert ionized_radius(grid) == pytest.approx((3 * 27 / (4 * math.pi)) ** (1 / 3))
