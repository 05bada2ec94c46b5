import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mwpool.radtrans import Grid, PhysicsParams, RayAddress, RaySegmentTask, children, trace_segment
from mwpool.radtrans.geometry import pixel_direction
from mwpool.radtrans.grid import Snapshot, decode_snapshot, encode_snapshot
from mwpool.radtrans.tracing import GridDelta, base_tasks, entry_cell


def snap_of(grid, **kw):
    p = dict(Q=1.0, sigma=1.0, alpha=1.0)
    p.update(kw)
    params = PhysicsParams(**p)
    return Snapshot.of(grid, params), params


def walk(snap, params, tasks):
    """Trace a whole ray tree, yielding (task, delta, kids)."""
    stack = list(reversed(tasks))
    while stack:
        t = stack.pop()
        delta, kids = trace_segment(snap, params, t)
        yield t, delta, kids
        stack.extend(reversed(kids))


def test_exponential_attenuation_recurrence():
    n = 10
    grid = Grid(n, 1.0, np.ones((n, n, n)), source=(1.0, 2.5, 2.5))
    snap, params = snap_of(grid, f_split=1e9, eps_cut=1e-12)
    q0 = 3.0
    delta, kids = trace_segment(snap, params, RaySegmentTask(RayAddress(0, 0, 0, 0), grid.source, q0))
    assert kids == [] and delta.reason == "exit"
    assert [e[:3] for e in delta.entries] == [(i, 2, 2) for i in range(1, n)]
    # independent scalar recurrence: N_k = N_{k-1} e^{-1}
    N = q0
    for e in delta.entries:
        expect = N * (1 - math.exp(-1.0))
        assert e[3] == pytest.approx(expect, rel=1e-13)
        N -= expect
    for k, e in enumerate(delta.entries, start=1):
        assert e[3] == pytest.approx(q0 * math.exp(-(k - 1)) * (1 - math.exp(-1)), rel=1e-12)
    assert delta.remaining == pytest.approx(q0 * math.exp(-(n - 1)), rel=1e-12)


def test_zero_opacity_conserves_photons():
    n = 6
    grid = Grid(n, 1.0, np.ones((n, n, n)), neutral=np.zeros((n, n, n)), source=(0.5, 3.0, 3.0))
    snap, params = snap_of(grid, f_split=1e9)
    delta, kids = trace_segment(snap, params, RaySegmentTask(RayAddress(0, 0, 0, 0), grid.source, 2.0))
    assert len(delta.entries) == n and all(e[3] == 0.0 for e in delta.entries)
    assert delta.remaining == 2.0


def test_cutoff_stops_ray():
    n = 12
    grid = Grid.uniform(n, 1.0, 1.0, source=(0.5, 6.0, 6.0))
    snap, params = snap_of(grid, Q=6.0, f_split=1e9, eps_cut=0.01, base_level=0)
    delta, kids = trace_segment(snap, params, RaySegmentTask(RayAddress(0, 0, 0, 0), grid.source, 1.0))
    assert delta.reason == "cut" and kids == []
    assert delta.remaining < params.photon_cutoff
    # after k cells N = e^{-(k - 1/2)}, first below 0.01 at k = 6
    assert len(delta.entries) == 6


def test_split_gives_four_children_and_conserves():
    grid = Grid.uniform(16, 1.0, 1.0)
    snap, params = snap_of(grid, Q=100.0)
    task = base_tasks(grid, params)[0]
    delta, kids = trace_segment(snap, params, task)
    assert delta.reason == "split" and len(kids) == 4
    assert [k.addr for k in kids] == children(task.addr)
    assert len({(k.start, k.cell, k.photons) for k in kids}) == 1
    assert math.isclose(delta.absorbed_total + sum(k.photons for k in kids), task.photons, rel_tol=1e-14)


def test_outside_start_is_degenerate():
    grid = Grid.uniform(4, 1.0, 1.0)
    snap, params = snap_of(grid)
    delta, kids = trace_segment(snap, params, RaySegmentTask(RayAddress(0, 0, 0, 0), (9.0, 1.0, 1.0), 1.0))
    assert delta.entries == [] and kids == [] and delta.reason == "outside"


def test_corner_source_skips_zero_length():
    grid = Grid.uniform(4, 1.0, 1.0)  # source on the corner shared by 8 cells
    snap, params = snap_of(grid, f_split=1e9)
    for t in base_tasks(grid, params):
        delta, _ = trace_segment(snap, params, t)
        assert all(e[3] > 0 for e in delta.entries)
        assert len({e[:3] for e in delta.entries}) == len(delta.entries)


def test_entry_cell_boundaries():
    assert entry_cell((2.0, 1.5, 0.5), (1.0, 0.0, 0.0), 1.0) == (2, 1, 0)
    assert entry_cell((2.0, 1.5, 0.5), (-1.0, 0.0, 0.0), 1.0) == (1, 1, 0)


def test_task_codec_roundtrip():
    t = RaySegmentTask(RayAddress(4, 3, 5, 2), (1.25, 2.0, 3.5), 0.125, (1, 2, 3))
    assert RaySegmentTask.decode(t.encode()) == t
    bare = RaySegmentTask(RayAddress(0, 0, 0, 0), (1.0, 1.0, 1.0), 2.0)
    assert RaySegmentTask.decode(bare.encode()) == bare


def test_delta_codec():
    d = GridDelta([(1, 2, 3, 0.5), (65535, 0, 7, 1e-300)])
    arr = GridDelta.decode_array(d.encode())
    assert arr.tolist() == [(1, 2, 3, 0.5), (65535, 0, 7, 1e-300)]
    with pytest.raises(ValueError):
        GridDelta.decode_array(d.encode()[:-1])


def test_snapshot_codec():
    rng = np.random.default_rng(0)
    grid = Grid(5, 0.5, rng.random((5, 5, 5)), rng.random((5, 5, 5)), source=(1.0, 1.2, 1.3))
    params = PhysicsParams(2.0, 3.0, 4.0, 1e-5, 0.5, 2, 1e-3, 7)
    snap = decode_snapshot(encode_snapshot(grid, params))
    assert snap.params == params and snap.source == grid.source and snap.dx == 0.5
    assert np.array_equal(snap.density, grid.density) and np.array_equal(snap.neutral, grid.neutral)
    with pytest.raises(ValueError):
        decode_snapshot(encode_snapshot(grid, params)[:-8])


@settings(max_examples=30, deadline=None)
@given(n=st.integers(4, 12), seed=st.integers(0, 1000), f_split=st.sampled_from([0.25, 1.0, 4.0]),
       off=st.tuples(*[st.floats(0.05, 0.95)] * 3))
def test_tree_conservation_and_sparsity(n, seed, f_split, off):
    rng = np.random.default_rng(seed)
    src = tuple((n / 2 - 0.5 + o) for o in off)
    grid = Grid(n, 1.0, rng.random((n, n, n)) * 2, rng.random((n, n, n)), source=src)
    snap, params = snap_of(grid, Q=24.0, f_split=f_split, eps_cut=1e-9)
    absorbed = leaked = 0.0
    for t, delta, kids in walk(snap, params, base_tasks(grid, params)):
        assert len(delta.entries) <= 3 * n
        assert all(e[3] >= 0 and all(0 <= c < n for c in e[:3]) for e in delta.entries)
        carried = sum(k.photons for k in kids)
        assert math.isclose(delta.absorbed_total + carried + delta.remaining, t.photons,
                            rel_tol=1e-12, abs_tol=1e-300)
        absorbed += delta.absorbed_total
        if not kids:
            leaked += delta.remaining
    assert math.isclose(absorbed + leaked, 24.0, rel_tol=1e-10)


def test_direction_is_followed():
    grid = Grid.uniform(20, 1.0, 0.0)
    snap, params = snap_of(grid, f_split=1e9)
    addr = RayAddress(1, 2, 1, 2)
    d = pixel_direction(addr)
    delta, _ = trace_segment(snap, params, RaySegmentTask(addr, grid.source, 1.0))
    cells = np.array([e[:3] for e in delta.entries]) + 0.5
    rel = cells - np.array(grid.source)
    # every traversed cell center lies within half a cell diagonal of the ray line
    perp = rel - np.outer(rel @ np.array(d), d)
    assert np.max(np.linalg.norm(perp, axis=1)) <= math.sqrt(3) / 2 + 1e-12
