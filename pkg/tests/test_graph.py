import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import episode, random_episode
from stylegraph.errors import AgentLookupError, CapacityError, DomainError
from stylegraph.graph import (
    MIN_WEIGHT,
    AdjacencyState,
    GraphSnapshot,
    build_snapshot,
    estimate_speed,
    rebuild_reference,
    replay_adjacency,
    update_adjacency,
)
from stylegraph.io import TrajectorySet


def test_snapshot_single_edge():
    snap = build_snapshot({0: (0, 0), 1: (5, 0), 2: (50, 0)}, mu=10)
    assert list(snap.edges) == [(0, 1, 5.0)]


def test_snapshot_one_agent_has_no_edges():
    assert not build_snapshot({"a": (1, 2)}, 10).edges


def test_coincident_agents_share_zero_weight_edge():
    snap = build_snapshot({"a": (1, 1), "b": (1, 1)}, mu=1)
    assert list(snap.edges) == [("a", "b", 0.0)]
    state = AdjacencyState.empty(4)
    update_adjacency(state, snap, {"a": 2.0, "b": 1.0}, 0)
    assert state.A[0, 1] == MIN_WEIGHT  # still registers as an edge


def test_snapshot_rejects_bad_inputs():
    with pytest.raises(DomainError):
        build_snapshot({"a": (0, 0)}, mu=0)
    with pytest.raises(DomainError):
        build_snapshot({"a": (np.nan, 0)}, mu=1)


def test_faster_vehicle_records_encounter():
    state = AdjacencyState.empty(4)
    update_adjacency(state, GraphSnapshot(("a", "b"), [("a", "b", 3.0)], 0), {"a": 10.0, "b": 5.0}, 0)
    assert state.A[0, 1] == state.A[1, 0] == 3.0
    assert state.degree("a") == state.degree("b") == 1


def test_reobserved_edge_keeps_first_weight():
    state = AdjacencyState.empty(4)
    update_adjacency(state, GraphSnapshot(("a", "b"), [("a", "b", 3.0)], 0), {"a": 10.0, "b": 5.0}, 0)
    update_adjacency(state, GraphSnapshot(("a", "b"), [("a", "b", 7.0)], 1), {"a": 10.0, "b": 5.0}, 1)
    assert state.A[0, 1] == 3.0


def test_equal_speeds_insert_nothing():
    state = AdjacencyState.empty(4)
    update_adjacency(state, GraphSnapshot(("a", "b"), [("a", "b", 3.0)], 0), {"a": 5.0, "b": 5.0}, 0)
    assert state.A[0, 1] == 0.0
    update_adjacency(state, GraphSnapshot(("a", "b"), [("a", "b", 4.0)], 1), {"a": 6.0, "b": 5.0}, 1)
    assert state.A[0, 1] == 4.0  # re-evaluated on the next frame


def test_capacity_error_when_frame_exceeds_capacity():
    state = AdjacencyState.empty(2)
    with pytest.raises(CapacityError):
        update_adjacency(state, build_snapshot({"a": (0, 0), "b": (50, 0), "c": (99, 0)}), {}, 0)


def test_unknown_agent_lookup():
    with pytest.raises(AgentLookupError):
        AdjacencyState.empty(2).row("ghost")


def test_speed_uniform_motion():
    ts = episode({"a": [(0, 0, 0), (1, 1, 0), (2, 2, 0)]}, frame_rate=1.0)
    assert estimate_speed(ts, "a", 2) == 1.0


def test_speed_single_observation_is_zero():
    ts = episode({"a": [(0, 4, 4)]}, frame_rate=1.0)
    assert estimate_speed(ts, "a", 0) == 0.0


def test_speed_backward_window():
    ts = episode({"a": [(0, 0, 0), (1, 0, 0), (2, 3, 0)]}, frame_rate=1.0)
    assert estimate_speed(ts, "a", 2) == 1.5


def test_speed_unknown_agent():
    ts = episode({"a": [(0, 0, 0)]})
    with pytest.raises(AgentLookupError):
        estimate_speed(ts, "b", 0)


def _final_state(ts, **kw):
    state = None
    for _, state, _ in replay_adjacency(ts, **kw):
        pass
    return state


def _same(a: AdjacencyState, b: AdjacencyState) -> bool:
    return np.array_equal(a.A, b.A) and a.row_of == b.row_of and a.epoch == b.epoch


def test_incremental_equals_rebuild_fixed_episode():
    ts = random_episode(np.random.default_rng(5), 5, 50)
    assert _same(_final_state(ts), rebuild_reference(ts))


def test_empty_trajectory_is_identity():
    ts = TrajectorySet({}, 10.0, {})
    state = rebuild_reference(ts, capacity=5)
    assert np.array_equal(state.A, np.eye(5))
    assert list(replay_adjacency(ts, capacity=5)) == []


def test_overflow_reinitialises_in_both_paths():
    # a fresh agent every frame, nobody ever leaves within dwell: the 4-row matrix overflows
    tracks = {f"v{i}": [(t, 3.0 * i + t * (i % 3), 0.0) for t in range(i, i + 4)] for i in range(10)}
    ts = episode(tracks)
    epochs = []
    for t, state, _ in replay_adjacency(ts, capacity=4, dwell=10):
        ref = rebuild_reference(ts, capacity=4, dwell=10, upto=t)
        assert _same(state, ref), t
        epochs.append(state.epoch)
    assert max(epochs) >= 1


def test_dwell_releases_and_reuses_rows():
    tracks = {"a": [(t, 100.0, 0) for t in range(3)], "b": [(t, 0.0, 0) for t in range(20)],
              "c": [(t, -100.0, 0) for t in range(15, 20)]}
    ts = episode(tracks)
    state = _final_state(ts, capacity=2, dwell=5)
    assert state.epoch == 0  # a's row was freed in time, no overflow
    assert state.row_of["c"] == 0


@given(st.integers(0, 2**31 - 1))
def test_state_invariants_hold_every_frame(seed):
    ts = random_episode(np.random.default_rng(seed), 6, 30)
    prev_nnz, prev_epoch = -1, 0
    for _, state, snap in replay_adjacency(ts, capacity=8, dwell=3):
        A = state.A
        assert np.array_equal(A, A.T)
        assert np.all(np.diag(A) == 1.0)
        nnz = np.count_nonzero(A - np.diag(np.diag(A)))
        if state.epoch == prev_epoch:
            assert nnz >= prev_nnz
        prev_nnz, prev_epoch = nnz, state.epoch
        for i, j, w in snap.edges:
            assert i != j and 0 <= w < state.mu


@given(st.lists(st.tuples(st.floats(-20, 20), st.floats(-20, 20)), min_size=1, max_size=8))
def test_snapshot_predicate_symmetric_and_loop_free(pts):
    positions = {i: p for i, p in enumerate(pts)}
    snap = build_snapshot(positions, 10.0)
    forward = {(i, j) for i, j, _ in snap.edges}
    flipped = build_snapshot(dict(reversed(list(positions.items()))), 10.0)
    assert {frozenset(e[:2]) for e in flipped.edges} == {frozenset(e) for e in forward}
    assert all(i != j for i, j in forward)
