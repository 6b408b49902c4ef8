import pytest
from hypothesis import given
from hypothesis import strategies as st

from audit import audited_run
from crmsim import BASELINE, FIXED, FTKN, RunSpec, default_params, run
from crmsim.mac import cw_bounds, on_backoff_slot, on_collision_or_timeout, on_success, select_cw_class
from crmsim.topology import Topology, TrafficSpec

P = default_params()


def test_cw_bounds():
    assert cw_bounds("low", P) == (7, 15)
    assert cw_bounds("general", P) == (15, 31)
    assert cw_bounds("high", P) == (31, 63)
    assert cw_bounds("baseline", P) == (7, 15)


def test_select_cw_class():
    assert select_cw_class(2.0, True, P) == "low"  # low wins the tie with high
    assert select_cw_class(1.5, True, P) == "high"
    assert select_cw_class(1.0, False, P) == "general"
    assert select_cw_class(None, False, P) == "general"
    assert select_cw_class(float("inf"), False, P) == "low"


def test_backoff_slot():
    assert on_backoff_slot(3, False) == (2, False)
    assert on_backoff_slot(3, True) == (3, False)
    assert on_backoff_slot(0, True) == (0, True)


def test_collision_growth_and_drop():
    cw, retries = 7, 0
    seen = []
    for _ in range(P.retry_limit):
        cw, retries, dropped = on_collision_or_timeout(cw, retries, "baseline", P)
        assert not dropped
        seen.append(cw)
    assert seen[:2] == [15, 15]
    cw, retries, dropped = on_collision_or_timeout(cw, retries, "baseline", P)
    assert dropped and retries == 0 and cw == 7
    assert on_success("general", P) == 15


@given(st.sampled_from(["low", "general", "high", "baseline"]), st.integers(0, 7))
def test_cw_stays_inside_class_bounds(cls, retries):
    lo, hi = cw_bounds(cls, P)
    cw, _, _ = on_collision_or_timeout(lo, retries, cls, P)
    assert lo <= cw <= hi


def clique(n=3):
    return Topology([(10.0 * i, 0.0) for i in range(n)])


def ring_flows(n):
    return [(i, (i + 1) % n) for i in range(n)]


@pytest.mark.parametrize("variant", [FIXED, FTKN])
def test_reserved_exchanges_never_collide_in_a_clique(variant):
    spec = RunSpec(clique(3), TrafficSpec(), variant, duration_us=1_000_000, flows=ring_flows(3))
    report, audit, _ = audited_run(spec, 1)
    assert sum(report.reservations_per_node) > 0
    assert report.reserved_collisions == 0
    assert report.silencing_violations == 0
    assert audit.violations == []
    assert report.cw_rule_violations == 0


def test_baseline_sends_no_reservation_instructions():
    spec = RunSpec(clique(3), TrafficSpec(), BASELINE, duration_us=500_000, flows=ring_flows(3))
    report, audit, _ = audited_run(spec, 2)
    assert audit.frames
    assert audit.rsi_frames() == []
    assert sum(report.reservations_per_node) == 0
    assert not any(f[4] for f in audit.frames)


def test_reservation_variants_announce_their_reservations():
    spec = RunSpec(clique(3), TrafficSpec(), FIXED, duration_us=500_000, flows=ring_flows(3))
    report, audit, _ = audited_run(spec, 2)
    assert len(audit.rsi_frames()) >= sum(report.reservations_per_node) > 0


def test_fixed_offset_is_constant():
    spec = RunSpec(clique(2), TrafficSpec(), FIXED, duration_us=300_000, flows=[(0, 1)])
    _, trace = run(spec, 0, trace=True)
    offsets = {rec[6] for rec in trace.records if rec[0] == "reserve"}
    assert offsets == {P.fixed_offset_us}
