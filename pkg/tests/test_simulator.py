import pytest

from audit import audited_run
from crmsim import BASELINE, FIXED, FTKN, RunSpec, run
from crmsim.config import ScenarioConfig
from crmsim.topology import Topology, TrafficSpec, make_short_hop

PACKET_BITS = 1500 * 8


def light_pair(variant, rate=200_000, duration_us=5_000_000):
    topo = Topology([(0.0, 0.0), (300.0, 0.0)])
    return RunSpec(topo, TrafficSpec("offered_load", rate), variant, duration_us=duration_us, flows=[(0, 1)])


@pytest.mark.parametrize("variant", [BASELINE, FIXED, FTKN])
def test_light_load_delivers_what_is_offered(variant):
    report, _ = run(light_pair(variant), 0)
    assert report.total_drops == 0
    assert report.generated - report.delivered <= 2
    assert report.end_to_end_throughput_bits_per_s == pytest.approx(report.delivered * PACKET_BITS / 5.0)
    # Poisson arrivals at 200 kb/s for 5 s: about 83 packets
    assert 60 <= report.generated <= 110
    assert report.mean_end_to_end_delay_us < 10_000


def hidden_pair(rts_cts):
    topo = Topology([(0.0, 0.0), (600.0, 0.0), (1200.0, 0.0)])
    return RunSpec(topo, TrafficSpec(), BASELINE, duration_us=1_000_000, rts_cts=rts_cts, flows=[(0, 1), (2, 1)])


def test_hidden_terminals_collide_without_rts_cts():
    plain, _ = run(hidden_pair(False), 0)
    assert plain.collisions > 0
    protected, _ = run(hidden_pair(True), 0)
    assert protected.delivered > plain.delivered


@pytest.mark.parametrize("variant", [BASELINE, FIXED, FTKN])
def test_energy_partition_and_conservation(variant):
    topo, traffic = make_short_hop(4, 0)
    spec = RunSpec(topo, traffic, variant, duration_us=1_000_000)
    report, audit, _ = audited_run(spec, 3)
    for tx, rx, sl in zip(report.tx_time_us, report.rx_listen_time_us, report.sleep_time_us):
        assert tx + rx + sl == 1_000_000
    assert report.conserved()
    for f in report.flows:
        assert f.generated == f.delivered + f.dropped_buffer + f.dropped_retry + f.live
    assert audit.violations == []
    assert report.silencing_violations == 0
    if variant == BASELINE:
        assert sum(report.sleep_time_us) == 0
    else:
        assert sum(report.sleep_time_us) > 0


def test_same_seed_same_trace_other_seed_differs():
    cfg = ScenarioConfig(topology={"kind": "short_hop"}, duration_s=0.5, variants=[FTKN])
    a, _ = run(cfg, 4)
    b, _ = run(cfg, 4)
    c, _ = run(cfg, 5)
    assert a.trace_hash == b.trace_hash
    assert a.to_dict() == b.to_dict()
    assert a.trace_hash != c.trace_hash


def test_kept_trace_hashes_like_the_streamed_one():
    cfg = ScenarioConfig(topology={"kind": "chain"}, duration_s=0.3, variants=[FIXED])
    a, trace = run(cfg, 1, trace=True)
    b, _ = run(cfg, 1)
    assert a.trace_hash == b.trace_hash
    lines = list(trace.lines())
    assert lines and all(line.startswith("[") for line in lines)


def test_run_spec_validation():
    topo = Topology([(0.0, 0.0), (1.0, 0.0)])
    with pytest.raises(ValueError):
        RunSpec(topo, TrafficSpec(), "aloha")
    with pytest.raises(ValueError):
        RunSpec(topo, TrafficSpec(), BASELINE, duration_us=0)
