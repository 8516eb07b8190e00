import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from delayabsorb.errors import DataError
from delayabsorb.ingest import load_dataset
from delayabsorb.synth import (SynthConfig, generate_network, observed_delay, propagate_chain, propagation_share,
                               read_buffers, read_truth, truth_absorption_rate)


def test_zero_buffers_pass_everything_on():
    assert propagate_chain([5, 3, 0], [0, 0]) == [5, 8, 8]


def test_single_buffer_recurrence():
    assert propagate_chain([20, 0], [12]) == [20, 8]


def test_unbounded_buffers_leave_only_new_delay():
    assert propagate_chain([30, 4, 0, 12], [math.inf] * 3) == [30, 4, 0, 12]


def test_en_route_changes_inbound_delay():
    assert propagate_chain([10, 0], [5], enroute=[20, 0]) == [10, 25]


@settings(max_examples=200, deadline=None)
@given(n=st.integers(0, 120), inb=st.integers(-20, 200), b=st.integers(0, 120),
       scenario=st.sampled_from(["propagated_first", "new_first", "proportional"]))
def test_propagation_only_adds(n, inb, b, scenario):
    o = observed_delay(n, inb, b, scenario)
    # only the default scenario keeps the newly formed delay intact
    assert o >= (n if scenario == "propagated_first" else max(0, n - b))
    assert o <= n + max(0, inb) + 1e-9


def test_config_guards():
    with pytest.raises(DataError, match="infeasible config"):
        SynthConfig(handling_range=(0, 0), buffer_range=(0, 10), buffer_jitter=0).validate()
    with pytest.raises(DataError):
        SynthConfig(disruption_prob=1.5).validate()
    with pytest.raises(DataError):
        SynthConfig(n_airports=1).validate()
    with pytest.raises(DataError, match="no eligible legs"):
        truth_absorption_rate([])


def test_huge_buffers_absorb_all_inbound_delay():
    net = generate_network(SynthConfig(n_tails=30, buffer_range=(400, 400), buffer_jitter=0, seed=1,
                                       weather_slowdown_min=0.0, legs_per_day=8))
    legs = [leg for leg in net.truth if leg.inherited_delay_min is not None]
    assert legs and all(leg.propagated_min == 0 for leg in legs)
    assert all(leg.record.dep_delay_min == leg.new_delay_min for leg in net.truth)


def test_zero_buffers_absorb_nothing():
    net = generate_network(SynthConfig(n_tails=30, buffer_range=(0, 0), buffer_jitter=0, seed=1))
    legs = [leg for leg in net.truth if leg.eligible]
    assert legs and all(leg.propagated_min == leg.inherited_delay_min for leg in legs)


def test_rate_counts_flags(small_network):
    elig = [leg for leg in small_network.truth if leg.eligible]
    assert truth_absorption_rate(elig) == sum(leg.absorbed_truth for leg in elig) / len(elig)
    assert truth_absorption_rate([leg for leg in elig if leg.absorbed_truth]) == 1.0
    assert truth_absorption_rate([leg for leg in elig if not leg.absorbed_truth]) == 0.0


def test_truth_recomputes_from_hidden_fields():
    net = generate_network(SynthConfig(n_tails=300, seed=7))
    flags = []
    prev = {}
    for leg in net.truth:
        r = leg.record
        p = prev.get(r.tail_number)
        assert r.dep_delay_min >= leg.new_delay_min
        if p is None:
            assert leg.inherited_delay_min is None and not leg.eligible
        else:
            inherited = (p.actual_arr - p.sched_arr).total_seconds() / 60
            assert inherited == leg.inherited_delay_min
            assert r.dep_delay_min == leg.new_delay_min + max(0, inherited - leg.effective_buffer_min)
            ground = (r.actual_dep - p.actual_arr).total_seconds() / 60
            eligible = p.actual_arr < r.sched_dep and inherited > 0 and ground <= 300
            assert eligible == leg.eligible
            if eligible:
                flags.append(inherited - r.dep_delay_min >= net.pair_buffers[(r.origin, r.carrier)])
        prev[r.tail_number] = r
    assert truth_absorption_rate(net.truth) == sum(flags) / len(flags)
    assert 0.1 < sum(flags) / len(flags) < 0.9


def test_tail_order_does_not_matter():
    cfg = SynthConfig(n_tails=25, seed=4)
    a = generate_network(cfg)
    b = generate_network(cfg, tail_order=list(range(24, -1, -1)))
    assert a.flights == b.flights and a.truth == b.truth and a.weather == b.weather


def test_chains_are_feasible(small_network):
    by_tail = {}
    for f in small_network.flights:
        by_tail.setdefault(f.tail_number, []).append(f)
    for legs in by_tail.values():
        for a, b in zip(legs, legs[1:]):
            assert a.dest == b.origin and a.sched_arr < b.sched_dep and a.actual_arr < b.actual_dep


def test_written_network_reads_back(small_network, small_network_dir):
    ds = load_dataset(small_network_dir)
    assert ds.flights == small_network.flights
    assert read_buffers(small_network_dir / "buffers.csv") == small_network.pair_buffers
    truth = read_truth(small_network_dir / "truth.csv")
    assert len(truth) == len(small_network.truth)
    assert sum(r["eligible"] == "1" for r in truth) == sum(leg.eligible for leg in small_network.truth)
    assert 0 <= propagation_share(small_network.truth) <= 1
