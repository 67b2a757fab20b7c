#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
SIMULATION ENGINE TEST
Olay döngüsü, adım/ödül sözleşmesi, kesinti ve timeout muhasebesi,
ve 2-node kaba kuvvet oracle karşılaştırması
"""

import itertools
import json
import math

import pytest

from spot_scheduler.baseline_schedulers import make_scheduler
from spot_scheduler.cluster_model import ClusterSpec, NodeSpec, PricingClass, load_cluster, with_interruption_rate
from spot_scheduler.errors import ConfigurationError, InvalidActionError, InvalidStateError
from spot_scheduler.sim_engine import (
    EnvConfig,
    Event,
    EventKind,
    KIND_PRIORITY,
    SchedulingEnvironment,
    run_episode,
)
from spot_scheduler.workflow_model import (
    EdgeSpec,
    TaskSpec,
    WorkflowOutcome,
    WorkflowSpec,
    computation_time,
    task_cost,
)
from spot_scheduler.workload_generator import WorkloadConfig, generate

OD = PricingClass.ON_DEMAND
SPOT = PricingClass.SPOT


def _cluster(nodes, rate_per_hour=0.0, downtime=300.0):
    return ClusterSpec(nodes=nodes, bandwidth_mbps=100.0, interruption_rate_per_hour=rate_per_hour,
                       interruption_downtime_s=downtime)


def _single(wf_id, work=100.0, cpu=1.0, arrival=0.0, timeout=math.inf):
    return WorkflowSpec(wf_id, [TaskSpec('t', cpu, 1.0, work)], arrival_time=arrival, timeout=timeout)


def _quiet_default_cluster():
    return with_interruption_rate(load_cluster(), 0.0)


def test_event_order_uses_kind_priority():
    events = [
        Event(5.0, KIND_PRIORITY[EventKind.WORKFLOW_TIMEOUT], 0, EventKind.WORKFLOW_TIMEOUT),
        Event(5.0, KIND_PRIORITY[EventKind.WORKFLOW_ARRIVAL], 1, EventKind.WORKFLOW_ARRIVAL),
        Event(5.0, KIND_PRIORITY[EventKind.TASK_FINISH], 2, EventKind.TASK_FINISH),
        Event(4.0, KIND_PRIORITY[EventKind.NODE_INTERRUPT], 3, EventKind.NODE_INTERRUPT),
        Event(5.0, KIND_PRIORITY[EventKind.NODE_REVIVE], 4, EventKind.NODE_REVIVE),
    ]
    kinds = [e.kind for e in sorted(events)]
    assert kinds == [EventKind.NODE_INTERRUPT, EventKind.TASK_FINISH, EventKind.NODE_REVIVE,
                     EventKind.WORKFLOW_ARRIVAL, EventKind.WORKFLOW_TIMEOUT]


def test_single_task_episode():
    env = SchedulingEnvironment(_quiet_default_cluster())
    obs = env.reset([_single('wf-1')], seed=0)
    assert obs.workflow_id == 'wf-1' and obs.task.id == 't'
    assert obs.time == 0.0
    assert [v.node_id for v in obs.nodes] == [n.id for n in env.cluster.nodes]

    obs, reward, done = env.step('spot-large-1')
    assert obs is None and done and env.done
    assert reward == pytest.approx(-(50 * 0.033 / 3600), rel=1e-12)
    assert reward == pytest.approx(-4.5833e-4, rel=1e-4)

    stats = env.episode_stats()
    assert stats.completed == 1 and stats.submitted == 1
    wf = stats.workflows['wf-1']
    assert wf.makespan == 50.0
    assert wf.cost == pytest.approx(50 * 0.033 / 3600)
    assert stats.mean_execution_time == 50.0


def test_zero_work_task_has_zero_reward():
    env = SchedulingEnvironment(_quiet_default_cluster())
    env.reset([_single('wf-0', work=0.0)], seed=0)
    _, reward, done = env.step('od-large-1')
    assert reward == 0 and done


def test_step_after_done_is_invalid():
    env = SchedulingEnvironment(_quiet_default_cluster())
    env.reset([_single('wf-1')], seed=0)
    env.step('od-large-1')
    with pytest.raises(InvalidStateError):
        env.step('od-large-1')


def test_reset_rejects_bad_workloads():
    env = SchedulingEnvironment(_quiet_default_cluster())
    with pytest.raises(ConfigurationError):
        env.reset([], seed=0)
    with pytest.raises(ConfigurationError):
        env.reset([_single('huge', cpu=64.0)], seed=0)
    with pytest.raises(ConfigurationError):
        env.reset([_single('dup'), _single('dup')], seed=0)


def test_invalid_action_leaves_state_unchanged():
    cluster = _cluster([
        NodeSpec('small', 't4g.large', 1.0, 8.0, 1.0, OD, 0.0672),
        NodeSpec('big', 't4g.xlarge', 4.0, 16.0, 4.0, OD, 0.1344),
    ])
    env = SchedulingEnvironment(cluster)
    obs = env.reset([_single('wf', cpu=2.0)], seed=0)
    assert obs.feasible_node_ids == ['big']

    for bad in ('small', 'ghost'):
        with pytest.raises(InvalidActionError):
            env.step(bad)
        assert env.observation() == obs
    _, _, done = env.step('big')
    assert done


def test_same_instant_arrivals_offer_in_workflow_id_order():
    env = SchedulingEnvironment(_quiet_default_cluster())
    obs = env.reset([_single('wf-b'), _single('wf-a')], seed=0)
    assert obs.workflow_id == 'wf-a' and obs.time == 0.0
    obs, _, _ = env.step('od-large-1')
    assert obs.workflow_id == 'wf-b'


def test_simultaneous_finishes_release_nodes_before_the_next_offer():
    cluster = _cluster([
        NodeSpec('n1', 't4g.large', 1.0, 8.0, 1.0, OD, 3.6),
        NodeSpec('n2', 't4g.large', 1.0, 8.0, 1.0, OD, 3.6),
    ])
    wf_p = WorkflowSpec('wf-p', [TaskSpec('a', 1, 1, 10.0), TaskSpec('c', 1, 1, 1.0)], [EdgeSpec('a', 'c', 0.0)])
    wf_q = WorkflowSpec('wf-q', [TaskSpec('b', 1, 1, 10.0)])
    env = SchedulingEnvironment(cluster, EnvConfig(audit=True))
    obs = env.reset([wf_p, wf_q], seed=0)
    assert (obs.workflow_id, obs.task.id) == ('wf-p', 'a')
    obs, _, _ = env.step('n1')
    assert (obs.workflow_id, obs.task.id) == ('wf-q', 'b')
    assert obs.feasible_node_ids == ['n2']
    obs, _, _ = env.step('n2')

    # a ve b aynı anda (t=10) biter, c teklif edilmeden önce iki node da boşalır
    assert (obs.workflow_id, obs.task.id) == ('wf-p', 'c')
    assert obs.time == 10.0
    assert [v.cpu_free for v in obs.nodes] == [1.0, 1.0]
    assert obs.feasible_node_ids == ['n1', 'n2']


def test_failing_scheduler_still_closes_the_trace(tmp_path):
    trace = tmp_path / 'trace.jsonl'

    def broken(obs):
        raise RuntimeError('scheduler crashed')

    with pytest.raises(RuntimeError):
        run_episode(broken, _quiet_default_cluster(), [_single('wf-1')], config=EnvConfig(trace_path=str(trace)))
    records = [json.loads(line) for line in trace.read_text(encoding='utf-8').splitlines()]
    assert records[0]['kind'] == 'workflow_arrival'
    assert records[0]['workflow'] == 'wf-1'


def test_chain_transfer_across_nodes():
    cluster = _cluster([
        NodeSpec('n1', 't4g.large', 2.0, 8.0, 1.0, OD, 3.6),
        NodeSpec('n2', 't4g.large', 2.0, 8.0, 1.0, OD, 3.6),
    ])
    wf = WorkflowSpec('chain', [TaskSpec('a', 1, 1, 10.0), TaskSpec('b', 1, 1, 5.0)],
                      [EdgeSpec('a', 'b', 200.0)])
    plan = {'a': 'n1', 'b': 'n2'}
    env = SchedulingEnvironment(cluster)
    obs = env.reset([wf], seed=0)
    while obs is not None:
        obs, _, _ = env.step(plan[obs.task.id])

    timings = env.task_timings()
    b = timings[('chain', 'b')]
    assert b.max_transfer == 2.0
    assert b.start == 10.0
    assert b.finish == 17.0
    stats = env.episode_stats().workflows['chain']
    assert stats.makespan == 17.0
    assert stats.cost == pytest.approx(15 * 0.001)


def test_colocated_chain_has_no_transfer():
    cluster = _cluster([NodeSpec('n1', 't4g.large', 2.0, 8.0, 1.0, OD, 3.6)])
    wf = WorkflowSpec('chain', [TaskSpec('a', 1, 1, 10.0), TaskSpec('b', 1, 1, 5.0)],
                      [EdgeSpec('a', 'b', 200.0)])
    stats = run_episode(lambda obs: 'n1', cluster, [wf])
    assert stats.workflows['chain'].makespan == 15.0


def test_busy_node_defers_the_offer():
    cluster = _cluster([NodeSpec('only', 't4g.large', 2.0, 8.0, 2.0, OD, 0.0672)])
    env = SchedulingEnvironment(cluster)
    obs = env.reset([_single('w1', cpu=2.0), _single('w2', cpu=2.0)], seed=0)
    assert obs.workflow_id == 'w1'
    obs, _, _ = env.step('only')
    # w2 is held back until w1 releases the node at t=50
    assert obs.workflow_id == 'w2'
    assert obs.time == 50.0
    env.step('only')
    assert env.task_timings()[('w2', 't')].wait == 0.0
    assert env.episode_stats().workflows['w2'].makespan == 100.0


def test_queue_when_busy_fifo_wait():
    cluster = _cluster([NodeSpec('only', 't4g.large', 2.0, 8.0, 2.0, OD, 0.0672)])
    env = SchedulingEnvironment(cluster, EnvConfig(queue_when_busy=True, audit=True))
    obs = env.reset([_single('w1', cpu=2.0), _single('w2', cpu=2.0, arrival=1.0)], seed=0)
    obs, _, _ = env.step('only')
    assert obs.workflow_id == 'w2' and obs.time == 1.0
    only = obs.nodes[0]
    assert only.feasible and only.cpu_free == 0.0
    assert only.estimated_wait == pytest.approx(49.0)
    env.step('only')

    late = env.task_timings()[('w2', 't')]
    assert late.start == 1.0
    assert late.wait == 49.0
    assert late.finish == 100.0


def test_timeout_fails_workflow_with_partial_cost():
    node = NodeSpec('slow', 't4g.large', 2.0, 8.0, 1.0, OD, 3.6)
    stats = run_episode(lambda obs: 'slow', _cluster([node]), [_single('late', work=100.0, timeout=10.0)])
    wf = stats.workflows['late']
    assert wf.outcome is WorkflowOutcome.FAILED_TIMEOUT
    assert stats.failed_timeout == 1 and stats.completed == 0
    assert wf.cost == pytest.approx(10 * 0.001)
    assert stats.mean_execution_time == 0.0


def test_interruption_fails_workflow():
    cluster = _cluster([NodeSpec('spot', 't4g.large', 2.0, 8.0, 2.0, SPOT, 0.033)], rate_per_hour=3600.0)
    wf = WorkflowSpec('victim', [TaskSpec('a', 1, 1, 1000.0), TaskSpec('b', 1, 1, 1.0)], [EdgeSpec('a', 'b')])
    env = SchedulingEnvironment(cluster, EnvConfig(audit=True))
    obs = env.reset([wf], seed=5)
    obs, _, _ = env.step('spot')
    assert obs is None

    stats = env.episode_stats()
    assert stats.failed_interrupted == 1
    assert stats.workflows['victim'].outcome is WorkflowOutcome.FAILED_INTERRUPTED
    partial = env.task_timings()[('victim', 'a')]
    assert partial.compute < 500.0
    assert stats.total_cost < task_cost(500.0, 0.033 / 3600)


def test_no_interruptions_everything_completes():
    cluster = _quiet_default_cluster()
    workload = generate(WorkloadConfig(count=10, timeout=1e9, seed=4))
    workload = [WorkflowSpec(w.id, w.tasks, w.edges, w.arrival_time, math.inf) for w in workload]
    stats = run_episode(make_scheduler('random', 4), cluster, workload, seed=4)
    assert stats.completed == 10
    assert stats.failed_interrupted == 0 and stats.failed_timeout == 0


def test_arrivals_are_all_queued(tmp_path):
    trace = tmp_path / 'trace.jsonl'
    workload = generate(WorkloadConfig(count=10, seed=2))
    run_episode(make_scheduler('k8-default'), _quiet_default_cluster(), workload, seed=2,
                config=EnvConfig(trace_path=str(trace)))
    records = [json.loads(line) for line in trace.read_text(encoding='utf-8').splitlines()]
    assert sum(1 for r in records if r['kind'] == 'workflow_arrival') == 10
    assert list(records[0]) == ['time', 'kind', 'workflow', 'task', 'node']
    assert records[-1]['kind'] == 'episode_done'
    times = [r['time'] for r in records]
    assert times == sorted(times)


def test_determinism_with_interruptions():
    cluster = load_cluster()
    workload = generate(WorkloadConfig(count=8, seed=9))
    a = run_episode(make_scheduler('random', 9), cluster, workload, seed=9)
    b = run_episode(make_scheduler('random', 9), cluster, workload, seed=9)
    assert a == b


def test_accounting_over_seeded_random_episodes():
    cluster = load_cluster()
    for seed in range(100):
        workload = generate(WorkloadConfig(seed=seed))
        env = SchedulingEnvironment(cluster, EnvConfig(audit=True))
        scheduler = make_scheduler('random', seed)
        obs = env.reset(workload, seed)
        while obs is not None:
            obs, _, _ = env.step(scheduler(obs))

        timings = env.task_timings()
        stats = env.episode_stats()
        assert stats.submitted == len(workload)
        for (wf_id, _), t in timings.items():
            expected = t.start + t.compute + t.wait + t.max_transfer
            assert t.finish == pytest.approx(expected, rel=1e-9, abs=1e-12)
            assert min(t.start, t.compute, t.wait, t.max_transfer, t.cost) >= 0

        for wf in workload:
            wf_stats = stats.workflows[wf.id]
            own = [t for (w, _), t in timings.items() if w == wf.id]
            if wf_stats.outcome is WorkflowOutcome.COMPLETED:
                assert len(own) == len(wf.tasks)
                assert wf_stats.makespan == max(t.finish for t in own)
                for edge in wf.edges:
                    assert timings[(wf.id, edge.dst)].start >= timings[(wf.id, edge.src)].finish
            assert wf_stats.cost == pytest.approx(math.fsum(t.cost for t in own), rel=1e-9, abs=1e-15)

        assert stats.total_cost == pytest.approx(math.fsum(s.cost for s in stats.workflows.values()),
                                                 rel=1e-9, abs=1e-15)


def test_greedy_cost_matches_brute_force_oracle():
    nodes = [
        NodeSpec('cheap-slow', 't4g.large', 2.0, 8.0, 1.0, OD, 0.036),
        NodeSpec('fast', 't4g.xlarge', 4.0, 16.0, 4.0, OD, 0.1),
    ]
    cluster = _cluster(nodes)
    works = {'a': 30.0, 'b': 80.0, 'c': 12.5}
    wf = WorkflowSpec('chain3', [TaskSpec(t, 1, 1, w) for t, w in works.items()],
                      [EdgeSpec('a', 'b', 100.0), EdgeSpec('b', 'c', 100.0)])

    rates = {n.id: n.rate for n in nodes}
    uc = {n.id: n.price_per_hour / 3600 for n in nodes}

    def cost_of(assignment):
        return math.fsum(task_cost(computation_time(works[t], rates[n]), uc[n]) for t, n in assignment.items())

    oracle = min(cost_of(dict(zip(works, combo))) for combo in itertools.product(rates, repeat=3))

    def greedy(obs):
        feasible = [v for v in obs.nodes if v.feasible]
        return min(feasible, key=lambda v: computation_time(obs.task.work, rates[v.node_id]) * v.unit_cost).node_id

    stats = run_episode(greedy, cluster, [wf])
    assert stats.total_cost == oracle

    # every enumerated assignment driven through the environment costs what the oracle says
    for combo in itertools.product(rates, repeat=3):
        plan = dict(zip(works, combo))
        assert run_episode(lambda obs: plan[obs.task.id], cluster, [wf]).total_cost == cost_of(plan)


if __name__ == "__main__":
    import tempfile
    from pathlib import Path

    print("=" * 60)
    print("SIMULATION ENGINE TEST")
    print("=" * 60)
    for test in (test_event_order_uses_kind_priority, test_single_task_episode, test_zero_work_task_has_zero_reward,
                 test_step_after_done_is_invalid, test_reset_rejects_bad_workloads,
                 test_invalid_action_leaves_state_unchanged, test_chain_transfer_across_nodes,
                 test_colocated_chain_has_no_transfer, test_busy_node_defers_the_offer,
                 test_queue_when_busy_fifo_wait, test_timeout_fails_workflow_with_partial_cost,
                 test_interruption_fails_workflow, test_no_interruptions_everything_completes,
                 test_determinism_with_interruptions, test_accounting_over_seeded_random_episodes,
                 test_greedy_cost_matches_brute_force_oracle, test_same_instant_arrivals_offer_in_workflow_id_order,
                 test_simultaneous_finishes_release_nodes_before_the_next_offer):
        test()
        print(f"✅ {test.__name__}")
    with tempfile.TemporaryDirectory() as tmp:
        test_arrivals_are_all_queued(Path(tmp))
        print("✅ test_arrivals_are_all_queued")
    with tempfile.TemporaryDirectory() as tmp:
        test_failing_scheduler_still_closes_the_trace(Path(tmp))
        print("✅ test_failing_scheduler_still_closes_the_trace")
