#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
WORKFLOW MODEL TEST
Zamanlama ve maliyet denklemleri, DAG yardımcıları, workflow dokümanları
"""

import math

import pytest

from spot_scheduler.errors import (
    ConfigurationError,
    CycleError,
    DanglingReferenceError,
    InvalidArgumentError,
)
from spot_scheduler.workflow_model import (
    EdgeSpec,
    TaskSpec,
    TaskTiming,
    WorkflowOutcome,
    WorkflowSpec,
    computation_time,
    load_workflow,
    ready_tasks,
    save_workflow,
    task_cost,
    task_timing,
    transmission_time,
    validate_dag,
    workflow_from_dict,
    workflow_stats,
    workflow_to_dict,
)


def _task(task_id, work=10.0):
    return TaskSpec(task_id, 1.0, 1.0, work)


def _diamond():
    return WorkflowSpec(
        id='wf-diamond',
        tasks=[_task('a'), _task('b'), _task('c'), _task('d')],
        edges=[EdgeSpec('a', 'b'), EdgeSpec('a', 'c'), EdgeSpec('b', 'd'), EdgeSpec('c', 'd')],
    )


def test_computation_time():
    assert computation_time(100, 2) == 50
    assert computation_time(0, 5) == 0
    assert computation_time(7, 7) == 1
    with pytest.raises(InvalidArgumentError):
        computation_time(10, 0)
    with pytest.raises(InvalidArgumentError):
        computation_time(10, -1)


def test_transmission_time():
    assert transmission_time(200, 100) == 2
    assert transmission_time(0, 100) == 0
    assert transmission_time(500, 100, same_node=True) == 0
    with pytest.raises(InvalidArgumentError):
        transmission_time(10, 0)


def test_times_scale_linearly_with_numerator():
    for k in (0.0, 0.5, 3.0):
        assert computation_time(k * 40, 4) == pytest.approx(k * computation_time(40, 4))
        assert transmission_time(k * 40, 4) == pytest.approx(k * transmission_time(40, 4))


def test_task_timing_examples():
    timing = task_timing(10, 5, 2, [1, 3])
    assert timing.max_transfer == 3
    assert timing.delay == 10
    assert timing.finish == 20

    empty = task_timing(0, 0, 0, [])
    assert (empty.delay, empty.finish) == (0, 0)

    single = task_timing(100, 50, 0, [7])
    assert (single.delay, single.finish) == (57, 157)


def test_task_timing_rejects_negative_inputs():
    with pytest.raises(InvalidArgumentError):
        task_timing(-1, 0, 0)
    with pytest.raises(InvalidArgumentError):
        task_timing(0, 0, 0, [-0.5])


def test_task_cost_from_hourly_prices():
    assert task_cost(3600, 0.033 / 3600) == pytest.approx(0.033, rel=1e-12)
    assert task_cost(0, 123.0) == 0
    assert task_cost(1800, 0.2688 / 3600) == pytest.approx(0.1344, rel=1e-12)


def test_workflow_stats():
    stats = workflow_stats([
        TaskTiming(0, 5, 0, 0, 5, 20, 0.01),
        TaskTiming(0, 5, 0, 0, 5, 35, 0.02),
    ])
    assert stats.makespan == 35
    assert stats.cost == pytest.approx(0.03)
    assert stats.outcome is WorkflowOutcome.COMPLETED

    c = 0.004
    parallel = workflow_stats({t: TaskTiming(0, 1, 0, 0, 1, f, c) for t, f in (('x', 10), ('y', 12), ('z', 11))})
    assert parallel.makespan == 12
    assert parallel.cost == pytest.approx(3 * c)

    empty = workflow_stats([], WorkflowOutcome.FAILED_TIMEOUT)
    assert (empty.makespan, empty.cost) == (0.0, 0.0)
    assert empty.execution_time == 0.0


def test_execution_time_counts_from_arrival():
    stats = workflow_stats([TaskTiming(30, 10, 0, 0, 10, 40, 0.0)], arrival_time=25.0)
    assert stats.execution_time == 15.0


def test_ready_tasks():
    wf = _diamond()
    assert ready_tasks(wf, set()) == ['a']
    assert ready_tasks(wf, {'a'}) == ['b', 'c']
    assert ready_tasks(wf, {'a'}, running={'b'}) == ['c']
    assert ready_tasks(wf, {'a', 'b', 'c', 'd'}) == []
    with pytest.raises(InvalidArgumentError):
        ready_tasks(wf, {'zzz'})


def test_ready_tasks_fixpoint_visits_every_task_once():
    wf = _diamond()
    completed, order = set(), []
    while True:
        ready = ready_tasks(wf, completed)
        if not ready:
            break
        order.extend(ready)
        completed.update(ready)
    assert sorted(order) == ['a', 'b', 'c', 'd']
    assert len(order) == len(set(order))


def test_validate_dag():
    chain = WorkflowSpec('chain', [_task('a'), _task('b'), _task('c')], [EdgeSpec('a', 'b'), EdgeSpec('b', 'c')])
    assert validate_dag(chain)

    loop = WorkflowSpec('loop', [_task('a'), _task('b')], [EdgeSpec('a', 'b'), EdgeSpec('b', 'a')])
    with pytest.raises(CycleError) as info:
        validate_dag(loop)
    assert info.value.edge in {('a', 'b'), ('b', 'a')}

    dangling = WorkflowSpec('dangling', [_task('a')], [EdgeSpec('a', 'ghost')])
    with pytest.raises(DanglingReferenceError):
        validate_dag(dangling)


def test_spec_validation():
    with pytest.raises(InvalidArgumentError):
        TaskSpec('t', 0, 1, 1)
    with pytest.raises(InvalidArgumentError):
        TaskSpec('t', 1, 1, -1)
    with pytest.raises(InvalidArgumentError):
        EdgeSpec('a', 'a')
    with pytest.raises(InvalidArgumentError):
        WorkflowSpec('w', [], timeout=0)


def test_workflow_document(tmp_path):
    wf = WorkflowSpec('wf-doc', [_task('a', 5.0), _task('b', 7.5)], [EdgeSpec('a', 'b', 20.0)],
                      arrival_time=3.0)
    path = save_workflow(wf, tmp_path / 'wf.json')
    loaded = load_workflow(path)
    assert loaded == wf
    assert math.isinf(loaded.timeout)
    assert workflow_to_dict(loaded)['timeout'] is None


def test_workflow_document_rejects_unknown_fields():
    document = workflow_to_dict(_diamond())
    document['priority'] = 3
    with pytest.raises(ConfigurationError):
        workflow_from_dict(document)

    document = workflow_to_dict(_diamond())
    document['tasks'][0]['gpu'] = 1
    with pytest.raises(ConfigurationError):
        workflow_from_dict(document)


def test_workflow_document_rejects_non_numeric_values():
    document = workflow_to_dict(_diamond())
    document['tasks'][0]['work'] = 'abc'
    with pytest.raises(ConfigurationError) as info:
        workflow_from_dict(document)
    assert 'abc' in str(info.value)

    document = workflow_to_dict(_diamond())
    document['arrival_time'] = 'soon'
    with pytest.raises(ConfigurationError):
        workflow_from_dict(document)


if __name__ == "__main__":
    import tempfile
    from pathlib import Path

    print("=" * 60)
    print("WORKFLOW MODEL TEST")
    print("=" * 60)
    for test in (test_computation_time, test_transmission_time, test_times_scale_linearly_with_numerator,
                 test_task_timing_examples, test_task_timing_rejects_negative_inputs,
                 test_task_cost_from_hourly_prices, test_workflow_stats, test_execution_time_counts_from_arrival,
                 test_ready_tasks, test_ready_tasks_fixpoint_visits_every_task_once, test_validate_dag,
                 test_spec_validation, test_workflow_document_rejects_unknown_fields,
                 test_workflow_document_rejects_non_numeric_values):
        test()
        print(f"✅ {test.__name__}")
    with tempfile.TemporaryDirectory() as tmp:
        test_workflow_document(Path(tmp))
        print("✅ test_workflow_document")
