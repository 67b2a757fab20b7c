#!/usr/bin/env python3
"""
WORKFLOW MODEL
Workflow DAG'leri ve zamanlama / maliyet denklemleri

- Task timing: TD = CT + WT + max(TT), FT = ST + TD
- Task cost: CC = CT x UC
- Workflow stats: MT = max FT, MC = sum CC
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path

import networkx as nx

from .errors import (
    ConfigurationError,
    CycleError,
    DanglingReferenceError,
    InvalidArgumentError,
)
from .utils import (
    check_fields,
    load_json_document,
    require_nonnegative,
    require_positive,
    write_json_document,
)

logger = logging.getLogger(__name__)


class WorkflowOutcome(str, Enum):
    COMPLETED = 'completed'
    FAILED_INTERRUPTED = 'failed-interrupted'
    FAILED_TIMEOUT = 'failed-timeout'


@dataclass(frozen=True)
class TaskSpec:
    id: str
    cpu_req: float
    mem_req: float
    work: float

    def __post_init__(self):
        require_positive(f"task {self.id} cpu_req", self.cpu_req)
        require_positive(f"task {self.id} mem_req", self.mem_req)
        require_nonnegative(f"task {self.id} work", self.work)


@dataclass(frozen=True)
class EdgeSpec:
    src: str
    dst: str
    data: float = 0.0

    def __post_init__(self):
        if self.src == self.dst:
            raise InvalidArgumentError(f"self-loop edge on task {self.src}")
        require_nonnegative(f"edge {self.src}->{self.dst} data", self.data)


@dataclass(frozen=True)
class WorkflowSpec:
    id: str
    tasks: tuple
    edges: tuple = ()
    arrival_time: float = 0.0
    timeout: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, 'tasks', tuple(self.tasks))
        object.__setattr__(self, 'edges', tuple(self.edges))
        require_nonnegative(f"workflow {self.id} arrival_time", self.arrival_time)
        require_positive(f"workflow {self.id} timeout", self.timeout)

    @cached_property
    def task_map(self):
        return {task.id: task for task in self.tasks}

    @cached_property
    def _preds(self):
        preds = {task.id: [] for task in self.tasks}
        for edge in self.edges:
            if edge.dst in preds:
                preds[edge.dst].append(edge)
        return preds

    @cached_property
    def _succs(self):
        succs = {task.id: [] for task in self.tasks}
        for edge in self.edges:
            if edge.src in succs:
                succs[edge.src].append(edge.dst)
        return succs

    def task(self, task_id):
        try:
            return self.task_map[task_id]
        except KeyError:
            raise DanglingReferenceError(f"workflow {self.id} has no task {task_id!r}")

    def predecessors(self, task_id):
        """Incoming edges of a task (EdgeSpec list)"""
        return self._preds[task_id]

    def successors(self, task_id):
        return self._succs[task_id]


@dataclass(frozen=True)
class TaskTiming:
    start: float
    compute: float
    wait: float
    max_transfer: float
    delay: float
    finish: float
    cost: float = 0.0


@dataclass(frozen=True)
class WorkflowStats:
    makespan: float
    cost: float
    outcome: WorkflowOutcome
    arrival_time: float = 0.0
    task_count: int = 0

    @property
    def execution_time(self):
        """Arrival'dan son task'ın bitişine kadar geçen süre"""
        if self.task_count == 0:
            return 0.0
        return max(0.0, self.makespan - self.arrival_time)


# ---------------------------------------------------------------------------
# Equations
# ---------------------------------------------------------------------------

def computation_time(work, rate):
    """CT = L / F"""
    require_positive('rate', rate)
    require_nonnegative('work', work)
    return work / rate


def transmission_time(data, bandwidth, same_node=False):
    """TT = D / B; co-located tasks transfer for free"""
    require_nonnegative('data', data)
    if same_node:
        return 0.0
    require_positive('bandwidth', bandwidth)
    return data / bandwidth


def task_cost(compute, unit_cost):
    """CC = CT x UC"""
    require_nonnegative('compute', compute)
    require_nonnegative('unit_cost', unit_cost)
    return compute * unit_cost


def task_timing(start, compute, wait, pred_transfers=(), unit_cost=0.0):
    """Build a TaskTiming record; delay = CT + WT + max(TT)"""
    require_nonnegative('start', start)
    require_nonnegative('compute', compute)
    require_nonnegative('wait', wait)
    transfers = list(pred_transfers)
    for tt in transfers:
        require_nonnegative('pred_transfer', tt)
    max_transfer = max(transfers, default=0.0)
    delay = compute + wait + max_transfer
    return TaskTiming(
        start=start,
        compute=compute,
        wait=wait,
        max_transfer=max_transfer,
        delay=delay,
        finish=start + delay,
        cost=task_cost(compute, unit_cost),
    )


def workflow_stats(timings, outcome=WorkflowOutcome.COMPLETED, arrival_time=0.0):
    """MT = max finish, MC = sum of costs over started tasks"""
    records = list(timings.values()) if isinstance(timings, dict) else list(timings)
    if not records:
        return WorkflowStats(makespan=0.0, cost=0.0, outcome=WorkflowOutcome(outcome),
                             arrival_time=arrival_time, task_count=0)
    return WorkflowStats(
        makespan=max(t.finish for t in records),
        cost=math.fsum(t.cost for t in records),
        outcome=WorkflowOutcome(outcome),
        arrival_time=arrival_time,
        task_count=len(records),
    )


# ---------------------------------------------------------------------------
# DAG helpers
# ---------------------------------------------------------------------------

def ready_tasks(workflow, completed, running=()):
    """Tasks whose predecessors are all completed, sorted by id"""
    completed = set(completed)
    running = set(running)
    unknown = (completed | running) - set(workflow.task_map)
    if unknown:
        raise InvalidArgumentError(f"unknown task id(s) for workflow {workflow.id}: {sorted(unknown)}")

    ready = []
    for task in workflow.tasks:
        if task.id in completed or task.id in running:
            continue
        if all(edge.src in completed for edge in workflow.predecessors(task.id)):
            ready.append(task.id)
    return sorted(ready)


def build_graph(workflow):
    """networkx DiGraph of the workflow (edge attribute 'data')"""
    graph = nx.DiGraph()
    graph.add_nodes_from(task.id for task in workflow.tasks)
    for edge in workflow.edges:
        graph.add_edge(edge.src, edge.dst, data=edge.data)
    return graph


def validate_dag(workflow):
    """Endpoints resolve and the edge relation is acyclic"""
    task_ids = set()
    for task in workflow.tasks:
        if task.id in task_ids:
            raise ConfigurationError(f"workflow {workflow.id}: duplicate task id {task.id!r}")
        task_ids.add(task.id)

    for edge in workflow.edges:
        for endpoint in (edge.src, edge.dst):
            if endpoint not in task_ids:
                raise DanglingReferenceError(
                    f"workflow {workflow.id}: edge {edge.src}->{edge.dst} references unknown task {endpoint!r}"
                )

    graph = build_graph(workflow)
    try:
        cycle = nx.find_cycle(graph)
    except nx.NetworkXNoCycle:
        return True
    src, dst = cycle[0][0], cycle[0][1]
    raise CycleError(f"workflow {workflow.id}: cycle through edge {src}->{dst}", edge=(src, dst))


# ---------------------------------------------------------------------------
# Workflow documents
# ---------------------------------------------------------------------------

WORKFLOW_FIELDS = ('id', 'arrival_time', 'timeout', 'tasks', 'edges')
TASK_FIELDS = ('id', 'cpu', 'mem_gb', 'work')
EDGE_FIELDS = ('src', 'dst', 'data_mb')


def workflow_from_dict(document):
    """JSON document -> validated WorkflowSpec"""
    check_fields(document, WORKFLOW_FIELDS, what='workflow')
    wf_id = str(document['id'])
    try:
        tasks = []
        for raw in document['tasks']:
            check_fields(raw, TASK_FIELDS, what=f"workflow {wf_id} task")
            tasks.append(TaskSpec(id=str(raw['id']), cpu_req=float(raw['cpu']),
                                  mem_req=float(raw['mem_gb']), work=float(raw['work'])))
        edges = []
        for raw in document['edges']:
            check_fields(raw, EDGE_FIELDS, what=f"workflow {wf_id} edge")
            edges.append(EdgeSpec(src=str(raw['src']), dst=str(raw['dst']), data=float(raw['data_mb'])))
        timeout = document['timeout']
        workflow = WorkflowSpec(
            id=wf_id,
            tasks=tasks,
            edges=edges,
            arrival_time=float(document['arrival_time']),
            timeout=math.inf if timeout is None else float(timeout),
        )
    except (TypeError, ValueError, InvalidArgumentError) as e:
        raise ConfigurationError(f"workflow {wf_id}: {e}") from e
    validate_dag(workflow)
    return workflow


def workflow_to_dict(workflow):
    return {
        'id': workflow.id,
        'arrival_time': workflow.arrival_time,
        'timeout': None if math.isinf(workflow.timeout) else workflow.timeout,
        'tasks': [
            {'id': t.id, 'cpu': t.cpu_req, 'mem_gb': t.mem_req, 'work': t.work}
            for t in workflow.tasks
        ],
        'edges': [
            {'src': e.src, 'dst': e.dst, 'data_mb': e.data}
            for e in workflow.edges
        ],
    }


def load_workflow(path):
    return workflow_from_dict(load_json_document(path))


def save_workflow(workflow, path):
    path = write_json_document(Path(path), workflow_to_dict(workflow))
    logger.debug(f"Workflow saved: {path}")
    return path
