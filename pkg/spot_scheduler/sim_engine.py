#!/usr/bin/env python3
"""
SIMULATION ENGINE
Discrete-event cluster simulator exposed as an episodic scheduling environment.

Her adımda tek bir bekleyen task sunulur; scheduler bir node seçer, simülasyon
bir sonraki karar anına (veya tüm workflow'lar bitene kadar) ilerler.
"""

import heapq
import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .cluster_model import (
    ClusterState,
    PricingClass,
    can_fit,
    estimated_wait,
    fits_capacity,
    unit_cost_per_second,
)
from .errors import ConfigurationError, InvalidActionError, InvalidStateError
from .workflow_model import (
    WorkflowOutcome,
    computation_time,
    task_cost,
    task_timing,
    transmission_time,
    validate_dag,
    workflow_stats,
)

logger = logging.getLogger(__name__)

CONSERVATION_TOLERANCE = 1e-9


class EventKind(str, Enum):
    TASK_FINISH = 'task_finish'
    NODE_REVIVE = 'node_revive'
    NODE_INTERRUPT = 'node_interrupt'
    WORKFLOW_ARRIVAL = 'workflow_arrival'
    WORKFLOW_TIMEOUT = 'workflow_timeout'


# Simultaneous events: completions before a node dies at the same instant
KIND_PRIORITY = {
    EventKind.TASK_FINISH: 0,
    EventKind.NODE_REVIVE: 1,
    EventKind.NODE_INTERRUPT: 2,
    EventKind.WORKFLOW_ARRIVAL: 3,
    EventKind.WORKFLOW_TIMEOUT: 4,
}


@dataclass(order=True, frozen=True)
class Event:
    time: float
    priority: int
    seq: int
    kind: EventKind = field(compare=False)
    workflow_id: str = field(default=None, compare=False)
    task_id: str = field(default=None, compare=False)
    node_id: str = field(default=None, compare=False)


@dataclass(frozen=True)
class NodeView:
    node_id: str
    pricing_class: PricingClass
    cpu_capacity: float
    mem_capacity: float
    cpu_free: float
    mem_free: float
    estimated_wait: float
    unit_cost: float
    alive: bool
    feasible: bool


@dataclass(frozen=True)
class Observation:
    workflow_id: str
    task: object
    nodes: tuple
    time: float

    @property
    def feasible_node_ids(self):
        return [n.node_id for n in self.nodes if n.feasible]


@dataclass(frozen=True)
class EpisodeStats:
    workflows: dict
    total_cost: float
    mean_execution_time: float
    completed: int
    failed_interrupted: int
    failed_timeout: int
    decisions: int = 0

    @property
    def submitted(self):
        return self.completed + self.failed_interrupted + self.failed_timeout


@dataclass(frozen=True)
class EnvConfig:
    queue_when_busy: bool = False
    restrict_to: PricingClass = None
    audit: bool = False
    trace_path: str = None
    dead_node_wait: float = 1e9


@dataclass
class _RunningTask:
    workflow_id: str
    task_id: str
    node_id: str
    placed_at: float
    transfers: list
    resource_start: float = None
    compute_start: float = None
    timing: object = None


@dataclass
class _WorkflowRun:
    spec: object
    arrived: bool = False
    outcome: WorkflowOutcome = None
    completed: set = field(default_factory=set)
    placement: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)


class SchedulingEnvironment:
    """Episodic environment over one workload batch"""

    def __init__(self, cluster, config=None):
        self.cluster = cluster
        self.config = config or EnvConfig()
        self._rates = {node.id: node.rate for node in cluster.nodes}
        self._unit_costs = {node.id: unit_cost_per_second(node) for node in cluster.nodes}
        self._trace_file = None
        self._reset_state()

    # ------------------------------------------------------------------
    # Episode interface
    # ------------------------------------------------------------------

    def reset(self, workload, seed=0):
        """Load a workload, pre-queue arrivals and return the first observation"""
        workload = list(workload)
        if not workload:
            raise ConfigurationError("workload is empty")
        ids = [wf.id for wf in workload]
        if len(set(ids)) != len(ids):
            raise ConfigurationError("duplicate workflow ids in workload")
        for wf in workload:
            validate_dag(wf)
            for task in wf.tasks:
                if not any(fits_capacity(node, task) for node in self._admissible_nodes()):
                    raise ConfigurationError(
                        f"task {wf.id}/{task.id} (cpu {task.cpu_req}, mem {task.mem_req}) fits no node"
                    )

        self._reset_state()
        self.seed = seed
        self.state = ClusterState(self.cluster, seed=seed)
        self._open_trace()

        for wf in workload:
            self.workflows[wf.id] = _WorkflowRun(spec=wf)
            for task in wf.tasks:
                self._specs[(wf.id, task.id)] = task
            self._push(wf.arrival_time, EventKind.WORKFLOW_ARRIVAL, workflow_id=wf.id)
        for node in self.cluster.nodes:
            if node.is_spot:
                t = self.state.schedule_interruption(node.id, 0.0)
                if math.isfinite(t):
                    self._push(t, EventKind.NODE_INTERRUPT, node_id=node.id)

        logger.debug(f"Episode reset: {len(workload)} workflows, seed {seed}")
        return self._advance()

    def step(self, node_id):
        """Place the pending task on node_id; returns (observation | None, reward, done)"""
        if self.pending is None:
            raise InvalidStateError("no pending task; call reset() first or the episode is done")
        wf_id, task_id = self.pending
        task = self._specs[self.pending]
        if node_id not in self._rates:
            raise InvalidActionError(f"unknown node {node_id!r}")
        if not self._is_admissible(node_id, task):
            raise InvalidActionError(f"node {node_id} cannot take task {wf_id}/{task_id} now")

        run = self.workflows[wf_id]
        transfers = []
        for edge in run.spec.predecessors(task_id):
            src_node = run.placement[edge.src]
            transfers.append(transmission_time(
                edge.data,
                self.cluster.bandwidth(src_node, node_id),
                same_node=(src_node == node_id),
            ))
        run.placement[task_id] = node_id
        self._ready.remove(self._ready_entry[self.pending])
        del self._ready_entry[self.pending]
        self.pending = None

        record = _RunningTask(wf_id, task_id, node_id, placed_at=self.now, transfers=transfers)
        self._running[(wf_id, task_id)] = record
        node_state = self.state[node_id]
        if can_fit(node_state, task) and not node_state.queued:
            self._start_task(record)
        else:
            node_state.queued.append((wf_id, task_id))
        self._trace(self.now, 'task_place', workflow_id=wf_id, task_id=task_id, node_id=node_id)

        reward = -task_cost(computation_time(task.work, self._rates[node_id]), self._unit_costs[node_id])
        self.decisions += 1
        observation = self._advance()
        return observation, reward, observation is None

    @property
    def done(self):
        return self.pending is None and self._resolved == len(self.workflows) and bool(self.workflows)

    def observation(self):
        if self.pending is None:
            return None
        wf_id, _ = self.pending
        task = self._specs[self.pending]
        views = []
        for node in self.cluster.nodes:
            st = self.state[node.id]
            views.append(NodeView(
                node_id=node.id,
                pricing_class=node.pricing_class,
                cpu_capacity=node.cpu_capacity,
                mem_capacity=node.mem_capacity,
                cpu_free=st.cpu_free,
                mem_free=st.mem_free,
                estimated_wait=estimated_wait(st, self._specs, node.rate, self.now,
                                              dead_sentinel=self.config.dead_node_wait),
                unit_cost=self._unit_costs[node.id],
                alive=st.alive,
                feasible=self._is_admissible(node.id, task),
            ))
        return Observation(workflow_id=wf_id, task=task, nodes=tuple(views), time=self.now)

    def episode_stats(self):
        per_workflow = {}
        for wf_id, run in self.workflows.items():
            outcome = run.outcome or WorkflowOutcome.FAILED_TIMEOUT
            per_workflow[wf_id] = workflow_stats(run.timings, outcome, arrival_time=run.spec.arrival_time)
        completed = [s for s in per_workflow.values() if s.outcome is WorkflowOutcome.COMPLETED]
        mean_execution_time = (math.fsum(s.execution_time for s in completed) / len(completed)) if completed else 0.0
        return EpisodeStats(
            workflows=per_workflow,
            total_cost=math.fsum(t.cost for run in self.workflows.values() for t in run.timings.values()),
            mean_execution_time=mean_execution_time,
            completed=len(completed),
            failed_interrupted=sum(1 for s in per_workflow.values()
                                   if s.outcome is WorkflowOutcome.FAILED_INTERRUPTED),
            failed_timeout=sum(1 for s in per_workflow.values()
                               if s.outcome is WorkflowOutcome.FAILED_TIMEOUT),
            decisions=self.decisions,
        )

    def task_timings(self):
        """(workflow id, task id) -> TaskTiming for every task that started"""
        return {(wf_id, task_id): timing
                for wf_id, run in self.workflows.items()
                for task_id, timing in run.timings.items()}

    def close(self):
        if self._trace_file is not None:
            self._trace_file.close()
            self._trace_file = None

    # ------------------------------------------------------------------
    # Internals
    # ------------------------------------------------------------------

    def _reset_state(self):
        self.close()
        self.now = 0.0
        self.seed = None
        self.state = None
        self.workflows = {}
        self.pending = None
        self.decisions = 0
        self._events = []
        self._seq = itertools.count()
        self._specs = {}
        self._running = {}
        self._ready = []          # sorted (ready time, workflow id, task id)
        self._ready_entry = {}
        self._resolved = 0

    def _admissible_nodes(self):
        restrict = self.config.restrict_to
        if restrict is None:
            return list(self.cluster.nodes)
        return [n for n in self.cluster.nodes if n.pricing_class is PricingClass(restrict)]

    def _is_admissible(self, node_id, task):
        node = self.cluster.node(node_id)
        if self.config.restrict_to is not None and node.pricing_class is not PricingClass(self.config.restrict_to):
            return False
        st = self.state[node_id]
        if not st.alive:
            return False
        if self.config.queue_when_busy:
            return fits_capacity(node, task)
        return can_fit(st, task)

    def _push(self, time, kind, workflow_id=None, task_id=None, node_id=None):
        heapq.heappush(self._events, Event(time, KIND_PRIORITY[kind], next(self._seq), kind,
                                           workflow_id, task_id, node_id))

    def _advance(self):
        """Process events until a task can be offered or the episode ends"""
        while True:
            # Tüm workflow'lar sonuçlandıysa episode biter
            if self._resolved == len(self.workflows):
                self.pending = None
                self._trace(self.now, 'episode_done')
                self.close()
                return None
            # Aynı andaki olayların hepsi teklif yapılmadan önce işlenir
            if self._events and self._events[0].time <= self.now:
                self._process_next_event()
                continue
            offer = self._next_offer()
            if offer is not None:
                self.pending = offer
                return self.observation()
            if not self._events:
                raise InvalidStateError(f"simulation stalled at t={self.now:.3f}s with unresolved workflows")
            # Saat bir sonraki olayın zamanına ilerler
            self._process_next_event()

    def _process_next_event(self):
        event = heapq.heappop(self._events)
        if event.time < self.now:
            raise InvalidStateError(f"event at {event.time} precedes clock {self.now}")
        self.now = event.time
        self._handle(event)
        if self.config.audit:
            self._audit()

    def _next_offer(self):
        for _, wf_id, task_id in self._ready:
            task = self._specs[(wf_id, task_id)]
            if any(self._is_admissible(node.id, task) for node in self.cluster.nodes):
                return wf_id, task_id
        return None

    def _handle(self, event):
        self._trace(event.time, event.kind.value, workflow_id=event.workflow_id,
                    task_id=event.task_id, node_id=event.node_id)
        if event.kind is EventKind.WORKFLOW_ARRIVAL:
            self._on_arrival(event.workflow_id)
        elif event.kind is EventKind.TASK_FINISH:
            self._on_finish(event.workflow_id, event.task_id)
        elif event.kind is EventKind.NODE_INTERRUPT:
            self._on_interrupt(event.node_id)
        elif event.kind is EventKind.NODE_REVIVE:
            self._on_revive(event.node_id)
        elif event.kind is EventKind.WORKFLOW_TIMEOUT:
            self._on_timeout(event.workflow_id)

    def _mark_ready(self, wf_id, task_id):
        entry = (self.now, wf_id, task_id)
        self._ready.append(entry)
        self._ready.sort()
        self._ready_entry[(wf_id, task_id)] = entry

    def _on_arrival(self, wf_id):
        run = self.workflows[wf_id]
        run.arrived = True
        logger.debug(f"t={self.now:.3f} workflow {wf_id} arrived")
        if not run.spec.tasks:
            self._resolve(run, WorkflowOutcome.COMPLETED)
            return
        for task in run.spec.tasks:
            if not run.spec.predecessors(task.id):
                self._mark_ready(wf_id, task.id)
        if math.isfinite(run.spec.timeout):
            self._push(self.now + run.spec.timeout, EventKind.WORKFLOW_TIMEOUT, workflow_id=wf_id)

    def _start_task(self, record):
        """Acquire node resources; transfer then compute follow"""
        key = (record.workflow_id, record.task_id)
        task = self._specs[key]
        node_state = self.state[record.node_id]
        node_state.cpu_free -= task.cpu_req
        node_state.mem_free -= task.mem_req

        record.resource_start = self.now
        compute = computation_time(task.work, self._rates[record.node_id])
        record.timing = task_timing(
            start=record.placed_at,
            compute=compute,
            wait=self.now - record.placed_at,
            pred_transfers=record.transfers,
            unit_cost=self._unit_costs[record.node_id],
        )
        record.compute_start = record.timing.finish - compute
        node_state.running[key] = record.compute_start
        self._push(record.timing.finish, EventKind.TASK_FINISH, workflow_id=record.workflow_id,
                   task_id=record.task_id, node_id=record.node_id)

    def _release(self, record):
        key = (record.workflow_id, record.task_id)
        node_state = self.state[record.node_id]
        if key in node_state.running:
            task = self._specs[key]
            del node_state.running[key]
            node_state.cpu_free += task.cpu_req
            node_state.mem_free += task.mem_req
            node = self.cluster.node(record.node_id)
            if not node_state.running:
                # idle node: exact capacity again
                node_state.cpu_free = node.cpu_capacity
                node_state.mem_free = node.mem_capacity
        elif key in node_state.queued:
            node_state.queued.remove(key)

    def _drain_queue(self, node_id):
        """Start queued tasks in FIFO order while the head fits"""
        node_state = self.state[node_id]
        while node_state.alive and node_state.queued:
            key = node_state.queued[0]
            if not can_fit(node_state, self._specs[key]):
                break
            node_state.queued.pop(0)
            self._start_task(self._running[key])

    def _on_finish(self, wf_id, task_id):
        key = (wf_id, task_id)
        record = self._running.get(key)
        if record is None:
            return  # cancelled by a failure
        del self._running[key]
        self._release(record)
        run = self.workflows[wf_id]
        run.timings[task_id] = record.timing
        run.completed.add(task_id)

        for succ in run.spec.successors(task_id):
            if all(edge.src in run.completed for edge in run.spec.predecessors(succ)):
                self._mark_ready(wf_id, succ)
        if len(run.completed) == len(run.spec.tasks):
            self._resolve(run, WorkflowOutcome.COMPLETED)
        self._drain_queue(record.node_id)

    def _partial_timing(self, record):
        """Timing of a started task cut short at the current instant"""
        transfer_end = record.compute_start
        waited = record.resource_start - record.placed_at
        transferred = min(self.now, transfer_end) - record.resource_start
        computed = max(0.0, self.now - transfer_end)
        timing = task_timing(
            start=record.placed_at,
            compute=min(computed, record.timing.compute),
            wait=waited,
            pred_transfers=[max(0.0, transferred)],
            unit_cost=self._unit_costs[record.node_id],
        )
        return timing

    def _cancel(self, record, node_already_cleared=False):
        key = (record.workflow_id, record.task_id)
        self._running.pop(key, None)
        run = self.workflows[record.workflow_id]
        if record.resource_start is not None:
            run.timings[record.task_id] = self._partial_timing(record)
        if not node_already_cleared:
            self._release(record)

    def _fail(self, run, outcome):
        wf_id = run.spec.id
        touched = set()
        # Çalışan ve kuyruktaki task'lar iptal edilir, kısmi maliyet kalır
        for key, record in list(self._running.items()):
            if key[0] == wf_id:
                self._cancel(record)
                touched.add(record.node_id)
        # Hazır listesinden bu workflow'un task'ları çıkarılır
        for entry in [e for e in self._ready if e[1] == wf_id]:
            self._ready.remove(entry)
            self._ready_entry.pop((entry[1], entry[2]), None)
        self._resolve(run, outcome)
        # Boşalan node'larda bekleyen kuyruk ilerler
        for node in self.cluster.nodes:
            if node.id in touched:
                self._drain_queue(node.id)

    def _resolve(self, run, outcome):
        run.outcome = outcome
        self._resolved += 1
        if outcome is WorkflowOutcome.COMPLETED:
            logger.debug(f"t={self.now:.3f} workflow {run.spec.id} completed")
        else:
            logger.debug(f"t={self.now:.3f} workflow {run.spec.id} {outcome.value}")

    def _on_interrupt(self, node_id):
        # Node ölür, üzerindeki task'lar kaybolur
        killed = self.state.apply_interruption(node_id, self.now)
        failed = []
        for key in killed:
            record = self._running.get(key)
            if record is not None:
                self._cancel(record, node_already_cleared=True)
            if key[0] not in failed:
                failed.append(key[0])
        # Task'ı öldürülen her workflow başarısız sayılır
        for wf_id in failed:
            run = self.workflows[wf_id]
            if run.outcome is None:
                self._fail(run, WorkflowOutcome.FAILED_INTERRUPTED)
        # Downtime sonunda node boş olarak geri döner
        self._push(self.state.revive_at[node_id], EventKind.NODE_REVIVE, node_id=node_id)

    def _on_revive(self, node_id):
        self.state.revive_node(node_id, self.now)
        t = self.state.schedule_interruption(node_id, self.now)
        if math.isfinite(t):
            self._push(t, EventKind.NODE_INTERRUPT, node_id=node_id)

    def _on_timeout(self, wf_id):
        run = self.workflows[wf_id]
        if run.outcome is None:
            logger.debug(f"t={self.now:.3f} workflow {wf_id} timed out")
            self._fail(run, WorkflowOutcome.FAILED_TIMEOUT)

    def _audit(self):
        """Resource conservation on every node"""
        for node in self.cluster.nodes:
            st = self.state[node.id]
            used_cpu = math.fsum(self._specs[k].cpu_req for k in st.running)
            used_mem = math.fsum(self._specs[k].mem_req for k in st.running)
            if (abs((node.cpu_capacity - st.cpu_free) - used_cpu) > CONSERVATION_TOLERANCE * node.cpu_capacity
                    or abs((node.mem_capacity - st.mem_free) - used_mem) > CONSERVATION_TOLERANCE * node.mem_capacity):
                raise InvalidStateError(f"resource conservation violated on {node.id} at t={self.now}")
            if st.cpu_free < -CONSERVATION_TOLERANCE or st.mem_free < -CONSERVATION_TOLERANCE:
                raise InvalidStateError(f"negative free resources on {node.id} at t={self.now}")
            if not st.alive and st.running:
                raise InvalidStateError(f"dead node {node.id} has running tasks")

    def _open_trace(self):
        if self.config.trace_path:
            path = Path(self.config.trace_path)
            path.parent.mkdir(parents=True, exist_ok=True)
            self._trace_file = open(path, 'w', encoding='utf-8', newline='\n')

    def _trace(self, time, kind, workflow_id=None, task_id=None, node_id=None):
        if self._trace_file is None:
            return
        record = {'time': time, 'kind': kind, 'workflow': workflow_id, 'task': task_id, 'node': node_id}
        self._trace_file.write(json.dumps(record) + '\n')


def run_episode(scheduler, cluster, workload, seed=0, config=None):
    """Drive reset/step with a scheduler callback until every workflow resolves"""
    env = SchedulingEnvironment(cluster, config)
    try:
        observation = env.reset(workload, seed)
        while observation is not None:
            observation, _, _ = env.step(scheduler(observation))
        return env.episode_stats()
    finally:
        env.close()
