#!/usr/bin/env python3
"""
CLUSTER MODEL
Node tipleri, fiyat sınıfları, bant genişliği ve spot kesinti süreci
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ContractViolationError, DanglingReferenceError, InvalidArgumentError
from .utils import check_fields, load_json_document, require_nonnegative, require_positive

logger = logging.getLogger(__name__)

DEFAULT_CLUSTER_FILE = Path(__file__).parent / 'data' / 'default_cluster.json'
SECONDS_PER_HOUR = 3600.0


class PricingClass(str, Enum):
    ON_DEMAND = 'on_demand'
    SPOT = 'spot'


@dataclass(frozen=True)
class NodeSpec:
    id: str
    flavor: str
    cpu_capacity: float
    mem_capacity: float
    rate: float
    pricing_class: PricingClass
    price_per_hour: float

    def __post_init__(self):
        object.__setattr__(self, 'pricing_class', PricingClass(self.pricing_class))
        require_positive(f"node {self.id} cpu_capacity", self.cpu_capacity)
        require_positive(f"node {self.id} mem_capacity", self.mem_capacity)
        require_positive(f"node {self.id} rate", self.rate)
        require_nonnegative(f"node {self.id} price_per_hour", self.price_per_hour)

    @property
    def is_spot(self):
        return self.pricing_class is PricingClass.SPOT


@dataclass(frozen=True)
class ClusterSpec:
    nodes: tuple
    bandwidth_mbps: float = 100.0
    interruption_rate_per_hour: float = 0.0
    interruption_downtime_s: float = 300.0
    bandwidth_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, 'nodes', tuple(self.nodes))
        if not self.nodes:
            raise ConfigurationError("cluster has no nodes")
        ids = [node.id for node in self.nodes]
        if len(set(ids)) != len(ids):
            raise ConfigurationError(f"duplicate node ids in cluster: {ids}")
        require_positive('bandwidth_mbps', self.bandwidth_mbps)
        require_nonnegative('interruption_rate_per_hour', self.interruption_rate_per_hour)
        require_nonnegative('interruption_downtime_s', self.interruption_downtime_s)
        overrides = {}
        for pair, mbps in dict(self.bandwidth_overrides).items():
            pair = frozenset(pair)
            if len(pair) != 2 or not pair <= set(ids):
                raise ConfigurationError(f"bandwidth override must name two distinct cluster nodes: {sorted(pair)}")
            overrides[pair] = require_positive('bandwidth override', mbps)
        object.__setattr__(self, 'bandwidth_overrides', overrides)

    def node(self, node_id):
        for node in self.nodes:
            if node.id == node_id:
                return node
        raise DanglingReferenceError(f"unknown node {node_id!r}")

    def node_index(self, node_id):
        for i, node in enumerate(self.nodes):
            if node.id == node_id:
                return i
        raise DanglingReferenceError(f"unknown node {node_id!r}")

    def bandwidth(self, src_node, dst_node):
        """B(src, dst) in MB/s; symmetric, infinite for the same node"""
        if src_node == dst_node:
            return math.inf
        return self.bandwidth_overrides.get(frozenset((src_node, dst_node)), self.bandwidth_mbps)

    def nodes_of(self, pricing_class):
        return [node for node in self.nodes if node.pricing_class is PricingClass(pricing_class)]

    @property
    def spot_node_ids(self):
        return [node.id for node in self.nodes if node.is_spot]


@dataclass
class NodeState:
    cpu_free: float
    mem_free: float
    running: dict = field(default_factory=dict)   # (wf, task) -> compute start time
    queued: list = field(default_factory=list)    # FIFO of (wf, task)
    alive: bool = True
    next_interruption: float = math.inf

    @classmethod
    def idle(cls, node):
        return cls(cpu_free=node.cpu_capacity, mem_free=node.mem_capacity)

    @property
    def is_idle(self):
        return not self.running and not self.queued


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def unit_cost_per_second(node):
    """UC = hourly price / 3600"""
    return node.price_per_hour / SECONDS_PER_HOUR


def can_fit(state, task):
    if not state.alive:
        return False
    return state.cpu_free >= task.cpu_req and state.mem_free >= task.mem_req


def fits_capacity(node, task):
    return node.cpu_capacity >= task.cpu_req and node.mem_capacity >= task.mem_req


def estimated_wait(state, specs, rate, now, dead_sentinel=1e9):
    """
    Remaining work of running tasks plus work of queued tasks, divided by the node rate.

    specs maps (workflow id, task id) -> TaskSpec.
    """
    require_positive('rate', rate)
    if not state.alive:
        return dead_sentinel

    backlog = 0.0
    for key, compute_start in state.running.items():
        work = specs[key].work
        if work <= 0:
            continue
        ct = work / rate
        elapsed = now - compute_start
        remaining = work * (1.0 - elapsed / ct)
        backlog += min(max(remaining, 0.0), work)
    for key in state.queued:
        backlog += specs[key].work
    return backlog / rate


def sample_next_interruption(rate_per_hour, rng):
    """Exponential gap with mean 3600 / rate; never when rate is 0"""
    require_nonnegative('rate_per_hour', rate_per_hour)
    if rate_per_hour == 0:
        return math.inf
    return float(rng.exponential(SECONDS_PER_HOUR / rate_per_hour))


class ClusterState:
    """Mutable per-simulation state of every node, in cluster config order"""

    def __init__(self, spec, seed=0):
        self.spec = spec
        self.nodes = {node.id: NodeState.idle(node) for node in spec.nodes}
        # One stream per node so interruption times do not depend on decisions
        children = np.random.SeedSequence(seed).spawn(len(spec.nodes))
        self.rngs = {node.id: np.random.default_rng(child) for node, child in zip(spec.nodes, children)}
        self.revive_at = {node.id: None for node in spec.nodes}

    def __getitem__(self, node_id):
        try:
            return self.nodes[node_id]
        except KeyError:
            raise DanglingReferenceError(f"unknown node {node_id!r}")

    def schedule_interruption(self, node_id, now):
        """Draw the next interruption instant of a spot node (absolute time)"""
        node = self.spec.node(node_id)
        if not node.is_spot:
            return math.inf
        gap = sample_next_interruption(self.spec.interruption_rate_per_hour, self.rngs[node_id])
        self.nodes[node_id].next_interruption = now + gap
        return now + gap

    def apply_interruption(self, node_id, now):
        """Kill everything on a spot node; returns killed (workflow id, task id) keys"""
        node = self.spec.node(node_id)
        state = self[node_id]
        if not node.is_spot:
            raise ContractViolationError(f"node {node_id} is on-demand and cannot be interrupted")
        if not state.alive:
            raise ContractViolationError(f"node {node_id} is already down")

        killed = list(state.running) + list(state.queued)
        state.running.clear()
        state.queued.clear()
        state.cpu_free = node.cpu_capacity
        state.mem_free = node.mem_capacity
        state.alive = False
        state.next_interruption = math.inf
        self.revive_at[node_id] = now + self.spec.interruption_downtime_s
        logger.debug(f"Node {node_id} interrupted at {now:.3f}s, {len(killed)} task(s) killed")
        return killed

    def revive_node(self, node_id, now):
        node = self.spec.node(node_id)
        state = self[node_id]
        state.alive = True
        state.cpu_free = node.cpu_capacity
        state.mem_free = node.mem_capacity
        state.running.clear()
        state.queued.clear()
        self.revive_at[node_id] = None
        logger.debug(f"Node {node_id} revived at {now:.3f}s")


def apply_interruption(cluster_state, node_id, now):
    return cluster_state.apply_interruption(node_id, now)


# ---------------------------------------------------------------------------
# Cluster documents
# ---------------------------------------------------------------------------

CLUSTER_FIELDS = ('nodes', 'bandwidth_mbps', 'interruption_rate_per_hour', 'interruption_downtime_s')
NODE_FIELDS = ('id', 'flavor', 'cpu', 'mem_gb', 'rate', 'class', 'price_per_hour')


def cluster_from_dict(document):
    check_fields(document, CLUSTER_FIELDS, optional=('bandwidth_overrides',), what='cluster')
    try:
        nodes = []
        for raw in document['nodes']:
            check_fields(raw, NODE_FIELDS, what='cluster node')
            if raw['class'] not in ('spot', 'on_demand'):
                raise ConfigurationError(f"node {raw['id']}: class must be 'spot' or 'on_demand', got {raw['class']!r}")
            nodes.append(NodeSpec(
                id=str(raw['id']),
                flavor=str(raw['flavor']),
                cpu_capacity=float(raw['cpu']),
                mem_capacity=float(raw['mem_gb']),
                rate=float(raw['rate']),
                pricing_class=PricingClass(raw['class']),
                price_per_hour=float(raw['price_per_hour']),
            ))
        overrides = {}
        for raw in document.get('bandwidth_overrides', []):
            check_fields(raw, ('a', 'b', 'mbps'), what='bandwidth override')
            overrides[(str(raw['a']), str(raw['b']))] = float(raw['mbps'])
        return ClusterSpec(
            nodes=nodes,
            bandwidth_mbps=float(document['bandwidth_mbps']),
            interruption_rate_per_hour=float(document['interruption_rate_per_hour']),
            interruption_downtime_s=float(document['interruption_downtime_s']),
            bandwidth_overrides=overrides,
        )
    except (TypeError, ValueError, InvalidArgumentError) as e:
        raise ConfigurationError(f"cluster: {e}") from e


def cluster_to_dict(cluster):
    document = {
        'nodes': [
            {
                'id': n.id, 'flavor': n.flavor, 'cpu': n.cpu_capacity, 'mem_gb': n.mem_capacity,
                'rate': n.rate, 'class': n.pricing_class.value, 'price_per_hour': n.price_per_hour,
            }
            for n in cluster.nodes
        ],
        'bandwidth_mbps': cluster.bandwidth_mbps,
        'interruption_rate_per_hour': cluster.interruption_rate_per_hour,
        'interruption_downtime_s': cluster.interruption_downtime_s,
    }
    if cluster.bandwidth_overrides:
        document['bandwidth_overrides'] = [
            {'a': a, 'b': b, 'mbps': mbps}
            for (a, b), mbps in sorted((tuple(sorted(pair)), v) for pair, v in cluster.bandwidth_overrides.items())
        ]
    return document


def load_cluster(path=None):
    """Cluster dosyasını yükler (varsayılan: data/default_cluster.json)"""
    path = Path(path) if path else DEFAULT_CLUSTER_FILE
    cluster = cluster_from_dict(load_json_document(path))
    logger.info(f"Cluster loaded from {path}: {len(cluster.nodes)} nodes "
                f"({len(cluster.spot_node_ids)} spot)")
    return cluster


def with_interruption_rate(cluster, rate_per_hour):
    """Same cluster with a different spot interruption rate"""
    return ClusterSpec(
        nodes=cluster.nodes,
        bandwidth_mbps=cluster.bandwidth_mbps,
        interruption_rate_per_hour=rate_per_hour,
        interruption_downtime_s=cluster.interruption_downtime_s,
        bandwidth_overrides={tuple(pair): v for pair, v in cluster.bandwidth_overrides.items()},
    )
