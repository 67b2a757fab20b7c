#!/usr/bin/env python3
"""
BASELINE SCHEDULERS
Random, K8-Default (filter + least-allocated score) ve On-Demand only
"""

import logging
from enum import Enum

import numpy as np

from .cluster_model import PricingClass
from .errors import InvalidArgumentError, NoFeasibleActionError

logger = logging.getLogger(__name__)

CPU_WEIGHT = 0.5
MEM_WEIGHT = 0.5


class BaselineKind(str, Enum):
    RANDOM = 'random'
    K8_DEFAULT = 'k8-default'
    ON_DEMAND = 'on-demand'


def random_policy(observation, rng):
    """Uniform choice among alive feasible nodes"""
    candidates = [view.node_id for view in observation.nodes if view.alive and view.feasible]
    if not candidates:
        raise NoFeasibleActionError(f"no feasible node for {observation.workflow_id}/{observation.task.id}")
    return candidates[int(rng.integers(len(candidates)))]


def filter_nodes(observation, restrict=None):
    """Filter phase: alive, fits, and of the restricted pricing class if one is given"""
    restrict = PricingClass(restrict) if restrict is not None else None
    return [
        view for view in observation.nodes
        if view.alive and view.feasible and (restrict is None or view.pricing_class is restrict)
    ]


def least_allocated_score(view, cpu_weight=CPU_WEIGHT, mem_weight=MEM_WEIGHT):
    return cpu_weight * (view.cpu_free / view.cpu_capacity) + mem_weight * (view.mem_free / view.mem_capacity)


def score_policy(observation, restrict=None, cpu_weight=CPU_WEIGHT, mem_weight=MEM_WEIGHT):
    """Highest least-allocated score wins; ties go to the earlier node in config order"""
    candidates = filter_nodes(observation, restrict)
    if not candidates:
        raise NoFeasibleActionError(
            f"no feasible {restrict or 'any'} node for {observation.workflow_id}/{observation.task.id}"
        )
    best = candidates[0]
    best_score = least_allocated_score(best, cpu_weight, mem_weight)
    for view in candidates[1:]:
        score = least_allocated_score(view, cpu_weight, mem_weight)
        if score > best_score:
            best, best_score = view, score
    return best.node_id


class RandomScheduler:
    env_restriction = None

    def __init__(self, seed=0):
        self.name = BaselineKind.RANDOM.value
        self.rng = np.random.default_rng(seed)

    def __call__(self, observation):
        return random_policy(observation, self.rng)


class ScoreScheduler:
    """Filter-and-score scheduler; restrict narrows the node pool to one pricing class"""

    def __init__(self, restrict=None, name=BaselineKind.K8_DEFAULT.value):
        self.name = name
        self.restrict = PricingClass(restrict) if restrict is not None else None
        # the environment defers tasks until a node of this class frees up
        self.env_restriction = self.restrict

    def __call__(self, observation):
        return score_policy(observation, self.restrict)


def make_scheduler(kind, seed=0):
    try:
        kind = BaselineKind(kind)
    except ValueError:
        valid = ', '.join(k.value for k in BaselineKind)
        raise InvalidArgumentError(f"unknown baseline {kind!r} (expected one of: {valid})")
    if kind is BaselineKind.RANDOM:
        return RandomScheduler(seed)
    if kind is BaselineKind.K8_DEFAULT:
        return ScoreScheduler()
    return ScoreScheduler(restrict=PricingClass.ON_DEMAND, name=BaselineKind.ON_DEMAND.value)
