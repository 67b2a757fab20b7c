#!/usr/bin/env python3
"""
HIERARCHICAL AGENT
Two-level action space (pricing group -> node), one actor per level/group and
a shared critic, trained with PPO.

Kullanım:
    policies = policies_for_cluster(cluster, train_config)
    policies, curve = train(make_env_factory(cluster, workload_config), policies, train_config)
"""

import dataclasses
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
import torch

from .cluster_model import PricingClass, unit_cost_per_second
from .errors import ConfigurationError, InvalidArgumentError, LayoutMismatchError, NoFeasibleActionError
from .rl_core import (
    DTYPE,
    PPOUpdater,
    RolloutBuffer,
    Transition,
    build_mlp,
    masked_log_softmax,
)
from .sim_engine import EnvConfig, SchedulingEnvironment
from .utils import load_json_document, write_json_document
from .workload_generator import WorkloadConfig, generate, workload_for_seed

logger = logging.getLogger(__name__)

GROUP_ORDER = (PricingClass.ON_DEMAND, PricingClass.SPOT)
FEATURES_PER_NODE = 5
TASK_FEATURES = 3
CHECKPOINT_FORMAT = 'spot-scheduler-policy'
CHECKPOINT_VERSION = 1

CURVE_COLUMNS = ['episode', 'reward', 'cost', 'makespan', 'completed', 'failed_interrupted', 'failed_timeout']


@dataclass(frozen=True)
class ActionSpaceLayout:
    """Fixed group order; node ids per group in cluster config order"""
    node_ids: tuple
    members: tuple      # one tuple of node ids per group, aligned with GROUP_ORDER

    @classmethod
    def from_cluster(cls, cluster):
        members = tuple(tuple(node.id for node in cluster.nodes_of(group)) for group in GROUP_ORDER)
        return cls(node_ids=tuple(node.id for node in cluster.nodes), members=members)

    @property
    def groups(self):
        return GROUP_ORDER

    @property
    def group_names(self):
        return tuple(group.value for group in GROUP_ORDER)

    @property
    def n_inputs(self):
        return TASK_FEATURES + FEATURES_PER_NODE * len(self.node_ids)

    def group_size(self, a1):
        return len(self.members[a1])

    def node_id(self, a1, a2):
        return self.members[a1][a2]

    def to_dict(self):
        return {'node_ids': list(self.node_ids),
                'groups': {name: list(ids) for name, ids in zip(self.group_names, self.members)}}

    @classmethod
    def from_dict(cls, document):
        groups = document['groups']
        return cls(node_ids=tuple(document['node_ids']),
                   members=tuple(tuple(groups.get(g.value, ())) for g in GROUP_ORDER))


@dataclass(frozen=True)
class EncodingScale:
    cpu: float
    mem: float
    work: float = 200.0
    wait: float = 1000.0
    cost: float = 1.0

    @classmethod
    def from_cluster(cls, cluster, work=200.0, wait=1000.0):
        on_demand = cluster.nodes_of(PricingClass.ON_DEMAND) or list(cluster.nodes)
        cost = max(unit_cost_per_second(node) for node in on_demand)
        return cls(
            cpu=max(node.cpu_capacity for node in cluster.nodes),
            mem=max(node.mem_capacity for node in cluster.nodes),
            work=work,
            wait=wait,
            cost=cost if cost > 0 else 1.0,
        )


def encode(observation, scale):
    """[cpu, mem, work] of the task ++ per node [cpu_free, mem_free, wait, unit_cost, alive]"""
    task = observation.task
    features = [task.cpu_req / scale.cpu, task.mem_req / scale.mem, task.work / scale.work]
    for view in observation.nodes:
        if view.alive:
            wait = min(view.estimated_wait / scale.wait, 1.0)
        else:
            wait = 1.0
        features.extend([
            view.cpu_free / scale.cpu,
            view.mem_free / scale.mem,
            wait,
            view.unit_cost / scale.cost,
            1.0 if view.alive else 0.0,
        ])
    return np.asarray(features, dtype=np.float64)


def build_masks(observation, layout):
    """Group mask and one node mask per group from the observation's feasibility flags"""
    feasible = {view.node_id: view.feasible for view in observation.nodes}
    node_masks = [np.array([feasible[node_id] for node_id in ids], dtype=bool) for ids in layout.members]
    group_mask = np.array([bool(mask.any()) for mask in node_masks], dtype=bool)
    if not group_mask.any():
        raise NoFeasibleActionError(f"no feasible node for task {observation.workflow_id}/{observation.task.id}")
    return group_mask, node_masks


class PolicySet:
    """Group actor, node actor per non-empty group, critic"""

    def __init__(self, layout, scale, group_actor, node_actors, critic):
        self.layout = layout
        self.scale = scale
        self.group_actor = group_actor
        self.node_actors = node_actors   # group name -> Mlp
        self.critic = critic

    @property
    def group_names(self):
        return self.layout.group_names

    def networks(self):
        return [self.group_actor, *self.node_actors.values(), self.critic]

    def named_networks(self):
        named = {'group_actor': self.group_actor}
        named.update({f"node_actor:{name}": actor for name, actor in self.node_actors.items()})
        named['critic'] = self.critic
        return named


def build_policies(layout, scale, hidden_sizes=(64, 64), seed=0):
    n_inputs = layout.n_inputs
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        group_actor = build_mlp(n_inputs, len(layout.groups), hidden_sizes, head='policy')
        node_actors = {}
        for name, ids in zip(layout.group_names, layout.members):
            if ids:
                node_actors[name] = build_mlp(n_inputs, len(ids), hidden_sizes, head='policy')
        critic = build_mlp(n_inputs, 1, hidden_sizes, head='value')
    return PolicySet(layout, scale, group_actor, node_actors, critic)


def policies_for_cluster(cluster, config):
    layout = ActionSpaceLayout.from_cluster(cluster)
    return build_policies(layout, EncodingScale.from_cluster(cluster), config.hidden_sizes, config.seed)


@dataclass(frozen=True)
class ActionChoice:
    a1: int
    a2: int
    node_id: str
    logp_a1: float
    logp_a2: float
    value: float
    node_mask: np.ndarray

    @property
    def log_prob(self):
        """log pi(a1, a2) = log pi(a1) + log pi(a2 | a1)"""
        return self.logp_a1 + self.logp_a2


def _pick(log_probs, rng, mode):
    if mode == 'greedy':
        return int(np.argmax(log_probs))
    probs = np.exp(log_probs)
    return int(rng.choice(len(probs), p=probs / probs.sum()))


def select_action(policies, features, group_mask, node_masks, rng=None, mode='sample'):
    if mode not in ('sample', 'greedy'):
        raise InvalidArgumentError(f"mode must be 'sample' or 'greedy', got {mode!r}")
    x = torch.as_tensor(features, dtype=DTYPE)
    with torch.no_grad():
        logp1, _ = masked_log_softmax(policies.group_actor.logits(x), group_mask)
        logp1 = logp1.numpy()
        a1 = _pick(np.where(group_mask, logp1, -np.inf), rng, mode)

        name = policies.group_names[a1]
        node_mask = node_masks[a1]
        logp2, _ = masked_log_softmax(policies.node_actors[name].logits(x), node_mask)
        logp2 = logp2.numpy()
        a2 = _pick(np.where(node_mask, logp2, -np.inf), rng, mode)

        value = float(policies.critic(x))
    return ActionChoice(
        a1=a1,
        a2=a2,
        node_id=policies.layout.node_id(a1, a2),
        logp_a1=float(logp1[a1]),
        logp_a2=float(logp2[a2]),
        value=value,
        node_mask=node_mask,
    )


class HierarchicalAgent:
    """Scheduler callback: observation -> node id"""

    def __init__(self, policies, mode='greedy', seed=0):
        self.policies = policies
        self.mode = mode
        self.rng = np.random.default_rng(seed)
        self.name = 'agent'

    def choose(self, observation):
        features = encode(observation, self.policies.scale)
        group_mask, node_masks = build_masks(observation, self.policies.layout)
        return select_action(self.policies, features, group_mask, node_masks, self.rng, self.mode)

    def __call__(self, observation):
        return self.choose(observation).node_id


def make_env_factory(cluster, workload, seed=0, env_config=None):
    """
    episode -> (environment, workflows, episode seed)

    A WorkloadConfig yields a fresh workload per episode (workload seed + episode);
    a fixed workflow list is replayed every episode.
    """
    def factory(episode):
        if isinstance(workload, WorkloadConfig):
            workflows = generate(workload.replace(seed=workload.seed + episode))
        else:
            workflows = list(workload)
        return SchedulingEnvironment(cluster, env_config), workflows, seed + episode
    return factory


def run_training_episode(env, workflows, episode_seed, policies, rng):
    """Roll out one stochastic episode; returns (buffer, rewards, episode stats)"""
    buffer = RolloutBuffer()
    rewards = []
    observation = env.reset(workflows, episode_seed)
    while observation is not None:
        features = encode(observation, policies.scale)
        group_mask, node_masks = build_masks(observation, policies.layout)
        choice = select_action(policies, features, group_mask, node_masks, rng, mode='sample')
        observation, reward, done = env.step(choice.node_id)
        rewards.append(reward)
        buffer.add(Transition(
            state=features,
            group_mask=group_mask,
            node_mask=choice.node_mask,
            a1=choice.a1,
            a2=choice.a2,
            logp_a1=choice.logp_a1,
            logp_a2=choice.logp_a2,
            reward=reward,
            value=choice.value,
            done=done,
        ))
    return buffer, rewards, env.episode_stats()


def train(env_factory, policies, config, log_every=10):
    """PPO training loop; returns (policies, learning curve DataFrame)"""
    updater = PPOUpdater(policies, config)
    rng = np.random.default_rng(config.seed)
    rows = []
    for episode in range(config.episodes):
        env, workflows, episode_seed = env_factory(episode)
        buffer, rewards, stats = run_training_episode(env, workflows, episode_seed, policies, rng)
        if len(buffer):
            buffer.compute(config.discount, config.reward_scale)
            report = updater.update(buffer)
        else:
            report = None
        rows.append({
            'episode': episode,
            'reward': math.fsum(rewards),
            'cost': stats.total_cost,
            'makespan': stats.mean_execution_time,
            'completed': stats.completed,
            'failed_interrupted': stats.failed_interrupted,
            'failed_timeout': stats.failed_timeout,
        })
        if log_every and (episode + 1) % log_every == 0:
            clip = f", clip {report.clip_fraction:.3f}" if report else ''
            logger.info(f"Episode {episode + 1}/{config.episodes}: cost ${stats.total_cost:.6f}, "
                        f"completed {stats.completed}/{stats.submitted}{clip}")
    curve = pd.DataFrame(rows, columns=CURVE_COLUMNS)
    return policies, curve


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EvaluationSummary:
    seeds: tuple
    episodes: tuple
    mean_cost: float = 0.0
    std_cost: float = 0.0
    mean_execution_time: float = 0.0
    completed: float = 0.0
    failed_interrupted: float = 0.0
    failed_timeout: float = 0.0


def evaluate(policies, cluster, workload, seeds, env_config=None):
    """
    Greedy episodes over each seed. policies may be a PolicySet or any scheduler
    callable; a scheduler's env_restriction attribute narrows the admissible nodes.
    """
    scheduler = HierarchicalAgent(policies) if isinstance(policies, PolicySet) else policies
    env_config = env_config or EnvConfig()
    restriction = getattr(scheduler, 'env_restriction', None)
    if restriction is not None:
        env_config = dataclasses.replace(env_config, restrict_to=restriction)

    seeds = tuple(seeds)
    episodes = []
    for seed in seeds:
        workflows = workload_for_seed(workload, seed)
        if not workflows:
            continue
        env = SchedulingEnvironment(cluster, env_config)
        try:
            observation = env.reset(workflows, seed)
            while observation is not None:
                observation, _, _ = env.step(scheduler(observation))
            episodes.append(env.episode_stats())
        finally:
            env.close()

    if not episodes:
        return EvaluationSummary(seeds=seeds, episodes=())
    costs = np.array([e.total_cost for e in episodes])
    return EvaluationSummary(
        seeds=seeds,
        episodes=tuple(episodes),
        mean_cost=float(costs.mean()),
        std_cost=float(costs.std()),
        mean_execution_time=float(np.mean([e.mean_execution_time for e in episodes])),
        completed=float(np.mean([e.completed for e in episodes])),
        failed_interrupted=float(np.mean([e.failed_interrupted for e in episodes])),
        failed_timeout=float(np.mean([e.failed_timeout for e in episodes])),
    )


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def _net_to_dict(net):
    return {
        'sizes': list(net.sizes),
        'head': net.head,
        'params': {name: tensor.tolist() for name, tensor in net.state_dict().items()},
    }


def _net_from_dict(document):
    net = build_mlp(document['sizes'][0], document['sizes'][-1], tuple(document['sizes'][1:-1]),
                    head=document['head'])
    state = {name: torch.as_tensor(values, dtype=DTYPE) for name, values in document['params'].items()}
    try:
        net.load_state_dict(state)
    except RuntimeError as e:
        raise ConfigurationError(f"checkpoint network does not match its declared sizes: {e}") from e
    return net


def save_checkpoint(policies, path):
    document = {
        'format': CHECKPOINT_FORMAT,
        'version': CHECKPOINT_VERSION,
        'layout': policies.layout.to_dict(),
        'scale': dataclasses.asdict(policies.scale),
        'networks': {name: _net_to_dict(net) for name, net in policies.named_networks().items()},
    }
    path = write_json_document(Path(path), document)
    logger.info(f"Checkpoint saved: {path}")
    return path


def load_checkpoint(path, cluster=None):
    """Restore a PolicySet; with a cluster, reject a different node layout"""
    document = load_json_document(path)
    if document.get('format') != CHECKPOINT_FORMAT or document.get('version') != CHECKPOINT_VERSION:
        raise ConfigurationError(f"{path}: not a version {CHECKPOINT_VERSION} policy checkpoint")

    layout = ActionSpaceLayout.from_dict(document['layout'])
    if cluster is not None:
        expected = ActionSpaceLayout.from_cluster(cluster)
        if expected != layout:
            raise LayoutMismatchError(
                f"checkpoint layout {layout.to_dict()['groups']} does not match cluster "
                f"{expected.to_dict()['groups']}"
            )

    networks = document['networks']
    node_actors = {}
    for name, ids in zip(layout.group_names, layout.members):
        if ids:
            node_actors[name] = _net_from_dict(networks[f"node_actor:{name}"])
            if node_actors[name].sizes[-1] != len(ids):
                raise LayoutMismatchError(f"node actor {name} has {node_actors[name].sizes[-1]} outputs "
                                          f"for {len(ids)} nodes")
    policies = PolicySet(
        layout=layout,
        scale=EncodingScale(**document['scale']),
        group_actor=_net_from_dict(networks['group_actor']),
        node_actors=node_actors,
        critic=_net_from_dict(networks['critic']),
    )
    for net in policies.networks():
        if net.sizes[0] != layout.n_inputs:
            raise LayoutMismatchError(f"network input {net.sizes[0]} != encoding length {layout.n_inputs}")
    logger.info(f"Checkpoint loaded: {path}")
    return policies
