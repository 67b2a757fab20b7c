#!/usr/bin/env python3
"""
RL CORE
Feed-forward policy/value networks and the PPO machinery:
discounted returns, normalized advantages, clipped surrogate, minibatch update.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .errors import (
    ConfigurationError,
    InvalidArgumentError,
    InvalidStateError,
    NoFeasibleActionError,
    NumericError,
)
from .utils import check_fields, load_json_document

logger = logging.getLogger(__name__)

DEFAULT_TRAIN_FILE = Path(__file__).parent / 'data' / 'default_train.json'
DTYPE = torch.float64
MASKED_LOGIT = -1e30
ZERO_STD = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    discount: float = 0.99
    clip_epsilon: float = 0.2
    group_actor_lr: float = 3e-4
    node_actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    epochs: int = 4
    minibatch_size: int = 64
    episodes: int = 300
    entropy_weight: float = 0.01
    max_grad_norm: float = 0.5
    hidden_sizes: tuple = (64, 64)
    reward_scale: float = 1000.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'hidden_sizes', tuple(int(h) for h in self.hidden_sizes))
        if not 0 < self.discount < 1:
            raise ConfigurationError(f"discount must be in (0, 1), got {self.discount}")
        if self.clip_epsilon <= 0:
            raise ConfigurationError(f"clip_epsilon must be > 0, got {self.clip_epsilon}")
        if self.epochs < 1 or self.minibatch_size < 1:
            raise ConfigurationError("epochs and minibatch_size must be >= 1")
        if self.episodes < 0:
            raise ConfigurationError("episodes must be >= 0")
        if self.reward_scale <= 0:
            raise ConfigurationError("reward_scale must be > 0")

    def replace(self, **changes):
        values = asdict(self)
        values.update({k: v for k, v in changes.items() if v is not None})
        return TrainConfig(**values)


def train_config_from_dict(document):
    check_fields(document, (), optional=tuple(TrainConfig.__dataclass_fields__), what='train config')
    try:
        return TrainConfig(**document)
    except (TypeError, ValueError) as e:
        raise ConfigurationError(f"train config: {e}") from e


def load_train_config(path=None):
    return train_config_from_dict(load_json_document(path or DEFAULT_TRAIN_FILE))


# ---------------------------------------------------------------------------
# Networks
# ---------------------------------------------------------------------------

class Mlp(nn.Module):
    """tanh perceptron with a policy (masked softmax) or value (scalar) head"""

    def __init__(self, sizes, head='policy'):
        super().__init__()
        if head not in ('policy', 'value'):
            raise InvalidArgumentError(f"head must be 'policy' or 'value', got {head!r}")
        if len(sizes) < 2 or any(int(s) < 1 for s in sizes):
            raise InvalidArgumentError(f"invalid layer sizes {sizes}")
        if head == 'value' and sizes[-1] != 1:
            raise InvalidArgumentError("value head must have one output")
        self.sizes = tuple(int(s) for s in sizes)
        self.head = head
        self.layers = nn.ModuleList(
            nn.Linear(n_in, n_out, dtype=DTYPE) for n_in, n_out in zip(self.sizes[:-1], self.sizes[1:])
        )
        self.reset_parameters()

    def reset_parameters(self):
        """Orthogonal init: hidden gain sqrt(2), policy output 0.01, value output 1"""
        for i, layer in enumerate(self.layers):
            last = i == len(self.layers) - 1
            if not last:
                gain = math.sqrt(2.0)
            else:
                gain = 0.01 if self.head == 'policy' else 1.0
            nn.init.orthogonal_(layer.weight, gain=gain)
            nn.init.zeros_(layer.bias)

    def logits(self, x):
        x = torch.as_tensor(x, dtype=DTYPE)
        for layer in self.layers[:-1]:
            x = torch.tanh(layer(x))
        return self.layers[-1](x)

    def forward(self, x, mask=None):
        self.check_finite()
        x = torch.as_tensor(x, dtype=DTYPE)
        if x.shape[-1] != self.sizes[0]:
            raise InvalidArgumentError(f"input length {x.shape[-1]} != {self.sizes[0]}")
        out = self.logits(x)
        if self.head == 'value':
            return out.squeeze(-1)
        return masked_softmax(out, mask)

    def check_finite(self):
        for name, param in self.named_parameters():
            if not torch.isfinite(param).all():
                raise NumericError(f"non-finite parameter {name}")


def _as_mask(mask, like):
    if mask is None:
        return torch.ones_like(like, dtype=torch.bool)
    mask = torch.as_tensor(mask, dtype=torch.bool)
    if mask.shape != like.shape:
        raise InvalidArgumentError(f"mask shape {tuple(mask.shape)} != output shape {tuple(like.shape)}")
    if not mask.any(dim=-1).all():
        raise NoFeasibleActionError("every action is masked out")
    return mask


def masked_log_softmax(logits, mask=None):
    mask = _as_mask(mask, logits)
    return torch.log_softmax(logits.masked_fill(~mask, MASKED_LOGIT), dim=-1), mask


def masked_softmax(logits, mask=None):
    """Probabilities exactly zero on masked entries"""
    log_probs, mask = masked_log_softmax(logits, mask)
    return torch.exp(log_probs).masked_fill(~mask, 0.0)


def masked_entropy(log_probs, mask):
    probs = torch.exp(log_probs).masked_fill(~mask, 0.0)
    return -(probs * log_probs.masked_fill(~mask, 0.0)).sum(dim=-1)


def build_mlp(n_inputs, n_outputs, hidden_sizes=(64, 64), head='policy'):
    return Mlp((n_inputs, *hidden_sizes, n_outputs), head=head)


def forward(net, features, mask=None):
    return net(features, mask)


# ---------------------------------------------------------------------------
# Returns / advantages / objective
# ---------------------------------------------------------------------------

def discounted_returns(rewards, discount):
    """G_t = r_t + discount * G_{t+1}, G after the last reward = 0"""
    if not 0 < discount < 1:
        raise InvalidArgumentError(f"discount must be in (0, 1), got {discount}")
    returns = np.zeros(len(rewards), dtype=np.float64)
    running = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        running = rewards[t] + discount * running
        returns[t] = running
    return returns


def advantages(returns, values):
    """A_t = G_t - V(s_t), normalized to zero mean / unit std when the spread is nonzero"""
    returns = np.asarray(returns, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if returns.shape != values.shape:
        raise InvalidArgumentError(f"returns ({returns.shape}) and values ({values.shape}) differ in length")
    raw = returns - values
    if raw.size < 2:
        return raw
    std = raw.std()
    if std < ZERO_STD:
        return raw
    return (raw - raw.mean()) / std


def ppo_clip_objective(ratio, advantage, epsilon):
    """min(r * A, clip(r, 1 - eps, 1 + eps) * A)"""
    if torch.is_tensor(ratio) or torch.is_tensor(advantage):
        ratio = torch.as_tensor(ratio, dtype=DTYPE)
        advantage = torch.as_tensor(advantage, dtype=DTYPE)
        return torch.minimum(ratio * advantage, torch.clamp(ratio, 1 - epsilon, 1 + epsilon) * advantage)
    clipped = min(max(ratio, 1 - epsilon), 1 + epsilon)
    return min(ratio * advantage, clipped * advantage)


# ---------------------------------------------------------------------------
# Rollout memory
# ---------------------------------------------------------------------------

@dataclass
class Transition:
    state: np.ndarray
    group_mask: np.ndarray
    node_mask: np.ndarray      # mask of the selected group's node actor
    a1: int
    a2: int
    logp_a1: float
    logp_a2: float
    reward: float
    value: float
    done: bool = False

    def __post_init__(self):
        if self.logp_a1 > 0 or self.logp_a2 > 0:
            raise InvalidArgumentError("log-probabilities must be <= 0")


@dataclass
class RolloutBuffer:
    transitions: list = field(default_factory=list)
    returns: np.ndarray = None
    advantages: np.ndarray = None

    def __len__(self):
        return len(self.transitions)

    def add(self, transition):
        self.transitions.append(transition)

    def compute(self, discount, reward_scale=1.0):
        rewards = [t.reward * reward_scale for t in self.transitions]
        self.returns = discounted_returns(rewards, discount)
        self.advantages = advantages(self.returns, [t.value for t in self.transitions])
        return self.returns, self.advantages

    def clear(self):
        self.transitions = []
        self.returns = None
        self.advantages = None


@dataclass
class LossReport:
    group_policy_loss: float = 0.0
    node_policy_loss: float = 0.0
    value_loss: float = 0.0
    entropy: float = 0.0
    clip_fraction: float = 0.0
    steps: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Update
# ---------------------------------------------------------------------------

def actor_surrogate_loss(net, states, masks, actions, old_log_probs, adv, epsilon, entropy_weight=0.0):
    """Negative clipped surrogate (minus entropy bonus); returns (loss, clip fraction, entropy)"""
    logits = net.logits(states)
    log_probs, mask = masked_log_softmax(logits, masks)
    chosen = log_probs.gather(-1, actions.unsqueeze(-1)).squeeze(-1)
    ratio = torch.exp(chosen - old_log_probs)
    surrogate = ppo_clip_objective(ratio, adv, epsilon)
    entropy = masked_entropy(log_probs, mask).mean()
    loss = -surrogate.mean() - entropy_weight * entropy
    clip_fraction = ((ratio - 1.0).abs() > epsilon).to(DTYPE).mean()
    return loss, clip_fraction.item(), entropy.detach().item()


def _step(net, optimizer, loss, max_grad_norm):
    optimizer.zero_grad()
    loss.backward()
    if max_grad_norm and max_grad_norm > 0:
        nn.utils.clip_grad_norm_(net.parameters(), max_grad_norm)
    optimizer.step()


class PPOUpdater:
    """One Adam optimizer per network plus the minibatch shuffling stream"""

    def __init__(self, policies, config):
        self.policies = policies
        self.config = config
        self.group_optimizer = torch.optim.Adam(policies.group_actor.parameters(), lr=config.group_actor_lr)
        self.node_optimizers = {
            name: torch.optim.Adam(actor.parameters(), lr=config.node_actor_lr)
            for name, actor in policies.node_actors.items()
        }
        self.critic_optimizer = torch.optim.Adam(policies.critic.parameters(), lr=config.critic_lr)
        self.rng = np.random.default_rng(config.seed)

    def update(self, buffer):
        return update(self.policies, buffer, self.config, self)


def update(policies, buffer, config, updater=None):
    """
    K epochs of shuffled minibatch PPO on the group actor, each node actor (only
    transitions whose a1 chose its group) and the critic (MSE to the returns).
    """
    if len(buffer) == 0:
        raise InvalidStateError("cannot update from an empty buffer")
    if buffer.returns is None or buffer.advantages is None:
        buffer.compute(config.discount, config.reward_scale)
    if updater is None:
        updater = PPOUpdater(policies, config)

    transitions = buffer.transitions
    group_names = policies.group_names
    states = torch.as_tensor(np.stack([t.state for t in transitions]), dtype=DTYPE)
    group_masks = torch.as_tensor(np.stack([t.group_mask for t in transitions]), dtype=torch.bool)
    a1 = torch.as_tensor([t.a1 for t in transitions], dtype=torch.long)
    a2 = torch.as_tensor([t.a2 for t in transitions], dtype=torch.long)
    old_logp1 = torch.as_tensor([t.logp_a1 for t in transitions], dtype=DTYPE)
    old_logp2 = torch.as_tensor([t.logp_a2 for t in transitions], dtype=DTYPE)
    returns = torch.as_tensor(buffer.returns, dtype=DTYPE)
    adv = torch.as_tensor(buffer.advantages, dtype=DTYPE)

    n = len(transitions)
    eps = config.clip_epsilon
    steps = {'group_actor': 0, 'critic': 0, **{f"node_actor:{g}": 0 for g in policies.node_actors}}
    group_losses, node_losses, value_losses, entropies, clip_fracs = [], [], [], [], []

    for _ in range(config.epochs):
        order = updater.rng.permutation(n)
        for start in range(0, n, config.minibatch_size):
            idx = order[start:start + config.minibatch_size]
            idx_t = torch.as_tensor(idx, dtype=torch.long)

            loss, clip_frac, entropy = actor_surrogate_loss(
                policies.group_actor, states[idx_t], group_masks[idx_t], a1[idx_t],
                old_logp1[idx_t], adv[idx_t], eps, config.entropy_weight,
            )
            _step(policies.group_actor, updater.group_optimizer, loss, config.max_grad_norm)
            steps['group_actor'] += 1
            group_losses.append(float(loss))
            clip_fracs.append(clip_frac)
            entropies.append(entropy)

            for g_index, name in enumerate(group_names):
                actor = policies.node_actors.get(name)
                if actor is None:
                    continue
                sel = [i for i in idx if transitions[i].a1 == g_index]
                if not sel:
                    continue
                sel_t = torch.as_tensor(sel, dtype=torch.long)
                node_masks = torch.as_tensor(np.stack([transitions[i].node_mask for i in sel]), dtype=torch.bool)
                loss, clip_frac, _ = actor_surrogate_loss(
                    actor, states[sel_t], node_masks, a2[sel_t], old_logp2[sel_t], adv[sel_t],
                    eps, config.entropy_weight,
                )
                _step(actor, updater.node_optimizers[name], loss, config.max_grad_norm)
                steps[f"node_actor:{name}"] += 1
                node_losses.append(float(loss))
                clip_fracs.append(clip_frac)

            values = policies.critic(states[idx_t])
            value_loss = ((values - returns[idx_t]) ** 2).mean()
            _step(policies.critic, updater.critic_optimizer, value_loss, config.max_grad_norm)
            steps['critic'] += 1
            value_losses.append(float(value_loss))

    for net in policies.networks():
        net.check_finite()

    return LossReport(
        group_policy_loss=float(np.mean(group_losses)),
        node_policy_loss=float(np.mean(node_losses)) if node_losses else 0.0,
        value_loss=float(np.mean(value_losses)),
        entropy=float(np.mean(entropies)),
        clip_fraction=float(np.mean(clip_fracs)),
        steps=steps,
    )
