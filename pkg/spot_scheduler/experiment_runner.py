#!/usr/bin/env python3
"""
EXPERIMENT RUNNER
Komut satırı: train / compare / generate

Örnek kullanım:
    python run_experiment.py train --episodes 300 --seed 0 --out runs/train
    python run_experiment.py compare --schedulers agent,k8-default,on-demand,random \\
        --checkpoint runs/train/policy_checkpoint.json --seeds 0,1,2,3,4 --out runs/compare
    python run_experiment.py generate --config spot_scheduler/data/default_workload.json --out workflows/
"""

import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import pandas as pd

from .baseline_schedulers import BaselineKind, make_scheduler
from .cluster_model import load_cluster, with_interruption_rate
from .errors import ConfigurationError, SchedulingError
from .hierarchical_agent import (
    HierarchicalAgent,
    evaluate,
    load_checkpoint,
    make_env_factory,
    policies_for_cluster,
    save_checkpoint,
    train,
)
from .rl_core import TrainConfig, load_train_config
from .sim_engine import EnvConfig
from .utils import parse_name_list, parse_seed_list, setup_logging
from .workload_generator import (
    WorkloadConfig,
    generate,
    load_workload,
    load_workload_config,
    save_workflows,
)

logger = logging.getLogger(__name__)

AGENT = 'agent'
CHECKPOINT_FILE = 'policy_checkpoint.json'
CURVE_FILE = 'learning_curve.csv'
COMPARISON_FILE = 'comparison.csv'
SUMMARY_CSV = 'summary.csv'
SUMMARY_TXT = 'summary.txt'

METRIC_COLUMNS = ['scheduler', 'seed', 'total_cost', 'mean_execution_time',
                  'completed', 'failed_interrupted', 'failed_timeout']
SUMMARY_COLUMNS = ['scheduler', 'mean_total_cost', 'std_total_cost', 'mean_execution_time',
                   'completed', 'failed_interrupted', 'failed_timeout']


@dataclass
class ExperimentConfig:
    cluster_path: str = None
    workload: object = None          # WorkloadConfig or list of WorkflowSpec
    schedulers: list = field(default_factory=list)
    checkpoint: str = None
    train_config: TrainConfig = None
    seeds: list = field(default_factory=list)
    out_dir: str = '.'
    env_config: EnvConfig = field(default_factory=EnvConfig)
    interruption_rate: float = None

    def cluster(self):
        cluster = load_cluster(self.cluster_path)
        if self.interruption_rate is not None:
            cluster = with_interruption_rate(cluster, self.interruption_rate)
        return cluster


# ---------------------------------------------------------------------------
# Workload resolution
# ---------------------------------------------------------------------------

def _inline_workload_changes(args):
    changes = {
        'count': args.count,
        'seed': getattr(args, 'workload_seed', None),
        'data_mb': args.data_mb,
        'timeout': args.timeout,
    }
    if args.parallelism:
        changes['parallelism'] = tuple(parse_seed_list(args.parallelism))
    if args.work_min is not None or args.work_max is not None:
        changes['work_range'] = (args.work_min, args.work_max)
    if args.interarrival_min is not None or args.interarrival_max is not None:
        changes['interarrival_range'] = (args.interarrival_min, args.interarrival_max)
    return {k: v for k, v in changes.items() if v is not None}


def apply_inline_workload(workload, args):
    changes = _inline_workload_changes(args)
    if not changes:
        return workload
    if not isinstance(workload, WorkloadConfig):
        raise ConfigurationError("inline workload flags need a workload config, not fixed workflow files")
    for name in ('work_range', 'interarrival_range'):
        if name in changes:
            current = getattr(workload, name)
            lo, hi = changes[name]
            changes[name] = (current[0] if lo is None else lo, current[1] if hi is None else hi)
    return workload.replace(**changes)


def resolve_workload(args):
    """--workload file (or the default workload config) plus inline overrides"""
    workload = load_workload(args.workload) if args.workload else load_workload_config()
    return apply_inline_workload(workload, args)


def _env_config(args):
    return EnvConfig(
        queue_when_busy=args.queue_when_busy,
        trace_path=getattr(args, 'trace', None),
    )


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_train(config):
    """Train the hierarchical agent; writes the checkpoint and the learning curve"""
    cluster = config.cluster()
    train_config = config.train_config
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    logger.info(f"Training for {train_config.episodes} episodes (seed {train_config.seed})")
    policies = policies_for_cluster(cluster, train_config)
    factory = make_env_factory(cluster, config.workload, seed=train_config.seed, env_config=config.env_config)
    policies, curve = train(factory, policies, train_config)

    checkpoint_path = save_checkpoint(policies, out_dir / CHECKPOINT_FILE)
    curve_path = out_dir / CURVE_FILE
    curve.to_csv(curve_path, index=False, lineterminator='\n')
    logger.info(f"Learning curve written: {curve_path} ({len(curve)} episodes)")
    print(f"✅ Checkpoint: {checkpoint_path}")
    print(f"✅ Learning curve: {curve_path}")
    return checkpoint_path, curve_path


def _make_schedulers(config, cluster, seed):
    schedulers = []
    for name in config.schedulers:
        if name == AGENT:
            if not config.checkpoint:
                raise ConfigurationError("scheduler 'agent' needs --checkpoint")
            schedulers.append((name, HierarchicalAgent(load_checkpoint(config.checkpoint, cluster), seed=seed)))
        else:
            schedulers.append((name, make_scheduler(name, seed)))
    return schedulers


def summarize(rows):
    """Per-scheduler means ordered by mean total cost (ascending)"""
    frame = pd.DataFrame(rows, columns=METRIC_COLUMNS)
    summary = frame.groupby('scheduler', sort=False).agg(
        mean_total_cost=('total_cost', 'mean'),
        std_total_cost=('total_cost', lambda s: s.std(ddof=0)),
        mean_execution_time=('mean_execution_time', 'mean'),
        completed=('completed', 'mean'),
        failed_interrupted=('failed_interrupted', 'mean'),
        failed_timeout=('failed_timeout', 'mean'),
    ).reset_index()[SUMMARY_COLUMNS]
    return frame, summary.sort_values('mean_total_cost', kind='mergesort').reset_index(drop=True)


def cmd_compare(config):
    """Every scheduler on every seed with identical workloads and interruption streams"""
    if not config.seeds:
        raise ConfigurationError("compare needs at least one seed")
    if not config.schedulers:
        raise ConfigurationError("compare needs at least one scheduler")
    for name in config.schedulers:
        if name != AGENT and name not in {k.value for k in BaselineKind}:
            raise ConfigurationError(f"unknown scheduler {name!r}")

    cluster = config.cluster()
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    for seed in config.seeds:
        for name, scheduler in _make_schedulers(config, cluster, seed):
            summary = evaluate(scheduler, cluster, config.workload, [seed], config.env_config)
            if not summary.episodes:
                raise ConfigurationError(f"workload for seed {seed} is empty")
            stats = summary.episodes[0]
            rows.append({
                'scheduler': name,
                'seed': seed,
                'total_cost': stats.total_cost,
                'mean_execution_time': stats.mean_execution_time,
                'completed': stats.completed,
                'failed_interrupted': stats.failed_interrupted,
                'failed_timeout': stats.failed_timeout,
            })
            logger.info(f"{name} seed {seed}: cost ${stats.total_cost:.6f}, "
                        f"completed {stats.completed}/{stats.submitted}")
            if stats.completed < stats.submitted:
                logger.warning(f"{name} seed {seed}: {stats.failed_interrupted} interrupted, "
                               f"{stats.failed_timeout} timed out")

    # rows are emitted in (scheduler, seed) order regardless of evaluation order
    order = {name: i for i, name in enumerate(config.schedulers)}
    rows.sort(key=lambda r: (order[r['scheduler']], r['seed']))
    frame, summary = summarize(rows)

    comparison_path = out_dir / COMPARISON_FILE
    summary_path = out_dir / SUMMARY_CSV
    text_path = out_dir / SUMMARY_TXT
    frame.to_csv(comparison_path, index=False, lineterminator='\n')
    summary.to_csv(summary_path, index=False, lineterminator='\n')
    text = summary.to_string(index=False)
    with open(text_path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(text + '\n')

    print(f"\n{'=' * 60}")
    print(text)
    print('=' * 60)
    print(f"✅ Results: {comparison_path}")
    return frame, summary


def cmd_generate(workload_config, out_dir):
    """Write one workflow document per generated workflow"""
    workflows = generate(workload_config)
    paths = save_workflows(workflows, out_dir)
    print(f"✅ {len(paths)} workflows written to {out_dir}")
    return paths


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def _add_common(parser):
    parser.add_argument('--cluster', help='Cluster JSON (default: bundled 11-node cluster)')
    parser.add_argument('--workload', help='Workload config, workflow file/list or directory')
    parser.add_argument('--out', required=True, help='Output directory')
    parser.add_argument('--interruption-rate', type=float, help='Override spot interruptions per hour')
    parser.add_argument('--queue-when-busy', action='store_true',
                        help='Queue tasks on full nodes instead of deferring them')
    parser.add_argument('--trace', help='Write a JSON-lines event trace of the last episode')
    _add_workload_flags(parser)


def _add_workload_flags(parser):
    group = parser.add_argument_group('inline workload')
    group.add_argument('--count', type=int, help='Workflows per episode')
    group.add_argument('--parallelism', help='Map task counts, e.g. 4,8')
    group.add_argument('--work-min', type=float)
    group.add_argument('--work-max', type=float)
    group.add_argument('--interarrival-min', type=float)
    group.add_argument('--interarrival-max', type=float)
    group.add_argument('--data-mb', type=float)
    group.add_argument('--timeout', type=float, help='Workflow timeout in seconds')


def build_parser():
    parser = argparse.ArgumentParser(description='Spot/on-demand workflow scheduling experiments')
    parser.add_argument('--log-level', default='INFO', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    parser.add_argument('--log-file', help='Also write logs to this file')
    sub = parser.add_subparsers(dest='command', required=True)

    p_train = sub.add_parser('train', help='Train the hierarchical PPO agent')
    _add_common(p_train)
    p_train.add_argument('--train-config', help='Training config JSON (default: bundled)')
    p_train.add_argument('--episodes', type=int)
    p_train.add_argument('--seed', type=int)

    p_compare = sub.add_parser('compare', help='Compare schedulers over seeds')
    _add_common(p_compare)
    p_compare.add_argument('--schedulers', default='agent,k8-default,on-demand,random',
                           help='Comma separated: agent, random, k8-default, on-demand')
    p_compare.add_argument('--checkpoint', help='Policy checkpoint (required for agent)')
    p_compare.add_argument('--seeds', default='0', help='Comma separated evaluation seeds')

    p_generate = sub.add_parser('generate', help='Write generated workflows as JSON documents')
    p_generate.add_argument('--config', help='Workload config JSON (default: bundled)')
    p_generate.add_argument('--out', required=True)
    p_generate.add_argument('--seed', type=int, dest='workload_seed')
    _add_workload_flags(p_generate)
    return parser


def experiment_config_from_args(args):
    config = ExperimentConfig(
        cluster_path=args.cluster,
        out_dir=args.out,
        env_config=_env_config(args),
        interruption_rate=args.interruption_rate,
    )
    if args.command == 'train':
        train_config = load_train_config(args.train_config)
        train_config = train_config.replace(episodes=args.episodes, seed=args.seed)
        workload = resolve_workload(args)
        if isinstance(workload, WorkloadConfig) and args.seed is not None:
            workload = workload.replace(seed=args.seed)
        config.train_config = train_config
        config.workload = workload
    else:
        config.workload = resolve_workload(args)
        config.schedulers = parse_name_list(args.schedulers)
        config.checkpoint = args.checkpoint
        config.seeds = parse_seed_list(args.seeds)
    return config


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(getattr(logging, args.log_level), args.log_file)

    try:
        if args.command == 'generate':
            cmd_generate(apply_inline_workload(load_workload_config(args.config), args), args.out)
        else:
            config = experiment_config_from_args(args)
            if args.command == 'train':
                cmd_train(config)
            else:
                cmd_compare(config)
    except (FileNotFoundError, SchedulingError) as e:
        logger.error(f"{args.command} failed: {e}")
        return 2
    except Exception as e:
        logger.exception(f"{args.command} failed unexpectedly: {e}")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
