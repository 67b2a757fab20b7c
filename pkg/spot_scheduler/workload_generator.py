#!/usr/bin/env python3
"""
WORKLOAD GENERATOR
Map-Reduce workflow'ları üretir: split -> P paralel map -> reduce,
uniform dağılımlı geliş aralıkları ile.
"""

import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .utils import check_fields, load_json_document, write_json_document
from .workflow_model import (
    EdgeSpec,
    TaskSpec,
    WorkflowSpec,
    load_workflow,
    workflow_from_dict,
    workflow_to_dict,
)

logger = logging.getLogger(__name__)

DEFAULT_WORKLOAD_FILE = Path(__file__).parent / 'data' / 'default_workload.json'

# split/reduce anchors: near-zero work and footprint
ANCHOR_WORK = 0.1
ANCHOR_CPU = 0.1
ANCHOR_MEM = 0.1


@dataclass(frozen=True)
class WorkloadConfig:
    count: int = 20
    parallelism: tuple = (4, 8)
    work_range: tuple = (50.0, 200.0)
    interarrival_range: tuple = (5.0, 30.0)
    data_mb: float = 50.0
    cpu_req: float = 1.0
    mem_req: float = 2.0
    timeout: float = 3600.0
    seed: int = 0

    def __post_init__(self):
        parallelism = self.parallelism
        if isinstance(parallelism, int):
            parallelism = (parallelism,)
        object.__setattr__(self, 'parallelism', tuple(int(p) for p in parallelism))
        object.__setattr__(self, 'work_range', tuple(float(v) for v in self.work_range))
        object.__setattr__(self, 'interarrival_range', tuple(float(v) for v in self.interarrival_range))

        if int(self.count) < 1:
            raise ConfigurationError(f"count must be >= 1, got {self.count}")
        if not self.parallelism or any(p < 1 for p in self.parallelism):
            raise ConfigurationError(f"parallelism must be positive integers, got {self.parallelism}")
        for name in ('work_range', 'interarrival_range'):
            lo, hi = _pair(name, getattr(self, name))
            if not 0 < lo <= hi:
                raise ConfigurationError(f"{name} must satisfy 0 < lo <= hi, got [{lo}, {hi}]")
        if self.data_mb < 0 or self.cpu_req <= 0 or self.mem_req <= 0 or self.timeout <= 0:
            raise ConfigurationError("data_mb must be >= 0; cpu_req, mem_req and timeout must be > 0")

    def replace(self, **changes):
        values = asdict(self)
        values.update({k: v for k, v in changes.items() if v is not None})
        return WorkloadConfig(**values)


def _pair(name, values):
    if len(values) != 2:
        raise ConfigurationError(f"{name} must be [lo, hi], got {list(values)}")
    return values[0], values[1]


def workload_config_from_dict(document):
    check_fields(document, (), optional=tuple(WorkloadConfig.__dataclass_fields__), what='workload config')
    try:
        return WorkloadConfig(**document)
    except (TypeError, ValueError) as e:
        raise ConfigurationError(f"workload config: {e}") from e


def map_reduce_workflow(wf_id, map_works, arrival_time, config):
    """split -> map-00..map-(P-1) -> reduce"""
    tasks = [TaskSpec('split', ANCHOR_CPU, ANCHOR_MEM, ANCHOR_WORK)]
    edges = []
    for i, work in enumerate(map_works):
        map_id = f"map-{i:02d}"
        tasks.append(TaskSpec(map_id, config.cpu_req, config.mem_req, float(work)))
        edges.append(EdgeSpec('split', map_id, config.data_mb))
        edges.append(EdgeSpec(map_id, 'reduce', config.data_mb))
    tasks.append(TaskSpec('reduce', ANCHOR_CPU, ANCHOR_MEM, ANCHOR_WORK))
    return WorkflowSpec(id=wf_id, tasks=tasks, edges=edges, arrival_time=float(arrival_time),
                        timeout=config.timeout)


def generate(config):
    """Deterministic Map-Reduce workload for config.seed"""
    rng = np.random.default_rng(config.seed)
    work_lo, work_hi = config.work_range
    gap_lo, gap_hi = config.interarrival_range

    workflows = []
    arrival = 0.0
    for i in range(int(config.count)):
        arrival += float(rng.uniform(gap_lo, gap_hi))
        parallelism = config.parallelism[int(rng.integers(len(config.parallelism)))]
        works = rng.uniform(work_lo, work_hi, size=parallelism)
        workflows.append(map_reduce_workflow(f"wf-{i:04d}", works, arrival, config))
    logger.debug(f"Generated {len(workflows)} workflows (seed {config.seed})")
    return workflows


def workload_for_seed(workload, seed):
    """Concrete workflows for one evaluation seed; fixed lists are reused as-is"""
    if isinstance(workload, WorkloadConfig):
        return generate(workload.replace(seed=seed))
    return list(workload)


def save_workflows(workflows, out_dir):
    """Her workflow için ayrı JSON dosyası yazar"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for wf in workflows:
        paths.append(write_json_document(out_dir / f"{wf.id}.json", workflow_to_dict(wf)))
    logger.info(f"{len(paths)} workflow files written to {out_dir}")
    return paths


def load_workload(path):
    """
    Workload kaynağını yükler. Returns either a WorkloadConfig (generate per seed)
    or a fixed list of WorkflowSpec.

    Accepted: a directory of workflow documents, a JSON list of workflow
    documents, a single workflow document, or a workload config document.
    """
    path = Path(path)
    if path.is_dir():
        files = sorted(path.glob('*.json'))
        if not files:
            raise ConfigurationError(f"no workflow documents in {path}")
        return [load_workflow(f) for f in files]

    document = load_json_document(path)
    if isinstance(document, list):
        return [workflow_from_dict(d) for d in document]
    if isinstance(document, dict) and 'tasks' in document:
        return [workflow_from_dict(document)]
    return workload_config_from_dict(document)


def load_workload_config(path=None):
    return workload_config_from_dict(load_json_document(path or DEFAULT_WORKLOAD_FILE))
