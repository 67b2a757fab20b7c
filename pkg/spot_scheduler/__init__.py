# Spot Scheduler Package

from .cluster_model import ClusterSpec, NodeSpec, PricingClass, load_cluster
from .sim_engine import EnvConfig, SchedulingEnvironment, run_episode
from .workflow_model import TaskSpec, EdgeSpec, WorkflowSpec, WorkflowOutcome
from .workload_generator import WorkloadConfig, generate
from .hierarchical_agent import HierarchicalAgent, evaluate, load_checkpoint, save_checkpoint, train
from .baseline_schedulers import BaselineKind, make_scheduler
