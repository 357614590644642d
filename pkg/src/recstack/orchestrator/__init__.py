"""Flow orchestration: specs, an append-only run journal, and the scheduler."""

from .actions import ActionRunner, TaskContext
from .api import create_orchestrator_app
from .flowspec import ACTIONS, FlowSpec, RetryPolicy, TaskSpec, load_flow
from .journal import Journal, RunState, TaskState, fold_events
from .scheduler import Orchestrator

__all__ = [
    "ACTIONS",
    "ActionRunner",
    "FlowSpec",
    "Journal",
    "Orchestrator",
    "RetryPolicy",
    "RunState",
    "TaskContext",
    "TaskSpec",
    "TaskState",
    "create_orchestrator_app",
    "fold_events",
    "load_flow",
]
