"""Declarative transformation DAG over the raw log.

A closed algebra of four operators (explode, sessionize, filter, aggregate)
stands in for SQL: nodes declare inputs and outputs, the planner orders
them, and the engine materializes each node incrementally with manifests
recording lineage and watermarks.
"""

from .dag import DagSpec, NodeSpec, load_dag, plan
from .engine import TransformEngine
from .ops import Sessionizer, explode_records
from .tables import TableManifest, TableStore

__all__ = [
    "DagSpec",
    "NodeSpec",
    "load_dag",
    "plan",
    "TransformEngine",
    "Sessionizer",
    "explode_records",
    "TableManifest",
    "TableStore",
]
