"""DAG specs and planning.

A dag is a set of nodes; each node names its inputs (``raw`` or another
node's output), one of the four operators, and an output table. Planning
returns a topological order and rejects cycles and unknown inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..errors import DagCycle, UnknownInput

RAW_INPUT = "raw"
OP_KINDS = ("explode", "sessionize", "filter", "aggregate")


@dataclass(frozen=True)
class NodeSpec:
    name: str
    inputs: tuple[str, ...]
    op: dict
    output: str
    version: int = 1

    def op_kind(self) -> str:
        return self.op["kind"]


@dataclass
class DagSpec:
    nodes: list[NodeSpec] = field(default_factory=list)

    def node(self, name: str) -> NodeSpec:
        for n in self.nodes:
            if n.name == name:
                return n
        raise UnknownInput(f"no node named {name!r}")

    def validate(self) -> None:
        names = [n.name for n in self.nodes]
        if len(set(names)) != len(names):
            raise ValueError("duplicate node names")
        outputs = [n.output for n in self.nodes]
        if len(set(outputs)) != len(outputs):
            raise ValueError("duplicate output names")
        for n in self.nodes:
            if n.op_kind() not in OP_KINDS:
                raise ValueError(f"unknown op kind {n.op_kind()!r} in node {n.name!r}")
        plan(self)


def load_dag(path: str | Path) -> DagSpec:
    doc = yaml.safe_load(Path(path).read_text())
    nodes = [
        NodeSpec(
            name=nd["name"],
            inputs=tuple(nd["inputs"]),
            op=dict(nd["op"]),
            output=nd["output"],
            version=int(nd.get("version", 1)),
        )
        for nd in doc["nodes"]
    ]
    dag = DagSpec(nodes)
    dag.validate()
    return dag


def plan(dag: DagSpec) -> list[NodeSpec]:
    """Topological order, inputs before dependents; deterministic by name."""
    by_output = {n.output: n for n in dag.nodes}
    for n in dag.nodes:
        for inp in n.inputs:
            if inp != RAW_INPUT and inp not in by_output:
                raise UnknownInput(f"node {n.name!r} reads unknown input {inp!r}")

    deps = {
        n.name: sorted(by_output[i].name for i in n.inputs if i != RAW_INPUT) for n in dag.nodes
    }
    ready = sorted(name for name, ds in deps.items() if not ds)
    done: list[str] = []
    pending = dict(deps)
    while ready:
        name = ready.pop(0)
        done.append(name)
        del pending[name]
        newly = sorted(
            m for m, ds in pending.items() if name in ds and all(d in done for d in ds)
        )
        for m in newly:
            if m not in ready:
                ready.append(m)
        ready.sort()
    if pending:
        cycle = _find_cycle(pending)
        raise DagCycle(f"cycle between nodes: {', '.join(cycle)}", cycle=cycle)
    by_name = {n.name: n for n in dag.nodes}
    return [by_name[name] for name in done]


def _find_cycle(deps: dict[str, list[str]]) -> list[str]:
    # walk from any unresolved node until we revisit one
    start = sorted(deps)[0]
    seen: list[str] = []
    node = start
    while node not in seen:
        seen.append(node)
        nxt = [d for d in deps.get(node, []) if d in deps]
        if not nxt:
            break
        node = nxt[0]
    if node in seen:
        return seen[seen.index(node) :]
    return seen
