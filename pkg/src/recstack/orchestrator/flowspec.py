"""Declarative flow specs: named tasks, dependencies, retry policies."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..errors import InvalidSpec

ACTIONS = ("transform_node", "quality_suite", "recsys_step", "serving_deploy", "shell_probe")


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    backoff_base_s: float = 2.0
    backoff_factor: float = 2.0

    def validate(self) -> None:
        if self.max_attempts < 1:
            raise InvalidSpec(f"max_attempts must be >= 1, got {self.max_attempts}")
        if self.backoff_base_s < 0:
            raise InvalidSpec("backoff_base_s must be >= 0")
        if self.backoff_factor < 1:
            raise InvalidSpec(f"backoff_factor must be >= 1, got {self.backoff_factor}")

    def delay_s(self, failed_attempt: int) -> float:
        """Delay before the attempt after `failed_attempt`."""
        return self.backoff_base_s * self.backoff_factor ** (failed_attempt - 1)

    def to_dict(self) -> dict:
        return {
            "max_attempts": self.max_attempts,
            "backoff_base_s": self.backoff_base_s,
            "backoff_factor": self.backoff_factor,
        }

    @classmethod
    def from_dict(cls, d: dict | None) -> "RetryPolicy":
        d = d or {}
        return cls(
            max_attempts=int(d.get("max_attempts", 3)),
            backoff_base_s=float(d.get("backoff_base_s", 2.0)),
            backoff_factor=float(d.get("backoff_factor", 2.0)),
        )


@dataclass(frozen=True)
class TaskSpec:
    name: str
    action: str
    params: dict = field(default_factory=dict)
    depends_on: tuple[str, ...] = ()
    retry: RetryPolicy = field(default_factory=RetryPolicy)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "action": self.action,
            "params": self.params,
            "depends_on": list(self.depends_on),
            "retry": self.retry.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TaskSpec":
        return cls(
            name=d["name"],
            action=d["action"],
            params=dict(d.get("params") or {}),
            depends_on=tuple(d.get("depends_on") or ()),
            retry=RetryPolicy.from_dict(d.get("retry")),
        )


@dataclass
class FlowSpec:
    name: str
    tasks: list[TaskSpec]

    def task(self, name: str) -> TaskSpec:
        for t in self.tasks:
            if t.name == name:
                return t
        raise InvalidSpec(f"flow {self.name!r} has no task {name!r}")

    def downstream_of(self, name: str) -> set[str]:
        """All tasks that transitively depend on `name`."""
        out: set[str] = set()
        frontier = {name}
        while frontier:
            nxt = {t.name for t in self.tasks if set(t.depends_on) & frontier} - out
            out |= nxt
            frontier = nxt
        return out

    def validate(self) -> None:
        names = [t.name for t in self.tasks]
        if not names:
            raise InvalidSpec(f"flow {self.name!r} has no tasks")
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise InvalidSpec(f"duplicate task names: {', '.join(dupes)}")
        for t in self.tasks:
            if t.action not in ACTIONS:
                raise InvalidSpec(f"task {t.name!r}: unknown action {t.action!r}")
            for dep in t.depends_on:
                if dep not in names:
                    raise InvalidSpec(f"task {t.name!r} depends on unknown task {dep!r}")
            t.retry.validate()
        # cycle check by repeated removal of satisfied tasks
        remaining = {t.name: set(t.depends_on) for t in self.tasks}
        while remaining:
            free = [n for n, deps in remaining.items() if not deps]
            if not free:
                raise InvalidSpec(f"cycle between tasks: {', '.join(sorted(remaining))}")
            for n in free:
                del remaining[n]
            for deps in remaining.values():
                deps.difference_update(free)

    def to_dict(self) -> dict:
        return {"name": self.name, "tasks": [t.to_dict() for t in self.tasks]}

    @classmethod
    def from_dict(cls, d: dict) -> "FlowSpec":
        spec = cls(name=d["name"], tasks=[TaskSpec.from_dict(t) for t in d.get("tasks", [])])
        spec.validate()
        return spec


def load_flow(path: str | Path) -> FlowSpec:
    return FlowSpec.from_dict(yaml.safe_load(Path(path).read_text()))
