"""Trace files: a self-contained per-iteration record of a run.

A trace carries everything certification needs (config echo, seed,
per-iteration scalars, thinned serialized measures), is append-only
while running, and serializes to deterministic JSON: the same config
and seed produce byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

SCHEMA = "wflow-trace-v1"
VERSION = "0.1.0"


@dataclass
class IterationRecord:
    """Scalars (always) and serialized measures (thinned) for step n.

    Row ``n`` documents the transition from mu_n to mu_{n+1}:
    ``measure`` is mu_{n+1}, ``exact_step`` the exact proximal output
    from mu_n, ``eta`` the forward image (proximal-gradient only).
    """

    n: int
    tau: float
    sigma: float
    eps: float = 0.0
    mode: str = "exact"
    certified_w2_error: float | None = None
    certified_energy_gap: float | None = None
    inner_iterations: int = 0
    G_value: float | None = None
    G_exact_step_value: float | None = None
    w2_to_minimizer: float | None = None
    w2_exact_to_minimizer: float | None = None
    w2_step_displacement: float | None = None
    w2_output_to_exact: float | None = None
    evi_residual: float | None = None
    w2_eta_to_prev_exact: float | None = None
    w2_eta_to_exact: float | None = None
    potential_value: float | None = None
    second_moment: float | None = None
    eta_mean_norm: float | None = None
    eta_second_moment: float | None = None
    measure: dict | None = None
    exact_step: dict | None = None
    eta: dict | None = None

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "IterationRecord":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in obj.items() if k in names})


@dataclass
class Trace:
    """Header plus iteration records; self-contained for certification."""

    algorithm: str
    config: dict
    seed: int
    initial_measure: dict
    final_measure: dict | None = None
    lam: float | None = None
    lips: float | None = None
    records: list = field(default_factory=list)
    schema: str = SCHEMA
    version: str = VERSION

    def append(self, record: IterationRecord):
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def to_json_dict(self) -> dict:
        return {
            "schema": self.schema,
            "version": self.version,
            "algorithm": self.algorithm,
            "seed": self.seed,
            "lam": self.lam,
            "lips": self.lips,
            "config": self.config,
            "initial_measure": self.initial_measure,
            "final_measure": self.final_measure,
            "records": [r.to_json() for r in self.records],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict(), indent=1)

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dumps())
        return path

    @classmethod
    def from_json_dict(cls, obj: dict) -> "Trace":
        trace = cls(
            algorithm=obj["algorithm"],
            config=obj["config"],
            seed=obj["seed"],
            initial_measure=obj["initial_measure"],
            final_measure=obj.get("final_measure"),
            lam=obj.get("lam"),
            lips=obj.get("lips"),
            schema=obj.get("schema", SCHEMA),
            version=obj.get("version", VERSION),
        )
        trace.records = [IterationRecord.from_json(r) for r in obj.get("records", [])]
        return trace

    @classmethod
    def load(cls, path) -> "Trace":
        return cls.from_json_dict(json.loads(Path(path).read_text()))
