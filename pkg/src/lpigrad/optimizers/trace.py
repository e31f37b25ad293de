"""Per-iteration optimization records and their CSV / JSON forms."""

import csv
import json
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TraceRecord:
    k: int
    theta: tuple
    objective: float
    oracle_calls: int
    wallclock: float


@dataclass
class Trace:
    """Iterates, objectives and cumulative oracle calls of one run.

    ``config`` is a JSON-serializable snapshot of the run parameters; ``extras``
    holds method-specific diagnostics (inner iteration counts, FGM history)
    that are kept out of the CSV form.
    """

    records: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    seed: int | None = None
    extras: dict = field(default_factory=dict)

    def append(self, k, theta, objective, oracle_calls, wallclock):
        if self.records:
            last = self.records[-1]
            if k <= last.k:
                raise ValueError("iteration numbers must increase")
            if oracle_calls < last.oracle_calls:
                raise ValueError("oracle calls must not decrease")
        theta = tuple(float(v) for v in np.asarray(theta, dtype=np.float64).reshape(-1))
        self.records.append(TraceRecord(int(k), theta, float(objective), int(oracle_calls), float(wallclock)))

    def __len__(self):
        return len(self.records)

    @property
    def iterations(self):
        return np.array([r.k for r in self.records], dtype=np.int64)

    @property
    def thetas(self):
        return np.array([r.theta for r in self.records], dtype=np.float64)

    @property
    def objectives(self):
        return np.array([r.objective for r in self.records], dtype=np.float64)

    @property
    def oracle_calls(self):
        return np.array([r.oracle_calls for r in self.records], dtype=np.int64)

    @property
    def final(self):
        return self.records[-1]

    def iterations_to(self, threshold):
        """First iteration whose objective is at most ``threshold``, else ``None``."""
        for r in self.records:
            if r.objective <= threshold:
                return r.k
        return None

    def csv_header(self):
        p = len(self.records[0].theta) if self.records else 0
        return ["iter", "objective", "oracle_calls"] + [f"theta_{i}" for i in range(p)] + ["wallclock_s"]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.csv_header())
            for r in self.records:
                w.writerow(
                    [str(r.k), f"{r.objective:.17g}", str(r.oracle_calls)]
                    + [f"{v:.17g}" for v in r.theta]
                    + [f"{r.wallclock:.6f}"]
                )

    @classmethod
    def from_csv(cls, path):
        out = cls()
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            n_theta = sum(1 for h in header if h.startswith("theta_"))
            for row in reader:
                out.records.append(
                    TraceRecord(
                        int(row[0]),
                        tuple(float(v) for v in row[3 : 3 + n_theta]),
                        float(row[1]),
                        int(row[2]),
                        float(row[3 + n_theta]),
                    )
                )
        return out

    def to_dict(self):
        return {
            "config": self.config,
            "seed": self.seed,
            "records": [
                {
                    "iter": r.k,
                    "objective": r.objective,
                    "oracle_calls": r.oracle_calls,
                    "theta": list(r.theta),
                    "wallclock_s": r.wallclock,
                }
                for r in self.records
            ],
            "extras": _jsonable(self.extras),
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            doc = json.load(fh)
        out = cls(config=doc.get("config", {}), seed=doc.get("seed"), extras=doc.get("extras", {}))
        for r in doc["records"]:
            out.records.append(
                TraceRecord(r["iter"], tuple(r["theta"]), r["objective"], r["oracle_calls"], r["wallclock_s"])
            )
        return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj
