"""Finite-population replay: sampling without replacement from a records file.

Records files are UTF-8 CSV with header ``arm,outcome``. Every label must be
mapped to an arm index; blank or non-numeric fields are hard errors.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .design import OutcomeSource, SourceExhausted, equal_split
from .model import Allocation, PreconditionError
from .simulator import (
    METHODS,
    Cell,
    MetricsRecord,
    Truth,
    compute_metrics,
    simulate_cell,
)

REPLAY_METHODS = tuple(m for m in METHODS if m != "oracle")
REPLAY_EXTRA_COLUMNS = ("corpus", "var_tau", "cond_te_1", "cond_te_2", "cond_bias_term_1", "cond_bias_term_2")


class RecordsError(ValueError):
    """A records file or arm map is malformed."""


@dataclass(frozen=True)
class RecordSet:
    labels: tuple
    outcomes: tuple
    arm_map: Mapping[str, int]

    def __post_init__(self):
        if len(self.labels) != len(self.outcomes):
            raise RecordsError("labels and outcomes differ in length")
        for label, idx in self.arm_map.items():
            if idx not in (0, 1, 2):
                raise RecordsError(f"label {label!r} maps to {idx}; arm indices are 0, 1, 2")
        for label in set(self.labels):
            if label not in self.arm_map:
                raise RecordsError(f"unmapped arm label {label!r}")
        idx = np.array([self.arm_map[lab] for lab in self.labels], dtype=int)
        y = np.asarray(self.outcomes, dtype=float)
        arms = tuple(y[idx == w] for w in range(3))
        for w in range(3):
            if arms[w].size == 0:
                raise RecordsError(f"arm {w} has no records")
        object.__setattr__(self, "_arms", arms)

    def arm(self, w: int) -> np.ndarray:
        return self._arms[w].copy()

    @property
    def counts(self) -> tuple:
        return tuple(a.size for a in self._arms)

    def means(self) -> tuple:
        return tuple(float(self.arm(w).mean()) for w in range(3))

    def sds(self) -> tuple:
        return tuple(float(self.arm(w).std(ddof=1)) if self.counts[w] > 1 else math.nan for w in range(3))

    def label_of(self, w: int) -> str:
        names = sorted(k for k, v in self.arm_map.items() if v == w and k in set(self.labels))
        return "+".join(names)


def parse_arm_map(text: str) -> dict:
    """``"regular=0,small=1,aide=2"`` -> ``{"regular": 0, "small": 1, "aide": 2}``."""
    out = {}
    for part in text.split(","):
        if "=" not in part:
            raise RecordsError(f"arm map entry {part!r} is not label=index")
        label, idx = part.split("=", 1)
        label = label.strip()
        try:
            out[label] = int(idx)
        except ValueError:
            raise RecordsError(f"arm map index {idx!r} for {label!r} is not an integer") from None
    return out


def load_records(path, arm_map: Mapping[str, int]) -> RecordSet:
    labels, outcomes = [], []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["arm", "outcome"]:
            raise RecordsError(f"{path}: line 1: expected header 'arm,outcome', got {header}")
        for line, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise RecordsError(f"{path}: line {line}: expected 2 fields, got {len(row)}")
            label, raw = row[0].strip(), row[1].strip()
            if not label or not raw:
                raise RecordsError(f"{path}: line {line}: blank field")
            try:
                y = float(raw)
            except ValueError:
                raise RecordsError(f"{path}: line {line}: outcome {raw!r} is not a number") from None
            if not math.isfinite(y):
                raise RecordsError(f"{path}: line {line}: outcome {raw!r} is not finite")
            if label not in arm_map:
                raise RecordsError(f"{path}: line {line}: unmapped arm label {label!r}")
            labels.append(label)
            outcomes.append(y)
    return RecordSet(tuple(labels), tuple(outcomes), dict(arm_map))


class FiniteSource(OutcomeSource):
    """Draws without replacement; each arm is shuffled once at construction."""

    def __init__(self, rs: RecordSet, rng: np.random.Generator):
        self._pools = [rng.permutation(rs._arms[w]) for w in range(3)]
        self._next = [0, 0, 0]

    def remaining(self, arm: int) -> int:
        return self._pools[arm].size - self._next[arm]

    def draw(self, arm, count, rng=None):
        if count > self.remaining(arm):
            raise SourceExhausted(f"arm {arm}: requested {count} records, {self.remaining(arm)} left")
        start = self._next[arm]
        self._next[arm] = start + count
        return self._pools[arm][start : start + count]


def finite_source(rs: RecordSet, rng: np.random.Generator) -> FiniteSource:
    return FiniteSource(rs, rng)


def pseudo_treatment_split(rs: RecordSet, drop_arm: str, split_arm: str, rng: np.random.Generator) -> RecordSet:
    """Drop one arm and halve another into control and a zero-effect pseudo-treatment.

    The arm that is neither dropped nor split keeps its index, which must be 1
    or 2. The pseudo-treatment takes the other treatment index (1 unless the
    kept arm already holds it). Control gets the extra record on odd counts.
    """
    present = set(rs.labels)
    for lab in (drop_arm, split_arm):
        if lab not in present:
            raise RecordsError(f"label {lab!r} is not in the records")
    if drop_arm == split_arm:
        raise RecordsError("drop and split labels must differ")
    kept = sorted(present - {drop_arm, split_arm})
    kept_idx = {rs.arm_map[k] for k in kept}
    if len(kept_idx) != 1 or kept_idx.pop() not in (1, 2):
        raise RecordsError("the remaining records must form a single treatment arm (index 1 or 2)")
    keep_index = rs.arm_map[kept[0]]
    pseudo_index = 2 if keep_index == 1 else 1

    split_pos = [i for i, lab in enumerate(rs.labels) if lab == split_arm]
    order = rng.permutation(len(split_pos))
    n_control = (len(split_pos) + 1) // 2
    control_rows = {split_pos[i] for i in order[:n_control]}

    control_label, pseudo_label = f"{split_arm}:control", f"{split_arm}:pseudo"
    labels, outcomes = [], []
    for i, (lab, y) in enumerate(zip(rs.labels, rs.outcomes)):
        if lab == drop_arm:
            continue
        if lab == split_arm:
            lab = control_label if i in control_rows else pseudo_label
        labels.append(lab)
        outcomes.append(y)
    arm_map = {k: keep_index for k in kept}
    arm_map[control_label] = 0
    arm_map[pseudo_label] = pseudo_index
    return RecordSet(tuple(labels), tuple(outcomes), arm_map)


class FiniteSourceFactory:
    def __init__(self, rs: RecordSet):
        self.rs = rs

    def __call__(self, rng):
        return FiniteSource(self.rs, rng)


def _conditional(winner, values, w):
    g = winner == w
    return float(np.mean(values[g])) if g.any() else math.nan


def run_replay(
    rs: RecordSet,
    T: int,
    T0: int,
    replications: int,
    seed: int,
    methods: Sequence[str] = REPLAY_METHODS,
    corpus: str = "corpus",
    workers: int = 1,
    pilot_split: Optional[Sequence[int]] = None,
) -> list:
    """Per-method metrics scored against the corpus arm means."""
    bad = [m for m in methods if m not in REPLAY_METHODS]
    if bad:
        raise PreconditionError(f"methods {bad} are not available in replay; choose from {list(REPLAY_METHODS)}")
    if not 0 < T0 < T:
        raise PreconditionError(f"need 0 < T0 < T, got T0={T0}, T={T}")
    if replications < 1:
        raise PreconditionError("replications must be positive")
    pilot = equal_split(T0) if pilot_split is None else Allocation(pilot_split)
    truth = Truth(rs.means())
    sd = rs.sds()
    delta = truth.mu[2] - truth.mu[1]
    ratio = sd[2] / sd[1] if sd[1] > 0 else math.nan
    factory = FiniteSourceFactory(rs)
    records = []
    for method in methods:
        key = (0, METHODS.index(method), T, T0)
        cell = Cell(method, T, pilot, key, factory)
        winner, est, raw = simulate_cell(cell, replications, seed, workers)
        m = compute_metrics(winner, est, truth)
        bias = raw - est
        extra = {
            "corpus": corpus,
            "var_tau": float(np.var(est, ddof=1)) if est.size > 1 else math.nan,
            "cond_te_1": _conditional(winner, est, 1),
            "cond_te_2": _conditional(winner, est, 2),
            "cond_bias_term_1": _conditional(winner, bias, 1),
            "cond_bias_term_2": _conditional(winner, bias, 2),
        }
        records.append(
            MetricsRecord(
                method=method,
                T=T,
                T0=T0,
                delta=delta,
                sigma_ratio=ratio,
                replications=replications,
                seed=seed,
                extra=extra,
                **m,
            )
        )
    return records
