"""Per-task layer allocation by marginal-benefit threshold, plus the
performance/overhead trade-off report.

Selection is a two-phase greedy: walk up the distilled candidates while each
extra layer gains at least c, then jump to the undistilled model only if its
average gain per additional layer is still at least c.  Thresholds compare
with >= (a gain of exactly c justifies the layer).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import DataError
from .merger import OverheadReport, overhead


@dataclass(frozen=True)
class PerformanceLadder:
    task_id: str
    frozen_depth: int
    kd: tuple                      # ((n, dev_score), ...) with n = 1, 2, ...
    no_kd: tuple | None = None     # (layer_count, dev_score) of the teacher

    def __post_init__(self):
        if not self.kd:
            raise DataError(f"{self.task_id}: empty ladder")
        ns = [n for n, _ in self.kd]
        if ns != list(range(1, len(ns) + 1)):
            raise DataError(f"{self.task_id}: candidate layer counts must be "
                            "contiguous from 1")
        if self.no_kd is not None and self.no_kd[0] <= ns[-1]:
            raise DataError(f"{self.task_id}: undistilled candidate must be "
                            "deeper than the distilled ones")

    def score(self, n: int) -> float:
        if self.no_kd is not None and n == self.no_kd[0]:
            return self.no_kd[1]
        for cand_n, s in self.kd:
            if cand_n == n:
                return s
        raise DataError(f"{self.task_id}: no candidate with {n} layers")

    def to_dict(self):
        d = {"task_id": self.task_id, "frozen_depth": self.frozen_depth,
             "kd": [list(c) for c in self.kd]}
        if self.no_kd is not None:
            d["no_kd"] = list(self.no_kd)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(task_id=d["task_id"], frozen_depth=d["frozen_depth"],
                   kd=tuple(tuple(c) for c in d["kd"]),
                   no_kd=tuple(d["no_kd"]) if d.get("no_kd") else None)


def load_ladders(path) -> list:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return [PerformanceLadder.from_dict(d) for d in data["ladders"]]


def select_layers(ladder: PerformanceLadder, c: float) -> int:
    """Choose the task-specific layer count for one task at threshold c."""
    if c <= 0:
        raise DataError("threshold c must be positive")
    n, score = ladder.kd[0]
    for next_n, next_score in ladder.kd[1:]:
        if next_score - score >= c:
            n, score = next_n, next_score
        else:
            break
    if ladder.no_kd is not None:
        big_n, big_score = ladder.no_kd
        if (big_score - score) / (big_n - n) >= c:
            return big_n
    return n


@dataclass(frozen=True)
class TradeoffRow:
    c: float
    selections: dict               # task id -> (frozen_depth, chosen n, dev score)
    average_score: float
    overhead: OverheadReport


def tradeoff_report(ladders: list, c_values: list, base_layers: int = 12) -> list:
    """One row per threshold: selections, average dev score, total overhead."""
    rows = []
    for c in c_values:
        selections = {}
        for ladder in sorted(ladders, key=lambda l: l.task_id):
            n = select_layers(ladder, c)
            selections[ladder.task_id] = (ladder.frozen_depth, n, ladder.score(n))
        descs = [(f, n) for f, n, _ in selections.values()]
        avg = sum(s for _, _, s in selections.values()) / len(selections)
        rows.append(TradeoffRow(c=c, selections=selections, average_score=avg,
                                overhead=overhead(descs, shared=True,
                                                  base_layers=base_layers)))
    return rows
