"""Access to the bundled published-table fixtures and their cross-checks.

The fixtures directory can be overridden with the LAYERFORK_FIXTURES
environment variable.
"""

from __future__ import annotations

import json
import os

from .allocator import PerformanceLadder, select_layers, tradeoff_report
from .merger import overhead
from .trainer import SearchRange, search_layer_count

_HERE = os.path.dirname(os.path.abspath(__file__))


def fixtures_dir() -> str:
    return os.environ.get("LAYERFORK_FIXTURES", os.path.join(_HERE, "fixtures"))


def load_json(name: str):
    with open(os.path.join(fixtures_dir(), name), encoding="utf-8") as fh:
        return json.load(fh)


def load_table1():
    data = load_json("table1.json")
    scores = {t: {L + 1: s for L, s in enumerate(col)}
              for t, col in data["scores"].items()}
    lo, hi = data["search_range"]
    return scores, SearchRange(lo, hi)


def load_ladder_fixture():
    data = load_json("ladders.json")
    return [PerformanceLadder.from_dict(d) for d in data["ladders"]]


def load_descriptors(name: str):
    data = load_json(name)
    return ([tuple(d) for d in data["descriptors"]], data["shared"],
            data["base_layers"])


def fixtures_check():
    """Cross-check every bundled fixture against the published tables.

    Returns a list of (check name, passed, detail) tuples.
    """
    results = []
    expected = load_json("expected.json")

    scores, search = load_table1()
    for task, (f, l_star) in sorted(expected["wo_kd_annotations"].items()):
        got = search_layer_count(scores[task], search)
        results.append((f"l-search {task}", got == l_star,
                        f"L*={got}, published ({f}, {l_star})"))

    ladders = {l.task_id: l for l in load_ladder_fixture()}
    for c_str, row in sorted(expected["threshold_sweep"].items()):
        for task, (f, n) in sorted(row["selections"].items()):
            got = select_layers(ladders[task], float(c_str))
            results.append((f"allocate c={c_str} {task}", got == n,
                            f"n={got}, published ({f}, {n})"))

    sweep = tradeoff_report(list(ladders.values()),
                            [float(c) for c in sorted(expected["threshold_sweep"])])
    for trow in sweep:
        row = expected["threshold_sweep"][f"{trow.c:.1f}"]
        results.append((f"sweep c={trow.c:g} layers",
                        trow.overhead.layers == row["layers"],
                        f"layers={trow.overhead.layers}, published {row['layers']}"))
        results.append((f"sweep c={trow.c:g} average",
                        abs(trow.average_score - row["average"]) < 0.05,
                        f"avg={trow.average_score:.2f}, published {row['average']}"))
        results.append((f"sweep c={trow.c:g} overhead string",
                        str(trow.overhead) == row["published_overhead"],
                        f"computed {str(trow.overhead)!r}, "
                        f"published {row['published_overhead']!r}"))

    for key, row in sorted(expected["overhead_rows"].items()):
        descs, shared, base = load_descriptors(f"table2_{key}.json")
        rep = overhead(descs, shared=shared, base_layers=base)
        results.append((f"overhead {key} layers", rep.layers == row["layers"],
                        f"layers={rep.layers}, published {row['layers']}"))
        results.append((f"overhead {key} string", str(rep) == row["published"],
                        f"computed {str(rep)!r}, published {row['published']!r}"))
    return results
