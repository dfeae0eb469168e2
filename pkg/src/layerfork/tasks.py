"""Task specs, TSV ingestion, a toy whitespace tokenizer and synthetic tasks.

The synthetic suite stands in for GLUE at desk scale: every task's label is a
deterministic function of the text, so Bayes-optimal accuracy is 1.0.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

PAD_ID, OOV_ID, CLS_ID, SEP_ID = 0, 1, 2, 3
RESERVED = ["<pad>", "<oov>", "<cls>", "<sep>"]


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    head_kind: str                # "classification" | "regression"
    num_classes: int = 2          # k for classification
    metric: str = "accuracy"      # accuracy | matthews | pearson
    schema: str = "single"        # "single" | "pair"

    def __post_init__(self):
        if self.head_kind not in ("classification", "regression"):
            raise DataError(f"unknown head kind {self.head_kind!r}")
        if self.schema not in ("single", "pair"):
            raise DataError(f"unknown schema {self.schema!r}")
        if (self.metric == "pearson") != (self.head_kind == "regression"):
            raise DataError("pearson pairs with regression heads only")
        if self.head_kind == "classification" and self.num_classes < 2:
            raise DataError("classification needs k >= 2")

    def to_dict(self):
        return {"task_id": self.task_id, "head_kind": self.head_kind,
                "num_classes": self.num_classes, "metric": self.metric,
                "schema": self.schema}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class Example:
    sentence1: str
    sentence2: str | None
    label: float


@dataclass
class Dataset:
    examples: list
    split: str = "train"

    def __len__(self):
        return len(self.examples)

    def labels(self):
        return [ex.label for ex in self.examples]


def load_tsv(path, spec: TaskSpec, split: str = "train") -> Dataset:
    """Read a GLUE-style header+tab file into a Dataset."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh, delimiter="\t", quoting=csv.QUOTE_NONE)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty file")
        needed = ["sentence1", "label"] + (["sentence2"] if spec.schema == "pair" else [])
        for col in needed:
            if col not in reader.fieldnames:
                raise DataError(f"{path}: missing column {col!r}")
        examples = []
        for lineno, row in enumerate(reader, start=2):
            raw = row.get("label")
            if raw is None:
                raise DataError(f"{path}:{lineno}: missing label")
            if spec.head_kind == "classification":
                try:
                    label = int(raw)
                except ValueError:
                    raise DataError(f"{path}:{lineno}: unparsable label {raw!r}") from None
                if not 0 <= label < spec.num_classes:
                    raise DataError(f"{path}:{lineno}: label {label} outside "
                                    f"[0, {spec.num_classes})")
            else:
                try:
                    label = float(raw)
                except ValueError:
                    raise DataError(f"{path}:{lineno}: unparsable label {raw!r}") from None
                if not np.isfinite(label):
                    raise DataError(f"{path}:{lineno}: non-finite label")
            s2 = row.get("sentence2") if spec.schema == "pair" else None
            examples.append(Example(row["sentence1"], s2, label))
    if not examples:
        raise DataError(f"{path}: no data rows")
    return Dataset(examples, split)


class Vocab:
    """Word -> id map with reserved PAD/OOV/CLS/SEP slots."""

    def __init__(self, words):
        self.words = list(words)
        self._ids = {w: i + len(RESERVED) for i, w in enumerate(self.words)}

    def __len__(self):
        return len(self.words) + len(RESERVED)

    def id_of(self, word: str) -> int:
        return self._ids.get(word, OOV_ID)

    def to_list(self):
        return list(self.words)


def build_vocab(dataset: Dataset, max_size: int = 1000) -> Vocab:
    """Most-frequent-first vocabulary; ties broken lexicographically."""
    if not dataset.examples:
        raise DataError("cannot build vocab from an empty split")
    counts = {}
    for ex in dataset.examples:
        for text in (ex.sentence1, ex.sentence2 or ""):
            for w in text.lower().split():
                counts[w] = counts.get(w, 0) + 1
    ordered = sorted(counts, key=lambda w: (-counts[w], w))
    return Vocab(ordered[:max_size])


def tokenize(text: str, vocab: Vocab) -> list:
    """Lowercased whitespace tokens framed as [CLS] ... [SEP]."""
    return [CLS_ID] + [vocab.id_of(w) for w in text.lower().split()] + [SEP_ID]


def encode_example(ex: Example, vocab: Vocab, max_len: int) -> list:
    ids = [CLS_ID] + [vocab.id_of(w) for w in ex.sentence1.lower().split()] + [SEP_ID]
    if ex.sentence2 is not None:
        ids += [vocab.id_of(w) for w in ex.sentence2.lower().split()] + [SEP_ID]
    if len(ids) > max_len:
        ids = ids[:max_len - 1] + [SEP_ID]
    return ids


def batch_encode(examples, vocab: Vocab, max_len: int):
    """Pad a batch to its longest sequence; returns (ids, mask, labels)."""
    encoded = [encode_example(ex, vocab, max_len) for ex in examples]
    width = max(len(e) for e in encoded)
    ids = np.full((len(encoded), width), PAD_ID, dtype=np.int64)
    mask = np.zeros((len(encoded), width), dtype=np.float32)
    for i, e in enumerate(encoded):
        ids[i, :len(e)] = e
        mask[i, :len(e)] = 1.0
    labels = np.array([ex.label for ex in examples])
    return ids, mask, labels


MARKER = "zap"
_TOPICS = ["blue", "gold", "iron", "moss"]


def _sentence(rng, words, length):
    return " ".join(words[rng.integers(0, len(words))] for _ in range(length))


def synth_task(kind: str, difficulty: int = 1, seed: int = 0,
               train_size: int = 64, dev_size: int = 32):
    """Deterministic synthetic tasks whose labels are functions of the text."""
    if train_size < 8 or dev_size < 8:
        raise DataError("synthetic splits need at least 8 examples")
    rng = np.random.default_rng(seed)
    length = 4 + 2 * difficulty
    words = [f"w{i:02d}" for i in range(8 * difficulty)]

    def make(n):
        out = []
        for _ in range(n):
            if kind == "keyword":
                toks = _sentence(rng, words, length).split()
                label = int(rng.integers(0, 2))
                if label:
                    toks[rng.integers(0, len(toks))] = MARKER
                out.append(Example(" ".join(toks), None, label))
            elif kind == "parity":
                toks = _sentence(rng, words, length).split()
                count = int(rng.integers(0, 4))
                pos = rng.choice(len(toks), size=count, replace=False)
                for p in pos:
                    toks[p] = MARKER
                out.append(Example(" ".join(toks), None, count % 2))
            elif kind == "pair-match":
                t1 = _TOPICS[rng.integers(0, len(_TOPICS))]
                same = int(rng.integers(0, 2))
                t2 = t1 if same else _TOPICS[(int(_TOPICS.index(t1)) +
                                              1 + int(rng.integers(0, len(_TOPICS) - 1)))
                                             % len(_TOPICS)]
                # topic leads each sentence; the label compares them across
                # the separator
                s1 = [t1] + _sentence(rng, words, length - 1).split()
                s2 = [t2] + _sentence(rng, words, length - 1).split()
                out.append(Example(" ".join(s1), " ".join(s2), same))
            elif kind == "regression-count":
                toks = _sentence(rng, words, length).split()
                count = int(rng.integers(0, length + 1))
                pos = rng.choice(len(toks), size=count, replace=False)
                for p in pos:
                    toks[p] = MARKER
                out.append(Example(" ".join(toks), None, count / length))
            else:
                raise DataError(f"unknown synthetic task kind {kind!r}")
        return out

    if kind == "regression-count":
        spec = TaskSpec(f"synth-{kind}", "regression", metric="pearson", schema="single")
    else:
        schema = "pair" if kind == "pair-match" else "single"
        spec = TaskSpec(f"synth-{kind}", "classification", 2, "accuracy", schema)
    return spec, Dataset(make(train_size), "train"), Dataset(make(dev_size), "dev")
