"""Quadruple files, vocabularies, time binning, negative sampling and filter index."""
from __future__ import annotations

import datetime as dt
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .exceptions import MalformedLineError, UnknownLabelError

logger = logging.getLogger(__name__)

TIME_MODES = ("date", "year", "interval")
SPLITS = ("train", "valid", "test")


class RawFact(NamedTuple):
    head: str
    relation: str
    tail: str
    time: str


class Quadruple(NamedTuple):
    s: int
    r: int
    o: int
    t: int


_YEAR = re.compile(r"^\s*(-?\d+)(?:-|\s*$)")


def _year_token(token: str) -> str | None:
    match = _YEAR.match(token)
    return str(int(match.group(1))) if match else None


def _parse_time(fields: list[str], time_mode: str) -> str | None:
    if time_mode == "date":
        try:
            return dt.date.fromisoformat(fields[3].strip()).isoformat()
        except ValueError:
            return None
    if time_mode == "year":
        return _year_token(fields[3])
    # interval: begin year, falling back to the end year when the begin is unknown ("####")
    for token in fields[3:5]:
        year = _year_token(token)
        if year is not None:
            return year
    return None


def parse_quadruple_file(path, time_mode: str = "date") -> list[RawFact]:
    """Read a tab-separated fact file.

    ``date`` and ``year`` modes expect 4 columns; ``interval`` mode accepts 4
    or 5 columns (begin, end) and keeps the begin year.
    """
    if time_mode not in TIME_MODES:
        raise ValueError(f"time_mode must be one of {TIME_MODES}, got {time_mode!r}")
    expected = (4, 5) if time_mode == "interval" else (4,)
    facts = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) not in expected:
                raise MalformedLineError(line_no, f"expected {expected} columns, got {len(fields)}", path)
            label = _parse_time(fields, time_mode)
            if label is None:
                raise MalformedLineError(line_no, f"unparsable time {fields[3]!r}", path)
            facts.append(RawFact(fields[0], fields[1], fields[2], label))
    return facts


def _time_sort_key(label: str):
    try:
        return (0, dt.date.fromisoformat(label).toordinal())
    except ValueError:
        pass
    try:
        return (1, int(label))
    except ValueError:
        return (2, label)


def bin_timestamps(labels: Iterable[str], granularity: int = 1) -> dict[str, int]:
    """Map raw time labels to ids: sort chronologically, enumerate, integer-divide by ``granularity``."""
    if granularity < 1:
        raise ValueError("granularity must be >= 1")
    distinct = sorted(set(labels), key=_time_sort_key)
    return {label: i // granularity for i, label in enumerate(distinct)}


@dataclass
class Vocabulary:
    entities: list[str]
    relations: list[str]
    time_map: dict[str, int]
    entity_ids: dict[str, int] = field(init=False, repr=False)
    relation_ids: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.entity_ids = {e: i for i, e in enumerate(self.entities)}
        self.relation_ids = {r: i for i, r in enumerate(self.relations)}

    @classmethod
    def build(cls, facts: Iterable[RawFact], granularity: int = 1) -> "Vocabulary":
        facts = list(facts)
        entities = sorted({f.head for f in facts} | {f.tail for f in facts})
        relations = sorted({f.relation for f in facts})
        return cls(entities, relations, bin_timestamps((f.time for f in facts), granularity))

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    @property
    def n_timestamps(self) -> int:
        return max(self.time_map.values()) + 1 if self.time_map else 0

    def time_labels(self, t: int) -> list[str]:
        """All raw labels binned into timestamp id ``t`` (chronological)."""
        return sorted((lab for lab, i in self.time_map.items() if i == t), key=_time_sort_key)

    def entity_id(self, label: str) -> int:
        try:
            return self.entity_ids[label]
        except KeyError:
            raise UnknownLabelError(f"unknown entity {label!r}") from None

    def relation_id(self, label: str) -> int:
        try:
            return self.relation_ids[label]
        except KeyError:
            raise UnknownLabelError(f"unknown relation {label!r}") from None

    def time_id(self, label: str) -> int:
        try:
            return self.time_map[label]
        except KeyError:
            raise UnknownLabelError(f"unknown time label {label!r}") from None

    def encode(self, fact: RawFact) -> Quadruple:
        return Quadruple(
            self.entity_id(fact.head),
            self.relation_id(fact.relation),
            self.entity_id(fact.tail),
            self.time_id(fact.time),
        )

    def encode_all(self, facts: Sequence[RawFact]) -> np.ndarray:
        out = np.empty((len(facts), 4), dtype=np.int64)
        for i, fact in enumerate(facts):
            out[i] = self.encode(fact)
        return out

    def decode(self, quad) -> tuple[str, str, str, str]:
        """Inverse of :meth:`encode`; the time is the earliest label in the bin."""
        s, r, o, t = (int(x) for x in quad)
        return self.entities[s], self.relations[r], self.entities[o], self.time_labels(t)[0]

    def dump(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for name, labels in (("entities.txt", self.entities), ("relations.txt", self.relations)):
            with open(directory / name, "w", encoding="utf-8") as fh:
                fh.writelines(f"{i}\t{lab}\n" for i, lab in enumerate(labels))
        with open(directory / "timestamps.txt", "w", encoding="utf-8") as fh:
            for lab in sorted(self.time_map, key=_time_sort_key):
                fh.write(f"{self.time_map[lab]}\t{lab}\n")


@dataclass
class Dataset:
    """Integer-coded splits, each an ``(n, 4)`` int64 array of ``(s, r, o, t)``."""

    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    vocab: Vocabulary
    granularity: int = 1
    name: str = ""
    metadata: dict = field(default_factory=dict, repr=False)

    @property
    def n_entities(self) -> int:
        return self.vocab.n_entities

    @property
    def n_relations(self) -> int:
        return self.vocab.n_relations

    @property
    def n_timestamps(self) -> int:
        return self.vocab.n_timestamps

    def split(self, name: str) -> np.ndarray:
        if name not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {name!r}")
        return getattr(self, name)

    def all_quadruples(self) -> np.ndarray:
        return np.concatenate([self.train, self.valid, self.test], axis=0)

    def stats(self) -> dict[str, int]:
        return {
            "entities": self.n_entities,
            "relations": self.n_relations,
            "timestamps": self.n_timestamps,
            "train": len(self.train),
            "valid": len(self.valid),
            "test": len(self.test),
        }


def _find_split_file(directory: Path, split: str) -> Path:
    for name in (split, f"{split}.txt", f"{split}.tsv"):
        if (directory / name).is_file():
            return directory / name
    matches = sorted(directory.glob(f"*{split}*.txt")) + sorted(directory.glob(f"*{split}*.tsv"))
    if len(matches) == 1:
        return matches[0]
    raise FileNotFoundError(f"no {split} file found in {directory}")


def load_dataset(directory, time_mode: str = "date", granularity: int = 1, name: str = "") -> Dataset:
    """Load train/valid/test files from ``directory``; vocabularies span all three splits."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"dataset directory not found: {directory}")
    raw = {split: parse_quadruple_file(_find_split_file(directory, split), time_mode) for split in SPLITS}
    vocab = Vocabulary.build([f for facts in raw.values() for f in facts], granularity)
    encoded = {split: vocab.encode_all(facts) for split, facts in raw.items()}
    logger.info("loaded %s: %s", directory, {k: len(v) for k, v in encoded.items()})
    return Dataset(granularity=granularity, vocab=vocab, name=name or directory.name, **encoded)


def write_quadruple_file(path, facts: Iterable[Sequence[str]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for fact in facts:
            if any("\t" in str(x) or "\n" in str(x) for x in fact):
                raise ValueError(f"fields must not contain tabs or newlines: {fact!r}")
            fh.write("\t".join(str(x) for x in fact) + "\n")


def corrupt(quads: np.ndarray, n_neg: int, rng: np.random.Generator, n_entities: int) -> np.ndarray:
    """Corrupt each row of ``quads`` ``n_neg`` times; returns ``(B, n_neg, 4)``.

    Each negative replaces the head or the tail (chosen uniformly) with a
    uniform entity different from the original one.  No filtering against
    true facts.
    """
    if n_neg < 1:
        raise ValueError("n_neg must be >= 1")
    if n_entities < 2:
        raise ValueError("corruption needs at least two entities")
    quads = np.asarray(quads, dtype=np.int64).reshape(-1, 4)
    out = np.repeat(quads[:, None, :], n_neg, axis=1)
    column = np.where(rng.integers(0, 2, size=out.shape[:2]) == 0, 0, 2)
    original = np.take_along_axis(out, column[..., None], axis=2)[..., 0]
    replacement = rng.integers(0, n_entities - 1, size=out.shape[:2])
    replacement += replacement >= original
    np.put_along_axis(out, column[..., None], replacement[..., None], axis=2)
    return out


def negative_samples(q, n_neg: int, rng: np.random.Generator, n_entities: int) -> list[Quadruple]:
    return [Quadruple(*map(int, row)) for row in corrupt(np.asarray(q)[None], n_neg, rng, n_entities)[0]]


@dataclass(frozen=True)
class FilterIndex:
    """True completions per (s, r, t) and per (r, o, t) over all splits."""

    tail_index: dict
    head_index: dict

    def true_tails(self, s: int, r: int, t: int) -> frozenset:
        return self.tail_index.get((s, r, t), frozenset())

    def true_heads(self, r: int, o: int, t: int) -> frozenset:
        return self.head_index.get((r, o, t), frozenset())


def build_filter_index(*splits) -> FilterIndex:
    tails: dict = {}
    heads: dict = {}
    for split in splits:
        for s, r, o, t in np.asarray(split, dtype=np.int64).reshape(-1, 4).tolist():
            tails.setdefault((s, r, t), set()).add(o)
            heads.setdefault((r, o, t), set()).add(s)
    return FilterIndex(
        {k: frozenset(v) for k, v in tails.items()},
        {k: frozenset(v) for k, v in heads.items()},
    )
