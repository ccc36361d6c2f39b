"""Small temporal graphs with planted symmetric, asymmetric, inverse and evolving relations.

Facts come in *units*: a symmetric fact and its mirror, an inverse fact and
its counterpart, an evolution pair ``(s, r1, o, t1), (s, r2, o, t2)``, or an
asymmetric fact recurring at two timestamps.  About 40% of units lend one
member to valid/test, so every held-out fact has its pattern partner in
train.  Within a relation the ``(s, o)`` pairs are disjoint, which keeps each
relation one-to-one and makes the asymmetric guarantee hold at every time.
"""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import SPLITS, Dataset, RawFact, Vocabulary, write_quadruple_file
from .exceptions import InfeasibleSpecError

EPOCH_DATE = dt.date(2014, 1, 1)
HELD_OUT_UNIT_FRACTION = 0.4


@dataclass(frozen=True)
class SyntheticSpec:
    n_entities: int = 50
    n_symmetric_rels: int = 2
    n_asymmetric_rels: int = 2
    n_inverse_pairs: int = 2
    n_evolution_chains: int = 2
    n_timestamps: int = 20
    facts_per_relation: int = 20
    chain_length: int = 2
    seed: int = 0

    def validate(self) -> None:
        counts = (self.n_entities, self.n_symmetric_rels, self.n_asymmetric_rels, self.n_inverse_pairs,
                  self.n_evolution_chains, self.n_timestamps, self.facts_per_relation)
        if min(counts) < 0:
            raise InfeasibleSpecError("all counts must be >= 0")
        if self.n_symmetric_rels + self.n_asymmetric_rels + self.n_inverse_pairs + self.n_evolution_chains == 0:
            raise InfeasibleSpecError("at least one relation family must be non-empty")
        if self.n_entities < 2:
            raise InfeasibleSpecError("patterns between distinct entities need at least 2 entities")
        if self.n_timestamps < 1 or self.facts_per_relation < 1:
            raise InfeasibleSpecError("need at least one timestamp and one fact per relation")
        if self.facts_per_relation > self.n_entities // 2:
            raise InfeasibleSpecError(
                f"facts_per_relation={self.facts_per_relation} exceeds the {self.n_entities // 2} "
                "disjoint entity pairs available"
            )
        if self.n_evolution_chains and (self.chain_length < 2 or self.chain_length > self.n_timestamps):
            raise InfeasibleSpecError("evolution chains need 2 <= chain_length <= n_timestamps")


def _date(t: int) -> str:
    return (EPOCH_DATE + dt.timedelta(days=int(t))).isoformat()


def _entity(i: int, width: int) -> str:
    return f"e{i:0{width}d}"


def generate(spec: SyntheticSpec) -> Dataset:
    """Build the planted graph; ``dataset.metadata`` records what was planted (by label)."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    width = len(str(spec.n_entities - 1))
    ent = [_entity(i, width) for i in range(spec.n_entities)]
    n_pairs = spec.facts_per_relation

    def pairs():
        perm = rng.permutation(spec.n_entities)
        return [(ent[perm[2 * i]], ent[perm[2 * i + 1]]) for i in range(n_pairs)]

    units: list[list[tuple[str, str, str, str]]] = []
    planted: dict = {"symmetric": [], "asymmetric": [], "inverse": [], "evolution": [], "evolution_pairs": []}

    for i in range(spec.n_symmetric_rels):
        rel = f"sym_{i}"
        planted["symmetric"].append(rel)
        for s, o in pairs():
            t = _date(rng.integers(spec.n_timestamps))
            units.append([(s, rel, o, t), (o, rel, s, t)])

    for i in range(spec.n_asymmetric_rels):
        rel = f"asym_{i}"
        planted["asymmetric"].append(rel)
        for s, o in pairs():
            times = rng.choice(spec.n_timestamps, size=min(2, spec.n_timestamps), replace=False)
            units.append([(s, rel, o, _date(t)) for t in times])

    for i in range(spec.n_inverse_pairs):
        r1, r2 = f"inv_{i}_a", f"inv_{i}_b"
        planted["inverse"].append((r1, r2))
        for s, o in pairs():
            t = _date(rng.integers(spec.n_timestamps))
            units.append([(s, r1, o, t), (o, r2, s, t)])

    for i in range(spec.n_evolution_chains):
        rels = [f"evo_{i}_{j}" for j in range(spec.chain_length)]
        times = [_date(t) for t in sorted(rng.choice(spec.n_timestamps, size=spec.chain_length, replace=False))]
        planted["evolution"].append((rels, times))
        for s, o in pairs():
            unit = [(s, rel, o, t) for rel, t in zip(rels, times)]
            units.append(unit)
            planted["evolution_pairs"].extend(zip(unit[:-1], unit[1:]))

    splits: dict[str, list] = {name: [] for name in SPLITS}
    order = rng.permutation(len(units))
    n_split_units = int(HELD_OUT_UNIT_FRACTION * len(units))
    for rank_, u in enumerate(order):
        unit = list(units[u])
        if rank_ < n_split_units and len(unit) > 1:
            held = unit.pop(int(rng.integers(len(unit))))
            splits["valid" if rank_ % 2 == 0 else "test"].append(held)
        splits["train"].extend(unit)

    # transductive: held-out facts may only use entities/relations seen in train
    seen_ent = {x for f in splits["train"] for x in (f[0], f[2])}
    seen_rel = {f[1] for f in splits["train"]}
    for name in ("valid", "test"):
        keep = []
        for f in splits[name]:
            if f[0] in seen_ent and f[2] in seen_ent and f[1] in seen_rel:
                keep.append(f)
            else:
                splits["train"].append(f)
                seen_ent.update((f[0], f[2]))
                seen_rel.add(f[1])
        splits[name] = keep

    raw = {name: [RawFact(*f) for f in facts] for name, facts in splits.items()}
    vocab = Vocabulary.build([f for facts in raw.values() for f in facts])
    dataset = Dataset(
        train=vocab.encode_all(raw["train"]),
        valid=vocab.encode_all(raw["valid"]),
        test=vocab.encode_all(raw["test"]),
        vocab=vocab,
        name="synthetic",
        metadata=planted,
    )
    return dataset


@dataclass
class PlantedIds:
    """Planted structure translated to integer ids of a dataset."""

    symmetric: list[int]
    asymmetric: list[int]
    inverse: list[tuple[int, int]]
    evolution_pairs: np.ndarray  # (n, 2, 4): base quad, target quad


def planted_ids(dataset: Dataset) -> PlantedIds:
    meta, vocab = dataset.metadata, dataset.vocab
    pairs = [[vocab.encode(RawFact(*base)), vocab.encode(RawFact(*target))]
             for base, target in meta["evolution_pairs"]]
    return PlantedIds(
        symmetric=[vocab.relation_id(r) for r in meta["symmetric"]],
        asymmetric=[vocab.relation_id(r) for r in meta["asymmetric"]],
        inverse=[(vocab.relation_id(a), vocab.relation_id(b)) for a, b in meta["inverse"]],
        evolution_pairs=np.asarray(pairs, dtype=np.int64).reshape(-1, 2, 4),
    )


def write_dataset(dataset: Dataset, directory) -> None:
    """Write ``train.txt``/``valid.txt``/``test.txt`` in the standard 4-column TSV format."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name in SPLITS:
        write_quadruple_file(directory / f"{name}.txt", (dataset.vocab.decode(q) for q in dataset.split(name)))
