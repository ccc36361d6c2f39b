"""Command-line entry point: ``rotateqvs {train,eval,analyze,check,synth}``."""
from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import itertools
import logging
import sys
from pathlib import Path

import numpy as np

from . import patterns
from .data import build_filter_index, load_dataset
from .evaluation import EvalReport, evaluate, metrics
from .exceptions import (InfeasibleSpecError, MalformedLineError, ShapeMismatchError, UnknownDatasetError,
                         UnknownLabelError, ZeroNormError)
from .model import load_checkpoint, save_checkpoint
from .selfcheck import SUITES, run_suites
from .synthetic import SyntheticSpec, generate, write_dataset
from .training import DATASET_TIME_MODES, TrainConfig, default_config, train, write_log_csv

logger = logging.getLogger("rotateqvs")

# flag name -> TrainConfig field
CONFIG_FLAGS = {
    "dim": "dim", "lr": "lr", "margin": "margin", "neg-ratio": "neg_ratio", "granularity": "granularity",
    "epochs": "epochs", "batch-size": "batch_size", "valid-every": "valid_every", "seed": "seed",
    "threads": "threads", "score-agg": "score_agg",
}
_FIELD_TYPES = {"dim": int, "lr": float, "margin": float, "neg_ratio": int, "granularity": int, "epochs": int,
                "batch_size": int, "valid_every": int, "seed": int, "threads": int, "score_agg": str}


class RunManifest:
    """``manifest.txt`` under the output directory; rewritten with checksums on completion."""

    def __init__(self, out_dir: Path, command: str, argv: list[str], **fields):
        self.path = out_dir / "manifest.txt"
        self.entries = {"command": command, "argv": " ".join(argv),
                        "started": dt.datetime.now().isoformat(timespec="seconds"), **fields}
        self.checksums: dict[str, str] = {}
        out_dir.mkdir(parents=True, exist_ok=True)
        self.write()

    def write(self) -> None:
        lines = [f"{k}={v}" for k, v in self.entries.items()]
        lines += [f"sha256 {name} {digest}" for name, digest in sorted(self.checksums.items())]
        self.path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    def finish(self, artifacts) -> None:
        for p in artifacts:
            p = Path(p)
            if p.is_file():
                rel = p.relative_to(self.path.parent).as_posix()
                self.checksums[rel] = hashlib.sha256(p.read_bytes()).hexdigest()
        self.entries["finished"] = dt.datetime.now().isoformat(timespec="seconds")
        self.write()


def read_config_file(path) -> dict:
    """Flat ``key=value`` lines; keys are flag names (``neg-ratio``) or field names (``neg_ratio``)."""
    values = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        field = CONFIG_FLAGS.get(key, key.replace("-", "_"))
        if not sep or field not in _FIELD_TYPES:
            raise ValueError(f"{path}:{line_no}: expected key=value with a known key, got {line!r}")
        values[field] = _FIELD_TYPES[field](value.strip())
    return values


def resolve_config(args) -> TrainConfig:
    config = TrainConfig()
    if args.dataset:
        config = default_config(args.dataset)
    if args.config:
        config = config.updated(**read_config_file(args.config))
    flags = {field: getattr(args, flag.replace("-", "_"), None) for flag, field in CONFIG_FLAGS.items()}
    return config.updated(**flags)


def _time_mode(args) -> str:
    if args.time_mode:
        return args.time_mode
    return DATASET_TIME_MODES.get((args.dataset or "").lower(), "date")


def _load(args, granularity):
    if not args.data_dir:
        raise ValueError("--data-dir is required")
    return load_dataset(args.data_dir, _time_mode(args), granularity, name=args.dataset or "")


def _print_report(label: str, report: EvalReport) -> None:
    print(label)
    print(report.to_text())


def cmd_train(args) -> int:
    config = resolve_config(args)
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [config.seed]
    out = Path(args.out)
    if not args.data_dir or not Path(args.data_dir).is_dir():
        raise FileNotFoundError(f"dataset directory not found: {args.data_dir}")
    manifest = RunManifest(out, "train", sys.argv, dataset=args.dataset or "", data_dir=args.data_dir,
                           time_mode=_time_mode(args), seeds=",".join(map(str, seeds)),
                           out=out, **{f"config.{k}": v for k, v in vars(config).items()})
    dataset = _load(args, config.granularity)
    if args.dump_vocab:
        dataset.vocab.dump(out / "vocab")
    filter_index = build_filter_index(dataset.train, dataset.valid, dataset.test)
    artifacts, reports = [], []
    for seed in seeds:
        run_out = out if len(seeds) == 1 else out / f"seed_{seed}"
        run_out.mkdir(parents=True, exist_ok=True)
        run_config = config.updated(seed=seed)
        result = train(dataset, run_config, filter_index=filter_index, checkpoint_path=run_out / "checkpoint.bin")
        # the returned (best) parameters, also when no validation ran
        save_checkpoint(run_out / "checkpoint.bin", result.params, score_agg=run_config.score_agg, seed=seed,
                        epoch=result.best_epoch, granularity=run_config.granularity)
        write_log_csv(run_out / "train_log.csv", result.log)
        artifacts += [run_out / "checkpoint.bin", run_out / "train_log.csv"]
        if len(dataset.test):
            report = evaluate(dataset.test, result.params, filter_index, run_config.score_agg, run_config.threads)
            report.write_csv(run_out / "eval.csv")
            artifacts.append(run_out / "eval.csv")
            _print_report(f"seed {seed}: test (best epoch {result.best_epoch})", report)
            reports.append(report)
    if len(reports) > 1:
        mean = EvalReport(**{k: float(np.mean([getattr(r, k) for r in reports]))
                             for k in ("mrr", "hits1", "hits3", "hits10")},
                          n_queries=reports[0].n_queries)
        mean.write_csv(out / "eval.csv")
        artifacts.append(out / "eval.csv")
        _print_report(f"mean over {len(reports)} seeds", mean)
    manifest.finish(artifacts)
    return 0


def _load_for_checkpoint(args):
    params, header = load_checkpoint(args.checkpoint)
    granularity = args.granularity or int(header.get("granularity", 1))
    dataset = _load(args, granularity)
    expected = (dataset.n_entities, dataset.n_relations, dataset.n_timestamps)
    found = (params.n_entities, params.n_relations, params.n_timestamps)
    if expected != found:
        raise ShapeMismatchError(
            f"checkpoint has (entities, relations, timestamps)={found} but the dataset has {expected}"
        )
    return params, header, dataset


def cmd_eval(args) -> int:
    params, header, dataset = _load_for_checkpoint(args)
    out = Path(args.out)
    manifest = RunManifest(out, "eval", sys.argv, checkpoint=args.checkpoint, data_dir=args.data_dir,
                           split=args.split, filtered=not args.raw)
    index = None if args.raw else build_filter_index(dataset.train, dataset.valid, dataset.test)
    report = evaluate(dataset.split(args.split), params, index, header.get("score_agg", "l1"), args.threads or 1)
    report.write_csv(out / "eval.csv")
    _print_report(f"{args.split} ({'raw' if args.raw else 'time-wise filtered'})", report)
    manifest.finish([out / "eval.csv"])
    return 0


def _relation_row(vocab, name: str, r_id: int, **values) -> dict:
    return {"analysis": name, "relation": vocab.relations[r_id], **values}


def cmd_analyze(args) -> int:
    params, header, dataset = _load_for_checkpoint(args)
    vocab = dataset.vocab
    out = Path(args.out)
    manifest = RunManifest(out, f"analyze {args.analysis}", sys.argv, checkpoint=args.checkpoint,
                           data_dir=args.data_dir)
    artifacts = []
    if args.analysis == "symmetry":
        rows = []
        for label in args.relation:
            r = vocab.relation_id(label)
            rows.append(_relation_row(vocab, "real_part_magnitude", r,
                                      real_part_magnitude=patterns.real_part_magnitude(r, params)))
        path = out / "symmetry.csv"
        patterns.write_pattern_rows(path, rows)
    elif args.analysis == "inversion":
        r1, r2 = vocab.relation_id(args.relation[0]), vocab.relation_id(args.relation2)
        real_res, imag_res = patterns.inversion_residual(r1, r2, params)
        rows = [_relation_row(vocab, "inversion_residual", r1, relation2=vocab.relations[r2],
                              real_residual=real_res, imag_residual=imag_res)]
        path = out / "inversion.csv"
        patterns.write_pattern_rows(path, rows)
    elif args.analysis == "deduction":
        r1, r2 = vocab.relation_id(args.relation[0]), vocab.relation_id(args.relation2)
        t1, t2 = vocab.time_id(args.time), vocab.time_id(args.time2)
        norm_gap, real_gap = patterns.deduction_check(r1, r2, t1, t2, params)
        moved = patterns.temporal_transport(r1, t1, t2, params)
        cos = patterns.cosine_similarity(moved, params.relation_vector(r2))
        rows = [_relation_row(vocab, "deduction_check", r1, relation2=vocab.relations[r2], time=args.time,
                              time2=args.time2, norm_gap=norm_gap, real_gap=real_gap, transported_cosine=cos)]
        path = out / "deduction.csv"
        patterns.write_pattern_rows(path, rows)
    else:
        path = out / "evolution_histogram.csv"
        table = _evolution(args, params, dataset)
        table.write_csv(path)
        if not len(table):
            print(f"no fact pairs between {args.head!r} and {args.tail!r} at increasing timestamps")
        else:
            print(f"pairs={len(table.positive_scores)} positive_mean={table.positive_scores.mean():.4f} "
                  f"negative_mean={table.negative_scores.mean():.4f}")
        rows = None
    if rows:
        for row in rows:
            print(", ".join(f"{k}={v}" for k, v in row.items()))
    artifacts.append(path)
    manifest.finish(artifacts)
    return 0


def _evolution(args, params, dataset):
    vocab = dataset.vocab
    s, o = vocab.entity_id(args.head), vocab.entity_id(args.tail)
    base_rel = vocab.relation_id(args.relation[0]) if args.relation else None
    facts = dataset.all_quadruples()
    facts = np.unique(facts[(facts[:, 0] == s) & (facts[:, 2] == o)], axis=0)
    pairs = [(a, b) for a, b in itertools.permutations(facts.tolist(), 2)
             if a[3] < b[3] and (base_rel is None or a[1] == base_rel)]
    rng = np.random.default_rng(args.seed)
    if args.samples and len(pairs) > args.samples:
        pairs = [pairs[i] for i in sorted(rng.choice(len(pairs), size=args.samples, replace=False))]
    return patterns.evolution_histogram(pairs, params, rng, bin_width=args.bin_width)


def cmd_check(args) -> int:
    out = Path(args.out)
    manifest = RunManifest(out, "check", sys.argv, suites=",".join(args.suite or SUITES), seed=args.seed)
    results = run_suites(args.suite, seed=args.seed)
    lines = [result.line() for result in results]
    print("\n".join(lines))
    (out / "check.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    manifest.finish([out / "check.txt"])
    return 0 if all(r.passed for r in results) else 1


def cmd_synth(args) -> int:
    spec = SyntheticSpec(
        n_entities=args.entities, n_symmetric_rels=args.symmetric, n_asymmetric_rels=args.asymmetric,
        n_inverse_pairs=args.inverse, n_evolution_chains=args.evolution, n_timestamps=args.timestamps,
        facts_per_relation=args.facts_per_relation, chain_length=args.chain_length, seed=args.seed,
    )
    spec.validate()
    out = Path(args.out)
    manifest = RunManifest(out, "synth", sys.argv, **{f"spec.{k}": v for k, v in vars(spec).items()})
    dataset = generate(spec)
    write_dataset(dataset, out)
    print(", ".join(f"{k}={v}" for k, v in dataset.stats().items()))
    manifest.finish([out / f"{name}.txt" for name in ("train", "valid", "test")])
    return 0


def _add_data_flags(p, granularity=True):
    p.add_argument("--dataset", help="benchmark name (icews14, icews05-15, yago11k, gdelt) selecting defaults")
    p.add_argument("--data-dir", help="directory with train/valid/test files")
    p.add_argument("--time-mode", choices=("date", "year", "interval"))
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--threads", type=int)
    if granularity:
        p.add_argument("--granularity", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rotateqvs", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and evaluate it on the test split")
    _add_data_flags(p)
    p.add_argument("--config", help="flat key=value file (keys match flag names)")
    p.add_argument("--dim", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--margin", type=float)
    p.add_argument("--neg-ratio", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--valid-every", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--seeds", help="comma-separated seeds; runs each and reports the mean")
    p.add_argument("--score-agg", choices=("l1", "l2"))
    p.add_argument("--dump-vocab", action="store_true", help="write id<TAB>label files under OUT/vocab")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    _add_data_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("train", "valid", "test"), default="test")
    p.add_argument("--raw", action="store_true", help="unfiltered ranking (debugging only)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze", help="relation-pattern diagnostics as CSV")
    p.add_argument("analysis", choices=("symmetry", "inversion", "evolution", "deduction"))
    _add_data_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--relation", action="append", help="relation label (repeat for several in symmetry)")
    p.add_argument("--relation2", help="second relation for inversion/deduction")
    p.add_argument("--time", help="first time label for deduction")
    p.add_argument("--time2", help="second time label for deduction")
    p.add_argument("--head", help="head entity label for evolution")
    p.add_argument("--tail", help="tail entity label for evolution")
    p.add_argument("--samples", type=int, default=250, help="max fact pairs for evolution")
    p.add_argument("--bin-width", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("check", help="run the self-test suites")
    p.add_argument("--suite", action="append", choices=SUITES)
    p.add_argument("--out", default="out")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("synth", help="write a synthetic graph with planted relation patterns")
    p.add_argument("--out", default="synthetic")
    p.add_argument("--entities", type=int, default=50)
    p.add_argument("--symmetric", type=int, default=2)
    p.add_argument("--asymmetric", type=int, default=2)
    p.add_argument("--inverse", type=int, default=2)
    p.add_argument("--evolution", type=int, default=2)
    p.add_argument("--timestamps", type=int, default=20)
    p.add_argument("--facts-per-relation", type=int, default=20)
    p.add_argument("--chain-length", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def _validate_analyze(args) -> None:
    needs = {
        "symmetry": ("relation",),
        "inversion": ("relation", "relation2"),
        "deduction": ("relation", "relation2", "time", "time2"),
        "evolution": ("head", "tail"),
    }[args.analysis]
    missing = [f"--{n.replace('_', '-')}" for n in needs if not getattr(args, n)]
    if missing:
        raise ValueError(f"analyze {args.analysis} requires {', '.join(missing)}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        if args.command == "analyze":
            _validate_analyze(args)
        return args.func(args)
    except UnknownLabelError as exc:
        print(f"error: UnknownLabel: {exc}", file=sys.stderr)
        return 3
    except ShapeMismatchError as exc:
        print(f"error: ShapeMismatch: {exc}", file=sys.stderr)
        return 4
    except InfeasibleSpecError as exc:
        print(f"error: InfeasibleSpec: {exc}", file=sys.stderr)
        return 5
    except (FileNotFoundError, MalformedLineError, UnknownDatasetError, ZeroNormError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
