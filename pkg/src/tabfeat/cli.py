"""Command line: ``tabfeat generate | apply | simulate``.

Exit codes: 0 success, 1 data error (unreadable or mismatched input),
2 configuration error (bad or missing flags).  Only ``simulate`` writes to
stdout; diagnostics go to stderr.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .dataframe import FeatureKind, load_csv, read_csv_rows, render_column
from .exceptions import ConfigError, EvaluationError, ParseError, SchemaError, TabfeatError
from .gbdt import STAGE1_PARAMS, STAGE2_PARAMS
from .ops import Mode, transform
from .pipeline import PipelineConfig, TransformSpec, run
from .synthlab import SUMMARY_HEADER, SynthConfig, theory_check

log = logging.getLogger("tabfeat")

EXIT_OK, EXIT_DATA, EXIT_CONFIG = 0, 1, 2

# generate flags and their defaults; None marks "required"
GENERATE_FLAGS = {
    "input": None,
    "target": None,
    "out": "tabfeat-out",
    "top_k": 10,
    "blocks": 1,
    "folds": 5,
    "max_order": 1,
    "mode": "trainfit",
    "valid_fraction": 0.2,
    "seed": 0,
    "threads": None,
    "task": None,
    "stage1_trees": STAGE1_PARAMS.n_trees,
    "stage2_trees": STAGE2_PARAMS.n_trees,
    "learning_rate": STAGE1_PARAMS.learning_rate,
    "max_leaves": STAGE1_PARAMS.max_leaves,
    "operators": None,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(f"{self.prog}: {message}")


def _build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--verbose", action="store_true", help="log progress to stderr")
    p = _Parser(prog="tabfeat", description="Automated feature generation for tables.")
    p.add_argument("--version", action="version", version=f"tabfeat {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("generate", parents=[common],
                       help="search for features and write a transform spec")
    g.add_argument("--config", help="file of key=value lines; explicit flags win")
    g.add_argument("--input", help="CSV file with a header row")
    g.add_argument("--target", help="name of the target column")
    g.add_argument("--out", help="output directory (default: tabfeat-out)")
    g.add_argument("--top-k", type=int, help="features kept per order (default 10)")
    g.add_argument("--blocks", type=int, help="data blocks for halving, a power of two (default 1)")
    g.add_argument("--folds", type=int, help="folds for out-of-fold base predictions (default 5)")
    g.add_argument("--max-order", type=int, help="highest expression order (default 1)")
    g.add_argument("--mode", choices=[m.value for m in Mode])
    g.add_argument("--valid-fraction", type=float, help="rows held out for the final metric")
    g.add_argument("--seed", type=int)
    g.add_argument("--threads", type=int, help="worker threads (default: all cores)")
    g.add_argument("--task", choices=["regression", "binary", "multiclass"])
    g.add_argument("--schema", action="append", default=[], metavar="COLUMN=KIND",
                   help="force a column kind (numerical, categorical, ordinal)")
    g.add_argument("--stage1-trees", type=int)
    g.add_argument("--stage2-trees", type=int)
    g.add_argument("--learning-rate", type=float)
    g.add_argument("--max-leaves", type=int)
    g.add_argument("--operators", help="comma-separated operator names (default: all)")

    a = sub.add_parser("apply", parents=[common], help="append the features of a transform spec to a CSV")
    a.add_argument("--spec", required=True)
    a.add_argument("--input", required=True)
    a.add_argument("--output", required=True)

    s = sub.add_parser("simulate", parents=[common], help="grouped synthetic data: raw vs group-mean models")
    s.add_argument("--scenario", default="bernoulli")
    s.add_argument("--k1", type=int, default=2000, help="training groups")
    s.add_argument("--k2", type=int, default=500, help="test groups")
    s.add_argument("--h", type=int, default=50, help="rows per group")
    s.add_argument("--d", type=int, default=1, help="numerical features (gaussian only)")
    s.add_argument("--noise", type=float, default=0.1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--dump-dir", help="also write train.csv and test.csv here")
    return p


def _read_config_file(path):
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"--config: cannot read {path}: {e.strerror}") from None
    for n, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"--config {path} line {n}: expected key=value")
        key = key.strip().replace("-", "_")
        if key != "schema" and key not in GENERATE_FLAGS:
            raise ConfigError(f"--config {path} line {n}: unknown key {key!r}")
        if key == "schema":
            out.setdefault(key, []).append(value.strip())
        else:
            out[key] = value.strip()
    return out


def _parse_schema(items):
    hints = {}
    for item in items:
        name, sep, kind = item.rpartition("=")
        if not sep or not name:
            raise ConfigError(f"--schema {item!r}: expected COLUMN=KIND")
        try:
            hints[name] = FeatureKind(kind.strip().lower())
        except ValueError:
            raise ConfigError(f"--schema {item!r}: unknown kind {kind!r}") from None
    return hints


def _settings(args):
    """Merge defaults, the config file and explicit flags (in that order)."""
    merged = {k: v for k, v in GENERATE_FLAGS.items()}
    schema = []
    if args.config:
        from_file = _read_config_file(args.config)
        schema += from_file.pop("schema", [])
        merged.update(from_file)
    for key in GENERATE_FLAGS:
        value = getattr(args, key)
        if value is not None:
            merged[key] = value
    schema += args.schema
    for key in ("input", "target"):
        if merged[key] is None:
            raise ConfigError(f"--{key} is required (the {key} "
                              f"{'CSV file' if key == 'input' else 'column name'})")
    types = {"top_k": int, "blocks": int, "folds": int, "max_order": int, "seed": int,
             "valid_fraction": float, "stage1_trees": int, "stage2_trees": int,
             "learning_rate": float, "max_leaves": int, "threads": int}
    for key, typ in types.items():
        if merged[key] is not None:
            try:
                merged[key] = typ(merged[key])
            except ValueError:
                raise ConfigError(f"--{key.replace('_', '-')}: "
                                  f"invalid value {merged[key]!r}") from None
    merged["schema"] = _parse_schema(schema)
    return merged


def _pipeline_config(s):
    blocks = s["blocks"]
    if blocks < 1 or blocks & (blocks - 1):
        raise ConfigError(f"--blocks must be a power of two, got {blocks}")
    threads = s["threads"] or os.cpu_count() or 1
    try:
        mode = Mode(s["mode"])
    except ValueError:
        raise ConfigError(f"--mode: unknown mode {s['mode']!r}") from None
    trees = {"learning_rate": s["learning_rate"], "max_leaves": s["max_leaves"]}
    try:
        p1 = STAGE1_PARAMS.replace(n_trees=s["stage1_trees"], **trees)
        p2 = STAGE2_PARAMS.replace(n_trees=s["stage2_trees"], **trees)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    kw = {}
    if s["operators"]:
        kw["operators"] = tuple(o.strip() for o in s["operators"].split(",") if o.strip())
    return PipelineConfig(q=blocks.bit_length() - 1, k_folds=s["folds"], top_k=s["top_k"],
                          max_order=s["max_order"], mode=mode,
                          valid_fraction=s["valid_fraction"], seed=s["seed"],
                          threads=threads, stage1_params=p1, stage2_params=p2,
                          base_params=p2, **kw)


def cmd_generate(args):
    s = _settings(args)
    config = _pipeline_config(s)
    try:
        dataset = load_csv(s["input"], s["target"], s["schema"], s["task"])
    except OSError as e:
        raise ParseError(f"--input: cannot read {s['input']}: {e.strerror}") from None
    log.info("loaded %d rows, %d columns from %s", dataset.n_rows, len(dataset.columns),
             s["input"])
    spec, report = run(dataset, config)
    out = Path(s["out"])
    out.mkdir(parents=True, exist_ok=True)
    spec.save(out / "transforms.spec")
    (out / "report.txt").write_text(report.to_text() + "\n", encoding="utf-8")
    log.info("wrote %d features to %s", len(spec.exprs), out / "transforms.spec")
    return EXIT_OK


def cmd_apply(args):
    try:
        spec = TransformSpec.load(args.spec)
    except OSError as e:
        raise ParseError(f"--spec: cannot read {args.spec}: {e.strerror}") from None
    try:
        header, rows, _ = read_csv_rows(args.input)
    except OSError as e:
        raise ParseError(f"--input: cannot read {args.input}: {e.strerror}") from None
    needed = set()
    for e in spec.exprs:
        needed |= e.base_names()
    absent = sorted(n for n in needed if n not in header)
    if absent:
        raise SchemaError(f"--input {args.input} lacks base column(s): {', '.join(absent)}",
                          absent)
    hints = {n: k for n, k in spec.base_kinds.items() if n in needed}
    dataset = load_csv(args.input, None, hints)
    new = [transform(e, dataset, None, spec.stats) for e in spec.exprs
           if e.text not in header]
    rendered = [render_column(c) for c in new]
    with open(args.output, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header + [c.name for c in new])
        for i, row in enumerate(rows):
            w.writerow(row + [r[i] for r in rendered])
    return EXIT_OK


def cmd_simulate(args):
    cfg = SynthConfig(args.k1, args.k2, args.h, args.d, args.scenario, args.noise, args.seed)
    result = theory_check(cfg, dump_dir=args.dump_dir)
    print(SUMMARY_HEADER)
    print(result.summary())
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "apply": cmd_apply, "simulate": cmd_simulate}


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                            format="tabfeat: %(message)s", stream=sys.stderr)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_CONFIG
        return COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"tabfeat: configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParseError, SchemaError, EvaluationError, TabfeatError) as e:
        print(f"tabfeat: data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
