"""Configuration-driven command-line front end.

Subcommands: ``run`` (full benchmark), ``select`` (model selection only),
``attack`` (single-target debug window), ``report`` (render stored results).
Configs are TOML (see README for the schema); a previously written
``manifest.json`` is also accepted by ``--config``, which makes every
artifact reproducible from the manifest alone.

Exit codes: 0 success, 1 runtime failure, 2 config/usage error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import os
import sys

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .attacks import ATTACKS, AttackContext, apply_plan, get_attack
from .graph import Graph, load_graph, random_split, synthetic_sbm
from .harness import RunSpec, derive_seed, run_benchmark
from .models import margin, train
from .report import FORMATS, read_summary_json, render_matrix, write_report
from .selection import ConfigGrid, select

log = logging.getLogger("edgeflip")

THREADS_ENV_VAR = "EDGEFLIP_THREADS"
MANIFEST_FORMAT = "edgeflip-manifest"


class ConfigError(ValueError):
    """Invalid or incomplete run configuration; exits with status 2."""


@dataclass(frozen=True)
class RunConfig:
    """Validated contents of a run configuration file."""

    dataset: dict
    run: dict
    victim_grid: dict
    surrogate_grid: dict
    output_dir: str = "results"
    verbosity: int = 1
    threads: int = 1
    base_dir: str = "."

    def to_dict(self) -> dict:
        dataset = dict(self.dataset)
        # Absolutize file paths so a written manifest replays from anywhere.
        for key in ("features", "edges", "labels"):
            if key in dataset:
                dataset[key] = str(self._resolve(dataset[key]).resolve())
        return {
            "dataset": dataset,
            "run": self.run,
            "victim_grid": self.victim_grid,
            "surrogate_grid": self.surrogate_grid,
            "output": {
                "directory": self.output_dir,
                "verbosity": self.verbosity,
                "threads": self.threads,
            },
        }

    @classmethod
    def from_dict(cls, obj: dict, base_dir: str = ".") -> "RunConfig":
        for key in ("dataset", "run"):
            if key not in obj:
                raise ConfigError(f"missing required section [{key}]")
        output = obj.get("output", {})
        config = cls(
            dataset=dict(obj["dataset"]),
            run=dict(obj["run"]),
            victim_grid=dict(obj.get("victim_grid", {})),
            surrogate_grid=dict(obj.get("surrogate_grid", {})),
            output_dir=output.get("directory", "results"),
            verbosity=int(output.get("verbosity", 1)),
            threads=int(output.get("threads", 1)),
            base_dir=base_dir,
        )
        config.validate()
        return config

    def validate(self) -> None:
        synthetic = self.dataset.get("synthetic")
        paths = [k for k in ("features", "edges", "labels") if k in self.dataset]
        if synthetic is None and len(paths) != 3:
            raise ConfigError(
                "dataset must give either [dataset.synthetic] or all of "
                "dataset.features/edges/labels")
        if synthetic is None:
            for key in ("features", "edges", "labels"):
                path = self._resolve(self.dataset[key])
                if not path.exists():
                    raise ConfigError(f"dataset.{key}: no such file: {path}")

    def _resolve(self, p) -> Path:
        path = Path(p)
        return path if path.is_absolute() else Path(self.base_dir) / path

    def load_graph(self) -> Graph:
        synthetic = self.dataset.get("synthetic")
        if synthetic is not None:
            return synthetic_sbm(
                seed=int(synthetic.get("seed", 0)),
                sizes=tuple(synthetic["sizes"]),
                p_in=float(synthetic["p_in"]),
                p_out=float(synthetic["p_out"]),
                feature_dim=int(synthetic.get("feature_dim", 8)),
            )
        return load_graph(
            self._resolve(self.dataset["features"]),
            self._resolve(self.dataset["edges"]),
            self._resolve(self.dataset["labels"]),
        )

    def _grid(self, section: dict, default_arch: str) -> ConfigGrid:
        axes = dict(section)
        arch = axes.pop("arch", default_arch)
        if not axes:
            axes = {"hidden": [32, 64], "learning_rate": [0.01, 0.001]} \
                if arch == "gcn2" else {"learning_rate": [0.01, 0.001]}
        try:
            return ConfigGrid.from_axes(arch=arch, **axes)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid grid: {exc}") from None

    def build_spec(self, seed_override: int | None = None) -> RunSpec:
        run = dict(self.run)
        if seed_override is not None:
            run["master_seed"] = seed_override
        try:
            return RunSpec(
                victim_grid=self._grid(self.victim_grid, "gcn2"),
                surrogate_grid=self._grid(self.surrogate_grid, "sgc"),
                num_splits=int(run.get("num_splits", 5)),
                runs_per_split=int(run.get("runs_per_split", 3)),
                budgets=tuple(run.get("budgets", [1])),
                attacks=tuple(run.get("attacks", ["rnd"])),
                master_seed=int(run.get("master_seed", 0)),
                sample_ratio=float(run.get("sample_ratio", 0.1)),
                split_ratios=tuple(run.get("split_ratios", (0.1, 0.1, 0.8))),
                jaccard_threshold=run.get("jaccard_threshold"),
                settings=tuple(run.get("settings", ("evasion", "poison"))),
                max_dropped_fraction=float(run.get("max_dropped_fraction", 0.01)),
            )
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"invalid run section: {exc}") from None


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    if path.suffix == ".json":
        obj = json.loads(path.read_text())
        if obj.get("format") == MANIFEST_FORMAT:
            obj = obj["config"]
    else:
        with open(path, "rb") as fh:
            try:
                obj = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None
    return RunConfig.from_dict(obj, base_dir=str(path.parent))


def dataset_fingerprint(g: Graph) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(g.features).tobytes())
    h.update(np.ascontiguousarray(g.labels).tobytes())
    h.update(np.ascontiguousarray(g.edges).tobytes())
    h.update(str(g.num_classes).encode())
    return h.hexdigest()


def write_manifest(config: RunConfig, spec: RunSpec, g: Graph, out_dir) -> None:
    manifest = {
        "format": MANIFEST_FORMAT,
        "version": 1,
        "config": config.to_dict(),
        "master_seed": spec.master_seed,
        "dataset_fingerprint": dataset_fingerprint(g),
        "versions": {
            "edgeflip": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": sys.version.split()[0],
        },
        "created": datetime.now(timezone.utc).isoformat(),
    }
    Path(out_dir, "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _setup_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity <= 0 else (
        logging.INFO if verbosity == 1 else logging.DEBUG)
    logging.basicConfig(stream=sys.stderr, level=level,
                        format="%(levelname)s %(name)s: %(message)s")


def _threads(args, config: RunConfig) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get(THREADS_ENV_VAR)
    if env is not None:
        return int(env)
    return config.threads


def cmd_run(args) -> int:
    config = load_config(args.config)
    _setup_logging(config.verbosity if args.verbose is None else args.verbose)
    g = config.load_graph()
    spec = config.build_spec(seed_override=args.seed)
    if args.seed is not None:
        run = dict(config.run)
        run["master_seed"] = args.seed
        config = dataclasses.replace(config, run=run)
    out_dir = Path(args.out or config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = run_benchmark(spec, g, threads=_threads(args, config))
    write_report(report, out_dir)
    write_manifest(config, spec, g, out_dir)
    log.info("wrote %s", out_dir / "cells.csv")
    return 0


def cmd_select(args) -> int:
    config = load_config(args.config)
    _setup_logging(config.verbosity if args.verbose is None else args.verbose)
    g = config.load_graph()
    spec = config.build_spec(seed_override=args.seed)
    out_dir = Path(args.out or config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for role, grid in (("victim", spec.victim_grid),
                       ("surrogate", spec.surrogate_grid)):
        rows = []
        for i in range(spec.num_splits):
            split = random_split(g, derive_seed(spec.master_seed, "split", i),
                                 spec.split_ratios)
            best, scores = select(grid, g, split)
            for s in scores:
                rows.append({
                    "split": i,
                    "arch": s.config.arch,
                    "hidden": s.config.hidden,
                    "learning_rate": s.config.learning_rate,
                    "dropout": s.config.dropout,
                    "weight_decay": s.config.weight_decay,
                    "val_accuracy": "" if s.val_accuracy is None
                    else f"{s.val_accuracy:.6f}",
                    "best": int(s.config == best),
                    "error": s.error or "",
                })
        path = out_dir / f"selection_{role}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
        log.info("wrote %s", path)
    return 0


def cmd_attack(args) -> int:
    config = load_config(args.config)
    _setup_logging(config.verbosity if args.verbose is None else args.verbose)
    g = config.load_graph()
    spec = config.build_spec(seed_override=args.seed)
    try:
        attack_fn = get_attack(args.attack)
    except KeyError as exc:
        raise ConfigError(str(exc)) from None
    if not 0 <= args.target < g.num_nodes:
        raise ConfigError(f"target {args.target} out of range [0, {g.num_nodes})")

    split = random_split(g, derive_seed(spec.master_seed, "split", 0),
                         spec.split_ratios)
    surrogate_config, _ = select(spec.surrogate_grid, g, split)
    surrogate = train(dataclasses.replace(
        surrogate_config, seed=derive_seed(spec.master_seed, "surrogate", 0, 0)),
        g, split)
    ctx = AttackContext(
        graph=g, surrogate=surrogate,
        seed=derive_seed(spec.master_seed, "attack", 0, 0, args.attack,
                         args.target),
        sample_ratio=spec.sample_ratio)
    plan = attack_fn(ctx, args.target, args.budget)
    y = int(g.labels[args.target])
    perturbed = apply_plan(g, plan)
    print(json.dumps({
        "target": plan.target,
        "budget": plan.budget,
        "flips": [list(f) for f in plan.flips],
        "early_stop": plan.early_stop,
        "margin_before": margin(surrogate.logits[args.target], y),
        "margin_after": margin(surrogate.logits_on(perturbed)[args.target], y),
    }, indent=2))
    return 0


def cmd_report(args) -> int:
    results = Path(args.results_dir)
    summary_path = results / "summary.json"
    if not summary_path.exists():
        print(f"error: no summary.json under {results}", file=sys.stderr)
        return 1
    try:
        summary = read_summary_json(summary_path)
        rendered = render_matrix(summary, args.format, bold_best=args.bold_best)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: corrupt results: {exc}", file=sys.stderr)
        return 1
    print(rendered)
    return 0


def _add_common(parser: argparse.ArgumentParser, config_required=True) -> None:
    parser.add_argument("--config", required=config_required,
                        help="run configuration (.toml, or a manifest.json)")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--seed", type=int,
                        help="master seed (overrides config/manifest)")
    parser.add_argument("--threads", type=int,
                        help=f"worker processes (default ${THREADS_ENV_VAR} "
                             "or config)")
    parser.add_argument("-v", "--verbose", action="count", default=None,
                        help="increase log verbosity")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edgeflip",
        description="Benchmark budgeted edge-flip attacks on GNN classifiers.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the full benchmark")
    _add_common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sel = sub.add_parser("select", help="run model selection only")
    _add_common(p_sel)
    p_sel.set_defaults(func=cmd_select)

    p_att = sub.add_parser("attack", help="attack one target and print the plan")
    _add_common(p_att)
    p_att.add_argument("--attack", required=True,
                       help=f"one of: {', '.join(sorted(ATTACKS))}")
    p_att.add_argument("--target", type=int, required=True)
    p_att.add_argument("--budget", type=int, required=True)
    p_att.set_defaults(func=cmd_attack)

    p_rep = sub.add_parser("report", help="render stored results")
    p_rep.add_argument("results_dir")
    p_rep.add_argument("--format", choices=FORMATS, default="text")
    p_rep.add_argument("--bold-best", action="store_true")
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
