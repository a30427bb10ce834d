"""Command-line experiment runner.

Subcommands: ``run`` (one algorithm on one dataset), ``compare`` (a metrics
table across algorithms and datasets), ``generate`` (dump a synthetic
series to CSV). Every numeric flag can also be set through an environment
variable named ``EVOAP_<FLAG>`` (for example ``EVOAP_GAMMA=4``); explicit
flags win over the environment.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import plots
from .dataseries import (
    CsvSchema,
    DatasetSeries,
    build_similarity,
    load_csv,
    normalize_global,
    parse_preference,
    set_preferences,
)
from .engine import EapConfig, run_ap_series, run_eap
from .errors import ConfigError, EvoApError
from .metrics import count_summary
from .results import (
    load_result,
    result_document,
    validate_result,
    write_assignments_csv,
    write_compare_csv,
    write_json,
    write_metrics_csv,
    write_plot_data,
)
from .synthgen import SCENARIOS, canonical_scenario, dump_csv, generate, normalize_synthetic

log = logging.getLogger("evoap")

ALGORITHMS = ("ap", "eap", "eap-nocn")
EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2
ENV_PREFIX = "EVOAP_"


@dataclass(frozen=True)
class RunConfig:
    algorithm: str
    csv: Optional[Path]
    synthetic: Optional[str]
    seed: int
    eap: EapConfig
    preference: object
    normalize: str
    neighbors: Optional[int]
    out: Path
    emit_plot_data: bool
    plots: bool
    schema: CsvSchema

    def __post_init__(self):
        if (self.csv is None) == (self.synthetic is None):
            raise ConfigError("exactly one of --csv and --synthetic is required")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.algorithm == "eap-nocn" and (self.eap.omega != 0 or self.eap.consensus):
            raise ConfigError("eap-nocn requires omega=0 and consensus disabled")

    def dataset_info(self) -> dict:
        if self.synthetic is not None:
            return {"source": "synthetic", "name": self.synthetic, "seed": self.seed}
        return {"source": "csv", "name": str(self.csv), "seed": None}

    def echo(self) -> dict:
        """Config block stored in the result (paths excluded so results do
        not depend on where they were written)."""
        d = self.eap.to_dict()
        d.update(
            algorithm=self.algorithm,
            preference=self.preference,
            normalize=self.normalize,
            neighbors=self.neighbors,
        )
        return d


def _env(name: str, default=None):
    return os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"), default)


def _add_common(p: argparse.ArgumentParser) -> None:
    src = p.add_argument_group("dataset")
    src.add_argument("--csv", type=Path, help="long-format CSV: id, t, features[, label]")
    src.add_argument("--id-col", default="id")
    src.add_argument("--time-col", default="t")
    src.add_argument("--label-col", default="label")
    src.add_argument("--feature-cols", help="comma-separated feature columns (default: all others)")
    src.add_argument("--normalize", choices=("auto", "none", "global"), default=_env("normalize", "auto"),
                     help="auto: global per-feature scaling for synthetic data, none for CSV")
    src.add_argument("--seed", type=int, default=int(_env("seed", 0)))

    alg = p.add_argument_group("algorithm")
    alg.add_argument("--gamma", type=float, default=float(_env("gamma", 2.0)))
    alg.add_argument("--omega", type=float, default=None, help="default 1 (forced to 0 for eap-nocn)")
    alg.add_argument("--lambda", dest="damping", type=float, default=float(_env("lambda", 0.9)))
    alg.add_argument("--max-iter", type=int, default=int(_env("max_iter", 500)))
    alg.add_argument("--conv-window", type=int, default=int(_env("conv_window", 20)))
    alg.add_argument("--min-cluster-size", type=int, default=int(_env("min_cluster_size", 1)))
    alg.add_argument("--preference", default=_env("preference", "per-time-min"),
                     help="per-time-min | global-min | const:X")
    alg.add_argument("--neighbors", type=int, default=None, help="keep only k nearest similarities")

    out = p.add_argument_group("output")
    out.add_argument("--out", type=Path, default=Path(_env("out", "evoap-out")))
    out.add_argument("--emit-plot-data", action="store_true",
                     default=_env("emit_plot_data", "0").lower() in ("1", "true", "yes"))
    out.add_argument("--no-plots", dest="plots", action="store_false", help="skip PNG figures")
    out.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evoap", description="Evolutionary affinity propagation experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="cluster one dataset with one algorithm")
    run.add_argument("--algo", choices=ALGORITHMS, default=_env("algo", "eap"))
    run.add_argument("--synthetic", help=f"one of {', '.join(s.replace('_', '-') for s in SCENARIOS)}")
    _add_common(run)

    cmp_ = sub.add_parser("compare", help="metrics table across algorithms and datasets")
    cmp_.add_argument("--algos", nargs="+", choices=ALGORITHMS, default=list(ALGORITHMS))
    cmp_.add_argument("--synthetic", nargs="+", help="scenarios to run")
    cmp_.add_argument("--seeds", type=int, default=int(_env("seeds", 1)),
                      help="number of seeds per scenario, starting at --seed")
    cmp_.add_argument("--results", nargs="+", type=Path,
                      help="tabulate saved result JSON files instead of running")
    _add_common(cmp_)

    gen = sub.add_parser("generate", help="write a synthetic series to CSV")
    gen.add_argument("--synthetic", required=True)
    gen.add_argument("--seed", type=int, default=int(_env("seed", 0)))
    gen.add_argument("--normalize", action="store_true", help="apply global per-feature scaling")
    gen.add_argument("--out", type=Path, required=True, help="CSV file to write")
    return parser


def _eap_config(args, algorithm: str) -> EapConfig:
    omega = args.omega if args.omega is not None else float(_env("omega", 1.0))
    nocn = algorithm == "eap-nocn"
    if nocn:
        if args.omega is not None and args.omega != 0:
            log.warning("eap-nocn ignores --omega=%s and uses 0", args.omega)
        omega = 0.0
    return EapConfig(
        gamma=args.gamma,
        omega=omega,
        damping=args.damping,
        max_iter=args.max_iter,
        conv_window=args.conv_window,
        min_cluster_size=args.min_cluster_size,
        seed=args.seed,
        consensus=not nocn,
    )


def _schema(args) -> CsvSchema:
    cols = [c.strip() for c in args.feature_cols.split(",")] if args.feature_cols else None
    return CsvSchema(id_col=args.id_col, time_col=args.time_col, feature_cols=cols, label_col=args.label_col)


def make_config(args, algorithm: str, synthetic: Optional[str] = None, seed: Optional[int] = None) -> RunConfig:
    try:
        preference = parse_preference(args.preference)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return RunConfig(
        algorithm=algorithm,
        csv=args.csv,
        synthetic=canonical_scenario(synthetic) if synthetic else None,
        seed=args.seed if seed is None else seed,
        eap=_eap_config(args, algorithm),
        preference=preference,
        normalize=args.normalize,
        neighbors=args.neighbors,
        out=args.out,
        emit_plot_data=args.emit_plot_data,
        plots=args.plots,
        schema=_schema(args),
    )


def load_dataset(cfg: RunConfig) -> DatasetSeries:
    if cfg.synthetic is not None:
        ds = generate(cfg.synthetic, cfg.seed)
        return normalize_synthetic(ds) if cfg.normalize in ("auto", "global") else ds
    ds = load_csv(cfg.csv, cfg.schema)
    return normalize_global(ds) if cfg.normalize == "global" else ds


def cluster(cfg: RunConfig, ds: DatasetSeries):
    sim = set_preferences(build_similarity(ds, cfg.neighbors), cfg.preference)
    if cfg.algorithm == "ap":
        return run_ap_series(ds, sim, cfg.eap)
    return run_eap(ds, sim, cfg.eap)


def execute(cfg: RunConfig, ds: Optional[DatasetSeries] = None, timestamp: Optional[str] = None):
    """Cluster and build the validated result document (nothing written)."""
    ds = ds if ds is not None else load_dataset(cfg)
    sol = cluster(cfg, ds)
    doc = result_document(sol, ds, cfg.dataset_info(), cfg.echo(), timestamp)
    validate_result(doc)
    return sol, ds, doc


def _stem(cfg: RunConfig) -> str:
    name = cfg.synthetic.replace("_", "-") if cfg.synthetic else cfg.csv.stem
    seed = f"-s{cfg.seed}" if cfg.synthetic else ""
    return f"{cfg.algorithm}-{name}{seed}"


def cmd_run(args) -> int:
    if args.synthetic is None and args.csv is None:
        raise ConfigError("one of --csv or --synthetic is required")
    if args.synthetic is not None and args.csv is not None:
        raise ConfigError("--csv and --synthetic are mutually exclusive")
    cfg = make_config(args, args.algo, args.synthetic)
    sol, ds, doc = execute(cfg)
    out, stem = cfg.out, _stem(cfg)
    written = [
        write_json(doc, out / f"{stem}.json"),
        write_assignments_csv(sol, out / f"{stem}-assignments.csv"),
        write_metrics_csv(doc, out / f"{stem}-metrics.csv"),
    ]
    rand = doc["metrics"].get("rand_per_t")
    if cfg.emit_plot_data:
        if rand is None:
            log.warning("dataset has no truth labels; plot data skipped")
        else:
            written.append(write_plot_data({cfg.algorithm: rand}, out / f"{stem}-plotdata.csv"))
    if cfg.plots:
        if rand is not None:
            written.append(plots.plot_rand_series({cfg.algorithm: np.array(rand, dtype=float)},
                                                  out / f"{stem}-rand.png", stem))
        written.append(plots.plot_cluster_counts({cfg.algorithm: sol}, out / f"{stem}-clusters.png", stem))
        written.append(plots.plot_tracks(sol, out / f"{stem}-tracks.png"))
    m = doc["metrics"]
    summary = f"{stem}: iterations={sol.iterations} converged={sol.converged} " \
              f"tracks={count_summary(m['distinct_exemplars'], m['mean_clusters'])}"
    if m.get("rand_mean") is not None:
        summary += f" rand={m['rand_mean']:.4f}"
    print(summary)
    for p in written:
        log.info("wrote %s", p)
    return EXIT_OK if sol.converged else EXIT_NOT_CONVERGED


def _aggregate(algorithm: str, dataset: str, docs: list) -> dict:
    def mean(key):
        vals = [d["metrics"].get(key) for d in docs]
        vals = [v for v in vals if v is not None]
        return float(np.mean(vals)) if vals else None

    distinct = float(np.mean([d["metrics"]["distinct_exemplars"] for d in docs]))
    clusters = float(np.mean([d["metrics"]["mean_clusters"] for d in docs]))
    return {
        "algorithm": algorithm,
        "dataset": dataset,
        "runs": len(docs),
        "rand_mean": mean("rand_mean"),
        "modified_rand_mean": mean("modified_rand_mean"),
        "distinct_exemplars": distinct,
        "mean_clusters": clusters,
        "counts": f"{distinct:g} ({clusters:.2f})",
        "converged": sum(d["converged"] for d in docs),
    }


def _dataset_key(doc: dict) -> str:
    d = doc["dataset"]
    return d["name"] if d["source"] == "synthetic" else d["fingerprint"]


def compare_results(docs: list) -> list:
    """Rows from saved results. All of them must come from one dataset:
    one synthetic scenario (any seeds) or one CSV file content."""
    keys = {_dataset_key(d) for d in docs}
    if len(keys) > 1:
        raise ConfigError(f"refusing to compare results from different datasets: {sorted(keys)}")
    groups = defaultdict(list)
    for d in docs:
        groups[d["algorithm"]].append(d)
    name = docs[0]["dataset"]["name"]
    return [_aggregate(a, name, groups[a]) for a in ALGORITHMS if a in groups]


def cmd_compare(args) -> int:
    out = args.out
    if args.results:
        if args.synthetic or args.csv:
            raise ConfigError("--results cannot be combined with --synthetic or --csv")
        docs = [load_result(p) for p in args.results]
        rows = compare_results(docs)
        series = {}
    else:
        if bool(args.synthetic) == bool(args.csv):
            raise ConfigError("give --synthetic scenarios, --csv, or --results")
        rows, series = [], {}
        datasets = args.synthetic or [None]
        for scen in datasets:
            per_algo = defaultdict(list)
            seeds = range(args.seed, args.seed + args.seeds) if scen else [args.seed]
            for seed in seeds:
                ds = None
                for algo in args.algos:
                    cfg = make_config(args, algo, scen, seed)
                    ds = ds if ds is not None else load_dataset(cfg)
                    _, _, doc = execute(cfg, ds)
                    per_algo[algo].append(doc)
            label = canonical_scenario(scen).replace("_", "-") if scen else str(args.csv)
            for algo in args.algos:
                rows.append(_aggregate(algo, label, per_algo[algo]))
                rand = [d["metrics"].get("rand_per_t") for d in per_algo[algo]]
                if all(r is not None for r in rand):
                    series[(label, algo)] = np.nanmean(np.array(rand, dtype=float), axis=0)
    write_compare_csv(rows, out / "compare.csv")
    if args.emit_plot_data and series:
        for label in sorted({k[0] for k in series}):
            sub = {a: series[(lab, a)] for (lab, a) in series if lab == label}
            write_plot_data(sub, out / f"plotdata-{Path(label).stem}.csv")
    if args.plots and series:
        for label in sorted({k[0] for k in series}):
            sub = {a: series[(lab, a)] for (lab, a) in series if lab == label}
            plots.plot_rand_series(sub, out / f"rand-{Path(label).stem}.png", label)
    for r in rows:
        rm = "n/a" if r["rand_mean"] is None else f"{r['rand_mean']:.4f}"
        print(f"{r['algorithm']:9s} {r['dataset']:16s} rand={rm} {r['counts']}")
    all_converged = all(r["converged"] == r["runs"] for r in rows)
    return EXIT_OK if all_converged else EXIT_NOT_CONVERGED


def cmd_generate(args) -> int:
    ds = generate(args.synthetic, args.seed)
    if args.normalize:
        ds = normalize_synthetic(ds)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    dump_csv(ds, args.out)
    print(f"wrote {args.out} (T={ds.T}, N={ds.N})")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ValueError as exc:  # malformed environment override
        print(f"evoap: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", 0) > 1 else
        logging.INFO if getattr(args, "verbose", 0) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    handler = {"run": cmd_run, "compare": cmd_compare, "generate": cmd_generate}[args.command]
    try:
        return handler(args)
    except (EvoApError, ValueError, OSError) as exc:
        print(f"evoap: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
