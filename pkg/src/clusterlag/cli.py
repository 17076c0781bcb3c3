"""Command-line entry point.

``analyze`` and ``dual`` run the full pipeline from an input CSV. ``offsets``,
``anomalies`` and ``dendrogram`` rerun one stage from an existing bundle
(``--from``), reusing its per-day cluster counts and labels.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from . import pipeline
from .config import OUTPUT_ENV, RunConfig, bundle_config, load_config
from .errors import ClusterLagError, ConfigError, DataError

log = logging.getLogger("clusterlag")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_COMPUTE = 4


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML run configuration")
    p.add_argument("--output", "-o", help=f"output directory (default: ${OUTPUT_ENV} or ./clusterlag-out)")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, help="processes for per-day index selection")
    p.add_argument("--linkage", choices=["average", "complete", "ward"])
    p.add_argument("-v", "--verbose", action="store_true")


def _full(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", "-i", help="long-format CSV with both series")
    p.add_argument("--start", help="first date to keep (YYYY-MM-DD)")
    p.add_argument("--end", help="last date to keep (YYYY-MM-DD)")
    p.add_argument("--exclude", action="append", help="entity to drop (repeatable)")
    p.add_argument("--mode", choices=["daily", "rolling"])
    p.add_argument("--window", type=int)
    p.add_argument("--alpha", type=float, help="smoothing weight in (0, 1]")
    p.add_argument("--k-min", type=int, dest="k_min")
    p.add_argument("--k-max", type=int, dest="k_max")
    p.add_argument("--dump-matrices", action="store_true", default=None, dest="dump_matrices")


def _offset_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--delta-scan", type=int, nargs=2, metavar=("LO", "HI"), dest="delta_scan")
    p.add_argument("--tau-scan", type=int, nargs=2, metavar=("LO", "HI"), dest="tau_scan")
    p.add_argument("--start-date", action="append", dest="start_dates", help="consistency start date (repeatable)")
    p.add_argument("--unnormalized", action="store_false", default=None, dest="delta_normalized",
                   help="rank series-evolution offsets by the plain L1 sum")


def _anomaly_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tau", type=int, help="offset for anomaly pairing (default: the Aff consistency offset)")
    p.add_argument("--threshold", type=float, help="minimum X count for an entity to be scored")
    p.add_argument("--as-of", dest="as_of")
    p.add_argument("--direction", type=int, choices=[1, -1])
    p.add_argument("--date", action="append", dest="anomaly_dates", help="X date to report (repeatable)")
    p.add_argument("--step", type=int, dest="anomaly_step")
    p.add_argument("--top", type=int, dest="top_n")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clusterlag", description="Daily cluster analysis of paired count series.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="cluster one series")
    _common(p)
    _full(p)
    p.add_argument("--series", choices=["x", "y"])

    p = sub.add_parser("dual", help="cluster both series, estimate offsets, score anomalies")
    _common(p)
    _full(p)
    _offset_flags(p)
    _anomaly_flags(p)

    p = sub.add_parser("offsets", help="recompute offsets from a bundle")
    _common(p)
    p.add_argument("--from", dest="bundle", required=True, help="bundle written by `dual`")
    _offset_flags(p)

    p = sub.add_parser("anomalies", help="recompute anomaly reports from a bundle")
    _common(p)
    p.add_argument("--from", dest="bundle", required=True, help="bundle written by `dual`")
    _anomaly_flags(p)

    p = sub.add_parser("dendrogram", help="recompute a date dendrogram from a bundle")
    _common(p)
    p.add_argument("--from", dest="bundle", required=True, help="bundle written by `analyze` or `dual`")
    p.add_argument("--series", choices=["x", "y"])
    p.add_argument("--skip", type=int, help="leading days to leave out")
    return parser


_NOT_CONFIG = {"command", "config", "verbose", "bundle", "skip"}


def _overrides(args: argparse.Namespace) -> dict[str, Any]:
    return {k: v for k, v in vars(args).items() if k not in _NOT_CONFIG}


def _config(args: argparse.Namespace) -> RunConfig:
    base = None
    overrides = _overrides(args)
    if getattr(args, "bundle", None):
        base = bundle_config(args.bundle)
        if overrides.get("output") is None:
            overrides["output"] = args.bundle
    return load_config(args.config, overrides, base)


def _bundle_pair(cfg: RunConfig, bundle: str) -> tuple[pipeline.SeriesResult, pipeline.SeriesResult]:
    px, py = pipeline.load_panels(cfg)
    return (
        pipeline.load_series(bundle, "x", px, cfg, cfg.skip_x),
        pipeline.load_series(bundle, "y", py, cfg, cfg.skip_y),
    )


def _bundle_tau(bundle: str) -> int | None:
    path = Path(bundle) / "offsets.json"
    if not path.exists():
        return None
    try:
        return int(json.loads(path.read_text(encoding="utf-8"))["tau"])
    except (ValueError, KeyError) as exc:
        raise DataError(f"cannot read tau from {path}: {exc}") from exc


def run(args: argparse.Namespace) -> None:
    cfg = _config(args)
    out = Path(cfg.output)
    if args.command == "analyze":
        res = pipeline.run_single(cfg)
        log.info("series %s: k_hat range %d..%d", res.name, res.smoothed.k_hat.min(), res.smoothed.k_hat.max())
    elif args.command == "dual":
        res = pipeline.run_dual(cfg)
        print(f"delta={res.delta.offset} tau={res.tau}")
    elif args.command == "offsets":
        rx, ry = _bundle_pair(cfg, args.bundle)
        off = pipeline.pair_offsets(rx, ry, cfg)
        out.mkdir(parents=True, exist_ok=True)
        with pipeline.stage("write"):
            pipeline.write_offsets(off, [d.isoformat() for d in rx.dates], out, cfg)
            pipeline.write_manifest(out, cfg)
        print(f"delta={off.delta.offset} tau={off.tau}")
    elif args.command == "anomalies":
        rx, ry = _bundle_pair(cfg, args.bundle)
        tau = cfg.tau if cfg.tau is not None else _bundle_tau(args.bundle)
        if tau is None:
            tau = pipeline.pair_offsets(rx, ry, cfg).tau
        aff = pipeline.aff_sequences(rx, ry)
        subset, reports = pipeline.pair_anomalies(rx, ry, aff, tau, cfg)
        out.mkdir(parents=True, exist_ok=True)
        with pipeline.stage("write"):
            pipeline.write_anomalies(rx, ry, aff, tau, subset, reports, out, cfg)
            pipeline.write_manifest(out, cfg)
        for row in reports:
            print(rx.dates[row.t], ry.dates[row.partner], " ".join(e for e, _ in row.top(cfg.top_n)))
    elif args.command == "dendrogram":
        px, py = pipeline.load_panels(cfg)
        panel = px if cfg.series == "x" else py
        res = pipeline.load_series(args.bundle, cfg.series, panel, cfg, args.skip)
        out.mkdir(parents=True, exist_ok=True)
        with pipeline.stage("write"):
            pipeline.write_dendrogram(res, out)
            pipeline.write_manifest(out, cfg)
        print(res.dendrogram.to_newick())


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ClusterLagError as exc:
        print(f"computation error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
