"""End-to-end analysis of one series or a pair of series, and bundle writing."""

from __future__ import annotations

import contextlib
import csv
import datetime as dt
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from . import anomaly as anom
from .cluster import Dendrogram, Partition, ckmeans_1d, cut_dendrogram, lloyd_kmeans
from .config import RunConfig
from .errors import ClusterLagError, DataError, DomainError
from .ingest import CountPanel, log_transform, parse_csv, rolling_window
from .kselect import INDEX_NAMES, KEstimate, SmoothedK, estimate_series, pairwise_distances, smooth_k
from .matrices import (
    affinity,
    cluster_evolution_dendrogram,
    date_distances,
    gaussian_affinity,
    matrix_kinds,
    matrix_sequence,
    save_matrices,
    trivial_prefix,
    write_matrix_csv,
)
from .offsets import OffsetResult, consistency_offset, offset_curve_report, series_evolution_offset

log = logging.getLogger(__name__)

CONFIG_FILE = "config.json"
MANIFEST_FILE = "manifest.json"


@contextlib.contextmanager
def stage(name: str) -> Iterator[None]:
    """Prefix any package error raised inside the block with the stage name."""
    try:
        yield
    except ClusterLagError as exc:
        if str(exc).startswith("["):
            raise
        raise type(exc)(f"[{name}] {exc}") from exc


@dataclass(eq=False)
class SeriesResult:
    name: str
    panel: CountPanel
    log_values: np.ndarray  # (n, T)
    points: np.ndarray  # (n, T) daily or (n, T, w) rolling
    estimates: list[KEstimate]
    smoothed: SmoothedK
    labels: np.ndarray  # (n, T), 1 = highest cluster
    k_used: np.ndarray
    date_dist: np.ndarray
    skip: int
    dendrogram: Dendrogram

    @property
    def dates(self) -> tuple[dt.date, ...]:
        return self.panel.dates


@dataclass(eq=False)
class DualResult:
    x: SeriesResult
    y: SeriesResult
    delta: OffsetResult
    delta_alt: OffsetResult
    consistency: list[OffsetResult]
    tau: int
    subset: list[str]
    aff: tuple[np.ndarray, np.ndarray]
    reports: list[anom.AnomalyReport] = field(default_factory=list)

    @property
    def subset_idx(self) -> list[int]:
        return [self.x.panel.entities.index(e) for e in self.subset]


# ---------------------------------------------------------------------------
# computation


def day_points(panel: CountPanel, cfg: RunConfig) -> tuple[np.ndarray, np.ndarray]:
    logp = log_transform(panel)
    if cfg.mode == "rolling":
        return logp.values, rolling_window(logp, cfg.window).values
    return logp.values, logp.values


def partition_day(points: np.ndarray, k: int, seed: int, restarts: int) -> Partition:
    """Cluster one day's points into ``k`` groups, capped at the distinct-point count."""
    if points.ndim == 1:
        k = min(k, np.unique(points).size)
        return ckmeans_1d(points, k)
    k = min(k, np.unique(points, axis=0).shape[0])
    return lloyd_kmeans(points, k, seed=seed, restarts=restarts)


def analyze_series(panel: CountPanel, cfg: RunConfig, name: str, skip: int | None = None) -> SeriesResult:
    with stage(f"{name}:preprocess"):
        log_values, points = day_points(panel, cfg)
    T = panel.T
    with stage(f"{name}:kselect"):
        days = [points[:, t] for t in range(T)]
        estimates = estimate_series(days, (cfg.k_min, cfg.k_max), cfg.seed, cfg.restarts, cfg.workers)
        smoothed = smooth_k([e.k_av for e in estimates], cfg.alpha)
    with stage(f"{name}:cluster"):
        labels = np.empty((panel.n, T), dtype=np.int64)
        k_used = np.empty(T, dtype=np.int64)
        for t in range(T):
            part = partition_day(points[:, t], int(smoothed.k_hat[t]), cfg.seed + t, cfg.restarts)
            labels[:, t] = part.labels
            k_used[t] = part.k
    with stage(f"{name}:matrices"):
        adjs = matrix_sequence(log_values, labels, "Adj")
        dd = date_distances(adjs)
        if skip is None:
            skip = trivial_prefix(adjs)
        del adjs
    with stage(f"{name}:dendrogram"):
        names = [d.isoformat() for d in panel.dates]
        dendro = cluster_evolution_dendrogram(dd, skip, names, cfg.linkage)
    return SeriesResult(name, panel, log_values, points, estimates, smoothed, labels, k_used, dd, skip, dendro)


def _series_matrices(res: SeriesResult, kind: str) -> np.ndarray:
    if kind != "Adj" and res.points.ndim == 3:
        # rolling mode: distances between log-count windows
        out = np.empty((res.panel.T, res.panel.n, res.panel.n))
        for t in range(res.panel.T):
            D = pairwise_distances(res.points[:, t])
            out[t] = affinity(D) if kind == "Aff" else gaussian_affinity(D, int(kind[1:]))
        return out
    return matrix_sequence(res.log_values, res.labels, kind)


def default_anomaly_days(T: int, tau: int, step: int, direction: int) -> list[int]:
    """Every ``step`` days, ending on the last X day that has a Y partner."""
    if direction == 1:
        lo, hi = 0, T - 1 - tau
    else:
        lo, hi = tau, T - 1
    if hi < lo:
        raise DomainError(f"offset {tau} leaves no valid anomaly day in a series of length {T}")
    return list(range(hi, lo - 1, -step))[::-1]


@dataclass(eq=False)
class PairOffsets:
    delta: OffsetResult
    delta_alt: OffsetResult
    consistency: list[OffsetResult]
    tau: int
    aff: tuple[np.ndarray, np.ndarray]


def pair_offsets(rx: SeriesResult, ry: SeriesResult, cfg: RunConfig) -> PairOffsets:
    """Both offset estimators, the consistency one over every matrix kind and start date."""
    dates = [d.isoformat() for d in rx.dates]
    with stage("offsets:series_evolution"):
        scan = tuple(cfg.delta_scan)
        delta = series_evolution_offset(rx.smoothed.k_hat, ry.smoothed.k_hat, scan, cfg.delta_normalized)
        delta_alt = series_evolution_offset(rx.smoothed.k_hat, ry.smoothed.k_hat, scan, not cfg.delta_normalized)
    starts = cfg.start_dates or [dates[0]]
    grid: list[OffsetResult] = []
    aff_pair = None
    with stage("offsets:consistency"):
        for kind in matrix_kinds(cfg.m_values):
            MX, MY = _series_matrices(rx, kind), _series_matrices(ry, kind)
            for start in starts:
                i = rx.panel.date_index(start)
                grid.append(consistency_offset(MX[i:], MY[i:], tuple(cfg.tau_scan), kind, start))
            if kind == "Aff":
                aff_pair = (MX, MY)
            else:
                del MX, MY
    tau = cfg.tau
    if tau is None:
        tau = next(r.offset for r in grid if r.kind == "consistency:Aff" and r.start_date == starts[0])
    assert aff_pair is not None
    return PairOffsets(delta, delta_alt, grid, tau, aff_pair)


def pair_anomalies(
    rx: SeriesResult, ry: SeriesResult, aff: tuple[np.ndarray, np.ndarray], tau: int, cfg: RunConfig
) -> tuple[list[str], list[anom.AnomalyReport]]:
    with stage("anomalies"):
        subset = anom.filter_entities(rx.panel, cfg.threshold, cfg.as_of)
        idx = [rx.panel.entities.index(e) for e in subset]
        if cfg.anomaly_dates:
            days = [rx.panel.date_index(d) for d in cfg.anomaly_dates]
        else:
            days = default_anomaly_days(rx.panel.T, tau, cfg.anomaly_step, cfg.direction)
        reports = anom.anomaly_timeline(
            aff[0], aff[1], tau, days, idx, rx.panel.entities, cfg.direction, (rx.panel, ry.panel)
        )
    return subset, reports


def analyze_pair(rx: SeriesResult, ry: SeriesResult, cfg: RunConfig) -> DualResult:
    off = pair_offsets(rx, ry, cfg)
    subset, reports = pair_anomalies(rx, ry, off.aff, off.tau, cfg)
    return DualResult(rx, ry, off.delta, off.delta_alt, off.consistency, off.tau, subset, off.aff, reports)


def aff_sequences(rx: SeriesResult, ry: SeriesResult) -> tuple[np.ndarray, np.ndarray]:
    return _series_matrices(rx, "Aff"), _series_matrices(ry, "Aff")


# ---------------------------------------------------------------------------
# output


def _fmt(v: float) -> str:
    return repr(float(v))


def _write_rows(path: Path, header: Sequence[str], rows: Sequence[Sequence[object]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _write_json(path: Path, payload: object) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def date_blocks(dendro: Dendrogram, k: int) -> list[list[str]]:
    """Cut the date dendrogram into ``k`` groups and list each as its dates."""
    if dendro.n < k:
        return [list(dendro.leaf_labels)]
    part = cut_dendrogram(dendro, k)
    return [[dendro.leaf_labels[i] for i in np.flatnonzero(part.labels == c)] for c in range(1, k + 1)]


def write_series(res: SeriesResult, out: Path, cfg: RunConfig) -> None:
    p = res.name
    dates = [d.isoformat() for d in res.dates]
    rows = []
    for t, est in enumerate(res.estimates):
        rows.append([dates[t], *est.as_row(), _fmt(est.k_av), int(res.smoothed.k_hat[t])])
    _write_rows(out / f"{p}_kcurve.csv", ["date", *[f"k{i}" for i in range(1, 7)], "k_av", "k_hat"], rows)
    _write_json(out / f"{p}_kindices.json", {"order": list(INDEX_NAMES), "alpha": cfg.alpha,
                                              "smoothed": [_fmt(s) for s in res.smoothed.smoothed],
                                              "k_used": res.k_used.tolist(),
                                              "degenerate": [e.degenerate for e in res.estimates]})
    _write_rows(
        out / f"{p}_labels.csv",
        ["date", *res.panel.entities],
        [[dates[t], *res.labels[:, t].tolist()] for t in range(res.panel.T)],
    )
    write_matrix_csv(out / f"{p}_date_distance.csv", res.date_dist, dates)
    write_dendrogram(res, out)
    if cfg.dump_matrices:
        save_matrices(out / f"{p}_D.bin", matrix_sequence(res.log_values, res.labels, "D"), "D")
        save_matrices(out / f"{p}_Adj.bin", matrix_sequence(res.log_values, res.labels, "Adj"), "Adj")


def write_dendrogram(res: SeriesResult, out: Path) -> None:
    p = res.name
    (out / f"{p}_dendrogram.json").write_text(
        json.dumps({**res.dendrogram.to_dict(), "skip": res.skip}, indent=2) + "\n", encoding="utf-8"
    )
    (out / f"{p}_dendrogram.nwk").write_text(res.dendrogram.to_newick() + "\n", encoding="utf-8")
    blocks = {str(k): date_blocks(res.dendrogram, k) for k in (2, 3)}
    _write_json(out / f"{p}_date_blocks.json", {"skip": res.skip, "linkage": res.dendrogram.linkage, "cuts": blocks})


def _curve_name(r: OffsetResult, first_start: str) -> str:
    kind = r.kind.split(":", 1)[-1]
    suffix = "" if r.start_date in (None, first_start) else f"_{r.start_date}"
    return f"offset_curve_{kind}{suffix}.csv"


def write_offsets(off: PairOffsets | DualResult, dates: Sequence[str], out: Path, cfg: RunConfig) -> None:
    first = (cfg.start_dates or [dates[0]])[0]
    summaries = []
    for r in [off.delta, off.delta_alt, *off.consistency]:
        rep = offset_curve_report(r)
        if r.kind == "series_evolution":
            name = "offset_curve_series_evolution" + ("" if r.normalized else "_unnormalized") + ".csv"
        else:
            name = _curve_name(r, first)
        _write_rows(out / name, ["offset", "objective"], [[o, _fmt(v)] for o, v in rep["rows"]])
        summary = r.summary()
        summary["objective_min"] = _fmt(summary["objective_min"])
        summary.update(local_minima=rep["local_minima"], plateau=rep["plateau"], curve_file=name)
        summaries.append(summary)
    table = {}
    for r in off.consistency:
        table.setdefault(r.start_date, {})[r.kind.split(":", 1)[1]] = r.offset
    _write_json(out / "offsets.json", {"delta": off.delta.offset, "tau": off.tau, "table": table, "results": summaries})


def write_anomalies(
    rx: SeriesResult,
    ry: SeriesResult,
    aff: tuple[np.ndarray, np.ndarray],
    tau: int,
    subset: list[str],
    reports: Sequence[anom.AnomalyReport],
    out: Path,
    cfg: RunConfig,
) -> None:
    dates = [d.isoformat() for d in rx.dates]
    subset_idx = [rx.panel.entities.index(e) for e in subset]
    for stale in out.glob("inconsistency_*.csv"):
        stale.unlink()
    rows = []
    ldr_rows = []
    table_rows = []
    for rep in reports:
        xd, yd = dates[rep.t], dates[rep.partner]
        for rank, i in enumerate(rep.ranking, start=1):
            ratio = "" if rep.ldr is None else _fmt(rep.ldr[i])
            flag = "" if rep.ldr_floored is None else int(rep.ldr_floored[i])
            rows.append([xd, yd, rank, rep.entities[i], _fmt(rep.scores[i]), ratio, flag])
        table_rows.append({"x_date": xd, "y_date": yd, "top": [e for e, _ in rep.top(cfg.top_n)]})
        inc = anom.inconsistency(*aff, tau, rep.t, subset_idx, rx.panel.entities, cfg.direction)
        write_matrix_csv(out / f"inconsistency_{xd}.csv", inc.matrix, list(inc.entities))
    _write_rows(out / "anomalies.csv", ["x_date", "y_date", "rank", "entity", "score", "ldr", "ldr_floored"], rows)
    _write_json(out / "anomalies.json", {"tau": tau, "direction": cfg.direction, "top_n": cfg.top_n,
                                          "subset": subset, "rows": table_rows})

    for t in range(tau, ry.panel.T):
        ratio, floored = anom.ldr(rx.panel, ry.panel, tau, t)
        for i, e in enumerate(rx.panel.entities):
            ldr_rows.append([dates[t], dates[t - tau], e, _fmt(ratio[i]), int(floored[i])])
    _write_rows(out / "ldr.csv", ["y_date", "x_date", "entity", "ldr", "ldr_floored"], ldr_rows)


def write_dual(res: DualResult, out: Path, cfg: RunConfig) -> None:
    write_offsets(res, [d.isoformat() for d in res.x.dates], out, cfg)
    write_anomalies(res.x, res.y, res.aff, res.tau, res.subset, res.reports, out, cfg)


def write_manifest(out: Path, cfg: RunConfig) -> dict[str, str]:
    """Serialize the config and record a SHA-256 for every file in the bundle."""
    payload = cfg.to_dict()
    payload.pop("output", None)
    _write_json(out / CONFIG_FILE, payload)
    sums = {}
    for path in sorted(p for p in out.rglob("*") if p.is_file() and p.name != MANIFEST_FILE):
        sums[path.relative_to(out).as_posix()] = hashlib.sha256(path.read_bytes()).hexdigest()
    _write_json(out / MANIFEST_FILE, sums)
    return sums


def _read_csv_rows(path: Path) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path} is empty")
    return rows[0], rows[1:]


def load_series(bundle: str | Path, name: str, panel: CountPanel, cfg: RunConfig, skip: int | None = None) -> SeriesResult:
    """Rebuild a series result from a bundle's k-curve and label files.

    Index selection and per-day clustering are read back rather than redone;
    matrices, date distances and the dendrogram are recomputed from them.
    """
    bundle = Path(bundle)
    with stage(f"{name}:load"):
        header, rows = _read_csv_rows(bundle / f"{name}_labels.csv")
        dates = [d.isoformat() for d in panel.dates]
        if tuple(header[1:]) != panel.entities or [r[0] for r in rows] != dates:
            raise DataError(f"{bundle}: {name}_labels.csv does not match the input panel axes")
        labels = np.array([[int(v) for v in r[1:]] for r in rows], dtype=np.int64).T
        header, rows = _read_csv_rows(bundle / f"{name}_kcurve.csv")
        if [r[0] for r in rows] != dates:
            raise DataError(f"{bundle}: {name}_kcurve.csv does not match the input dates")
        try:
            meta = json.loads((bundle / f"{name}_kindices.json").read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise DataError(f"cannot read {name}_kindices.json from {bundle}: {exc}") from exc
        estimates = [
            KEstimate(dict(zip(INDEX_NAMES, map(int, r[1:7]))), float(r[7]), t, bool(meta["degenerate"][t]))
            for t, r in enumerate(rows)
        ]
        k_hat = np.array([int(r[8]) for r in rows], dtype=np.int64)
        smoothed = SmoothedK(k_hat, np.array(meta["smoothed"], dtype=float),
                             np.array([e.k_av for e in estimates]), float(meta["alpha"]))
        log_values, points = day_points(panel, cfg)
    with stage(f"{name}:matrices"):
        adjs = matrix_sequence(log_values, labels, "Adj")
        dd = date_distances(adjs)
        if skip is None:
            skip = trivial_prefix(adjs)
        del adjs
    with stage(f"{name}:dendrogram"):
        dendro = cluster_evolution_dendrogram(dd, skip, dates, cfg.linkage)
    k_used = labels.max(axis=0)
    return SeriesResult(name, panel, log_values, points, estimates, smoothed, labels, k_used, dd, skip, dendro)


def load_panels(cfg: RunConfig) -> tuple[CountPanel, CountPanel]:
    with stage("ingest"):
        return parse_csv(cfg.input, cfg.schema, cfg.start, cfg.end, cfg.exclude)


def run_single(cfg: RunConfig, panels: tuple[CountPanel, CountPanel] | None = None) -> SeriesResult:
    px, py = panels if panels is not None else load_panels(cfg)
    panel, skip = (px, cfg.skip_x) if cfg.series == "x" else (py, cfg.skip_y)
    res = analyze_series(panel, cfg, cfg.series, skip)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    with stage("write"):
        write_series(res, out, cfg)
        write_manifest(out, cfg)
    return res


def run_dual(cfg: RunConfig, panels: tuple[CountPanel, CountPanel] | None = None) -> DualResult:
    px, py = panels if panels is not None else load_panels(cfg)
    rx = analyze_series(px, cfg, "x", cfg.skip_x)
    ry = analyze_series(py, cfg, "y", cfg.skip_y)
    res = analyze_pair(rx, ry, cfg)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    with stage("write"):
        write_series(rx, out, cfg)
        write_series(ry, out, cfg)
        write_dual(res, out, cfg)
        write_manifest(out, cfg)
    return res
