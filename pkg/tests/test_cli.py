import csv
import json

import numpy as np
import pytest

from clusterlag.cli import EXIT_COMPUTE, EXIT_CONFIG, EXIT_DATA, main
from clusterlag.config import OUTPUT_ENV, load_config
from clusterlag.errors import ConfigError
from clusterlag.ingest import emit_csv
from clusterlag.synthetic import shifted_pair


@pytest.fixture(scope="module")
def panel_csv(tmp_path_factory):
    x, y = shifted_pair(n=10, T=70, lag=6, seed=3)
    path = tmp_path_factory.mktemp("data") / "pair.csv"
    emit_csv(x, y, path)
    return path


@pytest.fixture(scope="module")
def bundle(panel_csv, tmp_path_factory):
    out = tmp_path_factory.mktemp("bundle")
    assert main(["dual", "-i", str(panel_csv), "-o", str(out), "--threshold", "10", "--tau-scan", "0", "20"]) == 0
    return out


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_dual_recovers_lag(bundle):
    offsets = json.loads((bundle / "offsets.json").read_text())
    assert offsets["delta"] == 6
    assert offsets["tau"] == 6
    assert set(offsets["table"][next(iter(offsets["table"]))].values()) == {6}
    scores = [float(r[4]) for r in _rows(bundle / "anomalies.csv")[1:]]
    assert scores and max(scores) == 0.0


def test_bundle_has_manifest_and_config(bundle):
    manifest = json.loads((bundle / "manifest.json").read_text())
    files = {p.name for p in bundle.iterdir()} - {"manifest.json"}
    assert set(manifest) == files
    cfg = json.loads((bundle / "config.json").read_text())
    assert "output" not in cfg
    assert cfg["threshold"] == 10


def test_kcurve_layout(bundle):
    rows = _rows(bundle / "x_kcurve.csv")
    assert rows[0] == ["date", "k1", "k2", "k3", "k4", "k5", "k6", "k_av", "k_hat"]
    assert len(rows) == 71
    labels = _rows(bundle / "x_labels.csv")
    assert labels[0][1:] == [f"E{i:02d}" for i in range(10)]


def test_ldr_is_one_on_planted_pair(bundle):
    rows = _rows(bundle / "ldr.csv")[1:]
    assert rows
    assert all(float(r[3]) == 1.0 for r in rows)


def test_analyze_single(panel_csv, tmp_path):
    out = tmp_path / "single"
    assert main(["analyze", "-i", str(panel_csv), "-o", str(out), "--series", "y", "--linkage", "average"]) == 0
    assert (out / "y_dendrogram.nwk").read_text().endswith(";\n")
    assert not (out / "x_kcurve.csv").exists()
    assert json.loads((out / "y_dendrogram.json").read_text())["linkage"] == "average"


def test_staged_reruns_match_full_run(bundle, tmp_path, capsys):
    out = tmp_path / "staged"
    assert main(["offsets", "--from", str(bundle), "-o", str(out)]) == 0
    assert (out / "offsets.json").read_bytes() == (bundle / "offsets.json").read_bytes()
    assert main(["anomalies", "--from", str(bundle), "-o", str(out)]) == 0
    assert (out / "anomalies.csv").read_bytes() == (bundle / "anomalies.csv").read_bytes()
    assert main(["dendrogram", "--from", str(bundle), "-o", str(out), "--series", "x"]) == 0
    assert (out / "x_dendrogram.nwk").read_bytes() == (bundle / "x_dendrogram.nwk").read_bytes()
    capsys.readouterr()


def test_staged_dendrogram_with_new_linkage(bundle, tmp_path):
    out = tmp_path / "relink"
    assert main(["dendrogram", "--from", str(bundle), "-o", str(out), "--linkage", "complete", "--skip", "3"]) == 0
    payload = json.loads((out / "x_dendrogram.json").read_text())
    assert payload["linkage"] == "complete" and payload["skip"] == 3


def test_anomalies_with_explicit_dates(bundle, tmp_path, capsys):
    out = tmp_path / "anom"
    assert main(["anomalies", "--from", str(bundle), "-o", str(out), "--date", "2020-02-01", "--top", "2"]) == 0
    printed = capsys.readouterr().out.strip().split("\n")
    assert printed[-1].startswith("2020-02-01 2020-02-07")
    assert len(list(out.glob("inconsistency_*.csv"))) == 1


def test_exit_codes(panel_csv, tmp_path, capsys):
    assert main(["dual", "-i", str(tmp_path / "missing.csv"), "-o", str(tmp_path / "a")]) == EXIT_DATA
    assert main(["dual", "-i", str(panel_csv), "-o", str(tmp_path / "b"), "--alpha", "0"]) == EXIT_CONFIG
    assert main(["dual", "-i", str(panel_csv), "-o", str(tmp_path / "c"), "--threshold", "1e12"]) == EXIT_COMPUTE
    assert main(["offsets", "--from", str(tmp_path / "nowhere")]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "[anomalies]" in err and "lower the threshold" in err


def test_config_file_and_overrides(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "envout"))
    toml = tmp_path / "run.toml"
    toml.write_text(
        'input = "data.csv"\nalpha = 0.5\nstart = 2020-01-05\nstart_dates = [2020-01-10]\n'
        '[schema]\ndate = "day"\nentity = "iso"\nx = "c"\ny = "d"\n'
    )
    cfg = load_config(toml, {"alpha": 0.2, "seed": None})
    assert cfg.alpha == 0.2
    assert cfg.start == "2020-01-05" and cfg.start_dates == ["2020-01-10"]
    assert cfg.schema.entity == "iso"
    assert cfg.output == str(tmp_path / "envout")
    toml.write_text('input = "x.csv"\nbogus = 1\n')
    with pytest.raises(ConfigError, match="bogus"):
        load_config(toml)
    toml.write_text("input = [\n")
    with pytest.raises(ConfigError):
        load_config(toml)
    with pytest.raises(ConfigError):
        load_config(None, {"input": "a.csv", "tau_scan": [5, 1]})


def test_rolling_mode_runs(panel_csv, tmp_path):
    out = tmp_path / "roll"
    rc = main(["dual", "-i", str(panel_csv), "-o", str(out), "--mode", "rolling", "--threshold", "10",
               "--tau-scan", "0", "20"])
    assert rc == 0
    offsets = json.loads((out / "offsets.json").read_text())
    assert offsets["tau"] == 6
    labels = np.array([[int(v) for v in r[1:]] for r in _rows(out / "x_labels.csv")[1:]])
    assert labels.min() >= 1
