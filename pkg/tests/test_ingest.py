import datetime as dt
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from clusterlag.errors import DataError, DomainError
from clusterlag.ingest import (
    CountPanel,
    LogPanel,
    Schema,
    emit_csv,
    log_transform,
    parse_csv,
    preprocess,
    rolling_window,
)

D0 = dt.date(2020, 1, 1)


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_zero_becomes_one(tmp_path):
    csv = _write(
        tmp_path / "a.csv",
        "date,location,total_cases,total_deaths\n"
        "2020-01-01,A,0,0\n2020-01-02,A,5,1\n2020-01-03,A,7,2\n",
    )
    x, y = parse_csv(csv)
    assert x.values[0].tolist() == [1.0, 5.0, 7.0]
    assert x.floored[0].tolist() == [True, False, False]
    assert y.values[0].tolist() == [1.0, 1.0, 2.0]


def test_missing_cell_becomes_one(tmp_path):
    csv = _write(
        tmp_path / "b.csv",
        "date,location,total_cases,total_deaths\n"
        "2020-01-01,A,1,0\n2020-01-02,A,2,0\n"
        "2020-01-01,B,3,1\n",
    )
    x, y = parse_csv(csv)
    assert x.entities == ("A", "B")
    assert x.values[1, 1] == 1.0 and x.floored[1, 1]
    assert y.values[1].tolist() == [1.0, 1.0]


def test_custom_schema_and_clip(tmp_path):
    csv = _write(
        tmp_path / "c.csv",
        "day,iso,c,d\n2020-01-01,B,1,1\n2020-01-02,B,2,1\n2020-01-03,B,3,1\n2020-01-01,A,9,9\n",
    )
    x, _ = parse_csv(csv, Schema("day", "iso", "c", "d"), start="2020-01-02")
    assert x.dates == (dt.date(2020, 1, 2), dt.date(2020, 1, 3))
    assert x.entities == ("A", "B")
    assert x.values.tolist() == [[1.0, 1.0], [2.0, 3.0]]


def test_exclusion_list(tmp_path):
    csv = _write(
        tmp_path / "e.csv",
        "date,location,total_cases,total_deaths\n"
        "2020-01-01,A,1,0\n2020-01-02,A,2,0\n2020-01-01,World,3,1\n",
    )
    x, _ = parse_csv(csv, exclude=["World"])
    assert x.entities == ("A",)


def test_one_sided_entity_dropped(tmp_path, caplog):
    csv = _write(
        tmp_path / "f.csv",
        "date,location,total_cases,total_deaths\n"
        "2020-01-01,A,1,0\n2020-01-02,A,2,0\n2020-01-01,B,3,\n2020-01-02,B,4,\n",
    )
    x, y = parse_csv(csv)
    assert x.entities == y.entities == ("A",)
    assert "only one series" in caplog.text


def test_non_numeric_reports_row(tmp_path):
    csv = _write(
        tmp_path / "g.csv",
        "date,location,total_cases,total_deaths\n2020-01-01,A,1,0\n2020-01-02,A,lots,0\n",
    )
    with pytest.raises(DataError, match="data row 1"):
        parse_csv(csv)


def test_single_date_is_domain_error(tmp_path):
    csv = _write(tmp_path / "h.csv", "date,location,total_cases,total_deaths\n2020-01-01,A,1,0\n")
    with pytest.raises(DomainError):
        parse_csv(csv)


def test_unreadable_file(tmp_path):
    with pytest.raises(DataError):
        parse_csv(tmp_path / "nope.csv")


def test_missing_column(tmp_path):
    csv = _write(tmp_path / "i.csv", "date,location,total_cases\n2020-01-01,A,1\n")
    with pytest.raises(DataError, match="missing columns"):
        parse_csv(csv)


def test_decreasing_counts_kept(tmp_path):
    csv = _write(
        tmp_path / "j.csv",
        "date,location,total_cases,total_deaths\n2020-01-01,A,10,1\n2020-01-02,A,8,1\n",
    )
    x, _ = parse_csv(csv)
    assert x.values[0].tolist() == [10.0, 8.0]


def test_preprocess_examples():
    assert preprocess(np.array([0.0, np.nan, 3.0])).tolist() == [1.0, 1.0, 3.0]
    assert preprocess(np.array([1.0, 1.0, 1.0])).tolist() == [1.0, 1.0, 1.0]
    assert preprocess(np.array([0.5, 2.0])).tolist() == [0.5, 2.0]
    with pytest.raises(DomainError):
        preprocess(np.array([-1.0, 2.0]))


@settings(max_examples=100)
@given(arrays(float, (3, 5), elements=st.one_of(st.just(np.nan), st.floats(0, 1e6))))
def test_preprocess_idempotent(raw):
    once = preprocess(raw)
    assert np.array_equal(preprocess(once), once)
    assert (once[~np.isnan(raw) & (raw > 0)] == raw[~np.isnan(raw) & (raw > 0)]).all()


def _panel(values, start=D0):
    values = np.asarray(values, dtype=float)
    n, T = values.shape
    return CountPanel([f"E{i}" for i in range(n)], [start + dt.timedelta(days=i) for i in range(T)], values)


def test_log_transform():
    p = _panel([[1.0, math.e, 1.0]])
    assert log_transform(p).values.tolist() == [[0.0, 1.0, 0.0]]
    assert (log_transform(_panel(np.ones((3, 4)))).values == 0).all()


def test_count_panel_rejects_sub_one():
    with pytest.raises(DomainError):
        _panel([[0.5, 2.0]])


def test_panel_axis_invariants():
    with pytest.raises(DomainError):
        CountPanel(["B", "A"], [D0, D0 + dt.timedelta(1)], np.ones((2, 2)))
    with pytest.raises(DomainError):
        CountPanel(["A"], [D0, D0 + dt.timedelta(2)], np.ones((1, 2)))


def test_rolling_window_examples():
    lp = LogPanel(["A"], [D0 + dt.timedelta(i) for i in range(4)], np.array([[0, 0, math.log(5), math.log(7)]]))
    rp = rolling_window(lp, 3)
    assert rp.values[0, 3].tolist() == [0, math.log(5), math.log(7)]
    assert rp.values[0, 0].tolist() == [0.0, 0.0, 0.0]
    single = rolling_window(lp, 1)
    assert np.array_equal(single.values[..., 0], lp.values)
    with pytest.raises(DomainError):
        rolling_window(lp, 5)
    with pytest.raises(DomainError):
        rolling_window(lp, 0)


def test_rolling_window_padding_repeats_first_value():
    lp = LogPanel(["A"], [D0, D0 + dt.timedelta(1)], np.array([[2.0, 3.0]]))
    assert rolling_window(lp, 2).values[0].tolist() == [[2.0, 2.0], [2.0, 3.0]]


def test_rolling_components_non_decreasing():
    rng = np.random.default_rng(0)
    counts = np.maximum.accumulate(rng.integers(0, 50, (5, 20)), axis=1)
    lp = log_transform(CountPanel.from_raw([f"E{i}" for i in range(5)], [D0 + dt.timedelta(i) for i in range(20)], counts))
    rp = rolling_window(lp, 3)
    assert (np.diff(rp.values, axis=2) >= 0).all()


@settings(max_examples=30, deadline=None)
@given(arrays(float, (3, 4), elements=st.one_of(st.just(0.0), st.integers(1, 10**6).map(float))))
def test_csv_round_trip(tmp_path_factory, raw):
    rng = np.random.default_rng(0)
    path = tmp_path_factory.mktemp("rt") / "p.csv"
    ents = ["AA", "BB", "CC"]
    dates = [D0 + dt.timedelta(i) for i in range(4)]
    x = CountPanel.from_raw(ents, dates, raw)
    y = CountPanel.from_raw(ents, dates, raw[::-1] * rng.integers(0, 2, raw.shape))
    emit_csv(x, y, path)
    x2, y2 = parse_csv(path)
    for a, b in ((x, x2), (y, y2)):
        assert a.entities == b.entities and a.dates == b.dates
        assert np.array_equal(a.values, b.values)
        assert np.array_equal(a.floored, b.floored)


def test_panels_are_immutable(tmp_path):
    p = _panel([[1.0, 2.0]])
    with pytest.raises(ValueError):
        p.values[0, 0] = 5.0
