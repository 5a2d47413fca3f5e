"""CSV ingestion, unit tags, and resampling semantics."""

import numpy as np
import pytest

from chargesim.errors import DataError
from chargesim.timeseries import TimeSeries, load_csv, parse_timestamp, write_csv


def test_parse_iso_and_epoch():
    assert parse_timestamp("1717200000") == 1717200000.0
    assert parse_timestamp("2024-06-01T00:00:00") == 1717200000.0
    with pytest.raises(DataError):
        parse_timestamp("yesterday-ish")


def test_hold_upsample_repeats():
    ts = TimeSeries(0.0, 900.0, [1.0, 2.0], "kW")
    fine = ts.resample(60.0)
    assert len(fine) == 30
    assert np.all(fine.values[:15] == 1.0)
    assert np.all(fine.values[15:] == 2.0)


def test_average_downsample():
    ts = TimeSeries(0.0, 60.0, np.arange(30.0), "kW")
    coarse = ts.resample(900.0)
    assert len(coarse) == 2
    assert coarse.values[0] == pytest.approx(np.mean(np.arange(15.0)))
    assert coarse.values[1] == pytest.approx(np.mean(np.arange(15.0, 30.0)))


def test_non_integer_ratio_rejected():
    ts = TimeSeries(0.0, 900.0, [1.0, 2.0], "kW")
    with pytest.raises(DataError):
        ts.resample(700.0)


def test_unknown_unit_rejected():
    with pytest.raises(DataError):
        TimeSeries(0.0, 60.0, [1.0], "furlongs")


def test_missing_values_rejected():
    with pytest.raises(DataError):
        TimeSeries(0.0, 60.0, [1.0, np.nan], "kW")


def test_csv_roundtrip(tmp_path):
    ts = TimeSeries(1717200000.0, 900.0, [1.5, 2.5, 3.5], "kW")
    path = tmp_path / "series.csv"
    write_csv(path, ts)
    back = load_csv(path, expected_unit="kW")
    assert back.step_s == 900.0
    assert back.start_s == ts.start_s
    assert np.array_equal(back.values, ts.values)
    assert back.unit == "kW"


def test_csv_unit_mismatch_rejected(tmp_path):
    path = tmp_path / "series.csv"
    path.write_text("# unit: kW\ntimestamp,value\n0,1\n900,2\n")
    with pytest.raises(DataError):
        load_csv(path, expected_unit="degC")


def test_csv_nonuniform_rejected(tmp_path):
    path = tmp_path / "series.csv"
    path.write_text("timestamp,value\n0,1\n900,2\n2000,3\n")
    with pytest.raises(DataError):
        load_csv(path)


def test_missing_file_rejected(tmp_path):
    with pytest.raises(DataError):
        load_csv(tmp_path / "nope.csv")


def test_slice_on_grid():
    ts = TimeSeries(0.0, 60.0, np.arange(100.0), "kW")
    part = ts.slice(600.0, 5)
    assert np.array_equal(part.values, np.arange(10.0, 15.0))
    with pytest.raises(DataError):
        ts.slice(30.0, 3)      # off-grid start
    with pytest.raises(DataError):
        ts.slice(5940.0, 5)    # runs past the end
