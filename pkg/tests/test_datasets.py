import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pola.datasets import (DEFAULT_SYNTHETIC, DataError, Segment, dump_csv, gen_synthetic, load_csv,
                           load_dataset, load_power, load_sunspot)


def silso_rows(start_year, values):
    lines = []
    for i, v in enumerate(values):
        y, m = start_year + i // 12, i % 12 + 1
        lines.append(f"{y} {m:02d} {y + (m - 0.5) / 12:.3f} {v:6.1f} {-1.0:5.1f} {-1:4d} 1")
    return "\n".join(lines) + "\n"


def test_sunspot_reads_range(tmp_path):
    f = tmp_path / "sn.txt"
    vals = [96.7, 104.3, 116.7, 92.8, 141.7, 139.2, 158.0, 110.5, 126.5, 125.8, 264.3, 142.0, 122.2, 126.5]
    f.write_text(silso_rows(1749, vals))
    s = load_sunspot(f, first=(1749, 3), last=(1750, 1))
    assert len(s) == 11
    assert s.values[0, 0] == 116.7 and s.values[-1, 0] == 122.2
    assert s.index[0] == "1749-03" and s.index[-1] == "1750-01"
    assert s.per_dim_std[0] == pytest.approx(np.std(vals[2:13]))


def test_sunspot_semicolon_format(tmp_path):
    f = tmp_path / "sn.csv"
    f.write_text("1749;01;1749.042;  96.7; -1.0;   -1;1\n1749;02;1749.123; 104.3; -1.0;   -1;1\n")
    s = load_sunspot(f, first=(1749, 1), last=(1749, 2))
    np.testing.assert_array_equal(s.values[:, 0], [96.7, 104.3])


def test_sunspot_missing_marker_names_row(tmp_path):
    f = tmp_path / "sn.txt"
    f.write_text(silso_rows(1749, [10.0, 20.0, -1.0, 30.0]))
    with pytest.raises(DataError, match=r"sn.txt:3.*1749-03"):
        load_sunspot(f, first=(1749, 1), last=(1749, 4))


def test_sunspot_gap_and_malformed_rows(tmp_path):
    f = tmp_path / "sn.txt"
    text = silso_rows(1749, [10.0, 20.0, 30.0]).splitlines()
    f.write_text("\n".join([text[0], text[2]]) + "\n")
    with pytest.raises(DataError, match="gap"):
        load_sunspot(f, first=(1749, 1), last=(1749, 3))
    f.write_text("1749 01 1749.042 abc -1 -1 1\n")
    with pytest.raises(DataError, match="malformed"):
        load_sunspot(f, first=(1749, 1), last=(1749, 3))


def test_sunspot_strict_length(tmp_path):
    f = tmp_path / "sn.txt"
    f.write_text(silso_rows(1749, [1.0, 2.0, 3.0]))
    with pytest.raises(DataError, match="3259"):
        load_sunspot(f, strict=True)


POWER_HEADER = ("Date;Time;Global_active_power;Global_reactive_power;Voltage;Global_intensity;"
                "Sub_metering_1;Sub_metering_2;Sub_metering_3\n")


def power_line(day, time, gap, volt, inten):
    return f"{day.day}/{day.month}/{day.year};{time};{gap};0.1;{volt};{inten};0;0;0\n"


def test_power_daily_means_and_fill(tmp_path):
    d0 = dt.date(2006, 12, 16)
    d1, d3 = d0 + dt.timedelta(days=1), d0 + dt.timedelta(days=3)
    text = POWER_HEADER
    text += power_line(d0, "17:24:00", 4.0, 240.0, 18.0)
    text += power_line(d0, "17:25:00", 2.0, 236.0, 10.0)
    text += power_line(d1, "00:00:00", "?", "?", "?")
    text += power_line(d1, "00:01:00", 1.0, "?", 4.0)
    text += power_line(d3, "00:00:00", 5.0, 230.0, 20.0)
    f = tmp_path / "power.txt"
    f.write_text(text)
    s = load_power(f, first=d0, last=d3)
    assert s.index == ("2006-12-16", "2006-12-17", "2006-12-18", "2006-12-19")
    # columns: active power, intensity, voltage
    np.testing.assert_allclose(s.values[0], [3.0, 14.0, 238.0])
    np.testing.assert_allclose(s.values[1], [1.0, 4.0, 238.0])  # voltage carried forward
    np.testing.assert_allclose(s.values[2], s.values[1])  # whole day missing
    np.testing.assert_allclose(s.values[3], [5.0, 20.0, 230.0])


def test_power_missing_first_day(tmp_path):
    d0 = dt.date(2006, 12, 16)
    f = tmp_path / "power.txt"
    f.write_text(POWER_HEADER + power_line(d0 + dt.timedelta(days=1), "00:00:00", 1.0, 230.0, 4.0))
    with pytest.raises(DataError, match="first day"):
        load_power(f, first=d0, last=d0 + dt.timedelta(days=2))


def test_csv_round_trip(tmp_path):
    s = gen_synthetic([Segment(50, (0.5,), 1.0)], seed=4, dims=2)
    f = tmp_path / "s.csv"
    dump_csv(s, f)
    back = load_csv(f)
    assert np.array_equal(back.values, s.values)
    with pytest.raises(DataError):
        load_csv(f, columns=["nope"])


def test_load_dataset_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_dataset("sunspot", tmp_path / "absent.txt")
    with pytest.raises(ValueError):
        load_dataset("weather", tmp_path)
    assert len(load_dataset("synthetic", None)) == sum(s.length for s in DEFAULT_SYNTHETIC)


def test_synthetic_noise_free_recursion():
    s = gen_synthetic([Segment(5, (0.5,), 0.0, 0.0)], seed=0, init=[8.0])
    np.testing.assert_allclose(s.values[:, 0], [4, 2, 1, 0.5, 0.25])
    # second segment continues the history around its own mean
    s = gen_synthetic([Segment(2, (0.5,), 0.0, 0.0), Segment(2, (0.5,), 0.0, 10.0)], seed=0, init=[4.0])
    np.testing.assert_allclose(s.values[:, 0], [2, 1, 10 + 0.5 * (1 - 10), 10 + 0.5 * (5.5 - 10)])


def test_synthetic_rejects_unstable_and_is_seeded():
    with pytest.raises(ValueError):
        Segment(10, (1.0,), 0.1)
    with pytest.raises(ValueError):
        Segment(10, (0.5, 0.6), 0.1)
    a = gen_synthetic(DEFAULT_SYNTHETIC, seed=1)
    assert np.array_equal(a.values, gen_synthetic(DEFAULT_SYNTHETIC, seed=1).values)
    assert not np.array_equal(a.values, gen_synthetic(DEFAULT_SYNTHETIC, seed=2).values)


@settings(max_examples=30, deadline=None)
@given(st.floats(-0.95, 0.95), st.floats(-5, 5), st.integers(0, 1000))
def test_synthetic_segment_means(a, mean, seed):
    s = gen_synthetic([Segment(4000, (a,), 0.1, mean)], seed=seed)
    # standard error of an AR(1) sample mean: sd / (1 - a) / sqrt(N)
    se = 0.1 / (1 - a) / np.sqrt(4000)
    assert abs(s.values.mean() - mean) < 5 * se


def test_sunspot_ten_rows(tmp_path):
    f = tmp_path / "sn.txt"
    f.write_text(silso_rows(1749, [float(v) for v in range(10, 20)]))
    assert len(load_sunspot(f)) == 10


def test_synthetic_geometric_decay_from_one():
    s = gen_synthetic([Segment(6, (0.5,), 0.0)], seed=9, init=[1.0])
    np.testing.assert_allclose(s.values[:, 0], 0.5 ** np.arange(1, 7))


def test_synthetic_segment_means_differ():
    s = gen_synthetic([Segment(2000, (0.5,), 0.3, 0.0), Segment(2000, (0.5,), 0.3, 1.0)], seed=6)
    a, b = s.values[200:2000, 0], s.values[2200:, 0]
    se = np.hypot(*(0.3 / 0.5 / np.sqrt(x.size) for x in (a, b)))
    assert b.mean() - a.mean() > 3 * se
