"""Data pipeline tests over synthetic CSVs and hand-built series.

Window-count oracles are direct counting; cyclic encodings are checked
against their defining angles; the no-leakage property is verified
exhaustively on every produced window.
"""

import numpy as np
import pytest
from datetime import datetime, timedelta

from metroflow.data import (
    DatasetBundle,
    EncodedSeries,
    RawRecord,
    Stats,
    clean,
    denormalize,
    discover_vocab,
    encode,
    format_time,
    load_cache,
    parse_csv,
    parse_time,
    prepare_dataset,
    save_cache,
    split_and_window,
    window_before,
)
from metroflow.errors import ConfigError, SchemaError, UsageError

HEADER = ("holiday,temp,rain_1h,snow_1h,clouds_all,weather_main,"
          "weather_description,date_time,traffic_volume")

WEATHER = ["Clear", "Clouds", "Rain", "Snow"]


def record(hour_offset, temp=280.0, rain=0.0, snow=0.0, clouds=40.0,
           weather="Clouds", holiday="None", volume=1000,
           start=datetime(2016, 1, 1)):
    return RawRecord(
        holiday=holiday, temp=temp, rain_1h=rain, snow_1h=snow,
        clouds_all=clouds, weather_main=weather, weather_description="x",
        date_time=start + timedelta(hours=hour_offset), traffic_volume=volume,
    )


def csv_row(hour, temp=280.0, weather="Clouds", holiday="None", volume=None,
            start=datetime(2016, 1, 1)):
    when = start + timedelta(hours=hour)
    if volume is None:
        volume = int(2000 + 1500 * np.sin(2 * np.pi * hour / 24))
    return (f"{holiday},{temp},0.0,0.0,40,{weather},broken clouds,"
            f"{when:%Y-%m-%d %H:%M:%S},{volume}")


def write_csv(path, hours=120, gap_after=None):
    lines = [HEADER]
    for h in range(hours):
        shifted = h if gap_after is None or h < gap_after else h + 12
        lines.append(csv_row(shifted, weather=WEATHER[h % len(WEATHER)]))
    path.write_text("\n".join(lines) + "\n")
    return path


class TestParse:
    def test_round_trip_counts(self, tmp_path):
        path = write_csv(tmp_path / "ok.csv", hours=50)
        result = parse_csv(path)
        assert len(result.records) == 50
        assert result.rejects == []

    def test_field_types(self, tmp_path):
        path = tmp_path / "one.csv"
        path.write_text(HEADER + "\n" +
                        "None,288.28,0.0,0.0,40,Clouds,scattered clouds,"
                        "2012-10-02 09:00:00,5545\n")
        r = parse_csv(path).records[0]
        assert r.temp == pytest.approx(288.28)
        assert r.traffic_volume == 5545
        assert r.date_time == datetime(2012, 10, 2, 9, 0, 0)
        assert r.weather_main == "Clouds"

    def test_empty_body(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text(HEADER + "\n")
        result = parse_csv(path)
        assert result.records == [] and result.rejects == []

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            parse_csv(tmp_path / "absent.csv")

    def test_header_name_mismatch(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(HEADER.replace("temp", "temperature") + "\n")
        with pytest.raises(SchemaError) as err:
            parse_csv(path)
        assert "temperature" in str(err.value)

    def test_header_count_mismatch(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("holiday,temp\n")
        with pytest.raises(SchemaError):
            parse_csv(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "nothing.csv"
        path.write_text("")
        with pytest.raises(SchemaError):
            parse_csv(path)

    def test_reject_line_numbers(self, tmp_path):
        path = tmp_path / "mixed.csv"
        path.write_text("\n".join([
            HEADER,
            csv_row(0),
            "None,not-a-number,0.0,0.0,40,Clouds,x,2016-01-01 01:00:00,100",
            csv_row(2),
        ]) + "\n")
        result = parse_csv(path)
        assert len(result.records) == 2
        assert len(result.rejects) == 1
        assert result.rejects[0]["line"] == 3

    def test_reject_reasons(self, tmp_path):
        path = tmp_path / "invalid.csv"
        path.write_text("\n".join([
            HEADER,
            "None,280,0,0,40,Clouds,x,2016-01-01 00:00:00,-5",
            "None,280,0,0,150,Clouds,x,2016-01-01 01:00:00,10",
            "None,280,0,0,40,Clouds,x,01/02/2016,10",
            "None,280,0,0,40,Clouds,x,2016-01-01 03:00:00",
        ]) + "\n")
        result = parse_csv(path)
        assert result.records == []
        reasons = " | ".join(r["reason"] for r in result.rejects)
        assert "traffic_volume" in reasons
        assert "clouds_all" in reasons
        assert len(result.rejects) == 4


class TestClean:
    def test_temp_sentinel_dropped(self):
        result = clean([record(0, temp=0.0), record(1)])
        assert len(result.records) == 1
        assert result.dropped_temperature == 1

    def test_extreme_rain_dropped(self):
        result = clean([record(0, rain=9831.3), record(1)])
        assert len(result.records) == 1
        assert result.dropped_rain == 1

    def test_duplicate_keeps_first(self):
        first = record(0, volume=111)
        second = record(0, volume=222)
        result = clean([first, second, record(1)])
        assert result.duplicate_timestamps == 1
        assert result.records[0].traffic_volume == 111

    def test_sorted_output(self):
        result = clean([record(5), record(1), record(3)])
        times = [r.date_time for r in result.records]
        assert times == sorted(times)

    def test_idempotent(self):
        once = clean([record(0, temp=0.0), record(2), record(2), record(1)])
        twice = clean(once.records)
        assert twice.records == once.records
        assert twice.dropped_temperature == 0
        assert twice.duplicate_timestamps == 0


class TestEncode:
    def test_hour_zero(self):
        e = encode([record(0)])
        assert e.features[0, 4] == pytest.approx(0.0, abs=1e-12)
        assert e.features[0, 5] == pytest.approx(1.0, abs=1e-12)

    def test_hour_six(self):
        e = encode([record(6)])
        assert e.features[0, 4] == pytest.approx(1.0, abs=1e-12)
        assert e.features[0, 5] == pytest.approx(0.0, abs=1e-12)

    def test_cyclic_identity(self):
        e = encode([record(h) for h in range(170)])
        hour = e.features[:, 4] ** 2 + e.features[:, 5] ** 2
        dow = e.features[:, 6] ** 2 + e.features[:, 7] ** 2
        np.testing.assert_allclose(hour, 1.0, atol=1e-12)
        np.testing.assert_allclose(dow, 1.0, atol=1e-12)

    def test_day_of_week_period(self):
        # 2016-01-01 is a Friday; one week later the encoding repeats
        e = encode([record(0), record(24 * 7)])
        np.testing.assert_allclose(e.features[0, 6:8], e.features[1, 6:8], atol=1e-12)

    def test_vocab_discovery_sorted(self):
        recs = [record(h, weather=w) for h, w in enumerate(["Rain", "Clear", "Rain"])]
        assert discover_vocab(recs) == ("Clear", "Rain")

    def test_one_hot_block(self):
        e = encode([record(0, weather="Rain")], vocab=("Clear", "Rain"))
        np.testing.assert_array_equal(e.features[0, 9:11], [0.0, 1.0])

    def test_unknown_category_all_zero(self):
        e = encode([record(0, weather="Squall")], vocab=("Clear", "Rain"))
        np.testing.assert_array_equal(e.features[0, 9:11], [0.0, 0.0])

    def test_holiday_flag(self):
        e = encode([record(0, holiday="None"), record(1, holiday="New Years Day")])
        assert e.features[0, 8] == 0.0
        assert e.features[1, 8] == 1.0

    def test_width_and_volume_last(self):
        e = encode([record(0, volume=1234)], vocab=("Clear", "Clouds", "Rain"))
        assert e.features.shape == (1, 13)
        assert e.features[0, -1] == 1234.0
        assert len(e.feature_names) == 13
        assert e.feature_names[-1] == "traffic_volume"


def hourly_series(length, vocab=("Clear", "Clouds"), seed=0):
    rng = np.random.default_rng(seed)
    recs = [record(h, temp=270 + 20 * rng.random(),
                   clouds=float(rng.integers(0, 101)),
                   weather=vocab[h % len(vocab)],
                   volume=int(rng.integers(200, 6000)))
            for h in range(length)]
    return encode(recs, vocab=vocab)


class TestSplitWindow:
    def test_counts_single_segment(self):
        # per split of length m: m - n - T + 1 windows
        e = hourly_series(100)
        b = split_and_window(e, n=6, horizon=1)
        assert len(b.train.windows) == 70 - 6 - 1 + 1
        assert len(b.val.windows) == 10 - 6 - 1 + 1
        assert len(b.test.windows) == 20 - 6 - 1 + 1

    def test_gap_breaks_windows(self):
        recs = [record(h) for h in range(40)] + [record(h + 12) for h in range(40, 100)]
        e = encode(recs, vocab=("Clouds",))
        b = split_and_window(e, n=6, horizon=1)
        # train rows 0..69 split at the gap into runs of 40 and 30
        assert len(b.train.windows) == (40 - 6) + (30 - 6)

    def test_no_window_straddles_split(self):
        e = hourly_series(100)
        b = split_and_window(e, n=6, horizon=2)
        assert b.starts["train"].max() + 6 + 2 <= 70
        assert b.starts["val"].min() >= 70
        assert b.starts["val"].max() + 6 + 2 <= 80
        assert b.starts["test"].min() >= 80

    def test_no_leakage_exhaustive(self):
        e = hourly_series(120)
        b = split_and_window(e, n=8, horizon=3)
        for name in ("train", "val", "test"):
            ds = getattr(b, name)
            for i, s in enumerate(b.starts[name]):
                window_times = b.times[s:s + 8]
                assert window_times.max() < ds.target_times[i].min()

    def test_targets_are_volume_column(self):
        e = hourly_series(100)
        b = split_and_window(e, n=6, horizon=2)
        s = b.starts["train"][0]
        np.testing.assert_array_equal(b.train.targets[0], b.series[s + 6:s + 8, -1])

    def test_train_standardized(self):
        e = hourly_series(400)
        b = split_and_window(e, n=6, horizon=1)
        train_rows = b.series[:b.bounds[0]]
        raw_train = e.features[:b.bounds[0]]
        varying = raw_train.std(axis=0) > 1e-12
        np.testing.assert_allclose(train_rows.mean(axis=0), 0.0, atol=1e-9)
        np.testing.assert_allclose(train_rows[:, varying].std(axis=0), 1.0, atol=1e-9)

    def test_constant_column_guard(self):
        # snow_1h is identically zero here; the guard keeps it finite
        e = hourly_series(100)
        b = split_and_window(e, n=6, horizon=1)
        assert np.isfinite(b.series).all()
        assert b.stats.std[2] == 1.0

    def test_stats_fit_on_train_only(self):
        e = hourly_series(100)
        b = split_and_window(e, n=6, horizon=1)
        expected = Stats.fit(e.features[:70])
        np.testing.assert_array_equal(b.stats.mean, expected.mean)
        np.testing.assert_array_equal(b.stats.std, expected.std)

    def test_short_series_rejected(self):
        e = hourly_series(10)
        with pytest.raises(ConfigError):
            split_and_window(e, n=12, horizon=1)

    def test_bad_ratios_rejected(self):
        e = hourly_series(50)
        with pytest.raises(ConfigError):
            split_and_window(e, n=4, horizon=1, ratios=(0.5, 0.5))
        with pytest.raises(ConfigError):
            split_and_window(e, n=4, horizon=1, ratios=(0.8, 0.3, -0.1))

    def test_bad_window_rejected(self):
        e = hourly_series(50)
        with pytest.raises(ConfigError):
            split_and_window(e, n=0, horizon=1)

    def test_deterministic(self):
        b1 = split_and_window(hourly_series(120), n=6, horizon=1)
        b2 = split_and_window(hourly_series(120), n=6, horizon=1)
        np.testing.assert_array_equal(b1.train.windows, b2.train.windows)
        assert b1.data_hash == b2.data_hash


class TestDenormalize:
    def test_round_trip(self):
        e = hourly_series(100)
        b = split_and_window(e, n=6, horizon=1)
        raw = e.features[:20, -1]
        back = denormalize(b.stats.normalize_volume(raw), b.stats)
        np.testing.assert_allclose(back, raw, atol=1e-12 * max(1.0, np.abs(raw).max()))

    def test_zero_maps_to_mean(self):
        stats = Stats(mean=np.array([5.0, 100.0]), std=np.array([2.0, 50.0]))
        assert denormalize(0.0, stats) == pytest.approx(100.0)
        assert denormalize(1.0, stats) == pytest.approx(150.0)

    def test_missing_stats(self):
        with pytest.raises(UsageError):
            denormalize(np.zeros(3), None)


class TestPrepare:
    def test_summary_contents(self, tmp_path):
        path = write_csv(tmp_path / "t.csv", hours=120)
        bundle = prepare_dataset(path, n=6, horizon=1)
        s = bundle.summary
        assert s["parsed"] == 120
        assert s["rejected"] == 0
        assert s["split_rows"] == {"train": 84, "val": 12, "test": 24}
        assert s["window_counts"]["train"] == len(bundle.train.windows)
        assert s["feature_count"] == bundle.series.shape[1]

    def test_vocab_from_train_rows_only(self, tmp_path):
        path = tmp_path / "t.csv"
        lines = [HEADER]
        for h in range(100):
            weather = "Mist" if h >= 90 else WEATHER[h % 2]
            lines.append(csv_row(h, weather=weather))
        path.write_text("\n".join(lines) + "\n")
        bundle = prepare_dataset(path, n=6, horizon=1)
        assert "Mist" not in bundle.vocab
        # rows carrying the unseen category encode to an all-zero block
        onehot = bundle.series[90:, 9:9 + len(bundle.vocab)]
        raw_onehot = onehot * bundle.stats.std[9:9 + len(bundle.vocab)] \
            + bundle.stats.mean[9:9 + len(bundle.vocab)]
        np.testing.assert_allclose(raw_onehot, 0.0, atol=1e-9)

    def test_unusable_csv_rejected(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text(HEADER + "\n")
        with pytest.raises(ConfigError):
            prepare_dataset(path, n=6, horizon=1)


class TestCache:
    def test_round_trip(self, tmp_path):
        path = write_csv(tmp_path / "t.csv", hours=120)
        bundle = prepare_dataset(path, n=6, horizon=1)
        cache = tmp_path / "data.bin"
        save_cache(bundle, cache)
        loaded = load_cache(cache)
        np.testing.assert_array_equal(loaded.train.windows, bundle.train.windows)
        np.testing.assert_array_equal(loaded.test.targets, bundle.test.targets)
        np.testing.assert_array_equal(loaded.times, bundle.times)
        assert loaded.vocab == bundle.vocab
        assert loaded.data_hash == bundle.data_hash
        assert loaded.summary == bundle.summary
        assert loaded.bounds == bundle.bounds

    def test_byte_identical_rewrite(self, tmp_path):
        path = write_csv(tmp_path / "t.csv", hours=120)
        a, b = tmp_path / "a.bin", tmp_path / "b.bin"
        save_cache(prepare_dataset(path, n=6, horizon=1), a)
        save_cache(prepare_dataset(path, n=6, horizon=1), b)
        assert a.read_bytes() == b.read_bytes()

    def test_wrong_kind_rejected(self, tmp_path):
        from metroflow.serialize import write_blob
        path = tmp_path / "other.bin"
        write_blob(path, {"x": np.zeros(3)}, {"kind": "something-else"})
        with pytest.raises(SchemaError):
            load_cache(path)


class TestHistoryWindow:
    def test_returns_preceding_rows(self, tmp_path):
        path = write_csv(tmp_path / "t.csv", hours=60)
        bundle = prepare_dataset(path, n=6, horizon=1)
        w = window_before(bundle, 10)
        np.testing.assert_array_equal(w, bundle.series[4:10])

    def test_insufficient_history(self, tmp_path):
        path = write_csv(tmp_path / "t.csv", hours=60)
        bundle = prepare_dataset(path, n=6, horizon=1)
        with pytest.raises(UsageError):
            window_before(bundle, 3)

    def test_gap_refused(self, tmp_path):
        path = write_csv(tmp_path / "t.csv", hours=60, gap_after=30)
        bundle = prepare_dataset(path, n=6, horizon=1)
        with pytest.raises(UsageError):
            window_before(bundle, 32)


class TestTimeHelpers:
    def test_round_trip(self):
        text = "2016-03-05 17:00:00"
        assert format_time(parse_time(text)) == text

    def test_bad_format(self):
        with pytest.raises(UsageError):
            parse_time("05/03/2016")
