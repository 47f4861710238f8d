"""Scene matching, patch aggregation, dataset assembly, splitting, CSV codecs."""

from datetime import date, datetime, timedelta, timezone

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aquaboost import (
    BANDS,
    BandSample,
    Dataset,
    DatasetRow,
    DegenerateDatasetError,
    EmptyPatchError,
    InputFileError,
    InSituRecord,
    MatchPolicy,
    PatchGrid,
    SplitSpec,
    aggregate_patch,
    build_dataset,
    match_scenes,
    read_band_samples,
    read_dataset,
    read_features,
    read_patches,
    split_dataset,
    write_band_samples,
    write_dataset,
    write_unmatched,
)
from aquaboost.builder import (
    REASON_LOW_VALID_FRACTION,
    REASON_NO_SCENE,
    Unmatched,
    split_sizes,
)


def record(rid="r1", day=date(2019, 6, 10), turbidity=5.5):
    return InSituRecord(record_id=rid, station_id="ST1", lat=22.3, lon=114.2,
                        date=day, turbidity=turbidity)


def sample(rid="r1", sid="s1", when="2019-06-09T03:00:00Z", vf=0.9, fill=1.0):
    from aquaboost import parse_utc_datetime
    return BandSample(record_id=rid, scene_id=sid,
                      scene_datetime=parse_utc_datetime(when),
                      valid_fraction=vf, bands=(fill,) * 12)


class TestMatchPolicy:
    def test_defaults(self):
        p = MatchPolicy()
        assert (p.window_days, p.min_valid_fraction) == (3, 0.5)

    @pytest.mark.parametrize("kw", [
        {"window_days": -1}, {"min_valid_fraction": -0.1},
        {"min_valid_fraction": 1.5}, {"scene_selection": "first"},
    ])
    def test_validation(self, kw):
        with pytest.raises(ValueError):
            MatchPolicy(**kw)


class TestMatchScenes:
    def test_symmetric_two_day_tie_goes_to_earlier_scene(self):
        rec = record(day=date(2019, 6, 10))
        early = sample(sid="a", when="2019-06-08T12:00:00Z")
        late = sample(sid="b", when="2019-06-12T12:00:00Z")
        assert match_scenes(rec, [late, early], MatchPolicy()) is early

    def test_scene_outside_window_yields_none(self):
        rec = record(day=date(2019, 6, 10))
        far = sample(when="2019-06-14T03:00:00Z")
        assert match_scenes(rec, [far], MatchPolicy()) is None

    def test_inclusive_three_day_boundary(self):
        rec = record(day=date(2019, 6, 10))
        edge = sample(when="2019-06-13T23:00:00Z", vf=0.9)
        assert match_scenes(rec, [edge], MatchPolicy()) is edge

    def test_zero_day_window_keeps_same_day_scene(self):
        rec = record(day=date(2019, 6, 10))
        same_day = sample(when="2019-06-10T01:00:00Z")
        next_day = sample(sid="s2", when="2019-06-11T01:00:00Z")
        policy = MatchPolicy(window_days=0)
        assert match_scenes(rec, [same_day, next_day], policy) is same_day
        assert match_scenes(rec, [next_day], policy) is None

    def test_valid_fraction_gate_applies_before_selection(self):
        rec = record(day=date(2019, 6, 10))
        near_cloudy = sample(sid="near", when="2019-06-10T11:00:00Z", vf=0.2)
        far_clear = sample(sid="far", when="2019-06-12T11:00:00Z", vf=0.8)
        assert match_scenes(rec, [near_cloudy, far_clear], MatchPolicy()) is far_clear

    def test_no_qualifying_scene_is_none_not_error(self):
        rec = record()
        assert match_scenes(rec, [], MatchPolicy()) is None

    def test_nearest_in_time_wins(self):
        rec = record(day=date(2019, 6, 10))
        close = sample(sid="close", when="2019-06-10T14:00:00Z")
        farther = sample(sid="farther", when="2019-06-09T03:00:00Z")
        assert match_scenes(rec, [farther, close], MatchPolicy()) is close

    def test_identical_timestamp_tie_breaks_on_scene_id(self):
        rec = record(day=date(2019, 6, 10))
        a = sample(sid="a", when="2019-06-10T03:00:00Z")
        b = sample(sid="b", when="2019-06-10T03:00:00Z")
        assert match_scenes(rec, [b, a], MatchPolicy()) is a
        assert match_scenes(rec, [a, b], MatchPolicy()) is a

    def test_foreign_record_id_rejected(self):
        with pytest.raises(ValueError, match="r2"):
            match_scenes(record(rid="r1"), [sample(rid="r2")], MatchPolicy())

    @given(
        day_offsets=st.lists(st.integers(-6, 6), min_size=1, max_size=8),
        hours=st.lists(st.integers(0, 23), min_size=8, max_size=8),
        window=st.integers(0, 4),
    )
    @settings(max_examples=200, deadline=None)
    def test_selected_scene_never_farther_than_window_bound(self, day_offsets, hours, window):
        rec = record(day=date(2019, 6, 10))
        scenes = [
            BandSample(
                record_id="r1", scene_id=f"s{i}",
                scene_datetime=datetime(2019, 6, 10, hours[i % 8], tzinfo=timezone.utc)
                + timedelta(days=off),
                valid_fraction=0.9, bands=(1.0,) * 12,
            )
            for i, off in enumerate(day_offsets)
        ]
        chosen = match_scenes(rec, scenes, MatchPolicy(window_days=window))
        if chosen is not None:
            anchor = datetime(2019, 6, 10, 12, tzinfo=timezone.utc)
            bound = timedelta(days=window) + timedelta(hours=12)
            assert abs(chosen.scene_datetime - anchor) <= bound


def patch_grid(values, valid, rid="r1", sid="s1"):
    arr = np.asarray(values, dtype=float)
    return PatchGrid(
        record_id=rid, scene_id=sid,
        scene_datetime=datetime(2019, 6, 9, 3, tzinfo=timezone.utc),
        bands={b: arr for b in BANDS},
        valid=np.asarray(valid, dtype=bool),
    )


class TestAggregatePatch:
    def test_two_by_two_mean(self):
        s = aggregate_patch(patch_grid([[1.0, 2.0], [3.0, 4.0]], [[1, 1], [1, 1]]))
        assert s.bands == (2.5,) * 12
        assert s.valid_fraction == 1.0

    def test_all_masked_is_empty_patch_error(self):
        with pytest.raises(EmptyPatchError) as exc_info:
            aggregate_patch(patch_grid([[1.0, 2.0]], [[0, 0]], rid="rX", sid="sY"))
        assert "rX" in str(exc_info.value) and "sY" in str(exc_info.value)

    def test_constant_grid_half_masked(self):
        s = aggregate_patch(patch_grid([[7.0, 7.0], [7.0, 7.0]], [[1, 1], [0, 0]]))
        assert s.bands == (7.0,) * 12
        assert s.valid_fraction == 0.5

    def test_masked_pixels_do_not_contribute(self):
        s = aggregate_patch(patch_grid([[1.0, 100.0]], [[1, 0]]))
        assert s.bands == (1.0,) * 12

    def test_non_finite_valid_pixel_rejected(self):
        with pytest.raises(ValueError, match="non-finite"):
            aggregate_patch(patch_grid([[np.nan, 1.0]], [[1, 1]]))

    def test_non_finite_masked_pixel_is_fine(self):
        s = aggregate_patch(patch_grid([[np.nan, 1.0]], [[0, 1]]))
        assert s.bands == (1.0,) * 12

    def test_missing_band_rejected_at_construction(self):
        arr = np.ones((2, 2))
        with pytest.raises(ValueError, match="missing bands"):
            PatchGrid("r", "s", datetime(2019, 6, 9, tzinfo=timezone.utc),
                      bands={b: arr for b in BANDS[:-1]}, valid=arr.astype(bool))

    def test_shape_mismatch_rejected(self):
        bands = {b: np.ones((2, 2)) for b in BANDS}
        bands["B5"] = np.ones((2, 3))
        with pytest.raises(ValueError, match="B5"):
            PatchGrid("r", "s", datetime(2019, 6, 9, tzinfo=timezone.utc),
                      bands=bands, valid=np.ones((2, 2), dtype=bool))

    @given(st.lists(st.floats(min_value=-1e3, max_value=1e3), min_size=1, max_size=16))
    @settings(max_examples=100, deadline=None)
    def test_mean_lies_within_valid_pixel_range(self, values):
        n = len(values)
        grid = np.asarray(values).reshape(1, n)
        s = aggregate_patch(patch_grid(grid, np.ones((1, n), dtype=bool)))
        assert min(values) - 1e-9 <= s.bands[0] <= max(values) + 1e-9


class TestBuildDataset:
    def test_empty_inputs(self):
        ds, unmatched = build_dataset([], [], MatchPolicy())
        assert len(ds) == 0 and unmatched == []

    def test_three_records_one_outside_window(self):
        records = [record(rid="a", day=date(2019, 6, 10)),
                   record(rid="b", day=date(2019, 7, 1)),
                   record(rid="c", day=date(2019, 8, 15), turbidity=7.25)]
        samples = [sample(rid="a", when="2019-06-09T03:00:00Z", fill=0.25),
                   sample(rid="b", when="2019-07-10T03:00:00Z"),
                   sample(rid="c", when="2019-08-14T03:00:00Z", fill=0.75)]
        ds, unmatched = build_dataset(records, samples, MatchPolicy())
        assert ds.record_ids() == ["a", "c"]
        assert ds.rows[0].features == (0.25,) * 12
        assert ds.rows[1].target == 7.25
        assert unmatched == [Unmatched("b", REASON_NO_SCENE)]

    def test_low_valid_fraction_reason(self):
        records = [record(rid="a")]
        samples = [sample(rid="a", vf=0.1)]
        _, unmatched = build_dataset(records, samples, MatchPolicy())
        assert unmatched == [Unmatched("a", REASON_LOW_VALID_FRACTION)]

    def test_rows_sorted_regardless_of_input_order(self):
        records = [record(rid="z"), record(rid="a"), record(rid="m")]
        samples = [sample(rid=r) for r in ("m", "z", "a")]
        ds1, _ = build_dataset(records, samples, MatchPolicy())
        ds2, _ = build_dataset(list(reversed(records)), list(reversed(samples)), MatchPolicy())
        assert ds1.record_ids() == ds2.record_ids() == ["a", "m", "z"]
        assert ds1.rows == ds2.rows

    def test_duplicate_record_scene_pair_rejected(self):
        samples = [sample(sid="s1"), sample(sid="s1")]
        with pytest.raises(ValueError, match="duplicate"):
            build_dataset([record()], samples, MatchPolicy())


class TestSplitSpec:
    def test_defaults(self):
        s = SplitSpec()
        assert (s.train_fraction, s.test_fraction, s.val_fraction) == (0.55, 0.20, 0.25)

    def test_fractions_must_sum_to_one(self):
        with pytest.raises(ValueError, match="sum"):
            SplitSpec(train_fraction=0.5, test_fraction=0.2, val_fraction=0.2)

    def test_fraction_range(self):
        with pytest.raises(ValueError):
            SplitSpec(train_fraction=1.2, test_fraction=-0.1, val_fraction=-0.1)


def toy_dataset(n, seed=0):
    rng = np.random.default_rng(seed)
    rows = tuple(
        DatasetRow(f"r{i:04d}", tuple(rng.uniform(0, 1, 12).tolist()), float(rng.uniform(0, 10)))
        for i in range(n)
    )
    return Dataset(rows=rows)


class TestSplitDataset:
    def test_reference_sizes_at_660(self):
        assert split_sizes(660, SplitSpec()) == (363, 132, 165)

    def test_train_plus_val_is_528(self):
        tr, te, va = split_sizes(660, SplitSpec())
        assert tr + va == 528

    def test_split_660(self):
        ds = toy_dataset(660)
        tr, te, va = split_dataset(ds, SplitSpec())
        assert (len(tr), len(te), len(va)) == (363, 132, 165)

    def test_partition_disjoint_and_covering(self):
        ds = toy_dataset(101)
        tr, te, va = split_dataset(ds, SplitSpec(seed=3))
        ids = [set(tr.record_ids()), set(te.record_ids()), set(va.record_ids())]
        assert ids[0] | ids[1] | ids[2] == set(ds.record_ids())
        assert not (ids[0] & ids[1]) and not (ids[0] & ids[2]) and not (ids[1] & ids[2])

    def test_same_seed_same_partition(self):
        ds = toy_dataset(60)
        a = split_dataset(ds, SplitSpec(seed=7))
        b = split_dataset(ds, SplitSpec(seed=7))
        assert [x.rows for x in a] == [y.rows for y in b]

    def test_different_seed_differs(self):
        ds = toy_dataset(60)
        a = split_dataset(ds, SplitSpec(seed=7))
        b = split_dataset(ds, SplitSpec(seed=8))
        assert any(x.rows != y.rows for x, y in zip(a, b))

    def test_empty_dataset_rejected(self):
        with pytest.raises(DegenerateDatasetError):
            split_dataset(Dataset(rows=()), SplitSpec())

    def test_empty_mandatory_split_rejected_at_n_ge_3(self):
        ds = toy_dataset(10)
        spec = SplitSpec(train_fraction=0.98, test_fraction=0.01, val_fraction=0.01)
        with pytest.raises(DegenerateDatasetError):
            split_dataset(ds, spec)

    def test_tiny_n_allows_empty_split(self):
        ds = toy_dataset(2)
        tr, te, va = split_dataset(ds, SplitSpec())
        assert len(tr) + len(te) + len(va) == 2

    @given(n=st.integers(3, 200), seed=st.integers(0, 1000))
    @settings(max_examples=60, deadline=None)
    def test_partition_property(self, n, seed):
        ds = toy_dataset(n)
        try:
            tr, te, va = split_dataset(ds, SplitSpec(seed=seed))
        except DegenerateDatasetError:
            assert min(split_sizes(n, SplitSpec())) == 0
            return
        assert len(tr) + len(te) + len(va) == n
        assert set(tr.record_ids()) | set(te.record_ids()) | set(va.record_ids()) == set(ds.record_ids())


class TestBandSamplesCsv:
    def test_round_trip(self, tmp_path):
        path = str(tmp_path / "bands.csv")
        samples = [sample(sid="s1", fill=0.125), sample(sid="s2", fill=2.5)]
        write_band_samples(path, samples)
        assert read_band_samples(path) == samples

    def test_leading_comment_lines_skipped(self, tmp_path):
        path = tmp_path / "bands.csv"
        header = "record_id,scene_id,scene_datetime,valid_fraction," + ",".join(BANDS)
        row = "r1,s1,2019-06-09T03:00:00Z,0.9," + ",".join(["1.0"] * 12)
        path.write_text("# scale: DN/10000\n" + header + "\n" + row + "\n")
        assert len(read_band_samples(str(path))) == 1

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bands.csv"
        path.write_text("record_id,scene_id\n")
        with pytest.raises(InputFileError, match="header"):
            read_band_samples(str(path))

    def test_bad_datetime_cites_line(self, tmp_path):
        path = tmp_path / "bands.csv"
        header = "record_id,scene_id,scene_datetime,valid_fraction," + ",".join(BANDS)
        row = "r1,s1,yesterday,0.9," + ",".join(["1.0"] * 12)
        path.write_text(header + "\n" + row + "\n")
        with pytest.raises(InputFileError) as exc_info:
            read_band_samples(str(path))
        assert any("line 2" in d for d in exc_info.value.diagnostics)

    def test_duplicate_pair_rejected(self, tmp_path):
        path = tmp_path / "bands.csv"
        header = "record_id,scene_id,scene_datetime,valid_fraction," + ",".join(BANDS)
        row = "r1,s1,2019-06-09T03:00:00Z,0.9," + ",".join(["1.0"] * 12)
        path.write_text(header + "\n" + row + "\n" + row + "\n")
        with pytest.raises(InputFileError, match="duplicate"):
            read_band_samples(str(path))

    def test_empty_file(self, tmp_path):
        path = tmp_path / "bands.csv"
        path.write_text("")
        with pytest.raises(InputFileError, match="empty"):
            read_band_samples(str(path))


class TestDatasetCsv:
    def test_round_trip(self, tmp_path):
        path = str(tmp_path / "ds.csv")
        ds = toy_dataset(7)
        write_dataset(path, ds)
        back = read_dataset(path)
        assert back.rows == ds.rows

    def test_written_bytes_are_stable(self, tmp_path):
        p1, p2 = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
        ds = toy_dataset(5)
        write_dataset(p1, ds)
        write_dataset(p2, ds)
        assert open(p1, "rb").read() == open(p2, "rb").read()

    def test_bad_header(self, tmp_path):
        path = tmp_path / "ds.csv"
        path.write_text("record_id,B1\n")
        with pytest.raises(InputFileError, match="header"):
            read_dataset(str(path))

    def test_duplicate_record_id(self, tmp_path):
        path = tmp_path / "ds.csv"
        header = "record_id," + ",".join(BANDS) + ",turbidity_ntu"
        row = "r1," + ",".join(["1.0"] * 12) + ",5.0"
        path.write_text(header + "\n" + row + "\n" + row + "\n")
        with pytest.raises(InputFileError, match="duplicate"):
            read_dataset(str(path))


class TestUnmatchedCsv:
    def test_bytes(self, tmp_path):
        path = tmp_path / "un.csv"
        write_unmatched(str(path), [Unmatched("r2", REASON_NO_SCENE)])
        assert path.read_bytes() == b"record_id,reason\nr2,no_scene_in_window\n"


class TestPatchCsv:
    def _patch_text(self):
        lines = ["record_id,scene_id,scene_datetime,band,row,col,value,valid"]
        for band_i, band in enumerate(BANDS):
            for r in range(2):
                for c in range(2):
                    value = float(band_i * 10 + r * 2 + c)
                    valid = 0 if (r, c) == (1, 1) else 1
                    lines.append(f"p1,s1,2019-06-09T03:00:00Z,{band},{r},{c},{value},{valid}")
        return "\n".join(lines) + "\n"

    def test_happy_path(self, tmp_path):
        path = tmp_path / "patch.csv"
        path.write_text(self._patch_text())
        patches = read_patches(str(path))
        assert len(patches) == 1
        s = aggregate_patch(patches[0])
        # valid pixels of band B1 are 0,1,2 -> mean 1.0; fraction 3/4
        assert s.bands[0] == 1.0
        assert s.valid_fraction == 0.75

    def test_incomplete_grid_rejected(self, tmp_path):
        path = tmp_path / "patch.csv"
        text = self._patch_text()
        lines = text.splitlines()
        path.write_text("\n".join(lines[:-1]) + "\n")  # drop last cell of B12
        with pytest.raises(InputFileError, match="B12"):
            read_patches(str(path))

    def test_unknown_band_rejected(self, tmp_path):
        path = tmp_path / "patch.csv"
        path.write_text(
            "record_id,scene_id,scene_datetime,band,row,col,value,valid\n"
            "p1,s1,2019-06-09T03:00:00Z,B10,0,0,1.0,1\n"
        )
        with pytest.raises(InputFileError, match="B10"):
            read_patches(str(path))

    def test_valid_flag_disagreement_rejected(self, tmp_path):
        path = tmp_path / "patch.csv"
        text = self._patch_text()
        path.write_text(text.replace("B2,0,0,10.0,1", "B2,0,0,10.0,0"))
        with pytest.raises(InputFileError, match="disagrees"):
            read_patches(str(path))

    def test_duplicate_cell_rejected(self, tmp_path):
        path = tmp_path / "patch.csv"
        text = self._patch_text()
        path.write_text(text + "p1,s1,2019-06-09T03:00:00Z,B1,0,0,9.0,1\n")
        with pytest.raises(InputFileError, match="duplicate"):
            read_patches(str(path))


class TestFeaturesCsv:
    def test_bare_schema(self, tmp_path):
        path = tmp_path / "features.csv"
        header = "record_id," + ",".join(BANDS)
        path.write_text(header + "\n" + "r1," + ",".join(["0.5"] * 12) + "\n")
        rows = read_features(str(path))
        assert rows == [("r1", (0.5,) * 12)]

    def test_full_dataset_schema_ignores_target(self, tmp_path):
        path = str(tmp_path / "ds.csv")
        write_dataset(path, toy_dataset(3))
        rows = read_features(path)
        assert len(rows) == 3 and len(rows[0][1]) == 12

    def test_missing_band_column_named(self, tmp_path):
        path = tmp_path / "features.csv"
        cols = ["record_id"] + [b for b in BANDS if b != "B8A"]
        path.write_text(",".join(cols) + "\n")
        with pytest.raises(InputFileError, match="B8A"):
            read_features(str(path))
