import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fusiondp import data
from fusiondp.data import Column, DataError, Dataset, FeatureSchema


def tiny_schema(private=("age",)):
    cols = (Column("age"), Column("hr"))
    return FeatureSchema(cols, frozenset(i for i, c in enumerate(cols) if c.name in private))


def write_csv(path, header, rows):
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


# ---------------------------------------------------------------- schema


def test_schema_partition_is_disjoint_and_complete():
    schema = data.default_schema()
    assert schema.private_set.isdisjoint(schema.public_set)
    assert schema.private_set | schema.public_set == set(range(schema.d))


def test_categorical_needs_two_levels():
    with pytest.raises(DataError):
        Column("g", data.CATEGORICAL, 1)


def test_schema_round_trips_through_json(tmp_path):
    schema = data.default_schema()
    schema.save(tmp_path / "s.json")
    assert FeatureSchema.load(tmp_path / "s.json") == schema


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 8), st.data())
def test_projection_is_idempotent_and_ignores_private_columns(d, draw):
    private = draw.draw(st.sets(st.integers(0, d - 1), max_size=d - 1))
    schema = FeatureSchema(tuple(Column(f"c{i}") for i in range(d)), frozenset(private))
    x = np.array(draw.draw(st.lists(st.floats(-1e6, 1e6), min_size=d, max_size=d)))
    once = schema.project(x[None, :])
    assert np.array_equal(schema.public_schema().project(once), once)
    y = x.copy()
    for i in private:
        y[i] = draw.draw(st.floats(-1e6, 1e6))
    assert np.array_equal(schema.project(y[None, :]), once)


# ---------------------------------------------------------------- load_csv


def test_load_csv_three_rows(tmp_path):
    p = write_csv(tmp_path / "a.csv", ["age", "hr", "label"], [[50, 80, 0], [61, 95, 1], [70, 77, 0]])
    ds = data.load_csv(p, tiny_schema())
    assert (ds.n, ds.d) == (3, 2)
    assert ds.labels.tolist() == [0, 1, 0]


def test_load_csv_names_bad_row_and_column(tmp_path):
    p = write_csv(tmp_path / "a.csv", ["age", "hr", "label"], [[50, 80, 0], [61, "fast", 1]])
    with pytest.raises(DataError, match=r"row 1, column 'hr'"):
        data.load_csv(p, tiny_schema())


def test_load_csv_missing_file_and_header_mismatch(tmp_path):
    with pytest.raises(DataError, match="not found"):
        data.load_csv(tmp_path / "nope.csv", tiny_schema())
    p = write_csv(tmp_path / "a.csv", ["age", "bp", "label"], [[50, 80, 0]])
    with pytest.raises(DataError, match="header mismatch"):
        data.load_csv(p, tiny_schema())


def test_categorical_codes_follow_first_appearance(tmp_path):
    schema = FeatureSchema((Column("sex", data.CATEGORICAL, 2), Column("hr")), frozenset({0}))
    p = write_csv(tmp_path / "a.csv", ["sex", "hr", "label"], [["M", 1, 0], ["F", 2, 1], ["M", 3, 0]])
    ds = data.load_csv(p, schema)
    assert ds.features[:, 0].tolist() == [0, 1, 0]
    assert ds.schema.columns[0].levels == ("M", "F")
    # outside training, an unseen level is an error
    q = write_csv(tmp_path / "b.csv", ["sex", "hr", "label"], [["X", 1, 0]])
    with pytest.raises(DataError, match="unknown categorical level"):
        data.load_csv(q, ds.schema, training=False)


def test_physionet_style_file_collapses_and_keeps_schema_columns(tmp_path):
    # hourly rows per patient; one column is mostly empty and must be dropped
    rng = np.random.default_rng(0)
    names = ["HR", "Temp", "EtCO2", "Age"]
    schema = FeatureSchema(tuple(Column(n) for n in names), frozenset({3}))
    rows = []
    for pid in range(60):
        hours = int(rng.integers(2, 6))
        sick = pid % 5 == 0
        for h in range(hours):
            rows.append([
                f"p{pid}",
                "" if rng.random() < 0.2 else f"{rng.normal(80, 10):.1f}",
                f"{rng.normal(37, 0.5):.2f}",
                "" if pid % 10 else "30",
                str(40 + pid % 30),
                int(sick and h == hours - 1),
            ])
    p = write_csv(tmp_path / "long.csv", ["patient", *names, "label"], rows)
    raw = data.load_csv(p, schema, patient_column="patient")
    ds = data.preprocess(raw, target_prevalence=0.15)

    # independent count straight from the file
    with p.open() as fh:
        reader = csv.DictReader(fh)
        table = list(reader)
    patients = {r["patient"] for r in table}
    assert raw.n == len(patients)
    kept = []
    for name in names:
        last = {}
        for r in table:
            if r[name] != "":
                last[r["patient"]] = r[name]
        if 1 - len(last) / len(patients) <= 0.70:
            kept.append(name)
    assert ds.schema.names == kept == ["HR", "Temp", "Age"]
    assert np.all(np.isfinite(ds.features))


def test_collapse_keeps_last_nonmissing_value(tmp_path):
    schema = FeatureSchema((Column("hr"), Column("age")), frozenset({1}))
    rows = [["a", 80, 50, 0], ["a", "", 50, 0], ["a", 90, "", 1], ["b", 70, 33, 0]]
    p = write_csv(tmp_path / "t.csv", ["pid", "hr", "age", "label"], rows)
    ds = data.load_csv(p, schema, patient_column="pid")
    assert ds.features.tolist() == [[90, 50], [70, 33]]
    assert ds.labels.tolist() == [1, 0]


# ---------------------------------------------------------------- preprocess


def _raw(n, n_pos, d=2, seed=0):
    rng = np.random.default_rng(seed)
    y = np.zeros(n)
    y[rng.choice(n, n_pos, replace=False)] = 1
    schema = FeatureSchema(tuple(Column(f"c{i}") for i in range(d)), frozenset({0}))
    return Dataset(rng.normal(size=(n, d)), y, schema)


def test_sparse_column_is_dropped():
    raw = _raw(100, 15, d=3)
    raw.features[:80, 1] = np.nan
    out = data.preprocess(raw, missing_threshold=0.7)
    assert out.schema.names == ["c0", "c2"]


def test_downsampling_count_matches_prevalence_equation():
    out = data.preprocess(_raw(1000, 70), target_prevalence=0.15)
    # 70 / (70 + k) = 0.15  =>  k = 396.67, rounded to nearest
    k = round(70 * 0.85 / 0.15)
    assert k == 397
    assert out.labels.sum() == 70 and out.n - 70 == 397
    assert abs(70 / out.n - 0.15) <= 1 / out.n


def test_prevalence_fixed_point_keeps_rows():
    raw = _raw(1000, 150)
    out = data.preprocess(raw, target_prevalence=0.15)
    assert out.n == raw.n
    assert np.array_equal(np.sort(out.features, axis=0), np.sort(raw.features, axis=0))


def test_median_fill_and_no_nonfinite():
    raw = _raw(200, 30)
    raw.features[::7, 1] = np.nan
    out = data.preprocess(raw, target_prevalence=0.15)
    assert np.all(np.isfinite(out.features))


def test_preprocess_errors():
    with pytest.raises(DataError, match="no positive"):
        data.preprocess(_raw(50, 0))
    with pytest.raises(DataError):
        data.preprocess(_raw(50, 5), missing_threshold=0.0)
    with pytest.raises(DataError):
        data.preprocess(_raw(50, 5), target_prevalence=1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(20, 300), st.floats(0.02, 0.6), st.floats(0.05, 0.5), st.integers(0, 100))
def test_downsampling_never_removes_positives(n, pos_frac, target, seed):
    n_pos = max(1, int(n * pos_frac))
    out = data.preprocess(_raw(n, n_pos, seed=seed), target_prevalence=target, rng_seed=seed)
    assert out.labels.sum() == n_pos


# ---------------------------------------------------------------- split


def test_split_sizes():
    for n, expected in ((100, (10, 70, 10, 10)), (103, (10, 73, 10, 10))):
        parts = data.split(_raw(n, 10), data.SplitSpec(), 0)
        assert tuple(p.n for p in parts) == expected


def test_split_is_a_disjoint_partition():
    raw = _raw(157, 20)
    raw.features[:, 0] = np.arange(157)
    parts = data.split(raw, data.SplitSpec(), 3)
    ids = np.concatenate([p.features[:, 0] for p in parts])
    assert sorted(ids.tolist()) == list(range(157))


def test_split_spec_validation():
    with pytest.raises(DataError):
        data.SplitSpec(0.1, 0.7, 0.1, 0.2)
    with pytest.raises(DataError):
        data.SplitSpec(0.0, 0.8, 0.1, 0.1)
    with pytest.raises(DataError):
        data.split(_raw(9, 2), data.SplitSpec(), 0)


@settings(max_examples=20, deadline=None)
@given(st.integers(10, 400), st.integers(0, 2**31 - 1))
def test_split_determinism_bytewise(tmp_path_factory, n, seed):
    raw = _raw(n, max(1, n // 7))
    d = tmp_path_factory.mktemp("split")
    blobs = []
    for run in range(2):
        for name, part in zip("abcd", data.split(raw, data.SplitSpec(), seed)):
            data.save_dataset(part, d / f"{run}{name}.ds")
        blobs.append([(d / f"{run}{name}.ds").read_bytes() for name in "abcd"])
    assert blobs[0] == blobs[1]


# ---------------------------------------------------------------- standardization


def test_standardized_fitting_split_has_zero_mean_unit_std():
    ds = data.generate_synthetic(500, rng_seed=1)
    st_ = data.fit_standardization(ds)
    z = data.standardize(ds, st_)
    num = z.schema.numeric_indices
    assert np.all(np.abs(z.features[:, num].mean(axis=0)) < 1e-6)
    assert np.all(np.abs(z.features[:, num].std(axis=0) - 1) < 1e-6)
    # categorical codes are untouched
    cat = [i for i in range(z.d) if i not in num]
    assert np.array_equal(z.features[:, cat], ds.features[:, cat])


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 50), st.integers(0, 10_000), st.floats(-1e3, 1e3), st.floats(1e-3, 1e3))
def test_standardization_round_trip(n, seed, loc, scale):
    rng = np.random.default_rng(seed)
    schema = FeatureSchema((Column("a"), Column("b")), frozenset({0}))
    ds = Dataset(loc + scale * rng.normal(size=(n, 2)), rng.integers(0, 2, n), schema)
    back = data.destandardize(data.standardize(ds, data.fit_standardization(ds)))
    assert np.allclose(back.features, ds.features, rtol=0, atol=1e-9 * max(1.0, abs(loc) + scale))


# ---------------------------------------------------------------- synthetic generator


def test_synthetic_prevalence_near_target():
    ds = data.generate_synthetic(20000, coupling=0.8, rng_seed=4)
    assert 0.13 <= ds.prevalence() <= 0.17


def test_synthetic_is_deterministic_and_valid():
    a = data.generate_synthetic(300, rng_seed=5)
    b = data.generate_synthetic(300, rng_seed=5)
    assert np.array_equal(a.features, b.features) and np.array_equal(a.labels, b.labels)
    for i in a.schema.private_indices:
        col = a.schema.columns[i]
        if col.is_categorical:
            assert set(np.unique(a.features[:, i])) <= set(range(col.cardinality))
    with pytest.raises(DataError):
        data.generate_synthetic(9)


def test_dataset_archive_round_trip(tmp_path):
    ds = data.generate_synthetic(50, rng_seed=2)
    ds = data.standardize(ds, data.fit_standardization(ds))
    data.save_dataset(ds, tmp_path / "x.ds")
    back = data.load_dataset(tmp_path / "x.ds")
    assert np.array_equal(back.features, ds.features)
    assert back.schema == ds.schema and back.standardization == ds.standardization


def test_one_hot_encoding_width():
    schema = data.default_schema()
    ds = data.generate_synthetic(20, schema)
    X = schema.encode(ds.features)
    assert X.shape == (20, schema.encoded_width())
    assert schema.encoded_width() == schema.d + 2  # two binary categoricals add one column each
    g = schema.index("Gender")
    block = X[:, schema.encoded_width(range(g)) : schema.encoded_width(range(g)) + 2]
    assert np.all(block.sum(axis=1) == 1)
    assert math.isclose(block[:, 1].mean(), ds.features[:, g].mean())
