import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedscore.data import (
    DEFAULT_PROPORTIONS,
    Categorical,
    Continuous,
    FederationConfig,
    RowFilter,
    Schema,
    VariableSpec,
    apportion,
    concat,
    generate_synthetic,
    load_csv,
    load_schema,
    partition_sites,
    save_schema,
    site_weights,
    split_counts,
    split_train_valid_test,
)
from fedscore.errors import ConfigError, DataError

from .conftest import SMALL_BETA, SMALL_PLAN, make_dataset

TRIAGE = VariableSpec("triage", "categorical", ("P1", "P2", "P3", "P4"))
SCHEMA = Schema((VariableSpec("age", "continuous"), TRIAGE), "death")


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


# --- schema ---------------------------------------------------------------


def test_variable_spec_rules():
    with pytest.raises(ConfigError):
        VariableSpec("a", "categorical", ("x",))
    with pytest.raises(ConfigError):
        VariableSpec("a", "continuous", ("x", "y"))
    VariableSpec("a", "categorical", ("all",))  # the degenerate binned level


def test_schema_rejects_outcome_clash_and_duplicates():
    with pytest.raises(ConfigError):
        Schema((VariableSpec("y", "continuous"),), "y")
    with pytest.raises(ConfigError):
        Schema((VariableSpec("a", "continuous"), VariableSpec("a", "continuous")), "y")


def test_schema_json_round_trip(tmp_path):
    s = Schema((VariableSpec("age", "continuous", forced_include=True), TRIAGE), "death")
    save_schema(s, tmp_path / "s.json")
    back = load_schema(tmp_path / "s.json")
    assert back == s
    assert back.forced == ["age"]
    assert back.P == 2


# --- CSV ingestion -----------------------------------------------------------


def test_load_three_rows(tmp_path):
    p = write(tmp_path, "age,triage,death\n30,P1,0\n40.5,P2,1\n50,P4,0\n")
    d = load_csv(p, SCHEMA)
    assert d.n == 3
    assert d.columns["age"].tolist() == [30.0, 40.5, 50.0]
    assert d.excluded_missing == 0


def test_missing_cell_is_excluded_and_counted(tmp_path):
    p = write(tmp_path, "age,triage,death\n30,P1,0\n,P2,1\n50,P4,0\n")
    d = load_csv(p, SCHEMA)
    assert d.n == 2
    assert d.excluded_missing == 1


def test_unknown_label_names_row_and_column(tmp_path):
    p = write(tmp_path, "age,triage,death\n30,P1,0\n40,P5,1\n")
    with pytest.raises(DataError, match=r"row 3.*'triage'.*'P5'"):
        load_csv(p, SCHEMA)


@pytest.mark.parametrize(
    "text, pattern",
    [
        ("age,triage,death,extra\n1,P1,0,9\n", "unknown column"),
        ("age,triage,death\nold,P1,0\n", "cannot parse"),
        ("", "empty"),
        ("age,triage,death\n", "no data rows"),
        ("age,death\n1,0\n", "missing column"),
        ("age,triage,death\n1,P1,2\n", "outcome"),
    ],
)
def test_load_errors(tmp_path, text, pattern):
    with pytest.raises(DataError, match=pattern):
        load_csv(write(tmp_path, text), SCHEMA)


def test_row_filter(tmp_path):
    p = write(tmp_path, "age,triage,death\n12,P1,0\n40,P2,1\n18,P4,0\n")
    d = load_csv(p, SCHEMA, filters=[RowFilter.parse("age>=18")])
    assert d.columns["age"].tolist() == [40.0, 18.0]
    with pytest.raises(ConfigError):
        RowFilter.parse("age ~ 3")


def test_csv_round_trip_keeps_split(tmp_path):
    d = split_train_valid_test(generate_synthetic(50, SMALL_BETA, SMALL_PLAN, seed=1), seed=3)
    d.to_csv(tmp_path / "s.csv")
    back = load_csv(tmp_path / "s.csv", d.schema)
    assert back.split.tolist() == d.split.tolist()
    np.testing.assert_array_equal(back.columns["x1"], d.columns["x1"])
    assert back.outcome.tolist() == d.outcome.tolist()


# --- weights and partitioning ----------------------------------------------


def test_partition_sizes_large_cohort():
    sizes = apportion(80613, DEFAULT_PROPORTIONS)
    assert sizes == [3224, 4031, 5643, 7255, 8061, 8867, 9674, 10480, 11286, 12092]


def test_partition_small_hand_case():
    assert apportion(10, (0.2, 0.3, 0.5)) == [2, 3, 5]


def test_partition_k1_identity():
    d = generate_synthetic(30, SMALL_BETA, SMALL_PLAN, seed=2)
    (only,) = partition_sites(d, FederationConfig(K=1, proportions=(1.0,)))
    assert only.n == d.n
    np.testing.assert_array_equal(only.columns["x1"], d.columns["x1"])
    np.testing.assert_array_equal(only.outcome, d.outcome)


def test_partition_disjoint_cover_and_determinism():
    d = generate_synthetic(997, SMALL_BETA, SMALL_PLAN, seed=2)
    cfg = FederationConfig(seed=11)
    sites = partition_sites(d, cfg)
    ids = np.concatenate([s.row_ids for s in sites])
    assert sorted(ids.tolist()) == list(range(d.n))
    assert [s.n for s in sites] == apportion(997, DEFAULT_PROPORTIONS)
    again = partition_sites(d, cfg)
    for a, b in zip(sites, again):
        np.testing.assert_array_equal(a.row_ids, b.row_ids)
    pooled = concat(sites)
    assert sorted(pooled.columns["x1"].tolist()) == sorted(d.columns["x1"].tolist())


def test_partition_needs_enough_rows():
    d = generate_synthetic(5, SMALL_BETA, SMALL_PLAN, seed=2)
    with pytest.raises(DataError):
        partition_sites(d, FederationConfig())


@given(st.integers(10, 200_000), st.lists(st.floats(0.01, 1.0), min_size=1, max_size=12))
def test_apportion_sums_to_n(n, raw):
    props = [r / math.fsum(raw) for r in raw]
    sizes = apportion(n, props)
    assert sum(sizes) == n
    assert all(abs(s - p * n) < 1 + 1e-6 for s, p in zip(sizes, props))


def test_federation_config_validation():
    with pytest.raises(ConfigError):
        FederationConfig(K=2, proportions=(0.5, 0.6))
    with pytest.raises(ConfigError):
        FederationConfig(K=2, proportions=(0.5,))
    with pytest.raises(ConfigError):
        FederationConfig(K=0, proportions=())
    with pytest.raises(ConfigError):
        FederationConfig.equal_sites(2, weights_mode="custom")


@given(st.lists(st.integers(1, 10_000), min_size=1, max_size=20))
def test_weights_normalized(sizes):
    for mode in ("equal", "sample_size"):
        w = site_weights(mode, sizes)
        assert abs(math.fsum(w) - 1.0) <= 1e-12
    w = site_weights("sample_size", sizes)
    total = sum(sizes)
    assert all(wj == nj / total for wj, nj in zip(w, sizes))
    assert np.all(site_weights("equal", sizes) == 1.0 / len(sizes))


# --- splitting ----------------------------------------------------------------


@pytest.mark.parametrize(
    "n, ratios, expected",
    [(100, (0.7, 0.1, 0.2), (70, 10, 20)), (1, (1, 0, 0), (1, 0, 0)), (10, (0.7, 0.1, 0.2), (7, 1, 2))],
)
def test_split_counts(n, ratios, expected):
    assert split_counts(n, ratios) == expected


def test_split_tags_and_determinism():
    d = generate_synthetic(101, SMALL_BETA, SMALL_PLAN, seed=4)
    a = split_train_valid_test(d, (0.7, 0.1, 0.2), seed=9)
    b = split_train_valid_test(d, (0.7, 0.1, 0.2), seed=9)
    assert a.split.tolist() == b.split.tolist()
    assert a.split_counts() == {"train": 71, "validation": 10, "test": 20}
    c = split_train_valid_test(d, (0.7, 0.1, 0.2), seed=10)
    assert a.split.tolist() != c.split.tolist()


def test_split_rejects_negative_ratio():
    d = generate_synthetic(10, SMALL_BETA, SMALL_PLAN, seed=4)
    with pytest.raises(ConfigError):
        split_train_valid_test(d, (1.2, -0.2, 0.0))


def test_untagged_rows_count_as_train():
    d = make_dataset({"x": [1.0, 2.0]}, [0, 1])
    assert d.rows("train").n == 2
    with pytest.raises(DataError):
        d.rows("test")


# --- synthetic generator ---------------------------------------------------------


def test_synthetic_zero_beta_prevalence():
    d = generate_synthetic(10_000, np.zeros(5), SMALL_PLAN, seed=0)
    assert abs(d.outcome.mean() - 0.5) < 0.02


def test_synthetic_intercept_only_prevalence():
    d = generate_synthetic(10_000, [math.log(3), 0.0], (Continuous("z"),), seed=0)
    assert abs(d.outcome.mean() - 0.75) < 0.02


def test_synthetic_deterministic():
    a = generate_synthetic(200, SMALL_BETA, SMALL_PLAN, seed=7)
    b = generate_synthetic(200, SMALL_BETA, SMALL_PLAN, seed=7)
    for k in a.columns:
        assert a.columns[k].tobytes() == b.columns[k].tobytes()
    assert a.outcome.tobytes() == b.outcome.tobytes()


def test_synthetic_dimension_mismatch():
    with pytest.raises(ConfigError):
        generate_synthetic(10, [0.0, 1.0], SMALL_PLAN)


def test_categorical_plan_validation():
    with pytest.raises(ConfigError):
        Categorical("g", ("a", "b"), (0.5, 0.6))
    Continuous("z")


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_split_partition_every_row_tagged_once(seed):
    d = generate_synthetic(57, SMALL_BETA, SMALL_PLAN, seed=1)
    tagged = split_train_valid_test(d, (0.6, 0.2, 0.2), seed=seed)
    counts = tagged.split_counts()
    assert sum(counts.values()) == 57
    assert (counts["validation"], counts["test"]) == (11, 11)
