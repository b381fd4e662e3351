import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedscore.binning import (
    OTHER,
    BinningConfig,
    CutoffSet,
    bin_index,
    cap_cutoffs,
    category_frequencies,
    collapse,
    cutoff_payload,
    federate_category_merges,
    federate_cutoffs,
    interval_labels,
    local_cutoffs,
    transform,
)
from fedscore.errors import ConfigError, DataError

from .conftest import make_dataset

PROBS = (0.05, 0.20, 0.80, 0.95)


def oracle_quantile(values, p):
    """Textbook type-7 quantile, written without numpy."""
    xs = sorted(float(v) for v in values)
    h = (len(xs) - 1) * p
    j = int(math.floor(h))
    k = min(j + 1, len(xs) - 1)
    return xs[j] + (h - j) * (xs[k] - xs[j])


def cuts_for(values, **cfg):
    d = make_dataset({"v": np.asarray(values, dtype=float)}, np.zeros(len(values), dtype=int))
    return local_cutoffs(d, BinningConfig(**cfg)).cutoffs["v"]


def test_grid_0_to_100():
    assert cuts_for(np.arange(101)) == (5.0, 20.0, 80.0, 95.0)


def test_two_values():
    assert cuts_for([0.0, 10.0]) == (0.5, 2.0, 8.0, 9.5)


def test_constant_variable_has_no_cutoffs():
    assert cuts_for([4.0] * 9) == ()


def test_matches_oracle_on_random_vectors():
    r = np.random.default_rng(0)
    for _ in range(1000):
        n = int(r.integers(2, 300))
        v = r.normal(size=n) * r.choice([1.0, 100.0])
        expected = tuple(oracle_quantile(v, p) for p in PROBS)
        assert cuts_for(v, max_categories=5) == expected


def test_ties_are_collapsed():
    v = np.array([1.0] * 50 + [2.0] * 45 + [3.0] * 5)
    # quantiles 1, 1, 2, 2.05 -> the first equals the minimum and is dropped
    assert cuts_for(v) == (2.0, oracle_quantile(v, 0.95))


def test_collapse_and_cap():
    assert collapse([None, 3.0, 1.0, 3.0]) == (1.0, 3.0)
    assert cap_cutoffs((0.0, 1.0, 1.5, 4.0), 4) == (0.0, 1.0, 4.0)
    assert cap_cutoffs((0.0, 1.0, 1.5, 4.0), 2) == (0.0,)


@pytest.mark.parametrize("bad", [dict(percentiles=(5, 5, 80, 95)), dict(percentiles=(0, 20)),
                                 dict(max_categories=1), dict(share_grid=0.0)])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        BinningConfig(**bad)


def test_share_grid_rounds_payload():
    d = make_dataset({"v": np.linspace(0, 10, 101)}, np.zeros(101, dtype=int))
    pay = cutoff_payload(d, BinningConfig(share_grid=1.0))
    # 0.5 rounds to the site minimum 0 and is withheld
    assert pay["v"] == [None, 2.0, 8.0, 10.0]


# --- federation ---------------------------------------------------------------------


def test_single_site_identity():
    assert federate_cutoffs([{"v": [1.0, 2.0, 5.0, 7.0]}], [1.0]).cutoffs["v"] == (1.0, 2.0, 5.0, 7.0)


def test_equal_weight_means():
    fed = federate_cutoffs([{"v": [10, 20, 80, 90]}, {"v": [20, 20, 80, 110]}], [0.5, 0.5])
    assert fed.cutoffs["v"] == (15.0, 20.0, 80.0, 100.0)


def test_unequal_weights():
    assert federate_cutoffs([{"v": [0.0]}, {"v": [4.0]}], [0.25, 0.75]).cutoffs["v"] == (3.0,)


def test_missing_slot_renormalizes():
    fed = federate_cutoffs([{"v": [None, 2.0]}, {"v": [1.0, 4.0]}], [0.5, 0.5])
    assert fed.cutoffs["v"] == (1.0, 3.0)


def test_federation_errors():
    with pytest.raises(DataError):
        federate_cutoffs([{"v": [1.0]}, {"w": [1.0]}], [0.5, 0.5])
    with pytest.raises(DataError):
        federate_cutoffs([{"v": [1.0]}, {"v": [1.0, 2.0]}], [0.5, 0.5])
    with pytest.raises(DataError):
        federate_cutoffs([{"v": [1.0]}], [0.5, 0.5])


@given(
    st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=4, unique=True),
    st.lists(st.floats(0.01, 1.0), min_size=1, max_size=8),
)
def test_identical_sites_federate_to_themselves(cuts, raw):
    cuts = sorted(cuts)
    w = np.array(raw) / math.fsum(raw)
    fed = federate_cutoffs([{"v": cuts}] * len(w), w)
    assert fed.cutoffs["v"] == tuple(cuts)


# --- transform -------------------------------------------------------------------------


def test_left_closed_labels():
    labels = interval_labels((70.0, 100.0, 120.0))
    assert labels == ("<70", "[70,100)", "[100,120)", ">=120")
    assert labels[int(bin_index([70.0], (70.0, 100.0, 120.0))[0])] == "[70,100)"
    assert bin_index([-5.0], (70.0, 100.0))[0] == 0


def test_labels_stay_distinct_for_close_cutoffs():
    labels = interval_labels((1.00001, 1.00002))
    assert len(set(labels)) == 3


def test_empty_cutoffs_give_single_level():
    d = make_dataset({"v": [1.0, 2.0]}, [0, 1])
    t = transform(d, CutoffSet({"v": ()}))
    assert t.schema["v"].categories == ("all",)
    assert t.columns["v"].tolist() == ["all", "all"]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=2, max_size=120))
def test_transform_caps_categories_and_keeps_order(values):
    v = np.array(values)
    d = make_dataset({"v": v}, np.zeros(len(v), dtype=int))
    cuts = local_cutoffs(d)
    t = transform(d, cuts)
    cats = t.schema["v"].categories
    assert len(cats) <= 5
    idx = np.array([cats.index(c) for c in t.columns["v"]])
    order = np.argsort(v, kind="stable")
    assert np.all(np.diff(idx[order]) >= 0)


def test_transform_requires_all_cutoffs():
    d = make_dataset({"v": [1.0, 2.0], "w": [3.0, 4.0]}, [0, 1])
    with pytest.raises(DataError):
        transform(d, CutoffSet({"v": (1.5,)}))


# --- categorical merging ------------------------------------------------------------------


def test_rare_categories_fold_into_other():
    g = np.array(list("aaaaaabbbbbcccddef"))
    d = make_dataset({"g": g}, np.zeros(g.size, dtype=int))
    cuts = local_cutoffs(d, BinningConfig(max_categories=4))
    assert cuts.kept_categories["g"] == ("a", "b", "c")
    t = transform(d, cuts)
    assert t.schema["g"].categories == ("a", "b", "c", OTHER)
    assert sorted(set(t.columns["g"].tolist())) == ["Other", "a", "b", "c"]


def test_category_merge_uses_federated_frequencies():
    s1 = make_dataset({"g": np.array(list("aaab"))}, [0, 0, 0, 0], categories={"g": ("a", "b", "c")})
    s2 = make_dataset({"g": np.array(list("cccb"))}, [0, 0, 0, 0], categories={"g": ("a", "b", "c")})
    freqs = [category_frequencies(s1), category_frequencies(s2)]
    kept = federate_category_merges(freqs, [0.5, 0.5], s1.schema, BinningConfig(max_categories=2))
    # a: 0.375, b: 0.25, c: 0.375 -> tie between a and c, schema order wins
    assert kept == {"g": ("a",)}


def test_small_categoricals_pass_through():
    d = make_dataset({"g": np.array(["x", "y", "x"])}, [0, 1, 0])
    t = transform(d, local_cutoffs(d))
    assert t.columns["g"].tolist() == ["x", "y", "x"]


def test_cutoff_set_round_trip():
    c = CutoffSet({"v": (1.0, 2.5)}, {"g": ("a", "b")})
    assert CutoffSet.from_dict(c.to_dict()) == c
    assert CutoffSet.from_dict({"v": [1.0]}).cutoffs == {"v": (1.0,)}
    with pytest.raises(DataError):
        CutoffSet({"v": (2.0, 1.0)})
