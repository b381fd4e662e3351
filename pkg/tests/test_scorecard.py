import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedscore.binning import BinningConfig
from fedscore.data import Continuous, generate_synthetic, split_train_valid_test
from fedscore.errors import DataError, NumericalError
from fedscore.glm import DesignEncoding, encode, fit_mle
from fedscore.pipeline import PooledArm
from fedscore.scorecard import (
    ScoreCard,
    apply,
    derive_points,
    refit_final,
    round_half_away,
    score,
)

from .conftest import make_dataset

AB = DesignEncoding((("A", ("a0", "a1")), ("B", ("b0", "b1", "b2"))))
AB_BETA = np.array([-1.0, 0.8, 0.4, 1.2])


def test_two_variable_hand_case():
    card = derive_points(AB_BETA, AB, 100)
    assert card.entries == {"A": {"a0": 0, "a1": 40}, "B": {"b0": 0, "b1": 20, "b2": 60}}
    assert card.scale == pytest.approx(50.0)
    assert card.max_total == 100


@pytest.mark.parametrize("b", [1e-6, 0.3, 7.0, 250.0])
def test_single_binary_variable_spans_full_range(b):
    enc = DesignEncoding((("s", ("F", "M")),))
    assert derive_points([0.2, b], enc, 100).entries == {"s": {"F": 0, "M": 100}}


def test_negative_coefficient_shifts_reference():
    enc = DesignEncoding((("A", ("a0", "a1")), ("C", ("c0", "c1"))))
    card = derive_points([0.0, 0.8, -0.6], enc, 100)
    # shifted maxima 0.8 and 0.6, scale 100/1.4: 57.14 -> 57, 42.86 -> 43
    assert card.entries == {"A": {"a0": 0, "a1": 57}, "C": {"c0": 43, "c1": 0}}


def test_intercept_does_not_change_card():
    a = derive_points(AB_BETA, AB)
    b = derive_points(AB_BETA + np.array([9.0, 0, 0, 0]), AB)
    assert a == b


def test_rounding_is_half_away_from_zero():
    np.testing.assert_array_equal(round_half_away(np.array([0.5, 1.5, 2.5, -0.5, 2.4999])), [1, 2, 3, -1, 2])


def test_cap_holds_when_rounding_overshoots():
    enc = DesignEncoding(tuple((f"v{i}", ("r", "x")) for i in range(2)))
    card = derive_points([0.0, 1.0, 1.0], enc, 101)  # 50.5 + 50.5 would round to 102
    assert card.max_total <= 101
    assert sorted(max(c.values()) for c in card.entries.values()) == [50, 50]


def test_degenerate_and_invalid_models():
    with pytest.raises(NumericalError, match="degenerate"):
        derive_points(np.array([1.0, 0.0, 0.0, 0.0]), AB)
    with pytest.raises(NumericalError):
        derive_points(np.array([1.0, np.nan, 0.0, 0.0]), AB)
    with pytest.raises(DataError):
        derive_points(np.zeros(3), AB)
    with pytest.raises(DataError):
        derive_points(AB_BETA, AB, 0)
    with pytest.raises(DataError):
        derive_points([0.0, 1.0], DesignEncoding.numeric(["x"]))


# --- apply / score -------------------------------------------------------------------


def test_apply_examples():
    card = derive_points(AB_BETA, AB)
    assert apply(card, {"A": "a0", "B": "b0"}) == 0
    assert apply(card, {"A": "a1", "B": "b2"}) == 100
    assert apply(card, {"A": "a1", "B": "b0"}) == 40
    with pytest.raises(DataError):
        apply(card, {"A": "a1"})
    with pytest.raises(DataError):
        apply(card, {"A": "a9", "B": "b0"})


def test_vectorized_score_matches_apply():
    card = derive_points(AB_BETA, AB)
    d = make_dataset({"A": np.array(["a1", "a0", "a1"]), "B": np.array(["b1", "b2", "b0"])}, [0, 1, 1],
                     categories={"A": ("a0", "a1"), "B": ("b0", "b1", "b2")})
    expected = [apply(card, {"A": a, "B": b}) for a, b in zip(d.columns["A"], d.columns["B"])]
    assert score(card, d).tolist() == expected == [60, 60, 40]
    bad = make_dataset({"A": np.array(["a1", "zz"]), "B": np.array(["b1", "b0"])}, [0, 1])
    with pytest.raises(DataError):
        score(card, bad)


# --- properties ----------------------------------------------------------------------


def random_encoding(r):
    variables = tuple((f"v{i}", tuple(f"c{j}" for j in range(int(r.integers(2, 6))))) for i in range(int(r.integers(1, 9))))
    return DesignEncoding(variables)


def random_rows(r, enc, n):
    return {name: r.choice(np.array(cats), n) for name, cats in enc.variables}


def shifted_eta(beta, enc, rows):
    eta = 0.0
    for (name, cats), sl in zip(enc.variables, enc.slices().values()):
        eff = np.concatenate([[0.0], beta[sl]])
        eff = eff - eff.min()
        eta = eta + eff[np.searchsorted(np.array(cats), rows[name])]
    return eta


def test_linear_fidelity_on_random_rows():
    r = np.random.default_rng(0)
    checked = 0
    for _ in range(20):
        enc = random_encoding(r)
        beta = r.normal(scale=1.5, size=enc.width)
        card = derive_points(beta, enc, 100)
        rows = random_rows(r, enc, 500)
        pts = np.array([apply(card, {k: v[i] for k, v in rows.items()}) for i in range(500)])
        gap = np.abs(card.scale * shifted_eta(beta, enc, rows) - pts)
        assert gap.max() <= 0.5 * len(enc.variables) + 1e-9
        checked += 500
    assert checked == 10_000


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3), st.integers(1, 500))
def test_rescaling_leaves_card_identical_and_bounded(seed, lam, s_max):
    r = np.random.default_rng(seed)
    enc = random_encoding(r)
    beta = r.normal(size=enc.width)
    card = derive_points(beta, enc, s_max)
    scaled = beta.copy()
    scaled[1:] *= lam
    assert derive_points(scaled, enc, s_max).table_equals(card)
    for cats in card.entries.values():
        assert min(cats.values()) == 0
        assert all(0 <= p <= s_max for p in cats.values())
    assert card.max_total <= s_max


# --- serialization ------------------------------------------------------------------------


def test_json_and_markdown_round_trips():
    card = derive_points(AB_BETA, AB)
    assert ScoreCard.from_dict(card.to_dict()) == card
    md = card.to_markdown()
    assert "| Variable | Interval | Point |" in md and "| A | a0 | 0 |" in md and "|  | a1 | 40 |" in md
    assert ScoreCard.from_markdown(md) == card
    labelled = card.to_markdown({"A": "Age (years)"})
    assert "| Age (years) |" in labelled
    assert ScoreCard.from_markdown(labelled, {"A": "Age (years)"}) == card


def test_markdown_keeps_interval_labels():
    enc = DesignEncoding((("age", ("<40", "[40,65)", ">=65")),))
    card = derive_points([0.0, 0.5, 1.0], enc)
    back = ScoreCard.from_markdown(card.to_markdown())
    assert list(back.entries["age"]) == ["<40", "[40,65)", ">=65"]


def test_markdown_errors():
    with pytest.raises(DataError):
        ScoreCard.from_markdown("| A | a0 | 0 |\n")
    with pytest.raises(DataError):
        ScoreCard.from_markdown("S_max = 100; scale = 1.0\n| A | a0 |\n")


# --- refit -------------------------------------------------------------------------------


def correlated_sites():
    r = np.random.default_rng(5)
    n = 4000
    x1 = r.normal(size=n)
    x2 = 0.8 * x1 + 0.6 * r.normal(size=n)
    y = (r.random(n) < 1 / (1 + np.exp(-(x1 + x2)))).astype(int)
    d = make_dataset({"x1": x1, "x2": x2}, y)
    return split_train_valid_test(d, (0.7, 0.1, 0.2), seed=1)


def test_refit_differs_from_full_model_subvector():
    arm = PooledArm([correlated_sites()], [1.0], BinningConfig())
    full_beta, full_card = refit_final(["x1", "x2"], arm)
    beta, card = refit_final(["x1"], arm)
    assert card.variables == ["x1"]
    X, y, enc = encode(arm.binned_sites[0].rows("train"), ["x1"])
    np.testing.assert_allclose(beta, fit_mle(X, y).beta, atol=1e-10)
    # dropping a correlated partner moves the remaining coefficients
    assert np.max(np.abs(beta[1:] - full_beta[1:enc.width])) > 0.1
    assert refit_final(["x1", "x2"], arm)[1] == full_card
    with pytest.raises(DataError):
        refit_final([], arm)


def test_synthetic_card_orders_risk():
    d = split_train_valid_test(generate_synthetic(3000, [0.0, 1.5], (Continuous("z"),), seed=2), seed=2)
    arm = PooledArm([d], [1.0])
    cand = arm.fit_candidate(["z"])
    pts = list(cand.card.entries["z"].values())
    assert pts == sorted(pts) and pts[0] == 0 and pts[-1] == 100
