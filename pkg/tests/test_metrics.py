import datetime as dt
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sikjforest.core_data import QUANTILE_LEVELS
from sikjforest.errors import InvalidDataError, UndefinedScoreError
from sikjforest.metrics import ScoredTarget, coverage, mae, score_frame, summarize, wis

WEEK = dt.date(2023, 1, 8)


def wis_brute(y, levels, values):
    """Plain-loop evaluation of the printed formula."""
    total = 0.0
    for tau, q in zip(levels, values):
        indicator = 1.0 if y <= q else 0.0
        total += 2.0 * (indicator - tau) * (q - y)
    return total / len(levels)


def target(truth, values, levels=QUANTILE_LEVELS, point=None, **kw):
    q = tuple(zip(levels, values))
    return ScoredTarget(kw.pop("region", "a"), kw.pop("week", WEEK), kw.pop("horizon", 1), truth,
                        truth if point is None else point, q, **kw)


# ---- MAE ---------------------------------------------------------------------

def test_mae_examples():
    assert mae([(3.0, 3.0), (5.0, 5.0)]) == 0.0
    assert mae([(0.0, 5.0), (10.0, 5.0)]) == 5.0


def test_mae_permutation_invariant():
    rng = random.Random(0)
    pairs = [(rng.random(), rng.random()) for _ in range(50)]
    shuffled = pairs[:]
    rng.shuffle(shuffled)
    assert mae(pairs) == pytest.approx(mae(shuffled), rel=1e-15)


def test_mae_empty():
    with pytest.raises(UndefinedScoreError):
        mae([])


# ---- WIS ---------------------------------------------------------------------

def test_wis_hand_example():
    assert abs(wis(2.0, [(0.25, 1.0), (0.5, 2.0), (0.75, 3.0)]) - 1 / 3) <= 1e-12


def test_wis_zero_at_point_mass_on_truth():
    assert wis(5.0, [(lv, 5.0) for lv in QUANTILE_LEVELS]) == 0.0


def test_wis_zero_only_if_all_equal_truth():
    assert wis(5.0, [(0.25, 5.0), (0.5, 5.0), (0.75, 5.01)]) > 0


def test_wis_widening_increases():
    levels = QUANTILE_LEVELS
    z = np.array([lv - 0.5 for lv in levels])
    scores = [wis(10.0, list(zip(levels, 10.0 + w * z))) for w in np.linspace(0.1, 20, 40)]
    assert np.all(np.diff(scores) > 0)


def test_wis_rejects_unsorted_levels():
    with pytest.raises(InvalidDataError):
        wis(1.0, [(0.5, 1.0), (0.25, 0.0)])


def test_wis_random_cases_match_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        K = int(rng.integers(1, 12))
        levels = np.sort(rng.choice(np.arange(1, 100) / 100, 2 * K + 1, replace=False))
        values = np.sort(rng.normal(0, 10, levels.size))
        y = float(rng.normal(0, 10))
        assert abs(wis(y, list(zip(levels, values))) - wis_brute(y, levels, values)) <= 1e-12


@settings(max_examples=100)
@given(st.lists(st.floats(-1e3, 1e3), min_size=23, max_size=23), st.floats(-1e3, 1e3),
       st.floats(-1e3, 1e3))
def test_wis_nonnegative_and_shift_invariant(vals, y, c):
    values = sorted(vals)
    q = list(zip(QUANTILE_LEVELS, values))
    base = wis(y, q)
    assert base >= 0
    shifted = wis(y + c, [(lv, v + c) for lv, v in q])
    # Shifts reorder ties only through rounding; compare with a scale-aware slack.
    if all(abs((v + c) - (y + c) - (v - y)) < 1e-9 for v in values):
        assert shifted == pytest.approx(base, rel=1e-6, abs=1e-6)


def test_wis_point_mass_brute_force():
    v, y = 3.0, 7.0
    assert wis(y, [(lv, v) for lv in QUANTILE_LEVELS]) == pytest.approx(
        wis_brute(y, QUANTILE_LEVELS, [v] * 23), abs=1e-12)


# ---- coverage ----------------------------------------------------------------

def symmetric(center, scale=1.0):
    return [center + scale * (lv - 0.5) for lv in QUANTILE_LEVELS]


def test_coverage_inside_and_above():
    inside = [target(5.0, symmetric(5.0)) for _ in range(4)]
    above = [target(50.0, symmetric(5.0)) for _ in range(4)]
    assert coverage(inside, 0.5) == 1.0
    assert coverage(above, 0.9) == 0.0


def test_coverage_nested():
    rng = np.random.default_rng(1)
    ts = [target(float(rng.normal(0, 2)), symmetric(0.0, 5.0)) for _ in range(200)]
    c50, c90 = coverage(ts, 0.5), coverage(ts, 0.9)
    assert 0.0 <= c50 <= c90 <= 1.0


def test_coverage_missing_level_named():
    t = target(1.0, [0.0, 1.0, 2.0], levels=(0.1, 0.5, 0.9))
    with pytest.raises(InvalidDataError, match="0.25"):
        coverage([t], 0.5)


# ---- summaries ---------------------------------------------------------------

def test_summarize_single_target():
    t = target(4.0, symmetric(5.0), point=6.0, model="m")
    table = summarize([t])
    vals = dict(zip(table.metric, table.value))
    assert vals["mae"] == 2.0
    assert vals["wis"] == pytest.approx(wis(4.0, t.quantiles))
    assert vals["cov50"] == 0.0 and vals["cov90"] == 0.0


def test_summarize_grand_mean_and_weekly_series():
    rng = np.random.default_rng(2)
    ts = [target(float(rng.uniform(0, 10)), symmetric(5.0, 8.0), point=5.0,
                 week=WEEK + dt.timedelta(weeks=w), horizon=h, model="m")
          for w in range(6) for h in (1, 2)]
    table = summarize(ts, ["week"])
    overall = table[(table.group == "all") & (table.metric == "wis")].value.iloc[0]
    assert overall == pytest.approx(np.mean([wis(t.truth, t.quantiles) for t in ts]))
    weekly = table[(table.group != "all") & (table.metric == "mae")]
    assert len(weekly) == 6
    assert weekly.group.iloc[0] == f"week={WEEK.isoformat()}"


def test_summarize_point_only_omits_quantile_metrics():
    t = ScoredTarget("a", WEEK, 1, 3.0, 4.0, None, "boost")
    assert set(summarize([t]).metric) == {"mae"}
    assert np.isnan(score_frame([t]).wis.iloc[0])


def test_summarize_empty():
    with pytest.raises(UndefinedScoreError):
        summarize([])
