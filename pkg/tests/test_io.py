import datetime as dt
from pathlib import Path

import numpy as np
import pytest

from sikjforest.core_data import QUANTILE_LEVELS, QuantileForecast, RegionSeries
from sikjforest.errors import InvalidConfigError, InvalidDataError
from sikjforest.io import (
    PanelStore,
    SubmissionError,
    ingest,
    read_populations,
    read_submission,
    target_end_date,
    target_name,
    validate_submission,
    write_series,
    write_submission,
)
from sikjforest.sikjalpha import generate_predictor_grid

from conftest import make_series

FIX = Path(__file__).parent / "fixtures"
MALFORMED = sorted((FIX / "malformed").glob("*.csv"))
FD = dt.date(2022, 10, 9)


@pytest.fixture
def pops():
    return read_populations(FIX / "populations.csv")


def forecast(region="01", h=1, center=10.0, fd=FD):
    vals = [center * (0.5 + lv) for lv in QUANTILE_LEVELS]
    return QuantileForecast(region, fd, h, center, tuple(zip(QUANTILE_LEVELS, vals)))


# ---- ingestion ---------------------------------------------------------------

def test_populations(pops):
    assert pops.national_population == 1000
    assert pops.regions == ["01", "02", "03"]
    assert sorted(pops.flusurv_members) == ["01", "02"]


def test_empty_file_gives_empty_map(tmp_path, pops):
    p = tmp_path / "e.csv"
    p.write_text("date,region_id,value\n")
    for schema in ("daily_hosp", "weekly_ili", "flusurv"):
        assert ingest(p, schema, pops) == {}


def test_daily_hosp_loads_with_pct(tmp_path, pops):
    p = tmp_path / "d.csv"
    p.write_text("date,region_id,value,reporting_pct\n2022-10-02,01,3,80\n2022-10-03,01,4,80\n")
    s = ingest(p, "daily_hosp", pops)["01"]
    assert s.incident_hosp.tolist() == [3.0, 4.0]
    assert s.reporting_pct == {dt.date(2022, 10, 2): 80.0}


def test_weekly_ili_expands_uniformly(pops):
    out = ingest(FIX / "weekly_ili.csv", "weekly_ili", pops)
    a = out["01"].incident_hosp
    np.testing.assert_array_equal(a[:7], [10.0] * 7)   # weekly 70 -> seven 10s
    np.testing.assert_array_equal(a[7:], [2.0] * 7)    # Wednesday date maps to its week
    assert out["03"].incident_hosp.sum() == 7.0


def test_flusurv_matches_hand_disaggregation(pops):
    out = ingest(FIX / "flusurv.csv", "flusurv", pops)
    # Week totals 30 and 60 from members holding 300 of 1000 people:
    # national 100 and 200, then population shares 0.2 / 0.1 / 0.1.
    hand = {"01": (20.0, 40.0), "02": (10.0, 20.0), "03": (10.0, 20.0)}
    assert sorted(out) == sorted(hand)
    for region, (w1, w2) in hand.items():
        s = out[region]
        assert len(s) == 14 and s.start == dt.date(2022, 10, 2)
        assert s.incident_hosp[:7].sum() == pytest.approx(w1)
        assert s.incident_hosp[7:].sum() == pytest.approx(w2)


@pytest.mark.parametrize("path", MALFORMED, ids=[p.stem for p in MALFORMED])
def test_malformed_corpus_rejected_with_line_number(path, pops):
    with pytest.raises(InvalidDataError, match=rf"{path.name}:3:"):
        ingest(path, "daily_hosp", pops)


def test_unknown_region_lists_valid_codes(pops):
    with pytest.raises(InvalidDataError, match="valid codes: 01, 02, 03"):
        ingest(FIX / "malformed" / "unknown_region.csv", "daily_hosp", pops)


def test_header_and_gap_errors(tmp_path, pops):
    p = tmp_path / "h.csv"
    p.write_text("day,region_id,value\n2022-10-02,01,3\n")
    with pytest.raises(InvalidDataError, match="date"):
        ingest(p, "daily_hosp", pops)
    p.write_text("date,region_id,value\n2022-10-02,01,3\n2022-10-04,01,3\n")
    with pytest.raises(InvalidDataError, match="2022-10-03"):
        ingest(p, "daily_hosp", pops)
    with pytest.raises(InvalidConfigError):
        ingest(p, "nope", pops)


def test_column_map(tmp_path, pops):
    p = tmp_path / "m.csv"
    p.write_text("collection_week,state,previous_day_admission_influenza_confirmed\n"
                 "2022-10-02,01,5\n")
    cmap = {"date": "collection_week", "region_id": "state",
            "value": "previous_day_admission_influenza_confirmed"}
    assert ingest(p, "daily_hosp", pops, column_map=cmap)["01"].incident_hosp.tolist() == [5.0]


def test_bundled_toy_data_ingests(toy_history):
    assert sorted(toy_history) == ["01", "06", "36"]
    assert all(len(s) == 665 for s in toy_history.values())


def test_series_round_trip(tmp_path, pops):
    s = {"01": RegionSeries("01", 200, FD, np.array([0.1, 1 / 3, 2.5e-7]))}
    back = ingest(write_series(s, tmp_path / "s.csv"), "daily_hosp", pops)
    assert back["01"].incident_hosp.tobytes() == s["01"].incident_hosp.tobytes()


# ---- submissions -------------------------------------------------------------

def test_target_conventions():
    assert target_name(3) == "3 wk ahead inc flu hosp"
    assert target_end_date(FD, 1) == dt.date(2022, 10, 15)
    assert target_end_date(FD, 4).weekday() == 5


def test_write_counts_and_round_trip(tmp_path):
    fcs = [forecast(h=h, center=5.0 * h) for h in (1, 2, 3, 4)]
    path = write_submission(fcs, FD, tmp_path / "s.csv")
    lines = path.read_text().splitlines()
    assert len(lines) == 1 + 96
    assert validate_submission(path).ok
    assert read_submission(path) == fcs


def test_write_is_sorted_and_nonnegative(tmp_path):
    fcs = [forecast("03", 2), forecast("01", 4), forecast("01", 1)]
    path = write_submission(fcs, FD, tmp_path / "s.csv")
    import pandas as pd
    df = pd.read_csv(path, dtype={"location": str})
    assert (df.value >= 0).all()
    keys = list(zip(df.location, df.target))
    assert keys == sorted(keys)


def test_write_refuses_bad_forecasts(tmp_path):
    crossed = QuantileForecast("01", FD, 1, 5.0, tuple((lv, 10 - lv) for lv in QUANTILE_LEVELS))
    with pytest.raises(SubmissionError) as exc:
        write_submission([crossed, forecast(fd=FD + dt.timedelta(days=7))], FD, tmp_path / "s.csv")
    assert len(exc.value.problems) >= 2
    assert not (tmp_path / "s.csv").exists()


def test_validate_detects_crossing(tmp_path):
    path = write_submission([forecast()], FD, tmp_path / "s.csv")
    lines = path.read_text().splitlines()
    i = next(i for i, l in enumerate(lines) if ",quantile,0.5," in l)
    lines[i] = lines[i].rsplit(",", 1)[0] + ",1000.0"
    path.write_text("\n".join(lines) + "\n")
    report = validate_submission(path)
    assert not report.ok
    assert "(01, 1 wk ahead inc flu hosp): quantile values cross" in str(report)


def test_validate_detects_missing_level(tmp_path):
    path = write_submission([forecast()], FD, tmp_path / "s.csv")
    lines = [l for l in path.read_text().splitlines() if ",quantile,0.975," not in l]
    path.write_text("\n".join(lines) + "\n")
    assert "missing quantile level 0.975" in str(validate_submission(path))


def test_validate_detects_date_problems(tmp_path):
    path = write_submission([forecast()], FD, tmp_path / "s.csv")
    text = path.read_text().replace("2022-10-15", "2022-10-16")
    path.write_text(text)
    assert "should be 2022-10-15" in str(validate_submission(path))


# ---- panel cache -------------------------------------------------------------

def test_panel_store_round_trip_and_append(tmp_path):
    panel = generate_predictor_grid(make_series(), [0.9, 0.98], [0, 7], [1 / 50])
    store = PanelStore(tmp_path)
    key = (panel.region_id, panel.as_of)
    store[key] = panel
    assert store.flush() == 1
    size = store.path.stat().st_size
    again = PanelStore(tmp_path)
    assert again[key].predictors.tobytes() == panel.predictors.tobytes()
    assert again[key].grid_labels == panel.grid_labels
    assert again.flush() == 0 and store.path.stat().st_size == size
    with pytest.raises(TypeError):
        del again[key]
