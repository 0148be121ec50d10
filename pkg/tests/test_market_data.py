import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maps.market_data import (
    MarketDataError,
    MarketFrame,
    SplitSpec,
    daily_return_pct,
    load_prices,
    make_state,
    split,
    state_matrix,
    synth_market,
)

from conftest import frame_from


def write_csv(tmp_path, rows, header="date,ticker,close"):
    p = tmp_path / "prices.csv"
    p.write_text("\n".join([header, *rows]) + "\n")
    return p


class TestLoadPrices:
    def test_complete_panel(self, tmp_path):
        rows = [
            "2006-01-04,MSFT,26.8",
            "2006-01-03,AAPL,10.7",
            "2006-01-03,MSFT,26.8",
            "2006-01-05,AAPL,10.9",
            "2006-01-04,AAPL,10.8",
            "2006-01-05,MSFT,26.9",
        ]
        frame = load_prices(write_csv(tmp_path, rows))
        assert frame.n_companies == 2 and frame.n_days == 3
        assert frame.tickers == ("AAPL", "MSFT")
        np.testing.assert_array_equal(frame.closes[0], [10.7, 10.8, 10.9])
        assert str(frame.dates[0]) == "2006-01-03"

    def test_negative_price_rejected(self, tmp_path):
        with pytest.raises(MarketDataError, match=":3:"):
            load_prices(write_csv(tmp_path, ["2006-01-02,AAPL,5.0", "2006-01-03,AAPL,-5.0"]))

    def test_malformed_row_reports_line(self, tmp_path):
        with pytest.raises(MarketDataError, match=":3:"):
            load_prices(write_csv(tmp_path, ["2006-01-02,AAPL,5.0", "2006-01-03,AAPL"]))
        with pytest.raises(MarketDataError, match=":2:"):
            load_prices(write_csv(tmp_path, ["not-a-date,AAPL,5.0"]))

    def test_forward_fill_interior_gap(self, tmp_path):
        rows = [
            "2006-01-02,A,10", "2006-01-03,A,11", "2006-01-04,A,12",
            "2006-01-02,B,20", "2006-01-04,B,22",
        ]
        frame = load_prices(write_csv(tmp_path, rows), fill_policy="forward")
        np.testing.assert_array_equal(frame.closes[1], [20, 20, 22])

    def test_long_gap_and_late_listing_dropped(self, tmp_path):
        days = [f"2006-01-{d:02d}" for d in range(2, 12)]
        rows = [f"{d},A,10" for d in days]
        rows += [f"{d},B,10" for d in days[:2] + days[-1:]]  # 7-day gap
        rows += [f"{d},C,10" for d in days[1:]]  # no first close
        frame = load_prices(write_csv(tmp_path, rows), max_gap=5)
        assert frame.tickers == ("A",)
        assert set(frame.dropped) == {"B", "C"}

    def test_drop_policy(self, tmp_path):
        rows = ["2006-01-02,A,10", "2006-01-03,A,11", "2006-01-02,B,20"]
        frame = load_prices(write_csv(tmp_path, rows), fill_policy="drop")
        assert frame.tickers == ("A",)

    def test_empty_and_missing(self, tmp_path):
        with pytest.raises(MarketDataError):
            load_prices(write_csv(tmp_path, []))
        with pytest.raises(MarketDataError):
            load_prices(tmp_path / "nope.csv")
        with pytest.raises(MarketDataError, match="header"):
            load_prices(write_csv(tmp_path, ["2006-01-02,A,1"], header="a,b,c"))

    def test_roundtrip_through_csv(self, tmp_path):
        frame = synth_market(3, 12, [(0.001, 0.02, 12)], seed=4)
        frame.to_csv(tmp_path / "p.csv")
        assert load_prices(tmp_path / "p.csv") == frame


class TestFrameInvariants:
    def test_rejects_bad_panels(self):
        d = np.array(["2020-01-01", "2020-01-02"], dtype="datetime64[D]")
        with pytest.raises(MarketDataError):
            MarketFrame(("A",), d, [[1.0, 0.0]])
        with pytest.raises(MarketDataError):
            MarketFrame(("A",), d[::-1], [[1.0, 2.0]])
        with pytest.raises(MarketDataError):
            MarketFrame(("A",), d, [[1.0, np.nan]])

    def test_immutable(self):
        frame = frame_from([[1.0, 2.0]])
        with pytest.raises(ValueError):
            frame.closes[0, 0] = 5.0


class TestMakeState:
    @pytest.mark.parametrize(
        "prices,f,t,expected",
        [
            ([100, 110, 121], 3, 2, [0.0, 0.10, 0.21]),
            ([50, 50, 50, 50], 4, 3, [0.0, 0.0, 0.0, 0.0]),
            ([200, 100], 2, 1, [0.0, -0.5]),
        ],
    )
    def test_examples(self, prices, f, t, expected):
        s = make_state(frame_from([prices]), 0, t, f)
        np.testing.assert_allclose(s.values, expected, atol=1e-12)
        assert s.values[0] == 0.0 and len(s.values) == f

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            make_state(frame_from([[1, 2, 3]]), 0, 1, 3)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0.5, 500.0), min_size=5, max_size=12), st.floats(0.01, 100.0))
    def test_scale_invariant(self, prices, k):
        a = make_state(frame_from([prices]), 0, len(prices) - 1, 5).values
        b = make_state(frame_from([np.array(prices) * k]), 0, len(prices) - 1, 5).values
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_state_matrix_matches_rows(self):
        frame = synth_market(4, 40, [(0.0, 0.02, 40)], seed=1)
        M = state_matrix(frame, 35, 10)
        for c in range(4):
            np.testing.assert_array_equal(M[c], make_state(frame, c, 35, 10).values)


class TestDailyReturn:
    @pytest.mark.parametrize("p0,p1,expected", [(100, 102, 2.0), (100, 100, 0.0), (80, 60, -25.0)])
    def test_examples(self, p0, p1, expected):
        assert daily_return_pct(frame_from([[p0, p1]]), 0, 0) == pytest.approx(expected, abs=1e-12)

    def test_last_day_has_no_return(self):
        with pytest.raises(IndexError):
            daily_return_pct(frame_from([[1, 2]]), 0, 1)

    @given(st.floats(1e-3, 1e6))
    def test_flat_is_zero(self, p):
        assert daily_return_pct(frame_from([[p, p]]), 0, 0) == 0.0


class TestSplit:
    def test_partition(self):
        frame = frame_from([np.arange(1, 11)])
        d = [str(x) for x in frame.dates]
        spec = SplitSpec((d[0], d[5]), (d[6], d[7]), (d[8], d[9]))
        parts = split(frame, spec, f=1)
        assert [p.n_days for p in parts] == [6, 2, 2]
        joined = np.concatenate([p.dates for p in parts])
        np.testing.assert_array_equal(joined, frame.dates)

    def test_overlap_rejected(self):
        frame = frame_from([np.arange(1, 11)])
        d = [str(x) for x in frame.dates]
        with pytest.raises(MarketDataError):
            split(frame, SplitSpec((d[0], d[5]), (d[5], d[7]), (d[8], d[9])), f=1)

    def test_short_range_rejected(self):
        frame = frame_from([np.arange(1, 11)])
        d = [str(x) for x in frame.dates]
        with pytest.raises(MarketDataError, match="needs at least"):
            split(frame, SplitSpec((d[0], d[5]), (d[6], d[7]), (d[8], d[9])), f=2)

    def test_from_fractions(self):
        frame = synth_market(2, 100, [(0, 0.01, 100)], seed=0)
        parts = split(frame, SplitSpec.from_fractions(frame, (0.6, 0.2, 0.2)), f=5)
        assert [p.n_days for p in parts] == [60, 20, 20]


class TestSynthMarket:
    def test_zero_noise_ramp(self):
        frame = synth_market(1, 5, [(0.01, 0.0, 5)], seed=3)
        np.testing.assert_allclose(frame.closes[0], 100 * np.exp(0.01 * np.arange(5)), rtol=1e-14)

    def test_deterministic(self):
        a = synth_market(5, 50, [(0.0, 0.02, 20), (0.001, 0.01, 30)], seed=9)
        b = synth_market(5, 50, [(0.0, 0.02, 20), (0.001, 0.01, 30)], seed=9)
        assert np.array_equal(a.closes, b.closes) and a == b
        c = synth_market(5, 50, [(0.0, 0.02, 20), (0.001, 0.01, 30)], seed=10)
        assert not np.array_equal(a.closes, c.closes)

    def test_volatility_statistics(self):
        frame = synth_market(1, 1000, [(0.0, 0.02, 1000)], seed=5)
        sd = np.std(np.diff(np.log(frame.closes[0])), ddof=1)
        assert abs(sd - 0.02) / 0.02 < 0.10

    def test_regime_lengths_checked(self):
        with pytest.raises(ValueError):
            synth_market(2, 10, [(0.0, 0.01, 4)], seed=0)
        with pytest.raises(ValueError):
            synth_market(2, 10, [(0.0, -0.01, 10)], seed=0)
