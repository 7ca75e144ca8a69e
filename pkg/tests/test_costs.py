"""Cost arithmetic, stage additivity, and the reference-table regression
checks."""

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import RESOURCES
from tacitkg.costs import (
    HOUR_MINUTE_TOLERANCE,
    STAGE_ENRICHMENT,
    STAGE_FULL,
    STAGE_LAG,
    CostError,
    ModelPrice,
    PriceTable,
    ReferenceRow,
    TokenUsage,
    compute_cost,
    dollars,
    load_price_table,
    load_reference_rows,
    verify_table,
)

PRICES = load_price_table(RESOURCES / "prices.toml")


class TestTokenUsage:
    def test_addition(self):
        assert TokenUsage(10, 5) + TokenUsage(1, 2) == TokenUsage(11, 7)

    def test_scaling(self):
        assert TokenUsage(10, 5).scaled(3) == TokenUsage(30, 15)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            TokenUsage(-1, 0)

    def test_negative_price_rejected(self):
        with pytest.raises(ValueError):
            ModelPrice(-0.5, 1.0)


class TestPriceTable:
    def test_packaged_models(self):
        assert PRICES.price_for("Gemini 3.1 Pro") == ModelPrice(2.00, 12.00)
        assert PRICES.price_for("Gemma 4 31b-it") == ModelPrice(0.0, 0.0)
        assert PRICES.model_ids() == sorted(PRICES.model_ids())
        assert len(PRICES.model_ids()) == 5

    def test_unknown_model(self):
        with pytest.raises(CostError, match="no prices known"):
            PRICES.price_for("mystery-model")

    def test_missing_models_section(self, tmp_path):
        path = tmp_path / "prices.toml"
        path.write_text("[other]\nx = 1\n", encoding="utf-8")
        with pytest.raises(CostError, match="no \\[models\\]"):
            load_price_table(path)

    def test_bad_entry(self, tmp_path):
        path = tmp_path / "prices.toml"
        path.write_text('[models."m"]\ninput = 1.0\n', encoding="utf-8")
        with pytest.raises(CostError, match="bad price entry"):
            load_price_table(path)


class TestComputeCost:
    def test_stage_arithmetic(self):
        report = compute_cost(
            {
                STAGE_LAG: TokenUsage(100_000, 10_000),
                STAGE_ENRICHMENT: TokenUsage(50_000, 20_000),
            },
            PRICES,
            "Gemini 3.1 Pro",
            video_minutes=8.0,
        )
        # lag: 0.1*2 + 0.01*12 = 0.32; enrichment: 0.05*2 + 0.02*12 = 0.34
        lag = report.stage(STAGE_LAG)
        assert lag.dollars_total == pytest.approx(0.32)
        assert lag.dollars_per_min == pytest.approx(0.04)
        assert lag.dollars_per_hour == pytest.approx(2.40)
        assert report.stage(STAGE_ENRICHMENT).dollars_total == pytest.approx(0.34)
        assert report.stage(STAGE_FULL).dollars_total == pytest.approx(0.66)

    def test_full_is_exact_sum(self):
        report = compute_cost(
            {STAGE_LAG: TokenUsage(123_457, 7_919), STAGE_ENRICHMENT: TokenUsage(86_243, 31_337)},
            PRICES,
            "Claude Opus 4.6",
            video_minutes=7.3,
        )
        full = report.stage(STAGE_FULL)
        assert full.dollars_total == report.stage(STAGE_LAG).dollars_total + report.stage(
            STAGE_ENRICHMENT
        ).dollars_total
        assert full.dollars_per_hour == report.stage(STAGE_LAG).dollars_per_hour + report.stage(
            STAGE_ENRICHMENT
        ).dollars_per_hour
        assert verify_table([], report=report) == []

    def test_missing_stage_counts_as_zero(self):
        report = compute_cost(
            {STAGE_LAG: TokenUsage(1000, 1000)}, PRICES, "GPT-5.2 Chat", video_minutes=2.0
        )
        assert report.stage(STAGE_ENRICHMENT).dollars_total == 0.0
        assert report.stage(STAGE_FULL).dollars_total == report.stage(STAGE_LAG).dollars_total

    def test_nonpositive_minutes_rejected(self):
        with pytest.raises(CostError, match="must be positive"):
            compute_cost({}, PRICES, "Gemini 3.1 Pro", video_minutes=0.0)

    def test_unknown_model_rejected(self):
        with pytest.raises(CostError):
            compute_cost({}, PRICES, "mystery-model", video_minutes=1.0)


usage_strategy = st.builds(
    TokenUsage,
    st.integers(min_value=0, max_value=1_000_000),
    st.integers(min_value=0, max_value=1_000_000),
)
price_strategy = st.builds(
    ModelPrice,
    st.floats(min_value=0, max_value=50, allow_nan=False),
    st.floats(min_value=0, max_value=50, allow_nan=False),
)


@given(usage_strategy, usage_strategy, price_strategy, st.integers(min_value=0, max_value=12))
@settings(max_examples=300, deadline=None)
def test_dollars_is_linear(a, b, price, k):
    assert dollars(a + b, price) == pytest.approx(dollars(a, price) + dollars(b, price))
    assert dollars(a.scaled(k), price) == pytest.approx(k * dollars(a, price))


class TestVerifyTable:
    def test_packaged_reference_passes(self):
        rows = load_reference_rows(RESOURCES / "cost_reference.json")
        assert len(rows) == 5
        assert verify_table(rows) == []

    def test_hour_additivity_violation_detected(self):
        row = ReferenceRow("m", 1.00, 60.00, 1.00, 60.00, 2.00, 121.00)
        problems = verify_table([row])
        assert any("$/h additivity" in p for p in problems)

    def test_minute_additivity_violation_detected(self):
        row = ReferenceRow("m", 1.00, 60.00, 1.00, 60.00, 2.50, 120.00)
        problems = verify_table([row])
        assert any("$/min additivity" in p for p in problems)

    def test_hour_minute_consistency_tolerance(self):
        # 0.30 off is allowed (rounding of the per-minute column)...
        ok = ReferenceRow("m", 1.00, 60.30, 0.00, 0.00, 1.00, 60.30)
        assert verify_table([ok]) == []
        # ...but more is not.
        bad = ReferenceRow("m", 1.00, 60.40, 0.00, 0.00, 1.00, 60.40)
        problems = verify_table([bad])
        assert any("differ by more than" in p for p in problems)
        assert str(HOUR_MINUTE_TOLERANCE) in problems[0]

    def test_each_packaged_row_is_exactly_additive(self):
        for row in load_reference_rows(RESOURCES / "cost_reference.json"):
            assert row.lag_per_hour + row.enrichment_per_hour == pytest.approx(
                row.full_per_hour, abs=1e-9
            )


class TestLoadReferenceRows:
    def test_row_fields(self):
        rows = load_reference_rows(RESOURCES / "cost_reference.json")
        by_model = {r.model_id: r for r in rows}
        flash = by_model["Gemini 2.5 Flash"]
        assert flash.lag_per_hour == pytest.approx(3.30)
        assert flash.enrichment_per_hour == pytest.approx(1.88)
        assert flash.full_per_hour == pytest.approx(5.18)
        assert flash.recall_full == pytest.approx(0.989)

    def test_recall_fields_optional(self, tmp_path):
        path = tmp_path / "ref.json"
        path.write_text(
            json.dumps(
                {
                    "rows": [
                        {
                            "model_id": "m",
                            "lag": {"per_min": 0, "per_hour": 0},
                            "enrichment": {"per_min": 0, "per_hour": 0},
                            "full": {"per_min": 0, "per_hour": 0},
                        }
                    ]
                }
            ),
            encoding="utf-8",
        )
        (row,) = load_reference_rows(path)
        assert row.recall_extraction is None
        assert row.recall_full is None
