"""Token-based cost accounting per model and pipeline stage.

Dollar amounts are kept at full precision internally; the two-decimal
figures seen in reports are display rounding only.  The reference cost
table shipped with the package is used as a regression fixture for the
additivity and per-minute/per-hour consistency checks.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Union

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

STAGE_LAG = "lag"
STAGE_ENRICHMENT = "enrichment"
STAGE_FULL = "full"

# |per_hour - 60*per_min| tolerance: the per-minute column is rounded to
# two decimals, so a half-cent-per-minute error scales to 0.30 per hour.
HOUR_MINUTE_TOLERANCE = 0.30
_EPS = 1e-9


class CostError(ValueError):
    """Raised for unknown models or ill-formed price/usage inputs."""


@dataclass(frozen=True)
class TokenUsage:
    input_tokens: int = 0
    output_tokens: int = 0

    def __post_init__(self) -> None:
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("token counts must be non-negative")

    def __add__(self, other: "TokenUsage") -> "TokenUsage":
        return TokenUsage(
            self.input_tokens + other.input_tokens,
            self.output_tokens + other.output_tokens,
        )

    def scaled(self, factor: int) -> "TokenUsage":
        return TokenUsage(self.input_tokens * factor, self.output_tokens * factor)


@dataclass(frozen=True)
class ModelPrice:
    """Dollars per one million tokens, input and output sides."""

    input_price: float
    output_price: float

    def __post_init__(self) -> None:
        if self.input_price < 0 or self.output_price < 0:
            raise ValueError("prices must be non-negative")


@dataclass(frozen=True)
class PriceTable:
    prices: Mapping[str, ModelPrice] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "prices", dict(self.prices))

    def price_for(self, model_id: str) -> ModelPrice:
        try:
            return self.prices[model_id]
        except KeyError:
            raise CostError(f"no prices known for model {model_id!r}") from None

    def model_ids(self) -> list[str]:
        return sorted(self.prices)


@dataclass(frozen=True)
class StageCost:
    dollars_total: float
    dollars_per_min: float
    dollars_per_hour: float


@dataclass(frozen=True)
class CostReport:
    model_id: str
    video_minutes: float
    stages: Mapping[str, StageCost]

    def __post_init__(self) -> None:
        object.__setattr__(self, "stages", dict(self.stages))

    def stage(self, name: str) -> StageCost:
        return self.stages[name]


def dollars(usage: TokenUsage, price: ModelPrice) -> float:
    return (
        usage.input_tokens * price.input_price + usage.output_tokens * price.output_price
    ) / 1e6


def compute_cost(
    usage_by_stage: Mapping[str, TokenUsage],
    prices: PriceTable,
    model_id: str,
    video_minutes: float,
) -> CostReport:
    """Per-stage dollar totals with per-minute/per-hour normalization.

    The `full` stage is always the sum of the others, so additivity holds
    exactly on the unrounded values.
    """
    if video_minutes <= 0:
        raise CostError("video_minutes must be positive")
    price = prices.price_for(model_id)

    stages: dict[str, StageCost] = {}
    total_usage = TokenUsage()
    for name in (STAGE_LAG, STAGE_ENRICHMENT):
        usage = usage_by_stage.get(name, TokenUsage())
        total_usage = total_usage + usage
        stage_dollars = dollars(usage, price)
        stages[name] = StageCost(
            dollars_total=stage_dollars,
            dollars_per_min=stage_dollars / video_minutes,
            dollars_per_hour=stage_dollars / video_minutes * 60,
        )
    full_dollars = stages[STAGE_LAG].dollars_total + stages[STAGE_ENRICHMENT].dollars_total
    stages[STAGE_FULL] = StageCost(
        dollars_total=full_dollars,
        dollars_per_min=stages[STAGE_LAG].dollars_per_min + stages[STAGE_ENRICHMENT].dollars_per_min,
        dollars_per_hour=stages[STAGE_LAG].dollars_per_hour
        + stages[STAGE_ENRICHMENT].dollars_per_hour,
    )
    return CostReport(model_id=model_id, video_minutes=video_minutes, stages=stages)


@dataclass(frozen=True)
class ReferenceRow:
    """One transcribed row of the published cost/recall table."""

    model_id: str
    lag_per_min: float
    lag_per_hour: float
    enrichment_per_min: float
    enrichment_per_hour: float
    full_per_min: float
    full_per_hour: float
    recall_extraction: Optional[float] = None
    recall_full: Optional[float] = None


def verify_table(
    rows: Iterable[ReferenceRow], report: Optional[CostReport] = None
) -> list[str]:
    """Check additivity and the x60 minute/hour relation on every row.

    Additivity must hold exactly (up to float epsilon); the hour column may
    deviate from 60x the rounded minute column by at most 0.30.  Returns
    human-readable discrepancy strings, empty when everything passes.  When
    a computed report is supplied, its stages are checked the same way.
    """
    problems: list[str] = []
    for row in rows:
        if abs(row.lag_per_hour + row.enrichment_per_hour - row.full_per_hour) > _EPS:
            problems.append(
                f"{row.model_id}: $/h additivity fails "
                f"({row.lag_per_hour} + {row.enrichment_per_hour} != {row.full_per_hour})"
            )
        if abs(row.lag_per_min + row.enrichment_per_min - row.full_per_min) > _EPS:
            problems.append(
                f"{row.model_id}: $/min additivity fails "
                f"({row.lag_per_min} + {row.enrichment_per_min} != {row.full_per_min})"
            )
        for stage, per_min, per_hour in (
            (STAGE_LAG, row.lag_per_min, row.lag_per_hour),
            (STAGE_ENRICHMENT, row.enrichment_per_min, row.enrichment_per_hour),
            (STAGE_FULL, row.full_per_min, row.full_per_hour),
        ):
            if abs(per_hour - per_min * 60) > HOUR_MINUTE_TOLERANCE + _EPS:
                problems.append(
                    f"{row.model_id}/{stage}: $/h {per_hour} vs 60 x $/min "
                    f"{per_min * 60:.2f} differ by more than {HOUR_MINUTE_TOLERANCE}"
                )
    if report is not None:
        lag = report.stage(STAGE_LAG)
        enr = report.stage(STAGE_ENRICHMENT)
        full = report.stage(STAGE_FULL)
        if abs(lag.dollars_per_hour + enr.dollars_per_hour - full.dollars_per_hour) > _EPS:
            problems.append(f"{report.model_id}: computed report $/h additivity fails")
        for name, stage in report.stages.items():
            if abs(stage.dollars_per_hour - stage.dollars_per_min * 60) > _EPS:
                problems.append(
                    f"{report.model_id}/{name}: computed $/h is not exactly 60 x $/min"
                )
    return problems


def load_price_table(path: Union[str, Path]) -> PriceTable:
    """Read a TOML price file: one `[models."<id>"]` table per model."""
    with open(path, "rb") as handle:
        data = tomllib.load(handle)
    models = data.get("models")
    if not isinstance(models, dict) or not models:
        raise CostError(f"{path}: no [models] tables found")
    prices = {}
    for model_id, entry in models.items():
        try:
            prices[model_id] = ModelPrice(
                input_price=float(entry["input"]), output_price=float(entry["output"])
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CostError(f"{path}: bad price entry for {model_id!r}: {exc}") from exc
    return PriceTable(prices)


def load_reference_rows(path: Union[str, Path]) -> list[ReferenceRow]:
    """Read the shipped JSON transcription of the published cost table."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    rows = []
    for entry in data["rows"]:
        rows.append(
            ReferenceRow(
                model_id=entry["model_id"],
                lag_per_min=float(entry["lag"]["per_min"]),
                lag_per_hour=float(entry["lag"]["per_hour"]),
                enrichment_per_min=float(entry["enrichment"]["per_min"]),
                enrichment_per_hour=float(entry["enrichment"]["per_hour"]),
                full_per_min=float(entry["full"]["per_min"]),
                full_per_hour=float(entry["full"]["per_hour"]),
                recall_extraction=entry.get("recall_extraction"),
                recall_full=entry.get("recall_full"),
            )
        )
    return rows
