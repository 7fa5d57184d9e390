"""Complexity-driven choice of quantization level and guard-band parameter."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from .quantizer import ALPHA_MAX, LEVELS


@dataclass(frozen=True)
class Segment:
    upper_bound: float  # inclusive; math.inf for the last segment
    slope: float
    intercept: float


@dataclass(frozen=True)
class PiecewiseLinearModel:
    segments: tuple[Segment, ...]
    alpha_max: float = ALPHA_MAX

    def __post_init__(self):
        segs = tuple(self.segments)
        if not segs:
            raise ValueError("model needs at least one segment")
        bounds = [s.upper_bound for s in segs]
        if any(b2 <= b1 for b1, b2 in zip(bounds, bounds[1:])):
            raise ValueError("segment upper bounds must be strictly increasing")
        if not math.isinf(bounds[-1]):
            segs = segs + (Segment(math.inf, segs[-1].slope, segs[-1].intercept),)
        object.__setattr__(self, "segments", segs)

    @classmethod
    def line(cls, slope: float, intercept: float, alpha_max: float = ALPHA_MAX):
        return cls((Segment(math.inf, slope, intercept),), alpha_max)

    def raw(self, c: float) -> float:
        for seg in self.segments:
            if c <= seg.upper_bound:
                return seg.slope * c + seg.intercept
        raise AssertionError("unreachable: last segment is unbounded")

    def __call__(self, c: float) -> float:
        return min(max(self.raw(c), 0.0), self.alpha_max)


@dataclass(frozen=True)
class AdaptiveModel:
    level_thresholds: tuple[float, float]
    alpha_models: dict

    def __post_init__(self):
        lo, hi = self.level_thresholds
        if not lo < hi:
            raise ValueError("level thresholds must satisfy t_low < t_high")
        missing = set(LEVELS) - set(self.alpha_models)
        if missing:
            raise ValueError(f"missing alpha models for levels {sorted(missing)}")
        object.__setattr__(self, "level_thresholds", (float(lo), float(hi)))

    def level(self, c: float) -> int:
        lo, hi = self.level_thresholds
        if c < lo:
            return 2
        if c < hi:
            return 4
        return 8

    def to_dict(self) -> dict:
        levels = {}
        for m in LEVELS:
            model = self.alpha_models[m]
            levels[str(m)] = {
                "alpha_max": model.alpha_max,
                "segments": [
                    {
                        "upper_bound": None if math.isinf(s.upper_bound) else s.upper_bound,
                        "slope": s.slope,
                        "intercept": s.intercept,
                    }
                    for s in model.segments
                ],
            }
        return {"level_thresholds": list(self.level_thresholds), "levels": levels}

    @classmethod
    def from_dict(cls, data: dict) -> "AdaptiveModel":
        try:
            models = {}
            for m_str, spec in data["levels"].items():
                segs = tuple(
                    Segment(
                        math.inf if s["upper_bound"] is None else float(s["upper_bound"]),
                        float(s["slope"]),
                        float(s["intercept"]),
                    )
                    for s in spec["segments"]
                )
                models[int(m_str)] = PiecewiseLinearModel(segs, float(spec.get("alpha_max", ALPHA_MAX)))
            return cls(tuple(data["level_thresholds"]), models)
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed model file: {exc}") from None

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def loads(cls, text: str) -> "AdaptiveModel":
        return cls.from_dict(json.loads(text))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "AdaptiveModel":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def reference_model() -> AdaptiveModel:
    """Reference selector: regression constants fitted on LoRa field measurements."""
    return AdaptiveModel(
        (0.3, 0.675),
        {
            2: PiecewiseLinearModel((Segment(0.275, 0.0, 1.0), Segment(math.inf, -5.83, 2.57))),
            4: PiecewiseLinearModel((
                Segment(0.33, 1.085, -0.082),
                Segment(0.46, -3.47, 1.6),
                Segment(math.inf, 0.0, 0.0),
            )),
            8: PiecewiseLinearModel((Segment(math.inf, 0.0, 0.0),)),
        },
    )


def select_params(c: float, model: AdaptiveModel) -> tuple[int, float]:
    if c < 0:
        raise ValueError("complexity must be non-negative")
    m = model.level(c)
    return m, model.alpha_models[m](c)


def resolve_model(name_or_path: str) -> AdaptiveModel:
    if name_or_path in ("paper-default", "default"):
        return reference_model()
    return AdaptiveModel.load(name_or_path)
