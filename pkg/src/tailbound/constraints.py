"""Calibrated uncertainty sets and their JSON form."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

from .geometry import AxisRectangle, RareEventBoundary

INF = math.inf


def encode_float(v: float):
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return float(v)


def decode_float(v) -> float:
    if isinstance(v, str):
        s = v.strip().lower()
        if s in ("inf", "+inf", "infinity"):
            return INF
        if s in ("-inf", "-infinity"):
            return -INF
        return float(s)
    if v is None:
        return INF
    return float(v)


@dataclass(frozen=True)
class MomentRow:
    """``a <= P(rect) <= b``; conditional rows are relative to the tail mass."""

    rect: AxisRectangle
    a: float
    b: float
    conditional: bool = True

    def __post_init__(self):
        if not (0.0 <= self.a <= self.b <= 1.0):
            raise ValueError(f"row bounds must satisfy 0 <= a <= b <= 1, got ({self.a}, {self.b})")

    def relaxed(self, rel: float) -> "MomentRow":
        """Widen to ``[(1 - rel) a, (1 + rel) b]`` (clipped to [0, 1])."""
        return replace(self, a=max(0.0, self.a * (1 - rel)), b=min(1.0, self.b * (1 + rel)))


@dataclass(frozen=True)
class ConstraintSet:
    x0: float
    y0: float
    lF: float
    uF: float
    uX: float = INF
    uY: float = INF
    rows: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))
        if not (0.0 <= self.lF <= self.uF <= 1.0):
            raise ValueError(f"need 0 <= lF <= uF <= 1, got ({self.lF}, {self.uF})")
        if self.uX < 0 or self.uY < 0:
            raise ValueError("density caps must be nonnegative")
        for r in self.rows:
            if r.rect.x1 < self.x0 or r.rect.y1 < self.y0:
                raise ValueError("row rectangles must lie above the mode")

    @property
    def n(self) -> int:
        return len(self.rows)

    def without_rows(self) -> "ConstraintSet":
        return replace(self, rows=())

    def relaxed(self, rel: float) -> "ConstraintSet":
        return replace(self, rows=tuple(r.relaxed(rel) for r in self.rows))

    def to_dict(self) -> dict:
        return {
            "x0": self.x0, "y0": self.y0, "lF": self.lF, "uF": self.uF,
            "uX": encode_float(self.uX), "uY": encode_float(self.uY),
            "rows": [{"x1": encode_float(r.rect.x1), "x2": encode_float(r.rect.x2),
                      "y1": encode_float(r.rect.y1), "y2": encode_float(r.rect.y2),
                      "a": r.a, "b": r.b, "conditional": bool(r.conditional)} for r in self.rows],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConstraintSet":
        rows = tuple(
            MomentRow(AxisRectangle(decode_float(r["x1"]), decode_float(r["x2"]),
                                    decode_float(r["y1"]), decode_float(r["y2"])),
                      float(r["a"]), float(r["b"]), bool(r.get("conditional", True)))
            for r in d.get("rows", []))
        return cls(float(d["x0"]), float(d["y0"]), float(d["lF"]), float(d["uF"]),
                   decode_float(d.get("uX", "inf")), decode_float(d.get("uY", "inf")), rows)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ConstraintSet":
        return cls.from_dict(json.loads(text))


def boundary_to_list(boundary: RareEventBoundary) -> list:
    return [{"x_b": b, "slope": a, "intercept": encode_float(c)} for b, a, c in boundary.pieces]


def boundary_from_list(items: Sequence[dict]) -> RareEventBoundary:
    return RareEventBoundary(tuple((decode_float(p["x_b"]), decode_float(p["slope"]),
                                    decode_float(p["intercept"])) for p in items))
