import math
from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, field_validator

from vla_world_lab.schemas.scene import ActionLabel, ShortPrediction, Trajectory
from vla_world_lab.schemas.world import TokenSequence

# Canonical segment order of the tagged output.
SEGMENTS = ("Perception", "Prediction", "Visual", "Think", "Action", "Answer")


class StructuredSample(BaseModel):
    """One six-segment tagged model output."""

    model_config = ConfigDict(frozen=True)

    perception: str = ""
    prediction: ShortPrediction
    visual: TokenSequence
    think: str = ""
    action: ActionLabel
    answer: Trajectory

    @field_validator("perception", "think")
    @classmethod
    def _no_markup(cls, v: str) -> str:
        if "<" in v or ">" in v:
            raise ValueError("free text may not contain '<' or '>'")
        return v

    @field_validator("prediction")
    @classmethod
    def _finite_waypoint(cls, v: ShortPrediction) -> ShortPrediction:
        if not (math.isfinite(v.waypoint.x) and math.isfinite(v.waypoint.y)):
            raise ValueError("prediction waypoint must be finite")
        return v


class ParseErrorKind(str, Enum):
    MISSING_TAG = "missing_tag"
    DUPLICATE_TAG = "duplicate_tag"
    WRONG_ORDER = "wrong_order"
    MALFORMED_PAYLOAD = "malformed_payload"
    UNKNOWN_TAG = "unknown_tag"
    UNBALANCED_TAG = "unbalanced_tag"
    UNEXPECTED_TEXT = "unexpected_text"
    INVALID_ENCODING = "invalid_encoding"


class ParseError(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: ParseErrorKind
    message: str
    segment: Optional[str] = None
    offset: int = 0

    def __str__(self) -> str:
        return f"{self.message} (byte {self.offset})"


class ParseOutcome(BaseModel):
    model_config = ConfigDict(frozen=True)

    sample: Optional[StructuredSample] = None
    errors: List[ParseError] = []

    @property
    def ok(self) -> bool:
        return not self.errors


class FormatReport(BaseModel):
    ok: bool
    errors: List[str] = []
