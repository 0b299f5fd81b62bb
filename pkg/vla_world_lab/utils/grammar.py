"""Parser, serializer and validator for the six-segment tagged output.

Wire format (whitespace allowed between segments, nothing else)::

    <Perception>free text</Perception>
    <Prediction>x, y | direction</Prediction>
    <Visual>i0 i1 ... iN-1</Visual>
    <Think>free text</Think>
    <Action>lateral, longitudinal</Action>
    <Answer>[(x1, y1), ..., (xH, yH)]</Answer>

Floats are written with six fractional digits; any decimal is accepted back.
"""
import re
from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple, Union

from pydantic import ValidationError

from vla_world_lab.core.config import DT_S, HORIZON
from vla_world_lab.schemas.sample import (
    SEGMENTS,
    FormatReport,
    ParseError,
    ParseErrorKind,
    ParseOutcome,
    StructuredSample,
)
from vla_world_lab.schemas.scene import ActionLabel, Lateral, Longitudinal, ShortPrediction, Trajectory, Vec2
from vla_world_lab.schemas.world import TokenSequence

_TAG = re.compile(r"<(/?)([A-Za-z]+)>")
_NUM = r"[-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?"
_PREDICTION = re.compile(rf"\s*({_NUM})\s*,\s*({_NUM})\s*\|\s*([a-z]+)\s*", re.ASCII)
_ACTION = re.compile(r"\s*([a-z]+)\s*,\s*([a-z]+)\s*", re.ASCII)
_PAIR = rf"\(\s*({_NUM})\s*,\s*({_NUM})\s*\)"
_ANSWER = re.compile(rf"\s*\[\s*(?:{_PAIR}(?:\s*,\s*{_PAIR})*)?\s*\]\s*", re.ASCII)
_PAIR_RE = re.compile(_PAIR, re.ASCII)
_TOKEN = re.compile(r"\d+", re.ASCII)

TextInput = Union[str, bytes, bytearray]


@dataclass
class _Span:
    name: str
    open_at: int
    body_start: int
    body_end: int
    text: str = field(repr=False, default="")

    @property
    def body(self) -> str:
        return self.text[self.body_start:self.body_end]


class _PayloadError(Exception):
    def __init__(self, reason: str, at: int = 0):
        super().__init__(reason)
        self.reason = reason
        self.at = at


def _number(raw: str, at: int) -> float:
    value = float(raw)
    if value in (float("inf"), float("-inf")):
        raise _PayloadError(f"number out of range: {raw}", at)
    return value


def _parse_prediction(body: str) -> ShortPrediction:
    m = _PREDICTION.fullmatch(body)
    if not m:
        raise _PayloadError("expected 'x, y | direction'")
    try:
        direction = Lateral(m.group(3))
    except ValueError:
        raise _PayloadError(f"unknown direction {m.group(3)!r}", m.start(3))
    point = Vec2(x=_number(m.group(1), m.start(1)), y=_number(m.group(2), m.start(2)))
    return ShortPrediction(waypoint=point, direction=direction)


def _parse_visual(body: str) -> TokenSequence:
    tokens = []
    for m in re.finditer(r"\S+", body):
        if not _TOKEN.fullmatch(m.group(0)):
            raise _PayloadError(f"bad token {m.group(0)[:16]!r}", m.start())
        tokens.append(int(m.group(0)))
    return TokenSequence(tokens=tuple(tokens))


def _parse_action(body: str) -> ActionLabel:
    m = _ACTION.fullmatch(body)
    if not m:
        raise _PayloadError("expected 'lateral, longitudinal'")
    try:
        return ActionLabel(lateral=Lateral(m.group(1)), longitudinal=Longitudinal(m.group(2)))
    except ValueError:
        raise _PayloadError(f"unknown action {m.group(1)}, {m.group(2)}")


def _parse_answer(body: str, horizon: int) -> Trajectory:
    if not _ANSWER.fullmatch(body):
        raise _PayloadError("expected '[(x1, y1), ..., (xH, yH)]'")
    points = [
        Vec2(x=_number(m.group(1), m.start(1)), y=_number(m.group(2), m.start(2)))
        for m in _PAIR_RE.finditer(body)
    ]
    if len(points) != horizon:
        raise _PayloadError(f"expected {horizon} waypoints, got {len(points)}")
    return Trajectory(step_s=DT_S, points=points)


def _parse_free_text(body: str) -> str:
    for i, ch in enumerate(body):
        if ch in "<>":
            raise _PayloadError(f"stray {ch!r} in free text", i)
    return body


class _Scanner:
    """Splits text into tagged spans and structural errors."""

    def __init__(self, text: str):
        self.text = text
        self.errors: List[ParseError] = []
        self._byte_cache: Dict[int, int] = {}

    def byte_offset(self, i: int) -> int:
        if i not in self._byte_cache:
            self._byte_cache[i] = len(self.text[:i].encode("utf-8", "surrogatepass"))
        return self._byte_cache[i]

    def error(self, kind: ParseErrorKind, message: str, at: int, segment: str | None = None) -> None:
        self.errors.append(ParseError(kind=kind, message=message, segment=segment, offset=self.byte_offset(at)))

    def _stray_text(self, start: int, end: int) -> None:
        gap = self.text[start:end]
        if gap.strip():
            lead = len(gap) - len(gap.lstrip())
            self.error(ParseErrorKind.UNEXPECTED_TEXT, "unexpected text outside tags", start + lead)

    def spans(self) -> List[_Span]:
        found: List[_Span] = []
        open_tag: Tuple[str, int, int] | None = None
        cursor = 0
        for m in _TAG.finditer(self.text):
            closing, name = m.group(1) == "/", m.group(2)
            if name not in SEGMENTS:
                self.error(ParseErrorKind.UNKNOWN_TAG, f"unknown tag {name}", m.start())
                continue
            if open_tag is None:
                if closing:
                    self.error(ParseErrorKind.UNBALANCED_TAG, f"closing tag {name} without opening", m.start(), name)
                    cursor = m.end()
                    continue
                self._stray_text(cursor, m.start())
                open_tag = (name, m.start(), m.end())
                continue
            open_name, open_at, body_start = open_tag
            if not closing:
                self.error(ParseErrorKind.UNBALANCED_TAG, f"tag {name} opened inside {open_name}", m.start(), name)
            elif name != open_name:
                self.error(ParseErrorKind.UNBALANCED_TAG, f"closing tag {name} inside {open_name}", m.start(), name)
            else:
                found.append(_Span(name, open_at, body_start, m.start(), self.text))
                open_tag = None
                cursor = m.end()
        if open_tag is not None:
            self.error(ParseErrorKind.UNBALANCED_TAG, f"unclosed tag {open_tag[0]}", open_tag[1], open_tag[0])
        else:
            self._stray_text(cursor, len(self.text))
        return found

    def payload(self, span: _Span, horizon: int) -> Any:
        body = span.body
        try:
            if span.name == "Prediction":
                return _parse_prediction(body)
            if span.name == "Visual":
                return _parse_visual(body)
            if span.name == "Action":
                return _parse_action(body)
            if span.name == "Answer":
                return _parse_answer(body, horizon)
            return _parse_free_text(body)
        except _PayloadError as exc:
            self.error(
                ParseErrorKind.MALFORMED_PAYLOAD,
                f"malformed payload in {span.name}: {exc.reason}",
                span.body_start + exc.at,
                span.name,
            )
        except (ValueError, ValidationError) as exc:
            self.error(ParseErrorKind.MALFORMED_PAYLOAD, f"malformed payload in {span.name}: {exc}", span.body_start, span.name)
        return None


def _decode(text: TextInput) -> Tuple[str | None, ParseError | None]:
    if isinstance(text, (bytes, bytearray)):
        try:
            return bytes(text).decode("utf-8"), None
        except UnicodeDecodeError as exc:
            return None, ParseError(
                kind=ParseErrorKind.INVALID_ENCODING, message=f"invalid utf-8: {exc.reason}", offset=exc.start
            )
    return text, None


def parse(text: TextInput, horizon: int = HORIZON) -> ParseOutcome:
    """Strict parse; total over arbitrary input, errors carry byte offsets."""
    decoded, encoding_error = _decode(text)
    if encoding_error is not None:
        return ParseOutcome(errors=[encoding_error])
    scanner = _Scanner(decoded)
    spans = scanner.spans()

    by_name: Dict[str, List[_Span]] = {name: [] for name in SEGMENTS}
    for span in spans:
        by_name[span.name].append(span)
    for name in SEGMENTS:
        if not by_name[name]:
            scanner.error(ParseErrorKind.MISSING_TAG, f"missing tag {name}", len(decoded), name)
        elif len(by_name[name]) > 1:
            scanner.error(ParseErrorKind.DUPLICATE_TAG, f"duplicate tag {name}", by_name[name][1].open_at, name)
    if len(spans) == len(SEGMENTS) and all(len(v) == 1 for v in by_name.values()):
        for span, expected in zip(spans, SEGMENTS):
            if span.name != expected:
                scanner.error(ParseErrorKind.WRONG_ORDER, f"wrong order at {span.name}", span.open_at, span.name)
                break

    values = {name: scanner.payload(found[0], horizon) for name, found in by_name.items() if len(found) == 1}
    if scanner.errors:
        return ParseOutcome(errors=scanner.errors)
    try:
        sample = StructuredSample(
            perception=values["Perception"],
            prediction=values["Prediction"],
            visual=values["Visual"],
            think=values["Think"],
            action=values["Action"],
            answer=values["Answer"],
        )
    except ValidationError as exc:
        return ParseOutcome(
            errors=[ParseError(kind=ParseErrorKind.MALFORMED_PAYLOAD, message=f"invalid sample: {exc.errors()[0]['msg']}")]
        )
    return ParseOutcome(sample=sample)


def extract_segments(text: TextInput, horizon: int = HORIZON) -> Dict[str, Any]:
    """Lenient read: every segment that occurs once and parses, keyed by tag name."""
    decoded, encoding_error = _decode(text)
    if encoding_error is not None:
        return {}
    scanner = _Scanner(decoded)
    spans = scanner.spans()
    counts: Dict[str, int] = {}
    for span in spans:
        counts[span.name] = counts.get(span.name, 0) + 1
    found = {}
    for span in spans:
        if counts[span.name] == 1:
            value = scanner.payload(span, horizon)
            if value is not None:
                found[span.name] = value
    return found


def _f(v: float) -> str:
    return f"{v:.6f}"


def serialize(sample: StructuredSample) -> str:
    waypoint = sample.prediction.waypoint
    answer = ", ".join(f"({_f(p.x)}, {_f(p.y)})" for p in sample.answer.points)
    return "\n".join(
        [
            f"<Perception>{sample.perception}</Perception>",
            f"<Prediction>{_f(waypoint.x)}, {_f(waypoint.y)} | {sample.prediction.direction.value}</Prediction>",
            f"<Visual>{' '.join(str(t) for t in sample.visual.tokens)}</Visual>",
            f"<Think>{sample.think}</Think>",
            f"<Action>{sample.action.lateral.value}, {sample.action.longitudinal.value}</Action>",
            f"<Answer>[{answer}]</Answer>",
        ]
    )


def check_format(text: TextInput, horizon: int = HORIZON) -> FormatReport:
    outcome = parse(text, horizon)
    return FormatReport(ok=outcome.ok, errors=[str(e) for e in outcome.errors])
