"""Corrective feedback events from a posture report.

Three channels mirror how a human instructor works: a continuous visual
overlay marking every misaligned joint, plus one spoken/written cue at a
time for the single worst joint. Simultaneous voice corrections are
useless mid-pose, so text/voice are rate-limited per joint by a cooldown
window; the overlay never is.

Message direction follows the sign of (measured - reference): positive
deviations select the "increase" template row, negative the "decrease"
row.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

from .errors import UnknownJoint
from .evaluator import JointResult, PostureReport

TEMPLATE_RESOURCE = "feedback_templates_v1.json"

DEFAULT_COOLDOWN_MS = 2000

COLOR_MAJOR = "#ff3b30"
COLOR_MINOR = "#ffb300"

CHANNEL_OVERLAY = "overlay"
CHANNEL_TEXT = "text"
CHANNEL_VOICE = "voice"

SEVERITY_MINOR = "minor"
SEVERITY_MAJOR = "major"


@dataclass(frozen=True)
class FeedbackEvent:
    """One directive: overlay events carry a color, text/voice a message."""

    timestamp_ms: int
    channel: str
    joint: str | None
    severity: str
    message: str | None = None
    color: str | None = None


def _load_templates(text: str) -> dict[str, dict[str, str]]:
    doc = json.loads(text)
    return {joint: dict(rows) for joint, rows in doc["templates"].items()}


def load_templates(path: str | None = None) -> dict[str, dict[str, str]]:
    if path is None:
        text = resources.files("asanacoach.data").joinpath(TEMPLATE_RESOURCE).read_text()
    else:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    return _load_templates(text)


_TEMPLATES = load_templates()


def template_lookup(joint: str, direction: str) -> str:
    """Message for (joint, direction); direction is 'increase' or 'decrease'."""
    try:
        rows = _TEMPLATES[joint]
    except KeyError:
        raise UnknownJoint(f"no templates for joint {joint!r}") from None
    try:
        return rows[direction]
    except KeyError:
        raise UnknownJoint(f"no {direction!r} template for joint {joint!r}") from None


def _severity(joint: JointResult) -> str:
    return (
        SEVERITY_MAJOR
        if joint.deviation_deg > 2.0 * joint.flag_threshold_deg
        else SEVERITY_MINOR
    )


class CooldownState:
    """Per-session last-message timestamps, keyed by joint name."""

    def __init__(self, cooldown_ms: int = DEFAULT_COOLDOWN_MS):
        self.cooldown_ms = cooldown_ms
        self._last_ms: dict[str, int] = {}

    def ready(self, joint: str, now_ms: int) -> bool:
        last = self._last_ms.get(joint)
        return last is None or now_ms - last >= self.cooldown_ms

    def mark(self, joint: str, now_ms: int) -> None:
        self._last_ms[joint] = now_ms

    def reset(self) -> None:
        self._last_ms.clear()


def generate(
    report: PostureReport, state: CooldownState, now_ms: int
) -> list[FeedbackEvent]:
    """Events for one report: overlays for every flag, one text+voice pair.

    The text/voice pair targets the flagged joint with the largest
    deviation and is suppressed while that joint is inside the cooldown
    window; the overlay set is emitted on every call.
    """
    events: list[FeedbackEvent] = []
    flagged = [j for j in report.joints if j.flagged]
    for joint in flagged:
        events.append(
            FeedbackEvent(
                timestamp_ms=now_ms,
                channel=CHANNEL_OVERLAY,
                joint=joint.name,
                severity=_severity(joint),
                color=COLOR_MAJOR if _severity(joint) == SEVERITY_MAJOR else COLOR_MINOR,
            )
        )
    if not flagged:
        return events
    worst = max(flagged, key=lambda j: j.deviation_deg)
    if not state.ready(worst.name, now_ms):
        return events
    direction = "increase" if worst.signed_deviation_deg > 0 else "decrease"
    message = template_lookup(worst.name, direction)
    severity = _severity(worst)
    for channel in (CHANNEL_TEXT, CHANNEL_VOICE):
        events.append(
            FeedbackEvent(
                timestamp_ms=now_ms,
                channel=channel,
                joint=worst.name,
                severity=severity,
                message=message,
            )
        )
    state.mark(worst.name, now_ms)
    return events
