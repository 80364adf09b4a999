"""Wire protocol: one JSON envelope per line (or per WebSocket text frame).

Envelope fields are exactly kind, session, sender, seq, payload. Unknown
payload fields are ignored; unknown kinds earn an ERROR. seq is a
per-connection, per-direction counter that increments by one per envelope,
so receivers can spot both replays (seq regressions) and losses (gaps).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from .model import ShapeError


class MalformedEnvelope(ShapeError):
    code = "MalformedEnvelope"


class Kind(Enum):
    HELLO = "HELLO"
    WELCOME = "WELCOME"
    UPDATE = "UPDATE"
    FULL_STATE_REQUEST = "FULL_STATE_REQUEST"
    FULL_STATE = "FULL_STATE"
    SNAPSHOT_SAVE = "SNAPSHOT_SAVE"
    SNAPSHOT_LIST = "SNAPSHOT_LIST"
    SNAPSHOT_RESTORE = "SNAPSHOT_RESTORE"
    MODE_SET = "MODE_SET"
    ERROR = "ERROR"
    PING = "PING"
    PONG = "PONG"


HUB_SENDER = "#hub"


@dataclass(slots=True)
class Envelope:
    kind: Kind
    session: str
    sender: str
    seq: int
    payload: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "kind": self.kind.value,
            "session": self.session,
            "sender": self.sender,
            "seq": self.seq,
            "payload": self.payload,
        }

    def encode(self) -> str:
        """Newline-free JSON text; the TCP transport appends the newline."""
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))

    def encode_line(self) -> bytes:
        return (self.encode() + "\n").encode("utf-8")


def decode_envelope(text: str | bytes) -> Envelope:
    """Parse one envelope; raises MalformedEnvelope on anything unusable."""
    if isinstance(text, bytes):
        text = text.decode("utf-8", errors="replace")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedEnvelope(f"bad JSON: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise MalformedEnvelope("envelope must be a JSON object")
    for key in ("kind", "session", "sender", "seq"):
        if key not in data:
            raise MalformedEnvelope(f"missing field {key!r}")
    try:
        kind = Kind(data["kind"])
    except ValueError:
        raise MalformedEnvelope(f"unknown kind {data['kind']!r}") from None
    seq = data["seq"]
    if not isinstance(seq, int) or isinstance(seq, bool) or seq < 0:
        raise MalformedEnvelope("seq must be a non-negative integer")
    payload = data.get("payload", {})
    if not isinstance(payload, dict):
        raise MalformedEnvelope("payload must be a JSON object")
    return Envelope(
        kind=kind,
        session=str(data["session"]),
        sender=str(data["sender"]),
        seq=seq,
        payload=payload,
    )


def error_payload(code: str, detail: str = "") -> dict:
    return {"code": code, "detail": detail or code}


class Outbox:
    """Per-connection outbound seq counter."""

    __slots__ = ("seq",)

    def __init__(self) -> None:
        self.seq = 0

    def stamp(self, kind: Kind, session: str, sender: str, payload: dict) -> Envelope:
        self.seq += 1
        return Envelope(kind, session, sender, self.seq, payload)


class Inbox:
    """Per-connection inbound seq tracking: rejects replays, counts gaps."""

    __slots__ = ("last_seq", "lost")

    def __init__(self) -> None:
        self.last_seq = 0
        self.lost = 0

    def accept(self, envelope: Envelope) -> bool:
        """False (and no state change) when the envelope replays an old seq."""
        if envelope.seq <= self.last_seq:
            return False
        if envelope.seq > self.last_seq + 1:
            self.lost += envelope.seq - self.last_seq - 1
        self.last_seq = envelope.seq
        return True
