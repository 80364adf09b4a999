"""Simulated substructure device: actuation, manual overrides, hub client.

A device embodies one substructure and keeps a full replica of the session
assembly (counterpart bodies of every other member actuate in its physical
space too). Arms travel at finite speed toward their targets; a manual
override pins target to wherever the hand pushed the arm.

Loss repair: envelopes carry per-direction seq counters, the hub's heartbeat
PING reports what it has seen, and the device answers any evidence of loss
with a full-state fetch plus re-send of its unconfirmed edits.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from . import codec
from .clock import LamportClock, observe, stamp_next
from .model import (
    Arm,
    AssemblyTopology,
    ShapeError,
    SubstructureState,
    add_joint,
    clamp_extension,
    opposite_arm,
    prune_dead_joints,
)
from .protocol import Envelope, Inbox, Kind, Outbox
from .sync import ArmUpdate, Role, SessionMode, merge_arm, resync

RECONNECT_BASE_MS = 500
RECONNECT_CAP_MS = 8000


class WrongSubstructure(ShapeError):
    code = "WrongSubstructure"


class HubUnreachable(ShapeError):
    code = "HubUnreachable"


@dataclass(frozen=True, slots=True)
class ActuationParams:
    """Arm speed and simulation step. Defaults give visible desk-scale motion."""

    v_max_mm_s: float = 30.0
    tick_ms: int = 20

    def __post_init__(self) -> None:
        if self.v_max_mm_s <= 0 or self.tick_ms <= 0:
            raise ValueError("v_max and tick must be positive")

    @property
    def step_mm(self) -> float:
        return self.v_max_mm_s * self.tick_ms / 1000.0


def step_extension(extension: float, target: float, step_mm: float) -> float:
    """One actuation step toward target: bounded speed, no overshoot."""
    delta = target - extension
    if abs(delta) <= step_mm:
        return target
    return extension + (step_mm if delta > 0 else -step_mm)


def reconnect_delay_ms(attempt: int) -> int:
    """Exponential backoff schedule: 500, 1000, 2000, ... capped at 8000."""
    return min(RECONNECT_BASE_MS * (2 ** max(attempt, 0)), RECONNECT_CAP_MS)


@dataclass(slots=True)
class DeviceState:
    """The replicated and physical state one device carries."""

    substructure: SubstructureState
    clock: LamportClock
    connected: bool = False
    pending_overrides: deque = field(default_factory=deque)


class DeviceCore:
    """One simulated device, independent of transport and wall clock.

    Callers deliver inbound envelopes via :meth:`on_envelope` and send
    whatever envelopes the methods return. One logical thread per device.
    """

    def __init__(
        self,
        client_id: str,
        session: str,
        mode: SessionMode = SessionMode.COLLABORATION,
        desired_role: Role | None = None,
        params: ActuationParams | None = None,
    ):
        self.client_id = client_id
        self.session = session
        self.mode = mode
        self.desired_role = desired_role
        self.params = params or ActuationParams()
        self.replica = AssemblyTopology(
            substructures={client_id: SubstructureState(client_id)}
        )
        self.state = DeviceState(
            substructure=self.replica.substructures[client_id],
            clock=LamportClock(0, client_id),
        )
        self.role: Role | None = None
        self.outbox = Outbox()
        self.inbox = Inbox()
        # edits sent but not yet observed in the hub's view of us
        self.outstanding: dict[tuple[str, Arm], ArmUpdate] = {}
        self.outstanding_joins: set = set()
        self.reconnect_attempt = 0
        self.errors: list[dict] = []
        self.snapshot_replies: list[dict] = []
        self._handled_lost = 0
        self._hub_lost_seen = 0

    # -- convenience views ------------------------------------------------------

    @property
    def connected(self) -> bool:
        return self.state.connected

    @property
    def own(self) -> SubstructureState:
        return self.replica.substructures[self.client_id]

    def settled(self) -> bool:
        return all(
            arm.extension == arm.target
            for sub in self.replica.substructures.values()
            for arm in sub.arms.values()
        )

    def loss_signals_handled(self) -> bool:
        """All inbound gap evidence has been answered with a repair sweep."""
        return self._handled_lost == self.inbox.lost

    @property
    def hub_lost_seen(self) -> int:
        return self._hub_lost_seen

    # -- actuation ----------------------------------------------------------------

    def tick(self) -> None:
        """Advance every arm in this space by one actuation step."""
        step = self.params.step_mm
        for sub in self.replica.substructures.values():
            for arm_state in sub.arms.values():
                arm_state.extension = clamp_extension(
                    step_extension(arm_state.extension, arm_state.target, step)
                )

    # -- local edits ------------------------------------------------------------------

    def override(self, arm: Arm, new_extension_mm: float) -> list[Envelope]:
        """The hand pushes an arm: extension jumps, target follows the hand."""
        value = clamp_extension(new_extension_mm)
        arm_state = self.own.arms[arm]
        arm_state.extension = value
        arm_state.target = value
        if not self.state.connected:
            self.state.pending_overrides.append((arm, value))
            return []
        self.state.clock, stamp = stamp_next(self.state.clock)
        arm_state.stamp = stamp
        update = ArmUpdate(self.client_id, arm, value, arm_state.jointed, stamp)
        self.outstanding[(self.client_id, arm)] = update
        return [self._update_envelope([update])]

    def declare_join(self, other_id: str, arm: Arm) -> list[Envelope]:
        """Magnet-join our `arm` to the opposite arm of `other_id`."""
        if other_id not in self.replica.substructures:
            raise WrongSubstructure(f"no replica of {other_id!r}")
        mate = opposite_arm(arm)
        self.replica = add_joint(
            self.replica, (self.client_id, arm), (other_id, mate)
        )
        updates = []
        for sid, joint_arm in ((self.client_id, arm), (other_id, mate)):
            state = self.replica.substructures[sid].arms[joint_arm]
            self.state.clock, stamp = stamp_next(self.state.clock)
            state.stamp = stamp
            update = ArmUpdate(sid, joint_arm, state.target, True, stamp)
            self.outstanding[(sid, joint_arm)] = update
            updates.append(update)
        decl = (self.client_id, arm, other_id, mate)
        self.outstanding_joins.add(decl)
        if not self.state.connected:
            return []
        return [self._update_envelope(updates, joins=[decl])]

    def snapshot_save(self, label: str) -> list[Envelope]:
        return [self._stamp(Kind.SNAPSHOT_SAVE, {"label": label})]

    def snapshot_restore(self, snapshot_id: str) -> list[Envelope]:
        return [self._stamp(Kind.SNAPSHOT_RESTORE, {"snapshot_id": snapshot_id})]

    def snapshot_list(self) -> list[Envelope]:
        return [self._stamp(Kind.SNAPSHOT_LIST, {})]

    # -- connection lifecycle ------------------------------------------------------------

    def connect(self) -> list[Envelope]:
        """Open a fresh connection: HELLO carrying our substructure."""
        self.outbox = Outbox()
        self.inbox = Inbox()
        self._handled_lost = 0
        self._hub_lost_seen = 0
        payload = {
            "mode": self.mode.value,
            "role": self.desired_role.value if self.desired_role else None,
            "substructures": [codec.substructure_to_json(self.own)],
            "create": True,
        }
        return [self._stamp(Kind.HELLO, payload)]

    def on_disconnect(self) -> None:
        self.state.connected = False

    # -- inbound ---------------------------------------------------------------------------

    def on_envelope(self, envelope: Envelope) -> list[Envelope]:
        if not self.inbox.accept(envelope):
            return []
        kind = envelope.kind
        if kind is Kind.WELCOME:
            return self._on_welcome(envelope.payload)
        if kind is Kind.FULL_STATE:
            return self._on_full_state(envelope.payload)
        if kind is Kind.UPDATE:
            return self._on_update(envelope.payload)
        if kind is Kind.PING:
            return self._on_ping(envelope.payload)
        if kind is Kind.ERROR:
            self.errors.append(envelope.payload)
            self._retract_failed_join(envelope.payload)
            return []
        if kind in (Kind.SNAPSHOT_SAVE, Kind.SNAPSHOT_LIST, Kind.SNAPSHOT_RESTORE):
            self.snapshot_replies.append(envelope.payload)
            return []
        if kind is Kind.MODE_SET:
            self._on_mode_set(envelope.payload)
            return []
        return []

    def on_remote_update(self, update: ArmUpdate) -> None:
        """Merge one replicated edit; stale stamps are no-ops."""
        sub = self.replica.substructures.get(update.substructure)
        if sub is None:
            raise WrongSubstructure(f"no replica of {update.substructure!r}")
        self.state.clock = observe(self.state.clock, update.stamp)
        before = sub.arms[update.arm]
        after = merge_arm(before, update)
        if after is not before:
            sub.arms[update.arm] = after
            if not after.jointed and before.jointed:
                self.replica = prune_dead_joints(self.replica)
                self.state.substructure = self.replica.substructures[self.client_id]

    # -- inbound handlers ---------------------------------------------------------------------

    def _on_welcome(self, payload: dict) -> list[Envelope]:
        self.role = Role(payload["role"])
        self.mode = SessionMode(payload["mode"])
        self._adopt(payload["topology"])
        self.state.connected = True
        self.reconnect_attempt = 0
        sends: list[Envelope] = []
        # offline edits order after everything we just observed
        while self.state.pending_overrides:
            arm, value = self.state.pending_overrides.popleft()
            sends.extend(self.override(arm, value))
        resend = self._resend_outstanding()
        if resend:
            sends.append(resend)
        return sends

    def _on_full_state(self, payload: dict) -> list[Envelope]:
        self._adopt(payload["topology"])
        resend = self._resend_outstanding()
        return [resend] if resend else []

    def _adopt(self, topology_json: dict) -> None:
        authoritative = codec.topology_from_json(topology_json)
        for sub in authoritative.substructures.values():
            for arm_state in sub.arms.values():
                self.state.clock = observe(self.state.clock, arm_state.stamp)
        self.replica = resync(self.replica, authoritative)
        self.state.substructure = self.replica.substructures[self.client_id]
        self._confirm_outstanding(authoritative)

    def _confirm_outstanding(self, authoritative: AssemblyTopology) -> None:
        for key, update in list(self.outstanding.items()):
            sub = authoritative.substructures.get(key[0])
            if sub is not None and sub.arms[key[1]].stamp >= update.stamp:
                del self.outstanding[key]
        for decl in list(self.outstanding_joins):
            sid, arm, other, mate = decl
            joint = authoritative.joint_at(sid, arm)
            if joint is not None and joint.touches(other, mate):
                self.outstanding_joins.discard(decl)

    def _resend_outstanding(self) -> Envelope | None:
        """Re-apply and re-send whatever the hub has not adopted yet."""
        if not self.outstanding and not self.outstanding_joins:
            return None
        updates = []
        for update in self.outstanding.values():
            sub = self.replica.substructures.get(update.substructure)
            if sub is not None:
                sub.arms[update.arm] = merge_arm(sub.arms[update.arm], update)
            updates.append(update)
        joins = []
        for decl in sorted(self.outstanding_joins):
            sid, arm, other, mate = decl
            try:
                self.replica = add_joint(self.replica, (sid, arm), (other, mate))
            except ShapeError:
                pass
            joins.append(decl)
        self.state.substructure = self.replica.substructures[self.client_id]
        return self._update_envelope(updates, joins=joins)

    def _on_update(self, payload: dict) -> list[Envelope]:
        behind = False
        for item in payload.get("updates", []):
            try:
                update = ArmUpdate.from_json(item)
            except (KeyError, TypeError, ValueError):
                continue
            try:
                self.on_remote_update(update)
            except WrongSubstructure:
                # a body we have not learned about yet
                behind = True
        for item in payload.get("unjoins", []):
            self._apply_unjoin(item)
        for item in payload.get("joins", []):
            behind = not self._apply_join(item) or behind
        # anything we could not apply means our replica is behind: resync
        return self._sweep() if behind else []

    def _apply_join(self, item: dict) -> bool:
        try:
            a = (str(item["a"][0]), codec.arm_from_key(item["a"][1]))
            b = (str(item["b"][0]), codec.arm_from_key(item["b"][1]))
            self.replica = add_joint(self.replica, a, b)
            self.state.substructure = self.replica.substructures[self.client_id]
            return True
        except (KeyError, IndexError, TypeError, codec.CorruptFile):
            return True  # malformed declaration; nothing to repair
        except ShapeError:
            return False

    def _apply_unjoin(self, item: dict) -> None:
        try:
            a = (str(item["a"][0]), codec.arm_from_key(item["a"][1]))
        except (KeyError, IndexError, TypeError, codec.CorruptFile):
            return
        joint = self.replica.joint_at(*a)
        if joint is not None:
            self.replica.joints.discard(joint)

    def _on_ping(self, payload: dict) -> list[Envelope]:
        sends = [self._stamp(Kind.PONG, {})]
        lost_here = self.inbox.lost > self._handled_lost
        hub_lost = payload.get("lost", 0)
        lost_there = hub_lost > self._hub_lost_seen
        self._hub_lost_seen = max(self._hub_lost_seen, hub_lost)
        if lost_here or lost_there:
            sends.extend(self._sweep())
        return sends

    def _sweep(self) -> list[Envelope]:
        self._handled_lost = self.inbox.lost
        return [self._stamp(Kind.FULL_STATE_REQUEST, {"view": "own"})]

    def _retract_failed_join(self, payload: dict) -> None:
        """The hub rejected one of our join declarations: stop re-sending it."""
        decl_json = payload.get("join")
        if not isinstance(decl_json, dict):
            return
        try:
            a = (str(decl_json["a"][0]), codec.arm_from_key(decl_json["a"][1]))
            b = (str(decl_json["b"][0]), codec.arm_from_key(decl_json["b"][1]))
        except (KeyError, IndexError, TypeError, codec.CorruptFile):
            return
        self.outstanding_joins.discard((a[0], a[1], b[0], b[1]))
        joint = self.replica.joint_at(*a)
        if joint is not None and joint.touches(*b):
            self.replica.joints.discard(joint)

    def _on_mode_set(self, payload: dict) -> None:
        try:
            self.mode = SessionMode(payload["mode"])
            role = payload.get("roles", {}).get(self.client_id)
            if role:
                self.role = Role(role)
        except (KeyError, ValueError):
            return

    # -- envelope plumbing -------------------------------------------------------------------------

    def _stamp(self, kind: Kind, payload: dict) -> Envelope:
        return self.outbox.stamp(kind, self.session, self.client_id, payload)

    def _update_envelope(self, updates: list[ArmUpdate], joins=None) -> Envelope:
        payload: dict = {"updates": [u.to_json() for u in updates]}
        if joins:
            payload["joins"] = [
                {"a": [sid, arm.value], "b": [other, mate.value]}
                for sid, arm, other, mate in joins
            ]
        return self._stamp(Kind.UPDATE, payload)
