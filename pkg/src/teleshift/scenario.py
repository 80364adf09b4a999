"""Scripted scenario execution on a virtual clock.

One process hosts the hub and every device; envelopes travel through seeded
impaired links as discrete events. Identical scenario files produce
byte-identical reports. After the last scripted event the runner keeps the
clock moving (heartbeats keep firing) until the system is quiescent: nothing
data-bearing in flight, every loss repaired, every arm settled at its target.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from typing import Any

from . import codec
from .device import ActuationParams, DeviceCore, reconnect_delay_ms
from .hub import Hub
from .model import Arm, ShapeError
from .netsim import EventQueue, ImpairedLink, NetProfile
from .protocol import Envelope, Kind
from .sync import Role, SessionMode

DATA_KINDS = frozenset(k for k in Kind if k not in (Kind.PING, Kind.PONG))

ACTION_TYPES = (
    "override",
    "disconnect",
    "reconnect",
    "join",
    "snapshot_save",
    "snapshot_restore",
)


class BadScenario(ShapeError):
    code = "BadScenario"


class ScenarioTimeout(ShapeError):
    code = "Timeout"

    def __init__(self, limit_ms: float):
        super().__init__(f"no quiescence within {limit_ms:g} virtual ms")
        self.limit_ms = limit_ms


@dataclass(frozen=True, slots=True)
class ScenarioEvent:
    at_ms: float
    device: str
    action: dict


@dataclass(slots=True)
class Scenario:
    session: str
    mode: SessionMode
    device_names: list[str]
    presenter: str | None
    net: NetProfile
    params: ActuationParams
    heartbeat_ms: float
    timeout_ms: float
    events: list[ScenarioEvent]


def parse_scenario(data: Any) -> Scenario:
    """Validate a scenario document; BadScenario names the offending event."""
    if not isinstance(data, dict):
        raise BadScenario("scenario must be a JSON object")
    session = data.get("session")
    if not isinstance(session, str) or not session:
        raise BadScenario("scenario needs a session id")
    try:
        mode = SessionMode(data.get("mode", "collab"))
    except ValueError:
        raise BadScenario(f"unknown mode {data.get('mode')!r}") from None

    devices = data.get("devices", 0)
    if isinstance(devices, int):
        names = [f"{session}-d{i}" for i in range(devices)]
    elif isinstance(devices, list) and all(isinstance(d, str) for d in devices):
        names = list(devices)
    else:
        raise BadScenario("devices must be a count or a list of names")
    if not names:
        raise BadScenario("scenario needs at least one device")
    if len(set(names)) != len(names):
        raise BadScenario("device names must be unique")

    presenter = data.get("presenter")
    if mode is SessionMode.PRESENTATION:
        presenter = presenter or names[0]
        if presenter not in names:
            raise BadScenario(f"presenter {presenter!r} is not a device")
    elif presenter is not None:
        raise BadScenario("presenter only applies to present mode")

    net_json = data.get("net", {})
    try:
        net = NetProfile(
            latency_ms=float(net_json.get("latency_ms", 0)),
            jitter_ms=float(net_json.get("jitter_ms", 0)),
            drop_prob=float(net_json.get("drop_prob", 0)),
            seed=int(net_json.get("seed", 0)),
        )
    except (TypeError, ValueError) as exc:
        raise BadScenario(f"bad net profile: {exc}") from exc

    params_json = data.get("params", {})
    try:
        params = ActuationParams(
            v_max_mm_s=float(params_json.get("v_max_mm_s", 30.0)),
            tick_ms=int(params_json.get("tick_ms", 20)),
        )
    except (TypeError, ValueError) as exc:
        raise BadScenario(f"bad actuation params: {exc}") from exc

    events: list[ScenarioEvent] = []
    for index, item in enumerate(data.get("events", [])):
        where = f"event {index}"
        if not isinstance(item, dict):
            raise BadScenario(f"{where}: must be an object")
        at_ms = item.get("at_ms")
        if not isinstance(at_ms, (int, float)) or at_ms < 0:
            raise BadScenario(f"{where}: at_ms must be a non-negative number")
        device = item.get("device")
        if device not in names:
            raise BadScenario(f"{where}: unknown device {device!r}")
        action = item.get("action")
        if not isinstance(action, dict) or action.get("type") not in ACTION_TYPES:
            raise BadScenario(f"{where}: unknown action {action!r}")
        kind = action["type"]
        if kind == "override":
            if action.get("arm") not in {a.value for a in Arm}:
                raise BadScenario(f"{where}: unknown arm {action.get('arm')!r}")
            if not isinstance(action.get("mm"), (int, float)):
                raise BadScenario(f"{where}: override needs mm")
        if kind == "join":
            if action.get("other_id") not in names:
                raise BadScenario(f"{where}: unknown join target")
            if action.get("arm") not in {a.value for a in Arm}:
                raise BadScenario(f"{where}: unknown arm {action.get('arm')!r}")
        if kind == "snapshot_save" and not isinstance(action.get("label"), str):
            raise BadScenario(f"{where}: snapshot_save needs a label")
        if kind == "snapshot_restore" and not isinstance(action.get("id"), str):
            raise BadScenario(f"{where}: snapshot_restore needs an id")
        events.append(ScenarioEvent(float(at_ms), device, dict(action)))

    return Scenario(
        session=session,
        mode=mode,
        device_names=names,
        presenter=presenter,
        net=net,
        params=params,
        heartbeat_ms=float(data.get("heartbeat_ms", 100.0)),
        timeout_ms=float(data.get("timeout_ms", 300_000.0)),
        events=events,
    )


def load_scenario(path: str) -> Scenario:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
    except OSError as exc:
        raise BadScenario(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise BadScenario(f"{path} line {exc.lineno}: {exc.msg}") from exc
    return parse_scenario(data)


@dataclass(frozen=True, slots=True)
class TraceEntry:
    at_ms: float
    dest: str
    envelope: Envelope


@dataclass(slots=True)
class ScenarioReport:
    converged: bool
    settle_ms: int
    final_state_hash: dict[str, str]
    divergences: list[dict]
    follower_diffs: list[dict]

    def to_json(self) -> dict:
        return {
            "converged": self.converged,
            "settle_ms": self.settle_ms,
            "final_state_hash": dict(sorted(self.final_state_hash.items())),
            "divergences": self.divergences,
            "follower_diffs": self.follower_diffs,
        }

    def encode(self) -> str:
        return codec.canonical_dumps(self.to_json())


class ScenarioRunner:
    """Deterministic in-process execution of one scenario."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.queue = EventQueue()
        self.hub = Hub(data_dir=None, now_fn=lambda: int(self.queue.now))
        self.devices: dict[str, DeviceCore] = {}
        for name in scenario.device_names:
            role = None
            if scenario.mode is SessionMode.PRESENTATION:
                role = Role.PRESENTER if name == scenario.presenter else Role.FOLLOWER
            self.devices[name] = DeviceCore(
                client_id=name,
                session=scenario.session,
                mode=scenario.mode,
                desired_role=role,
                params=scenario.params,
            )
        self.conn_of: dict[str, str | None] = {n: None for n in scenario.device_names}
        self.client_of: dict[str, str] = {}
        self._conn_serial = 0
        self.links: dict[tuple[str, str], ImpairedLink] = {}
        self.trace: list[TraceEntry] = []
        self.script_errors: list[str] = []
        self.inflight_data = 0
        self.dropped_data = 0
        self._scripted_done = 0
        self._reconnects_pending = 0
        # last data-bearing seq sent per (conn, direction)
        self._data_watermark: dict[tuple[str, str], int] = {}

    # -- transport ---------------------------------------------------------------

    def _link(self, conn_id: str, direction: str) -> ImpairedLink:
        key = (conn_id, direction)
        if key not in self.links:
            self.links[key] = ImpairedLink(self.scenario.net, f"{conn_id}:{direction}")
        return self.links[key]

    def _client_send(self, name: str, envelope: Envelope) -> None:
        conn_id = self.conn_of.get(name)
        if conn_id is None:
            return
        is_data = envelope.kind in DATA_KINDS
        if is_data:
            self._data_watermark[(conn_id, "up")] = envelope.seq
        delay = self._link(conn_id, "up").impair()
        if delay is None:
            if is_data:
                self.dropped_data += 1
            return
        if is_data:
            self.inflight_data += 1
        self.queue.schedule(delay, lambda: self._hub_receive(conn_id, envelope, is_data))

    def _hub_receive(self, conn_id: str, envelope: Envelope, is_data: bool) -> None:
        if is_data:
            self.inflight_data -= 1
        if self.client_of.get(conn_id) is None:
            return  # connection torn down while in flight
        for dest_conn, out in self.hub.on_envelope(conn_id, envelope):
            self._hub_send(dest_conn, out)

    def _hub_send(self, conn_id: str, envelope: Envelope) -> None:
        name = self.client_of.get(conn_id)
        if name is None:
            return
        is_data = envelope.kind in DATA_KINDS
        if is_data:
            self._data_watermark[(conn_id, "down")] = envelope.seq
        delay = self._link(conn_id, "down").impair()
        if delay is None:
            if is_data:
                self.dropped_data += 1
            return
        if is_data:
            self.inflight_data += 1
        self.queue.schedule(
            delay, lambda: self._device_receive(name, conn_id, envelope, is_data)
        )

    def _device_receive(
        self, name: str, conn_id: str, envelope: Envelope, is_data: bool
    ) -> None:
        if is_data:
            self.inflight_data -= 1
        if self.conn_of.get(name) != conn_id:
            return  # stale connection
        self.trace.append(TraceEntry(self.queue.now, name, envelope))
        for out in self.devices[name].on_envelope(envelope):
            self._client_send(name, out)

    # -- connection lifecycle ---------------------------------------------------------

    def _connect(self, name: str) -> None:
        if self.conn_of.get(name) is not None:
            return
        self._conn_serial += 1
        conn_id = f"{name}#{self._conn_serial}"
        self.conn_of[name] = conn_id
        self.client_of[conn_id] = name
        self.hub.on_connect(conn_id)
        for envelope in self.devices[name].connect():
            self._client_send(name, envelope)
        # HELLO or WELCOME can be lost; retry until the handshake completes
        watchdog_ms = max(self.scenario.heartbeat_ms * 4, 400.0)
        self.queue.schedule(watchdog_ms, lambda: self._check_handshake(name, conn_id))

    def _check_handshake(self, name: str, conn_id: str) -> None:
        device = self.devices[name]
        if self.conn_of.get(name) != conn_id or device.connected:
            return
        self._drop_connection(name, conn_id)
        self._reconnect_later(name)

    def _disconnect(self, name: str) -> None:
        conn_id = self.conn_of.get(name)
        if conn_id is None:
            return
        self._drop_connection(name, conn_id)

    def _drop_connection(self, name: str, conn_id: str) -> None:
        self.conn_of[name] = None
        self.client_of[conn_id] = None
        self.hub.on_disconnect(conn_id)
        self.devices[name].on_disconnect()

    def _reconnect_later(self, name: str) -> None:
        device = self.devices[name]
        delay = reconnect_delay_ms(device.reconnect_attempt)
        device.reconnect_attempt += 1
        self._reconnects_pending += 1

        def attempt() -> None:
            self._reconnects_pending -= 1
            self._connect(name)

        self.queue.schedule(delay, attempt)

    # -- scripted actions ----------------------------------------------------------------

    def _run_action(self, event: ScenarioEvent) -> None:
        self._scripted_done += 1
        device = self.devices[event.device]
        action = event.action
        kind = action["type"]
        try:
            if kind == "override":
                sends = device.override(Arm(action["arm"]), float(action["mm"]))
            elif kind == "disconnect":
                self._disconnect(event.device)
                return
            elif kind == "reconnect":
                self._connect(event.device)
                return
            elif kind == "join":
                sends = device.declare_join(action["other_id"], Arm(action["arm"]))
            elif kind == "snapshot_save":
                sends = device.snapshot_save(action["label"])
            elif kind == "snapshot_restore":
                sends = device.snapshot_restore(action["id"])
            else:  # unreachable after parsing
                return
        except ShapeError as exc:
            self.script_errors.append(f"{event.device}@{event.at_ms:g}: {exc}")
            return
        for envelope in sends:
            self._client_send(event.device, envelope)

    # -- periodic machinery ------------------------------------------------------------------

    def _tick_all(self) -> None:
        for device in self.devices.values():
            device.tick()
        self.queue.schedule(self.scenario.params.tick_ms, self._tick_all)

    def _heartbeat(self) -> None:
        sends, reaped = self.hub.heartbeat()
        for conn_id, envelope in sends:
            self._hub_send(conn_id, envelope)
        for conn_id in reaped:
            name = self.client_of.get(conn_id)
            if name is not None and self.conn_of.get(name) == conn_id:
                # the hub gave up on us; come back through shape recovery
                self.conn_of[name] = None
                self.client_of[conn_id] = None
                self.devices[name].on_disconnect()
                self._reconnect_later(name)
        self.queue.schedule(self.scenario.heartbeat_ms, self._heartbeat)

    # -- quiescence ------------------------------------------------------------------------------

    def _quiescent(self) -> bool:
        if self._scripted_done < len(self.scenario.events):
            return False
        if self.inflight_data != 0 or self._reconnects_pending != 0:
            return False
        session = self.hub.sessions.get(self.scenario.session)
        if session is None:
            return False
        for name, device in self.devices.items():
            conn_id = self.conn_of.get(name)
            if conn_id is None:
                continue  # offline devices hold no repair obligations
            if device.state.pending_overrides:
                return False
            if not device.loss_signals_handled():
                return False
            hub_conn = self.hub.conns.get(conn_id)
            if hub_conn is None:
                return False
            if device.hub_lost_seen != hub_conn.inbox.lost:
                return False
            # every data envelope either arrived or its loss got repaired
            if device.inbox.last_seq < self._data_watermark.get((conn_id, "down"), 0):
                return False
            if hub_conn.inbox.last_seq < self._data_watermark.get((conn_id, "up"), 0):
                return False
            view = session.view_for(name)
            for (sid, arm), update in device.outstanding.items():
                sub = view.substructures.get(sid)
                if sub is None or sub.arms[arm].stamp < update.stamp:
                    return False
            for sid, arm, other, mate in device.outstanding_joins:
                joint = view.joint_at(sid, arm)
                if joint is None or not joint.touches(other, mate):
                    return False
        return all(device.settled() for device in self.devices.values())

    # -- main loop -----------------------------------------------------------------------------------

    def run(self, realtime: bool = False) -> ScenarioReport:
        for event in sorted(self.scenario.events, key=lambda e: e.at_ms):
            self.queue.schedule_at(event.at_ms, lambda e=event: self._run_action(e))
        for name in self.scenario.device_names:
            self._connect(name)
        self.queue.schedule(self.scenario.params.tick_ms, self._tick_all)
        self.queue.schedule(self.scenario.heartbeat_ms, self._heartbeat)

        wall_started = time.monotonic()
        while True:
            if self._quiescent():
                break
            if self.queue.now > self.scenario.timeout_ms:
                raise ScenarioTimeout(self.scenario.timeout_ms)
            if realtime:
                ahead = self.queue.now / 1000.0 - (time.monotonic() - wall_started)
                if ahead > 0:
                    time.sleep(ahead)
            if not self.queue.step():
                break
        return self._report()

    # -- report ---------------------------------------------------------------------------------------

    def _report(self) -> ScenarioReport:
        session = self.hub.sessions[self.scenario.session]
        hashes = {
            name: codec.topology_hash(device.replica)
            for name, device in self.devices.items()
        }
        divergences: list[dict] = []
        follower_diffs: list[dict] = []
        for name in sorted(self.devices):
            device = self.devices[name]
            if self.scenario.mode is SessionMode.COLLABORATION:
                reference = session.topology
            else:
                reference = session.view_for(name)
                if session.roles.get(name) is Role.FOLLOWER:
                    follower_diffs.extend(
                        self._diff(name, device, session.topology, with_stamp=False)
                    )
            divergences.extend(self._diff(name, device, reference, with_stamp=True))
        return ScenarioReport(
            converged=not divergences,
            settle_ms=int(round(self.queue.now)),
            final_state_hash=hashes,
            divergences=divergences,
            follower_diffs=follower_diffs,
        )

    def _diff(
        self, name: str, device: DeviceCore, reference, with_stamp: bool
    ) -> list[dict]:
        entries = []
        for sid in sorted(reference.substructures):
            ref_sub = reference.substructures[sid]
            dev_sub = device.replica.substructures.get(sid)
            for arm in Arm:
                ref_arm = ref_sub.arms[arm]
                dev_arm = dev_sub.arms[arm] if dev_sub else None
                expected = {"target": ref_arm.target, "jointed": ref_arm.jointed}
                actual = (
                    {"target": dev_arm.target, "jointed": dev_arm.jointed}
                    if dev_arm
                    else None
                )
                if with_stamp:
                    expected["stamp"] = ref_arm.stamp.to_json()
                    if actual is not None:
                        actual["stamp"] = dev_arm.stamp.to_json()
                if expected != actual:
                    entries.append(
                        {
                            "device": name,
                            "substructure": sid,
                            "arm": arm.value,
                            "expected": expected,
                            "actual": actual,
                        }
                    )
        return entries


def run_scenario_file(path: str, realtime: bool = False) -> ScenarioReport:
    scenario = load_scenario(path)
    return ScenarioRunner(scenario).run(realtime=realtime)
