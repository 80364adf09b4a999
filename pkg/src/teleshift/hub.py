"""Session hub: orders edits, fans them out, stores snapshots, serves recovery.

The hub owns the authoritative topology per session plus one shadow topology
per diverged follower. It is transport-free: callers feed decoded envelopes
through ``on_envelope`` and deliver the returned (connection, envelope) pairs
themselves. All mutations for one session must be serialized by the caller
(the asyncio server holds a per-session lock; the scenario runner is single
threaded by construction).
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from typing import Any, Callable

from . import codec
from .clock import LamportClock, observe
from .model import (
    Arm,
    AssemblyTopology,
    ShapeError,
    Snapshot,
    add_joint,
    check_topology,
    prune_dead_joints,
    restore_targets,
    snapshot_of,
    validate_actor_id,
)
from .protocol import (
    HUB_SENDER,
    Envelope,
    Inbox,
    Kind,
    MalformedEnvelope,
    Outbox,
    error_payload,
)
from .sync import (
    ArmUpdate,
    Role,
    RoleModeMismatch,
    RoutingDecision,
    SessionMode,
    merge_topology,
    route_update,
)


class UnknownSession(ShapeError):
    code = "UnknownSession"


class DuplicateClientId(ShapeError):
    code = "DuplicateClientId"


class SecondPresenter(ShapeError):
    code = "SecondPresenter"


class NotAMember(ShapeError):
    code = "NotAMember"


class StaleSeq(ShapeError):
    code = "StaleSeq"


class UnknownSnapshot(ShapeError):
    code = "UnknownSnapshot"


CorruptFile = codec.CorruptFile

HEARTBEAT_MS_DEFAULT = 5000
MISSED_PONGS_LIMIT = 3


@dataclass(slots=True)
class SessionRecord:
    """One session's durable state (no live connection data)."""

    id: str
    mode: SessionMode
    roles: dict[str, Role] = field(default_factory=dict)
    topology: AssemblyTopology = field(default_factory=AssemblyTopology)
    snapshots: list[Snapshot] = field(default_factory=list)
    log: list[ArmUpdate] = field(default_factory=list)
    shadows: dict[str, AssemblyTopology] = field(default_factory=dict)
    dirty: set[str] = field(default_factory=set)
    clock: LamportClock = field(default=LamportClock(0, HUB_SENDER))
    snapshot_seq: int = 0
    initial_topology: AssemblyTopology = field(default_factory=AssemblyTopology)

    def presenter(self) -> str | None:
        for client, role in self.roles.items():
            if role is Role.PRESENTER:
                return client
        return None

    def view_for(self, client: str) -> AssemblyTopology:
        """What this client should see: their shadow if they have one."""
        if self.roles.get(client) is Role.FOLLOWER and client in self.shadows:
            return self.shadows[client]
        return self.topology


@dataclass(slots=True)
class _Connection:
    conn_id: str
    inbox: Inbox = field(default_factory=Inbox)
    outbox: Outbox = field(default_factory=Outbox)
    session: str | None = None
    client: str | None = None
    unanswered_pings: int = 0


Send = tuple[str, Envelope]  # (conn_id, envelope)


class Hub:
    """The rendezvous service, independent of any transport."""

    def __init__(
        self,
        data_dir: str | None = None,
        now_fn: Callable[[], int] | None = None,
    ):
        self.data_dir = data_dir
        self.now_fn = now_fn or (lambda: int(time.time() * 1000))
        self.sessions: dict[str, SessionRecord] = {}
        self.conns: dict[str, _Connection] = {}
        # client -> conn_id per session, live connections only
        self.connected: dict[str, dict[str, str]] = {}
        if data_dir is not None:
            self._load_all()

    # -- connection lifecycle -------------------------------------------------

    def on_connect(self, conn_id: str) -> None:
        self.conns[conn_id] = _Connection(conn_id)

    def on_disconnect(self, conn_id: str) -> None:
        conn = self.conns.pop(conn_id, None)
        if conn is None or conn.session is None:
            return
        live = self.connected.get(conn.session, {})
        if live.get(conn.client) == conn_id:
            del live[conn.client]

    def members_online(self, session_id: str) -> list[str]:
        return sorted(self.connected.get(session_id, {}))

    # -- envelope entry point -------------------------------------------------

    def on_envelope(self, conn_id: str, envelope: Envelope) -> list[Send]:
        conn = self.conns.get(conn_id)
        if conn is None:
            self.on_connect(conn_id)
            conn = self.conns[conn_id]
        if not conn.inbox.accept(envelope):
            return [self._error(conn, StaleSeq(f"seq {envelope.seq} already seen"))]
        try:
            return self._dispatch(conn, envelope)
        except ShapeError as exc:
            return [self._error(conn, exc)]

    def _dispatch(self, conn: _Connection, envelope: Envelope) -> list[Send]:
        kind = envelope.kind
        if kind is Kind.HELLO:
            return self._handle_hello(conn, envelope)
        if kind is Kind.PONG:
            conn.unanswered_pings = 0
            return []
        if kind is Kind.PING:
            return [self._send(conn, Kind.PONG, envelope.session, {})]
        session, client = self._membership(conn)
        if kind is Kind.UPDATE:
            return self._handle_update(session, client, conn, envelope.payload)
        if kind is Kind.FULL_STATE_REQUEST:
            return self._handle_full_state(session, client, conn, envelope.payload)
        if kind is Kind.SNAPSHOT_SAVE:
            return self._handle_snapshot_save(session, client, conn, envelope.payload)
        if kind is Kind.SNAPSHOT_LIST:
            return self._handle_snapshot_list(session, conn)
        if kind is Kind.SNAPSHOT_RESTORE:
            return self._handle_snapshot_restore(session, client, conn, envelope.payload)
        if kind is Kind.MODE_SET:
            return self._handle_mode_set(session, conn, envelope.payload)
        raise MalformedEnvelope(f"unexpected kind {kind.value}")

    def _membership(self, conn: _Connection) -> tuple[SessionRecord, str]:
        if conn.session is None or conn.client is None:
            raise NotAMember("say HELLO first")
        return self.sessions[conn.session], conn.client

    # -- HELLO ---------------------------------------------------------------

    def _handle_hello(self, conn: _Connection, envelope: Envelope) -> list[Send]:
        if conn.session is not None:
            raise MalformedEnvelope("connection already joined a session")
        payload = envelope.payload
        session_id = validate_actor_id(envelope.session)
        client_id = validate_actor_id(envelope.sender)

        session = self.sessions.get(session_id)
        created = False
        if session is None:
            if payload.get("create", True) is False:
                raise UnknownSession(f"no session {session_id!r}")
            mode = self._parse_mode(payload.get("mode") or "collab")
            session = SessionRecord(id=session_id, mode=mode)
            self.sessions[session_id] = session
            self.connected[session_id] = {}
            created = True

        live = self.connected.setdefault(session_id, {})
        if client_id in live:
            raise DuplicateClientId(f"client {client_id!r} is already connected")

        role = self._resolve_role(session, client_id, payload.get("role"), created)
        session.roles[client_id] = role

        registered = self._register_substructures(session, payload.get("substructures", []))

        conn.session = session_id
        conn.client = client_id
        live[client_id] = conn.conn_id

        sends = [
            self._send(
                conn,
                Kind.WELCOME,
                session_id,
                {
                    "mode": session.mode.value,
                    "role": role.value,
                    "topology": codec.topology_to_json(session.view_for(client_id)),
                    "members": {c: r.value for c, r in sorted(session.roles.items())},
                },
            )
        ]
        if registered:
            sends += self._push_full_state(session, exclude=client_id)
        self._persist(session)
        return sends

    def _parse_mode(self, token: Any) -> SessionMode:
        try:
            return SessionMode(token)
        except ValueError:
            raise MalformedEnvelope(f"unknown mode {token!r}") from None

    def _parse_role(self, token: Any) -> Role | None:
        if token is None:
            return None
        try:
            return Role(token)
        except ValueError:
            raise MalformedEnvelope(f"unknown role {token!r}") from None

    def _resolve_role(
        self, session: SessionRecord, client: str, token: Any, created: bool
    ) -> Role:
        desired = self._parse_role(token)
        if session.mode is SessionMode.COLLABORATION:
            if desired not in (None, Role.PEER):
                raise RoleModeMismatch(
                    f"role {desired.value} is not valid in collab sessions"
                )
            return Role.PEER
        # presentation
        if created and desired is not Role.PRESENTER:
            raise RoleModeMismatch(
                "the first client in a presentation session must request presenter"
            )
        if desired is Role.PEER:
            raise RoleModeMismatch("role peer is not valid in present sessions")
        if desired is Role.PRESENTER:
            current = session.presenter()
            if current is not None and current != client:
                raise SecondPresenter(f"{current!r} already presents")
            return Role.PRESENTER
        return session.roles.get(client, Role.FOLLOWER)

    def _register_substructures(self, session: SessionRecord, items: Any) -> bool:
        if not isinstance(items, list):
            raise MalformedEnvelope("substructures must be a list")
        registered = False
        for item in items:
            try:
                sub = codec.substructure_from_json(item)
            except CorruptFile as exc:
                raise MalformedEnvelope(f"bad substructure: {exc.detail}") from exc
            for state in sub.arms.values():
                session.clock = observe(session.clock, state.stamp)
            if sub.id in session.topology.substructures:
                continue  # rejoining device; authoritative copy wins
            session.topology.substructures[sub.id] = sub.copy()
            session.initial_topology.substructures[sub.id] = sub.copy()
            for shadow in session.shadows.values():
                shadow.substructures[sub.id] = sub.copy()
            registered = True
        if registered:
            check_topology(session.topology)
        return registered

    def _push_full_state(self, session: SessionRecord, exclude: str) -> list[Send]:
        sends = []
        for client, conn_id in sorted(self.connected.get(session.id, {}).items()):
            if client == exclude:
                continue
            conn = self.conns[conn_id]
            sends.append(
                self._send(
                    conn,
                    Kind.FULL_STATE,
                    session.id,
                    {
                        "topology": codec.topology_to_json(session.view_for(client)),
                        "view": "own",
                    },
                )
            )
        return sends

    # -- UPDATE ----------------------------------------------------------------

    def _handle_update(
        self, session: SessionRecord, client: str, conn: _Connection, payload: dict
    ) -> list[Send]:
        updates = self._parse_updates(payload.get("updates", []))
        joins = self._parse_joint_decls(payload.get("joins", []))
        unjoins = self._parse_joint_decls(payload.get("unjoins", []))
        # the session clock tracks every stamp it sees, so hub-minted stamps
        # (snapshot restores) always order after all known edits
        for update in updates:
            session.clock = observe(session.clock, update.stamp)
        role = session.roles[client]
        decision = (
            route_update(session.mode, role, updates[0])
            if updates
            else (
                RoutingDecision.LOCAL_ONLY
                if role is Role.FOLLOWER
                else RoutingDecision.BROADCAST_ALL_OTHERS
            )
        )

        sends: list[Send] = []
        if decision is RoutingDecision.LOCAL_ONLY:
            shadow = session.shadows.get(client)
            if shadow is None:
                shadow = session.topology.copy()
            shadow, unknown, applied_joins, failed_joins = self._apply_edits(
                shadow, updates, joins, unjoins
            )
            session.shadows[client] = shadow
            if updates or joins or unjoins:
                session.dirty.add(client)
            if unknown:
                sends.append(self._unknown_error(conn, unknown))
            sends += self._failed_join_errors(conn, failed_joins)
            self._persist(session)
            return sends

        topology, unknown, applied_joins, failed_joins = self._apply_edits(
            session.topology, updates, joins, unjoins
        )
        session.topology = topology
        applied = [u for u in updates if u not in unknown]
        session.log.extend(applied)
        # shadows track every broadcast edit; follower stamps win where newer
        for follower, shadow in list(session.shadows.items()):
            merged, _, _, _ = self._apply_edits(shadow, applied, joins, unjoins)
            session.shadows[follower] = merged
        if unknown:
            sends.append(self._unknown_error(conn, unknown))
        sends += self._failed_join_errors(conn, failed_joins)
        body = {
            "updates": [u.to_json() for u in applied],
            "joins": [codec.joint_to_json(j) for j in applied_joins],
            "unjoins": [codec.joint_to_json(j) for j in unjoins],
        }
        sends += self._fan_out(session, origin=client, kind=Kind.UPDATE, payload=body)
        self._persist(session)
        return sends

    def _failed_join_errors(self, conn: _Connection, failed: list) -> list[Send]:
        """Tell the declaring client which joins could not be made, so it can
        retract them instead of re-sending forever."""
        sends = []
        for (a, b), exc in failed:
            payload = error_payload(exc.code, exc.detail)
            payload["join"] = {
                "a": [a[0], a[1].value],
                "b": [b[0], b[1].value],
            }
            sends.append(self._send(conn, Kind.ERROR, conn.session or "", payload))
        return sends

    def _apply_edits(
        self,
        topology: AssemblyTopology,
        updates: list[ArmUpdate],
        joins: list[tuple[tuple[str, Arm], tuple[str, Arm]]],
        unjoins: list[tuple[tuple[str, Arm], tuple[str, Arm]]],
    ) -> tuple[AssemblyTopology, list[ArmUpdate], list, list]:
        outcome = merge_topology(topology, updates)
        result = outcome.topology
        for a, b in unjoins:
            joint = result.joint_at(*a)
            if joint is not None and joint.touches(*b):
                result.joints.discard(joint)
        applied_joins = []
        failed_joins = []
        for a, b in joins:
            try:
                result = add_joint(result, a, b)
                applied_joins.append(result.joint_at(*a))
            except ShapeError as exc:
                failed_joins.append(((a, b), exc))
        result = prune_dead_joints(result)
        return result, outcome.unknown, applied_joins, failed_joins

    def _parse_updates(self, items: Any) -> list[ArmUpdate]:
        if not isinstance(items, list):
            raise MalformedEnvelope("updates must be a list")
        try:
            return [ArmUpdate.from_json(item) for item in items]
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedEnvelope(f"bad update: {exc}") from exc

    def _parse_joint_decls(self, items: Any) -> list:
        if not isinstance(items, list):
            raise MalformedEnvelope("joint declarations must be a list")
        decls = []
        for item in items:
            try:
                a, b = item["a"], item["b"]
                decls.append(
                    (
                        (str(a[0]), codec.arm_from_key(a[1])),
                        (str(b[0]), codec.arm_from_key(b[1])),
                    )
                )
            except (KeyError, TypeError, IndexError, CorruptFile) as exc:
                raise MalformedEnvelope(f"bad joint declaration: {exc}") from exc
        return decls

    def _unknown_error(self, conn: _Connection, unknown: list[ArmUpdate]) -> Send:
        ids = sorted({u.substructure for u in unknown})
        return self._error(
            conn, ShapeError(f"unknown substructures: {', '.join(ids)}"), code="UnknownSubstructure"
        )

    # -- FULL_STATE -------------------------------------------------------------

    def _handle_full_state(
        self, session: SessionRecord, client: str, conn: _Connection, payload: dict
    ) -> list[Send]:
        view = payload.get("view", "authoritative")
        topology = session.view_for(client) if view == "own" else session.topology
        return [
            self._send(
                conn,
                Kind.FULL_STATE,
                session.id,
                {"topology": codec.topology_to_json(topology), "view": view},
            )
        ]

    # -- snapshots ----------------------------------------------------------------

    def _settled_view(self, topology: AssemblyTopology) -> AssemblyTopology:
        """The commanded shape: every extension read as its target."""
        settled = topology.copy()
        for sub in settled.substructures.values():
            for state in sub.arms.values():
                state.extension = state.target
        return settled

    def _handle_snapshot_save(
        self, session: SessionRecord, client: str, conn: _Connection, payload: dict
    ) -> list[Send]:
        label = str(payload.get("label", ""))
        source = session.view_for(client)
        session.snapshot_seq += 1
        snapshot = snapshot_of(
            self._settled_view(source),
            label,
            self.now_fn(),
            snapshot_id=f"snap-{session.snapshot_seq}",
        )
        session.snapshots.append(snapshot)
        self._persist(session)
        return [
            self._send(
                conn,
                Kind.SNAPSHOT_SAVE,
                session.id,
                {
                    "snapshot_id": snapshot.snapshot_id,
                    "label": snapshot.label,
                    "created_at": snapshot.created_at,
                },
            )
        ]

    def _handle_snapshot_list(self, session: SessionRecord, conn: _Connection) -> list[Send]:
        return [
            self._send(
                conn,
                Kind.SNAPSHOT_LIST,
                session.id,
                {
                    "snapshots": [
                        {
                            "snapshot_id": s.snapshot_id,
                            "label": s.label,
                            "created_at": s.created_at,
                        }
                        for s in session.snapshots
                    ]
                },
            )
        ]

    def _handle_snapshot_restore(
        self, session: SessionRecord, client: str, conn: _Connection, payload: dict
    ) -> list[Send]:
        snapshot_id = str(payload.get("snapshot_id", ""))
        snapshot = next(
            (s for s in session.snapshots if s.snapshot_id == snapshot_id), None
        )
        if snapshot is None:
            raise UnknownSnapshot(f"no snapshot {snapshot_id!r}")
        role = session.roles[client]

        if role is Role.FOLLOWER:
            base = session.shadows.get(client)
            if base is None:
                base = session.topology.copy()
            old_joints = set(base.joints)
            restored = restore_targets(base, snapshot, session.clock)
            session.clock = restored.clock
            session.shadows[client] = restored.topology
            body = self._restore_body(restored, old_joints)
            sends = [self._addressed(session, client, Kind.UPDATE, body)]
        else:
            old_joints = set(session.topology.joints)
            restored = restore_targets(session.topology, snapshot, session.clock)
            session.clock = restored.clock
            session.topology = restored.topology
            restore_updates = self._restore_updates(restored)
            session.log.extend(restore_updates)
            body = self._restore_body(restored, old_joints)
            for follower in list(session.shadows):
                merged, _, _, _ = self._apply_edits(
                    session.shadows[follower], restore_updates, [], []
                )
                merged.joints = set(restored.topology.joints)
                session.shadows[follower] = merged
            sends = [
                self._addressed(session, member, Kind.UPDATE, body)
                for member in self.members_online(session.id)
            ]
        sends.append(
            self._send(
                conn,
                Kind.SNAPSHOT_RESTORE,
                session.id,
                {"snapshot_id": snapshot_id, "updates": len(restored.updates)},
            )
        )
        self._persist(session)
        return sends

    def _restore_updates(self, restored) -> list[ArmUpdate]:
        topology = restored.topology
        return [
            ArmUpdate(
                substructure=sid,
                arm=arm,
                target=target,
                jointed=jointed,
                stamp=topology.substructures[sid].arms[arm].stamp,
            )
            for sid, arm, target, jointed in restored.updates
        ]

    def _restore_body(self, restored, old_joints: set) -> dict:
        new_joints = restored.topology.joints
        return {
            "updates": [u.to_json() for u in self._restore_updates(restored)],
            "joins": [codec.joint_to_json(j) for j in sorted(
                new_joints - old_joints, key=lambda j: (j.a[0], j.a[1].value)
            )],
            "unjoins": [codec.joint_to_json(j) for j in sorted(
                old_joints - new_joints, key=lambda j: (j.a[0], j.a[1].value)
            )],
        }

    # -- MODE_SET -------------------------------------------------------------------

    def _handle_mode_set(
        self, session: SessionRecord, conn: _Connection, payload: dict
    ) -> list[Send]:
        mode = self._parse_mode(payload.get("mode"))
        roles_json = payload.get("roles", {})
        if not isinstance(roles_json, dict):
            raise MalformedEnvelope("roles must be an object")
        roles: dict[str, Role] = {}
        for client_id, token in roles_json.items():
            role = self._parse_role(token)
            if role is None:
                raise MalformedEnvelope("roles must name concrete roles")
            roles[client_id] = role
        for client_id in session.roles:
            if client_id not in roles:
                raise RoleModeMismatch(f"roles must cover member {client_id!r}")
        presenter_count = sum(1 for r in roles.values() if r is Role.PRESENTER)
        if mode is SessionMode.COLLABORATION:
            if any(r is not Role.PEER for r in roles.values()):
                raise RoleModeMismatch("collab sessions contain only peers")
        else:
            if presenter_count != 1:
                raise RoleModeMismatch("present sessions need exactly one presenter")
            if any(r is Role.PEER for r in roles.values()):
                raise RoleModeMismatch("role peer is not valid in present sessions")
        session.mode = mode
        session.roles = roles
        session.shadows.clear()
        session.dirty.clear()
        body = {"mode": mode.value, "roles": {c: r.value for c, r in sorted(roles.items())}}
        sends = [
            self._addressed(session, member, Kind.MODE_SET, body)
            for member in self.members_online(session.id)
        ]
        self._persist(session)
        return sends

    # -- heartbeat -------------------------------------------------------------------

    def heartbeat(self) -> tuple[list[Send], list[str]]:
        """PING every live connection; returns (sends, reaped connection ids)."""
        sends: list[Send] = []
        reaped: list[str] = []
        for conn_id, conn in sorted(self.conns.items()):
            if conn.session is None:
                continue
            if conn.unanswered_pings >= MISSED_PONGS_LIMIT:
                reaped.append(conn_id)
                continue
            conn.unanswered_pings += 1
            sends.append(
                self._send(
                    conn,
                    Kind.PING,
                    conn.session,
                    {"seen": conn.inbox.last_seq, "lost": conn.inbox.lost},
                )
            )
        for conn_id in reaped:
            self.on_disconnect(conn_id)
        return sends, reaped

    # -- helpers ------------------------------------------------------------------------

    def _fan_out(
        self, session: SessionRecord, origin: str, kind: Kind, payload: dict
    ) -> list[Send]:
        sends = []
        for client, conn_id in sorted(self.connected.get(session.id, {}).items()):
            if client == origin:
                continue
            conn = self.conns[conn_id]
            sends.append((conn_id, conn.outbox.stamp(kind, session.id, origin, payload)))
        return sends

    def _addressed(
        self, session: SessionRecord, client: str, kind: Kind, payload: dict
    ) -> Send:
        conn_id = self.connected[session.id][client]
        conn = self.conns[conn_id]
        return (conn_id, conn.outbox.stamp(kind, session.id, HUB_SENDER, payload))

    def _send(self, conn: _Connection, kind: Kind, session: str, payload: dict) -> Send:
        return (conn.conn_id, conn.outbox.stamp(kind, session, HUB_SENDER, payload))

    def _error(self, conn: _Connection, exc: ShapeError, code: str | None = None) -> Send:
        payload = error_payload(code or exc.code, exc.detail)
        return self._send(conn, Kind.ERROR, conn.session or "", payload)

    # -- persistence -----------------------------------------------------------------------

    def _session_path(self, session_id: str) -> str:
        assert self.data_dir is not None
        return os.path.join(self.data_dir, "sessions", f"{session_id}.json")

    def _persist(self, session: SessionRecord) -> None:
        if self.data_dir is None:
            return
        persist_session(session, self._session_path(session.id))

    def _load_all(self) -> None:
        sessions_dir = os.path.join(self.data_dir, "sessions")
        if not os.path.isdir(sessions_dir):
            return
        for name in sorted(os.listdir(sessions_dir)):
            if not name.endswith(".json"):
                continue
            session = load_session(os.path.join(sessions_dir, name))
            self.sessions[session.id] = session
            self.connected[session.id] = {}


def session_to_json(session: SessionRecord) -> dict:
    return {
        "id": session.id,
        "mode": session.mode.value,
        "roles": {c: r.value for c, r in sorted(session.roles.items())},
        "topology": codec.topology_to_json(session.topology),
        "snapshots": [codec.snapshot_to_json(s) for s in session.snapshots],
        "log": [u.to_json() for u in session.log],
        "shadows": {
            c: codec.topology_to_json(t) for c, t in sorted(session.shadows.items())
        },
        "dirty": sorted(session.dirty),
        "clock": session.clock.to_json(),
        "snapshot_seq": session.snapshot_seq,
        "initial_topology": codec.topology_to_json(session.initial_topology),
    }


def persist_session(session: SessionRecord, path: str) -> None:
    """Atomic write: temp file in the same directory, then rename."""
    os.makedirs(os.path.dirname(path), exist_ok=True)
    text = codec.canonical_dumps(session_to_json(session))
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as handle:
        handle.write(text)
    os.replace(tmp, path)


def load_session(path: str) -> SessionRecord:
    """Parse and validate a persisted session; CorruptFile names the first problem."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise CorruptFile(f"unreadable session file: {exc}") from exc
    if not isinstance(data, dict):
        raise CorruptFile("session file must hold a JSON object")
    try:
        mode = SessionMode(data.get("mode"))
    except ValueError:
        raise CorruptFile(f"unknown mode {data.get('mode')!r}") from None
    roles: dict[str, Role] = {}
    for client, token in dict(data.get("roles", {})).items():
        try:
            roles[client] = Role(token)
        except ValueError:
            raise CorruptFile(f"unknown role {token!r}") from None
    session = SessionRecord(
        id=str(data.get("id", "")),
        mode=mode,
        roles=roles,
        topology=codec.topology_from_json(data.get("topology", {})),
        snapshots=[codec.snapshot_from_json(s) for s in data.get("snapshots", [])],
        log=[ArmUpdate.from_json(u) for u in data.get("log", [])],
        shadows={
            c: codec.topology_from_json(t)
            for c, t in dict(data.get("shadows", {})).items()
        },
        dirty=set(data.get("dirty", [])),
        clock=LamportClock.from_json(data.get("clock", {"counter": 0, "actor": HUB_SENDER})),
        snapshot_seq=int(data.get("snapshot_seq", 0)),
        initial_topology=codec.topology_from_json(
            data.get("initial_topology", {"substructures": [], "joints": []})
        ),
    )
    if not session.id:
        raise CorruptFile("session id missing")
    try:
        check_topology(session.topology)
        for shadow in session.shadows.values():
            check_topology(shadow)
    except ShapeError as exc:
        raise CorruptFile(exc.detail) from exc
    if mode is SessionMode.PRESENTATION:
        if sum(1 for r in session.roles.values() if r is Role.PRESENTER) != 1:
            raise CorruptFile("present sessions need exactly one presenter")
    return session
