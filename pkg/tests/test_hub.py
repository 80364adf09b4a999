import json

import pytest

from teleshift import codec
from teleshift.clock import VersionStamp
from teleshift.hub import Hub, load_session
from teleshift.model import Arm, SubstructureState
from teleshift.protocol import Envelope, Kind, Outbox
from teleshift.sync import ArmUpdate, merge_topology


class Client:
    """Drives the transport-free hub like one connection would."""

    def __init__(self, hub, client_id, session, conn_id=None):
        self.hub = hub
        self.client_id = client_id
        self.session = session
        self.conn_id = conn_id or f"conn-{client_id}"
        self.outbox = Outbox()
        hub.on_connect(self.conn_id)

    def send(self, kind, payload):
        env = self.outbox.stamp(kind, self.session, self.client_id, payload)
        return self.hub.on_envelope(self.conn_id, env)

    def hello(self, mode="collab", role=None, substructures=None, create=True):
        if substructures is None:
            substructures = [codec.substructure_to_json(SubstructureState(self.client_id))]
        return self.send(
            Kind.HELLO,
            {"mode": mode, "role": role, "substructures": substructures, "create": create},
        )

    def update(self, arm, target, lamport, jointed=False, sub=None, joins=None):
        payload = {
            "updates": [
                ArmUpdate(
                    sub or self.client_id,
                    arm,
                    target,
                    jointed,
                    VersionStamp(lamport, self.client_id),
                ).to_json()
            ]
        }
        if joins:
            payload["joins"] = joins
        return self.send(Kind.UPDATE, payload)


def only_kind(sends, kind):
    return [env for _, env in sends if env.kind is kind]


def test_first_hello_creates_session_and_welcomes():
    hub = Hub()
    sends = Client(hub, "c1", "s1").hello()
    (welcome,) = only_kind(sends, Kind.WELCOME)
    assert welcome.payload["role"] == "peer"
    assert welcome.payload["mode"] == "collab"
    subs = welcome.payload["topology"]["substructures"]
    assert [s["id"] for s in subs] == ["c1"]
    assert welcome.payload["members"] == {"c1": "peer"}


def test_duplicate_client_id_rejected():
    hub = Hub()
    Client(hub, "c1", "s1").hello()
    sends = Client(hub, "c1", "s1", conn_id="other").hello()
    (err,) = only_kind(sends, Kind.ERROR)
    assert err.payload["code"] == "DuplicateClientId"


def test_reconnect_after_disconnect_is_allowed():
    hub = Hub()
    first = Client(hub, "c1", "s1")
    first.hello()
    hub.on_disconnect(first.conn_id)
    sends = Client(hub, "c1", "s1", conn_id="again").hello()
    assert only_kind(sends, Kind.WELCOME)


def test_presentation_needs_presenter_first():
    hub = Hub()
    sends = Client(hub, "c1", "p1").hello(mode="present")
    (err,) = only_kind(sends, Kind.ERROR)
    assert err.payload["code"] == "RoleModeMismatch"


def test_second_presenter_rejected():
    hub = Hub()
    Client(hub, "t", "p1").hello(mode="present", role="presenter")
    sends = Client(hub, "t2", "p1").hello(mode="present", role="presenter")
    (err,) = only_kind(sends, Kind.ERROR)
    assert err.payload["code"] == "SecondPresenter"


def test_unknown_session_when_create_disabled():
    hub = Hub()
    sends = Client(hub, "ctl", "nope").hello(substructures=[], create=False)
    (err,) = only_kind(sends, Kind.ERROR)
    assert err.payload["code"] == "UnknownSession"


def test_peer_update_fans_out_to_other_members_only():
    hub = Hub()
    c1, c2, c3 = (Client(hub, f"c{i}", "s1") for i in (1, 2, 3))
    for c in (c1, c2, c3):
        c.hello()
    sends = c1.update(Arm.POS_X, 25.0, lamport=1)
    fanned = only_kind(sends, Kind.UPDATE)
    assert {conn for conn, env in sends if env.kind is Kind.UPDATE} == {
        c2.conn_id,
        c3.conn_id,
    }
    # payload preserved: exact stamps and values, sender is the origin
    for env in fanned:
        assert env.sender == "c1"
        assert env.payload["updates"][0]["target"] == 25.0
        assert env.payload["updates"][0]["stamp"] == {"lamport": 1, "actor": "c1"}
    topo = hub.sessions["s1"].topology
    assert topo.substructures["c1"].arms[Arm.POS_X].target == 25.0


def test_follower_update_stays_local_and_shadows():
    hub = Hub()
    teacher = Client(hub, "t", "p1")
    teacher.hello(mode="present", role="presenter")
    student = Client(hub, "s", "p1")
    student.hello(mode="present")
    sends = student.update(Arm.POS_Y, 42.0, lamport=1, sub="s")
    assert only_kind(sends, Kind.UPDATE) == []
    session = hub.sessions["p1"]
    assert session.topology.substructures["s"].arms[Arm.POS_Y].target == 0.0
    assert session.shadows["s"].substructures["s"].arms[Arm.POS_Y].target == 42.0
    assert "s" in session.dirty


def test_presenter_update_reaches_followers_and_their_shadows():
    hub = Hub()
    teacher = Client(hub, "t", "p1")
    teacher.hello(mode="present", role="presenter")
    student = Client(hub, "s", "p1")
    student.hello(mode="present")
    student.update(Arm.POS_Y, 42.0, lamport=1, sub="s")  # diverge first
    sends = teacher.update(Arm.POS_X, 30.0, lamport=5, sub="t")
    assert {conn for conn, env in sends if env.kind is Kind.UPDATE} == {student.conn_id}
    session = hub.sessions["p1"]
    shadow = session.shadows["s"]
    assert shadow.substructures["t"].arms[Arm.POS_X].target == 30.0  # tracked
    assert shadow.substructures["s"].arms[Arm.POS_Y].target == 42.0  # kept


def test_stale_seq_rejected_without_state_change():
    hub = Hub()
    client = Client(hub, "c1", "s1")
    client.hello()
    client.update(Arm.POS_X, 10.0, lamport=1)
    replay = Envelope(Kind.UPDATE, "s1", "c1", 1, {"updates": []})
    sends = hub.on_envelope(client.conn_id, replay)
    (err,) = only_kind(sends, Kind.ERROR)
    assert err.payload["code"] == "StaleSeq"
    assert hub.sessions["s1"].topology.substructures["c1"].arms[Arm.POS_X].target == 10.0


def test_non_member_must_hello_first():
    hub = Hub()
    hub.on_connect("nc")
    sends = hub.on_envelope("nc", Envelope(Kind.UPDATE, "s1", "x", 1, {"updates": []}))
    (err,) = only_kind(sends, Kind.ERROR)
    assert err.payload["code"] == "NotAMember"


def test_full_state_equals_fold_of_update_log():
    hub = Hub()
    client = Client(hub, "c1", "s1")
    client.hello()
    initial = hub.sessions["s1"].topology.copy()
    for i in range(10):
        client.update(Arm(list(Arm)[i % 6]), float(i + 1), lamport=i + 1)
    sends = client.send(Kind.FULL_STATE_REQUEST, {})
    (reply,) = only_kind(sends, Kind.FULL_STATE)
    # oracle: replay the applied-update log offline over the initial state
    replayed = merge_topology(initial, hub.sessions["s1"].log).topology
    assert reply.payload["topology"] == codec.topology_to_json(replayed)


def test_full_state_deterministic_between_requests():
    hub = Hub()
    client = Client(hub, "c1", "s1")
    client.hello(substructures=[])
    first = only_kind(client.send(Kind.FULL_STATE_REQUEST, {}), Kind.FULL_STATE)
    second = only_kind(client.send(Kind.FULL_STATE_REQUEST, {}), Kind.FULL_STATE)
    assert first[0].payload == second[0].payload
    assert first[0].payload["topology"]["substructures"] == []


def test_full_state_for_follower_is_presenter_visible():
    hub = Hub()
    teacher = Client(hub, "t", "p1")
    teacher.hello(mode="present", role="presenter")
    student = Client(hub, "s", "p1")
    student.hello(mode="present")
    student.update(Arm.POS_Y, 42.0, lamport=1, sub="s")
    (auth,) = only_kind(student.send(Kind.FULL_STATE_REQUEST, {}), Kind.FULL_STATE)
    topo = codec.topology_from_json(auth.payload["topology"])
    assert topo.substructures["s"].arms[Arm.POS_Y].target == 0.0
    (own,) = only_kind(
        student.send(Kind.FULL_STATE_REQUEST, {"view": "own"}), Kind.FULL_STATE
    )
    shadow = codec.topology_from_json(own.payload["topology"])
    assert shadow.substructures["s"].arms[Arm.POS_Y].target == 42.0


def test_snapshot_save_then_list():
    hub = Hub(now_fn=lambda: 777)
    client = Client(hub, "c1", "s1")
    client.hello()
    (saved,) = only_kind(client.send(Kind.SNAPSHOT_SAVE, {"label": "v1"}), Kind.SNAPSHOT_SAVE)
    assert saved.payload == {"snapshot_id": "snap-1", "label": "v1", "created_at": 777}
    (listing,) = only_kind(client.send(Kind.SNAPSHOT_LIST, {}), Kind.SNAPSHOT_LIST)
    assert listing.payload["snapshots"] == [
        {"snapshot_id": "snap-1", "label": "v1", "created_at": 777}
    ]


def test_restore_unknown_snapshot():
    hub = Hub()
    client = Client(hub, "c1", "s1")
    client.hello()
    sends = client.send(Kind.SNAPSHOT_RESTORE, {"snapshot_id": "snap-9"})
    (err,) = only_kind(sends, Kind.ERROR)
    assert err.payload["code"] == "UnknownSnapshot"


def test_snapshot_captures_commanded_shape_and_restore_fans_out():
    hub = Hub()
    c1, c2 = Client(hub, "c1", "s1"), Client(hub, "c2", "s1")
    c1.hello()
    c2.hello()
    c1.update(Arm.POS_X, 33.0, lamport=1)
    c1.send(Kind.SNAPSHOT_SAVE, {"label": "shape"})
    c1.update(Arm.POS_X, 5.0, lamport=2)
    sends = c1.send(Kind.SNAPSHOT_RESTORE, {"snapshot_id": "snap-1"})
    updates = only_kind(sends, Kind.UPDATE)
    # restore reaches every member, requester included
    assert {conn for conn, env in sends if env.kind is Kind.UPDATE} == {
        c1.conn_id,
        c2.conn_id,
    }
    restored = {
        (u["substructure"], u["arm"]): u["target"]
        for u in updates[0].payload["updates"]
    }
    assert restored[("c1", "+x")] == 33.0
    assert hub.sessions["s1"].topology.substructures["c1"].arms[Arm.POS_X].target == 33.0


def test_student_restore_leaves_teacher_untouched():
    hub = Hub()
    teacher = Client(hub, "t", "p1")
    teacher.hello(mode="present", role="presenter")
    student = Client(hub, "s", "p1")
    student.hello(mode="present")
    student.update(Arm.POS_Y, 20.0, lamport=1, sub="s")
    student.send(Kind.SNAPSHOT_SAVE, {"label": "design"})
    student.update(Arm.POS_Y, 55.0, lamport=2, sub="s")
    sends = student.send(Kind.SNAPSHOT_RESTORE, {"snapshot_id": "snap-1"})
    # only the student hears about it
    assert {conn for conn, env in sends if env.kind is Kind.UPDATE} == {student.conn_id}
    session = hub.sessions["p1"]
    assert session.shadows["s"].substructures["s"].arms[Arm.POS_Y].target == 20.0
    assert session.topology.substructures["s"].arms[Arm.POS_Y].target == 0.0


def test_join_declaration_creates_joint_and_fans_out():
    hub = Hub()
    c1, c2 = Client(hub, "c1", "s1"), Client(hub, "c2", "s1")
    c1.hello()
    c2.hello()
    sends = c1.send(
        Kind.UPDATE,
        {
            "updates": [
                ArmUpdate("c1", Arm.POS_X, 0.0, True, VersionStamp(1, "c1")).to_json(),
                ArmUpdate("c2", Arm.NEG_X, 0.0, True, VersionStamp(2, "c1")).to_json(),
            ],
            "joins": [{"a": ["c1", "+x"], "b": ["c2", "-x"]}],
        },
    )
    session = hub.sessions["s1"]
    assert len(session.topology.joints) == 1
    (fanned,) = only_kind(sends, Kind.UPDATE)
    assert fanned.payload["joins"] == [{"a": ["c1", "+x"], "b": ["c2", "-x"]}]


def test_conflicting_join_reported_to_sender():
    hub = Hub()
    c1, c2, c3 = (Client(hub, f"c{i}", "s1") for i in (1, 2, 3))
    for c in (c1, c2, c3):
        c.hello()
    c1.send(
        Kind.UPDATE,
        {
            "updates": [],
            "joins": [{"a": ["c1", "+x"], "b": ["c2", "-x"]}],
        },
    )
    sends = c3.send(
        Kind.UPDATE,
        {
            "updates": [],
            "joins": [{"a": ["c1", "+x"], "b": ["c3", "-x"]}],
        },
    )
    (err,) = only_kind(sends, Kind.ERROR)
    assert err.payload["code"] == "ArmOccupied"
    assert err.payload["join"] == {"a": ["c1", "+x"], "b": ["c3", "-x"]}


def test_unknown_substructure_updates_reported_rest_applied():
    hub = Hub()
    client = Client(hub, "c1", "s1")
    client.hello()
    sends = client.send(
        Kind.UPDATE,
        {
            "updates": [
                ArmUpdate("c1", Arm.POS_X, 7.0, False, VersionStamp(1, "c1")).to_json(),
                ArmUpdate("ghost", Arm.POS_X, 9.0, False, VersionStamp(1, "c1")).to_json(),
            ]
        },
    )
    (err,) = only_kind(sends, Kind.ERROR)
    assert err.payload["code"] == "UnknownSubstructure"
    assert "ghost" in err.payload["detail"]
    assert hub.sessions["s1"].topology.substructures["c1"].arms[Arm.POS_X].target == 7.0


def test_registration_pushes_full_state_to_existing_members():
    hub = Hub()
    c1 = Client(hub, "c1", "s1")
    c1.hello()
    c2 = Client(hub, "c2", "s1")
    sends = c2.hello()
    pushes = [
        (conn, env) for conn, env in sends if env.kind is Kind.FULL_STATE
    ]
    assert [conn for conn, _ in pushes] == [c1.conn_id]
    body_ids = [s["id"] for s in pushes[0][1].payload["topology"]["substructures"]]
    assert body_ids == ["c1", "c2"]


def test_heartbeat_pings_then_reaps_silent_connections():
    hub = Hub()
    client = Client(hub, "c1", "s1")
    client.hello()
    for _ in range(3):
        sends, reaped = hub.heartbeat()
        assert reaped == []
        (ping,) = only_kind(sends, Kind.PING)
        assert set(ping.payload) == {"seen", "lost"}
    sends, reaped = hub.heartbeat()
    assert reaped == [client.conn_id]
    assert "c1" not in hub.connected["s1"]


def test_pong_keeps_connection_alive():
    hub = Hub()
    client = Client(hub, "c1", "s1")
    client.hello()
    for _ in range(10):
        hub.heartbeat()
        client.send(Kind.PONG, {})
    _, reaped = hub.heartbeat()
    assert reaped == []


def test_mode_set_switches_session_and_broadcasts():
    hub = Hub()
    c1, c2 = Client(hub, "c1", "s1"), Client(hub, "c2", "s1")
    c1.hello()
    c2.hello()
    sends = c1.send(
        Kind.MODE_SET,
        {"mode": "present", "roles": {"c1": "presenter", "c2": "follower"}},
    )
    broadcast = only_kind(sends, Kind.MODE_SET)
    assert len(broadcast) == 2  # every connected member hears about it
    session = hub.sessions["s1"]
    assert session.mode.value == "present"
    assert session.roles["c1"].value == "presenter"
    # follower edits now stay local
    update_sends = c2.update(Arm.POS_X, 9.0, lamport=1, sub="c2")
    assert only_kind(update_sends, Kind.UPDATE) == []


def test_mode_set_rejects_bad_role_assignments():
    hub = Hub()
    c1, c2 = Client(hub, "c1", "s1"), Client(hub, "c2", "s1")
    c1.hello()
    c2.hello()
    for roles in (
        {"c1": "presenter", "c2": "presenter"},  # two presenters
        {"c1": "follower", "c2": "follower"},    # none
        {"c1": "presenter"},                     # c2 uncovered
    ):
        sends = c1.send(Kind.MODE_SET, {"mode": "present", "roles": roles})
        (err,) = only_kind(sends, Kind.ERROR)
        assert err.payload["code"] == "RoleModeMismatch"
    assert hub.sessions["s1"].mode.value == "collab"


# -- persistence -------------------------------------------------------------------


def test_persist_load_round_trip(tmp_path):
    hub = Hub(data_dir=str(tmp_path), now_fn=lambda: 5)
    c1, c2, c3 = (Client(hub, f"c{i}", "s1") for i in (1, 2, 3))
    for c in (c1, c2, c3):
        c.hello()
    c1.update(Arm.POS_X, 12.0, lamport=1)
    c2.update(Arm.NEG_Y, 30.0, lamport=1)
    c1.send(Kind.SNAPSHOT_SAVE, {"label": "v1"})
    session = hub.sessions["s1"]

    loaded = load_session(str(tmp_path / "sessions" / "s1.json"))
    assert loaded.id == session.id
    assert loaded.mode == session.mode
    assert loaded.roles == session.roles
    assert codec.topology_to_json(loaded.topology) == codec.topology_to_json(session.topology)
    assert [codec.snapshot_to_json(s) for s in loaded.snapshots] == [
        codec.snapshot_to_json(s) for s in session.snapshots
    ]
    assert [u.to_json() for u in loaded.log] == [u.to_json() for u in session.log]
    assert loaded.clock == session.clock
    assert loaded.snapshot_seq == session.snapshot_seq


def test_restarted_hub_serves_identical_full_state(tmp_path):
    hub = Hub(data_dir=str(tmp_path))
    client = Client(hub, "c1", "s1")
    client.hello()
    client.update(Arm.POS_Z, 44.0, lamport=3)
    (before,) = only_kind(client.send(Kind.FULL_STATE_REQUEST, {}), Kind.FULL_STATE)

    revived = Hub(data_dir=str(tmp_path))  # crash + restart
    again = Client(revived, "c1", "s1")
    again.hello()
    (after,) = only_kind(again.send(Kind.FULL_STATE_REQUEST, {}), Kind.FULL_STATE)
    assert after.payload["topology"] == before.payload["topology"]


def test_truncated_file_is_corrupt(tmp_path):
    hub = Hub(data_dir=str(tmp_path))
    Client(hub, "c1", "s1").hello()
    path = tmp_path / "sessions" / "s1.json"
    path.write_text(path.read_text()[: len(path.read_text()) // 2])
    with pytest.raises(codec.CorruptFile):
        load_session(str(path))


def test_five_arm_substructure_file_is_corrupt(tmp_path):
    hub = Hub(data_dir=str(tmp_path))
    Client(hub, "c1", "s1").hello()
    path = tmp_path / "sessions" / "s1.json"
    data = json.loads(path.read_text())
    del data["topology"]["substructures"][0]["arms"]["+z"]
    path.write_text(json.dumps(data))
    with pytest.raises(codec.CorruptFile) as exc:
        load_session(str(path))
    assert "arms must have 6 entries" in str(exc.value)


def test_persist_is_atomic_no_tmp_left_behind(tmp_path):
    hub = Hub(data_dir=str(tmp_path))
    Client(hub, "c1", "s1").hello()
    leftovers = [p.name for p in (tmp_path / "sessions").iterdir()]
    assert leftovers == ["s1.json"]
