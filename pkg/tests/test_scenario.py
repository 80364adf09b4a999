import pytest

from teleshift.model import Arm
from teleshift.protocol import Kind
from teleshift.scenario import (
    BadScenario,
    ScenarioRunner,
    ScenarioTimeout,
    parse_scenario,
)


def build(events, devices=2, mode="collab", net=None, session="s", **extra):
    doc = {
        "session": session,
        "mode": mode,
        "devices": devices,
        "net": net or {},
        "events": events,
        **extra,
    }
    return parse_scenario(doc)


def override(at, device, arm, mm):
    return {"at_ms": at, "device": device, "action": {"type": "override", "arm": arm, "mm": mm}}


def run(scenario):
    runner = ScenarioRunner(scenario)
    report = runner.run()
    return runner, report


# -- parsing ----------------------------------------------------------------------

def test_parse_rejects_unknown_device():
    with pytest.raises(BadScenario) as exc:
        build([override(0, "s-d9", "+x", 1)])
    assert "event 0" in str(exc.value)


def test_parse_rejects_unknown_action():
    with pytest.raises(BadScenario):
        build([{"at_ms": 0, "device": "s-d0", "action": {"type": "explode"}}])


def test_parse_rejects_presenter_in_collab():
    with pytest.raises(BadScenario):
        build([], mode="collab", presenter="s-d0")


def test_parse_defaults():
    scenario = build([], devices=3)
    assert scenario.device_names == ["s-d0", "s-d1", "s-d2"]
    assert scenario.params.tick_ms == 20
    assert scenario.heartbeat_ms == 100.0


# -- collaboration ------------------------------------------------------------------

def test_two_peers_converge_on_distinct_arms():
    scenario = build(
        [
            override(50, "s-d0", "+x", 30),
            override(60, "s-d1", "-y", 45),
            override(70, "s-d0", "+z", 12.5),
        ]
    )
    runner, report = run(scenario)
    assert report.converged
    assert report.divergences == []
    assert len(set(report.final_state_hash.values())) == 1
    d1 = runner.devices["s-d1"]
    # d1's physical counterpart of d0 actuated to the replicated target
    assert d1.replica.substructures["s-d0"].arms[Arm.POS_X].extension == 30.0
    assert d1.replica.substructures["s-d0"].arms[Arm.POS_X].target == 30.0


def test_same_arm_conflict_resolves_to_one_winner():
    scenario = build(
        [
            override(50, "s-d0", "+x", 10),
            override(50, "s-d1", "+x", 55),
        ]
    )
    runner, report = run(scenario)
    assert report.converged
    targets = {
        name: device.replica.substructures["s-d0"].arms[Arm.POS_X].target
        for name, device in runner.devices.items()
    }
    assert len(set(targets.values())) == 1


def test_join_replicates_to_all_and_embeds():
    from teleshift.geometry import embed_assembly

    scenario = build(
        [
            override(50, "s-d0", "+x", 20),
            override(60, "s-d1", "-x", 10),
            {"at_ms": 100, "device": "s-d0", "action": {"type": "join", "other_id": "s-d1", "arm": "+x"}},
        ]
    )
    runner, report = run(scenario)
    assert report.converged
    for device in runner.devices.values():
        assert len(device.replica.joints) == 1
        embedding = embed_assembly(device.replica, "s-d0")
        assert embedding.positions["s-d1"] == (130.0, 0.0, 0.0)
    hub_topology = runner.hub.sessions["s"].topology
    assert len(hub_topology.joints) == 1


def test_snapshot_save_and_restore_round_trip():
    scenario = build(
        [
            override(50, "s-d0", "+x", 40),
            {"at_ms": 400, "device": "s-d0", "action": {"type": "snapshot_save", "label": "v1"}},
            override(500, "s-d0", "+x", 5),
            override(550, "s-d1", "-z", 33),
            {"at_ms": 900, "device": "s-d1", "action": {"type": "snapshot_restore", "id": "snap-1"}},
        ]
    )
    runner, report = run(scenario)
    assert report.converged
    for device in runner.devices.values():
        assert device.replica.substructures["s-d0"].arms[Arm.POS_X].extension == 40.0
        # the -z edit came after the snapshot: restore commands it back to 0
        assert device.replica.substructures["s-d1"].arms[Arm.NEG_Z].extension == 0.0


def test_disconnect_recover_adopts_remote_updates():
    scenario = build(
        [
            {"at_ms": 50, "device": "s-d1", "action": {"type": "disconnect"}},
            override(100, "s-d0", "+x", 21),
            override(150, "s-d0", "+y", 42),
            {"at_ms": 400, "device": "s-d1", "action": {"type": "reconnect"}},
        ]
    )
    runner, report = run(scenario)
    assert report.converged
    d1 = runner.devices["s-d1"]
    assert d1.replica.substructures["s-d0"].arms[Arm.POS_X].target == 21.0
    assert d1.replica.substructures["s-d0"].arms[Arm.POS_Y].target == 42.0


def test_offline_override_wins_after_recovery():
    scenario = build(
        [
            {"at_ms": 50, "device": "s-d1", "action": {"type": "disconnect"}},
            override(100, "s-d0", "+x", 11),  # remote edit while d1 offline
            override(120, "s-d1", "+x", 59),  # hand edit on d1's own body... different sub
            override(130, "s-d1", "-z", 48),
            {"at_ms": 500, "device": "s-d1", "action": {"type": "reconnect"}},
        ]
    )
    runner, report = run(scenario)
    assert report.converged
    # the offline override re-stamps after recovery, so every replica adopts it
    for device in runner.devices.values():
        assert device.replica.substructures["s-d1"].arms[Arm.POS_X].target == 59.0
        assert device.replica.substructures["s-d1"].arms[Arm.NEG_Z].target == 48.0
    hub_topology = runner.hub.sessions["s"].topology
    assert hub_topology.substructures["s-d1"].arms[Arm.POS_X].target == 59.0


def test_chaos_profile_still_converges():
    events = [
        override(200 + 10 * i, f"s-d{i % 3}", arm, (7 * i) % 60)
        for i, arm in enumerate(
            ["+x", "-x", "+y", "-y", "+z", "-z"] * 5
        )
    ]
    scenario = build(
        events,
        devices=3,
        net={"latency_ms": 50, "jitter_ms": 20, "drop_prob": 0.1, "seed": 11},
    )
    runner, report = run(scenario)
    assert report.converged
    assert len(set(report.final_state_hash.values())) == 1


def test_determinism_byte_identical_reports():
    events = [
        override(100 + 7 * i, f"det-d{i % 2}", arm, (11 * i) % 60)
        for i, arm in enumerate(["+x", "-y", "+z"] * 4)
    ]
    doc = dict(
        session="det",
        mode="collab",
        devices=2,
        net={"latency_ms": 30, "jitter_ms": 15, "drop_prob": 0.05, "seed": 3},
        events=events,
    )
    runner_a = ScenarioRunner(parse_scenario(doc))
    runner_b = ScenarioRunner(parse_scenario(doc))
    first = runner_a.run()
    second = runner_b.run()
    assert first.encode() == second.encode()
    # full delivery traces are bit-identical too, not just the reports
    trace_a = [(e.at_ms, e.dest, e.envelope.encode()) for e in runner_a.trace]
    trace_b = [(e.at_ms, e.dest, e.envelope.encode()) for e in runner_b.trace]
    assert trace_a == trace_b


def test_blackout_times_out():
    scenario = build(
        [override(50, "s-d0", "+x", 30)],
        net={"drop_prob": 1.0},
        timeout_ms=5000,
    )
    with pytest.raises(ScenarioTimeout):
        ScenarioRunner(scenario).run()


# -- presentation -----------------------------------------------------------------------

def classroom(events, **extra):
    return build(events, devices=3, mode="present", session="class", **extra)


def test_follower_edits_stay_local():
    scenario = classroom(
        [
            override(50, "class-d0", "+x", 30),  # presenter demo
            override(100, "class-d1", "+y", 44),  # student design
        ]
    )
    runner, report = run(scenario)
    assert report.converged
    # nothing a follower sent was ever delivered to another client
    followers = {"class-d1", "class-d2"}
    for entry in runner.trace:
        if entry.envelope.sender in followers:
            assert entry.dest == entry.envelope.sender
    # presenter's replica never saw the student edit
    presenter = runner.devices["class-d0"]
    assert presenter.replica.substructures["class-d1"].arms[Arm.POS_Y].target == 0.0
    # but the student's own replica did, and it is listed as a follower diff
    student = runner.devices["class-d1"]
    assert student.replica.substructures["class-d1"].arms[Arm.POS_Y].target == 44.0
    diffs = [
        (d["device"], d["substructure"], d["arm"]) for d in report.follower_diffs
    ]
    assert diffs == [("class-d1", "class-d1", "+y")]


def test_presenter_edits_reach_followers():
    scenario = classroom([override(50, "class-d0", "-z", 26)])
    runner, report = run(scenario)
    assert report.converged
    for name in ("class-d1", "class-d2"):
        replica = runner.devices[name].replica
        assert replica.substructures["class-d0"].arms[Arm.NEG_Z].extension == 26.0


def test_follower_restore_clears_divergence():
    scenario = classroom(
        [
            override(50, "class-d0", "+x", 30),
            {"at_ms": 400, "device": "class-d0", "action": {"type": "snapshot_save", "label": "baseline"}},
            override(500, "class-d1", "+y", 44),
            {"at_ms": 800, "device": "class-d1", "action": {"type": "snapshot_restore", "id": "snap-1"}},
        ]
    )
    runner, report = run(scenario)
    assert report.converged
    assert report.follower_diffs == []  # back on the presenter's shape
    student = runner.devices["class-d1"]
    assert student.replica.substructures["class-d1"].arms[Arm.POS_Y].target == 0.0
    assert student.replica.substructures["class-d0"].arms[Arm.POS_X].target == 30.0


def test_trace_records_deliveries():
    scenario = build([override(50, "s-d0", "+x", 30)])
    runner, _ = run(scenario)
    kinds = {entry.envelope.kind for entry in runner.trace}
    assert Kind.WELCOME in kinds
    assert Kind.UPDATE in kinds
