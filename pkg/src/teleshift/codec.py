"""Canonical JSON encoding of the domain types.

One byte representation per value: keys sorted, no whitespace, arm keys
"+x".."-z". Used verbatim by the wire protocol, the hub's persistence files
and state hashing, so replicas can be compared byte-for-byte.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any

from .clock import VersionStamp
from .model import (
    Arm,
    ArmState,
    AssemblyTopology,
    Joint,
    ShapeError,
    Snapshot,
    SubstructureState,
)


class CorruptFile(ShapeError):
    code = "CorruptFile"


def canonical_dumps(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def canonical_hash(data: Any) -> str:
    return hashlib.sha256(canonical_dumps(data).encode("utf-8")).hexdigest()


def arm_state_to_json(state: ArmState) -> dict:
    return {
        "extension": state.extension,
        "target": state.target,
        "jointed": state.jointed,
        "stamp": state.stamp.to_json(),
    }


def substructure_to_json(sub: SubstructureState) -> dict:
    return {
        "id": sub.id,
        "arms": {arm.value: arm_state_to_json(sub.arms[arm]) for arm in Arm},
    }


def joint_to_json(joint: Joint) -> dict:
    return {
        "a": [joint.a[0], joint.a[1].value],
        "b": [joint.b[0], joint.b[1].value],
    }


def topology_to_json(topology: AssemblyTopology) -> dict:
    return {
        "substructures": [
            substructure_to_json(topology.substructures[sid])
            for sid in sorted(topology.substructures)
        ],
        "joints": sorted(
            (joint_to_json(j) for j in topology.joints),
            key=lambda j: (j["a"], j["b"]),
        ),
    }


def snapshot_to_json(snapshot: Snapshot) -> dict:
    return {
        "snapshot_id": snapshot.snapshot_id,
        "label": snapshot.label,
        "created_at": snapshot.created_at,
        "topology": topology_to_json(snapshot.topology),
    }


def topology_hash(topology: AssemblyTopology) -> str:
    return canonical_hash(topology_to_json(topology))


def _require(data: Any, key: str, kind: type) -> Any:
    if not isinstance(data, dict) or key not in data:
        raise CorruptFile(f"missing field {key!r}")
    value = data[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
        raise CorruptFile(f"field {key!r} must be {kind.__name__}")
    return value


def arm_state_from_json(data: Any) -> ArmState:
    stamp = _require(data, "stamp", dict)
    try:
        parsed = VersionStamp.from_json(stamp)
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptFile(f"bad stamp: {exc}") from exc
    return ArmState(
        extension=_require(data, "extension", float),
        target=_require(data, "target", float),
        jointed=_require(data, "jointed", bool),
        stamp=parsed,
    )


def arm_from_key(key: str) -> Arm:
    try:
        return Arm(key)
    except ValueError:
        raise CorruptFile(f"unknown arm key {key!r}") from None


def substructure_from_json(data: Any) -> SubstructureState:
    sub_id = _require(data, "id", str)
    arms_json = _require(data, "arms", dict)
    if len(arms_json) != len(Arm):
        raise CorruptFile("arms must have 6 entries")
    arms = {arm_from_key(k): arm_state_from_json(v) for k, v in arms_json.items()}
    try:
        return SubstructureState(sub_id, arms)
    except ShapeError as exc:
        raise CorruptFile(exc.detail) from exc


def joint_from_json(data: Any) -> Joint:
    a = _require(data, "a", list)
    b = _require(data, "b", list)
    if len(a) != 2 or len(b) != 2:
        raise CorruptFile("joint endpoints must be [id, arm] pairs")
    try:
        return Joint((str(a[0]), arm_from_key(a[1])), (str(b[0]), arm_from_key(b[1])))
    except ShapeError as exc:
        raise CorruptFile(exc.detail) from exc


def topology_from_json(data: Any) -> AssemblyTopology:
    subs_json = _require(data, "substructures", list)
    joints_json = _require(data, "joints", list)
    topology = AssemblyTopology()
    for sub_json in subs_json:
        sub = substructure_from_json(sub_json)
        if sub.id in topology.substructures:
            raise CorruptFile(f"duplicate substructure {sub.id!r}")
        topology.substructures[sub.id] = sub
    for joint_json in joints_json:
        joint = joint_from_json(joint_json)
        for sid, arm in joint.endpoints():
            if sid not in topology.substructures:
                raise CorruptFile(f"joint references unknown substructure {sid!r}")
            if not topology.substructures[sid].arms[arm].jointed:
                raise CorruptFile(
                    f"joint endpoint {sid!r}/{arm.value} has jointed=false"
                )
        conflicting = any(
            existing != joint and existing.touches(sid, arm)
            for existing in topology.joints
            for sid, arm in joint.endpoints()
        )
        if conflicting:
            raise CorruptFile("an arm appears in two joints")
        topology.joints.add(joint)
    return topology


def snapshot_from_json(data: Any) -> Snapshot:
    return Snapshot(
        snapshot_id=_require(data, "snapshot_id", str),
        label=_require(data, "label", str),
        created_at=_require(data, "created_at", int),
        topology=topology_from_json(_require(data, "topology", dict)),
    )
