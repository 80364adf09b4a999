"""Domain model: six-arm substructures, magnet joints, assemblies, snapshots.

A substructure is a cube-ish body with one linear extension arm per axis
direction. Arms carry the replicated registers (target, jointed flag, stamp)
plus the physical extension, which only actuation may move. Substructures
magnet-join tip-to-tip on opposite arms to form assemblies.
"""

from __future__ import annotations

import copy
import math
import uuid
from dataclasses import dataclass, field
from enum import Enum

from .clock import ZERO_STAMP, LamportClock, VersionStamp, stamp_next

# Body and arm dimensions (mm). Desk-scale defaults; arm travel matches a
# common motorized slide-potentiometer stroke.
BODY_EDGE_MM = 100.0
MAX_EXTENSION_MM = 60.0
GEOM_TOLERANCE_MM = 0.5

MAX_ID_LENGTH = 64


class ShapeError(Exception):
    """Base for domain errors. ``code`` is the wire/CLI error token."""

    code = "ShapeError"

    def __init__(self, detail: str = ""):
        super().__init__(detail or self.code)
        self.detail = detail or self.code


class UnknownSubstructure(ShapeError):
    code = "UnknownSubstructure"

    def __init__(self, substructure_id: str):
        super().__init__(f"unknown substructure {substructure_id!r}")
        self.substructure_id = substructure_id


class NonOpposingArms(ShapeError):
    code = "NonOpposingArms"


class ArmOccupied(ShapeError):
    code = "ArmOccupied"


class BadActorId(ShapeError):
    code = "BadActorId"


class Arm(Enum):
    """The six axis-aligned extension arms."""

    POS_X = "+x"
    NEG_X = "-x"
    POS_Y = "+y"
    NEG_Y = "-y"
    POS_Z = "+z"
    NEG_Z = "-z"

    @property
    def axis(self) -> int:
        """0, 1 or 2 for x, y, z."""
        return "xyz".index(self.value[1])

    @property
    def sign(self) -> int:
        return 1 if self.value[0] == "+" else -1


ARMS: tuple[Arm, ...] = tuple(Arm)

_OPPOSITE = {
    Arm.POS_X: Arm.NEG_X,
    Arm.NEG_X: Arm.POS_X,
    Arm.POS_Y: Arm.NEG_Y,
    Arm.NEG_Y: Arm.POS_Y,
    Arm.POS_Z: Arm.NEG_Z,
    Arm.NEG_Z: Arm.POS_Z,
}


def opposite_arm(arm: Arm) -> Arm:
    """The arm on the same axis with flipped sign. Involutive."""
    return _OPPOSITE[arm]


def clamp_extension(value: float) -> float:
    """Clamp a length to the physical arm travel [0, MAX_EXTENSION_MM]."""
    if not math.isfinite(value):
        raise ValueError(f"extension must be finite, got {value!r}")
    return min(max(float(value), 0.0), MAX_EXTENSION_MM)


def validate_actor_id(value: str) -> str:
    """Ids are non-empty printable strings of at most 64 chars."""
    if not isinstance(value, str) or not value or len(value) > MAX_ID_LENGTH:
        raise BadActorId(f"invalid id {value!r}")
    if not value.isprintable():
        raise BadActorId(f"id contains unprintable characters: {value!r}")
    return value


@dataclass(slots=True)
class ArmState:
    """One arm's registers: physical extension, commanded target, joint flag."""

    extension: float = 0.0
    target: float = 0.0
    jointed: bool = False
    stamp: VersionStamp = ZERO_STAMP

    def copy(self) -> ArmState:
        return ArmState(self.extension, self.target, self.jointed, self.stamp)


@dataclass(slots=True)
class SubstructureState:
    """A device's identity plus its six arm registers; the unit of replication."""

    id: str
    arms: dict[Arm, ArmState] = field(default_factory=dict)

    def __post_init__(self) -> None:
        validate_actor_id(self.id)
        if not self.arms:
            self.arms = {arm: ArmState() for arm in ARMS}
        if set(self.arms) != set(ARMS):
            raise ShapeError("arms must have 6 entries")

    def copy(self) -> SubstructureState:
        return SubstructureState(self.id, {a: s.copy() for a, s in self.arms.items()})


@dataclass(frozen=True, slots=True)
class Joint:
    """Magnet connection between two opposite-facing arm tips.

    Unordered: the endpoint pair is normalized so Joint(a,b) == Joint(b,a).
    """

    a: tuple[str, Arm]
    b: tuple[str, Arm]

    def __post_init__(self) -> None:
        a, b = self.a, self.b
        if a[0] == b[0]:
            raise ShapeError("joint endpoints must be distinct substructures")
        if b[1] is not opposite_arm(a[1]):
            raise NonOpposingArms(f"{a[1].value} cannot mate with {b[1].value}")
        if (b[0], b[1].value) < (a[0], a[1].value):
            object.__setattr__(self, "a", b)
            object.__setattr__(self, "b", a)

    def endpoints(self) -> tuple[tuple[str, Arm], tuple[str, Arm]]:
        return self.a, self.b

    def touches(self, substructure_id: str, arm: Arm) -> bool:
        return (substructure_id, arm) in (self.a, self.b)


@dataclass(slots=True)
class AssemblyTopology:
    """Substructures plus the joints between them."""

    substructures: dict[str, SubstructureState] = field(default_factory=dict)
    joints: set[Joint] = field(default_factory=set)

    def copy(self) -> AssemblyTopology:
        return AssemblyTopology(
            {sid: s.copy() for sid, s in self.substructures.items()},
            set(self.joints),
        )

    def arm_state(self, substructure_id: str, arm: Arm) -> ArmState:
        sub = self.substructures.get(substructure_id)
        if sub is None:
            raise UnknownSubstructure(substructure_id)
        return sub.arms[arm]

    def joint_at(self, substructure_id: str, arm: Arm) -> Joint | None:
        for joint in self.joints:
            if joint.touches(substructure_id, arm):
                return joint
        return None


@dataclass(frozen=True, slots=True)
class Snapshot:
    """Named full-assembly state, deep-copied at creation. Treat as immutable."""

    snapshot_id: str
    label: str
    created_at: int
    topology: AssemblyTopology


def add_joint(
    topology: AssemblyTopology, a: tuple[str, Arm], b: tuple[str, Arm]
) -> AssemblyTopology:
    """Join two opposite arm tips; returns a new topology with both flags set.

    Raises UnknownSubstructure, NonOpposingArms or ArmOccupied when the magnet
    mating is impossible.
    """
    for sid, _ in (a, b):
        if sid not in topology.substructures:
            raise UnknownSubstructure(sid)
    joint = Joint(a, b)  # validates opposition and distinctness
    for sid, arm in (a, b):
        existing = topology.joint_at(sid, arm)
        if existing is not None and existing != joint:
            raise ArmOccupied(f"arm {arm.value} of {sid!r} is already jointed")
    result = topology.copy()
    result.joints.add(joint)
    for sid, arm in (a, b):
        result.substructures[sid].arms[arm].jointed = True
    return result


def remove_joint(topology: AssemblyTopology, joint: Joint) -> AssemblyTopology:
    """Detach a joint; the endpoint flags are cleared."""
    result = topology.copy()
    result.joints.discard(joint)
    for sid, arm in joint.endpoints():
        sub = result.substructures.get(sid)
        if sub is not None:
            sub.arms[arm].jointed = False
    return result


def prune_dead_joints(topology: AssemblyTopology) -> AssemblyTopology:
    """Drop joints whose endpoint flags no longer both read true.

    A joint is live only while both arms agree jointed=true; replicated flag
    edits can break that agreement, and the surviving state must still satisfy
    the topology invariants.
    """
    dead = []
    for joint in topology.joints:
        for sid, arm in joint.endpoints():
            sub = topology.substructures.get(sid)
            if sub is None or not sub.arms[arm].jointed:
                dead.append(joint)
                break
    if not dead:
        return topology
    result = topology.copy()
    result.joints.difference_update(dead)
    return result


def snapshot_of(
    topology: AssemblyTopology,
    label: str,
    now: int,
    snapshot_id: str | None = None,
) -> Snapshot:
    """Deep, immutable copy of the assembly under a fresh id."""
    if snapshot_id is None:
        snapshot_id = "snap-" + uuid.uuid4().hex[:12]
    return Snapshot(
        snapshot_id=snapshot_id,
        label=label,
        created_at=int(now),
        topology=copy.deepcopy(topology),
    )


@dataclass(slots=True)
class RestoreResult:
    topology: AssemblyTopology
    clock: LamportClock
    # (substructure id, arm, new target, jointed) for every freshly stamped arm
    updates: list[tuple[str, Arm, float, bool]]


def restore_targets(
    topology: AssemblyTopology, snapshot: Snapshot, clock: LamportClock
) -> RestoreResult:
    """Command the live assembly back toward a stored shape.

    Every arm present in the snapshot gets target := the snapshot's extension
    (clamped) and the snapshot's jointed flag, under a fresh stamp so the
    restore replicates like any other edit. Extensions are left alone —
    actuation moves them. The live joint set is replaced by the snapshot's.
    """
    for sid in snapshot.topology.substructures:
        if sid not in topology.substructures:
            raise UnknownSubstructure(sid)
    result = topology.copy()
    updates: list[tuple[str, Arm, float, bool]] = []
    for sid in sorted(snapshot.topology.substructures):
        saved = snapshot.topology.substructures[sid]
        live = result.substructures[sid]
        for arm in ARMS:
            saved_arm = saved.arms[arm]
            live_arm = live.arms[arm]
            clock, stamp = stamp_next(clock)
            live_arm.target = clamp_extension(saved_arm.extension)
            live_arm.jointed = saved_arm.jointed
            live_arm.stamp = stamp
            updates.append((sid, arm, live_arm.target, live_arm.jointed))
    result.joints = {
        j for j in snapshot.topology.joints
        if all(sid in result.substructures for sid, _ in j.endpoints())
    }
    return RestoreResult(result, clock, updates)


def check_topology(topology: AssemblyTopology) -> None:
    """Raise ShapeError on the first violated topology invariant."""
    for sid, sub in topology.substructures.items():
        if sid != sub.id:
            raise ShapeError(f"substructure keyed {sid!r} carries id {sub.id!r}")
        if set(sub.arms) != set(ARMS):
            raise ShapeError("arms must have 6 entries")
        for arm, state in sub.arms.items():
            if not (0.0 <= state.extension <= MAX_EXTENSION_MM):
                raise ShapeError(
                    f"extension {state.extension} of {sid!r}/{arm.value} out of range"
                )
            if not (0.0 <= state.target <= MAX_EXTENSION_MM):
                raise ShapeError(
                    f"target {state.target} of {sid!r}/{arm.value} out of range"
                )
    seen: set[tuple[str, Arm]] = set()
    for joint in topology.joints:
        for sid, arm in joint.endpoints():
            if sid not in topology.substructures:
                raise ShapeError(f"joint references unknown substructure {sid!r}")
            if (sid, arm) in seen:
                raise ShapeError(f"arm {arm.value} of {sid!r} appears in two joints")
            seen.add((sid, arm))
            if not topology.substructures[sid].arms[arm].jointed:
                raise ShapeError(
                    f"joint endpoint {sid!r}/{arm.value} has jointed=false"
                )
