"""Replication semantics: per-arm last-writer-wins merge and session routing.

Each arm is an independent LWW register keyed by VersionStamp, so any two
replicas that have seen the same update set agree, whatever the delivery
order. Routing decides who hears about an edit: collaboration peers and the
presenter broadcast, followers stay local.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .clock import VersionStamp
from .model import (
    MAX_EXTENSION_MM,
    Arm,
    ArmState,
    AssemblyTopology,
    ShapeError,
    clamp_extension,
    prune_dead_joints,
)


class RoleModeMismatch(ShapeError):
    code = "RoleModeMismatch"


class SessionMode(Enum):
    COLLABORATION = "collab"
    PRESENTATION = "present"


class Role(Enum):
    PEER = "peer"
    PRESENTER = "presenter"
    FOLLOWER = "follower"


class RoutingDecision(Enum):
    BROADCAST_ALL_OTHERS = "broadcast_all_others"
    LOCAL_ONLY = "local_only"


_ROLES_BY_MODE = {
    SessionMode.COLLABORATION: {Role.PEER},
    SessionMode.PRESENTATION: {Role.PRESENTER, Role.FOLLOWER},
}


@dataclass(frozen=True, slots=True)
class ArmUpdate:
    """One stamped edit to one arm register."""

    substructure: str
    arm: Arm
    target: float
    jointed: bool
    stamp: VersionStamp

    def __post_init__(self) -> None:
        if not (0.0 <= self.target <= MAX_EXTENSION_MM):
            object.__setattr__(self, "target", clamp_extension(self.target))

    def to_json(self) -> dict:
        return {
            "substructure": self.substructure,
            "arm": self.arm.value,
            "target": self.target,
            "jointed": self.jointed,
            "stamp": self.stamp.to_json(),
        }

    @classmethod
    def from_json(cls, data: dict) -> ArmUpdate:
        return cls(
            substructure=str(data["substructure"]),
            arm=Arm(data["arm"]),
            target=float(data["target"]),
            jointed=bool(data["jointed"]),
            stamp=VersionStamp.from_json(data["stamp"]),
        )


def merge_arm(local: ArmState, update: ArmUpdate) -> ArmState:
    """LWW register join: the greater stamp's target and jointed flag win.

    Extension is never written here — only actuation moves the physical arm.
    """
    if update.stamp <= local.stamp:
        return local
    merged = local.copy()
    merged.target = update.target
    merged.jointed = update.jointed
    merged.stamp = update.stamp
    return merged


@dataclass(slots=True)
class MergeOutcome:
    topology: AssemblyTopology
    unknown: list[ArmUpdate]


def merge_topology(
    local: AssemblyTopology, updates: list[ArmUpdate] | tuple[ArmUpdate, ...]
) -> MergeOutcome:
    """Fold merge_arm over the updates; order-independent.

    Updates naming unknown substructures are collected in ``unknown`` and the
    rest still apply. Joints whose flags were merged away are pruned.
    """
    if not updates:
        return MergeOutcome(local, [])
    result = local.copy()
    unknown: list[ArmUpdate] = []
    flags_cleared = False
    for update in updates:
        sub = result.substructures.get(update.substructure)
        if sub is None:
            unknown.append(update)
            continue
        before = sub.arms[update.arm]
        after = merge_arm(before, update)
        if after.jointed != before.jointed and not after.jointed:
            flags_cleared = True
        sub.arms[update.arm] = after
    if flags_cleared:
        result = prune_dead_joints(result)
    return MergeOutcome(result, unknown)


def route_update(mode: SessionMode, origin_role: Role, update: ArmUpdate) -> RoutingDecision:
    """Where an edit travels: everywhere, or nowhere beyond its author.

    Follower edits stay local so one student's manipulation affects neither
    the other students nor the presenter.
    """
    if origin_role not in _ROLES_BY_MODE[mode]:
        raise RoleModeMismatch(
            f"role {origin_role.value} is not valid in {mode.value} sessions"
        )
    if origin_role is Role.FOLLOWER:
        return RoutingDecision.LOCAL_ONLY
    return RoutingDecision.BROADCAST_ALL_OTHERS


def resync(follower: AssemblyTopology, authoritative: AssemblyTopology) -> AssemblyTopology:
    """Adopt the authoritative targets, flags, stamps and joint set wholesale.

    Extensions stay local where a body already exists (actuation catches up);
    bodies the follower has never seen start at the authoritative extension.
    """
    result = AssemblyTopology()
    for sid, auth_sub in authoritative.substructures.items():
        local_sub = follower.substructures.get(sid)
        adopted = auth_sub.copy()
        if local_sub is not None:
            for arm in Arm:
                adopted.arms[arm].extension = local_sub.arms[arm].extension
        result.substructures[sid] = adopted
    result.joints = set(authoritative.joints)
    return result
