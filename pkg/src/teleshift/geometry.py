"""World-coordinate embedding of an assembly.

Crossing a joint from body A (arm on axis u, sign s, extension eA) to body B
(mating arm extension eB) places B at pos(A) + s*u*(BODY_EDGE_MM + eA + eB):
two body faces plus both arm lengths. Cycles must close within tolerance and
bodies must not interpenetrate.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .model import (
    BODY_EDGE_MM,
    GEOM_TOLERANCE_MM,
    AssemblyTopology,
    ShapeError,
)

Vec3 = tuple[float, float, float]


class UnknownAnchor(ShapeError):
    code = "UnknownAnchor"


class InconsistentCycle(ShapeError):
    code = "InconsistentCycle"

    def __init__(self, substructure_id: str, discrepancy_mm: float):
        super().__init__(
            f"cycle places {substructure_id!r} at two positions "
            f"{discrepancy_mm:.3f} mm apart"
        )
        self.substructure_id = substructure_id
        self.discrepancy_mm = discrepancy_mm


class BodyCollision(ShapeError):
    code = "BodyCollision"

    def __init__(self, first: str, second: str):
        first, second = sorted((first, second))
        super().__init__(f"bodies {first!r} and {second!r} overlap")
        self.first = first
        self.second = second


@dataclass(slots=True)
class Embedding:
    """Body-center positions (mm) for the anchor's connected component."""

    positions: dict[str, Vec3] = field(default_factory=dict)


def _joint_offset(topology: AssemblyTopology, source: str, joint) -> tuple[str, Vec3]:
    """(neighbour id, center-to-center offset) for crossing `joint` from `source`."""
    (a_id, a_arm), (b_id, b_arm) = joint.endpoints()
    if source == a_id:
        here_id, here_arm, there_id, there_arm = a_id, a_arm, b_id, b_arm
    else:
        here_id, here_arm, there_id, there_arm = b_id, b_arm, a_id, a_arm
    ext_here = topology.substructures[here_id].arms[here_arm].extension
    ext_there = topology.substructures[there_id].arms[there_arm].extension
    distance = BODY_EDGE_MM + ext_here + ext_there
    offset = [0.0, 0.0, 0.0]
    offset[here_arm.axis] = here_arm.sign * distance
    return there_id, (offset[0], offset[1], offset[2])


def embed_assembly(
    topology: AssemblyTopology,
    anchor: str,
    anchor_pos: Vec3 = (0.0, 0.0, 0.0),
) -> Embedding:
    """Place every body reachable from `anchor` by breadth-first traversal.

    Raises UnknownAnchor, InconsistentCycle (a cycle disagrees by more than
    the geometric tolerance in some coordinate) or BodyCollision (two placed
    bodies' bounding cubes interpenetrate beyond tolerance).
    """
    if anchor not in topology.substructures:
        raise UnknownAnchor(f"unknown anchor {anchor!r}")

    adjacency: dict[str, list] = {sid: [] for sid in topology.substructures}
    for joint in topology.joints:
        (a_id, _), (b_id, _) = joint.endpoints()
        adjacency[a_id].append(joint)
        adjacency[b_id].append(joint)
    for joints in adjacency.values():
        joints.sort(key=lambda j: (j.a[0], j.a[1].value, j.b[0], j.b[1].value))

    positions: dict[str, Vec3] = {
        anchor: (float(anchor_pos[0]), float(anchor_pos[1]), float(anchor_pos[2]))
    }
    queue: deque[str] = deque([anchor])
    while queue:
        current = queue.popleft()
        base = positions[current]
        for joint in adjacency[current]:
            neighbour, offset = _joint_offset(topology, current, joint)
            candidate = (
                base[0] + offset[0],
                base[1] + offset[1],
                base[2] + offset[2],
            )
            known = positions.get(neighbour)
            if known is None:
                positions[neighbour] = candidate
                queue.append(neighbour)
            else:
                discrepancy = max(abs(known[i] - candidate[i]) for i in range(3))
                if discrepancy > GEOM_TOLERANCE_MM:
                    raise InconsistentCycle(neighbour, discrepancy)

    placed = sorted(positions)
    for i, first in enumerate(placed):
        for second in placed[i + 1 :]:
            p, q = positions[first], positions[second]
            # Penetration depth of two axis-aligned cubes of edge BODY_EDGE_MM.
            depth = min(BODY_EDGE_MM - abs(p[k] - q[k]) for k in range(3))
            if depth > GEOM_TOLERANCE_MM:
                raise BodyCollision(first, second)

    return Embedding(positions)
