/**
 * World-coordinate embedding of the replica: crossing a joint from body A
 * (arm on axis u, sign s, extension eA) to B (mating extension eB) places B
 * at pos(A) + s*u*(BODY + eA + eB).
 *
 * Unlike the hub-side check, an inconsistent cycle does not fail here: the
 * affected bodies are reported for highlighting and the first-seen position
 * wins, so the scene always renders.
 */

import {
  BODY_EDGE_MM,
  GEOM_TOLERANCE_MM,
  Replica,
  armAxis,
  armSign,
  ArmKey,
} from "./model.js";

export type Vec3 = [number, number, number];

export interface Embedding {
  positions: Map<string, Vec3>;
  /** bodies whose position is ambiguous because a cycle fails to close */
  inconsistent: Set<string>;
}

export function embedReplica(replica: Replica, anchor?: string): Embedding {
  const positions = new Map<string, Vec3>();
  const inconsistent = new Set<string>();
  const ids = [...replica.bodies.keys()].sort();
  if (ids.length === 0) return { positions, inconsistent };

  const adjacency = new Map<string, Array<{ other: string; offset: Vec3 }>>();
  for (const id of ids) adjacency.set(id, []);
  for (const joint of replica.joints) {
    for (const [from, to] of [
      [joint.a, joint.b],
      [joint.b, joint.a],
    ] as const) {
      const [fromId, fromArm] = from;
      const [toId, toArm] = to;
      const bodyFrom = replica.bodies.get(fromId);
      const bodyTo = replica.bodies.get(toId);
      if (!bodyFrom || !bodyTo) continue;
      const span =
        BODY_EDGE_MM +
        bodyFrom.arms[fromArm as ArmKey].extension +
        bodyTo.arms[toArm as ArmKey].extension;
      const offset: Vec3 = [0, 0, 0];
      offset[armAxis(fromArm as ArmKey)] = armSign(fromArm as ArmKey) * span;
      adjacency.get(fromId)?.push({ other: toId, offset });
    }
  }

  // BFS per connected component; disconnected components are laid out in a
  // row so everything stays visible
  let nextFreeX = 0;
  const roots = anchor && replica.bodies.has(anchor) ? [anchor, ...ids] : ids;
  for (const root of roots) {
    if (positions.has(root)) continue;
    positions.set(root, [nextFreeX, 0, 0]);
    const queue = [root];
    let maxX = nextFreeX;
    while (queue.length > 0) {
      const current = queue.shift()!;
      const base = positions.get(current)!;
      for (const { other, offset } of adjacency.get(current) ?? []) {
        const candidate: Vec3 = [
          base[0] + offset[0],
          base[1] + offset[1],
          base[2] + offset[2],
        ];
        const known = positions.get(other);
        if (known === undefined) {
          positions.set(other, candidate);
          queue.push(other);
          maxX = Math.max(maxX, candidate[0]);
        } else {
          const gap = Math.max(
            Math.abs(known[0] - candidate[0]),
            Math.abs(known[1] - candidate[1]),
            Math.abs(known[2] - candidate[2]),
          );
          if (gap > GEOM_TOLERANCE_MM) inconsistent.add(other);
        }
      }
    }
    nextFreeX = maxX + BODY_EDGE_MM * 2.5;
  }
  return { positions, inconsistent };
}
