/**
 * Replicated assembly state, mirroring the hub's canonical JSON encoding.
 *
 * Each arm is a last-writer-wins register: the edit with the greater
 * (lamport, actor) stamp wins, extension is physics and never replicated.
 */

export const ARM_KEYS = ["+x", "-x", "+y", "-y", "+z", "-z"] as const;
export type ArmKey = (typeof ARM_KEYS)[number];

export const BODY_EDGE_MM = 100;
export const MAX_EXTENSION_MM = 60;
export const GEOM_TOLERANCE_MM = 0.5;
export const ARM_SPEED_MM_S = 30;

export interface Stamp {
  lamport: number;
  actor: string;
}

export interface ArmState {
  extension: number;
  target: number;
  jointed: boolean;
  stamp: Stamp;
}

export interface SubstructureJson {
  id: string;
  arms: Record<ArmKey, ArmState>;
}

export interface JointJson {
  a: [string, ArmKey];
  b: [string, ArmKey];
}

export interface TopologyJson {
  substructures: SubstructureJson[];
  joints: JointJson[];
}

export interface ArmUpdate {
  substructure: string;
  arm: ArmKey;
  target: number;
  jointed: boolean;
  stamp: Stamp;
}

/** Mutable replica form: bodies keyed by id. */
export interface Replica {
  bodies: Map<string, SubstructureJson>;
  joints: JointJson[];
}

export function oppositeArm(arm: ArmKey): ArmKey {
  const sign = arm[0] === "+" ? "-" : "+";
  return (sign + arm[1]) as ArmKey;
}

export function armAxis(arm: ArmKey): 0 | 1 | 2 {
  return "xyz".indexOf(arm[1]) as 0 | 1 | 2;
}

export function armSign(arm: ArmKey): 1 | -1 {
  return arm[0] === "+" ? 1 : -1;
}

export function clampExtension(mm: number): number {
  return Math.min(Math.max(mm, 0), MAX_EXTENSION_MM);
}

export function stampLess(a: Stamp, b: Stamp): boolean {
  if (a.lamport !== b.lamport) return a.lamport < b.lamport;
  return a.actor < b.actor;
}

export function blankArm(): ArmState {
  return { extension: 0, target: 0, jointed: false, stamp: { lamport: 0, actor: "" } };
}

export function emptyReplica(): Replica {
  return { bodies: new Map(), joints: [] };
}

export function replicaFromJson(json: TopologyJson): Replica {
  const bodies = new Map<string, SubstructureJson>();
  for (const sub of json.substructures) {
    bodies.set(sub.id, structuredClone(sub));
  }
  return { bodies, joints: json.joints.map((j) => structuredClone(j)) };
}

export function replicaToJson(replica: Replica): TopologyJson {
  const substructures = [...replica.bodies.values()]
    .map((sub) => structuredClone(sub))
    .sort((a, b) => (a.id < b.id ? -1 : 1));
  const joints = replica.joints
    .map((j) => structuredClone(j))
    .sort((a, b) => (JSON.stringify(a) < JSON.stringify(b) ? -1 : 1));
  return { substructures, joints };
}

/** LWW register join; returns true when the update won and was applied. */
export function mergeArm(replica: Replica, update: ArmUpdate): boolean {
  const body = replica.bodies.get(update.substructure);
  if (body === undefined) return false;
  const arm = body.arms[update.arm];
  if (!stampLess(arm.stamp, update.stamp)) return false;
  arm.target = clampExtension(update.target);
  const hadJoint = arm.jointed;
  arm.jointed = update.jointed;
  arm.stamp = { ...update.stamp };
  if (hadJoint && !update.jointed) pruneDeadJoints(replica);
  return true;
}

export function pruneDeadJoints(replica: Replica): void {
  replica.joints = replica.joints.filter((joint) =>
    [joint.a, joint.b].every(([id, arm]) => {
      const body = replica.bodies.get(id);
      return body !== undefined && body.arms[arm].jointed;
    }),
  );
}

export function addJointDecl(replica: Replica, decl: JointJson): void {
  const touched = (j: JointJson, id: string, arm: ArmKey) =>
    (j.a[0] === id && j.a[1] === arm) || (j.b[0] === id && j.b[1] === arm);
  for (const [id, arm] of [decl.a, decl.b]) {
    if (!replica.bodies.has(id)) return;
    if (replica.joints.some((j) => touched(j, id, arm))) return;
  }
  replica.joints.push(structuredClone(decl));
  for (const [id, arm] of [decl.a, decl.b]) {
    replica.bodies.get(id)!.arms[arm].jointed = true;
  }
}

export function removeJointDecl(replica: Replica, decl: JointJson): void {
  const same = (x: [string, ArmKey], y: [string, ArmKey]) => x[0] === y[0] && x[1] === y[1];
  replica.joints = replica.joints.filter(
    (j) => !((same(j.a, decl.a) && same(j.b, decl.b)) || (same(j.a, decl.b) && same(j.b, decl.a))),
  );
}

/**
 * Adopt the authoritative targets, flags, stamps and joints wholesale;
 * extensions stay where our local animation has them so arms glide rather
 * than teleport.
 */
export function resyncReplica(local: Replica, authoritative: TopologyJson): Replica {
  const next = replicaFromJson(authoritative);
  for (const [id, body] of next.bodies) {
    const known = local.bodies.get(id);
    if (known === undefined) continue;
    for (const arm of ARM_KEYS) {
      body.arms[arm].extension = known.arms[arm].extension;
    }
  }
  return next;
}

/** One animation step: every arm glides toward its target at ARM_SPEED. */
export function actuate(replica: Replica, dtMs: number): boolean {
  const step = (ARM_SPEED_MM_S * dtMs) / 1000;
  let moving = false;
  for (const body of replica.bodies.values()) {
    for (const arm of ARM_KEYS) {
      const state = body.arms[arm];
      const gap = state.target - state.extension;
      if (gap === 0) continue;
      moving = true;
      state.extension =
        Math.abs(gap) <= step ? state.target : state.extension + Math.sign(gap) * step;
    }
  }
  return moving;
}
