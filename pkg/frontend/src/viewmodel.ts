/**
 * The render-facing view of a session: a pure function of the client's
 * replicated state plus transient drag input. No other source of truth.
 */

import { embedReplica, Vec3 } from "./embedding.js";
import { ARM_KEYS, ArmKey, Replica } from "./model.js";
import { Role, SnapshotMeta, Status } from "./client.js";

export interface ArmView {
  arm: ArmKey;
  extension: number;
  target: number;
  jointed: boolean;
  dragging: boolean;
}

export interface BodyView {
  id: string;
  position: Vec3;
  inconsistent: boolean;
  arms: ArmView[];
}

export interface ViewModel {
  session: string;
  clientId: string;
  role: Role | null;
  status: Status;
  diverged: boolean;
  bodies: BodyView[];
  snapshots: SnapshotMeta[];
  members: Record<string, Role>;
  error: { code: string; detail: string } | null;
}

export interface ViewInputs {
  session: string;
  clientId: string;
  role: Role | null;
  status: Status;
  diverged: boolean;
  replica: Replica;
  snapshots: SnapshotMeta[];
  members: Record<string, Role>;
  error: { code: string; detail: string } | null;
  dragTarget: { substructure: string; arm: ArmKey } | null;
}

export function buildViewModel(inputs: ViewInputs): ViewModel {
  const { positions, inconsistent } = embedReplica(inputs.replica);
  const bodies: BodyView[] = [];
  for (const id of [...inputs.replica.bodies.keys()].sort()) {
    const body = inputs.replica.bodies.get(id)!;
    bodies.push({
      id,
      position: positions.get(id) ?? [0, 0, 0],
      inconsistent: inconsistent.has(id),
      arms: ARM_KEYS.map((arm) => ({
        arm,
        extension: body.arms[arm].extension,
        target: body.arms[arm].target,
        jointed: body.arms[arm].jointed,
        dragging:
          inputs.dragTarget !== null &&
          inputs.dragTarget.substructure === id &&
          inputs.dragTarget.arm === arm,
      })),
    });
  }
  return {
    session: inputs.session,
    clientId: inputs.clientId,
    role: inputs.role,
    status: inputs.status,
    diverged: inputs.diverged,
    bodies,
    snapshots: inputs.snapshots,
    members: inputs.members,
    error: inputs.error,
  };
}
