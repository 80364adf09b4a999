/**
 * Hub client: one session member over a WebSocket, schema-identical to a
 * simulated device. Keeps a full replica, applies drags optimistically,
 * re-sends unconfirmed edits after loss, and recovers state on reconnect.
 */

import {
  ArmKey,
  ArmUpdate,
  JointJson,
  Replica,
  Stamp,
  TopologyJson,
  actuate,
  addJointDecl,
  clampExtension,
  emptyReplica,
  mergeArm,
  oppositeArm,
  pruneDeadJoints,
  removeJointDecl,
  resyncReplica,
} from "./model.js";
import { Envelope, Inbox, Kind, Outbox, decodeEnvelope, encodeEnvelope } from "./protocol.js";

export type Role = "peer" | "presenter" | "follower";
export type Mode = "collab" | "present";
export type Status = "connecting" | "online" | "reconnecting" | "closed";

export interface SnapshotMeta {
  snapshot_id: string;
  label: string;
  created_at: number;
}

/** The browser WebSocket surface the client needs (satisfied by `ws` too). */
export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((event: unknown) => void) | null;
  onmessage: ((event: { data: unknown }) => void) | null;
  onclose: ((event: unknown) => void) | null;
  onerror: ((event: unknown) => void) | null;
}

export interface ClientOptions {
  url: string;
  session: string;
  clientId: string;
  role?: Role | null;
  mode?: Mode;
  makeSocket?: (url: string) => SocketLike;
  /** scheduling hooks, injectable for tests */
  setTimer?: (fn: () => void, ms: number) => unknown;
  clearTimer?: (handle: unknown) => void;
}

const RECONNECT_BASE_MS = 500;
const RECONNECT_CAP_MS = 8000;

export class HubClient {
  readonly session: string;
  readonly clientId: string;

  replica: Replica = emptyReplica();
  role: Role | null = null;
  mode: Mode;
  status: Status = "connecting";
  members: Record<string, Role> = {};
  snapshots: SnapshotMeta[] = [];
  lastError: { code: string; detail: string } | null = null;
  /** set once this follower has edits the presenter cannot see */
  diverged = false;

  onchange: (() => void) | null = null;

  private readonly opts: ClientOptions;
  private readonly desiredRole: Role | null;
  private socket: SocketLike | null = null;
  private outbox = new Outbox();
  private inbox = new Inbox();
  private lamport = 0;
  private pending = new Map<string, ArmUpdate>();
  private pendingJoins: JointJson[] = [];
  private handledLost = 0;
  private hubLostSeen = 0;
  private reconnectAttempt = 0;
  private reconnectHandle: unknown = null;
  private closed = false;

  constructor(opts: ClientOptions) {
    this.opts = opts;
    this.session = opts.session;
    this.clientId = opts.clientId;
    this.desiredRole = opts.role ?? null;
    this.mode = opts.mode ?? "collab";
  }

  connect(): void {
    this.closed = false;
    this.open();
  }

  close(): void {
    this.closed = true;
    if (this.reconnectHandle !== null) {
      (this.opts.clearTimer ?? clearTimeout)(this.reconnectHandle as never);
      this.reconnectHandle = null;
    }
    this.socket?.close();
    this.status = "closed";
    this.notify();
  }

  /** Advance the local actuation animation; returns true while arms move. */
  tick(dtMs: number): boolean {
    const moving = actuate(this.replica, dtMs);
    if (moving) this.notify();
    return moving;
  }

  // -- user actions -------------------------------------------------------------

  /** The hand drags an arm: local scene updates now, the edit replicates. */
  dragArm(substructure: string, arm: ArmKey, extensionMm: number): void {
    const body = this.replica.bodies.get(substructure);
    if (body === undefined || this.status !== "online") return;
    const value = clampExtension(extensionMm);
    const state = body.arms[arm];
    state.extension = value;
    state.target = value;
    state.stamp = this.nextStamp();
    const update: ArmUpdate = {
      substructure,
      arm,
      target: value,
      jointed: state.jointed,
      stamp: state.stamp,
    };
    this.pending.set(`${substructure}/${arm}`, update);
    if (this.role === "follower") this.diverged = true;
    this.send("UPDATE", { updates: [this.updateJson(update)] });
    this.notify();
  }

  /** Declare a magnet joint from one body's arm to the opposite arm of another. */
  addJoint(substructure: string, arm: ArmKey, otherId: string): void {
    const mate = oppositeArm(arm);
    const decl: JointJson = { a: [substructure, arm], b: [otherId, mate] };
    const updates: ArmUpdate[] = [];
    for (const [id, jointArm] of [decl.a, decl.b]) {
      const body = this.replica.bodies.get(id);
      if (body === undefined) return;
      const state = body.arms[jointArm];
      const update: ArmUpdate = {
        substructure: id,
        arm: jointArm,
        target: state.target,
        jointed: true,
        stamp: this.nextStamp(),
      };
      updates.push(update);
      this.pending.set(`${id}/${jointArm}`, update);
    }
    addJointDecl(this.replica, decl);
    this.pendingJoins.push(decl);
    if (this.role === "follower") this.diverged = true;
    this.send("UPDATE", {
      updates: updates.map((u) => this.updateJson(u)),
      joins: [decl],
    });
    this.notify();
  }

  saveSnapshot(label: string): void {
    this.send("SNAPSHOT_SAVE", { label });
  }

  restoreSnapshot(snapshotId: string): void {
    this.send("SNAPSHOT_RESTORE", { snapshot_id: snapshotId });
  }

  refreshSnapshots(): void {
    this.send("SNAPSHOT_LIST", {});
  }

  requestFullState(view: "own" | "authoritative" = "own"): void {
    this.send("FULL_STATE_REQUEST", { view });
  }

  // -- transport ---------------------------------------------------------------------

  private open(): void {
    const make =
      this.opts.makeSocket ?? ((url: string) => new WebSocket(url) as unknown as SocketLike);
    this.status = this.reconnectAttempt > 0 ? "reconnecting" : "connecting";
    this.notify();
    const socket = make(this.opts.url);
    this.socket = socket;
    socket.onopen = () => {
      this.outbox = new Outbox();
      this.inbox = new Inbox();
      this.handledLost = 0;
      this.hubLostSeen = 0;
      this.send("HELLO", {
        mode: this.mode,
        role: this.desiredRole,
        substructures: [],
        create: true,
      });
    };
    socket.onmessage = (event) => this.onMessage(String(event.data));
    socket.onclose = () => this.onDropped();
    socket.onerror = () => {
      /* onclose follows */
    };
  }

  private onDropped(): void {
    if (this.closed) return;
    this.status = "reconnecting";
    this.notify();
    const delay = Math.min(RECONNECT_BASE_MS * 2 ** this.reconnectAttempt, RECONNECT_CAP_MS);
    this.reconnectAttempt += 1;
    const timer = this.opts.setTimer ?? ((fn: () => void, ms: number) => setTimeout(fn, ms));
    this.reconnectHandle = timer(() => this.open(), delay);
  }

  private send(kind: Kind, payload: Record<string, unknown>): void {
    if (this.socket === null) return;
    try {
      this.socket.send(
        encodeEnvelope(this.outbox.stamp(kind, this.session, this.clientId, payload)),
      );
    } catch {
      /* socket died; onclose will reconnect */
    }
  }

  // -- inbound ---------------------------------------------------------------------------

  private onMessage(raw: string): void {
    let envelope: Envelope;
    try {
      envelope = decodeEnvelope(raw);
    } catch {
      return;
    }
    if (!this.inbox.accept(envelope)) return;
    switch (envelope.kind) {
      case "WELCOME":
        this.onWelcome(envelope.payload);
        break;
      case "FULL_STATE":
        if (envelope.payload.view === "authoritative") {
          // explicit resync to the presenter-visible state discards our edits
          this.pending.clear();
          this.pendingJoins = [];
          this.diverged = false;
        }
        this.adopt(envelope.payload.topology as unknown as TopologyJson);
        break;
      case "UPDATE":
        this.onUpdate(envelope.payload);
        break;
      case "PING":
        this.onPing(envelope.payload);
        break;
      case "ERROR":
        this.lastError = {
          code: String(envelope.payload.code ?? "Error"),
          detail: String(envelope.payload.detail ?? ""),
        };
        break;
      case "SNAPSHOT_SAVE":
      case "SNAPSHOT_RESTORE":
        this.refreshSnapshots();
        break;
      case "SNAPSHOT_LIST":
        this.snapshots = (envelope.payload.snapshots ?? []) as SnapshotMeta[];
        break;
      case "MODE_SET": {
        this.mode = (envelope.payload.mode as Mode) ?? this.mode;
        const roles = (envelope.payload.roles ?? {}) as Record<string, Role>;
        this.role = roles[this.clientId] ?? this.role;
        this.members = roles;
        break;
      }
      default:
        break;
    }
    this.notify();
  }

  private onWelcome(payload: Record<string, unknown>): void {
    this.role = payload.role as Role;
    this.mode = payload.mode as Mode;
    this.members = (payload.members ?? {}) as Record<string, Role>;
    this.status = "online";
    this.reconnectAttempt = 0;
    this.adopt(payload.topology as unknown as TopologyJson);
    this.refreshSnapshots();
  }

  private adopt(topology: TopologyJson): void {
    for (const sub of topology.substructures) {
      for (const arm of Object.values(sub.arms)) {
        this.observe(arm.stamp);
      }
    }
    this.replica = resyncReplica(this.replica, topology);
    // confirm or re-send whatever the hub has not adopted
    const resend: ArmUpdate[] = [];
    for (const [key, update] of [...this.pending]) {
      const body = this.replica.bodies.get(update.substructure);
      if (body === undefined) {
        this.pending.delete(key);
        continue;
      }
      const arm = body.arms[update.arm];
      if (
        arm.stamp.lamport > update.stamp.lamport ||
        (arm.stamp.lamport === update.stamp.lamport && arm.stamp.actor >= update.stamp.actor)
      ) {
        this.pending.delete(key);
      } else {
        mergeArm(this.replica, update);
        resend.push(update);
      }
    }
    const joinsToSend: JointJson[] = [];
    this.pendingJoins = this.pendingJoins.filter((decl) => {
      const present = this.replica.joints.some(
        (j) => JSON.stringify(j) === JSON.stringify(decl),
      );
      if (present) return false;
      addJointDecl(this.replica, decl);
      joinsToSend.push(decl);
      return true;
    });
    if (resend.length > 0 || joinsToSend.length > 0) {
      this.send("UPDATE", {
        updates: resend.map((u) => this.updateJson(u)),
        joins: joinsToSend,
      });
    }
  }

  private onUpdate(payload: Record<string, unknown>): void {
    let behind = false;
    for (const item of (payload.updates ?? []) as Array<Record<string, unknown>>) {
      const update: ArmUpdate = {
        substructure: String(item.substructure),
        arm: item.arm as ArmKey,
        target: Number(item.target),
        jointed: Boolean(item.jointed),
        stamp: item.stamp as Stamp,
      };
      this.observe(update.stamp);
      if (!this.replica.bodies.has(update.substructure)) {
        behind = true;
        continue;
      }
      mergeArm(this.replica, update);
    }
    for (const decl of (payload.unjoins ?? []) as JointJson[]) {
      removeJointDecl(this.replica, decl);
    }
    for (const decl of (payload.joins ?? []) as JointJson[]) {
      if ([decl.a, decl.b].some(([id]) => !this.replica.bodies.has(id))) {
        behind = true;
        continue;
      }
      addJointDecl(this.replica, decl);
    }
    pruneDeadJoints(this.replica);
    if (behind) this.requestFullState("own");
  }

  private onPing(payload: Record<string, unknown>): void {
    this.send("PONG", {});
    const hubLost = Number(payload.lost ?? 0);
    const lostHere = this.inbox.lost > this.handledLost;
    const lostThere = hubLost > this.hubLostSeen;
    this.hubLostSeen = Math.max(this.hubLostSeen, hubLost);
    if (lostHere || lostThere) {
      this.handledLost = this.inbox.lost;
      this.requestFullState("own");
    }
  }

  // -- helpers ------------------------------------------------------------------------------

  private observe(stamp: Stamp): void {
    if (stamp.lamport > this.lamport) this.lamport = stamp.lamport;
  }

  private nextStamp(): Stamp {
    this.lamport += 1;
    return { lamport: this.lamport, actor: this.clientId };
  }

  private updateJson(update: ArmUpdate): Record<string, unknown> {
    return {
      substructure: update.substructure,
      arm: update.arm,
      target: update.target,
      jointed: update.jointed,
      stamp: { lamport: update.stamp.lamport, actor: update.stamp.actor },
    };
  }

  private notify(): void {
    this.onchange?.();
  }
}
