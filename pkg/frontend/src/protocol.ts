/**
 * Wire protocol: one JSON envelope per WebSocket text frame.
 *
 * Envelope fields are exactly kind/session/sender/seq/payload; seq is a
 * per-connection, per-direction counter that increments by one per envelope,
 * so either side can spot replays and losses.
 */

export const KINDS = [
  "HELLO",
  "WELCOME",
  "UPDATE",
  "FULL_STATE_REQUEST",
  "FULL_STATE",
  "SNAPSHOT_SAVE",
  "SNAPSHOT_LIST",
  "SNAPSHOT_RESTORE",
  "MODE_SET",
  "ERROR",
  "PING",
  "PONG",
] as const;

export type Kind = (typeof KINDS)[number];

export interface Envelope {
  kind: Kind;
  session: string;
  sender: string;
  seq: number;
  payload: Record<string, unknown>;
}

/** Canonical JSON: keys sorted recursively, no whitespace. */
export function canonicalStringify(value: unknown): string {
  if (value === null || typeof value !== "object") {
    return JSON.stringify(value);
  }
  if (Array.isArray(value)) {
    return "[" + value.map(canonicalStringify).join(",") + "]";
  }
  const entries = Object.entries(value as Record<string, unknown>)
    .sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0))
    .map(([key, item]) => JSON.stringify(key) + ":" + canonicalStringify(item));
  return "{" + entries.join(",") + "}";
}

export function encodeEnvelope(envelope: Envelope): string {
  return canonicalStringify({
    kind: envelope.kind,
    session: envelope.session,
    sender: envelope.sender,
    seq: envelope.seq,
    payload: envelope.payload,
  });
}

export function decodeEnvelope(text: string): Envelope {
  const data = JSON.parse(text) as Record<string, unknown>;
  const kind = data.kind;
  if (typeof kind !== "string" || !(KINDS as readonly string[]).includes(kind)) {
    throw new Error(`unknown envelope kind ${String(kind)}`);
  }
  if (typeof data.seq !== "number" || data.seq < 0) {
    throw new Error("seq must be a non-negative number");
  }
  return {
    kind: kind as Kind,
    session: String(data.session ?? ""),
    sender: String(data.sender ?? ""),
    seq: data.seq,
    payload: (data.payload ?? {}) as Record<string, unknown>,
  };
}

export class Outbox {
  seq = 0;

  stamp(kind: Kind, session: string, sender: string, payload: Record<string, unknown>): Envelope {
    this.seq += 1;
    return { kind, session, sender, seq: this.seq, payload };
  }
}

export class Inbox {
  lastSeq = 0;
  lost = 0;

  /** False when the envelope replays an already-seen seq. */
  accept(envelope: Envelope): boolean {
    if (envelope.seq <= this.lastSeq) return false;
    if (envelope.seq > this.lastSeq + 1) this.lost += envelope.seq - this.lastSeq - 1;
    this.lastSeq = envelope.seq;
    return true;
  }
}
