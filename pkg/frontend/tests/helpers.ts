/** Shared fixtures: topology JSON builders and a client harness. */

import { HubClient, Role } from "../src/client.js";
import { ARM_KEYS, ArmState, SubstructureJson, TopologyJson } from "../src/model.js";
import { Envelope, Kind, Outbox } from "../src/protocol.js";
import { FakeSocket } from "./fakesocket.js";

export function blankArm(overrides: Partial<ArmState> = {}): ArmState {
  return {
    extension: 0,
    target: 0,
    jointed: false,
    stamp: { lamport: 0, actor: "" },
    ...overrides,
  };
}

export function body(id: string, arms: Partial<Record<string, Partial<ArmState>>> = {}): SubstructureJson {
  const built = {} as SubstructureJson["arms"];
  for (const arm of ARM_KEYS) {
    built[arm] = blankArm(arms[arm]);
  }
  return { id, arms: built };
}

export function topology(...bodies: SubstructureJson[]): TopologyJson {
  return { substructures: bodies, joints: [] };
}

/** A HubClient wired to a FakeSocket, with a hub-side outbox for replies. */
export class Harness {
  socket = new FakeSocket();
  hubOut = new Outbox();
  client: HubClient;

  constructor(role: Role | null = null, mode: "collab" | "present" = "collab") {
    this.client = new HubClient({
      url: "ws://fake",
      session: "demo",
      clientId: "web-1",
      role,
      mode,
      makeSocket: () => this.socket,
      setTimer: () => null,
      clearTimer: () => undefined,
    });
  }

  start(welcomeTopology: TopologyJson, role: Role = "peer"): void {
    this.client.connect();
    this.socket.openNow();
    this.socket.takeSent(); // HELLO
    this.deliver("WELCOME", {
      mode: this.client.mode,
      role,
      topology: welcomeTopology,
      members: { "web-1": role },
    });
    this.socket.takeSent(); // SNAPSHOT_LIST refresh
  }

  deliver(kind: Kind, payload: Record<string, unknown>): void {
    this.socket.deliver(this.hubOut.stamp(kind, "demo", "#hub", payload));
  }

  sent(): Envelope[] {
    return this.socket.takeSent();
  }
}
