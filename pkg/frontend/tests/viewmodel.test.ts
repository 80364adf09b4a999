import { expect, test } from "vitest";

import { replicaToJson } from "../src/model.js";
import { buildViewModel, ViewInputs } from "../src/viewmodel.js";
import { body, Harness, topology } from "./helpers.js";

function inputsOf(harness: Harness): ViewInputs {
  const client = harness.client;
  return {
    session: client.session,
    clientId: client.clientId,
    role: client.role,
    status: client.status,
    diverged: client.diverged,
    replica: client.replica,
    snapshots: client.snapshots,
    members: client.members,
    error: client.lastError,
    dragTarget: null,
  };
}

test("view model is a pure function of its inputs", () => {
  const harness = new Harness();
  harness.start(topology(body("d0", { "+x": { extension: 5, target: 5 } })));
  const first = buildViewModel(inputsOf(harness));
  const second = buildViewModel(inputsOf(harness));
  expect(second).toEqual(first);
});

test("optimistic drag renders immediately and survives a confirming sync", () => {
  const harness = new Harness();
  harness.start(topology(body("d0")));
  harness.client.dragArm("d0", "+x", 35);
  const [update] = harness.sent();
  const sentStamp = (update.payload.updates as Array<{ stamp: unknown }>)[0].stamp;

  let view = buildViewModel(inputsOf(harness));
  expect(view.bodies[0].arms.find((a) => a.arm === "+x")!.extension).toBe(35);

  // the hub adopted our edit: FULL_STATE carries it back with our stamp
  harness.deliver("FULL_STATE", {
    topology: topology(
      body("d0", { "+x": { extension: 35, target: 35, stamp: sentStamp as never } }),
    ),
    view: "own",
  });
  expect(harness.sent()).toHaveLength(0); // confirmed, nothing re-sent
  view = buildViewModel(inputsOf(harness));
  expect(view.bodies[0].arms.find((a) => a.arm === "+x")!.target).toBe(35);
});

test("unconfirmed edits re-apply and re-send after a stale full state", () => {
  const harness = new Harness();
  harness.start(topology(body("d0")));
  harness.client.dragArm("d0", "+x", 35);
  harness.sent();

  harness.deliver("FULL_STATE", { topology: topology(body("d0")), view: "own" });
  const resent = harness.sent();
  expect(resent).toHaveLength(1);
  expect(resent[0].kind).toBe("UPDATE");
  const view = buildViewModel(inputsOf(harness));
  expect(view.bodies[0].arms.find((a) => a.arm === "+x")!.target).toBe(35);
});

test("quiescent state equals the hub's full state after drags and remote edits", () => {
  const harness = new Harness();
  harness.start(topology(body("d0"), body("d1")));
  harness.client.dragArm("d0", "+x", 35);
  const [update] = harness.sent();
  const mine = (update.payload.updates as Array<Record<string, unknown>>)[0];
  harness.deliver("UPDATE", {
    updates: [
      { substructure: "d1", arm: "-y", target: 20, jointed: false, stamp: { lamport: 9, actor: "d1" } },
    ],
  });
  const hubState = topology(
    body("d0", { "+x": { extension: 35, target: 35, stamp: mine.stamp as never } }),
    body("d1", { "-y": { extension: 20, target: 20, stamp: { lamport: 9, actor: "d1" } } }),
  );
  harness.deliver("FULL_STATE", { topology: hubState, view: "own" });
  while (harness.client.tick(50)) {
    // let the local animation settle
  }
  expect(replicaToJson(harness.client.replica)).toEqual(hubState);
});

test("follower divergence indicator sets on drag and clears on resync", () => {
  const harness = new Harness("follower", "present");
  harness.start(topology(body("d0")), "follower");
  expect(harness.client.diverged).toBe(false);
  harness.client.dragArm("d0", "+z", 12);
  harness.sent();
  expect(harness.client.diverged).toBe(true);
  expect(buildViewModel(inputsOf(harness)).diverged).toBe(true);

  harness.client.requestFullState("authoritative");
  harness.sent();
  harness.deliver("FULL_STATE", { topology: topology(body("d0")), view: "authoritative" });
  expect(harness.client.diverged).toBe(false);
  const arm = harness.client.replica.bodies.get("d0")!.arms["+z"];
  expect(arm.target).toBe(0); // local design discarded by explicit resync
});

test("reconnect backs off and recovers state through a fresh hello", () => {
  const timers: Array<{ fn: () => void; ms: number }> = [];
  const harness = new Harness();
  (harness.client as unknown as { opts: { setTimer: unknown } }).opts.setTimer = (
    fn: () => void,
    ms: number,
  ) => {
    timers.push({ fn, ms });
    return timers.length;
  };
  harness.start(topology(body("d0")));
  harness.socket.dropConnection();
  expect(harness.client.status).toBe("reconnecting");
  expect(timers[0].ms).toBe(500);
  timers[0].fn(); // reconnect attempt reuses the same fake socket
  harness.socket.openNow();
  const [hello] = harness.sent();
  expect(hello.kind).toBe("HELLO");
  expect(hello.seq).toBe(1); // fresh connection, fresh seq space
});
