/**
 * Page wiring: query parameters pick the hub/session/identity, the client
 * keeps the replica live, the renderer draws it and feeds drags back.
 *
 *   index.html?hub=ws://127.0.0.1:7071&session=demo&client=web-1&role=peer
 */

import { HubClient, Role } from "./client.js";
import { ArmKey } from "./model.js";
import { SceneRenderer, DragHit } from "./render.js";
import { buildViewModel, ViewModel } from "./viewmodel.js";

function query(name: string, fallback: string): string {
  return new URLSearchParams(window.location.search).get(name) ?? fallback;
}

const hubUrl = query("hub", "ws://127.0.0.1:7071");
const session = query("session", "demo");
const clientId = query("client", `web-${Math.random().toString(36).slice(2, 8)}`);
const roleParam = query("role", "");
const role = (["peer", "presenter", "follower"].includes(roleParam) ? roleParam : null) as
  | Role
  | null;

const client = new HubClient({ url: hubUrl, session, clientId, role });

const canvas = document.getElementById("scene") as HTMLCanvasElement;
const renderer = new SceneRenderer(canvas);

const roleBadge = document.getElementById("role-badge")!;
const statusBanner = document.getElementById("status")!;
const divergedBadge = document.getElementById("diverged")!;
const errorBanner = document.getElementById("error")!;
const snapshotList = document.getElementById("snapshot-list")!;
const memberList = document.getElementById("members")!;

let dragging: DragHit | null = null;
let dragStart = { x: 0, y: 0 };

function view(): ViewModel {
  return buildViewModel({
    session: client.session,
    clientId: client.clientId,
    role: client.role,
    status: client.status,
    diverged: client.diverged,
    replica: client.replica,
    snapshots: client.snapshots,
    members: client.members,
    error: client.lastError,
    dragTarget: dragging ? { substructure: dragging.substructure, arm: dragging.arm } : null,
  });
}

function redraw(): void {
  const vm = view();
  renderer.render(vm);
  roleBadge.textContent = vm.role ?? "-";
  roleBadge.className = `badge role-${vm.role ?? "none"}`;
  statusBanner.textContent = vm.status;
  statusBanner.className = `badge status-${vm.status}`;
  divergedBadge.style.display = vm.diverged ? "inline-block" : "none";
  if (vm.error) {
    errorBanner.textContent = `${vm.error.code}: ${vm.error.detail}`;
    errorBanner.style.display = "block";
  } else {
    errorBanner.style.display = "none";
  }
  memberList.textContent = Object.entries(vm.members)
    .map(([id, memberRole]) => `${id} (${memberRole})`)
    .join(", ");
  renderSnapshots(vm);
}

function renderSnapshots(vm: ViewModel): void {
  snapshotList.innerHTML = "";
  if (vm.snapshots.length === 0) {
    const empty = document.createElement("li");
    empty.textContent = "no snapshots";
    empty.className = "empty";
    snapshotList.appendChild(empty);
    return;
  }
  for (const snap of vm.snapshots) {
    const item = document.createElement("li");
    const label = document.createElement("span");
    label.textContent = `${snap.label || snap.snapshot_id} · ${new Date(
      snap.created_at,
    ).toLocaleTimeString()}`;
    const restore = document.createElement("button");
    restore.textContent = "restore";
    restore.onclick = () => client.restoreSnapshot(snap.snapshot_id);
    item.append(label, restore);
    snapshotList.appendChild(item);
  }
}

canvas.addEventListener("pointerdown", (event) => {
  if (client.status !== "online") return; // disconnected drags are disabled
  const rect = canvas.getBoundingClientRect();
  const hit = renderer.pick(view(), event.clientX - rect.left, event.clientY - rect.top);
  if (hit) {
    dragging = hit;
    dragStart = { x: event.clientX, y: event.clientY };
    canvas.setPointerCapture(event.pointerId);
  }
});

canvas.addEventListener("pointermove", (event) => {
  if (dragging === null) return;
  const dx = event.clientX - dragStart.x;
  const dy = event.clientY - dragStart.y;
  const axisLen = Math.hypot(dragging.px.x, dragging.px.y);
  if (axisLen === 0) return;
  const along = (dx * dragging.px.x + dy * dragging.px.y) / (axisLen * axisLen);
  client.dragArm(dragging.substructure, dragging.arm, dragging.startExtension + along);
});

canvas.addEventListener("pointerup", () => {
  dragging = null;
  redraw();
});

(document.getElementById("snapshot-save") as HTMLButtonElement).onclick = () => {
  const input = document.getElementById("snapshot-label") as HTMLInputElement;
  client.saveSnapshot(input.value || "untitled");
  input.value = "";
};

(document.getElementById("resync") as HTMLButtonElement).onclick = () => {
  client.requestFullState("authoritative");
};

const joinForm = document.getElementById("join-form") as HTMLFormElement;
joinForm.onsubmit = (event) => {
  event.preventDefault();
  const from = (document.getElementById("join-from") as HTMLInputElement).value.trim();
  const arm = (document.getElementById("join-arm") as HTMLSelectElement).value as ArmKey;
  const to = (document.getElementById("join-to") as HTMLInputElement).value.trim();
  if (from && to) client.addJoint(from, arm, to);
};

client.onchange = redraw;

let lastFrame = performance.now();
function frame(now: number): void {
  const dt = Math.min(now - lastFrame, 100);
  lastFrame = now;
  client.tick(dt); // arms glide toward targets; restores animate, not teleport
  redraw();
  requestAnimationFrame(frame);
}

client.connect();
requestAnimationFrame(frame);
