/**
 * Canvas renderer: isometric projection of the assembly, with direct arm
 * dragging. Bodies draw as cubes, arms as sticks whose length is the live
 * extension; dragging an arm slides it along its own axis.
 */

import { ArmKey, BODY_EDGE_MM, armAxis, armSign } from "./model.js";
import { Vec3 } from "./embedding.js";
import { ArmView, BodyView, ViewModel } from "./viewmodel.js";

const COS30 = Math.cos(Math.PI / 6);
const SIN30 = Math.sin(Math.PI / 6);

export interface DragHit {
  substructure: string;
  arm: ArmKey;
  /** px of screen travel per mm of extension, along the drag direction */
  px: { x: number; y: number };
  startExtension: number;
}

interface Projected {
  x: number;
  y: number;
  depth: number;
}

export class SceneRenderer {
  private scale = 0.9;
  private offsetX = 0;
  private offsetY = 0;

  constructor(private readonly canvas: HTMLCanvasElement) {}

  project(point: Vec3): Projected {
    // classic isometric: x to the right-down, y to the left-down, z up
    const x = (point[0] - point[1]) * COS30;
    const y = (point[0] + point[1]) * SIN30 - point[2];
    return {
      x: this.offsetX + x * this.scale,
      y: this.offsetY + y * this.scale,
      depth: point[0] + point[1] + point[2],
    };
  }

  private fit(bodies: BodyView[]): void {
    const { width, height } = this.canvas;
    if (bodies.length === 0) {
      this.offsetX = width / 2;
      this.offsetY = height / 2;
      return;
    }
    let minX = Infinity;
    let maxX = -Infinity;
    let minY = Infinity;
    let maxY = -Infinity;
    for (const body of bodies) {
      const p = this.project0(body.position);
      minX = Math.min(minX, p.x);
      maxX = Math.max(maxX, p.x);
      minY = Math.min(minY, p.y);
      maxY = Math.max(maxY, p.y);
    }
    const margin = 180;
    const spanX = maxX - minX + margin * 2;
    const spanY = maxY - minY + margin * 2;
    this.scale = Math.min(width / spanX, height / spanY, 1.4);
    this.offsetX = width / 2 - ((minX + maxX) / 2) * this.scale;
    this.offsetY = height / 2 - ((minY + maxY) / 2) * this.scale;
  }

  private project0(point: Vec3): { x: number; y: number } {
    return {
      x: (point[0] - point[1]) * COS30,
      y: (point[0] + point[1]) * SIN30 - point[2],
    };
  }

  render(view: ViewModel): DragHit[] {
    const ctx = this.canvas.getContext("2d");
    if (ctx === null) return [];
    this.fit(view.bodies);
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);
    const hits: DragHit[] = [];
    const ordered = [...view.bodies].sort(
      (a, b) =>
        a.position[0] + a.position[1] + a.position[2] -
        (b.position[0] + b.position[1] + b.position[2]),
    );
    for (const body of ordered) {
      this.drawBody(ctx, body, hits);
    }
    return hits;
  }

  private drawBody(ctx: CanvasRenderingContext2D, body: BodyView, hits: DragHit[]): void {
    const half = BODY_EDGE_MM / 2;
    const [cx, cy, cz] = body.position;
    for (const arm of body.arms) {
      this.drawArm(ctx, body.id, [cx, cy, cz], half, arm, hits);
    }
    const corners: Vec3[] = [];
    for (const dx of [-half, half])
      for (const dy of [-half, half])
        for (const dz of [-half, half]) corners.push([cx + dx, cy + dy, cz + dz]);
    const projected = corners.map((c) => this.project(c));
    const faces = [
      [0, 1, 3, 2],
      [4, 5, 7, 6],
      [0, 1, 5, 4],
      [2, 3, 7, 6],
      [0, 2, 6, 4],
      [1, 3, 7, 5],
    ];
    ctx.lineWidth = 1.2;
    ctx.strokeStyle = body.inconsistent ? "#d4422e" : "#46607a";
    ctx.fillStyle = body.inconsistent ? "rgba(212,66,46,0.18)" : "rgba(99,141,178,0.22)";
    for (const face of faces) {
      ctx.beginPath();
      face.forEach((index, i) => {
        const p = projected[index];
        if (i === 0) ctx.moveTo(p.x, p.y);
        else ctx.lineTo(p.x, p.y);
      });
      ctx.closePath();
      ctx.fill();
      ctx.stroke();
    }
    const center = this.project(body.position);
    ctx.fillStyle = "#1d3146";
    ctx.font = "12px system-ui, sans-serif";
    ctx.textAlign = "center";
    ctx.fillText(body.id, center.x, center.y + 4);
  }

  private drawArm(
    ctx: CanvasRenderingContext2D,
    bodyId: string,
    center: Vec3,
    half: number,
    arm: ArmView,
    hits: DragHit[],
  ): void {
    const axis = armAxis(arm.arm);
    const sign = armSign(arm.arm);
    const base: Vec3 = [...center] as Vec3;
    base[axis] += sign * half;
    const tip: Vec3 = [...base] as Vec3;
    tip[axis] += sign * Math.max(arm.extension, 1);
    const from = this.project(base);
    const to = this.project(tip);
    ctx.lineWidth = arm.dragging ? 6 : 4;
    ctx.strokeStyle = arm.jointed ? "#b58a2c" : arm.dragging ? "#2e7dd4" : "#7b93a8";
    ctx.beginPath();
    ctx.moveTo(from.x, from.y);
    ctx.lineTo(to.x, to.y);
    ctx.stroke();
    ctx.beginPath();
    ctx.fillStyle = arm.jointed ? "#b58a2c" : "#3c6e91";
    ctx.arc(to.x, to.y, arm.dragging ? 8 : 6, 0, Math.PI * 2);
    ctx.fill();

    // one mm of extension moves the tip by this many screen px
    const unit: Vec3 = [0, 0, 0];
    unit[axis] = sign;
    const step = this.project([
      center[0] + unit[0],
      center[1] + unit[1],
      center[2] + unit[2],
    ]);
    const origin = this.project(center);
    hits.push({
      substructure: bodyId,
      arm: arm.arm,
      px: { x: step.x - origin.x, y: step.y - origin.y },
      startExtension: arm.extension,
    });
  }

  /** Hit-test a pointer position against the arm tips of the last render. */
  pick(view: ViewModel, px: number, py: number): DragHit | null {
    const hits = this.render(view);
    let best: DragHit | null = null;
    let bestDistance = 18; // px grab radius
    for (const body of view.bodies) {
      for (const arm of body.arms) {
        const axis = armAxis(arm.arm);
        const sign = armSign(arm.arm);
        const tip: Vec3 = [...body.position] as Vec3;
        tip[axis] += sign * (BODY_EDGE_MM / 2 + Math.max(arm.extension, 1));
        const p = this.project(tip);
        const distance = Math.hypot(p.x - px, p.y - py);
        if (distance < bestDistance) {
          bestDistance = distance;
          best =
            hits.find((h) => h.substructure === body.id && h.arm === arm.arm) ?? null;
        }
      }
    }
    return best;
  }
}
