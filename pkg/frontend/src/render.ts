// Canvas rendering: photo underlay, label-map overlay colored from the
// palette, and the draggable control-point lattice.

import type { ControlPoint } from "./types.js";

// One color per component index; matches the 11 default categories but
// cycles for larger palettes.
const COMPONENT_COLORS: [number, number, number][] = [
  [40, 40, 40],     // background
  [240, 195, 160],  // skin
  [120, 85, 40],    // left brow
  [140, 100, 50],   // right brow
  [70, 130, 200],   // left eye
  [90, 150, 220],   // right eye
  [220, 150, 120],  // nose
  [200, 70, 90],    // upper lip
  [130, 30, 45],    // inner mouth
  [180, 60, 80],    // lower lip
  [60, 40, 25],     // hair
];

export function componentColor(label: number): [number, number, number] {
  return COMPONENT_COLORS[label % COMPONENT_COLORS.length];
}

export async function decodePng(base64Png: string): Promise<ImageBitmap> {
  const bytes = Uint8Array.from(atob(base64Png), (c) => c.charCodeAt(0));
  return createImageBitmap(new Blob([bytes], { type: "image/png" }));
}

export async function labelGridFromPng(base64Png: string): Promise<{
  labels: Uint8Array;
  width: number;
  height: number;
}> {
  const bitmap = await decodePng(base64Png);
  const canvas = document.createElement("canvas");
  canvas.width = bitmap.width;
  canvas.height = bitmap.height;
  const ctx = canvas.getContext("2d")!;
  ctx.drawImage(bitmap, 0, 0);
  const data = ctx.getImageData(0, 0, bitmap.width, bitmap.height).data;
  const labels = new Uint8Array(bitmap.width * bitmap.height);
  for (let i = 0; i < labels.length; i++) labels[i] = data[i * 4]; // grayscale PNG
  return { labels, width: bitmap.width, height: bitmap.height };
}

export function drawLabelOverlay(
  ctx: CanvasRenderingContext2D,
  labels: Uint8Array,
  gridWidth: number,
  gridHeight: number,
  scale: number,
  alpha = 0.45,
): void {
  const image = ctx.createImageData(gridWidth, gridHeight);
  for (let i = 0; i < labels.length; i++) {
    const [r, g, b] = componentColor(labels[i]);
    image.data[i * 4] = r;
    image.data[i * 4 + 1] = g;
    image.data[i * 4 + 2] = b;
    image.data[i * 4 + 3] = Math.round(alpha * 255);
  }
  const off = document.createElement("canvas");
  off.width = gridWidth;
  off.height = gridHeight;
  off.getContext("2d")!.putImageData(image, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(off, 0, 0, gridWidth * scale, gridHeight * scale);
}

export function drawLattice(
  ctx: CanvasRenderingContext2D,
  lattice: ControlPoint[],
  scale: number,
  activeIndex: number | null,
): void {
  for (let i = 0; i < lattice.length; i++) {
    const p = lattice[i];
    const row = p.anchor[0] + p.displacement[0];
    const col = p.anchor[1] + p.displacement[1];
    const moved = p.displacement[0] !== 0 || p.displacement[1] !== 0;
    if (moved) {
      ctx.strokeStyle = "rgba(255, 210, 0, 0.9)";
      ctx.beginPath();
      ctx.moveTo(p.anchor[1] * scale, p.anchor[0] * scale);
      ctx.lineTo(col * scale, row * scale);
      ctx.stroke();
    }
    ctx.fillStyle = i === activeIndex ? "#ff3b30"
      : moved ? "#ffd200" : "rgba(255, 255, 255, 0.85)";
    ctx.beginPath();
    ctx.arc(col * scale, row * scale, i === activeIndex ? 5 : 3.5, 0, Math.PI * 2);
    ctx.fill();
    ctx.strokeStyle = "rgba(0,0,0,0.6)";
    ctx.stroke();
  }
}

export function nearestLatticePoint(
  lattice: ControlPoint[],
  row: number,
  col: number,
  maxDistance: number,
): number | null {
  let best: number | null = null;
  let bestD = maxDistance * maxDistance;
  for (let i = 0; i < lattice.length; i++) {
    const p = lattice[i];
    const dr = p.anchor[0] + p.displacement[0] - row;
    const dc = p.anchor[1] + p.displacement[1] - col;
    const d = dr * dr + dc * dc;
    if (d < bestD) {
      best = i;
      bestD = d;
    }
  }
  return best;
}

export function renderLegend(
  container: HTMLElement,
  counts: Record<string, number>,
): void {
  container.innerHTML = "";
  const names = Object.keys(counts);
  names.forEach((name, idx) => {
    const [r, g, b] = componentColor(idx);
    const row = document.createElement("div");
    row.className = "legend-row";
    row.innerHTML = `<span class="swatch" style="background: rgb(${r},${g},${b})"></span>` +
      `<span class="name">${name}</span>` +
      `<span class="count">${counts[name].toFixed(1)}</span>`;
    container.appendChild(row);
  });
}
