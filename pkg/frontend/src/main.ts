// Page wiring: load a photo and its label map, retrieve references, drag
// lattice points, and round-trip every edit through the service.

import { ApiError, Client } from "./api.js";
import { decodePng, drawLabelOverlay, drawLattice, labelGridFromPng,
  nearestLatticePoint, renderLegend } from "./render.js";
import { EditSession } from "./session.js";

const SCALE = 6;

const client = new Client("");
let session: EditSession | null = null;
let gridSize = 64;
let activePoint: number | null = null;

const $ = <T extends HTMLElement>(id: string) => document.getElementById(id) as T;

function fileToBase64(file: File): Promise<string> {
  return new Promise((resolve, reject) => {
    const reader = new FileReader();
    reader.onload = () => {
      const url = reader.result as string;
      resolve(url.slice(url.indexOf(",") + 1));
    };
    reader.onerror = () => reject(reader.error);
    reader.readAsDataURL(file);
  });
}

function setStatus(text: string, isError = false): void {
  const el = $("status");
  el.textContent = text;
  el.className = isError ? "error" : "";
}

async function redraw(): Promise<void> {
  if (!session) return;
  const canvas = $("editor") as unknown as HTMLCanvasElement;
  const ctx = canvas.getContext("2d")!;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const photo = await decodePng(session.photoPng);
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(photo, 0, 0, gridSize * SCALE, gridSize * SCALE);
  const grid = await labelGridFromPng(session.currentLabelsPng);
  drawLabelOverlay(ctx, grid.labels, grid.width, grid.height, SCALE);
  drawLattice(ctx, session.lattice, SCALE, activePoint);

  const preview = $("preview") as unknown as HTMLCanvasElement;
  const pctx = preview.getContext("2d")!;
  pctx.clearRect(0, 0, preview.width, preview.height);
  if (session.preview) {
    const img = await decodePng(session.preview.imagePng);
    pctx.imageSmoothingEnabled = false;
    pctx.drawImage(img, 0, 0, gridSize * SCALE, gridSize * SCALE);
    renderLegend($("legend"), session.preview.counts);
  }
  ($("undo") as HTMLButtonElement).disabled = !session.canUndo;
}

async function loadSession(): Promise<void> {
  const photoFile = ($("photo-file") as HTMLInputElement).files?.[0];
  const labelsFile = ($("labels-file") as HTMLInputElement).files?.[0];
  if (!photoFile || !labelsFile) {
    setStatus("choose a photo PNG and a label-map PNG first", true);
    return;
  }
  const photoPng = await fileToBase64(photoFile);
  const labelsPng = await fileToBase64(labelsFile);
  const grid = await labelGridFromPng(labelsPng);
  gridSize = grid.width;
  const canvas = $("editor") as unknown as HTMLCanvasElement;
  canvas.width = canvas.height = gridSize * SCALE;
  const preview = $("preview") as unknown as HTMLCanvasElement;
  preview.width = preview.height = gridSize * SCALE;
  session = new EditSession(client, photoPng, labelsPng, grid.height, grid.width);
  setStatus(`session loaded (${grid.width}x${grid.height})`);
  await redraw();
}

async function retrieveReferences(): Promise<void> {
  if (!session) return;
  try {
    const results = await client.retrieve(session.currentLabelsPng);
    const list = $("gallery");
    list.innerHTML = "";
    for (const r of results) {
      const item = document.createElement("button");
      item.textContent = `${r.record_id} (${r.distance.toFixed(3)})`;
      item.onclick = async () => {
        const record = await client.gallery(r.record_id);
        session!.selectReference(r.record_id, record.labels_png);
        setStatus(`reference ${r.record_id} selected`);
      };
      list.appendChild(item);
    }
    setStatus(`retrieved ${results.length} references`);
  } catch (err) {
    setStatus(err instanceof ApiError ? err.message : String(err), true);
  }
}

async function applyEdit(): Promise<void> {
  if (!session) return;
  setStatus("applying...");
  try {
    await session.applyEdit();
    setStatus("applied");
  } catch (err) {
    setStatus(`${err instanceof Error ? err.message : err} - session kept, retry`, true);
  }
  await redraw();
}

function wireCanvas(): void {
  const canvas = $("editor") as unknown as HTMLCanvasElement;
  let dragging = false;
  canvas.addEventListener("mousedown", (ev) => {
    if (!session) return;
    const rect = canvas.getBoundingClientRect();
    const col = (ev.clientX - rect.left) / SCALE;
    const row = (ev.clientY - rect.top) / SCALE;
    activePoint = nearestLatticePoint(session.lattice, row, col, 4);
    dragging = activePoint !== null;
    void redraw();
  });
  canvas.addEventListener("mousemove", (ev) => {
    if (!dragging || activePoint === null || !session) return;
    const rect = canvas.getBoundingClientRect();
    const col = (ev.clientX - rect.left) / SCALE;
    const row = (ev.clientY - rect.top) / SCALE;
    const anchor = session.lattice[activePoint].anchor;
    session.setDisplacement(activePoint, row - anchor[0], col - anchor[1]);
    void redraw();
  });
  window.addEventListener("mouseup", () => {
    dragging = false;
  });
}

function wireControls(): void {
  $("load").onclick = () => void loadSession();
  $("retrieve").onclick = () => void retrieveReferences();
  $("apply").onclick = () => void applyEdit();
  $("undo").onclick = () => {
    session?.undo();
    void redraw();
  };
  const slider = $("t-slider") as HTMLInputElement;
  slider.oninput = () => {
    session?.setInterpolation(Number(slider.value) / 100);
    $("t-value").textContent = (Number(slider.value) / 100).toFixed(2);
  };
}

window.addEventListener("DOMContentLoaded", () => {
  wireControls();
  wireCanvas();
  void client.health()
    .then((h) => setStatus(`service up, gallery size ${h.index_size}`))
    .catch(() => setStatus("service unreachable", true));
});
