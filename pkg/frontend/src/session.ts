// Edit-session state machine: lattice control points over the photo's
// parsing map, server-round-trip previews, and an undo stack.
//
// All map math happens server-side; the session only ever changes label
// data by submitting lattice displacements to /edit and echoing the
// response. Metrics shown in the UI come from server responses verbatim.

import { Client } from "./api.js";
import type { ControlPoint, Preview, TransformResponse } from "./types.js";

export interface SessionSnapshot {
  photoPng: string;
  sourceLabelsPng: string;
  currentLabelsPng: string;
  lattice: ControlPoint[];
  selectedRecord: string | null;
  referenceLabelsPng: string | null;
  t: number;
  preview: Preview | null;
}

export function uniformLattice(
  height: number,
  width: number,
  pointsPerSide = 5,
): ControlPoint[] {
  const points: ControlPoint[] = [];
  for (let i = 0; i < pointsPerSide; i++) {
    for (let j = 0; j < pointsPerSide; j++) {
      const row = Math.round((i * (height - 1)) / (pointsPerSide - 1));
      const col = Math.round((j * (width - 1)) / (pointsPerSide - 1));
      points.push({ anchor: [row, col], displacement: [0, 0] });
    }
  }
  return points;
}

function collinear(points: ControlPoint[]): boolean {
  if (points.length < 3) return true;
  const [r0, c0] = points[0].anchor;
  for (let i = 1; i < points.length - 1; i++) {
    for (let j = i + 1; j < points.length; j++) {
      const [r1, c1] = points[i].anchor;
      const [r2, c2] = points[j].anchor;
      const cross = (r1 - r0) * (c2 - c0) - (r2 - r0) * (c1 - c0);
      if (Math.abs(cross) > 1e-9) return false;
    }
  }
  return true;
}

export class EditSession {
  photoPng: string;
  sourceLabelsPng: string;
  currentLabelsPng: string;
  lattice: ControlPoint[];
  selectedRecord: string | null = null;
  referenceLabelsPng: string | null = null;
  t = 0;
  preview: Preview | null = null;
  lastError: string | null = null;

  private history: SessionSnapshot[] = [];
  private lastCommitted: SessionSnapshot;
  private inFlight = false;
  private queued: (() => Promise<void>) | null = null;

  constructor(
    private client: Client,
    photoPng: string,
    labelsPng: string,
    gridHeight: number,
    gridWidth: number,
  ) {
    this.photoPng = photoPng;
    this.sourceLabelsPng = labelsPng;
    this.currentLabelsPng = labelsPng;
    this.lattice = uniformLattice(gridHeight, gridWidth);
    this.lastCommitted = this.snapshot();
  }

  snapshot(): SessionSnapshot {
    return structuredClone({
      photoPng: this.photoPng,
      sourceLabelsPng: this.sourceLabelsPng,
      currentLabelsPng: this.currentLabelsPng,
      lattice: this.lattice,
      selectedRecord: this.selectedRecord,
      referenceLabelsPng: this.referenceLabelsPng,
      t: this.t,
      preview: this.preview,
    });
  }

  restore(snap: SessionSnapshot): void {
    const copy = structuredClone(snap);
    this.photoPng = copy.photoPng;
    this.sourceLabelsPng = copy.sourceLabelsPng;
    this.currentLabelsPng = copy.currentLabelsPng;
    this.lattice = copy.lattice;
    this.selectedRecord = copy.selectedRecord;
    this.referenceLabelsPng = copy.referenceLabelsPng;
    this.t = copy.t;
    this.preview = copy.preview;
  }

  serialize(): string {
    return JSON.stringify(this.snapshot());
  }

  static deserialize(
    client: Client,
    data: string,
    gridHeight: number,
    gridWidth: number,
  ): EditSession {
    const snap = JSON.parse(data) as SessionSnapshot;
    const session = new EditSession(client, snap.photoPng, snap.sourceLabelsPng,
      gridHeight, gridWidth);
    session.restore(snap);
    return session;
  }

  setDisplacement(index: number, drow: number, dcol: number): void {
    if (!Number.isFinite(drow) || !Number.isFinite(dcol)) {
      throw new Error("displacement must be finite");
    }
    this.lattice[index] = {
      anchor: this.lattice[index].anchor,
      displacement: [drow, dcol],
    };
  }

  setInterpolation(t: number): void {
    if (!(t >= 0 && t <= 1)) throw new Error("t must lie in [0, 1]");
    this.t = t;
  }

  selectReference(recordId: string, labelsPng: string): void {
    this.selectedRecord = recordId;
    this.referenceLabelsPng = labelsPng;
  }

  get canUndo(): boolean {
    return this.history.length > 0;
  }

  undo(): void {
    const prev = this.history.pop();
    if (prev) {
      this.restore(prev);
      this.lastCommitted = structuredClone(prev);
    }
  }

  /** POST /edit then the preview transform; previous state is retained for
   * undo. One request runs at a time; a re-entrant call queues and
   * supersedes any edit already waiting. */
  applyEdit(): Promise<void> {
    if (this.inFlight) {
      return new Promise((resolve, reject) => {
        this.queued = () => this.runApply().then(resolve, reject);
      });
    }
    return this.runApply();
  }

  private async runApply(): Promise<void> {
    if (collinear(this.lattice)) {
      throw new Error("lattice needs at least 3 non-collinear points");
    }
    this.inFlight = true;
    try {
      const edited = await this.client.edit(this.currentLabelsPng, this.lattice);
      const preview = await this.transformPreview(edited.labels_png);
      // commit only after both calls succeeded; the undo entry is the
      // previous committed state, so undo discards the drag as well
      this.history.push(this.lastCommitted);
      this.currentLabelsPng = edited.labels_png;
      this.lattice = this.lattice.map((p) => ({
        anchor: [p.anchor[0] + p.displacement[0], p.anchor[1] + p.displacement[1]],
        displacement: [0, 0],
      }));
      this.preview = {
        imagePng: preview.image_png,
        labelsPng: preview.fake_labels_png,
        counts: preview.component_counts,
      };
      this.lastError = null;
      this.lastCommitted = this.snapshot();
    } catch (err) {
      // session state untouched: the user can retry
      this.lastError = err instanceof Error ? err.message : String(err);
      throw err;
    } finally {
      this.inFlight = false;
      const next = this.queued;
      this.queued = null;
      if (next) void next();
    }
  }

  private transformPreview(labelsPng: string): Promise<TransformResponse> {
    if (this.referenceLabelsPng !== null && this.t > 0) {
      return this.client.interpolate(
        this.photoPng, labelsPng, labelsPng, this.referenceLabelsPng, this.t);
    }
    const reference = this.referenceLabelsPng ?? labelsPng;
    // t = 0 previews the unexaggerated shape: the map's own geometry
    const target = this.t === 0 ? labelsPng : reference;
    return this.client.transform(this.photoPng, labelsPng, target);
  }
}
