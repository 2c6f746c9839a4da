import { AnnotationApi, ApiError } from "./api.js";
import { Box, Point, boxContains, dragToBox } from "./geometry.js";
import { parseSidecar, putBody, rectangleProblem, toSidecarRect } from "./sidecar.js";
import { CanvasRectangle, Channel, ImageEntry, TASK_CLASSES, Task } from "./types.js";

const MIN_ZOOM = 1;
const MAX_ZOOM = 16;

// All UI state and transitions, DOM-free. main.ts subscribes via onChange
// and paints; tests drive the methods directly.
export class AnnotationStore {
  api: AnnotationApi;
  captures: ImageEntry[] = [];
  current: ImageEntry | null = null;
  channel: Channel = "standard";
  task: Task = "segmentation";
  classIndex = 0;
  rectangles: CanvasRectangle[] = [];
  version = 0;
  dirty = false;
  saving = false;
  banner: string | null = null;
  fieldError: string | null = null;
  zoom = 4;
  onChange: (() => void) | null = null;

  constructor(api: AnnotationApi) {
    this.api = api;
  }

  private changed(): void {
    this.onChange?.();
  }

  currentClass(): string {
    const classes = TASK_CLASSES[this.task];
    return classes[Math.min(this.classIndex, classes.length - 1)] as string;
  }

  async loadWorkspace(): Promise<void> {
    try {
      this.captures = await this.api.listImages();
      this.banner = null;
    } catch (err) {
      this.captures = [];
      this.banner = `service unreachable: ${(err as Error).message}`;
    }
    this.changed();
  }

  async select(id: string): Promise<void> {
    const entry = this.captures.find((e) => e.id === id);
    if (!entry) return;
    try {
      const doc = await this.api.getLabels(id);
      this.current = entry;
      this.rectangles = parseSidecar(doc);
      this.version = doc.version;
      this.dirty = false;
      this.banner = null;
      this.fieldError = null;
    } catch (err) {
      this.banner = `could not load labels for ${id}: ${(err as Error).message}`;
    }
    this.changed();
  }

  // Channel switches are pure view changes; in-progress rectangles stay put.
  setChannel(channel: Channel): void {
    this.channel = channel;
    this.changed();
  }

  setTask(task: Task): void {
    this.task = task;
    this.classIndex = 0;
    this.changed();
  }

  toggleTask(): void {
    this.setTask(this.task === "detection" ? "segmentation" : "detection");
  }

  // Keyboard 1/2 (detection) or 1/2/3 (segmentation).
  classKey(digit: number): void {
    if (digit >= 1 && digit <= TASK_CLASSES[this.task].length) {
      this.classIndex = digit - 1;
      this.changed();
    }
  }

  setZoom(zoom: number): void {
    this.zoom = Math.min(MAX_ZOOM, Math.max(MIN_ZOOM, zoom));
    this.changed();
  }

  // Finish a drag gesture (screen coordinates); zero-area drags are dropped.
  commitDrag(start: Point, end: Point): CanvasRectangle | null {
    if (!this.current) return null;
    const box = dragToBox(start, end, this.zoom, this.current.width, this.current.height);
    if (!box) return null;
    const rect: CanvasRectangle = {
      ...box,
      label: this.currentClass(),
      task: this.task,
      selected: true,
    };
    if (rectangleProblem(toSidecarRect(rect), this.current.width, this.current.height)) {
      return null;
    }
    for (const other of this.rectangles) other.selected = false;
    this.rectangles.push(rect);
    this.dirty = true;
    this.changed();
    return rect;
  }

  previewBox(start: Point, end: Point): Box | null {
    if (!this.current) return null;
    return dragToBox(start, end, this.zoom, this.current.width, this.current.height);
  }

  // Click selection: topmost rectangle under the image-space point wins.
  selectAt(imageX: number, imageY: number): boolean {
    let hit: CanvasRectangle | null = null;
    for (let i = this.rectangles.length - 1; i >= 0; i--) {
      const rect = this.rectangles[i] as CanvasRectangle;
      if (hit === null && boxContains(rect, imageX, imageY)) hit = rect;
      rect.selected = false;
    }
    if (hit) hit.selected = true;
    this.changed();
    return hit !== null;
  }

  deleteSelected(): void {
    const kept = this.rectangles.filter((r) => !r.selected);
    if (kept.length !== this.rectangles.length) {
      this.rectangles = kept;
      this.dirty = true;
      this.changed();
    }
  }

  // One in-flight save per capture; the UI stays optimistic (rectangles are
  // kept) and only drops the dirty flag once the server confirms.
  async save(): Promise<boolean> {
    if (!this.current || this.saving) return false;
    if (this.rectangles.length === 0) {
      this.fieldError = "rectangles: draw at least one rectangle before saving";
      this.changed();
      return false;
    }
    this.saving = true;
    this.fieldError = null;
    this.banner = null;
    this.changed();
    try {
      const doc = await this.api.putLabels(this.current.id, putBody(this.version, this.rectangles));
      this.rectangles = parseSidecar(doc);
      this.version = doc.version;
      this.dirty = false;
      return true;
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.banner =
          `labels changed elsewhere (stored version ${err.currentVersion}); ` +
          "reload the capture before saving";
      } else if (err instanceof ApiError && err.field) {
        this.fieldError = `${err.field}: ${err.message}`;
      } else {
        this.banner = `save failed: ${(err as Error).message}`;
      }
      return false;
    } finally {
      this.saving = false;
      this.changed();
    }
  }
}
