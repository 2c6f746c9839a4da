export const CHANNELS = ["standard", "direct", "global", "diffuse", "specular"] as const;
export type Channel = (typeof CHANNELS)[number];

export type Task = "detection" | "segmentation";

// Class names double as task markers server-side, so the two lists must not
// overlap. Order matters: the 1/2/3 keys index into it.
export const TASK_CLASSES: Record<Task, readonly string[]> = {
  detection: ["background", "berry"],
  segmentation: ["wax", "nowax", "other"],
};

export function taskOfLabel(label: string): Task | null {
  if (TASK_CLASSES.detection.includes(label)) return "detection";
  if (TASK_CLASSES.segmentation.includes(label)) return "segmentation";
  return null;
}

// Image-space integer rectangle; the canvas only ever scales it for display.
export interface CanvasRectangle {
  x: number;
  y: number;
  width: number;
  height: number;
  label: string;
  task: Task;
  selected: boolean;
}

export interface ImageEntry {
  id: string;
  cultivar: string;
  width: number;
  height: number;
  channels: string[];
  labels: number;
  version: number;
}

export interface SidecarRect {
  x: number;
  y: number;
  width: number;
  height: number;
  label: string;
}

export interface SidecarDoc {
  format_version: number;
  capture_id: string;
  annotator?: string;
  rectangles: SidecarRect[];
  version: number;
}
