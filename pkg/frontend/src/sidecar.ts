import { CanvasRectangle, SidecarDoc, SidecarRect, taskOfLabel } from "./types.js";

// Everything the server would reject must be rejected here first: strict
// integers, non-negative origin, positive side lengths, a known class name,
// and the rectangle fully inside the image.
export function rectangleProblem(
  rect: SidecarRect,
  imageWidth: number,
  imageHeight: number,
): string | null {
  for (const key of ["x", "y", "width", "height"] as const) {
    const v = rect[key];
    if (typeof v !== "number" || !Number.isInteger(v)) return `${key} must be an integer`;
  }
  if (rect.x < 0 || rect.y < 0) return "origin must be non-negative";
  if (rect.width < 1 || rect.height < 1) return "sides must be at least 1 pixel";
  if (taskOfLabel(rect.label) === null) return `unknown class ${JSON.stringify(rect.label)}`;
  if (rect.x + rect.width > imageWidth || rect.y + rect.height > imageHeight) {
    return `rectangle exceeds the ${imageWidth}x${imageHeight} image`;
  }
  return null;
}

export function toSidecarRect(rect: CanvasRectangle): SidecarRect {
  return { x: rect.x, y: rect.y, width: rect.width, height: rect.height, label: rect.label };
}

export function fromSidecarRect(raw: SidecarRect): CanvasRectangle {
  const task = taskOfLabel(raw.label);
  if (task === null) throw new Error(`unknown class ${JSON.stringify(raw.label)}`);
  return {
    x: raw.x,
    y: raw.y,
    width: raw.width,
    height: raw.height,
    label: raw.label,
    task,
    selected: false,
  };
}

export function parseSidecar(doc: SidecarDoc): CanvasRectangle[] {
  return doc.rectangles.map(fromSidecarRect);
}

// PUT body: the version we based our edit on plus the full rectangle set.
export function putBody(
  version: number,
  rectangles: CanvasRectangle[],
): { version: number; rectangles: SidecarRect[] } {
  return { version, rectangles: rectangles.map(toSidecarRect) };
}
