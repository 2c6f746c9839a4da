export interface Point {
  x: number;
  y: number;
}

export interface Box {
  x: number;
  y: number;
  width: number;
  height: number;
}

export function imageToScreen(v: number, zoom: number): number {
  return v * zoom;
}

export function screenToImage(v: number, zoom: number): number {
  return v / zoom;
}

function clamp(v: number, lo: number, hi: number): number {
  return Math.min(hi, Math.max(lo, v));
}

// Screen-space drag corners -> integer image-space box. Corners snap to the
// nearest pixel edge and are clipped to the image, so the result always
// satisfies the server's bounds check. Degenerate drags return null.
export function dragToBox(
  start: Point,
  end: Point,
  zoom: number,
  imageWidth: number,
  imageHeight: number,
): Box | null {
  const x0 = Math.round(clamp(screenToImage(Math.min(start.x, end.x), zoom), 0, imageWidth));
  const x1 = Math.round(clamp(screenToImage(Math.max(start.x, end.x), zoom), 0, imageWidth));
  const y0 = Math.round(clamp(screenToImage(Math.min(start.y, end.y), zoom), 0, imageHeight));
  const y1 = Math.round(clamp(screenToImage(Math.max(start.y, end.y), zoom), 0, imageHeight));
  if (x1 - x0 < 1 || y1 - y0 < 1) return null;
  return { x: x0, y: y0, width: x1 - x0, height: y1 - y0 };
}

export function boxContains(box: Box, imageX: number, imageY: number): boolean {
  return (
    imageX >= box.x && imageX < box.x + box.width && imageY >= box.y && imageY < box.y + box.height
  );
}
