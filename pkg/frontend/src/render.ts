import { Box, imageToScreen } from "./geometry.js";
import { CanvasRectangle } from "./types.js";

// Matches the pipeline's overlay palette for the segmentation classes.
export const CLASS_COLORS: Record<string, string> = {
  wax: "#2ecc40",
  nowax: "#ff4136",
  other: "#0074d9",
  berry: "#ffdc00",
  background: "#9b9b9b",
};

export function drawScene(
  ctx: CanvasRenderingContext2D,
  image: CanvasImageSource | null,
  imageWidth: number,
  imageHeight: number,
  zoom: number,
  rectangles: CanvasRectangle[],
  preview: Box | null,
): void {
  ctx.canvas.width = imageToScreen(imageWidth, zoom);
  ctx.canvas.height = imageToScreen(imageHeight, zoom);
  ctx.imageSmoothingEnabled = false;
  ctx.clearRect(0, 0, ctx.canvas.width, ctx.canvas.height);
  if (image) {
    ctx.drawImage(image, 0, 0, ctx.canvas.width, ctx.canvas.height);
  }

  for (const rect of rectangles) {
    const x = imageToScreen(rect.x, zoom);
    const y = imageToScreen(rect.y, zoom);
    const w = imageToScreen(rect.width, zoom);
    const h = imageToScreen(rect.height, zoom);
    const color = CLASS_COLORS[rect.label] ?? "#ffffff";
    if (rect.selected) {
      ctx.fillStyle = color + "33";
      ctx.fillRect(x, y, w, h);
    }
    ctx.strokeStyle = color;
    ctx.lineWidth = rect.selected ? 3 : 2;
    ctx.strokeRect(x + 0.5, y + 0.5, w - 1, h - 1);
    ctx.fillStyle = color;
    ctx.font = "12px sans-serif";
    ctx.fillText(rect.label, x + 3, y + 13);
  }

  if (preview) {
    ctx.strokeStyle = "#ffffff";
    ctx.setLineDash([5, 4]);
    ctx.lineWidth = 1;
    ctx.strokeRect(
      imageToScreen(preview.x, zoom) + 0.5,
      imageToScreen(preview.y, zoom) + 0.5,
      imageToScreen(preview.width, zoom) - 1,
      imageToScreen(preview.height, zoom) - 1,
    );
    ctx.setLineDash([]);
  }
}
