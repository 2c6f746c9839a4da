import { AnnotationApi } from "./api.js";
import { Box, Point, screenToImage } from "./geometry.js";
import { CLASS_COLORS, drawScene } from "./render.js";
import { AnnotationStore } from "./store.js";
import { CHANNELS, TASK_CLASSES, Task } from "./types.js";

const store = new AnnotationStore(new AnnotationApi(""));

const app = document.getElementById("app") as HTMLDivElement;
app.innerHTML = `
  <div id="banner" hidden><span id="banner-text"></span><button id="retry">retry</button></div>
  <div id="layout">
    <aside id="sidebar"><h1>waxsep</h1><ul id="capture-list"></ul></aside>
    <main id="work">
      <div id="toolbar">
        <span id="channel-tabs"></span>
        <span id="task-label"></span>
        <span id="class-bar"></span>
        <span id="dirty" hidden>&#9679; unsaved</span>
        <button id="save">save (s)</button>
      </div>
      <div id="field-error" hidden></div>
      <div id="canvas-holder"><canvas id="canvas"></canvas></div>
      <div id="hint">drag: rectangle &middot; click: select &middot; 1-3: class &middot; t: task &middot; del: remove &middot; +/-: zoom</div>
    </main>
  </div>`;

const canvas = document.getElementById("canvas") as HTMLCanvasElement;
const ctx = canvas.getContext("2d") as CanvasRenderingContext2D;

let channelImage: HTMLImageElement | null = null;
let dragStart: Point | null = null;
let preview: Box | null = null;

function canvasPoint(event: MouseEvent): Point {
  const bounds = canvas.getBoundingClientRect();
  return { x: event.clientX - bounds.left, y: event.clientY - bounds.top };
}

function loadChannel(): void {
  channelImage = null;
  if (!store.current) return;
  const img = new Image();
  img.onload = () => {
    channelImage = img;
    paint();
  };
  img.src = store.api.channelUrl(store.current.id, store.channel);
}

function paint(): void {
  const banner = document.getElementById("banner") as HTMLDivElement;
  banner.hidden = store.banner === null;
  (document.getElementById("banner-text") as HTMLSpanElement).textContent = store.banner ?? "";

  const fieldError = document.getElementById("field-error") as HTMLDivElement;
  fieldError.hidden = store.fieldError === null;
  fieldError.textContent = store.fieldError ?? "";

  const list = document.getElementById("capture-list") as HTMLUListElement;
  list.innerHTML = "";
  for (const entry of store.captures) {
    const item = document.createElement("li");
    item.textContent = entry.id;
    const badge = document.createElement("span");
    badge.className = "badge";
    badge.textContent = String(entry.id === store.current?.id ? store.rectangles.length : entry.labels);
    item.appendChild(badge);
    if (entry.id === store.current?.id) item.classList.add("active");
    item.onclick = () => {
      void store.select(entry.id).then(loadChannel);
    };
    list.appendChild(item);
  }

  const tabs = document.getElementById("channel-tabs") as HTMLSpanElement;
  tabs.innerHTML = "";
  for (const channel of CHANNELS) {
    const tab = document.createElement("button");
    tab.textContent = channel;
    tab.className = channel === store.channel ? "tab active" : "tab";
    tab.onclick = () => {
      store.setChannel(channel);
      loadChannel();
    };
    tabs.appendChild(tab);
  }

  (document.getElementById("task-label") as HTMLSpanElement).textContent = store.task;
  const classBar = document.getElementById("class-bar") as HTMLSpanElement;
  classBar.innerHTML = "";
  TASK_CLASSES[store.task].forEach((name, i) => {
    const chip = document.createElement("button");
    chip.textContent = `${i + 1} ${name}`;
    chip.className = "chip" + (name === store.currentClass() ? " active" : "");
    chip.style.borderColor = CLASS_COLORS[name] ?? "#fff";
    chip.onclick = () => store.classKey(i + 1);
    classBar.appendChild(chip);
  });

  (document.getElementById("dirty") as HTMLSpanElement).hidden = !store.dirty;
  (document.getElementById("save") as HTMLButtonElement).disabled = store.saving;

  if (store.current) {
    drawScene(ctx, channelImage, store.current.width, store.current.height, store.zoom, store.rectangles, preview);
  }
}

store.onChange = paint;

canvas.onmousedown = (event) => {
  dragStart = canvasPoint(event);
};

canvas.onmousemove = (event) => {
  if (!dragStart) return;
  preview = store.previewBox(dragStart, canvasPoint(event));
  paint();
};

canvas.onmouseup = (event) => {
  if (!dragStart) return;
  const end = canvasPoint(event);
  const made = store.commitDrag(dragStart, end);
  if (!made) {
    // a click, not a drag: try selection instead
    store.selectAt(
      Math.floor(screenToImage(end.x, store.zoom)),
      Math.floor(screenToImage(end.y, store.zoom)),
    );
  }
  dragStart = null;
  preview = null;
  paint();
};

document.onkeydown = (event) => {
  if (event.target instanceof HTMLInputElement) return;
  if (event.key >= "1" && event.key <= "9") store.classKey(Number(event.key));
  else if (event.key === "t") store.toggleTask();
  else if (event.key === "s") void store.save();
  else if (event.key === "Delete" || event.key === "Backspace") store.deleteSelected();
  else if (event.key === "+" || event.key === "=") store.setZoom(store.zoom + 1);
  else if (event.key === "-") store.setZoom(store.zoom - 1);
  else if (event.key === "Escape") store.selectAt(-1, -1);
};

(document.getElementById("save") as HTMLButtonElement).onclick = () => void store.save();
(document.getElementById("retry") as HTMLButtonElement).onclick = () => void store.loadWorkspace();

void store.loadWorkspace().then(() => {
  const first = store.captures[0];
  if (first) void store.select(first.id).then(loadChannel);
});
