import { describe, expect, it } from "vitest";

import { AnnotationApi, FetchLike } from "../src/api.js";
import { AnnotationStore } from "../src/store.js";
import { ImageEntry, SidecarDoc, SidecarRect } from "../src/types.js";

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

interface FakeWorld {
  captures: ImageEntry[];
  sidecars: Map<string, SidecarDoc>;
  putCount: number;
  down: boolean;
}

function entry(id: string, labels = 0, version = 0): ImageEntry {
  return { id, cultivar: "demo", width: 64, height: 64, channels: ["standard"], labels, version };
}

function doc(id: string, version: number, rectangles: SidecarRect[]): SidecarDoc {
  return { format_version: 1, capture_id: id, annotator: "test", rectangles, version };
}

// In-memory stand-in for the annotation service, CAS versioning included,
// driven through the real AnnotationApi client.
function fakeService(world: FakeWorld): FetchLike {
  return async (url, init) => {
    if (world.down) throw new TypeError("fetch failed");
    const path = url.toString();
    if (path.endsWith("/api/images")) {
      return jsonResponse(200, { images: world.captures });
    }
    const match = path.match(/\/api\/images\/([^/]+)\/labels$/);
    if (!match) return jsonResponse(404, { error: `no such endpoint: ${path}` });
    const id = match[1] as string;
    const current = world.sidecars.get(id) ?? doc(id, 0, []);
    if (init?.method !== "PUT") return jsonResponse(200, current);

    world.putCount++;
    const body = JSON.parse(init.body as string);
    if (!Array.isArray(body.rectangles) || body.rectangles.length === 0) {
      return jsonResponse(400, { error: "at least one rectangle is required", field: "rectangles" });
    }
    for (let i = 0; i < body.rectangles.length; i++) {
      const r = body.rectangles[i];
      if (r.x + r.width > 64 || r.y + r.height > 64) {
        return jsonResponse(400, { error: "rectangle exceeds the 64x64 image", field: `rectangles[${i}]` });
      }
    }
    if (body.version !== current.version) {
      return jsonResponse(409, { error: "label version changed", current_version: current.version });
    }
    const stored = doc(id, current.version + 1, body.rectangles);
    world.sidecars.set(id, stored);
    return jsonResponse(200, stored);
  };
}

function makeWorld(): { world: FakeWorld; store: AnnotationStore } {
  const world: FakeWorld = {
    captures: [entry("cap_a", 1, 1), entry("cap_b"), entry("cap_c")],
    sidecars: new Map([["cap_a", doc("cap_a", 1, [{ x: 2, y: 2, width: 8, height: 8, label: "berry" }])]]),
    putCount: 0,
    down: false,
  };
  return { world, store: new AnnotationStore(new AnnotationApi("", fakeService(world))) };
}

describe("workspace loading", () => {
  it("lists captures with their label state", async () => {
    const { store } = makeWorld();
    await store.loadWorkspace();
    expect(store.captures.map((e) => e.id)).toEqual(["cap_a", "cap_b", "cap_c"]);
    expect(store.banner).toBeNull();
  });

  it("shows a banner when the service is down and recovers on retry", async () => {
    const { world, store } = makeWorld();
    world.down = true;
    await store.loadWorkspace();
    expect(store.captures).toEqual([]);
    expect(store.banner).toMatch(/unreachable/);
    world.down = false;
    await store.loadWorkspace();
    expect(store.banner).toBeNull();
    expect(store.captures.length).toBe(3);
  });

  it("loads stored labels on select", async () => {
    const { store } = makeWorld();
    await store.loadWorkspace();
    await store.select("cap_a");
    expect(store.current?.id).toBe("cap_a");
    expect(store.rectangles).toEqual([
      { x: 2, y: 2, width: 8, height: 8, label: "berry", task: "detection", selected: false },
    ]);
    expect(store.version).toBe(1);
    expect(store.dirty).toBe(false);
  });
});

describe("drawing", () => {
  async function loaded() {
    const made = makeWorld();
    await made.store.loadWorkspace();
    await made.store.select("cap_b");
    return made;
  }

  it("commits a snapped rectangle with the active class", async () => {
    const { store } = await loaded();
    store.setTask("segmentation");
    store.classKey(2);
    store.setZoom(4);
    const rect = store.commitDrag({ x: 40, y: 40 }, { x: 120, y: 100 });
    expect(rect).toEqual({ x: 10, y: 10, width: 20, height: 15, label: "nowax", task: "segmentation", selected: true });
    expect(store.dirty).toBe(true);
  });

  it("discards zero-area drags", async () => {
    const { store } = await loaded();
    expect(store.commitDrag({ x: 30, y: 10 }, { x: 30.2, y: 90 })).toBeNull();
    expect(store.rectangles).toEqual([]);
    expect(store.dirty).toBe(false);
  });

  it("preserves in-progress rectangles across channel switches", async () => {
    const { store } = await loaded();
    store.commitDrag({ x: 0, y: 0 }, { x: 40, y: 40 });
    const before = [...store.rectangles];
    store.setChannel("diffuse");
    expect(store.channel).toBe("diffuse");
    expect(store.rectangles).toEqual(before);
    expect(store.dirty).toBe(true);
  });

  it("maps class keys per task and ignores out-of-range keys", async () => {
    const { store } = await loaded();
    store.setTask("detection");
    store.classKey(2);
    expect(store.currentClass()).toBe("berry");
    store.classKey(3); // detection has two classes
    expect(store.currentClass()).toBe("berry");
    store.toggleTask();
    expect(store.task).toBe("segmentation");
    expect(store.currentClass()).toBe("wax");
    store.classKey(3);
    expect(store.currentClass()).toBe("other");
  });

  it("selects the topmost rectangle under a click and deletes it", async () => {
    const { store } = await loaded();
    store.setZoom(1);
    store.commitDrag({ x: 0, y: 0 }, { x: 40, y: 40 });
    store.commitDrag({ x: 8, y: 8 }, { x: 24, y: 24 });
    store.selectAt(3, 3); // only the first, larger rectangle covers this
    expect(store.rectangles.map((r) => r.selected)).toEqual([true, false]);
    store.selectAt(10, 10); // inside both; the later one wins
    expect(store.rectangles.map((r) => r.selected)).toEqual([false, true]);
    store.deleteSelected();
    expect(store.rectangles.length).toBe(1);
    expect(store.dirty).toBe(true);
  });
});

describe("saving", () => {
  it("round trips rectangles through the service byte for byte", async () => {
    const { world, store } = makeWorld();
    await store.loadWorkspace();
    await store.select("cap_b");
    store.setTask("segmentation");
    store.setZoom(1);
    store.commitDrag({ x: 5.2, y: 7.9 }, { x: 20.1, y: 31.4 });
    const drawn = store.rectangles.map((r) => ({ ...r }));

    expect(await store.save()).toBe(true);
    expect(store.version).toBe(1);
    expect(store.dirty).toBe(false);

    // what a fresh client would now see
    await store.select("cap_b");
    expect(store.rectangles.map((r) => [r.x, r.y, r.width, r.height, r.label])).toEqual(
      drawn.map((r) => [r.x, r.y, r.width, r.height, r.label]),
    );
    expect(world.putCount).toBe(1);
  });

  it("refuses an empty save locally, without a request", async () => {
    const { world, store } = makeWorld();
    await store.loadWorkspace();
    await store.select("cap_b");
    expect(await store.save()).toBe(false);
    expect(store.fieldError).toMatch(/rectangles/);
    expect(world.putCount).toBe(0);
  });

  it("keeps local edits and reports the stored version on a conflict", async () => {
    const { world, store } = makeWorld();
    await store.loadWorkspace();
    await store.select("cap_a");
    store.commitDrag({ x: 0, y: 0 }, { x: 10, y: 10 });
    // someone else saved meanwhile
    world.sidecars.set("cap_a", doc("cap_a", 5, [{ x: 1, y: 1, width: 2, height: 2, label: "wax" }]));
    const before = store.rectangles.length;
    expect(await store.save()).toBe(false);
    expect(store.banner).toMatch(/version 5/);
    expect(store.dirty).toBe(true);
    expect(store.rectangles.length).toBe(before);
  });

  it("surfaces server field errors inline", async () => {
    const { store } = makeWorld();
    await store.loadWorkspace();
    await store.select("cap_b");
    store.rectangles.push({ x: 60, y: 60, width: 10, height: 10, label: "wax", task: "segmentation", selected: false });
    store.dirty = true;
    expect(await store.save()).toBe(false);
    expect(store.fieldError).toMatch(/^rectangles\[0\]: /);
    expect(store.dirty).toBe(true);
  });

  it("allows only one in-flight save per capture", async () => {
    let puts = 0;
    let release: (doc: SidecarDoc) => void = () => {};
    const api = {
      putLabels: async () => {
        puts++;
        return new Promise<SidecarDoc>((resolve) => {
          release = resolve;
        });
      },
    } as unknown as AnnotationApi;
    const store = new AnnotationStore(api);
    store.current = entry("cap_x");
    store.rectangles = [{ x: 0, y: 0, width: 4, height: 4, label: "wax", task: "segmentation", selected: false }];

    const first = store.save();
    expect(store.saving).toBe(true);
    expect(await store.save()).toBe(false); // second save rejected while in flight
    release(doc("cap_x", 1, [{ x: 0, y: 0, width: 4, height: 4, label: "wax" }]));
    expect(await first).toBe(true);
    expect(puts).toBe(1);
    expect(store.saving).toBe(false);
  });
});
