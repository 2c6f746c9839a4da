import { Channel, ImageEntry, SidecarDoc, SidecarRect } from "./types.js";

export class ApiError extends Error {
  status: number;
  field: string | null;
  currentVersion: number | null;

  constructor(status: number, message: string, field?: string, currentVersion?: number) {
    super(message);
    this.status = status;
    this.field = field ?? null;
    this.currentVersion = currentVersion ?? null;
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

async function raiseForStatus(response: Response): Promise<Response> {
  if (response.ok) return response;
  let message = `HTTP ${response.status}`;
  let field: string | undefined;
  let currentVersion: number | undefined;
  try {
    const body = await response.json();
    if (typeof body.error === "string") message = body.error;
    if (typeof body.field === "string") field = body.field;
    if (typeof body.current_version === "number") currentVersion = body.current_version;
  } catch {
    // non-JSON error body; the status line is all we have
  }
  throw new ApiError(response.status, message, field, currentVersion);
}

export class AnnotationApi {
  private base: string;
  private fetchFn: FetchLike;

  constructor(base = "", fetchFn: FetchLike = (...args) => fetch(...args)) {
    this.base = base.replace(/\/$/, "");
    this.fetchFn = fetchFn;
  }

  channelUrl(id: string, channel: Channel | string): string {
    return `${this.base}/api/images/${encodeURIComponent(id)}/channel/${channel}`;
  }

  async listImages(): Promise<ImageEntry[]> {
    const response = await raiseForStatus(await this.fetchFn(`${this.base}/api/images`));
    const doc = await response.json();
    return doc.images as ImageEntry[];
  }

  async getLabels(id: string): Promise<SidecarDoc> {
    const response = await raiseForStatus(
      await this.fetchFn(`${this.base}/api/images/${encodeURIComponent(id)}/labels`),
    );
    return (await response.json()) as SidecarDoc;
  }

  async putLabels(
    id: string,
    body: { version: number; rectangles: SidecarRect[] },
  ): Promise<SidecarDoc> {
    const response = await raiseForStatus(
      await this.fetchFn(`${this.base}/api/images/${encodeURIComponent(id)}/labels`, {
        method: "PUT",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
      }),
    );
    return (await response.json()) as SidecarDoc;
  }
}
