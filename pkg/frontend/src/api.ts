/** Typed client for the uifuse service REST API. */

export interface NodeJson {
  id: string;
  semantic: string;
  rect: [number, number, number, number];
  z: number;
  rotation: number;
  scale: [number, number];
  anchor: [number, number];
  opacity: number;
  texture: string | null;
  text: string | null;
  font: [string, number] | null;
  color: [number, number, number, number] | null;
  children: NodeJson[];
}

export interface TreeJson {
  kind: string;
  canvas: [number, number];
  version: number;
  root: NodeJson;
}

export interface MapEntry {
  ui: string;
  ux: string | null;
  confidence: number;
  source: "AUTO" | "MANUAL";
}

export interface ProjectData {
  project_id: string;
  revision: number;
  match_stale: boolean;
  has_match: boolean;
  running_job: string | null;
  ui_tree: TreeJson;
  ux_tree: TreeJson;
  map: MapEntry[];
  secondary: string[];
}

export interface JobStatus {
  job_id: string;
  state: "QUEUED" | "RUNNING" | "DONE" | "FAILED";
  progress: number;
  error: string | null;
}

export interface Candidate {
  target: string | null;
  probability: number;
}

export interface ConfidencePayload {
  node: string;
  direction: "ui" | "ux";
  candidates: Candidate[];
  below_threshold?: boolean;
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const response = await fetch(url, init);
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = await response.json();
      detail = typeof body.detail === "string" ? body.detail : JSON.stringify(body.detail ?? body);
    } catch {
      /* keep statusText */
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

export class Api {
  constructor(private base: string = "") {}

  url(path: string): string {
    return `${this.base}${path}`;
  }

  getProject(projectId: string): Promise<ProjectData> {
    return request(this.url(`/projects/${projectId}`));
  }

  createProject(form: FormData): Promise<{ project_id: string; revision: number }> {
    return request(this.url("/projects"), { method: "POST", body: form });
  }

  runMatch(projectId: string): Promise<{ job_id: string }> {
    return request(this.url(`/projects/${projectId}/match`), { method: "POST" });
  }

  pollJob(jobId: string): Promise<JobStatus> {
    return request(this.url(`/jobs/${jobId}`));
  }

  confidences(projectId: string, node: string, direction: "ui" | "ux"): Promise<ConfidencePayload> {
    const params = new URLSearchParams({ node, direction });
    return request(this.url(`/projects/${projectId}/confidences?${params}`));
  }

  override(
    projectId: string,
    uiNodeId: string,
    target: string | null,
    revision: number,
  ): Promise<{ revision: number; warnings: string[] }> {
    return request(this.url(`/projects/${projectId}/overrides`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({
        ui_node_id: uiNodeId,
        target: target ?? "UNMATCHED",
        revision,
      }),
    });
  }

  edit(projectId: string, payload: Record<string, unknown>): Promise<{ revision: number }> {
    return request(this.url(`/projects/${projectId}/edits`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  integrate(projectId: string): Promise<{ revision: number; gameui: string }> {
    return request(this.url(`/projects/${projectId}/integrate`), { method: "POST" });
  }

  annotate(
    projectId: string,
    entries: { ui: string; target: string | null }[],
  ): Promise<{ annotation_id: string }> {
    return request(this.url(`/projects/${projectId}/annotations`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ entries }),
    });
  }

  /** Render endpoint URL; revision busts the browser image cache. */
  renderUrl(projectId: string, mode: string, source: string, revision: number): string {
    return this.url(`/projects/${projectId}/render?mode=${mode}&source=${source}&rev=${revision}`);
  }

  exportUrl(projectId: string): string {
    return this.url(`/projects/${projectId}/export`);
  }

  annotationsUrl(projectId: string): string {
    return this.url(`/projects/${projectId}/annotations`);
  }
}
