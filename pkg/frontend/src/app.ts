/** DOM wiring for the construction tool. Optimistic UI is disabled: every
 * mutation awaits the service's new revision, then refetches the project. */

import { Api, ApiError } from "./api.js";
import {
  SessionView,
  ViewEvent,
  annotationTargetError,
  badgeFor,
  entryFor,
  initialView,
  isSecondary,
  matchedUxId,
  reduce,
  visibleRows,
} from "./state.js";

const api = new Api("");
let view: SessionView = initialView();

function dispatch(event: ViewEvent): void {
  view = reduce(view, event);
  renderAll();
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

async function refresh(projectId: string): Promise<void> {
  try {
    const project = await api.getProject(projectId);
    dispatch({ kind: "loaded", project });
  } catch (error) {
    dispatch({ kind: "status", text: describe(error) });
  }
}

function describe(error: unknown): string {
  if (error instanceof ApiError) return `HTTP ${error.status}: ${error.message}`;
  return String(error);
}

// ---- actions ---------------------------------------------------------------

async function loadProject(): Promise<void> {
  const projectId = el<HTMLInputElement>("project-id").value.trim();
  if (projectId) await refresh(projectId);
}

async function uploadProject(): Promise<void> {
  const ui = el<HTMLInputElement>("file-ui").files?.[0];
  const ux = el<HTMLInputElement>("file-ux").files?.[0];
  if (!ui || !ux) {
    dispatch({ kind: "status", text: "choose both .uiproto and .uxproto files" });
    return;
  }
  const form = new FormData();
  form.append("uiproto", ui);
  form.append("uxproto", ux);
  for (const asset of Array.from(el<HTMLInputElement>("file-assets").files ?? [])) {
    form.append("assets", asset);
  }
  try {
    const created = await api.createProject(form);
    el<HTMLInputElement>("project-id").value = created.project_id;
    await refresh(created.project_id);
  } catch (error) {
    dispatch({ kind: "status", text: describe(error) });
  }
}

async function runMatch(): Promise<void> {
  const project = view.project;
  if (!project) return;
  try {
    const { job_id } = await api.runMatch(project.project_id);
    dispatch({ kind: "status", text: `match job ${job_id} running…` });
    const poll = async (): Promise<void> => {
      const status = await api.pollJob(job_id);
      if (status.state === "DONE") {
        await refresh(project.project_id);
      } else if (status.state === "FAILED") {
        dispatch({ kind: "status", text: `match failed: ${status.error}` });
      } else {
        setTimeout(poll, 500);
      }
    };
    void poll();
  } catch (error) {
    dispatch({ kind: "status", text: describe(error) });
  }
}

async function applyOverride(uiNodeId: string, target: string | null): Promise<void> {
  const project = view.project;
  if (!project) return;
  try {
    await api.override(project.project_id, uiNodeId, target, project.revision);
    await refresh(project.project_id);
  } catch (error) {
    dispatch({ kind: "status", text: describe(error) });
    if (error instanceof ApiError && error.status === 409) {
      await refresh(project.project_id); // stale revision: re-sync, keep selection
    }
  }
}

async function applyEdit(payload: Record<string, unknown>): Promise<void> {
  const project = view.project;
  if (!project) return;
  try {
    await api.edit(project.project_id, { ...payload, revision: project.revision });
    await refresh(project.project_id);
  } catch (error) {
    dispatch({ kind: "status", text: describe(error) });
  }
}

async function integrateAndExport(): Promise<void> {
  const project = view.project;
  if (!project) return;
  try {
    await api.integrate(project.project_id);
    await refresh(project.project_id);
    window.open(api.exportUrl(project.project_id), "_blank");
  } catch (error) {
    dispatch({ kind: "status", text: describe(error) });
  }
}

async function handleTreeClick(side: "ui" | "ux", id: string): Promise<void> {
  const project = view.project;
  if (!project) return;
  if (view.annotationMode) {
    if (side === "ui") {
      dispatch({ kind: "annotation-pick-ui", id });
      dispatch({ kind: "status", text: `annotating ${id}: now pick a secondary UX node` });
    } else if (view.pendingAnnotationUi) {
      const problem = annotationTargetError(project, id);
      if (problem) {
        dispatch({ kind: "status", text: problem });
        return;
      }
      try {
        await api.annotate(project.project_id, [{ ui: view.pendingAnnotationUi, target: id }]);
        dispatch({ kind: "annotation-clear" });
        dispatch({ kind: "status", text: `recorded ${view.pendingAnnotationUi} -> ${id}` });
      } catch (error) {
        dispatch({ kind: "status", text: describe(error) });
      }
    }
    return;
  }
  dispatch({ kind: "select", side, id });
  await renderInspector();
}

// ---- rendering ---------------------------------------------------------------

function renderAll(): void {
  el<HTMLDivElement>("status").textContent = view.status;
  renderTrees();
  renderCanvas();
  void renderInspector();
}

function renderTrees(): void {
  const project = view.project;
  for (const side of ["ui", "ux"] as const) {
    const container = el<HTMLDivElement>(`tree-${side}`);
    container.textContent = "";
    if (!project) continue;
    const tree = side === "ui" ? project.ui_tree : project.ux_tree;
    const highlightUx = view.selectedSide === "ui" && view.selectedId
      ? matchedUxId(entryFor(project, view.selectedId))
      : null;
    for (const row of visibleRows(tree.root, view.expanded)) {
      const div = document.createElement("div");
      div.className = "tree-row";
      div.style.paddingLeft = `${row.depth * 14 + 4}px`;
      if (view.selectedSide === side && view.selectedId === row.id) div.classList.add("selected");
      if (side === "ux" && row.id === highlightUx) div.classList.add("match-highlight");
      if (side === "ux" && isSecondary(project, row.id)) div.classList.add("secondary");

      const toggle = document.createElement("span");
      toggle.className = "toggle";
      toggle.textContent = row.isLeaf ? "·" : row.expanded ? "▾" : "▸";
      if (!row.isLeaf) {
        toggle.addEventListener("click", (event) => {
          event.stopPropagation();
          dispatch({ kind: "toggle", id: row.id });
        });
      }
      div.appendChild(toggle);

      const label = document.createElement("span");
      label.textContent = ` ${row.label} `;
      div.appendChild(label);

      const sem = document.createElement("span");
      sem.className = "sem";
      sem.textContent = row.semantic;
      div.appendChild(sem);

      if (side === "ui") {
        const badge = badgeFor(entryFor(project, row.id));
        if (badge !== "none") {
          const mark = document.createElement("span");
          mark.className = `badge badge-${badge}`;
          mark.textContent = badge === "manual" ? "MANUAL" : badge === "matched" ? "✓" : "?";
          div.appendChild(mark);
        }
      }
      div.addEventListener("click", () => void handleTreeClick(side, row.id));
      container.appendChild(div);
    }
  }
}

function renderCanvas(): void {
  const project = view.project;
  const img = el<HTMLImageElement>("canvas-img");
  if (!project) {
    img.removeAttribute("src");
    return;
  }
  img.src = api.renderUrl(project.project_id, view.canvasMode, view.canvasSource, project.revision);
}

async function renderInspector(): Promise<void> {
  const container = el<HTMLDivElement>("inspector");
  const project = view.project;
  container.textContent = "";
  if (!project || !view.selectedSide || !view.selectedId) return;

  const heading = document.createElement("h3");
  heading.textContent = `${view.selectedSide.toUpperCase()} ${view.selectedId}`;
  container.appendChild(heading);

  if (view.selectedSide === "ux") {
    container.appendChild(editControls(view.selectedId));
  }
  if (!project.has_match) return;
  try {
    const payload = await api.confidences(project.project_id, view.selectedId, view.selectedSide);
    const list = document.createElement("div");
    list.className = "candidates";
    const title = document.createElement("h4");
    title.textContent = payload.direction === "ui" ? "ranked UX candidates" : "ranked UI matches";
    list.appendChild(title);
    if (payload.below_threshold) {
      const warn = document.createElement("div");
      warn.className = "below-threshold";
      warn.textContent = "below matchability threshold";
      list.appendChild(warn);
    }
    for (const candidate of payload.candidates) {
      const row = document.createElement("div");
      row.className = "candidate";
      const name = candidate.target ?? "UNMATCHED";
      row.textContent = `${name} — ${candidate.probability.toFixed(3)}`;
      if (payload.direction === "ui") {
        const button = document.createElement("button");
        button.textContent = "use";
        button.addEventListener("click", () =>
          void applyOverride(view.selectedId as string, candidate.target),
        );
        row.appendChild(button);
      }
      list.appendChild(row);
    }
    if (payload.direction === "ui") {
      const unmatched = document.createElement("button");
      unmatched.textContent = "mark UNMATCHED";
      unmatched.addEventListener("click", () => void applyOverride(view.selectedId as string, null));
      list.appendChild(unmatched);
    }
    container.appendChild(list);
  } catch (error) {
    const note = document.createElement("div");
    note.textContent = describe(error);
    container.appendChild(note);
  }
}

function editControls(nodeId: string): HTMLElement {
  const wrap = document.createElement("div");
  wrap.className = "edit-controls";
  const del = document.createElement("button");
  del.textContent = "delete";
  del.addEventListener("click", () => void applyEdit({ op: "DELETE", node_id: nodeId }));
  wrap.appendChild(del);

  for (const [label, dx, dy] of [["←", -10, 0], ["→", 10, 0], ["↑", 0, -10], ["↓", 0, 10]] as const) {
    const button = document.createElement("button");
    button.textContent = label;
    button.addEventListener("click", () =>
      void applyEdit({ op: "MOVE", node_id: nodeId, delta: [dx, dy] }),
    );
    wrap.appendChild(button);
  }

  const select = document.createElement("select");
  for (const semantic of ["PANEL", "IMAGE", "TEXT", "BUTTON", "SLIDER", "LIST", "TOGGLE", "SCROLLVIEW", "INPUT"]) {
    const option = document.createElement("option");
    option.value = option.textContent = semantic;
    select.appendChild(option);
  }
  const retype = document.createElement("button");
  retype.textContent = "retype";
  retype.addEventListener("click", () =>
    void applyEdit({ op: "RETYPE", node_id: nodeId, semantic: select.value }),
  );
  wrap.appendChild(select);
  wrap.appendChild(retype);

  const create = document.createElement("button");
  create.textContent = "add child";
  create.addEventListener("click", () => {
    const childId = prompt("new node id?");
    if (childId) {
      void applyEdit({ op: "CREATE", parent_id: nodeId, node_id: childId, semantic: select.value });
    }
  });
  wrap.appendChild(create);
  return wrap;
}

// ---- boot ---------------------------------------------------------------------

export function boot(): void {
  el<HTMLButtonElement>("btn-load").addEventListener("click", () => void loadProject());
  el<HTMLButtonElement>("btn-upload").addEventListener("click", () => void uploadProject());
  el<HTMLButtonElement>("btn-match").addEventListener("click", () => void runMatch());
  el<HTMLButtonElement>("btn-integrate").addEventListener("click", () => void integrateAndExport());
  for (const mode of ["rgba", "depth"] as const) {
    el<HTMLButtonElement>(`btn-mode-${mode}`).addEventListener("click", () =>
      dispatch({ kind: "canvas-mode", mode }),
    );
  }
  for (const source of ["ui", "ux", "gameui"] as const) {
    el<HTMLButtonElement>(`btn-src-${source}`).addEventListener("click", () =>
      dispatch({ kind: "canvas-source", source }),
    );
  }
  el<HTMLInputElement>("annotation-mode").addEventListener("change", (event) => {
    dispatch({ kind: "annotation-mode", on: (event.target as HTMLInputElement).checked });
  });
  renderAll();
}

if (typeof document !== "undefined" && document.getElementById("tree-ui")) {
  boot();
}
