/** Pure view-model for the construction tool.
 *
 * The client holds no authoritative state: every mutation round-trips
 * through the service and the view is recomputed from the last fetched
 * project payload plus local selection/expansion flags.
 */

import type { MapEntry, NodeJson, ProjectData } from "./api.js";

export const SIGMA = 0.5;

export type Side = "ui" | "ux";
export type CanvasMode = "rgba" | "depth";
export type CanvasSource = "ui" | "ux" | "gameui";

export interface SessionView {
  project: ProjectData | null;
  selectedSide: Side | null;
  selectedId: string | null;
  expanded: Set<string>;
  canvasMode: CanvasMode;
  canvasSource: CanvasSource;
  annotationMode: boolean;
  pendingAnnotationUi: string | null;
  status: string;
}

export function initialView(): SessionView {
  return {
    project: null,
    selectedSide: null,
    selectedId: null,
    expanded: new Set(),
    canvasMode: "rgba",
    canvasSource: "ux",
    annotationMode: false,
    pendingAnnotationUi: null,
    status: "no project loaded",
  };
}

export interface TreeRow {
  id: string;
  depth: number;
  semantic: string;
  label: string;
  isLeaf: boolean;
  expanded: boolean;
  visible: boolean;
}

/** Flatten a tree for list rendering, honoring the expansion set. */
export function flattenTree(root: NodeJson, expanded: Set<string>): TreeRow[] {
  const rows: TreeRow[] = [];
  const walk = (node: NodeJson, depth: number, visible: boolean) => {
    const isLeaf = node.children.length === 0;
    const isExpanded = expanded.has(node.id);
    rows.push({
      id: node.id,
      depth,
      semantic: node.semantic,
      label: node.text ? `${node.id} "${node.text}"` : node.id,
      isLeaf,
      expanded: isExpanded,
      visible,
    });
    for (const child of node.children) {
      walk(child, depth + 1, visible && isExpanded);
    }
  };
  walk(root, 0, true);
  return rows;
}

export function visibleRows(root: NodeJson, expanded: Set<string>): TreeRow[] {
  return flattenTree(root, expanded).filter((row) => row.visible);
}

/** Default expansion: root, secondary level, and every matched path. */
export function defaultExpansion(project: ProjectData): Set<string> {
  const expanded = new Set<string>([project.ui_tree.root.id, project.ux_tree.root.id]);
  for (const child of project.ux_tree.root.children) {
    expanded.add(child.id);
  }
  for (const entry of project.map) {
    if (entry.ux) {
      for (const part of entry.ux.split("/")) {
        expanded.add(part);
      }
    }
  }
  return expanded;
}

export function entryFor(project: ProjectData, uiNodeId: string): MapEntry | undefined {
  return project.map.find((e) => e.ui === uiNodeId);
}

export type MatchBadge = "manual" | "matched" | "mismatch" | "none";

/** Badge style: below-threshold entries render in the mismatch style. */
export function badgeFor(entry: MapEntry | undefined): MatchBadge {
  if (!entry) return "none";
  if (entry.source === "MANUAL") return "manual";
  if (entry.ux === null || entry.confidence < SIGMA) return "mismatch";
  return "matched";
}

export function secondaryOf(path: string | null): string | null {
  if (!path) return null;
  const parts = path.split("/");
  return parts.length > 1 ? parts[1] : parts[0];
}

export function isSecondary(project: ProjectData, nodeId: string): boolean {
  return project.secondary.includes(nodeId);
}

/** Matched UX node id (last path segment) for highlighting. */
export function matchedUxId(entry: MapEntry | undefined): string | null {
  if (!entry || !entry.ux) return null;
  const parts = entry.ux.split("/");
  return parts[parts.length - 1];
}

export type ViewEvent =
  | { kind: "loaded"; project: ProjectData }
  | { kind: "select"; side: Side; id: string }
  | { kind: "toggle"; id: string }
  | { kind: "canvas-mode"; mode: CanvasMode }
  | { kind: "canvas-source"; source: CanvasSource }
  | { kind: "annotation-mode"; on: boolean }
  | { kind: "annotation-pick-ui"; id: string }
  | { kind: "annotation-clear" }
  | { kind: "status"; text: string };

export function reduce(view: SessionView, event: ViewEvent): SessionView {
  switch (event.kind) {
    case "loaded": {
      const expanded = view.project && view.project.project_id === event.project.project_id
        ? view.expanded
        : defaultExpansion(event.project);
      return { ...view, project: event.project, expanded, status: statusLine(event.project) };
    }
    case "select":
      return { ...view, selectedSide: event.side, selectedId: event.id };
    case "toggle": {
      const expanded = new Set(view.expanded);
      if (expanded.has(event.id)) expanded.delete(event.id);
      else expanded.add(event.id);
      return { ...view, expanded };
    }
    case "canvas-mode":
      return { ...view, canvasMode: event.mode };
    case "canvas-source":
      return { ...view, canvasSource: event.source };
    case "annotation-mode":
      return { ...view, annotationMode: event.on, pendingAnnotationUi: null };
    case "annotation-pick-ui":
      return { ...view, pendingAnnotationUi: event.id };
    case "annotation-clear":
      return { ...view, pendingAnnotationUi: null };
    case "status":
      return { ...view, status: event.text };
  }
}

export function statusLine(project: ProjectData): string {
  const matched = project.map.filter((e) => e.ux !== null).length;
  const stale = project.match_stale ? " (match stale after edits)" : "";
  const job = project.running_job ? ` job ${project.running_job} running…` : "";
  return `rev ${project.revision} · ${matched}/${project.map.length} matched${stale}${job}`;
}

/** Client-side mirror of the service's 422 rule for annotation targets. */
export function annotationTargetError(project: ProjectData, targetId: string): string | null {
  if (!isSecondary(project, targetId)) {
    return `annotation target ${targetId} is not a secondary-level node`;
  }
  return null;
}
