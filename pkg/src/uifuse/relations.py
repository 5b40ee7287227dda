"""Pairwise edge relations between design nodes.

Three relation families over a node collection:
  spatial   -- 5-vector per ordered pair: center translation (x, y) normalized
               by canvas, IoU, log aspect-ratio difference, orientation angle
               over pi (screen coords, y down).
  hierarchy -- codes {0,1,2}: 0 = first is ancestor of second, 1 = descendant,
               2 = unrelated. Real tree links for structured trees; a
               strict-containment heuristic for flat UI leaf collections.
  rendering -- codes {0,1,2}: 0 = boxes overlap and first draws later,
               1 = overlap but draws earlier, 2 = no overlap. Draw order is
               (z, document index) lexicographic; overlap needs positive area.

Also: partition of a UX tree into secondary-level groups, and detection of
assignment pairs that would invert hierarchy or rendering order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .proto import DesignNode, DesignTree

EPS = 1e-6

Box = tuple[float, float, float, float]


def compute_spatial_relation(box_i: Box, box_j: Box, canvas: tuple[float, float]) -> np.ndarray:
    """Spatial 5-vector from box_i to box_j on the given canvas."""
    return spatial_matrix(np.array([box_i, box_j], dtype=np.float64), canvas)[0, 1]


def spatial_matrix(boxes: np.ndarray, canvas: tuple[float, float]) -> np.ndarray:
    """Dense (n, n, 5) spatial relations for all ordered box pairs."""
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    n = boxes.shape[0]
    W, H = float(canvas[0]), float(canvas[1])
    x, y, w, h = boxes[:, 0], boxes[:, 1], boxes[:, 2], boxes[:, 3]
    cx, cy = x + w / 2.0, y + h / 2.0

    dx = (cx[None, :] - cx[:, None]) / W
    dy = (cy[None, :] - cy[:, None]) / H

    ix0 = np.maximum(x[:, None], x[None, :])
    iy0 = np.maximum(y[:, None], y[None, :])
    ix1 = np.minimum((x + w)[:, None], (x + w)[None, :])
    iy1 = np.minimum((y + h)[:, None], (y + h)[None, :])
    inter = np.clip(ix1 - ix0, 0.0, None) * np.clip(iy1 - iy0, 0.0, None)
    area = w * h
    union = area[:, None] + area[None, :] - inter
    iou = inter / np.maximum(union, EPS)

    aspect = np.log(np.maximum(w, EPS) / np.maximum(h, EPS))
    d_aspect = aspect[None, :] - aspect[:, None]

    orient = np.arctan2(cy[None, :] - cy[:, None], cx[None, :] - cx[:, None]) / np.pi

    rel = np.stack([dx, dy, iou, d_aspect, orient], axis=-1)
    idx = np.arange(n)
    rel[idx, idx] = np.array([0.0, 0.0, 1.0, 0.0, 0.0])
    return rel


def compute_hierarchy_codes(tree: DesignTree) -> np.ndarray:
    """(n, n) ancestor/descendant codes from real tree links, pre-order indexed."""
    nodes = list(tree.walk())
    index = {id(node): k for k, node in enumerate(nodes)}
    n = len(nodes)
    codes = np.full((n, n), 2, dtype=np.int8)
    for node in nodes:
        i = index[id(node)]
        for desc in node.walk():
            j = index[id(desc)]
            if i != j:
                codes[i, j] = 0
                codes[j, i] = 1
    return codes


def simulate_ui_hierarchy(boxes: np.ndarray) -> np.ndarray:
    """Containment heuristic for flat leaf collections.

    code(i, j) = 0 iff box_j lies inside box_i (edges may touch) and box_i has
    strictly larger area; identical boxes stay unrelated so no 0/1 cycles form.
    """
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    n = boxes.shape[0]
    x0, y0 = boxes[:, 0], boxes[:, 1]
    x1, y1 = boxes[:, 0] + boxes[:, 2], boxes[:, 1] + boxes[:, 3]
    area = boxes[:, 2] * boxes[:, 3]
    contains = (
        (x0[:, None] <= x0[None, :])
        & (y0[:, None] <= y0[None, :])
        & (x1[:, None] >= x1[None, :])
        & (y1[:, None] >= y1[None, :])
        & (area[:, None] > area[None, :])
    )
    codes = np.full((n, n), 2, dtype=np.int8)
    codes[contains] = 0
    codes[contains.T] = 1
    np.fill_diagonal(codes, 2)
    return codes


def _overlap_matrix(boxes: np.ndarray) -> np.ndarray:
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    x0, y0 = boxes[:, 0], boxes[:, 1]
    x1, y1 = boxes[:, 0] + boxes[:, 2], boxes[:, 1] + boxes[:, 3]
    iw = np.minimum(x1[:, None], x1[None, :]) - np.maximum(x0[:, None], x0[None, :])
    ih = np.minimum(y1[:, None], y1[None, :]) - np.maximum(y0[:, None], y0[None, :])
    return (iw > 0) & (ih > 0)


def compute_render_codes(boxes: np.ndarray, z_values, doc_indices=None) -> np.ndarray:
    """(n, n) rendering codes; overlap requires positive intersection area.

    Edge-touching boxes do not overlap. Ties in z break by document index, so
    draw order is a strict total order.
    """
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    n = boxes.shape[0]
    z = np.asarray(z_values, dtype=np.int64)
    doc = np.arange(n) if doc_indices is None else np.asarray(doc_indices, dtype=np.int64)
    order = np.lexsort((doc, z))  # ascending draw order
    rank = np.empty(n, dtype=np.int64)
    rank[order] = np.arange(n)

    overlap = _overlap_matrix(boxes)
    codes = np.full((n, n), 2, dtype=np.int8)
    later = rank[:, None] > rank[None, :]
    codes[overlap & later] = 0
    codes[overlap & ~later] = 1
    np.fill_diagonal(codes, 2)
    return codes


@dataclass
class EdgeRelations:
    """All pairwise edge parameters for one node collection (pre-order indexed)."""

    n_nodes: int
    spatial: np.ndarray  # (n, n, 5)
    hierarchy: np.ndarray  # (n, n) codes
    rendering: np.ndarray  # (n, n) codes
    node_order: dict[str, int]


def tree_relations(tree: DesignTree) -> EdgeRelations:
    """Relations for a structured tree: real hierarchy links, pre-order indexing."""
    nodes = list(tree.walk())
    boxes = np.array([n.rect for n in nodes], dtype=np.float64)
    return EdgeRelations(
        n_nodes=len(nodes),
        spatial=spatial_matrix(boxes, tree.canvas),
        hierarchy=compute_hierarchy_codes(tree),
        rendering=compute_render_codes(boxes, [n.z for n in nodes]),
        node_order={n.id: k for k, n in enumerate(nodes)},
    )


def leaf_relations(leaves: list[DesignNode], canvas: tuple[float, float]) -> EdgeRelations:
    """Relations for a flat UI leaf collection: simulated hierarchy by containment."""
    boxes = np.array([n.rect for n in leaves], dtype=np.float64)
    return EdgeRelations(
        n_nodes=len(leaves),
        spatial=spatial_matrix(boxes, canvas),
        hierarchy=simulate_ui_hierarchy(boxes),
        rendering=compute_render_codes(boxes, [n.z for n in leaves]),
        node_order={n.id: k for k, n in enumerate(leaves)},
    )


@dataclass
class GroupPartition:
    """Secondary-level grouping of a UX tree: one group per child of the root."""

    group_ids: list[str]  # id of each secondary-level node
    members: list[list[str]]  # member node ids (group root + descendants)

    @property
    def L(self) -> int:
        return len(self.group_ids)


def partition_secondary_groups(ux_tree: DesignTree) -> GroupPartition:
    children = ux_tree.root.children
    if not children:
        raise ValueError("no groups: UX root has no children")
    group_ids = [c.id for c in children]
    members = [[n.id for n in c.walk()] for c in children]
    return GroupPartition(group_ids=group_ids, members=members)


def group_level_codes(ux_tree: DesignTree, group_roots: list[DesignNode]) -> tuple[np.ndarray, np.ndarray]:
    """Hierarchy/rendering codes between assignment columns (sibling subtrees).

    Columns are sibling subtrees, so tree links are uninformative; hierarchy
    uses containment of the group roots' boxes, rendering compares subtree
    draw-order intervals: boxes overlapping plus the later maximum draw order
    wins (covers overlapping z ranges too).
    """
    nodes = list(ux_tree.walk())
    doc_index = {id(n): k for k, n in enumerate(nodes)}
    boxes = np.array([g.rect for g in group_roots], dtype=np.float64)
    hierarchy = simulate_ui_hierarchy(boxes)

    max_order = []
    for g in group_roots:
        pairs = [(n.z, doc_index[id(n)]) for n in g.walk()]
        max_order.append(max(pairs))
    L = len(group_roots)
    overlap = _overlap_matrix(boxes)
    rendering = np.full((L, L), 2, dtype=np.int8)
    for i in range(L):
        for j in range(L):
            if i != j and overlap[i, j]:
                rendering[i, j] = 0 if max_order[i] > max_order[j] else 1
    return hierarchy, rendering


@dataclass(frozen=True)
class AmbiguityPair:
    """A row pair plus column pair whose hierarchy or rendering order inverts."""

    kind: str  # "HIERARCHY" | "RENDERING"
    ui_pair: tuple[int, int]
    column_pair: tuple[int, int]


def detect_ambiguity_pairs(
    row_hierarchy: np.ndarray,
    row_rendering: np.ndarray,
    col_hierarchy: np.ndarray,
    col_rendering: np.ndarray,
) -> list[AmbiguityPair]:
    """All (i, j, i', j') with i < j where the column relation inverts the row relation."""
    out: set[AmbiguityPair] = set()
    for kind, rows, cols in (
        ("HIERARCHY", row_hierarchy, col_hierarchy),
        ("RENDERING", row_rendering, col_rendering),
    ):
        m = rows.shape[0]
        related = np.argwhere(cols == 1)
        inverted = np.argwhere(cols == 0)
        for i in range(m):
            for j in range(i + 1, m):
                if rows[i, j] == 0:
                    targets = related
                elif rows[i, j] == 1:
                    targets = inverted
                else:
                    continue
                for ci, cj in targets:
                    out.add(AmbiguityPair(kind, (i, j), (int(ci), int(cj))))
    return sorted(out, key=lambda p: (p.kind, p.ui_pair, p.column_pair))
