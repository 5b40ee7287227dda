"""Correspondence maps and visual-attribute integration.

integrate() clones the UX tree as a GAMEUI document and pushes each matched
UI leaf's visual attributes into its target: a single UI leaf matched to a
UX leaf of the same renderable semantic copies rect/rotation/scale/anchor/
opacity plus texture or text/font/color in place (z stays UX-owned); any
other target — non-leaf, widget leaf, or several UI leaves on one node —
absorbs the UI leaves as new children ordered by UI draw order. Re-running
integration with the same map replaces previously absorbed children, so the
operation is idempotent.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional

from .proto import DesignNode, DesignTree, Kind, Semantic

UNMATCHED = "UNMATCHED"


@dataclass(frozen=True)
class MatchEntry:
    ui_node_id: str
    ux_node_path: Optional[str]  # None = unmatched
    confidence: float = 1.0
    source: str = "AUTO"  # AUTO | MANUAL


@dataclass
class CorrespondenceMap:
    entries: list[MatchEntry] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def effective(self) -> dict[str, MatchEntry]:
        """One entry per UI id; MANUAL overrides AUTO, later entries win otherwise."""
        out: dict[str, MatchEntry] = {}
        for entry in self.entries:
            current = out.get(entry.ui_node_id)
            if current is not None and current.source == "MANUAL" and entry.source == "AUTO":
                continue
            out[entry.ui_node_id] = entry
        return out

    def merged_with_overrides(self, overrides: Iterable[MatchEntry]) -> "CorrespondenceMap":
        merged = CorrespondenceMap(entries=list(self.entries), provenance=dict(self.provenance))
        merged.entries.extend(overrides)
        return merged

    def to_jsonl(self) -> str:
        lines = []
        for entry in self.entries:
            lines.append(json.dumps({
                "ui": entry.ui_node_id,
                "ux": entry.ux_node_path if entry.ux_node_path is not None else UNMATCHED,
                "confidence": round(entry.confidence, 6),
                "source": entry.source,
            }))
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_jsonl(cls, text: str, provenance: Optional[dict] = None) -> "CorrespondenceMap":
        entries = []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            data = json.loads(line)
            target = data["ux"]
            entries.append(MatchEntry(
                ui_node_id=data["ui"],
                ux_node_path=None if target == UNMATCHED else target,
                confidence=float(data.get("confidence", 1.0)),
                source=data.get("source", "AUTO"),
            ))
        return cls(entries=entries, provenance=provenance or {})

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "CorrespondenceMap":
        return cls.from_jsonl(Path(path).read_text(encoding="utf-8"))


class IntegrationError(ValueError):
    pass


class TypeClashError(IntegrationError):
    def __init__(self, pairs: list[tuple[str, str]]):
        listing = ", ".join(f"{ui} -> {ux}" for ui, ux in pairs)
        super().__init__(f"renderable semantics clash: {listing}")
        self.pairs = pairs


_COPY_SEMANTICS = {Semantic.IMAGE, Semantic.TEXT}


def _copy_visuals(target: DesignNode, source: DesignNode) -> None:
    target.rect = source.rect
    target.rotation = source.rotation
    target.scale = source.scale
    target.anchor = source.anchor
    target.opacity = source.opacity
    if source.semantic is Semantic.IMAGE:
        target.texture = source.texture
    else:
        target.text = source.text
        target.font = source.font
        target.color = source.color


def _absorbed_child(ui_leaf: DesignNode, target: DesignNode, used_ids: set[str]) -> DesignNode:
    child = ui_leaf.clone()
    child.children = []
    if child.id in used_ids:
        child = replace(child, id=f"{ui_leaf.id}__{target.id}", children=[])
    return child


def integrate(ui_tree: DesignTree, ux_tree: DesignTree, cmap: CorrespondenceMap) -> DesignTree:
    """Build the GAMEUI tree from the UX structure plus matched UI visuals."""
    out = ux_tree.clone()
    out.kind = Kind.GAMEUI

    ui_leaves = {leaf.id: leaf for leaf in ui_tree.leaves()}
    by_target: dict[str, list[DesignNode]] = {}
    for ui_id, entry in sorted(cmap.effective().items()):
        if entry.ux_node_path is None:
            continue  # unmatched UI leaves are omitted
        leaf = ui_leaves.get(ui_id)
        if leaf is None:
            raise IntegrationError(f"unknown or non-leaf UI node id '{ui_id}'")
        if out.node_by_path(entry.ux_node_path) is None:
            raise IntegrationError(f"unknown UX path '{entry.ux_node_path}'")
        by_target.setdefault(entry.ux_node_path, []).append(leaf)

    clashes: list[tuple[str, str]] = []
    for path, leaves in by_target.items():
        target = out.node_by_path(path)
        single = len(leaves) == 1
        if single and target.is_leaf and target.semantic in _COPY_SEMANTICS:
            source = leaves[0]
            if source.semantic is not target.semantic:
                clashes.append((source.id, target.id))
                continue
            _copy_visuals(target, source)
        else:
            _absorb(out, target, leaves)
    if clashes:
        raise TypeClashError(clashes)
    return out


def _absorb(tree: DesignTree, target: DesignNode, leaves: list[DesignNode]) -> None:
    ordered = sorted(enumerate(leaves), key=lambda item: (item[1].z, item[0]))
    existing_ids = {n.id for n in tree.walk() if n is not target}
    new_children: list[DesignNode] = []
    replaced_ids: set[str] = set()
    for _, leaf in ordered:
        candidates = {leaf.id, f"{leaf.id}__{target.id}"}
        kept_id = next((c.id for c in target.children if c.id in candidates), None)
        if kept_id is not None:
            child = leaf.clone()
            child.children = []
            child.id = kept_id
            replaced_ids.add(kept_id)
        else:
            used = existing_ids | {c.id for c in target.children} | {c.id for c in new_children}
            child = _absorbed_child(leaf, target, used)
        new_children.append(child)
    target.children = [c for c in target.children if c.id not in replaced_ids and
                       c.id not in {n.id for n in new_children}] + new_children
