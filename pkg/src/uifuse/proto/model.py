"""Design-protocol data model: trees of visual/interactive nodes plus diagnostics.

Geometry is stored in absolute canvas pixels (top-left origin); normalization
happens where relations/representations need it. Values are treated as
immutable after construction — mutating operations clone first.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterator, Optional


class Kind(str, Enum):
    UI = "ui"
    UX = "ux"
    GAMEUI = "gameui"


class Semantic(str, Enum):
    PANEL = "PANEL"
    IMAGE = "IMAGE"
    TEXT = "TEXT"
    BUTTON = "BUTTON"
    SLIDER = "SLIDER"
    LIST = "LIST"
    TOGGLE = "TOGGLE"
    SCROLLVIEW = "SCROLLVIEW"
    INPUT = "INPUT"


SEMANTICS = tuple(Semantic)
SEMANTIC_INDEX = {s: i for i, s in enumerate(SEMANTICS)}

UI_SEMANTICS = frozenset({Semantic.PANEL, Semantic.IMAGE, Semantic.TEXT})
UI_LEAF_SEMANTICS = frozenset({Semantic.IMAGE, Semantic.TEXT})
RENDERABLE_SEMANTICS = frozenset({Semantic.IMAGE, Semantic.TEXT})

DEFAULT_Z = 0
DEFAULT_ROTATION = 0.0
DEFAULT_SCALE = (1.0, 1.0)
DEFAULT_ANCHOR = (0.5, 0.5)
DEFAULT_OPACITY = 1.0


@dataclass
class Diagnostic:
    severity: str  # "ERROR" | "WARNING"
    line: int
    column: int
    message: str
    node_id: Optional[str] = None

    def __str__(self) -> str:
        loc = f"{self.line}:{self.column}"
        suffix = f" (node '{self.node_id}')" if self.node_id else ""
        return f"{self.severity} {loc}: {self.message}{suffix}"


def error(line: int, column: int, message: str, node_id: str | None = None) -> Diagnostic:
    return Diagnostic("ERROR", line, column, message, node_id)


def warning(line: int, column: int, message: str, node_id: str | None = None) -> Diagnostic:
    return Diagnostic("WARNING", line, column, message, node_id)


@dataclass
class DesignNode:
    id: str
    semantic: Semantic
    rect: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    z: int = DEFAULT_Z
    rotation: float = DEFAULT_ROTATION
    scale: tuple[float, float] = DEFAULT_SCALE
    anchor: tuple[float, float] = DEFAULT_ANCHOR
    opacity: float = DEFAULT_OPACITY
    texture: Optional[str] = None
    text: Optional[str] = None
    font: Optional[tuple[str, int]] = None
    color: Optional[tuple[int, int, int, int]] = None
    children: list["DesignNode"] = field(default_factory=list)

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def walk(self) -> Iterator["DesignNode"]:
        """Pre-order traversal starting at this node."""
        yield self
        for child in self.children:
            yield from child.walk()

    def clone(self) -> "DesignNode":
        return replace(self, children=[c.clone() for c in self.children])


@dataclass
class DesignTree:
    kind: Kind
    canvas: tuple[int, int]
    root: DesignNode
    version: int = 1

    def walk(self) -> Iterator[DesignNode]:
        return self.root.walk()

    def __len__(self) -> int:
        return sum(1 for _ in self.walk())

    def clone(self) -> "DesignTree":
        return DesignTree(self.kind, self.canvas, self.root.clone(), self.version)

    def node_by_id(self, node_id: str) -> Optional[DesignNode]:
        for node in self.walk():
            if node.id == node_id:
                return node
        return None

    def parent_map(self) -> dict[str, Optional[str]]:
        parents: dict[str, Optional[str]] = {self.root.id: None}
        for node in self.walk():
            for child in node.children:
                parents[child.id] = node.id
        return parents

    def path_of(self, node_id: str) -> Optional[str]:
        """Slash-joined id path from the root, e.g. "root/menu/title"."""
        parents = self.parent_map()
        if node_id not in parents:
            return None
        parts = [node_id]
        while parents[parts[-1]] is not None:
            parts.append(parents[parts[-1]])  # type: ignore[arg-type]
        return "/".join(reversed(parts))

    def node_by_path(self, path: str) -> Optional[DesignNode]:
        parts = path.split("/")
        if not parts or parts[0] != self.root.id:
            return None
        node = self.root
        for part in parts[1:]:
            node = next((c for c in node.children if c.id == part), None)  # type: ignore[assignment]
            if node is None:
                return None
        return node

    def leaves(self) -> list[DesignNode]:
        return [n for n in self.walk() if n.is_leaf]


def structurally_equal(a: DesignTree, b: DesignTree) -> bool:
    if (a.kind, a.canvas, a.version) != (b.kind, b.canvas, b.version):
        return False
    return _nodes_equal(a.root, b.root)


def _nodes_equal(a: DesignNode, b: DesignNode) -> bool:
    if (
        a.id != b.id
        or a.semantic != b.semantic
        or a.rect != b.rect
        or a.z != b.z
        or a.rotation != b.rotation
        or a.scale != b.scale
        or a.anchor != b.anchor
        or a.opacity != b.opacity
        or a.texture != b.texture
        or a.text != b.text
        or a.font != b.font
        or a.color != b.color
        or len(a.children) != len(b.children)
    ):
        return False
    return all(_nodes_equal(x, y) for x, y in zip(a.children, b.children))


def validate(tree: DesignTree) -> list[Diagnostic]:
    """Check every tree invariant; ERROR diagnostics mean the tree is invalid.

    Zero-area leaves and fully transparent nodes are WARNINGs only.
    """
    out: list[Diagnostic] = []
    w, h = tree.canvas
    if w <= 0 or h <= 0:
        out.append(error(0, 0, f"canvas must be positive, got {w}x{h}"))

    seen: set[str] = set()
    for node in tree.walk():
        if node.id in seen:
            out.append(error(0, 0, f"duplicate node id '{node.id}'", node.id))
        seen.add(node.id)
        out.extend(_validate_node(tree.kind, node))
    return out


def _validate_node(kind: Kind, node: DesignNode) -> list[Diagnostic]:
    out: list[Diagnostic] = []
    _, _, bw, bh = node.rect
    if bw < 0 or bh < 0:
        out.append(error(0, 0, f"negative extent {bw}x{bh}", node.id))
    if not 0.0 <= node.opacity <= 1.0:
        out.append(error(0, 0, f"opacity {node.opacity} outside [0, 1]", node.id))
    if not (0.0 <= node.anchor[0] <= 1.0 and 0.0 <= node.anchor[1] <= 1.0):
        out.append(error(0, 0, f"anchor {node.anchor} outside [0, 1]^2", node.id))
    if node.texture is not None and node.semantic is not Semantic.IMAGE:
        out.append(error(0, 0, "texture only allowed on IMAGE nodes", node.id))
    for attr in ("text", "font", "color"):
        if getattr(node, attr) is not None and node.semantic is not Semantic.TEXT:
            out.append(error(0, 0, f"{attr} only allowed on TEXT nodes", node.id))
    if kind is Kind.UI:
        if node.semantic not in UI_SEMANTICS:
            out.append(error(0, 0, f"semantic {node.semantic.value} not allowed in a UI protocol", node.id))
        elif node.is_leaf and node.semantic not in UI_LEAF_SEMANTICS:
            out.append(error(0, 0, "UI leaf semantics restricted to IMAGE/TEXT", node.id))
    if node.is_leaf and (bw == 0 or bh == 0):
        out.append(warning(0, 0, "zero-area node", node.id))
    if node.opacity == 0.0:
        out.append(warning(0, 0, "fully transparent node", node.id))
    return out
