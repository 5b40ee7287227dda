"""Synthetic paired UI/UX corpus generator.

Each pair starts from a generated UX tree (root, 2-6 secondary groups laid
out in disjoint grid cells, leaf and occasionally nested children, global
z counter so document order equals draw order). The UI side derives from
the UX leaves with styled visuals (textures for images, colored text
blocks), then complexity-scaled mismatch phenomenology:

  * geometry jitter (translation/scale) on derived leaves,
  * dropped UX leaves (UX nodes with no UI counterpart),
  * decoration images absorbed by a group root (many-to-one targets),
  * redundant UI leaves with no UX target (unmatchable), placed in unused
    grid cells and kept small,
  * shuffled UI document order,
  * text casing/wording drift plus contrastive positive/negative sentences.

Ground truth is emitted both at full path level and as UI-leaf to
secondary-group labels. Generator parameters are versioned so corpus
statistics stay stable; everything derives from one seed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .construct import CorrespondenceMap, MatchEntry
from .proto import DesignNode, DesignTree, Kind, Semantic

GENERATOR_VERSION = 1
CANVAS = (320, 240)
GRID = (3, 2)  # columns x rows of group cells

COMPLEXITY_NAMES = {"none": 0.0, "low": 0.25, "medium": 0.5, "high": 0.75}

PHRASES = [
    "Start Game", "Continue", "Settings", "Exit", "Shop", "Inventory",
    "Daily Reward", "Level Up", "Best Score 120", "Coins 450", "Gems 12",
    "New Quest", "Claim", "Upgrade", "Play Now", "Back", "Confirm", "Cancel",
    "Volume", "Music", "Notifications", "Profile", "Achievements", "Leaderboard",
]

GROUP_SEMANTICS = [
    Semantic.PANEL, Semantic.PANEL, Semantic.BUTTON, Semantic.LIST,
    Semantic.SCROLLVIEW, Semantic.TOGGLE, Semantic.SLIDER, Semantic.INPUT,
]

FONTS = ["hero", "body", "mono", "fancy"]


def parse_complexity(value: "str | float") -> float:
    if isinstance(value, str):
        if value in COMPLEXITY_NAMES:
            return COMPLEXITY_NAMES[value]
        value = float(value)
    c = float(value)
    if not 0.0 <= c <= 1.0:
        raise ValueError(f"complexity must lie in [0, 1], got {c}")
    return c


@dataclass
class SyntheticPair:
    name: str
    ui_tree: DesignTree
    ux_tree: DesignTree
    truth: CorrespondenceMap  # full-path truth, source MANUAL
    group_labels: dict[str, "str | None"]  # UI leaf id -> secondary node id (None = unmatched)
    assets: dict[str, np.ndarray] = field(default_factory=dict)
    contrastive: dict[str, tuple[list[str], list[str]]] = field(default_factory=dict)


def _make_texture(rng: np.random.Generator, w: int, h: int) -> np.ndarray:
    base = rng.integers(40, 255, 3)
    other = rng.integers(0, 215, 3)
    tex = np.zeros((h, w, 4), dtype=np.uint8)
    tex[..., :3] = base
    style = rng.integers(0, 3)
    if style == 1:  # horizontal stripes
        tex[::2, :, :3] = other
    elif style == 2:  # checker
        yy, xx = np.mgrid[0:h, 0:w]
        tex[(yy // 3 + xx // 3) % 2 == 1, :3] = other
    tex[..., 3] = 255
    return tex


def _positive_variant(rng: np.random.Generator, text: str) -> str:
    choice = rng.integers(0, 3)
    if choice == 0:
        return text.upper()
    if choice == 1:
        return text.lower()
    words = text.split()
    rng.shuffle(words)
    return " ".join(words)


def _negatives(rng: np.random.Generator, text: str, k: int = 2) -> list[str]:
    pool = [p for p in PHRASES if p != text]
    picks = rng.choice(len(pool), size=k, replace=False)
    return [pool[int(i)] for i in picks]


def synthesize_pair(name: str, rng: np.random.Generator, complexity: float) -> SyntheticPair:
    c = parse_complexity(complexity)
    W, H = CANVAS
    cols, rows = GRID
    cell_w, cell_h = W // cols, H // rows
    cells = [(cx * cell_w, cy * cell_h) for cy in range(rows) for cx in range(cols)]
    order = rng.permutation(len(cells))

    hi = 4 if c <= 0.5 else 6
    L = int(rng.integers(2, hi + 1))
    group_cells = [cells[i] for i in order[:L]]
    spare_cells = [cells[i] for i in order[L:]]

    z_counter = 0

    def next_z() -> int:
        nonlocal z_counter
        z_counter += 1
        return z_counter

    contrastive: dict[str, tuple[list[str], list[str]]] = {}

    def make_text(node_id: str) -> str:
        phrase = PHRASES[int(rng.integers(0, len(PHRASES)))]
        text = phrase if rng.random() < 0.7 else f"{phrase} {int(rng.integers(1, 99))}"
        contrastive[node_id] = ([_positive_variant(rng, text)], _negatives(rng, text))
        return text

    root = DesignNode(id="root", semantic=Semantic.PANEL, rect=(0, 0, W, H), z=0)
    ux_tree = DesignTree(kind=Kind.UX, canvas=CANVAS, root=root)
    leaf_registry: list[tuple[DesignNode, str]] = []  # (leaf, owning secondary id)

    for gi, (cx, cy) in enumerate(group_cells):
        margin = int(rng.integers(3, 10))
        gx, gy = cx + margin, cy + margin
        gw, gh = cell_w - 2 * margin, cell_h - 2 * margin
        semantic = GROUP_SEMANTICS[int(rng.integers(0, len(GROUP_SEMANTICS)))]
        group = DesignNode(
            id=f"g{gi}_{semantic.value.lower()}", semantic=semantic,
            rect=(gx, gy, gw, gh), z=next_z(),
        )
        root.children.append(group)

        n_slots = int(rng.integers(1, 3))
        nest_here = c >= 0.4 and rng.random() < 0.25 and n_slots >= 2
        slot_h = gh / n_slots
        for si in range(n_slots):
            sx = gx + 2
            sy = gy + si * slot_h + 1
            sw = max(gw - 4, 4)
            sh = max(slot_h - 2, 3)
            if nest_here and si == n_slots - 1:
                panel = DesignNode(
                    id=f"g{gi}_panel{si}", semantic=Semantic.PANEL,
                    rect=(sx, sy, sw, sh), z=next_z(),
                )
                group.children.append(panel)
                for pi in range(int(rng.integers(1, 3))):
                    half_w = sw / 2 - 2
                    leaf = _make_ux_leaf(rng, f"g{gi}_p{si}_leaf{pi}",
                                         (sx + pi * (half_w + 2), sy + 1, half_w, sh - 2),
                                         next_z(), make_text)
                    panel.children.append(leaf)
                    leaf_registry.append((leaf, group.id))
            else:
                leaf = _make_ux_leaf(rng, f"g{gi}_leaf{si}", (sx, sy, sw, sh), next_z(), make_text)
                group.children.append(leaf)
                leaf_registry.append((leaf, group.id))

    # ---- derive the UI side -------------------------------------------------
    ui_root = DesignNode(id="ui_root", semantic=Semantic.PANEL, rect=(0, 0, W, H), z=0)
    ui_tree = DesignTree(kind=Kind.UI, canvas=CANVAS, root=ui_root)
    assets: dict[str, np.ndarray] = {}
    truth_entries: list[MatchEntry] = []
    group_labels: dict[str, "str | None"] = {}

    drop_prob = 0.15 * c
    for leaf, group_id in leaf_registry:
        if rng.random() < drop_prob and len(leaf_registry) > 2:
            continue  # UX leaf with no UI counterpart
        ui_id = f"u_{leaf.id}"
        x, y, w, h = leaf.rect
        if c > 0:
            x += rng.uniform(-0.02, 0.02) * c * W
            y += rng.uniform(-0.02, 0.02) * c * H
            s = 1.0 + rng.uniform(-0.05, 0.05) * c
            w *= s
            h *= s
            x = float(np.clip(x, 0, W - 1))
            y = float(np.clip(y, 0, H - 1))
            w = float(min(w, W - x))
            h = float(min(h, H - y))
        ui_leaf = DesignNode(id=ui_id, semantic=leaf.semantic, rect=(x, y, w, h), z=leaf.z)
        if leaf.semantic is Semantic.TEXT:
            text = leaf.text or ""
            if c > 0 and rng.random() < 0.3 * c:
                text = _positive_variant(rng, text)
            ui_leaf.text = text
            ui_leaf.font = (FONTS[int(rng.integers(0, len(FONTS)))], int(rng.integers(10, 33)))
            color = rng.integers(30, 255, 3)
            ui_leaf.color = (int(color[0]), int(color[1]), int(color[2]), 255)
            contrastive[ui_id] = contrastive.get(leaf.id, ([text], _negatives(rng, text)))
        else:
            tex_name = f"{name}_{ui_id}.png"
            assets[tex_name] = _make_texture(rng, int(rng.integers(12, 33)), int(rng.integers(8, 25)))
            ui_leaf.texture = tex_name
        ui_root.children.append(ui_leaf)
        truth_entries.append(MatchEntry(ui_id, ux_tree.path_of(leaf.id), 1.0, "MANUAL"))
        group_labels[ui_id] = group_id

    # decoration backgrounds absorbed by a group root (many-to-one)
    if c > 0:
        for gi, (cx, cy) in enumerate(group_cells):
            if rng.random() < 0.5 * c:
                group = root.children[gi]
                gx, gy, gw, gh = group.rect
                ui_id = f"u_dec_g{gi}"
                tex_name = f"{name}_{ui_id}.png"
                assets[tex_name] = _make_texture(rng, 24, 18)
                ui_root.children.append(DesignNode(
                    id=ui_id, semantic=Semantic.IMAGE,
                    rect=(gx - 1, gy - 1, gw + 2, gh + 2), z=group.z,
                    texture=tex_name,
                ))
                truth_entries.append(MatchEntry(ui_id, ux_tree.path_of(group.id), 1.0, "MANUAL"))
                group_labels[ui_id] = group.id

    # redundant UI leaves: small, in spare cells, no UX target
    if c > 0 and spare_cells:
        n_redundant = int(rng.integers(0, 1 + round(2 * c)))
        for ri in range(n_redundant):
            cx, cy = spare_cells[ri % len(spare_cells)]
            ui_id = f"u_extra{ri}"
            tex_name = f"{name}_{ui_id}.png"
            assets[tex_name] = _make_texture(rng, 8, 6)
            ui_root.children.append(DesignNode(
                id=ui_id, semantic=Semantic.IMAGE,
                rect=(cx + rng.uniform(4, 40), cy + rng.uniform(4, 40), 8, 6),
                z=next_z(), texture=tex_name,
            ))
            truth_entries.append(MatchEntry(ui_id, None, 1.0, "MANUAL"))
            group_labels[ui_id] = None

    if c > 0:
        perm = rng.permutation(len(ui_root.children))
        ui_root.children = [ui_root.children[int(i)] for i in perm]

    truth = CorrespondenceMap(entries=truth_entries, provenance={"generator": GENERATOR_VERSION})
    return SyntheticPair(
        name=name, ui_tree=ui_tree, ux_tree=ux_tree, truth=truth,
        group_labels=group_labels, assets=assets, contrastive=contrastive,
    )


def _make_ux_leaf(rng, leaf_id: str, rect, z: int, make_text) -> DesignNode:
    if rng.random() < 0.5:
        return DesignNode(id=leaf_id, semantic=Semantic.TEXT, rect=rect, z=z, text=make_text(leaf_id))
    return DesignNode(id=leaf_id, semantic=Semantic.IMAGE, rect=rect, z=z)


def synthesize_pairs(seed: int, count: int, complexity: "str | float") -> list[SyntheticPair]:
    c = parse_complexity(complexity)
    pairs = []
    for k in range(count):
        rng = np.random.default_rng(np.random.SeedSequence([seed, k, GENERATOR_VERSION]))
        pairs.append(synthesize_pair(f"p{k:04d}", rng, c))
    return pairs
