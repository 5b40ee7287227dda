"""Software rasterizer: painter's algorithm with source-over alpha compositing.

Leaves draw in ascending (z, document index) order. IMAGE leaves sample
their texture nearest-neighbor scaled into the node rect; TEXT leaves fill
the rect with their color (placeholder glyph block); PANEL and widget
semantics draw nothing, as do IMAGE/TEXT leaves without texture/color
(wireframe nodes). Node scale and rotation apply about the anchor point in
canvas space before the canvas-to-target mapping.

Compositing is bit-exact: non-premultiplied RGBA, channels resolved per
step with round-half-up. Depth mode paints each covered pixel with the
draw-order rank of its topmost covering leaf, normalized to 0..255.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .proto import DesignNode, DesignTree, Semantic


class MissingAssetError(ValueError):
    def __init__(self, names: list[str]):
        super().__init__(f"missing texture assets: {', '.join(sorted(names))}")
        self.names = names


@dataclass
class RasterImage:
    width: int
    height: int
    pixels: np.ndarray  # (H, W, 4) uint8, top-left origin, non-premultiplied

    def __post_init__(self):
        assert self.pixels.shape == (self.height, self.width, 4)

    def to_pil(self) -> Image.Image:
        return Image.fromarray(self.pixels, mode="RGBA")


def blank(width: int, height: int) -> RasterImage:
    return RasterImage(width, height, np.zeros((height, width, 4), dtype=np.uint8))


def load_png(path: str | Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.array(img.convert("RGBA"), dtype=np.uint8)


def save_png(image: RasterImage, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    image.to_pil().save(path, format="PNG")


def load_assets(directory: str | Path) -> dict[str, np.ndarray]:
    directory = Path(directory)
    if not directory.is_dir():
        return {}
    return {p.name: load_png(p) for p in sorted(directory.glob("*.png"))}


def _draw_sorted_leaves(tree: DesignTree) -> list[tuple[DesignNode, int]]:
    leaves = [(node, doc) for doc, node in enumerate(tree.walk()) if node.is_leaf]
    leaves.sort(key=lambda item: (item[0].z, item[1]))
    return leaves


def _leaf_source(node: DesignNode, assets: dict[str, np.ndarray]) -> tuple[str, object] | None:
    """(kind, payload) of what the leaf paints, or None for invisible leaves."""
    if node.opacity <= 0.0:
        return None
    if node.semantic is Semantic.IMAGE and node.texture is not None:
        if node.texture not in assets:
            raise MissingAssetError([node.texture])
        return ("texture", assets[node.texture])
    if node.semantic is Semantic.TEXT and node.color is not None:
        return ("fill", np.array(node.color, dtype=np.float64))
    return None


def _composite(dst: np.ndarray, src_rgb: np.ndarray, src_alpha: np.ndarray) -> None:
    """Source-over on a destination uint8 view; round-half-up per channel."""
    da = dst[..., 3].astype(np.float64) / 255.0
    dc = dst[..., :3].astype(np.float64)
    sa = src_alpha
    out_a = sa + da * (1.0 - sa)
    safe = np.maximum(out_a, 1e-12)
    out_c = (src_rgb * sa[..., None] + dc * (da * (1.0 - sa))[..., None]) / safe[..., None]
    out_c[out_a == 0] = 0.0
    dst[..., :3] = np.floor(out_c + 0.5).astype(np.uint8)
    dst[..., 3] = np.floor(out_a * 255.0 + 0.5).astype(np.uint8)


def _pixel_span(lo: float, size: float, limit: int) -> tuple[int, int]:
    """Indices whose centers fall in [lo, lo+size), clipped to [0, limit)."""
    first = math.ceil(lo - 0.5)
    last = math.ceil(lo + size - 0.5)  # exclusive
    return max(first, 0), min(last, limit)


def render(
    tree: DesignTree,
    assets: dict[str, np.ndarray] | None = None,
    target_size: tuple[int, int] | None = None,
    mode: str = "rgba",
) -> RasterImage:
    if mode not in ("rgba", "depth"):
        raise ValueError(f"unknown render mode {mode!r}")
    assets = assets or {}
    tw, th = target_size or tree.canvas
    tw, th = int(tw), int(th)
    scale_x = tw / tree.canvas[0]
    scale_y = th / tree.canvas[1]

    canvas = np.zeros((th, tw, 4), dtype=np.uint8)
    depth_rank = np.zeros((th, tw), dtype=np.int32)

    leaves = _draw_sorted_leaves(tree)
    drawable = [(node, _leaf_source(node, assets)) for node, _ in leaves]
    drawable = [(node, src) for node, src in drawable if src is not None]

    for rank, (node, source) in enumerate(drawable, start=1):
        coverage = _paint_leaf(canvas, node, source, scale_x, scale_y)
        if mode == "depth" and coverage is not None:
            y0, y1, x0, x1, covered = coverage
            depth_rank[y0:y1, x0:x1][covered] = rank

    if mode == "depth":
        k = max(len(drawable), 1)
        gray = np.floor(depth_rank.astype(np.float64) * 255.0 / k + 0.5).astype(np.uint8)
        out = np.zeros((th, tw, 4), dtype=np.uint8)
        out[..., 0] = out[..., 1] = out[..., 2] = gray
        out[..., 3] = 255
        return RasterImage(tw, th, out)
    return RasterImage(tw, th, canvas)


def _paint_leaf(canvas: np.ndarray, node: DesignNode, source: tuple[str, object],
                scale_x: float, scale_y: float):
    """Composites one leaf; returns (y0, y1, x0, x1, covered-mask) for depth tracking."""
    th, tw = canvas.shape[:2]
    x, y, w, h = node.rect
    sx, sy = node.scale
    ax = x + node.anchor[0] * w
    ay = y + node.anchor[1] * h
    w_eff = w * sx
    h_eff = h * sy
    x_eff = ax - node.anchor[0] * w_eff
    y_eff = ay - node.anchor[1] * h_eff
    if w_eff <= 0 or h_eff <= 0:
        return None

    kind, payload = source
    if node.rotation % 360.0 == 0.0:
        x0, x1 = _pixel_span(x_eff * scale_x, w_eff * scale_x, tw)
        y0, y1 = _pixel_span(y_eff * scale_y, h_eff * scale_y, th)
        if x0 >= x1 or y0 >= y1:
            return None
        region = canvas[y0:y1, x0:x1]
        if kind == "fill":
            color = payload
            rgb = np.broadcast_to(color[:3], region.shape[:2] + (3,))
            alpha = np.full(region.shape[:2], color[3] / 255.0 * node.opacity)
        else:
            tex = payload
            cx = (np.arange(x0, x1) + 0.5) / scale_x - x_eff
            cy = (np.arange(y0, y1) + 0.5) / scale_y - y_eff
            u = np.clip((cx / w_eff * tex.shape[1]).astype(np.int64), 0, tex.shape[1] - 1)
            v = np.clip((cy / h_eff * tex.shape[0]).astype(np.int64), 0, tex.shape[0] - 1)
            sampled = tex[v[:, None], u[None, :]]
            rgb = sampled[..., :3].astype(np.float64)
            alpha = sampled[..., 3].astype(np.float64) / 255.0 * node.opacity
        _composite(region, rgb, alpha)
        return y0, y1, x0, x1, alpha > 0

    # rotated leaf: inverse-map target pixel centers into the unrotated frame
    theta = math.radians(node.rotation)
    corners = []
    for px, py in ((x_eff, y_eff), (x_eff + w_eff, y_eff), (x_eff, y_eff + h_eff), (x_eff + w_eff, y_eff + h_eff)):
        rx = ax + (px - ax) * math.cos(theta) - (py - ay) * math.sin(theta)
        ry = ay + (px - ax) * math.sin(theta) + (py - ay) * math.cos(theta)
        corners.append((rx, ry))
    xs_c = [c[0] for c in corners]
    ys_c = [c[1] for c in corners]
    x0 = max(math.floor(min(xs_c) * scale_x), 0)
    x1 = min(math.ceil(max(xs_c) * scale_x), tw)
    y0 = max(math.floor(min(ys_c) * scale_y), 0)
    y1 = min(math.ceil(max(ys_c) * scale_y), th)
    if x0 >= x1 or y0 >= y1:
        return None
    gx = (np.arange(x0, x1) + 0.5) / scale_x
    gy = (np.arange(y0, y1) + 0.5) / scale_y
    px = np.broadcast_to(gx[None, :], (y1 - y0, x1 - x0))
    py = np.broadcast_to(gy[:, None], (y1 - y0, x1 - x0))
    # rotate back by -theta around the anchor
    lx = ax + (px - ax) * math.cos(theta) + (py - ay) * math.sin(theta)
    ly = ay - (px - ax) * math.sin(theta) + (py - ay) * math.cos(theta)
    inside = (lx >= x_eff) & (lx < x_eff + w_eff) & (ly >= y_eff) & (ly < y_eff + h_eff)
    if not inside.any():
        return None
    region = canvas[y0:y1, x0:x1]
    if kind == "fill":
        color = payload
        rgb = np.broadcast_to(color[:3], region.shape[:2] + (3,))
        alpha = np.where(inside, color[3] / 255.0 * node.opacity, 0.0)
    else:
        tex = payload
        u = np.clip(((lx - x_eff) / w_eff * tex.shape[1]).astype(np.int64), 0, tex.shape[1] - 1)
        v = np.clip(((ly - y_eff) / h_eff * tex.shape[0]).astype(np.int64), 0, tex.shape[0] - 1)
        sampled = tex[v, u]
        rgb = sampled[..., :3].astype(np.float64)
        alpha = np.where(inside, sampled[..., 3].astype(np.float64) / 255.0 * node.opacity, 0.0)
    _composite(region, rgb, alpha)
    return y0, y1, x0, x1, alpha > 0
