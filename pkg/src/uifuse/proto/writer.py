"""Canonical serializer for design protocols.

Canonical form: 2-space indentation, LF line endings, fixed attribute order
(rect, z, rotation, scale, anchor, opacity, texture, text, font, color),
children in stored order. rect and z are always emitted; other attributes
only when they differ from the defaults. Floats use shortest round-trip
notation so parse(serialize(t)) is structurally equal to t and
serialize(parse(serialize(t))) is byte-identical.
"""
from __future__ import annotations

from .model import (
    DEFAULT_ANCHOR,
    DEFAULT_OPACITY,
    DEFAULT_ROTATION,
    DEFAULT_SCALE,
    DesignNode,
    DesignTree,
)

_STRING_ESCAPES = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\t": "\\t", "\r": "\\r"}


def _fmt_float(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _fmt_string(s: str) -> str:
    out = ['"']
    for ch in s:
        if ch in _STRING_ESCAPES:
            out.append(_STRING_ESCAPES[ch])
        elif ord(ch) < 0x20:
            out.append(f"\\u{ord(ch):04x}")
        else:
            out.append(ch)
    out.append('"')
    return "".join(out)


def serialize_protocol(tree: DesignTree) -> str:
    lines = [f'protocol "{tree.kind.value}" version {tree.version} canvas {tree.canvas[0]} {tree.canvas[1]}']
    _write_node(tree.root, lines, indent=0)
    return "\n".join(lines) + "\n"


def _write_node(node: DesignNode, lines: list[str], indent: int) -> None:
    pad = "  " * indent
    lines.append(f'{pad}node {_fmt_string(node.id)} type {node.semantic.value} {{')
    inner = "  " * (indent + 1)
    x, y, w, h = node.rect
    lines.append(f"{inner}rect {_fmt_float(x)} {_fmt_float(y)} {_fmt_float(w)} {_fmt_float(h)}")
    lines.append(f"{inner}z {node.z}")
    if node.rotation != DEFAULT_ROTATION:
        lines.append(f"{inner}rotation {_fmt_float(node.rotation)}")
    if node.scale != DEFAULT_SCALE:
        lines.append(f"{inner}scale {_fmt_float(node.scale[0])} {_fmt_float(node.scale[1])}")
    if node.anchor != DEFAULT_ANCHOR:
        lines.append(f"{inner}anchor {_fmt_float(node.anchor[0])} {_fmt_float(node.anchor[1])}")
    if node.opacity != DEFAULT_OPACITY:
        lines.append(f"{inner}opacity {_fmt_float(node.opacity)}")
    if node.texture is not None:
        lines.append(f"{inner}texture {_fmt_string(node.texture)}")
    if node.text is not None:
        lines.append(f"{inner}text {_fmt_string(node.text)}")
    if node.font is not None:
        lines.append(f"{inner}font {_fmt_string(node.font[0])} {node.font[1]}")
    if node.color is not None:
        r, g, b, a = node.color
        lines.append(f"{inner}color #{r:02X}{g:02X}{b:02X}{a:02X}")
    for child in node.children:
        _write_node(child, lines, indent + 1)
    lines.append(f"{pad}}}")
