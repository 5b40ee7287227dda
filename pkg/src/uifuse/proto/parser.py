"""Recursive-descent parser for the .uiproto/.uxproto/.gameui design DSL.

Grammar:
    document := header node
    header   := 'protocol' STRING 'version' INT 'canvas' INT INT
    node     := 'node' STRING 'type' IDENT '{' (attr | node)* '}'
    attr     := key operands            -- fixed arity per key, one line

Attribute keys and arities: rect f f f f | z i | rotation f | scale f f |
anchor f f | opacity f | texture str | text str | font str i |
color #RRGGBBAA. Comments run from '//' to end of line. Whitespace is
insignificant except that an attribute's operands may not cross a line break.

The parser never raises on malformed input: every failure is reported as a
Diagnostic with a line/column location.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .model import (
    DesignNode,
    DesignTree,
    Diagnostic,
    Kind,
    Semantic,
    error,
)

MAX_DEPTH = 500

# key -> operand type string: f float, i int, s string, c color
ATTR_ARITY = {
    "rect": "ffff",
    "z": "i",
    "rotation": "f",
    "scale": "ff",
    "anchor": "ff",
    "opacity": "f",
    "texture": "s",
    "text": "s",
    "font": "si",
    "color": "c",
}

_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", '"': '"', "\\": "\\"}


@dataclass
class Token:
    kind: str  # IDENT STRING NUMBER COLOR LBRACE RBRACE NEWLINE EOF
    value: object
    line: int
    column: int
    is_int: bool = False


class _LexError(Exception):
    def __init__(self, diag: Diagnostic):
        self.diag = diag


def _lex(text: str) -> list[Token]:
    tokens: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            tokens.append(Token("NEWLINE", None, line, col))
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if text.startswith("//", i):
            while i < n and text[i] != "\n":
                i += 1
                col += 1
            continue
        if ch == "{":
            tokens.append(Token("LBRACE", "{", line, col))
            i += 1
            col += 1
            continue
        if ch == "}":
            tokens.append(Token("RBRACE", "}", line, col))
            i += 1
            col += 1
            continue
        if ch == '"':
            value, i, line2, col2 = _lex_string(text, i, line, col)
            tokens.append(Token("STRING", value, line, col))
            line, col = line2, col2
            continue
        if ch == "#":
            start_col = col
            j = i + 1
            while j < n and text[j] in "0123456789abcdefABCDEF":
                j += 1
            digits = text[i + 1 : j]
            if len(digits) != 8:
                raise _LexError(error(line, start_col, f"color literal needs 8 hex digits, got {len(digits)}"))
            rgba = tuple(int(digits[k : k + 2], 16) for k in (0, 2, 4, 6))
            tokens.append(Token("COLOR", rgba, line, start_col))
            col += j - i
            i = j
            continue
        if ch.isdigit() or ch in "+-." and _looks_numeric(text, i):
            tok, i, col = _lex_number(text, i, line, col)
            tokens.append(tok)
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(Token("IDENT", text[i:j], line, col))
            col += j - i
            i = j
            continue
        raise _LexError(error(line, col, f"unexpected character {ch!r}"))
    tokens.append(Token("EOF", None, line, col))
    return tokens


def _looks_numeric(text: str, i: int) -> bool:
    j = i
    if text[j] in "+-":
        j += 1
    return j < len(text) and (text[j].isdigit() or (text[j] == "." and j + 1 < len(text) and text[j + 1].isdigit()))


def _lex_number(text: str, i: int, line: int, col: int) -> tuple[Token, int, int]:
    start, start_col = i, col
    n = len(text)
    if text[i] in "+-":
        i += 1
    is_int = True
    while i < n and text[i].isdigit():
        i += 1
    if i < n and text[i] == ".":
        is_int = False
        i += 1
        while i < n and text[i].isdigit():
            i += 1
    if i < n and text[i] in "eE":
        k = i + 1
        if k < n and text[k] in "+-":
            k += 1
        if k < n and text[k].isdigit():
            is_int = False
            i = k
            while i < n and text[i].isdigit():
                i += 1
    raw = text[start:i]
    try:
        value: object = int(raw) if is_int else float(raw)
    except ValueError:
        raise _LexError(error(line, start_col, f"bad number literal {raw!r}")) from None
    return Token("NUMBER", value, line, start_col, is_int=is_int), i, col + (i - start)


def _lex_string(text: str, i: int, line: int, col: int) -> tuple[str, int, int, int]:
    out: list[str] = []
    start_line, start_col = line, col
    i += 1
    col += 1
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == '"':
            return "".join(out), i + 1, line, col + 1
        if ch == "\n":
            break
        if ch == "\\":
            if i + 1 >= n:
                break
            esc = text[i + 1]
            if esc in _ESCAPES:
                out.append(_ESCAPES[esc])
                i += 2
                col += 2
                continue
            if esc == "u" and i + 5 < n:
                hexpart = text[i + 2 : i + 6]
                try:
                    out.append(chr(int(hexpart, 16)))
                except ValueError:
                    raise _LexError(error(line, col, f"bad unicode escape \\u{hexpart}")) from None
                i += 6
                col += 6
                continue
            raise _LexError(error(line, col, f"unknown escape sequence \\{esc}"))
        out.append(ch)
        i += 1
        col += 1
    raise _LexError(error(start_line, start_col, "unterminated string literal"))


@dataclass
class ParseResult:
    tree: Optional[DesignTree]
    diagnostics: list[Diagnostic]

    @property
    def ok(self) -> bool:
        return self.tree is not None


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0
        self.diagnostics: list[Diagnostic] = []
        self.seen_ids: set[str] = set()

    # -- token helpers ----------------------------------------------------
    def peek(self, skip_newlines: bool = True) -> Token:
        pos = self.pos
        while skip_newlines and self.tokens[pos].kind == "NEWLINE":
            pos += 1
        return self.tokens[pos]

    def advance(self, skip_newlines: bool = True) -> Token:
        while skip_newlines and self.tokens[self.pos].kind == "NEWLINE":
            self.pos += 1
        tok = self.tokens[self.pos]
        if tok.kind != "EOF":
            self.pos += 1
        return tok

    def fail(self, tok: Token, message: str) -> "_Abort":
        self.diagnostics.append(error(tok.line, tok.column, message))
        return _Abort()

    def soft_error(self, tok: Token, message: str, node_id: str | None = None) -> None:
        self.diagnostics.append(error(tok.line, tok.column, message, node_id))

    def expect_keyword(self, word: str) -> Token:
        tok = self.advance()
        if tok.kind != "IDENT" or tok.value != word:
            raise self.fail(tok, f"expected '{word}'")
        return tok

    def expect(self, kind: str, what: str) -> Token:
        tok = self.advance()
        if tok.kind != kind:
            raise self.fail(tok, f"expected {what}")
        return tok

    def expect_int(self, what: str) -> tuple[int, Token]:
        tok = self.advance()
        if tok.kind != "NUMBER" or not tok.is_int:
            raise self.fail(tok, f"expected integer {what}")
        return int(tok.value), tok  # type: ignore[arg-type]

    # -- grammar ----------------------------------------------------------
    def document(self) -> Optional[DesignTree]:
        self.expect_keyword("protocol")
        kind_tok = self.expect("STRING", "protocol kind string")
        try:
            kind = Kind(str(kind_tok.value))
        except ValueError:
            raise self.fail(kind_tok, f"unknown protocol kind {kind_tok.value!r} (expected ui|ux|gameui)")
        self.expect_keyword("version")
        version, _ = self.expect_int("version")
        self.expect_keyword("canvas")
        w, w_tok = self.expect_int("canvas width")
        h, h_tok = self.expect_int("canvas height")
        if w <= 0:
            self.soft_error(w_tok, f"canvas width must be positive, got {w}")
        if h <= 0:
            self.soft_error(h_tok, f"canvas height must be positive, got {h}")

        root = self.node(depth=0)
        trailing = self.advance()
        if trailing.kind != "EOF":
            raise self.fail(trailing, "expected end of document after root node")
        return DesignTree(kind=kind, canvas=(w, h), root=root, version=version)

    def node(self, depth: int) -> DesignNode:
        start = self.peek()
        if depth > MAX_DEPTH:
            raise self.fail(start, f"node nesting deeper than {MAX_DEPTH}")
        self.expect_keyword("node")
        id_tok = self.expect("STRING", "node id string")
        node_id = str(id_tok.value)
        if node_id in self.seen_ids:
            self.soft_error(id_tok, f"duplicate node id '{node_id}'", node_id)
        self.seen_ids.add(node_id)
        self.expect_keyword("type")
        sem_tok = self.expect("IDENT", "semantic type")
        try:
            semantic = Semantic(str(sem_tok.value))
        except ValueError:
            raise self.fail(sem_tok, f"unknown semantic {sem_tok.value!r}")
        self.expect("LBRACE", "'{'")

        node = DesignNode(id=node_id, semantic=semantic)
        seen_attrs: set[str] = set()
        while True:
            tok = self.peek()
            if tok.kind == "RBRACE":
                self.advance()
                break
            if tok.kind == "EOF":
                raise self.fail(tok, f"unclosed node '{node_id}', expected '}}'")
            if tok.kind != "IDENT":
                raise self.fail(tok, "expected attribute key, child node, or '}'")
            if tok.value == "node":
                node.children.append(self.node(depth + 1))
                continue
            self.attribute(node, seen_attrs)
        return node

    def attribute(self, node: DesignNode, seen_attrs: set[str]) -> None:
        key_tok = self.advance()
        key = str(key_tok.value)
        if key not in ATTR_ARITY:
            raise self.fail(key_tok, f"unknown attribute '{key}'")
        if key in seen_attrs:
            self.soft_error(key_tok, f"duplicate attribute '{key}'", node.id)
        seen_attrs.add(key)
        operands = []
        for type_code in ATTR_ARITY[key]:
            tok = self.advance(skip_newlines=False)
            if tok.kind == "NEWLINE":
                raise self.fail(tok, f"attribute '{key}' operands must stay on one line")
            if type_code == "f":
                if tok.kind != "NUMBER":
                    raise self.fail(tok, f"attribute '{key}' expects a number")
                operands.append(float(tok.value))  # type: ignore[arg-type]
            elif type_code == "i":
                if tok.kind != "NUMBER" or not tok.is_int:
                    raise self.fail(tok, f"attribute '{key}' expects an integer")
                operands.append(int(tok.value))  # type: ignore[arg-type]
            elif type_code == "s":
                if tok.kind != "STRING":
                    raise self.fail(tok, f"attribute '{key}' expects a string")
                operands.append(str(tok.value))
            elif type_code == "c":
                if tok.kind != "COLOR":
                    raise self.fail(tok, f"attribute '{key}' expects #RRGGBBAA")
                operands.append(tok.value)
        self.apply_attribute(node, key, operands, key_tok)

    def apply_attribute(self, node: DesignNode, key: str, operands: list, tok: Token) -> None:
        if key == "rect":
            x, y, w, h = operands
            if w < 0 or h < 0:
                self.soft_error(tok, f"rect extent must be nonnegative, got {w}x{h}", node.id)
            node.rect = (x, y, w, h)
        elif key == "z":
            node.z = operands[0]
        elif key == "rotation":
            node.rotation = operands[0]
        elif key == "scale":
            node.scale = (operands[0], operands[1])
        elif key == "anchor":
            ax, ay = operands
            if not (0.0 <= ax <= 1.0 and 0.0 <= ay <= 1.0):
                self.soft_error(tok, f"anchor ({ax}, {ay}) outside [0, 1]", node.id)
            node.anchor = (ax, ay)
        elif key == "opacity":
            if not 0.0 <= operands[0] <= 1.0:
                self.soft_error(tok, f"opacity {operands[0]} outside [0, 1]", node.id)
            node.opacity = operands[0]
        elif key == "texture":
            if node.semantic is not Semantic.IMAGE:
                self.soft_error(tok, f"texture not allowed on {node.semantic.value} node", node.id)
            node.texture = operands[0]
        elif key == "text":
            if node.semantic is not Semantic.TEXT:
                self.soft_error(tok, f"text not allowed on {node.semantic.value} node", node.id)
            node.text = operands[0]
        elif key == "font":
            if node.semantic is not Semantic.TEXT:
                self.soft_error(tok, f"font not allowed on {node.semantic.value} node", node.id)
            node.font = (operands[0], operands[1])
        elif key == "color":
            if node.semantic is not Semantic.TEXT:
                self.soft_error(tok, f"color not allowed on {node.semantic.value} node", node.id)
            node.color = operands[0]


class _Abort(Exception):
    pass


def parse_protocol(text: str) -> ParseResult:
    """Parse a protocol document; returns a tree or error diagnostics, never raises."""
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            return ParseResult(None, [error(1, 1, f"input is not valid UTF-8: {exc.reason}")])
    try:
        tokens = _lex(text)
    except _LexError as exc:
        return ParseResult(None, [exc.diag])
    parser = _Parser(tokens)
    try:
        tree = parser.document()
    except _Abort:
        return ParseResult(None, parser.diagnostics)
    except RecursionError:  # MAX_DEPTH should trip first; belt and braces
        return ParseResult(None, parser.diagnostics + [error(0, 0, "input too deeply nested")])
    if any(d.severity == "ERROR" for d in parser.diagnostics):
        return ParseResult(None, parser.diagnostics)
    return ParseResult(tree, parser.diagnostics)
