"""Universal design-protocol DSL: data model, parser, validator, canonical serializer."""

from .model import (
    DEFAULT_ANCHOR,
    DEFAULT_OPACITY,
    DEFAULT_ROTATION,
    DEFAULT_SCALE,
    DEFAULT_Z,
    RENDERABLE_SEMANTICS,
    SEMANTIC_INDEX,
    SEMANTICS,
    UI_LEAF_SEMANTICS,
    UI_SEMANTICS,
    DesignNode,
    DesignTree,
    Diagnostic,
    Kind,
    Semantic,
    structurally_equal,
    validate,
)
from .parser import ParseResult, parse_protocol
from .writer import serialize_protocol

__all__ = [
    "DEFAULT_ANCHOR",
    "DEFAULT_OPACITY",
    "DEFAULT_ROTATION",
    "DEFAULT_SCALE",
    "DEFAULT_Z",
    "RENDERABLE_SEMANTICS",
    "SEMANTIC_INDEX",
    "SEMANTICS",
    "UI_LEAF_SEMANTICS",
    "UI_SEMANTICS",
    "DesignNode",
    "DesignTree",
    "Diagnostic",
    "Kind",
    "ParseResult",
    "Semantic",
    "parse_protocol",
    "serialize_protocol",
    "structurally_equal",
    "validate",
]
