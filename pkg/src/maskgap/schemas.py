"""Built-in finite JSON-style languages for experiments and tests.

Each schema is a small set of canonical (whitespace-free) JSON strings,
character-tokenized into a trie grammar. Sizes span the regimes where
one-step lookahead helps, hurts, or is irrelevant: a 3-way enum, a
balanced 4-string product, and two wider 18/24-string products.
"""

from __future__ import annotations

from .grammar import TrieGrammar

_STATUS = tuple(
    '{"status":"%s"}' % v for v in ("ok", "error", "retry")
)

_TYPE_VALUE = tuple(
    '{"type":"%s","value":%d}' % (t, v) for t in ("a", "b") for v in (1, 2)
)

_ACTION = tuple(
    '{"action":"%s","target":"%s"}' % (a, t)
    for a in ("create", "delete", "update")
    for t in ("row", "table", "index", "view", "user", "role")
)

_METHOD_PATH = tuple(
    '{"method":"%s","path":"%s"}' % (m, p)
    for m in ("GET", "PUT", "POST", "DELETE")
    for p in ("/api/v1", "/api/v2", "/metrics", "/health", "/users", "/items")
)

SCHEMA_STRINGS: dict[str, tuple[str, ...]] = {
    "status": _STATUS,
    "type_value": _TYPE_VALUE,
    "action": _ACTION,
    "method_path": _METHOD_PATH,
}


def schema_names() -> tuple[str, ...]:
    return tuple(SCHEMA_STRINGS)


def finite_schema(name: str) -> TrieGrammar:
    """Trie grammar for a named built-in schema."""
    try:
        strings = SCHEMA_STRINGS[name]
    except KeyError:
        raise ValueError(
            f"unknown schema {name!r}; available: {', '.join(SCHEMA_STRINGS)}"
        ) from None
    return TrieGrammar(strings=strings)
