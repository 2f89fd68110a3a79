"""Sensor payload schemas and validation.

A sensor declares what shape of value it accepts: one of the scalar kinds
(string, integer, float), a fixed-arity tuple of scalars, or a variable
length array of one scalar kind. Validation is exact: an integer is not
accepted where a float is declared and vice versa, matching the strictness
of a typed index mapping. Python bools are rejected as integers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import Invalid

SCALAR_KINDS = ("string", "integer", "float")
COMPOSITE_KINDS = ("tuple", "array")
ALL_KINDS = SCALAR_KINDS + COMPOSITE_KINDS


@dataclass(frozen=True)
class PayloadSchema:
    kind: str
    element_kinds: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in ALL_KINDS:
            raise Invalid(f"unknown schema kind {self.kind!r}")
        if self.kind in SCALAR_KINDS and self.element_kinds:
            raise Invalid("scalar schemas take no element kinds")
        if self.kind == "tuple" and len(self.element_kinds) < 1:
            raise Invalid("tuple schema needs at least one element kind")
        if self.kind == "array" and len(self.element_kinds) != 1:
            raise Invalid("array schema needs exactly one element kind")
        for ek in self.element_kinds:
            if ek not in SCALAR_KINDS:
                raise Invalid(f"element kind must be scalar, got {ek!r}")

    def to_json(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.element_kinds:
            out["element_kinds"] = list(self.element_kinds)
        return out

    @classmethod
    def from_json(cls, obj) -> "PayloadSchema":
        if isinstance(obj, str):
            return cls(kind=obj)
        if not isinstance(obj, dict) or "kind" not in obj:
            raise Invalid("schema must be a kind name or an object with 'kind'")
        kinds = obj.get("element_kinds") or ()
        if not isinstance(kinds, (list, tuple)):
            raise Invalid("element_kinds must be a list")
        return cls(kind=obj["kind"], element_kinds=tuple(kinds))


@dataclass(frozen=True)
class SchemaMismatch:
    """Structured description of a payload/schema disagreement."""

    expected: str
    found: str
    position: tuple[int, ...] = field(default=())

    def to_json(self) -> dict:
        return {
            "expected": self.expected,
            "found": self.found,
            "position": list(self.position),
        }


def _found_kind(value) -> str:
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, str):
        return "string"
    if isinstance(value, int):
        return "integer"
    if isinstance(value, float):
        return "float"
    if isinstance(value, (list, tuple)):
        return "list"
    return type(value).__name__


def _scalar_ok(kind: str, value) -> bool:
    if kind == "string":
        return isinstance(value, str)
    if kind == "integer":
        return isinstance(value, int) and not isinstance(value, bool)
    if kind == "float":
        return isinstance(value, float)
    return False


def validate_payload(schema: PayloadSchema, payload) -> SchemaMismatch | None:
    """Check payload against schema; None means it conforms.

    On mismatch the result names the expected kind, the kind actually found,
    and the element position (empty for the top level).
    """
    if schema.kind in SCALAR_KINDS:
        if _scalar_ok(schema.kind, payload):
            return None
        return SchemaMismatch(expected=schema.kind, found=_found_kind(payload))

    if not isinstance(payload, (list, tuple)):
        return SchemaMismatch(expected=schema.kind, found=_found_kind(payload))

    if schema.kind == "tuple":
        if len(payload) != len(schema.element_kinds):
            return SchemaMismatch(
                expected=f"tuple of {len(schema.element_kinds)}",
                found=f"length {len(payload)}",
            )
        for i, (ek, v) in enumerate(zip(schema.element_kinds, payload)):
            if not _scalar_ok(ek, v):
                return SchemaMismatch(expected=ek, found=_found_kind(v), position=(i,))
        return None

    # array
    ek = schema.element_kinds[0]
    for i, v in enumerate(payload):
        if not _scalar_ok(ek, v):
            return SchemaMismatch(expected=ek, found=_found_kind(v), position=(i,))
    return None
