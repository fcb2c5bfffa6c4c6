"""Typed provenance value trees and the operations defined over them.

A provenance value is a small algebra of immutable nodes (strings, ints,
floats, bools, timestamps, hashes, lists, string-keyed maps, and named
objects).  Everything the library records about datasets, trainers, models
and evaluations is expressed in this algebra, which gives one canonical
byte encoding (for SHA-256 hashing), one JSON form (for files), one
configuration extractor (for re-instantiating components) and one redaction
rule, instead of per-class ad-hoc metadata.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
import time
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Union

from .errors import ParseError, UnknownTag

INT64_MIN = -(1 << 63)
INT64_MAX = (1 << 63) - 1

REDACTED = "<REDACTED>"
REDACTED_VOLATILE = "<REDACTED-VOLATILE>"

# Section keys of an object provenance node.
CONFIG_SECTION = "config"
INSTANCE_SECTION = "instance"

# Instance fields that describe the run environment rather than the
# computation; they are excluded from hashes and tagged in diffs.
# Timestamp values are volatile wherever they appear, independent of key.
VOLATILE_INSTANCE_KEYS = frozenset(
    {"trained-at", "loaded-at", "os-name", "architecture", "user-info"}
)


# ---------------------------------------------------------------------------
# The value algebra
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PStr:
    value: str

    def __post_init__(self):
        if not isinstance(self.value, str):
            raise TypeError("PStr takes a str")
        try:
            self.value.encode("utf-8")
        except UnicodeEncodeError as exc:
            raise ValueError(f"string is not UTF-8 encodable: {exc}") from exc


@dataclass(frozen=True)
class PInt:
    value: int

    def __post_init__(self):
        if type(self.value) is not int:
            raise TypeError("PInt takes an int")
        if not INT64_MIN <= self.value <= INT64_MAX:
            raise ValueError("PInt out of signed 64-bit range")


@dataclass(frozen=True, eq=False)
class PFlt:
    value: float

    def __post_init__(self):
        if not isinstance(self.value, float):
            raise TypeError("PFlt takes a float")
        if not math.isfinite(self.value):
            raise ValueError("PFlt must be finite")

    # equality follows the IEEE-754 bit pattern (the canonical form), so
    # 0.0 and -0.0 are distinct values here even though they compare ==
    def __eq__(self, other):
        return isinstance(other, PFlt) and struct.pack(">d", self.value) == struct.pack(
            ">d", other.value
        )

    def __hash__(self):
        return hash(struct.pack(">d", self.value))


@dataclass(frozen=True)
class PBool:
    value: bool

    def __post_init__(self):
        if not isinstance(self.value, bool):
            raise TypeError("PBool takes a bool")


@dataclass(frozen=True)
class PTimestamp:
    """A UTC instant as integer seconds plus nanoseconds in [0, 1e9)."""

    seconds: int
    nanos: int = 0

    def __post_init__(self):
        if not INT64_MIN <= self.seconds <= INT64_MAX:
            raise ValueError("seconds out of signed 64-bit range")
        if not 0 <= self.nanos < 1_000_000_000:
            raise ValueError("nanos out of range")


@dataclass(frozen=True)
class PHash:
    algorithm: str
    digest: str

    def __post_init__(self):
        if not self.algorithm or not self.digest:
            raise ValueError("hash needs an algorithm and a digest")


@dataclass(frozen=True)
class PList:
    items: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))

    def __iter__(self) -> Iterator:
        return iter(self.items)

    def __len__(self) -> int:
        return len(self.items)


@dataclass(frozen=True)
class PMap:
    """String-keyed map with entries kept sorted by key."""

    entries: tuple = ()

    def __post_init__(self):
        raw = self.entries
        if isinstance(raw, Mapping):
            pairs = list(raw.items())
        else:
            pairs = list(raw)
        keys = [k for k, _ in pairs]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate map keys")
        if any(not isinstance(k, str) for k in keys):
            raise TypeError("map keys must be strings")
        object.__setattr__(self, "entries", tuple(sorted(pairs, key=lambda kv: kv[0])))

    def keys(self) -> tuple[str, ...]:
        return tuple(k for k, _ in self.entries)

    def get(self, key: str, default=None):
        for k, v in self.entries:
            if k == key:
                return v
        return default

    def __getitem__(self, key: str):
        v = self.get(key, _MISSING)
        if v is _MISSING:
            raise KeyError(key)
        return v

    def __contains__(self, key: str) -> bool:
        return self.get(key, _MISSING) is not _MISSING

    def __len__(self) -> int:
        return len(self.entries)

    def as_dict(self) -> dict:
        return dict(self.entries)

    def with_entry(self, key: str, value) -> "PMap":
        """Copy with one entry replaced or added."""
        items = {k: v for k, v in self.entries}
        items[key] = value
        return PMap(items)


_MISSING = object()


@dataclass(frozen=True)
class PObj:
    class_name: str
    fields: PMap = field(default_factory=PMap)

    def __post_init__(self):
        if not self.class_name:
            raise ValueError("object class name must be non-empty")
        if not isinstance(self.fields, PMap):
            object.__setattr__(self, "fields", PMap(self.fields))


ProvValue = Union[PStr, PInt, PFlt, PBool, PTimestamp, PHash, PList, PMap, PObj]


def to_prov(value) -> ProvValue:
    """Lift a plain Python value into the provenance algebra."""
    if isinstance(value, (PStr, PInt, PFlt, PBool, PTimestamp, PHash, PList, PMap, PObj)):
        return value
    if isinstance(value, bool):
        return PBool(value)
    if isinstance(value, int):
        return PInt(value)
    if isinstance(value, float):
        return PFlt(value)
    if isinstance(value, str):
        return PStr(value)
    if isinstance(value, Mapping):
        return PMap({k: to_prov(v) for k, v in value.items()})
    if isinstance(value, (list, tuple)):
        return PList(tuple(to_prov(v) for v in value))
    raise TypeError(f"cannot represent {type(value).__name__} as a provenance value")


def timestamp_now() -> PTimestamp:
    ns = time.time_ns()
    return PTimestamp(ns // 1_000_000_000, ns % 1_000_000_000)


# ---------------------------------------------------------------------------
# Object provenance: config/instance partition
# ---------------------------------------------------------------------------

def object_provenance(
    class_name: str,
    config: Mapping[str, ProvValue] | None = None,
    instance: Mapping[str, ProvValue] | None = None,
) -> PObj:
    """Build an object node whose fields are split into the two sections.

    Configuration fields are those known before the computation ran
    (hyperparameters, paths, seeds); instance fields are derived during it
    (hashes, counts, timestamps, host info).  A key may appear in exactly
    one section.
    """
    config = dict(config or {})
    instance = dict(instance or {})
    overlap = set(config) & set(instance)
    if overlap:
        raise ValueError(f"fields in both sections: {sorted(overlap)}")
    return PObj(
        class_name,
        PMap({CONFIG_SECTION: PMap(config), INSTANCE_SECTION: PMap(instance)}),
    )


def is_object_provenance(v: ProvValue) -> bool:
    return (
        isinstance(v, PObj)
        and v.fields.keys() == (CONFIG_SECTION, INSTANCE_SECTION)
        and isinstance(v.fields[CONFIG_SECTION], PMap)
        and isinstance(v.fields[INSTANCE_SECTION], PMap)
    )


def config_section(obj: PObj) -> PMap:
    return obj.fields[CONFIG_SECTION]


def instance_section(obj: PObj) -> PMap:
    return obj.fields[INSTANCE_SECTION]


def with_instance_entry(obj: PObj, key: str, value: ProvValue) -> PObj:
    """Copy an object provenance node with one instance field replaced."""
    inst = instance_section(obj).with_entry(key, value)
    return PObj(obj.class_name, obj.fields.with_entry(INSTANCE_SECTION, inst))


# ---------------------------------------------------------------------------
# Canonical byte encoding
# ---------------------------------------------------------------------------

_TAG_STR = b"\x01"
_TAG_INT = b"\x02"
_TAG_FLT = b"\x03"
_TAG_BOOL = b"\x04"
_TAG_TIMESTAMP = b"\x05"
_TAG_HASH = b"\x06"
_TAG_LIST = b"\x07"
_TAG_MAP = b"\x08"
_TAG_OBJ = b"\x09"


def _raw_str(s: str) -> bytes:
    data = s.encode("utf-8")
    return struct.pack(">I", len(data)) + data


def canonical_encode(v: ProvValue) -> bytes:
    """Deterministic, injective byte encoding of a provenance value.

    One tag byte per variant; strings are length-prefixed UTF-8; integers
    are big-endian two's-complement; floats are their big-endian IEEE-754
    bit patterns; map entries are emitted in key byte order.  Two values
    encode to the same bytes iff they are equal, which is what makes
    SHA-256 over this encoding usable as an identity.
    """
    out = bytearray()
    _encode_into(v, out)
    return bytes(out)


def _encode_into(v: ProvValue, out: bytearray) -> None:
    if isinstance(v, PStr):
        out += _TAG_STR
        out += _raw_str(v.value)
    elif isinstance(v, PInt):
        out += _TAG_INT
        out += struct.pack(">q", v.value)
    elif isinstance(v, PFlt):
        out += _TAG_FLT
        out += struct.pack(">d", v.value)
    elif isinstance(v, PBool):
        out += _TAG_BOOL
        out += b"\x01" if v.value else b"\x00"
    elif isinstance(v, PTimestamp):
        out += _TAG_TIMESTAMP
        out += struct.pack(">qI", v.seconds, v.nanos)
    elif isinstance(v, PHash):
        out += _TAG_HASH
        out += _raw_str(v.algorithm)
        out += _raw_str(v.digest)
    elif isinstance(v, PList):
        out += _TAG_LIST
        out += struct.pack(">I", len(v.items))
        for item in v.items:
            _encode_into(item, out)
    elif isinstance(v, PMap):
        out += _TAG_MAP
        out += struct.pack(">I", len(v.entries))
        for key, val in v.entries:  # already sorted by key
            out += _raw_str(key)
            _encode_into(val, out)
    elif isinstance(v, PObj):
        out += _TAG_OBJ
        out += _raw_str(v.class_name)
        _encode_into(v.fields, out)
    else:
        raise TypeError(f"not a provenance value: {type(v).__name__}")


# ---------------------------------------------------------------------------
# Hashing
# ---------------------------------------------------------------------------

def strip_volatile(v: ProvValue) -> ProvValue:
    """Replace environment-dependent fields with a fixed placeholder.

    Timestamps anywhere, and the volatile instance keys of object nodes,
    are rewritten to the string ``<REDACTED-VOLATILE>`` so that reruns of
    the same configuration over the same data hash identically.
    """
    return _strip(v, in_instance=False)


def _strip(v: ProvValue, in_instance: bool) -> ProvValue:
    if isinstance(v, PTimestamp):
        return PStr(REDACTED_VOLATILE)
    if isinstance(v, PObj):
        if is_object_provenance(v):
            cfg = _strip(config_section(v), in_instance=False)
            inst_pairs = []
            for key, val in instance_section(v).entries:
                if key in VOLATILE_INSTANCE_KEYS:
                    inst_pairs.append((key, PStr(REDACTED_VOLATILE)))
                else:
                    inst_pairs.append((key, _strip(val, in_instance=True)))
            return PObj(v.class_name, PMap({CONFIG_SECTION: cfg, INSTANCE_SECTION: PMap(inst_pairs)}))
        return PObj(v.class_name, _strip(v.fields, in_instance))
    if isinstance(v, PMap):
        return PMap([(k, _strip(val, in_instance)) for k, val in v.entries])
    if isinstance(v, PList):
        return PList(tuple(_strip(item, in_instance) for item in v.items))
    return v


def provenance_hash(v: ProvValue) -> str:
    """Lowercase hex SHA-256 of the canonical encoding, volatile fields excluded."""
    return hashlib.sha256(canonical_encode(strip_volatile(v))).hexdigest()


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


# ---------------------------------------------------------------------------
# JSON form
# ---------------------------------------------------------------------------

def to_json_value(v: ProvValue):
    """Provenance value -> plain JSON-compatible Python structure."""
    if isinstance(v, PStr):
        return {"type": "str", "value": v.value}
    if isinstance(v, PInt):
        return {"type": "int", "value": v.value}
    if isinstance(v, PFlt):
        return {"type": "flt", "value": v.value}
    if isinstance(v, PBool):
        return {"type": "bool", "value": v.value}
    if isinstance(v, PTimestamp):
        return {"type": "timestamp", "value": {"seconds": v.seconds, "nanos": v.nanos}}
    if isinstance(v, PHash):
        return {"type": "hash", "value": {"algorithm": v.algorithm, "digest": v.digest}}
    if isinstance(v, PList):
        return {"type": "list", "value": [to_json_value(item) for item in v.items]}
    if isinstance(v, PMap):
        return {"type": "map", "value": {k: to_json_value(val) for k, val in v.entries}}
    if isinstance(v, PObj):
        return {
            "type": "obj",
            "value": {"class": v.class_name, "fields": {k: to_json_value(val) for k, val in v.fields.entries}},
        }
    raise TypeError(f"not a provenance value: {type(v).__name__}")


_KNOWN_TAGS = frozenset({"str", "int", "flt", "bool", "timestamp", "hash", "list", "map", "obj"})


def from_json_value(node) -> ProvValue:
    """Inverse of :func:`to_json_value`; raises on malformed structures."""
    if not isinstance(node, dict) or "type" not in node:
        raise ParseError("expected an object with a 'type' field")
    tag = node["type"]
    if tag not in _KNOWN_TAGS:
        raise UnknownTag(f"unrecognized type tag {tag!r}")
    if "value" not in node:
        raise ParseError(f"tag {tag!r} has no 'value'")
    value = node["value"]
    try:
        if tag == "str":
            return PStr(value)
        if tag == "int":
            return PInt(value)
        if tag == "flt":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ParseError(f"malformed 'flt' value: {value!r}")
            return PFlt(float(value))  # integral JSON numbers accepted
        if tag == "bool":
            return PBool(value)
        if tag == "timestamp":
            return PTimestamp(value["seconds"], value["nanos"])
        if tag == "hash":
            return PHash(value["algorithm"], value["digest"])
        if tag == "list":
            return PList(tuple(from_json_value(item) for item in value))
        if tag == "map":
            if not isinstance(value, dict):
                raise ParseError("map value must be an object")
            return PMap({k: from_json_value(val) for k, val in value.items()})
        return PObj(value["class"], PMap({k: from_json_value(val) for k, val in value["fields"].items()}))
    except (TypeError, ValueError, KeyError) as exc:
        raise ParseError(f"malformed {tag!r} value: {exc}") from exc


def serialize_provenance(v: ProvValue) -> str:
    """JSON text with sorted map keys; floats round-trip bit-exactly."""
    return json.dumps(to_json_value(v), sort_keys=True, indent=2)


def parse_provenance(text: str) -> ProvValue:
    try:
        node = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno, column=exc.colno) from exc
    return from_json_value(node)


# ---------------------------------------------------------------------------
# Configuration extraction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConfigRef:
    """Reference from one configuration record to another, by record name."""

    name: str


@dataclass(frozen=True)
class ConfigRecord:
    """The configuration-only view of one object provenance node.

    ``properties`` maps field names to provenance values in which any nested
    object has been replaced by a :class:`ConfigRef` to its own record.
    """

    name: str
    class_name: str
    properties: dict

    def require(self, key: str) -> ProvValue:
        from .errors import MissingProperty

        if key not in self.properties:
            raise MissingProperty(key)
        return self.properties[key]


def extract_configuration(root: PObj) -> list[ConfigRecord]:
    """Collect the configuration of every object node under ``root``.

    The walk is depth-first in field order; each object yields one record
    named ``<class>-<visit index>`` holding only its configuration fields.
    Instance fields never appear in any record, but the walk still descends
    through them so that objects stored there (for example a data source
    inside dataset provenance) are extracted too.
    """
    records: list[ConfigRecord] = []
    counter = [0]

    def visit(obj: PObj) -> str:
        name = f"{obj.class_name}-{counter[0]}"
        counter[0] += 1
        slot = len(records)
        records.append(None)  # reserve position: parents precede children
        if is_object_provenance(obj):
            config = config_section(obj)
            instance = instance_section(obj)
        else:
            config, instance = obj.fields, PMap()
        properties = {k: substitute(v) for k, v in config.entries}
        records[slot] = ConfigRecord(name, obj.class_name, properties)
        for _, v in instance.entries:
            scan(v)
        return name

    def substitute(v: ProvValue):
        if isinstance(v, PObj):
            return ConfigRef(visit(v))
        if isinstance(v, PList):
            return PList(tuple(substitute(item) for item in v.items))
        if isinstance(v, PMap):
            return PMap([(k, substitute(val)) for k, val in v.entries])
        return v

    def scan(v: ProvValue) -> None:
        if isinstance(v, PObj):
            visit(v)
        elif isinstance(v, PList):
            for item in v.items:
                scan(item)
        elif isinstance(v, PMap):
            for _, val in v.entries:
                scan(val)

    visit(root)
    return records


def _property_to_json(v):
    if isinstance(v, ConfigRef):
        return {"type": "ref", "value": v.name}
    if isinstance(v, PList):
        return {"type": "list", "value": [_property_to_json(item) for item in v.items]}
    if isinstance(v, PMap):
        return {"type": "map", "value": {k: _property_to_json(val) for k, val in v.entries}}
    return to_json_value(v)


def _property_from_json(node):
    if isinstance(node, dict) and node.get("type") == "ref":
        return ConfigRef(node["value"])
    if isinstance(node, dict) and node.get("type") == "list":
        return PList(tuple(_property_from_json(item) for item in node["value"]))
    if isinstance(node, dict) and node.get("type") == "map":
        return PMap({k: _property_from_json(val) for k, val in node["value"].items()})
    return from_json_value(node)


def config_to_json(records: list[ConfigRecord]) -> str:
    """Records -> the on-disk configuration document {"config": [...]}."""
    doc = {
        "config": [
            {
                "name": r.name,
                "class": r.class_name,
                "properties": {k: _property_to_json(v) for k, v in r.properties.items()},
            }
            for r in records
        ]
    }
    return json.dumps(doc, sort_keys=True, indent=2)


def config_from_json(text: str) -> list[ConfigRecord]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno, column=exc.colno) from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("config"), list):
        raise ParseError("configuration document must be {\"config\": [...]}")
    records = []
    for entry in doc["config"]:
        try:
            records.append(
                ConfigRecord(
                    entry["name"],
                    entry["class"],
                    {k: _property_from_json(v) for k, v in entry["properties"].items()},
                )
            )
        except (KeyError, TypeError) as exc:
            raise ParseError(f"malformed configuration record: {exc}") from exc
    return records


# ---------------------------------------------------------------------------
# Redaction
# ---------------------------------------------------------------------------

def redact(model_prov: PObj) -> tuple[str, PObj]:
    """Blank out confidential content, keeping a linkable digest.

    Returns ``(digest, redacted)`` where ``digest`` is the provenance hash
    of the original.  Data provenance values and trainer configuration
    values are replaced by ``<REDACTED>``; class-name skeletons survive so
    the shape of the pipeline stays visible, and the digest is stored at
    the root so the redacted tree can be linked back to the full record
    kept elsewhere.
    """
    digest = provenance_hash(model_prov)

    def redact_values(v: ProvValue) -> ProvValue:
        if isinstance(v, PObj):
            return PObj(v.class_name, redact_values(v.fields))
        if isinstance(v, PMap):
            return PMap([(k, redact_values(val)) for k, val in v.entries])
        if isinstance(v, PList):
            return PList(tuple(redact_values(item) for item in v.items))
        return PStr(REDACTED)

    def redact_model(mp: PObj) -> PObj:
        config = config_section(mp)
        instance = instance_section(mp)
        new_config = []
        for key, val in config.entries:
            if key == "trainer" and isinstance(val, PObj):
                new_config.append((key, _redact_trainer(val)))
            else:
                new_config.append((key, val))
        new_instance = []
        for key, val in instance.entries:
            if key == "data":
                new_instance.append((key, redact_values(val)))
            elif key == "members" and isinstance(val, PList):
                new_instance.append((key, PList(tuple(redact_model(m) for m in val.items))))
            else:
                new_instance.append((key, val))
        return PObj(mp.class_name, PMap({CONFIG_SECTION: PMap(new_config), INSTANCE_SECTION: PMap(new_instance)}))

    def _redact_trainer(tp: PObj) -> PObj:
        # configuration values are blanked; the instance side (invocation
        # count) is not considered confidential
        cfg = PMap([(k, redact_values(v)) for k, v in config_section(tp).entries])
        return PObj(tp.class_name, PMap({CONFIG_SECTION: cfg, INSTANCE_SECTION: instance_section(tp)}))

    redacted = redact_model(model_prov)
    redacted = with_instance_entry(redacted, "provenance-hash", PHash("SHA-256", digest))
    return digest, redacted
