"""Registry and persistence for sources, services, tables, types, and links.

The catalog is the single system of record: everything else (graph
construction, query evaluation, sessions) reads from a catalog snapshot.
Persistence is one UTF-8 JSON document with an integer schema_version.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .typist import TypeModel

SCHEMA_VERSION = 1


class CatalogError(ValueError):
    pass


@dataclass(frozen=True)
class AttributeSpec:
    name: str
    position: int
    semantic_type: str | None = None


@dataclass(frozen=True)
class SourceDescriptor:
    id: str
    kind: str  # document | table | service
    schema: tuple[AttributeSpec, ...]
    extractor_id: str | None = None
    origin: str = "declared"

    def __post_init__(self):
        if self.kind not in ("document", "table", "service"):
            raise CatalogError(f"unknown source kind {self.kind!r}")
        if not self.schema:
            raise CatalogError(f"source {self.id!r} has an empty schema")
        names = [a.name for a in self.schema]
        if len(set(names)) != len(names):
            raise CatalogError(f"duplicate attribute names in {self.id!r}")
        positions = [a.position for a in self.schema]
        if sorted(positions) != list(range(len(positions))):
            raise CatalogError(f"attribute positions in {self.id!r} are not a 0-based run")

    def attribute(self, name: str) -> AttributeSpec:
        for attr in self.schema:
            if attr.name == name:
                return attr
        raise CatalogError(f"source {self.id!r} has no attribute {name!r}")


@dataclass(frozen=True)
class ServiceSignature:
    inputs: tuple[AttributeSpec, ...]
    outputs: tuple[AttributeSpec, ...]
    fan_out: str = "many"  # at-most-one | many

    def __post_init__(self):
        if not self.inputs:
            raise CatalogError("service signature needs at least one input")
        if not self.outputs:
            raise CatalogError("service signature needs at least one output")
        if {a.name for a in self.inputs} & {a.name for a in self.outputs}:
            raise CatalogError("service inputs and outputs must be disjoint by name")
        if self.fan_out not in ("at-most-one", "many"):
            raise CatalogError(f"unknown fan_out {self.fan_out!r}")


@dataclass
class MaterializedTable:
    source_id: str
    rows: list[tuple]
    row_ids: list[str]

    def __post_init__(self):
        if len(self.rows) != len(self.row_ids):
            raise CatalogError("row/row_id length mismatch")
        if len(set(self.row_ids)) != len(self.row_ids):
            raise CatalogError("row_ids must be unique")

    def row_by_id(self, row_id: str) -> tuple:
        try:
            return self.rows[self.row_ids.index(row_id)]
        except ValueError:
            raise CatalogError(f"no row {row_id!r} in {self.source_id!r}") from None


def assign_row_ids(source_id: str, rows: list[tuple]) -> MaterializedTable:
    """Sequence-numbered row identity: stable under later value edits."""
    return MaterializedTable(
        source_id=source_id,
        rows=[tuple(r) for r in rows],
        row_ids=[f"{source_id}:r{i}" for i in range(len(rows))],
    )


@dataclass
class Catalog:
    sources: dict[str, SourceDescriptor] = field(default_factory=dict)
    services: dict[str, ServiceSignature] = field(default_factory=dict)
    tables: dict[str, MaterializedTable] = field(default_factory=dict)
    types: dict[str, TypeModel] = field(default_factory=dict)
    declared_links: list[tuple[tuple[str, str], tuple[str, str]]] = field(default_factory=list)
    graph_payload: dict | None = None

    # -- registration ------------------------------------------------------

    def register_source(self, descriptor: SourceDescriptor, data: MaterializedTable) -> str:
        if descriptor.id in self.sources:
            raise CatalogError(f"source id {descriptor.id!r} already registered")
        arity = len(descriptor.schema)
        for row in data.rows:
            if len(row) != arity:
                raise CatalogError(
                    f"row arity {len(row)} does not match schema arity {arity} for {descriptor.id!r}"
                )
        self.sources[descriptor.id] = descriptor
        self.tables[descriptor.id] = data
        return descriptor.id

    def register_service(self, sig: ServiceSignature, descriptor: SourceDescriptor) -> str:
        if descriptor.kind != "service":
            raise CatalogError("service descriptor must have kind 'service'")
        if descriptor.id in self.sources:
            raise CatalogError(f"source id {descriptor.id!r} already registered")
        self.sources[descriptor.id] = descriptor
        self.services[descriptor.id] = sig
        return descriptor.id

    def register_type(self, model: TypeModel) -> None:
        self.types[model.type_id] = model

    def declare_link(self, left: tuple[str, str], right: tuple[str, str]) -> None:
        for sid, attr in (left, right):
            if sid not in self.sources:
                self._missing(sid)
            self.sources[sid].attribute(attr)
        self.declared_links.append((tuple(left), tuple(right)))

    def _missing(self, sid: str):
        raise CatalogError(f"unknown source {sid!r}")

    def replace_descriptor(self, descriptor: SourceDescriptor) -> None:
        """Versioned refinement: descriptor may change after registration."""
        if descriptor.id not in self.sources:
            self._missing(descriptor.id)
        self.sources[descriptor.id] = descriptor

    # -- lookup ------------------------------------------------------------

    def find_attributes_by_type(self, type_id: str) -> list[tuple[str, AttributeSpec]]:
        if type_id not in self.types:
            raise CatalogError(f"unknown type {type_id!r}")
        hits = []
        for sid in sorted(self.sources):
            for attr in sorted(self.sources[sid].schema, key=lambda a: a.position):
                if attr.semantic_type == type_id:
                    hits.append((sid, attr))
        return hits

    def check_integrity(self) -> None:
        for sid, desc in self.sources.items():
            for attr in desc.schema:
                if attr.semantic_type is not None and attr.semantic_type not in self.types:
                    raise CatalogError(f"{sid}.{attr.name} references unknown type {attr.semantic_type!r}")
        for sid in self.services:
            if sid not in self.sources:
                raise CatalogError(f"service {sid!r} has no descriptor")
        for sid in self.tables:
            if sid not in self.sources:
                raise CatalogError(f"table {sid!r} has no descriptor")
        for (ls, la), (rs, ra) in self.declared_links:
            for sid, attr in ((ls, la), (rs, ra)):
                if sid not in self.sources:
                    self._missing(sid)
                self.sources[sid].attribute(attr)


# -- persistence -----------------------------------------------------------


def _attr_payload(attr: AttributeSpec) -> dict:
    return {"name": attr.name, "position": attr.position, "semantic_type": attr.semantic_type}


def _attr_from(payload: dict) -> AttributeSpec:
    return AttributeSpec(payload["name"], payload["position"], payload["semantic_type"])


def catalog_payload(cat: Catalog) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "sources": {
            sid: {
                "id": d.id,
                "kind": d.kind,
                "schema": [_attr_payload(a) for a in d.schema],
                "extractor_id": d.extractor_id,
                "origin": d.origin,
            }
            for sid, d in sorted(cat.sources.items())
        },
        "services": {
            sid: {
                "inputs": [_attr_payload(a) for a in s.inputs],
                "outputs": [_attr_payload(a) for a in s.outputs],
                "fan_out": s.fan_out,
            }
            for sid, s in sorted(cat.services.items())
        },
        "tables": {
            sid: {
                "rows": [list(r) for r in t.rows],
                "row_ids": list(t.row_ids),
            }
            for sid, t in sorted(cat.tables.items())
        },
        "types": {tid: m.to_payload() for tid, m in sorted(cat.types.items())},
        "declared_links": [[list(l), list(r)] for l, r in cat.declared_links],
        "graph": cat.graph_payload,
    }


def catalog_from_payload(payload: dict) -> Catalog:
    version = payload.get("schema_version")
    if version != SCHEMA_VERSION:
        raise CatalogError(f"unsupported catalog schema_version {version!r}")
    cat = Catalog()
    for sid, d in payload["sources"].items():
        cat.sources[sid] = SourceDescriptor(
            id=d["id"],
            kind=d["kind"],
            schema=tuple(_attr_from(a) for a in d["schema"]),
            extractor_id=d["extractor_id"],
            origin=d["origin"],
        )
    for sid, s in payload["services"].items():
        cat.services[sid] = ServiceSignature(
            inputs=tuple(_attr_from(a) for a in s["inputs"]),
            outputs=tuple(_attr_from(a) for a in s["outputs"]),
            fan_out=s["fan_out"],
        )
    for sid, t in payload["tables"].items():
        cat.tables[sid] = MaterializedTable(
            source_id=sid,
            rows=[tuple(r) for r in t["rows"]],
            row_ids=list(t["row_ids"]),
        )
    for tid, m in payload["types"].items():
        cat.types[tid] = TypeModel.from_payload(m)
    cat.declared_links = [(tuple(l), tuple(r)) for l, r in payload["declared_links"]]
    cat.graph_payload = payload.get("graph")
    return cat


def save_catalog(cat: Catalog, path: str | Path) -> None:
    Path(path).write_text(json.dumps(catalog_payload(cat), ensure_ascii=False, indent=1), encoding="utf-8")


def load_catalog(path: str | Path) -> Catalog:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CatalogError(f"unreadable catalog file: {exc}") from exc
    if not isinstance(payload, dict):
        raise CatalogError("malformed catalog file")
    return catalog_from_payload(payload)
