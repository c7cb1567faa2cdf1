"""HTTP gateway: sessions, ingestion, suggestions, feedback, explanation,
and export over the workspace engine."""

from __future__ import annotations

import base64
import threading
import uuid
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response

from .. import engine, extractor, typist
from ..catalog import AttributeSpec, Catalog, CatalogError, SourceDescriptor, assign_row_ids
from ..extractor import ExtractionError
from ..session import EVENT_SCHEMA_VERSION, Session, SessionError
from ..sourcegraph import GraphConfig, GraphError
from .config import AppConfig
from .services import ServiceFailure, ServiceRegistry, load_fixture_services

SCHEMA_VERSION = 1

_STATUS = {
    "bad_request": 400,
    "not_found": 404,
    "conflict": 409,
    "unprocessable": 422,
    "upstream_failure": 502,
}


class ApiError(Exception):
    def __init__(self, code: str, message: str, detail: str = ""):
        super().__init__(message)
        self.code = code
        self.message = message
        self.detail = detail


class AppState:
    def __init__(self, config: AppConfig):
        self.config = config
        self.catalog = Catalog()
        self.registry = ServiceRegistry()
        self.documents: dict[str, tuple[bytes, str]] = {}
        self.sessions: dict[str, Session] = {}
        self.locks: dict[str, threading.Lock] = {}
        self.idempotency: dict[tuple[str, str], dict] = {}
        if config.fixtures_dir:
            self._load_fixtures(Path(config.fixtures_dir))

    def _load_fixtures(self, fixtures_dir: Path) -> None:
        types_path = fixtures_dir / "types.json"
        if types_path.exists():
            import json

            for type_id, values in json.loads(types_path.read_text(encoding="utf-8")).items():
                self.catalog.register_type(typist.learn_type(type_id, values))
        load_fixture_services(fixtures_dir, self.catalog, self.registry)

    def graph_config(self) -> GraphConfig:
        return GraphConfig(
            edge_ceiling=self.config.edge_ceiling,
            query_ceiling=self.config.query_ceiling,
            margin=self.config.margin,
            k=self.config.k,
        )

    def session(self, session_id: str) -> Session:
        if session_id not in self.sessions:
            raise ApiError("not_found", f"unknown session {session_id!r}")
        return self.sessions[session_id]

    def lock(self, session_id: str) -> threading.Lock:
        return self.locks.setdefault(session_id, threading.Lock())

    def ingest(self, source_id: str, raw: bytes, fmt: str, attribute_names=None, origin="upload") -> str:
        if source_id in self.catalog.sources:
            raise ApiError("conflict", f"source {source_id!r} already exists")
        try:
            model = extractor.infer_document_model(raw, fmt)
        except ExtractionError as exc:
            raise ApiError("unprocessable", str(exc))
        rows = list(model.records)
        arity = model.arity
        names = list(attribute_names or [])
        if len(names) < arity:
            names += [f"col{i}" for i in range(len(names), arity)]
        schema = []
        for i in range(arity):
            semantic = None
            values = [r[i] for r in rows if r[i]]
            if values and self.catalog.types:
                top = typist.recognize_column(values, self.catalog.types).top
                if top is not None and top.confident:
                    semantic = top.type_id
            schema.append(AttributeSpec(names[i], i, semantic))
        descriptor = SourceDescriptor(
            id=source_id,
            kind="document",
            schema=tuple(schema),
            extractor_id=f"rule:{source_id}:0",
            origin=origin,
        )
        self.catalog.register_source(descriptor, assign_row_ids(source_id, rows))
        self.documents[source_id] = (raw, fmt)
        for session in self.sessions.values():
            session.refresh_graph()
        return source_id


def _prov_graph(prov) -> dict:
    nodes: list[dict] = []
    edges: list[dict] = []
    counter = [0]

    def add_node(kind: str, label: str, extra: dict | None = None) -> str:
        nid = f"n{counter[0]}"
        counter[0] += 1
        nodes.append({"id": nid, "kind": kind, "label": label, **(extra or {})})
        return nid

    def walk(p) -> str:
        if isinstance(p, engine.Leaf):
            return add_node("leaf", p.source_id, {"source_id": p.source_id, "row_id": p.row_id})
        if isinstance(p, engine.Join):
            nid = add_node("join", p.edge_id, {"edge_id": p.edge_id})
            edges.append({"source": walk(p.left), "target": nid, "kind": "join", "arrow": False})
            edges.append({"source": walk(p.right), "target": nid, "kind": "join", "arrow": False})
            return nid
        if isinstance(p, engine.ServiceCall):
            nid = add_node(
                "service_call",
                p.service_id,
                {"edge_id": p.edge_id, "service_id": p.service_id, "inputs": list(p.inputs), "miss": p.candidate < 0},
            )
            edges.append({"source": walk(p.input), "target": nid, "kind": "service_call", "arrow": True})
            return nid
        if isinstance(p, engine.UnionBranch):
            nid = add_node("union_branch", p.query_id, {"query_id": p.query_id})
            edges.append({"source": walk(p.child), "target": nid, "kind": "union", "arrow": False})
            return nid
        if isinstance(p, engine.Alt):
            nid = add_node("alt", "alternatives")
            for alt in p.alternatives:
                edges.append({"source": walk(alt), "target": nid, "kind": "alt", "arrow": False})
            return nid
        raise ApiError("unprocessable", f"unknown provenance node {p!r}")

    root = walk(prov)
    return {"schema_version": SCHEMA_VERSION, "root": root, "nodes": nodes, "edges": edges}


def create_app(config: AppConfig | None = None) -> FastAPI:
    state = AppState(config or AppConfig())
    app = FastAPI(title="pastefusion gateway")
    app.state.core = state

    @app.exception_handler(ApiError)
    async def on_api_error(_req: Request, exc: ApiError):
        return JSONResponse(
            status_code=_STATUS[exc.code],
            content={
                "schema_version": SCHEMA_VERSION,
                "error": {"code": exc.code, "message": exc.message, "detail": exc.detail},
            },
        )

    def translate(exc: Exception) -> ApiError:
        if isinstance(exc, ApiError):
            return exc
        if isinstance(exc, ServiceFailure):
            return ApiError("upstream_failure", str(exc))
        if isinstance(exc, (SessionError, CatalogError, GraphError, ExtractionError)):
            message = str(exc)
            if "unknown" in message or "absent" in message:
                return ApiError("not_found", message)
            if "duplicate" in message or "already" in message:
                return ApiError("conflict", message)
            if "no consistent" in message or "no hypothesis" in message or "empty" in message:
                return ApiError("unprocessable", message)
            return ApiError("bad_request", message)
        return ApiError("bad_request", str(exc))

    def suggestions_payload(session: Session) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "suggestions": [s.payload() for s in session._ranked()],
        }

    @app.post("/sessions")
    async def create_session():
        session_id = uuid.uuid4().hex[:12]
        state.sessions[session_id] = Session(
            state.catalog,
            state.registry,
            state.documents,
            state.graph_config(),
            state.config.link_threshold,
        )
        return {"schema_version": SCHEMA_VERSION, "session_id": session_id}

    @app.get("/sessions/{session_id}")
    async def get_session(session_id: str):
        session = state.session(session_id)
        return {"schema_version": SCHEMA_VERSION, "state": session.state_payload()}

    @app.post("/sessions/{session_id}/paste")
    async def paste(session_id: str, body: dict):
        session = state.session(session_id)
        key = body.get("idempotency_key")
        if key is not None and (session_id, key) in state.idempotency:
            return state.idempotency[(session_id, key)]
        with state.lock(session_id):
            try:
                session.handle_paste(body.get("cells") or [], body.get("origin") or "")
            except Exception as exc:
                raise translate(exc)
            response = {
                "schema_version": SCHEMA_VERSION,
                "state": session.state_payload(),
                "suggestions": suggestions_payload(session)["suggestions"],
            }
        if key is not None:
            state.idempotency[(session_id, key)] = response
        return response

    @app.get("/sessions/{session_id}/suggestions")
    async def get_suggestions(session_id: str):
        session = state.session(session_id)
        with state.lock(session_id):
            try:
                session.generate_suggestions()
            except Exception as exc:
                raise translate(exc)
            return suggestions_payload(session)

    @app.post("/sessions/{session_id}/feedback")
    async def feedback(session_id: str, body: dict):
        session = state.session(session_id)
        key = body.get("idempotency_key")
        if key is not None and (session_id, key) in state.idempotency:
            return state.idempotency[(session_id, key)]
        target = body.get("target")
        if target not in session.suggestions:
            raise ApiError("not_found", f"unknown suggestion {target!r}")
        with state.lock(session_id):
            try:
                session.apply_feedback(
                    target,
                    body.get("verdict") or "",
                    kept_rows=body.get("kept_rows"),
                    removed_rows=body.get("removed_rows"),
                )
            except Exception as exc:
                raise translate(exc)
            response = {
                "schema_version": SCHEMA_VERSION,
                "state": session.state_payload(),
                "suggestions": suggestions_payload(session)["suggestions"],
            }
        if key is not None:
            state.idempotency[(session_id, key)] = response
        return response

    @app.get("/sessions/{session_id}/rows/{row}/provenance")
    async def provenance(session_id: str, row: int):
        session = state.session(session_id)
        if session.output is None or row < 0 or row >= len(session.output.rows):
            raise ApiError("not_found", f"no output row {row}")
        return _prov_graph(session.output.rows[row].prov)

    @app.post("/sessions/{session_id}/columns/{idx}/label")
    async def label(session_id: str, idx: int, body: dict):
        session = state.session(session_id)
        with state.lock(session_id):
            try:
                session.set_column_label(
                    body.get("source_id") or "", idx, body.get("name") or "", body.get("type")
                )
            except Exception as exc:
                raise translate(exc)
        return {"schema_version": SCHEMA_VERSION, "state": session.state_payload()}

    @app.post("/sessions/{session_id}/mode")
    async def set_mode(session_id: str, body: dict):
        session = state.session(session_id)
        with state.lock(session_id):
            try:
                session.set_mode(body.get("mode") or "")
            except Exception as exc:
                raise translate(exc)
        return {"schema_version": SCHEMA_VERSION, "state": session.state_payload()}

    @app.get("/sessions/{session_id}/export")
    async def export(session_id: str, format: str = "csv"):
        session = state.session(session_id)
        try:
            data = session.export(format)
        except Exception as exc:
            raise translate(exc)
        media = {
            "csv": "text/csv",
            "json": "application/json",
            "geojson": "application/geo+json",
        }.get(format, "application/octet-stream")
        return Response(content=data, media_type=media)

    @app.post("/sources")
    async def ingest(body: dict):
        source_id = body.get("id") or f"src-{uuid.uuid4().hex[:8]}"
        fmt = body.get("format") or ""
        if "content_b64" in body:
            raw = base64.b64decode(body["content_b64"])
        elif "content" in body:
            raw = str(body["content"]).encode("utf-8")
        else:
            raise ApiError("bad_request", "missing document content")
        try:
            state.ingest(source_id, raw, fmt, body.get("attribute_names"))
        except ApiError:
            raise
        except Exception as exc:
            raise translate(exc)
        desc = state.catalog.sources[source_id]
        return {
            "schema_version": SCHEMA_VERSION,
            "source_id": source_id,
            "schema": [
                {"name": a.name, "position": a.position, "semantic_type": a.semantic_type}
                for a in desc.schema
            ],
            "rows": len(state.catalog.tables[source_id].rows),
        }

    @app.get("/catalog")
    async def get_catalog():
        from ..sourcegraph import derive_edges

        graph = derive_edges(state.catalog, state.graph_config())
        return {
            "schema_version": SCHEMA_VERSION,
            "sources": [
                {
                    "id": d.id,
                    "kind": d.kind,
                    "schema": [
                        {"name": a.name, "position": a.position, "semantic_type": a.semantic_type}
                        for a in d.schema
                    ],
                }
                for _, d in sorted(state.catalog.sources.items())
            ],
            "graph": {
                "nodes": sorted(graph.nodes),
                "edges": [
                    {"id": e.id, "kind": e.kind, "left": e.left, "right": e.right, "cost": e.cost}
                    for _, e in sorted(graph.edges.items())
                ],
            },
        }

    return app
