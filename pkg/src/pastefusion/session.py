"""Workspace state machine: paste interpretation, suggestion generation,
feedback routing, and export.

A session is driven by a strictly ordered event stream (paste, feedback,
label, mode). Every event is logged, and replaying the log from the
initial catalog reproduces the session state exactly.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace

from . import engine, extractor, sourcegraph, typist
from .catalog import AttributeSpec, Catalog, SourceDescriptor, assign_row_ids
from .engine import ResultTable, Row
from .extractor import DocumentModel, ExampleSelection, ExtractionRule
from .sourcegraph import GraphConfig, QueryTree, RankingConstraint, SourceGraph
from .text import LINK_SIMILARITY_THRESHOLD

PREVIEW_ROW_CAP = 50
EVENT_SCHEMA_VERSION = 1


class SessionError(ValueError):
    pass


@dataclass(frozen=True)
class Suggestion:
    id: str
    kind: str  # row_completion | column_completion | type_label
    score: float
    preview_columns: tuple[str, ...] = ()
    preview_rows: tuple[tuple, ...] = ()
    tree: QueryTree | None = None
    rule: ExtractionRule | None = None
    source_id: str | None = None
    column: int | None = None
    type_id: str | None = None

    def payload(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "score": self.score,
            "preview_columns": list(self.preview_columns),
            "preview_rows": [list(r) for r in self.preview_rows],
            "source_id": self.source_id,
            "column": self.column,
            "type_id": self.type_id,
            "query_id": self.tree.id if self.tree else None,
        }


class Session:
    def __init__(
        self,
        catalog: Catalog,
        runner,
        documents: dict[str, tuple[bytes, str]] | None = None,
        config: GraphConfig | None = None,
        link_threshold: float = LINK_SIMILARITY_THRESHOLD,
    ):
        self.catalog = catalog
        self.runner = runner
        self.documents = documents if documents is not None else {}
        self.config = config or GraphConfig()
        self.link_threshold = link_threshold
        self.graph: SourceGraph = sourcegraph.derive_edges(catalog, self.config)
        self.mode = "import"
        self.import_origin: str | None = None
        self.tabs: dict[str, list[tuple]] = {}
        self.output: ResultTable | None = None
        self.active_query: QueryTree | None = None
        self.suggestions: dict[str, Suggestion] = {}
        self.displayed: list[str] = []
        self.pending_examples: dict[str, list[tuple]] = {}
        self.rules: dict[str, ExtractionRule] = {}
        self.models: dict[str, DocumentModel] = {}
        self.events: list[dict] = []
        self._turn_verdicts: dict[str, str] = {}

    # -- infrastructure ----------------------------------------------------

    def _log(self, kind: str, payload: dict) -> None:
        self.events.append({"schema_version": EVENT_SCHEMA_VERSION, "kind": kind, **payload})

    def refresh_graph(self) -> None:
        """Re-derive edges after catalog changes, keeping learned costs."""
        new = sourcegraph.derive_edges(self.catalog, self.config)
        for eid, edge in new.edges.items():
            old = self.graph.edges.get(eid)
            if old is not None and old.origin == "learned":
                new.edges[eid] = replace(edge, cost=old.cost, origin="learned")
        self.graph = new

    def _model_for(self, source_id: str) -> DocumentModel:
        if source_id not in self.models:
            if source_id not in self.documents:
                raise SessionError(f"origin {source_id!r} has no readable document")
            raw, fmt = self.documents[source_id]
            self.models[source_id] = extractor.infer_document_model(raw, fmt)
        return self.models[source_id]

    # -- paste handling ----------------------------------------------------

    def handle_paste(self, cells: list[list], origin: str, _log: bool = True) -> list[Suggestion]:
        rows = [tuple(c if c is None else str(c) for c in row) for row in cells]
        if not rows or not any(any(c for c in row) for row in rows):
            raise SessionError("paste event carries no cells")
        if origin not in self.catalog.sources and origin not in self.documents:
            raise SessionError(f"origin {origin!r} is not readable")
        if _log:
            self._log("paste", {"cells": [list(r) for r in rows], "origin": origin})
        self._turn_verdicts = {}

        cross = self.import_origin is not None and origin != self.import_origin
        if self.mode == "import" and not cross:
            self.import_origin = origin
            self._paste_import(rows, origin)
        else:
            if self.mode == "import":
                self.mode = "integration"
            self._paste_integration(rows, origin)
        return self.generate_suggestions()

    def _paste_import(self, rows: list[tuple], origin: str) -> None:
        tab = self.tabs.setdefault(origin, [])
        confirmed = [r for r in rows if r in tab]
        fresh = [r for r in rows if r not in tab]
        tab.extend(fresh)
        pending = self.pending_examples.setdefault(origin, [])
        pending.extend(fresh or confirmed)

        model = self._model_for(origin)
        examples = ExampleSelection(rows=tuple(pending))
        try:
            ranked = extractor.induce_rule(model, examples)
        except extractor.NoConsistentRule:
            self.suggestions = {}
            self.displayed = []
            return
        self.rules[origin] = ranked[0]
        self._refresh_import_suggestions(origin)

    def _refresh_import_suggestions(self, origin: str) -> None:
        self.suggestions = {}
        rule = self.rules.get(origin)
        tab = self.tabs.get(origin, [])
        if rule is not None:
            model = self._model_for(origin)
            table = extractor.apply_rule_to_model(rule, model, origin)
            remaining = [r for r in table.rows if r not in tab]
            if remaining:
                names = self._column_names(origin, len(table.rows[0]) if table.rows else 0)
                sug = Suggestion(
                    id=f"rows:{origin}:{rule.generality_rank}",
                    kind="row_completion",
                    score=float(rule.generality_rank),
                    preview_columns=tuple(names),
                    preview_rows=tuple(remaining[:PREVIEW_ROW_CAP]),
                    rule=rule,
                    source_id=origin,
                )
                self.suggestions[sug.id] = sug
        # Column type labels from the pasted values.
        if self.catalog.types and tab:
            arity = len(tab[0])
            for col in range(arity):
                values = [r[col] for r in tab if r[col]]
                if not values:
                    continue
                result = typist.recognize_column(values, self.catalog.types)
                top = result.top
                if top is not None and top.confident:
                    current = self._column_type(origin, col)
                    if current == top.type_id:
                        continue
                    sug = Suggestion(
                        id=f"label:{origin}:{col}:{top.type_id}",
                        kind="type_label",
                        score=1.0 - top.score,
                        source_id=origin,
                        column=col,
                        type_id=top.type_id,
                    )
                    self.suggestions[sug.id] = sug
        self.displayed = [s.id for s in self._ranked()]

    def _column_names(self, source_id: str, arity: int) -> list[str]:
        desc = self.catalog.sources.get(source_id)
        if desc is not None:
            return [a.name for a in sorted(desc.schema, key=lambda a: a.position)]
        return [f"col{i}" for i in range(arity)]

    def _column_type(self, source_id: str, col: int) -> str | None:
        desc = self.catalog.sources.get(source_id)
        if desc is None:
            return None
        for a in desc.schema:
            if a.position == col:
                return a.semantic_type
        return None

    def _paste_integration(self, rows: list[tuple], origin: str) -> None:
        attributed = [self._attribute_tuple(row, origin) for row in rows]

        def contains(tree: QueryTree, tuples) -> bool:
            try:
                table = engine.evaluate(tree, self.catalog, self.runner, self.graph, self.link_threshold)
            except engine.EngineError:
                return False
            for tup in tuples:
                hit = False
                for result_row in table.rows:
                    ok = True
                    for src, attr, value in tup:
                        try:
                            idx = table.column_index(src, attr)
                        except engine.EngineError:
                            ok = False
                            break
                        cell = result_row.cells[idx]
                        from .text import similarity

                        if cell is None or similarity(cell, value) < self.link_threshold:
                            ok = False
                            break
                    if ok:
                        hit = True
                        break
                if not hit:
                    return False
            return True

        trees = sourcegraph.explain_pasted_tuples(attributed, self.graph, self.config.k, contains)
        self.suggestions = {}
        for tree in trees:
            self.suggestions[tree.id] = self._query_suggestion(tree)
        self.displayed = [s.id for s in self._ranked()]

    def _attribute_tuple(self, row: tuple, origin: str):
        """Attribute each pasted value to a (source, attribute) it occurs in,
        preferring the paste origin and the current import origin."""
        preferred = [sid for sid in (origin, self.import_origin) if sid]
        ordered = preferred + sorted(set(self.catalog.tables) - set(preferred))
        out = []
        for value in row:
            if value is None or value == "":
                continue
            found = None
            for sid in ordered:
                table = self.catalog.tables[sid]
                desc = self.catalog.sources[sid]
                for attr in sorted(desc.schema, key=lambda a: a.position):
                    if any(r[attr.position] == value for r in table.rows):
                        found = (sid, attr.name, value)
                        break
                if found:
                    break
            if found is None:
                raise SessionError(f"pasted value {value!r} is absent from all sources")
            out.append(found)
        if not out:
            raise SessionError("no attributable values in pasted tuple")
        return out

    # -- suggestions -------------------------------------------------------

    def _query_suggestion(self, tree: QueryTree) -> Suggestion:
        table = engine.evaluate(tree, self.catalog, self.runner, self.graph, self.link_threshold)
        return Suggestion(
            id=tree.id,
            kind="column_completion",
            score=tree.cost(self.graph),
            preview_columns=tuple(c.name for c in table.columns),
            preview_rows=tuple(r.cells for r in table.rows[:PREVIEW_ROW_CAP]),
            tree=tree,
        )

    def _ranked(self) -> list[Suggestion]:
        return sorted(self.suggestions.values(), key=lambda s: (s.score, s.id))

    def generate_suggestions(self) -> list[Suggestion]:
        if self.mode == "integration" and self.active_query is not None:
            self.suggestions = {
                s.id: s for s in self.suggestions.values() if s.kind != "column_completion"
            }
            for edge, tree in sourcegraph.column_completions(self.active_query, self.graph):
                if tree.cost(self.graph) > self.config.query_ceiling:
                    continue
                sug = self._query_suggestion(tree)
                self.suggestions[sug.id] = sug
        ranked = self._ranked()
        self.displayed = [s.id for s in ranked]
        return ranked

    # -- feedback ----------------------------------------------------------

    def apply_feedback(
        self,
        target: str,
        verdict: str,
        kept_rows: list | None = None,
        removed_rows: list | None = None,
        _log: bool = True,
    ) -> list[Suggestion]:
        if verdict not in ("accept", "reject"):
            raise SessionError(f"unknown verdict {verdict!r}")
        sug = self.suggestions.get(target)
        if sug is None:
            raise SessionError(f"unknown suggestion {target!r}")
        prior = self._turn_verdicts.get(target)
        if prior is not None and prior != verdict:
            raise SessionError("contradictory feedback for the same suggestion in one turn")
        self._turn_verdicts[target] = verdict
        if _log:
            self._log(
                "feedback",
                {
                    "target": target,
                    "verdict": verdict,
                    "kept_rows": [list(r) for r in kept_rows] if kept_rows else None,
                    "removed_rows": [list(r) for r in removed_rows] if removed_rows else None,
                },
            )

        if sug.kind == "column_completion":
            self._feedback_query(sug, verdict)
        elif sug.kind == "row_completion":
            self._feedback_rows(sug, verdict, kept_rows, removed_rows)
        else:
            self._feedback_label(sug, verdict)
        return self.generate_suggestions()

    def _feedback_query(self, sug: Suggestion, verdict: str) -> None:
        tree = sug.tree
        assert tree is not None
        if verdict == "accept":
            constraints = [
                RankingConstraint("prefer", tree, self.suggestions[other].tree)
                for other in self.displayed
                if other != sug.id
                and self.suggestions.get(other) is not None
                and self.suggestions[other].kind == "column_completion"
                and set(self.suggestions[other].tree.edge_ids) != set(tree.edge_ids)
            ]
            constraints.append(RankingConstraint("promote", tree))
            self.graph = sourcegraph.mira_update(self.graph, constraints)
            self.active_query = tree
            self.output = engine.evaluate(tree, self.catalog, self.runner, self.graph, self.link_threshold)
            del self.suggestions[sug.id]
        else:
            self.graph = sourcegraph.mira_update(self.graph, [RankingConstraint("suppress", tree)])
            del self.suggestions[sug.id]

    def _feedback_rows(self, sug: Suggestion, verdict: str, kept_rows, removed_rows) -> None:
        origin = sug.source_id
        assert origin is not None
        rule = sug.rule
        assert rule is not None
        model = self._model_for(origin)
        if verdict == "accept":
            kept = [tuple(r) for r in (kept_rows if kept_rows is not None else sug.preview_rows)]
            removed = [tuple(r) for r in (removed_rows or [])]
        else:
            kept = [tuple(r) for r in (kept_rows or [])]
            removed = [tuple(r) for r in (removed_rows if removed_rows is not None else sug.preview_rows)]
        refined = extractor.refine_rule(model, rule, kept, removed)
        self.rules[origin] = refined
        table = extractor.apply_rule_to_model(refined, model, origin)
        accepted = [r for r in table.rows if r in set(self.tabs.get(origin, [])) | set(kept)]
        if verdict == "accept":
            self.tabs[origin] = list(table.rows)
        else:
            self.tabs[origin] = [r for r in self.tabs.get(origin, []) if r not in set(removed)]
        self._sync_source_table(origin, table)
        if verdict == "accept" and self.active_query is None:
            self.active_query = sourcegraph.single_node_tree(origin)
        self._refresh_import_suggestions(origin)

    def _sync_source_table(self, origin: str, table) -> None:
        """Materialize the refined rule's output as the source's table."""
        if origin in self.catalog.tables and list(self.catalog.tables[origin].rows) == list(table.rows):
            return
        self.catalog.tables[origin] = assign_row_ids(origin, list(table.rows))
        self.refresh_graph()

    def _feedback_label(self, sug: Suggestion, verdict: str) -> None:
        if verdict == "accept":
            assert sug.source_id is not None and sug.column is not None and sug.type_id is not None
            desc = self.catalog.sources[sug.source_id]
            name = next(a.name for a in desc.schema if a.position == sug.column)
            self.set_column_label(sug.source_id, sug.column, name, sug.type_id, _log=False)
        self.suggestions.pop(sug.id, None)

    # -- labels and mode ---------------------------------------------------

    def set_mode(self, mode: str, _log: bool = True) -> None:
        if mode not in ("import", "integration"):
            raise SessionError(f"unknown mode {mode!r}")
        if mode == "integration" and not self.catalog.tables:
            raise SessionError("nothing to integrate yet")
        if _log:
            self._log("mode", {"mode": mode})
        if mode == "integration" and self.active_query is None and self.import_origin:
            self.active_query = sourcegraph.single_node_tree(self.import_origin)
        self.mode = mode

    def set_column_label(
        self, source_id: str, column: int, name: str, type_id: str | None, _log: bool = True
    ) -> None:
        desc = self.catalog.sources.get(source_id)
        if desc is None:
            raise SessionError(f"unknown source {source_id!r}")
        if not any(a.position == column for a in desc.schema):
            raise SessionError(f"source {source_id!r} has no column {column}")
        if any(a.name == name and a.position != column for a in desc.schema):
            raise SessionError(f"duplicate column name {name!r}")
        if _log:
            self._log("label", {"source_id": source_id, "column": column, "name": name, "type_id": type_id})
        schema = tuple(
            replace(a, name=name if a.position == column else a.name,
                    semantic_type=type_id if a.position == column else a.semantic_type)
            for a in desc.schema
        )
        self.catalog.replace_descriptor(replace(desc, schema=schema))
        if type_id is not None:
            values = [
                r[column]
                for r in self.catalog.tables.get(source_id, assign_row_ids(source_id, [])).rows
                if r[column]
            ]
            if values:
                if type_id in self.catalog.types:
                    self.catalog.types[type_id] = typist.update_type(self.catalog.types[type_id], values)
                else:
                    self.catalog.types[type_id] = typist.learn_type(type_id, values)
        self.refresh_graph()

    # -- export ------------------------------------------------------------

    def export(self, fmt: str) -> bytes:
        if self.output is None or not self.output.rows:
            raise SessionError("output grid is empty")
        if fmt == "csv":
            buf = io.StringIO()
            writer = csv.writer(buf)
            writer.writerow([c.name for c in self.output.columns])
            for row in self.output.rows:
                writer.writerow(["" if c is None else c for c in row.cells])
            return buf.getvalue().encode("utf-8")
        if fmt == "json":
            payload = [
                {col.name: cell for col, cell in zip(self.output.columns, row.cells)}
                for row in self.output.rows
            ]
            return json.dumps(payload, ensure_ascii=False, indent=1).encode("utf-8")
        if fmt == "geojson":
            lat = lon = None
            for i, col in enumerate(self.output.columns):
                if col.semantic_type == "latitude":
                    lat = i
                elif col.semantic_type == "longitude":
                    lon = i
            if lat is None or lon is None:
                raise SessionError("geojson export needs latitude and longitude typed columns")
            features = []
            for row in self.output.rows:
                if row.cells[lat] is None or row.cells[lon] is None:
                    continue
                props = {
                    col.name: cell
                    for i, (col, cell) in enumerate(zip(self.output.columns, row.cells))
                    if i not in (lat, lon)
                }
                features.append(
                    {
                        "type": "Feature",
                        "geometry": {
                            "type": "Point",
                            "coordinates": [float(row.cells[lon]), float(row.cells[lat])],
                        },
                        "properties": props,
                    }
                )
            doc = {"type": "FeatureCollection", "features": features}
            return json.dumps(doc, ensure_ascii=False, indent=1).encode("utf-8")
        raise SessionError(f"unsupported export format {fmt!r}")

    # -- state summary and replay -----------------------------------------

    def state_payload(self) -> dict:
        return {
            "schema_version": EVENT_SCHEMA_VERSION,
            "mode": self.mode,
            "tabs": {sid: [list(r) for r in rows] for sid, rows in sorted(self.tabs.items())},
            "output": {
                "columns": [
                    {"source": c.source, "name": c.name, "semantic_type": c.semantic_type}
                    for c in self.output.columns
                ],
                "rows": [list(r.cells) for r in self.output.rows],
            }
            if self.output is not None
            else None,
            "active_query": self.active_query.id if self.active_query else None,
            "suggestions": [s.payload() for s in self._ranked()],
        }

    def dump_events(self) -> str:
        return "\n".join(json.dumps(e, ensure_ascii=False) for e in self.events)


def replay_events(
    catalog: Catalog,
    runner,
    documents: dict[str, tuple[bytes, str]],
    events: list[dict],
    config: GraphConfig | None = None,
    link_threshold: float = LINK_SIMILARITY_THRESHOLD,
) -> Session:
    """Rebuild a session by replaying its event log from an initial catalog."""
    session = Session(catalog, runner, documents, config, link_threshold)
    for event in events:
        kind = event["kind"]
        if kind == "paste":
            session.handle_paste(event["cells"], event["origin"])
        elif kind == "feedback":
            if event["target"] not in session.suggestions:
                # The live session may have regenerated suggestions between
                # logged events; suggestion generation is deterministic, so
                # doing the same here restores the displayed set.
                session.generate_suggestions()
            session.apply_feedback(
                event["target"],
                event["verdict"],
                kept_rows=event.get("kept_rows"),
                removed_rows=event.get("removed_rows"),
            )
        elif kind == "label":
            session.set_column_label(
                event["source_id"], event["column"], event["name"], event["type_id"]
            )
        elif kind == "mode":
            session.set_mode(event["mode"])
        else:
            raise SessionError(f"unknown event kind {kind!r}")
    return session
