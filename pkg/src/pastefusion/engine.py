"""Provenance-annotated query evaluation over materialized tables and
services.

Every result row carries a derivation expression: source rows, the edges
that combined them, and fingerprinted service calls. Derivations support
exact replay (for explanation) and routing of feedback back to queries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .catalog import AttributeSpec, Catalog
from .sourcegraph import AssociationEdge, QueryTree, SourceGraph
from .text import LINK_SIMILARITY_THRESHOLD, mean_similarity


class EngineError(ValueError):
    pass


# -- provenance expressions ------------------------------------------------


@dataclass(frozen=True)
class Leaf:
    source_id: str
    row_id: str


@dataclass(frozen=True)
class Join:
    edge_id: str
    left: "Prov"
    right: "Prov"


@dataclass(frozen=True)
class ServiceCall:
    edge_id: str
    input: "Prov"
    service_id: str
    inputs: tuple
    candidate: int  # index into the call's result list; -1 marks a miss


@dataclass(frozen=True)
class UnionBranch:
    query_id: str
    child: "Prov"
    pad_map: tuple  # per output column: child cell index or None


@dataclass(frozen=True)
class Alt:
    alternatives: tuple

    def __post_init__(self):
        if not self.alternatives:
            raise EngineError("Alt provenance must be non-empty")


Prov = Leaf | Join | ServiceCall | UnionBranch | Alt


def merge_alternatives(a: Prov, b: Prov) -> Prov:
    alts = []
    for p in (a, b):
        alts.extend(p.alternatives if isinstance(p, Alt) else (p,))
    unique = sorted(set(alts), key=repr)
    return unique[0] if len(unique) == 1 else Alt(alternatives=tuple(unique))


# -- result tables ---------------------------------------------------------


@dataclass(frozen=True)
class Column:
    source: str  # source or service id the column originates from
    name: str
    semantic_type: str | None = None


@dataclass(frozen=True)
class Row:
    cells: tuple
    prov: Prov
    score: float = 0.0


@dataclass
class ResultTable:
    columns: list[Column]
    rows: list[Row]
    query_id: str | None = None

    def column_index(self, source: str, name: str) -> int:
        for i, col in enumerate(self.columns):
            if col.source == source and col.name == name:
                return i
        raise EngineError(f"no column {source}.{name} in result")


def _base_table(source_id: str, catalog: Catalog, score: float) -> ResultTable:
    desc = catalog.sources[source_id]
    table = catalog.tables.get(source_id)
    if table is None:
        raise EngineError(f"source {source_id!r} has no materialized table")
    columns = [
        Column(source_id, a.name, a.semantic_type)
        for a in sorted(desc.schema, key=lambda a: a.position)
    ]
    rows = [
        Row(cells=tuple(r), prov=Leaf(source_id, rid), score=score)
        for r, rid in zip(table.rows, table.row_ids)
    ]
    return ResultTable(columns=columns, rows=rows)


# -- operators -------------------------------------------------------------


def equijoin(left: ResultTable, right: ResultTable, pairs, edge_id: str) -> ResultTable:
    """Inner equality join on a predicate conjunction; null matches nothing."""
    idx_pairs = [
        (left.column_index(ls, la), right.column_index(rs, ra))
        for (ls, la), (rs, ra) in pairs
    ]
    rows = []
    for lrow in left.rows:
        for rrow in right.rows:
            if all(
                lrow.cells[li] is not None and lrow.cells[li] == rrow.cells[ri]
                for li, ri in idx_pairs
            ):
                rows.append(
                    Row(
                        cells=lrow.cells + rrow.cells,
                        prov=Join(edge_id, lrow.prov, rrow.prov),
                        score=lrow.score,
                    )
                )
    return ResultTable(columns=left.columns + right.columns, rows=rows)


def record_link_join(
    left: ResultTable,
    right: ResultTable,
    pairs,
    edge_id: str,
    threshold: float = LINK_SIMILARITY_THRESHOLD,
) -> ResultTable:
    """Join each left row to its single best right row by mean field
    similarity; ties pick the earliest right row; unmatched rows drop."""
    idx_pairs = [
        (left.column_index(ls, la), right.column_index(rs, ra))
        for (ls, la), (rs, ra) in pairs
    ]
    rows = []
    for lrow in left.rows:
        best = None
        for pos, rrow in enumerate(right.rows):
            lvals = tuple(lrow.cells[li] for li, _ in idx_pairs)
            rvals = tuple(rrow.cells[ri] for _, ri in idx_pairs)
            sim = mean_similarity(lvals, rvals)
            if sim >= threshold and (best is None or sim > best[0]):
                best = (sim, pos, rrow)
        if best is not None:
            _, _, rrow = best
            rows.append(
                Row(
                    cells=lrow.cells + rrow.cells,
                    prov=Join(edge_id, lrow.prov, rrow.prov),
                    score=lrow.score,
                )
            )
    return ResultTable(columns=left.columns + right.columns, rows=rows)


def dependent_join(
    input_table: ResultTable,
    service_id: str,
    catalog: Catalog,
    binding,
    edge_id: str,
    runner,
) -> ResultTable:
    """Call the service once per input row; ambiguous results fan out, and
    misses keep the row with null outputs."""
    sig = catalog.services[service_id]
    idx = []
    for src_attr, _ in binding:
        hit = None
        for i, col in enumerate(input_table.columns):
            if col.name == src_attr:
                hit = i
                break
        if hit is None:
            raise EngineError(f"unbound service input attribute {src_attr!r}")
        idx.append(hit)
    out_columns = input_table.columns + [
        Column(service_id, a.name, a.semantic_type)
        for a in sorted(sig.outputs, key=lambda a: a.position)
    ]
    rows = []
    for row in input_table.rows:
        inputs = tuple(row.cells[i] for i in idx)
        results = runner.call(service_id, inputs)
        if not results:
            rows.append(
                Row(
                    cells=row.cells + (None,) * len(sig.outputs),
                    prov=ServiceCall(edge_id, row.prov, service_id, inputs, candidate=-1),
                    score=row.score,
                )
            )
            continue
        for cand, out in enumerate(results):
            rows.append(
                Row(
                    cells=row.cells + tuple(out),
                    prov=ServiceCall(edge_id, row.prov, service_id, inputs, candidate=cand),
                    score=row.score,
                )
            )
    return ResultTable(columns=out_columns, rows=rows)


def union_pad(tables: list[ResultTable]) -> ResultTable:
    """Union result tables onto the ordered union of their schemas, padding
    missing attributes with nulls."""
    if not tables:
        raise EngineError("union of zero tables")
    out_columns: list[Column] = []
    by_name: dict[str, Column] = {}
    for table in tables:
        for col in table.columns:
            known = by_name.get(col.name)
            if known is None:
                by_name[col.name] = col
                out_columns.append(col)
            elif (
                known.semantic_type is not None
                and col.semantic_type is not None
                and known.semantic_type != col.semantic_type
            ):
                raise EngineError(
                    f"attribute {col.name!r} has conflicting semantic types in union"
                )
    rows = []
    for table in tables:
        name_to_idx = {c.name: i for i, c in enumerate(table.columns)}
        pad_map = tuple(name_to_idx.get(c.name) for c in out_columns)
        for row in table.rows:
            cells = tuple(row.cells[i] if i is not None else None for i in pad_map)
            rows.append(
                Row(
                    cells=cells,
                    prov=UnionBranch(table.query_id or "", row.prov, pad_map),
                    score=row.score,
                )
            )
    return ResultTable(columns=out_columns, rows=rows)


# -- whole-tree evaluation -------------------------------------------------


def _merge_duplicates(table: ResultTable) -> ResultTable:
    order: list[tuple] = []
    merged: dict[tuple, Row] = {}
    for row in table.rows:
        if row.cells in merged:
            prior = merged[row.cells]
            merged[row.cells] = Row(
                cells=row.cells,
                prov=merge_alternatives(prior.prov, row.prov),
                score=prior.score,
            )
        else:
            merged[row.cells] = row
            order.append(row.cells)
    return ResultTable(
        columns=table.columns,
        rows=[merged[c] for c in order],
        query_id=table.query_id,
    )


def evaluate(
    query: QueryTree,
    catalog: Catalog,
    runner,
    graph: SourceGraph,
    link_threshold: float = LINK_SIMILARITY_THRESHOLD,
) -> ResultTable:
    """Evaluate a query tree depth-first from its lowest data node id
    (service nodes cannot anchor evaluation); rows carry the query's cost
    as their score."""
    score = query.cost(graph)
    data_nodes = sorted(n for n in query.nodes if n not in catalog.services)
    if not data_nodes:
        raise EngineError("cannot root evaluation at a service: inputs unbound")
    root = data_nodes[0]
    table = _base_table(root, catalog, score)

    adjacency: dict[str, list[AssociationEdge]] = {n: [] for n in query.nodes}
    for eid in query.edge_ids:
        edge = graph.edges[eid]
        adjacency[edge.left].append(edge)
        adjacency[edge.right].append(edge)

    visited = {root}

    def descend(node: str, table: ResultTable) -> ResultTable:
        for edge in sorted(adjacency[node], key=lambda e: e.id):
            child = edge.other(node)
            if child in visited:
                continue
            visited.add(child)
            if edge.kind == "service_call":
                if edge.right != child:
                    raise EngineError(f"service input for edge {edge.id!r} is unbound")
                table = dependent_join(table, child, catalog, edge.attr_pairs, edge.id, runner)
            else:
                right = _base_table(child, catalog, score)
                oriented = [
                    ((edge.left, la), (edge.right, ra)) for la, ra in edge.attr_pairs
                ]
                if edge.left != node:
                    oriented = [
                        ((edge.right, ra), (edge.left, la)) for la, ra in edge.attr_pairs
                    ]
                if edge.kind == "record_link":
                    table = record_link_join(table, right, oriented, edge.id, link_threshold)
                else:
                    table = equijoin(table, right, oriented, edge.id)
            table = descend(child, table)
        return table

    table = descend(root, table)
    table.rows = [Row(r.cells, r.prov, score) for r in table.rows]
    table.query_id = query.id
    return _merge_duplicates(table)


# -- replay and feedback routing ------------------------------------------


def replay(prov: Prov, catalog: Catalog, runner) -> tuple:
    """Recompute exactly the tuple that carried this provenance."""
    if isinstance(prov, Leaf):
        table = catalog.tables.get(prov.source_id)
        if table is None:
            raise EngineError(f"dangling leaf: source {prov.source_id!r} missing")
        return table.row_by_id(prov.row_id)
    if isinstance(prov, Join):
        return replay(prov.left, catalog, runner) + replay(prov.right, catalog, runner)
    if isinstance(prov, ServiceCall):
        inputs = replay(prov.input, catalog, runner)
        sig = catalog.services[prov.service_id]
        if prov.candidate < 0:
            return inputs + (None,) * len(sig.outputs)
        results = runner.cached(prov.service_id, prov.inputs)
        if results is None:
            raise EngineError(f"service cache entry for {prov.service_id!r}{prov.inputs!r} was evicted")
        return inputs + tuple(results[prov.candidate])
    if isinstance(prov, UnionBranch):
        child = replay(prov.child, catalog, runner)
        return tuple(child[i] if i is not None else None for i in prov.pad_map)
    if isinstance(prov, Alt):
        values = {replay(alt, catalog, runner) for alt in prov.alternatives}
        if len(values) != 1:
            raise EngineError("alternative derivations replay to different tuples")
        return next(iter(values))
    raise EngineError(f"unknown provenance node {prov!r}")


def _query_ids(prov: Prov) -> set[str]:
    if isinstance(prov, Leaf):
        return set()
    if isinstance(prov, Join):
        return _query_ids(prov.left) | _query_ids(prov.right)
    if isinstance(prov, ServiceCall):
        return _query_ids(prov.input)
    if isinstance(prov, UnionBranch):
        return {prov.query_id} | _query_ids(prov.child)
    if isinstance(prov, Alt):
        out: set[str] = set()
        for alt in prov.alternatives:
            out |= _query_ids(alt)
        return out
    return set()


def responsible_queries(rows: list[Row], default_query_id: str | None = None) -> dict[str, list[int]]:
    """Map query ids to the row indices they are responsible for."""
    partitions: dict[str, list[int]] = {}
    for i, row in enumerate(rows):
        if row.prov is None:
            raise EngineError("row is missing provenance")
        ids = _query_ids(row.prov)
        if not ids and default_query_id is not None:
            ids = {default_query_id}
        if not ids:
            raise EngineError("row provenance names no query")
        for qid in sorted(ids):
            partitions.setdefault(qid, []).append(i)
    return dict(sorted(partitions.items()))
