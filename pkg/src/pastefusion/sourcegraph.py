"""Weighted association graph over sources and services, with top-k
Steiner-tree query search and margin-based cost updates from feedback.

Costs are canonical (lower = more relevant). An edge qualifies for
suggestion when its cost is at or below the edge ceiling; a whole query
qualifies when its cost is at or below the query ceiling.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field, replace

import networkx as nx

from .catalog import Catalog

EPSILON = 1e-9
SUPPRESS_STEP = 1e-6  # how far above the ceiling a suppressed query lands
EXACT_NODE_BOUND = 12
PRUNE_PATHS_PER_PAIR = 3


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class GraphConfig:
    default_cost: float = 1.0  # cost assigned to newly derived edges
    edge_ceiling: float = 5.0  # max cost for an edge to be suggested
    query_ceiling: float = 10.0  # max cost for a query to be suggested
    margin: float = 1.0  # required cost gap for preferred queries
    k: int = 3


@dataclass(frozen=True)
class AssociationEdge:
    id: str
    kind: str  # equijoin | foreign_key | service_call | record_link
    left: str
    right: str
    attr_pairs: tuple[tuple[str, str], ...]
    cost: float
    origin: str = "default"  # default | declared | learned

    def __post_init__(self):
        if self.cost < 0:
            raise GraphError(f"edge {self.id!r} has negative cost")

    def other(self, node: str) -> str:
        if node == self.left:
            return self.right
        if node == self.right:
            return self.left
        raise GraphError(f"edge {self.id!r} does not touch node {node!r}")


@dataclass
class SourceGraph:
    nodes: set[str] = field(default_factory=set)
    edges: dict[str, AssociationEdge] = field(default_factory=dict)
    config: GraphConfig = field(default_factory=GraphConfig)

    def edge_cost(self, edge_id: str) -> float:
        return self.edges[edge_id].cost

    def tree_cost(self, edge_ids: tuple[str, ...]) -> float:
        return sum(self.edges[e].cost for e in edge_ids)

    def incident(self, node: str) -> list[AssociationEdge]:
        return sorted(
            (e for e in self.edges.values() if node in (e.left, e.right)),
            key=lambda e: e.id,
        )

    def copy(self) -> "SourceGraph":
        return SourceGraph(nodes=set(self.nodes), edges=dict(self.edges), config=self.config)

    def to_payload(self) -> dict:
        return {
            "nodes": sorted(self.nodes),
            "edges": [
                {
                    "id": e.id,
                    "kind": e.kind,
                    "left": e.left,
                    "right": e.right,
                    "attr_pairs": [list(p) for p in e.attr_pairs],
                    "cost": e.cost,
                    "origin": e.origin,
                }
                for _, e in sorted(self.edges.items())
            ],
            "config": {
                "default_cost": self.config.default_cost,
                "edge_ceiling": self.config.edge_ceiling,
                "query_ceiling": self.config.query_ceiling,
                "margin": self.config.margin,
                "k": self.config.k,
            },
        }

    @staticmethod
    def from_payload(payload: dict) -> "SourceGraph":
        cfg = payload["config"]
        graph = SourceGraph(config=GraphConfig(**cfg))
        graph.nodes = set(payload["nodes"])
        for e in payload["edges"]:
            graph.edges[e["id"]] = AssociationEdge(
                id=e["id"],
                kind=e["kind"],
                left=e["left"],
                right=e["right"],
                attr_pairs=tuple(tuple(p) for p in e["attr_pairs"]),
                cost=e["cost"],
                origin=e["origin"],
            )
        return graph

    def to_dot(self) -> str:
        lines = ["graph sourcegraph {"]
        for node in sorted(self.nodes):
            lines.append(f'  "{node}";')
        for _, e in sorted(self.edges.items()):
            style = "dashed" if e.kind == "record_link" else "solid"
            lines.append(
                f'  "{e.left}" -- "{e.right}" [label="{e.id}\\n{e.cost:.3g}", style={style}];'
            )
        lines.append("}")
        return "\n".join(lines)


@dataclass(frozen=True)
class QueryTree:
    """A tree of association edges spanning its node set."""

    nodes: frozenset[str]
    edge_ids: tuple[str, ...]  # sorted

    @property
    def id(self) -> str:
        if self.edge_ids:
            return "q:" + "+".join(self.edge_ids)
        return "q:" + "+".join(sorted(self.nodes))

    def cost(self, graph: SourceGraph) -> float:
        return graph.tree_cost(self.edge_ids)


def make_tree(graph: SourceGraph, edge_ids) -> QueryTree:
    edge_ids = tuple(sorted(edge_ids))
    nodes = set()
    for eid in edge_ids:
        e = graph.edges[eid]
        nodes.update((e.left, e.right))
    tree = QueryTree(nodes=frozenset(nodes), edge_ids=edge_ids)
    validate_tree(graph, tree)
    return tree


def single_node_tree(node: str) -> QueryTree:
    return QueryTree(nodes=frozenset({node}), edge_ids=())


def validate_tree(graph: SourceGraph, tree: QueryTree) -> None:
    if not tree.nodes:
        raise GraphError("query tree has no nodes")
    if len(tree.edge_ids) != len(tree.nodes) - 1:
        raise GraphError("edge count does not match a spanning tree")
    if tree.edge_ids:
        adj: dict[str, list[str]] = {n: [] for n in tree.nodes}
        for eid in tree.edge_ids:
            if eid not in graph.edges:
                raise GraphError(f"unknown edge {eid!r} in query tree")
            e = graph.edges[eid]
            if e.left not in tree.nodes or e.right not in tree.nodes:
                raise GraphError(f"edge {eid!r} leaves the query tree's node set")
            adj[e.left].append(e.right)
            adj[e.right].append(e.left)
        seen = set()
        stack = [next(iter(tree.nodes))]
        while stack:
            n = stack.pop()
            if n in seen:
                continue
            seen.add(n)
            stack.extend(adj[n])
        if seen != set(tree.nodes):
            raise GraphError("query tree is not connected")
    # Service nodes must have their inputs bound through a service-call edge.
    service_nodes = {e.right for e in graph.edges.values() if e.kind == "service_call"}
    for node in tree.nodes & service_nodes:
        bound = any(
            graph.edges[eid].kind == "service_call" and graph.edges[eid].right == node
            for eid in tree.edge_ids
        )
        if not bound:
            raise GraphError(f"service node {node!r} has no binding edge in the tree")


# -- edge derivation -------------------------------------------------------


def derive_edges(catalog: Catalog, config: GraphConfig | None = None) -> SourceGraph:
    """Build the association graph from the catalog.

    Equijoin edges connect attribute pairs sharing name and semantic type;
    record-link edges connect pairs sharing only the type; foreign-key
    edges come from declared links; service-call edges bind a service to
    any source whose attributes type-cover the full input set. When two
    sources share several attributes, the single edge carries the
    conjunction of all the equality predicates.
    """
    config = config or GraphConfig()
    graph = SourceGraph(config=config)
    data_sources = sorted(sid for sid, d in catalog.sources.items() if d.kind != "service")
    graph.nodes.update(data_sources)
    graph.nodes.update(sorted(catalog.services))
    c0 = config.default_cost

    def add(edge: AssociationEdge):
        graph.edges[edge.id] = edge

    for a, b in itertools.combinations(data_sources, 2):
        sa, sb = catalog.sources[a], catalog.sources[b]
        equi, link = [], []
        for attr_a in sorted(sa.schema, key=lambda x: x.position):
            for attr_b in sorted(sb.schema, key=lambda x: x.position):
                if attr_a.semantic_type is None or attr_a.semantic_type != attr_b.semantic_type:
                    continue
                if attr_a.name == attr_b.name:
                    equi.append((attr_a.name, attr_b.name))
                else:
                    link.append((attr_a.name, attr_b.name))
        if equi:
            add(AssociationEdge(f"ej:{a}~{b}", "equijoin", a, b, tuple(equi), c0))
        if link:
            add(AssociationEdge(f"rl:{a}~{b}", "record_link", a, b, tuple(link), c0))

    for (ls, la), (rs, ra) in catalog.declared_links:
        left, right = sorted([(ls, la), (rs, ra)])
        add(
            AssociationEdge(
                f"fk:{left[0]}.{left[1]}~{right[0]}.{right[1]}",
                "foreign_key",
                left[0],
                right[0],
                ((left[1], right[1]),),
                c0,
                origin="declared",
            )
        )

    for sid in sorted(catalog.services):
        sig = catalog.services[sid]
        for src in data_sources:
            schema = sorted(catalog.sources[src].schema, key=lambda x: x.position)
            binding = []
            ok = True
            for inp in sig.inputs:
                match = next(
                    (a for a in schema if a.semantic_type is not None and a.semantic_type == inp.semantic_type),
                    None,
                )
                if match is None:
                    ok = False
                    break
                binding.append((match.name, inp.name))
            if ok:
                add(AssociationEdge(f"sv:{src}~{sid}", "service_call", src, sid, tuple(binding), c0))

    return graph


# -- steiner search --------------------------------------------------------


def _induced_edges(graph: SourceGraph, nodes: frozenset[str]) -> list[AssociationEdge]:
    return sorted(
        (e for e in graph.edges.values() if e.left in nodes and e.right in nodes),
        key=lambda e: e.id,
    )


def _spanning_trees(nodes: frozenset[str], edges: list[AssociationEdge], budget=None):
    """Enumerate all spanning trees of the induced (multi)graph by
    include/exclude recursion with connectivity pruning. When ``budget``
    is given, branches whose chosen-edge cost already exceeds it (within
    EPSILON) are cut short."""
    node_list = sorted(nodes)
    index = {n: i for i, n in enumerate(node_list)}
    n = len(node_list)

    def connected_with(active_edges, union_pairs):
        parent = list(range(n))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        comps = n
        for u, v in union_pairs:
            ru, rv = find(u), find(v)
            if ru != rv:
                parent[ru] = rv
                comps -= 1
        for e in active_edges:
            ru, rv = find(index[e.left]), find(index[e.right])
            if ru != rv:
                parent[ru] = rv
                comps -= 1
        return comps == 1

    results = []

    def rec(pos: int, chosen: list[AssociationEdge], pairs: list[tuple[int, int]], cost: float):
        if budget is not None and cost > budget() + EPSILON:
            return
        if len(chosen) == n - 1:
            results.append(tuple(e.id for e in chosen))
            return
        if pos == len(edges):
            return
        # Prune: remaining edges must still be able to connect everything.
        if not connected_with(edges[pos:], pairs):
            return
        e = edges[pos]
        u, v = index[e.left], index[e.right]

        def find(parents, x):
            while parents[x] != x:
                x = parents[x]
            return x

        # Cheap cycle check against chosen set.
        parent = list(range(n))
        for a, b in pairs:
            ra, rb = find(parent, a), find(parent, b)
            if ra != rb:
                parent[ra] = rb
        if find(parent, u) != find(parent, v):
            rec(pos + 1, chosen + [e], pairs + [(u, v)], cost + e.cost)
        rec(pos + 1, chosen, pairs, cost)

    rec(0, [], [], 0.0)
    return results


def _tree_leaves(graph: SourceGraph, edge_ids: tuple[str, ...]) -> set[str]:
    degree: dict[str, int] = {}
    for eid in edge_ids:
        e = graph.edges[eid]
        degree[e.left] = degree.get(e.left, 0) + 1
        degree[e.right] = degree.get(e.right, 0) + 1
    return {n for n, d in degree.items() if d == 1}


def steiner_topk_exact(graph: SourceGraph, terminals: set[str], k: int) -> list[QueryTree]:
    """k lowest-cost trees spanning the terminals, ascending cost, ties by
    sorted edge-id sequence. Candidate trees never have non-terminal leaves."""
    terminals = set(terminals)
    if not terminals:
        raise GraphError("no terminals given")
    missing = terminals - graph.nodes
    if missing:
        raise GraphError(f"unknown terminals {sorted(missing)}")
    if len(terminals) == 1:
        return [single_node_tree(next(iter(terminals)))]

    optional = sorted(graph.nodes - terminals)
    candidates: list[tuple[float, tuple[str, ...], frozenset[str]]] = []
    seen: set[tuple[str, ...]] = set()

    def kth_cost() -> float:
        return candidates[k - 1][0] if len(candidates) >= k else math.inf

    for r in range(len(optional) + 1):
        for extra in itertools.combinations(optional, r):
            node_set = frozenset(terminals | set(extra))
            edges = _induced_edges(graph, node_set)
            if len(edges) < len(node_set) - 1:
                continue
            # a spanning tree can never cost less than the n-1 cheapest edges
            floor = sum(sorted(e.cost for e in edges)[: len(node_set) - 1])
            if floor > kth_cost() + EPSILON:
                continue
            for edge_ids in _spanning_trees(node_set, edges, budget=kth_cost):
                key = tuple(sorted(edge_ids))
                if key in seen:
                    continue
                seen.add(key)
                if _tree_leaves(graph, key) - terminals:
                    continue
                cost = graph.tree_cost(key)
                if cost > kth_cost() + EPSILON:
                    continue
                candidates.append((cost, key, node_set))
                candidates.sort(key=lambda c: (c[0], c[1]))
                del candidates[k:]
    if not candidates:
        raise GraphError("terminals are not connected in the graph")
    return [QueryTree(nodes=nodes, edge_ids=key) for _, key, nodes in candidates[:k]]


def _pruned_subgraph(graph: SourceGraph, terminals: set[str]) -> SourceGraph:
    """Keep the 3 cheapest simple paths between every terminal pair plus all
    below-ceiling edges incident to terminals."""
    simple = nx.Graph()
    simple.add_nodes_from(graph.nodes)
    best_edge: dict[tuple[str, str], AssociationEdge] = {}
    for e in sorted(graph.edges.values(), key=lambda e: (e.cost, e.id)):
        key = tuple(sorted((e.left, e.right)))
        if key not in best_edge:
            best_edge[key] = e
            simple.add_edge(*key, weight=e.cost)

    keep: set[str] = set()
    for a, b in itertools.combinations(sorted(terminals), 2):
        try:
            paths = nx.shortest_simple_paths(simple, a, b, weight="weight")
            for path in itertools.islice(paths, PRUNE_PATHS_PER_PAIR):
                for u, v in zip(path, path[1:]):
                    keep.add(best_edge[tuple(sorted((u, v)))].id)
        except nx.NetworkXNoPath:
            continue
    for t in terminals:
        for e in graph.incident(t):
            if e.cost <= graph.config.edge_ceiling:
                keep.add(e.id)

    pruned = SourceGraph(config=graph.config)
    pruned.nodes = set(terminals)
    for eid in keep:
        e = graph.edges[eid]
        pruned.edges[eid] = e
        pruned.nodes.update((e.left, e.right))
    return pruned


def _terminals_connected(graph: SourceGraph, terminals: set[str]) -> bool:
    if not terminals <= graph.nodes:
        return False
    adj: dict[str, set[str]] = {n: set() for n in graph.nodes}
    for e in graph.edges.values():
        adj[e.left].add(e.right)
        adj[e.right].add(e.left)
    start = next(iter(terminals))
    seen = {start}
    stack = [start]
    while stack:
        n = stack.pop()
        for m in adj[n]:
            if m not in seen:
                seen.add(m)
                stack.append(m)
    return terminals <= seen


def steiner_topk_pruned(graph: SourceGraph, terminals: set[str], k: int) -> list[QueryTree]:
    terminals = set(terminals)
    if not terminals:
        raise GraphError("no terminals given")
    if len(terminals) == 1:
        if not terminals <= graph.nodes:
            raise GraphError("unknown terminal")
        return [single_node_tree(next(iter(terminals)))]
    pruned = _pruned_subgraph(graph, terminals)
    if not _terminals_connected(pruned, terminals):
        if len(graph.nodes) <= EXACT_NODE_BOUND:
            return steiner_topk_exact(graph, terminals, k)
        raise GraphError("terminals disconnected after pruning")
    if len(pruned.nodes) <= EXACT_NODE_BOUND:
        return steiner_topk_exact(pruned, terminals, k)
    return _steiner_topk_heuristic(pruned, terminals, k)


def _approx_tree(graph: SourceGraph, terminals: set[str]) -> tuple[str, ...] | None:
    """One terminal-spanning tree (as sorted edge ids) via the Mehlhorn
    Steiner approximation, with non-terminal leaves trimmed off."""
    simple = nx.Graph()
    simple.add_nodes_from(graph.nodes)
    for e in sorted(graph.edges.values(), key=lambda e: (e.cost, e.id)):
        key = tuple(sorted((e.left, e.right)))
        if not simple.has_edge(*key):
            simple.add_edge(*key, weight=e.cost, edge_id=e.id)
    try:
        tree = nx.algorithms.approximation.steiner_tree(
            simple, sorted(terminals), weight="weight", method="mehlhorn"
        )
    except (nx.NetworkXError, KeyError, ValueError):
        return None
    if not tree.number_of_edges():
        return None
    work = nx.Graph(tree)
    changed = True
    while changed:
        changed = False
        for node in list(work.nodes):
            if node not in terminals and work.degree(node) <= 1:
                work.remove_node(node)
                changed = True
    if not (terminals <= set(work.nodes)) or not nx.is_connected(work):
        return None
    return tuple(sorted(simple.edges[u, v]["edge_id"] for u, v in work.edges()))


def _steiner_topk_heuristic(graph: SourceGraph, terminals: set[str], k: int) -> list[QueryTree]:
    """Top-k for graphs too large for exact enumeration: diversify the
    approximation by re-running it with each edge of the incumbent tree
    excluded, then rank the distinct trees by cost."""
    first = _approx_tree(graph, terminals)
    if first is None:
        raise GraphError("terminals are not connected in the graph")
    found: set[tuple[str, ...]] = {first}
    for eid in first:
        reduced = graph.copy()
        del reduced.edges[eid]
        alt = _approx_tree(reduced, terminals)
        if alt is not None:
            found.add(alt)
    ranked = sorted(found, key=lambda ids: (graph.tree_cost(ids), ids))
    return [make_tree(graph, ids) for ids in ranked[:k]]


# -- suggestions over the graph -------------------------------------------


def column_completions(current: QueryTree, graph: SourceGraph) -> list[tuple[AssociationEdge, QueryTree]]:
    """One extension per qualifying incident edge reaching a new node,
    ordered by extended tree cost (ties by edge id)."""
    out = []
    for node in sorted(current.nodes):
        for edge in graph.incident(node):
            other = edge.other(node)
            if other in current.nodes:
                continue
            if edge.cost > graph.config.edge_ceiling:
                continue
            if edge.kind == "service_call" and edge.right != other:
                # Services can only be *reached* through their binding side.
                continue
            extended = QueryTree(
                nodes=current.nodes | {other},
                edge_ids=tuple(sorted(current.edge_ids + (edge.id,))),
            )
            out.append((edge, extended))
    # Deduplicate extensions reachable from several current nodes.
    unique: dict[str, tuple[AssociationEdge, QueryTree]] = {}
    for edge, tree in out:
        unique.setdefault(edge.id, (edge, tree))
    ordered = sorted(unique.values(), key=lambda pair: (pair[1].cost(graph), pair[0].id))
    return ordered


def explain_pasted_tuples(
    tuples_with_attribution: list[list[tuple[str, str, str]]],
    graph: SourceGraph,
    k: int,
    contains,
) -> list[QueryTree]:
    """Top-k trees whose evaluation reproduces every pasted tuple.

    Each pasted tuple is a list of (source id, attribute name, value)
    cells; the attributed sources are the Steiner terminals. ``contains``
    is the engine-side check ``(tree, tuples) -> bool`` applied before
    ranking.
    """
    if not tuples_with_attribution:
        raise GraphError("no tuples to explain")
    terminals = {src for tup in tuples_with_attribution for src, _, _ in tup}
    candidates = steiner_topk_pruned(graph, terminals, max(k * 4, k))
    explained = [t for t in candidates if contains(t, tuples_with_attribution)]
    if not explained:
        raise GraphError("no candidate query reproduces the pasted tuples")
    return explained[:k]


# -- feedback constraints --------------------------------------------------


@dataclass(frozen=True)
class RankingConstraint:
    form: str  # prefer | suppress | promote
    query: QueryTree
    over: QueryTree | None = None

    def __post_init__(self):
        if self.form == "prefer":
            if self.over is None:
                raise GraphError("prefer constraint needs a second query")
            if set(self.query.edge_ids) == set(self.over.edge_ids):
                raise GraphError("prefer constraint over identical edge sets is unsatisfiable")
        elif self.form not in ("suppress", "promote"):
            raise GraphError(f"unknown constraint form {self.form!r}")


def _set_cost(graph: SourceGraph, edge_id: str, cost: float) -> None:
    graph.edges[edge_id] = replace(graph.edges[edge_id], cost=max(0.0, cost), origin="learned")


def _reduce_uniform(graph: SourceGraph, edge_ids: list[str], total: float) -> None:
    """Take ``total`` cost off the edges as evenly as clamping at zero allows."""
    active = [e for e in edge_ids if graph.edge_cost(e) > 0.0]
    need = total
    while need > EPSILON and active:
        share = need / len(active)
        next_active = []
        for eid in active:
            cost = graph.edge_cost(eid)
            take = min(share, cost)
            _set_cost(graph, eid, cost - take)
            need -= take
            if cost - take > EPSILON:
                next_active.append(eid)
        active = next_active


def _apply_prefer(graph: SourceGraph, preferred: QueryTree, over: QueryTree) -> None:
    gamma = graph.config.margin
    cost_a = preferred.cost(graph)
    cost_b = over.cost(graph)
    if cost_a <= cost_b - gamma + EPSILON:
        return  # passive: margin already satisfied
    delta = cost_a - cost_b + gamma
    a_only = sorted(set(preferred.edge_ids) - set(over.edge_ids))
    b_only = sorted(set(over.edge_ids) - set(preferred.edge_ids))
    size = len(a_only) + len(b_only)
    share = delta / size
    for eid in b_only:
        _set_cost(graph, eid, graph.edge_cost(eid) + share)
    _reduce_uniform(graph, a_only, share * len(a_only))


def _apply_suppress(graph: SourceGraph, query: QueryTree) -> None:
    ceiling = graph.config.query_ceiling
    cost = query.cost(graph)
    if cost > ceiling or not query.edge_ids:
        return
    bump = (ceiling - cost + SUPPRESS_STEP) / len(query.edge_ids)
    for eid in query.edge_ids:
        _set_cost(graph, eid, graph.edge_cost(eid) + bump)


def _apply_promote(graph: SourceGraph, query: QueryTree) -> None:
    ceiling = graph.config.query_ceiling
    cost = query.cost(graph)
    if cost <= ceiling or not query.edge_ids:
        return
    _reduce_uniform(graph, list(query.edge_ids), cost - ceiling)


def mira_update(graph: SourceGraph, constraints: list[RankingConstraint]) -> SourceGraph:
    """Apply ranking constraints in order, touching only the edges that
    differ between the constrained queries."""
    updated = graph.copy()
    for constraint in constraints:
        if constraint.form == "prefer":
            _apply_prefer(updated, constraint.query, constraint.over)
        elif constraint.form == "suppress":
            _apply_suppress(updated, constraint.query)
        else:
            _apply_promote(updated, constraint.query)
    return updated
