"""Provenance-carrying operators, tree evaluation, and replay."""

import pytest

from pastefusion import engine
from pastefusion.catalog import AttributeSpec, Catalog, ServiceSignature, SourceDescriptor, assign_row_ids
from pastefusion.engine import (
    Alt,
    Column,
    EngineError,
    Join,
    Leaf,
    ResultTable,
    Row,
    ServiceCall,
    UnionBranch,
    dependent_join,
    equijoin,
    evaluate,
    merge_alternatives,
    record_link_join,
    replay,
    responsible_queries,
    union_pad,
)
from pastefusion.gateway.services import MockTransport, ServiceClient, ServiceRegistry
from pastefusion.sourcegraph import GraphConfig, derive_edges, make_tree, single_node_tree
from pastefusion.typist import learn_type


def table(source, names, rows, types=None):
    types = types or [None] * len(names)
    columns = [Column(source, n, t) for n, t in zip(names, types)]
    out_rows = [
        Row(cells=tuple(r), prov=Leaf(source, f"{source}:r{i}")) for i, r in enumerate(rows)
    ]
    return ResultTable(columns=columns, rows=out_rows)


class TestEquijoin:
    def test_matching_rows_concatenate(self):
        left = table("l", ["k", "x"], [("1", "a"), ("2", "b")])
        right = table("r", ["k", "y"], [("1", "p"), ("3", "q")])
        out = equijoin(left, right, [(("l", "k"), ("r", "k"))], "e")
        assert [r.cells for r in out.rows] == [("1", "a", "1", "p")]
        assert out.rows[0].prov == Join("e", Leaf("l", "l:r0"), Leaf("r", "r:r0"))

    def test_null_never_matches_null(self):
        left = table("l", ["k"], [(None,)])
        right = table("r", ["k"], [(None,)])
        out = equijoin(left, right, [(("l", "k"), ("r", "k"))], "e")
        assert out.rows == []

    def test_conjunction_predicate(self):
        left = table("l", ["k", "m"], [("1", "x"), ("1", "y")])
        right = table("r", ["k", "m"], [("1", "x")])
        out = equijoin(
            left, right, [(("l", "k"), ("r", "k")), (("l", "m"), ("r", "m"))], "e"
        )
        assert [r.cells for r in out.rows] == [("1", "x", "1", "x")]


class TestRecordLink:
    def test_best_match_above_threshold(self):
        left = table("l", ["name"], [("North East Focal Pt",)])
        right = table(
            "r", ["name"], [("Rock Island Hall",), ("North East Focal Point",)]
        )
        out = record_link_join(left, right, [(("l", "name"), ("r", "name"))], "e")
        assert [r.cells for r in out.rows] == [
            ("North East Focal Pt", "North East Focal Point")
        ]

    def test_unmatched_rows_drop(self):
        left = table("l", ["name"], [("completely different",)])
        right = table("r", ["name"], [("North East Focal Point",)])
        out = record_link_join(left, right, [(("l", "name"), ("r", "name"))], "e")
        assert out.rows == []

    def test_tie_picks_earliest(self):
        left = table("l", ["name"], [("alpha",)])
        right = table("r", ["name"], [("alpha",), ("alpha",)])
        out = record_link_join(left, right, [(("l", "name"), ("r", "name"))], "e")
        assert len(out.rows) == 1
        assert out.rows[0].prov.right == Leaf("r", "r:r0")

    def test_threshold_is_configurable(self):
        left = table("l", ["name"], [("abcd",)])
        right = table("r", ["name"], [("abcx",)])
        strict = record_link_join(left, right, [(("l", "name"), ("r", "name"))], "e", threshold=0.9)
        loose = record_link_join(left, right, [(("l", "name"), ("r", "name"))], "e", threshold=0.7)
        assert strict.rows == []
        assert len(loose.rows) == 1


def service_catalog(fan_rows):
    catalog = Catalog()
    sig = ServiceSignature(
        inputs=(AttributeSpec("inp", 0, None),),
        outputs=(AttributeSpec("out", 0, None),),
    )
    catalog.register_service(
        sig,
        SourceDescriptor(
            id="svc",
            kind="service",
            schema=(AttributeSpec("inp", 0), AttributeSpec("out", 1)),
        ),
    )
    registry = ServiceRegistry()
    registry.register(ServiceClient("svc", sig, MockTransport(fan_rows, n_inputs=1)))
    return catalog, registry


class TestDependentJoin:
    def test_fan_out_and_miss(self):
        catalog, registry = service_catalog([("1", "a"), ("1", "b")])
        inputs = table("l", ["inp"], [("1",), ("2",)])
        out = dependent_join(inputs, "svc", catalog, [("inp", "inp")], "e", registry)
        assert [r.cells for r in out.rows] == [("1", "a"), ("1", "b"), ("2", None)]
        assert out.rows[0].prov == ServiceCall("e", Leaf("l", "l:r0"), "svc", ("1",), 0)
        assert out.rows[1].prov.candidate == 1
        assert out.rows[2].prov.candidate == -1

    def test_unbound_attribute_rejected(self):
        catalog, registry = service_catalog([])
        inputs = table("l", ["other"], [("1",)])
        with pytest.raises(EngineError):
            dependent_join(inputs, "svc", catalog, [("inp", "inp")], "e", registry)

    def test_output_columns_carry_service_source(self):
        catalog, registry = service_catalog([("1", "a")])
        inputs = table("l", ["inp"], [("1",)])
        out = dependent_join(inputs, "svc", catalog, [("inp", "inp")], "e", registry)
        assert out.columns[-1] == Column("svc", "out", None)


class TestUnionPad:
    def test_schema_union_preserves_first_seen_order(self):
        one = table("a", ["x", "y"], [("1", "2")])
        one.query_id = "q1"
        two = table("b", ["y", "z"], [("3", "4")])
        two.query_id = "q2"
        out = union_pad([one, two])
        assert [c.name for c in out.columns] == ["x", "y", "z"]
        assert [r.cells for r in out.rows] == [("1", "2", None), (None, "3", "4")]
        assert out.rows[0].prov == UnionBranch("q1", Leaf("a", "a:r0"), (0, 1, None))
        assert out.rows[1].prov == UnionBranch("q2", Leaf("b", "b:r0"), (None, 0, 1))

    def test_type_conflict_rejected(self):
        one = ResultTable(columns=[Column("a", "x", "city")], rows=[])
        two = ResultTable(columns=[Column("b", "x", "zip")], rows=[])
        with pytest.raises(EngineError):
            union_pad([one, two])

    def test_empty_union_rejected(self):
        with pytest.raises(EngineError):
            union_pad([])


def join_catalog():
    """Two joinable tables with a duplicate row to exercise Alt merging."""
    catalog = Catalog()
    catalog.register_type(learn_type("city", ["Margate"]))
    catalog.register_source(
        SourceDescriptor(
            id="alpha",
            kind="table",
            schema=(AttributeSpec("city", 0, "city"), AttributeSpec("pop", 1)),
        ),
        assign_row_ids("alpha", [("Margate", "58k")]),
    )
    catalog.register_source(
        SourceDescriptor(
            id="beta",
            kind="table",
            schema=(AttributeSpec("city", 0, "city"), AttributeSpec("zip", 1)),
        ),
        assign_row_ids("beta", [("Margate", "33068"), ("Margate", "33068")]),
    )
    return catalog


class TestEvaluate:
    def test_single_node_query(self):
        catalog = join_catalog()
        graph = derive_edges(catalog)
        out = evaluate(single_node_tree("alpha"), catalog, None, graph)
        assert [r.cells for r in out.rows] == [("Margate", "58k")]
        assert out.query_id == "q:alpha"
        assert out.rows[0].score == 0.0

    def test_join_query_with_duplicate_merge(self):
        catalog = join_catalog()
        graph = derive_edges(catalog)
        tree = make_tree(graph, ["ej:alpha~beta"])
        out = evaluate(tree, catalog, None, graph)
        # the two identical beta rows merge into one output row whose
        # provenance records both derivations
        assert [r.cells for r in out.rows] == [("Margate", "58k", "Margate", "33068")]
        prov = out.rows[0].prov
        assert isinstance(prov, Alt)
        assert len(prov.alternatives) == 2
        assert out.rows[0].score == pytest.approx(tree.cost(graph))

    def test_rows_replay_to_same_cells(self):
        catalog = join_catalog()
        graph = derive_edges(catalog)
        tree = make_tree(graph, ["ej:alpha~beta"])
        out = evaluate(tree, catalog, None, graph)
        for row in out.rows:
            assert replay(row.prov, catalog, None) == row.cells

    def test_service_only_tree_rejected(self):
        catalog, registry = service_catalog([])
        graph = derive_edges(catalog)
        with pytest.raises(EngineError):
            evaluate(single_node_tree("svc"), catalog, registry, graph)

    def test_evaluation_matches_nested_loops(self):
        catalog = join_catalog()
        graph = derive_edges(catalog)
        tree = make_tree(graph, ["ej:alpha~beta"])
        out = evaluate(tree, catalog, None, graph)
        expected = []
        for lrow in catalog.tables["alpha"].rows:
            for rrow in catalog.tables["beta"].rows:
                if lrow[0] == rrow[0]:
                    expected.append(lrow + rrow)
        assert [r.cells for r in out.rows] == sorted(set(expected), key=expected.index)


class TestReplay:
    def test_leaf_and_join(self):
        catalog = join_catalog()
        prov = Join("e", Leaf("alpha", "alpha:r0"), Leaf("beta", "beta:r1"))
        assert replay(prov, catalog, None) == ("Margate", "58k", "Margate", "33068")

    def test_dangling_leaf(self):
        catalog = join_catalog()
        with pytest.raises(EngineError):
            replay(Leaf("ghost", "ghost:r0"), catalog, None)

    def test_service_call_uses_cache(self):
        catalog, registry = service_catalog([("1", "a")])
        registry.call("svc", ("1",))
        prov = ServiceCall("e", Leaf("l", "l:r0"), "svc", ("1",), 0)
        catalog.register_source(
            SourceDescriptor(id="l", kind="table", schema=(AttributeSpec("inp", 0),)),
            assign_row_ids("l", [("1",)]),
        )
        assert replay(prov, catalog, registry) == ("1", "a")

    def test_service_call_miss_replays_nulls(self):
        catalog, registry = service_catalog([])
        catalog.register_source(
            SourceDescriptor(id="l", kind="table", schema=(AttributeSpec("inp", 0),)),
            assign_row_ids("l", [("9",)]),
        )
        prov = ServiceCall("e", Leaf("l", "l:r0"), "svc", ("9",), -1)
        assert replay(prov, catalog, registry) == ("9", None)

    def test_evicted_cache_entry_rejected(self):
        catalog, registry = service_catalog([("1", "a")])
        catalog.register_source(
            SourceDescriptor(id="l", kind="table", schema=(AttributeSpec("inp", 0),)),
            assign_row_ids("l", [("1",)]),
        )
        prov = ServiceCall("e", Leaf("l", "l:r0"), "svc", ("1",), 0)
        with pytest.raises(EngineError):
            replay(prov, catalog, registry)

    def test_divergent_alternatives_rejected(self):
        catalog = join_catalog()
        prov = Alt((Leaf("alpha", "alpha:r0"), Leaf("beta", "beta:r0")))
        with pytest.raises(EngineError):
            replay(prov, catalog, None)

    def test_union_branch_pads(self):
        catalog = join_catalog()
        prov = UnionBranch("q1", Leaf("alpha", "alpha:r0"), (1, None, 0))
        assert replay(prov, catalog, None) == ("58k", None, "Margate")


class TestResponsibility:
    def test_union_rows_route_to_their_query(self):
        one = table("a", ["x"], [("1",)])
        one.query_id = "q1"
        two = table("b", ["x"], [("2",)])
        two.query_id = "q2"
        out = union_pad([one, two])
        assert responsible_queries(out.rows) == {"q1": [0], "q2": [1]}

    def test_plain_rows_use_default(self):
        rows = table("a", ["x"], [("1",), ("2",)]).rows
        assert responsible_queries(rows, "q0") == {"q0": [0, 1]}
        with pytest.raises(EngineError):
            responsible_queries(rows)

    def test_missing_provenance_rejected(self):
        with pytest.raises(EngineError):
            responsible_queries([Row(cells=("1",), prov=None)])


def test_merge_alternatives_flattens_and_dedupes():
    a = Leaf("s", "s:r0")
    b = Leaf("s", "s:r1")
    assert merge_alternatives(a, a) == a
    merged = merge_alternatives(Alt((a,)), b)
    assert isinstance(merged, Alt)
    assert set(merged.alternatives) == {a, b}


def test_alt_requires_alternatives():
    with pytest.raises(EngineError):
        Alt(())
