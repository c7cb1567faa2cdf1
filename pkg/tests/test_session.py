"""Workspace sessions: paste handling, feedback routing, export, replay."""

import json
from dataclasses import replace

import pytest

from pastefusion.catalog import AttributeSpec, SourceDescriptor
from pastefusion.gateway.config import AppConfig
from pastefusion.session import Session, SessionError, replay_events

from conftest import FIXTURES, SHELTER_ROWS, ingest_fixture_sources


def make_session(state):
    return Session(
        state.catalog,
        state.registry,
        state.documents,
        state.graph_config(),
        state.config.link_threshold,
    )


@pytest.fixture()
def session(loaded_state):
    return make_session(loaded_state)


def paste_first_two(session):
    return session.handle_paste([list(SHELTER_ROWS[0]), list(SHELTER_ROWS[1])], "shelters")


class TestImportPaste:
    def test_row_completion_suggested(self, session):
        suggestions = paste_first_two(session)
        assert session.mode == "import"
        assert session.import_origin == "shelters"
        assert session.tabs["shelters"] == [SHELTER_ROWS[0], SHELTER_ROWS[1]]
        ids = [s.id for s in suggestions]
        assert "rows:shelters:0" in ids
        rows = session.suggestions["rows:shelters:0"]
        assert rows.kind == "row_completion"
        assert set(rows.preview_rows) == set(SHELTER_ROWS[2:])

    def test_no_label_suggestions_when_types_current(self, session):
        suggestions = paste_first_two(session)
        assert not any(s.kind == "type_label" for s in suggestions)

    def test_label_suggested_for_untyped_columns(self, loaded_state):
        desc = loaded_state.catalog.sources["shelters"]
        loaded_state.catalog.replace_descriptor(
            replace(desc, schema=tuple(replace(a, semantic_type=None) for a in desc.schema))
        )
        session = make_session(loaded_state)
        suggestions = paste_first_two(session)
        labels = {s.id: s for s in suggestions if s.kind == "type_label"}
        assert "label:shelters:2:city" in labels
        assert labels["label:shelters:2:city"].type_id == "city"

    def test_empty_paste_rejected(self, session):
        with pytest.raises(SessionError):
            session.handle_paste([], "shelters")
        with pytest.raises(SessionError):
            session.handle_paste([["", ""]], "shelters")

    def test_unknown_origin_rejected(self, session):
        with pytest.raises(SessionError):
            session.handle_paste([["a"]], "nowhere")


class TestRowFeedback:
    def test_accept_completes_tab_and_anchors_query(self, session):
        paste_first_two(session)
        session.apply_feedback("rows:shelters:0", "accept")
        assert session.tabs["shelters"] == list(SHELTER_ROWS)
        assert session.active_query is not None
        assert session.active_query.id == "q:shelters"
        # completed suggestion disappears once nothing remains to add
        assert "rows:shelters:0" not in session.suggestions

    def test_reject_with_removed_rows_narrows_rule(self, session):
        paste_first_two(session)
        removed = [list(r) for r in SHELTER_ROWS if r[2] != "Coconut Creek"]
        session.apply_feedback("rows:shelters:0", "reject", removed_rows=removed)
        assert session.rules["shelters"].predicate == ((2, "Coconut Creek"),)
        assert session.catalog.tables["shelters"].rows == [SHELTER_ROWS[0], SHELTER_ROWS[1]]

    def test_contradictory_feedback_in_one_turn_rejected(self, session):
        paste_first_two(session)
        # a reject that names no rows leaves the suggestion standing
        session.apply_feedback("rows:shelters:0", "reject", removed_rows=[])
        with pytest.raises(SessionError):
            session.apply_feedback("rows:shelters:0", "accept")

    def test_unknown_target_rejected(self, session):
        paste_first_two(session)
        with pytest.raises(SessionError):
            session.apply_feedback("rows:ghost:0", "accept")
        with pytest.raises(SessionError):
            session.apply_feedback("rows:shelters:0", "shrug")


class TestLabelFeedback:
    def test_accept_label_updates_schema_and_graph(self, loaded_state):
        desc = loaded_state.catalog.sources["shelters"]
        loaded_state.catalog.replace_descriptor(
            replace(desc, schema=tuple(replace(a, semantic_type=None) for a in desc.schema))
        )
        session = make_session(loaded_state)
        assert "sv:shelters~zipsvc" not in session.graph.edges
        paste_first_two(session)
        for target in ("label:shelters:1:street", "label:shelters:2:city"):
            session.apply_feedback(target, "accept")
        schema = {a.position: a.semantic_type for a in session.catalog.sources["shelters"].schema}
        assert schema[1] == "street" and schema[2] == "city"
        assert "sv:shelters~zipsvc" in session.graph.edges

    def test_reject_label_just_dismisses(self, loaded_state):
        desc = loaded_state.catalog.sources["shelters"]
        loaded_state.catalog.replace_descriptor(
            replace(desc, schema=tuple(replace(a, semantic_type=None) for a in desc.schema))
        )
        session = make_session(loaded_state)
        paste_first_two(session)
        session.apply_feedback("label:shelters:2:city", "reject")
        assert session.catalog.sources["shelters"].schema[2].semantic_type is None
        assert "label:shelters:2:city" not in session.suggestions

    def test_set_column_label_renames_and_trains(self, session):
        session.set_column_label("shelters", 0, "shelter_name", "org_name")
        desc = session.catalog.sources["shelters"]
        assert desc.attribute("shelter_name").semantic_type == "org_name"
        # column values folded into the type's training history
        assert "North East Focal Point" in session.catalog.types["org_name"].samples

    def test_set_column_label_validations(self, session):
        with pytest.raises(SessionError):
            session.set_column_label("ghost", 0, "x", None)
        with pytest.raises(SessionError):
            session.set_column_label("shelters", 9, "x", None)
        with pytest.raises(SessionError):
            session.set_column_label("shelters", 0, "city", None)


class TestModeAndIntegration:
    def test_explicit_switch_anchors_import_origin(self, session):
        paste_first_two(session)
        session.apply_feedback("rows:shelters:0", "accept")
        session.set_mode("integration")
        assert session.mode == "integration"
        assert session.active_query.id == "q:shelters"

    def test_switch_without_data_rejected(self, loaded_state):
        session = make_session(loaded_state)
        session.catalog.tables.clear()
        with pytest.raises(SessionError):
            session.set_mode("integration")
        with pytest.raises(SessionError):
            session.set_mode("sideways")

    def test_column_completions_offered(self, session):
        paste_first_two(session)
        session.apply_feedback("rows:shelters:0", "accept")
        session.set_mode("integration")
        suggestions = session.generate_suggestions()
        ids = [s.id for s in suggestions]
        assert ids == [
            "q:rl:contacts~shelters",
            "q:sv:shelters~geosvc",
            "q:sv:shelters~zipsvc",
        ]
        zips = session.suggestions["q:sv:shelters~zipsvc"]
        assert zips.preview_columns == ("name", "street", "city", "zip")
        assert len(zips.preview_rows) == 12

    def test_cross_origin_paste_triggers_integration(self, session):
        paste_first_two(session)
        session.apply_feedback("rows:shelters:0", "accept")
        session.handle_paste([["North East Focal Point", "954-555-0101"]], "contacts")
        assert session.mode == "integration"
        assert "q:rl:contacts~shelters" in session.suggestions

    def test_unattributable_value_rejected(self, session):
        paste_first_two(session)
        session.apply_feedback("rows:shelters:0", "accept")
        with pytest.raises(SessionError):
            session.handle_paste([["not anywhere at all"]], "contacts")


class TestQueryFeedback:
    def _to_integration(self, session):
        paste_first_two(session)
        session.apply_feedback("rows:shelters:0", "accept")
        session.set_mode("integration")
        session.generate_suggestions()

    def test_accept_extends_active_query_and_fills_output(self, session):
        self._to_integration(session)
        session.apply_feedback("q:sv:shelters~zipsvc", "accept")
        assert session.active_query.id == "q:sv:shelters~zipsvc"
        assert [c.name for c in session.output.columns] == ["name", "street", "city", "zip"]
        zips = [r.cells[3] for r in session.output.rows]
        assert len(zips) == 12 and all(z for z in zips)

    def test_accept_prefers_over_displayed_alternatives(self, session):
        self._to_integration(session)
        before = session.graph.edge_cost("rl:contacts~shelters")
        session.apply_feedback("q:sv:shelters~zipsvc", "accept")
        # alternatives got more expensive, the accepted edge cheaper
        assert session.graph.edge_cost("rl:contacts~shelters") > before
        assert session.graph.edge_cost("sv:shelters~zipsvc") < 1.0

    def test_reject_suppresses_suggestion(self, session):
        self._to_integration(session)
        session.apply_feedback("q:rl:contacts~shelters", "reject")
        suggestions = session.generate_suggestions()
        assert "q:rl:contacts~shelters" not in [s.id for s in suggestions]
        assert (
            session.graph.edge_cost("rl:contacts~shelters")
            > session.graph.config.edge_ceiling
        )


class TestExport:
    def _with_output(self, session):
        paste_first_two(session)
        session.apply_feedback("rows:shelters:0", "accept")
        session.set_mode("integration")
        session.generate_suggestions()
        session.apply_feedback("q:sv:shelters~geosvc", "accept")

    def test_csv(self, session):
        self._with_output(session)
        lines = session.export("csv").decode("utf-8").strip().splitlines()
        assert lines[0] == "name,street,city,lat,lon"
        assert len(lines) == 13

    def test_json(self, session):
        self._with_output(session)
        payload = json.loads(session.export("json"))
        assert len(payload) == 12
        assert payload[0]["name"] == "North East Focal Point"

    def test_geojson_points(self, session):
        self._with_output(session)
        doc = json.loads(session.export("geojson"))
        assert doc["type"] == "FeatureCollection"
        assert len(doc["features"]) == 12
        first = doc["features"][0]
        assert first["geometry"]["coordinates"] == [-80.1789, 26.2885]
        assert "lat" not in first["properties"]

    def test_geojson_needs_coordinates(self, session):
        paste_first_two(session)
        session.apply_feedback("rows:shelters:0", "accept")
        session.set_mode("integration")
        session.generate_suggestions()
        session.apply_feedback("q:sv:shelters~zipsvc", "accept")
        with pytest.raises(SessionError):
            session.export("geojson")

    def test_empty_output_rejected(self, session):
        with pytest.raises(SessionError):
            session.export("csv")

    def test_unknown_format_rejected(self, session):
        self._with_output(session)
        with pytest.raises(SessionError):
            session.export("xml")


class TestEventReplay:
    def _drive(self, session):
        paste_first_two(session)
        session.apply_feedback("rows:shelters:0", "accept")
        session.set_mode("integration")
        session.generate_suggestions()
        session.apply_feedback("q:sv:shelters~zipsvc", "accept")
        session.set_column_label("shelters", 0, "shelter_name", "org_name")

    def test_replay_reproduces_state(self, app_state):
        from pastefusion.gateway.app import AppState

        ingest_fixture_sources(app_state)
        session = make_session(app_state)
        self._drive(session)
        events = [json.loads(line) for line in session.dump_events().splitlines()]

        fresh = AppState(AppConfig(fixtures_dir=str(FIXTURES)))
        ingest_fixture_sources(fresh)
        rebuilt = replay_events(
            fresh.catalog,
            fresh.registry,
            fresh.documents,
            events,
            fresh.graph_config(),
            fresh.config.link_threshold,
        )
        assert rebuilt.state_payload() == session.state_payload()
        assert rebuilt.graph.edges == session.graph.edges

    def test_unknown_event_kind_rejected(self, loaded_state):
        with pytest.raises(SessionError):
            replay_events(
                loaded_state.catalog,
                loaded_state.registry,
                loaded_state.documents,
                [{"kind": "dance"}],
            )
