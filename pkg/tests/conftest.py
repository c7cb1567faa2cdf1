import json
from pathlib import Path

import pytest

from pastefusion import typist
from pastefusion.gateway.config import AppConfig
from pastefusion.gateway.services import ServiceRegistry, load_fixture_services

FIXTURES = Path(__file__).parent / "fixtures"

SHELTER_ROWS = [
    ("North East Focal Point", "227 Hillsboro Blvd", "Coconut Creek"),
    ("Monarch Community Center", "1100 Lyons Rd", "Coconut Creek"),
    ("Pompano Beach Civic Hall", "600 Federal Hwy", "Pompano Beach"),
    ("Ely Memorial Hall", "900 Atlantic Blvd", "Margate"),
    ("Crystal Lake Middle School", "3551 Crystal Rd", "Deerfield Beach"),
    ("Silver Lakes Recreation Hall", "7600 Falcon Dr", "Miramar"),
    ("Park Ridge Elementary School", "5200 Park Dr", "Davie"),
    ("Boyd Anderson High School", "3050 Sunrise Blvd", "Lauderdale Lakes"),
    ("Rock Island Community Hall", "2460 Rock Rd", "Oakland Park"),
    ("Walker Elementary School", "1001 Palm Ave", "Fort Lauderdale"),
    ("Lyons Creek Middle School", "4333 Turtle Run", "Coral Springs"),
    ("Plantation Central Park Hall", "9151 Broward Blvd", "Plantation"),
]


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def type_seed() -> dict[str, list[str]]:
    return json.loads((FIXTURES / "types.json").read_text(encoding="utf-8"))


@pytest.fixture()
def trained_types(type_seed):
    return {tid: typist.learn_type(tid, vals) for tid, vals in type_seed.items()}


def build_catalog_with_services():
    """Catalog holding the two mock services plus their registry."""
    from pastefusion.catalog import Catalog

    catalog = Catalog()
    registry = ServiceRegistry()
    load_fixture_services(FIXTURES, catalog, registry)
    return catalog, registry


def ingest_fixture_sources(state):
    """Register the shelter and contact documents on a gateway AppState."""
    state.ingest(
        "shelters",
        (FIXTURES / "shelters.html").read_bytes(),
        "html",
        attribute_names=["name", "street", "city"],
    )
    state.ingest(
        "contacts",
        (FIXTURES / "contacts.csv").read_bytes(),
        "csv",
        attribute_names=["org", "phone"],
    )


@pytest.fixture()
def app_state():
    from pastefusion.gateway.app import AppState

    return AppState(AppConfig(fixtures_dir=str(FIXTURES)))


@pytest.fixture()
def loaded_state(app_state):
    ingest_fixture_sources(app_state)
    return app_state


ACCEPTANCE_CRITERIA = [
    ("test_criterion_1_exact_topk_matches_oracle", "exact top-k Steiner search matches oracle"),
    ("test_criterion_2_pruned_search_soundness", "pruned search soundness vs optimum"),
    ("test_criterion_3_ranking_update_locality_and_progress", "ranking update locality and progress"),
    ("test_criterion_4_single_feedback_convergence", "single-feedback convergence"),
    ("test_criterion_5_provenance_replay_and_join_oracle", "provenance replay and join oracle"),
    ("test_criterion_6_extractor_generalization", "extractor generalization"),
    ("test_criterion_7_type_recognition", "type recognition accuracy"),
    ("test_criterion_8_end_to_end_http", "end-to-end headless HTTP scenario"),
    ("test_criterion_9_workbench_round_trip", "workbench round trip"),
]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    outcomes: dict[str, str] = {}
    for status, verdict in (("passed", "PASS"), ("failed", "FAIL"), ("error", "FAIL")):
        for report in terminalreporter.stats.get(status, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py" not in nodeid:
                continue
            name = nodeid.rsplit("::", 1)[-1]
            if verdict == "FAIL" or name not in outcomes:
                outcomes[name] = verdict
    if not outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for index, (name, label) in enumerate(ACCEPTANCE_CRITERIA, start=1):
        if name in outcomes:
            terminalreporter.write_line(f"criterion {index} ({label}): {outcomes[name]}")
