"""Command line entry points: serve, ingest, dump-graph, replay-log."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from ..catalog import load_catalog
from ..session import replay_events
from ..sourcegraph import SourceGraph, derive_edges
from .app import AppState, create_app
from .config import AppConfig, load_config
from .services import ServiceRegistry


def _config(path: str | None) -> AppConfig:
    return load_config(path) if path else load_config()


@click.group()
def main():
    """Paste-driven data integration gateway."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def serve(config_path):
    """Run the HTTP gateway."""
    import uvicorn

    cfg = _config(config_path)
    uvicorn.run(create_app(cfg), host=cfg.listen_host, port=cfg.listen_port)


@main.command()
@click.argument("path", type=click.Path(exists=True))
@click.option("--format", "fmt", required=True, type=click.Choice(["csv", "tsv", "html"]))
@click.option("--id", "source_id", default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--catalog-out", type=click.Path(), default=None, help="Persist the catalog here.")
def ingest(path, fmt, source_id, config_path, catalog_out):
    """Ingest a document file into a fresh catalog and print its schema."""
    state = AppState(_config(config_path))
    sid = state.ingest(source_id or Path(path).stem, Path(path).read_bytes(), fmt)
    desc = state.catalog.sources[sid]
    click.echo(json.dumps({
        "source_id": sid,
        "rows": len(state.catalog.tables[sid].rows),
        "schema": [{"name": a.name, "semantic_type": a.semantic_type} for a in desc.schema],
    }, indent=1))
    if catalog_out:
        from ..catalog import save_catalog

        save_catalog(state.catalog, catalog_out)


@main.command("dump-graph")
@click.option("--catalog", "catalog_path", type=click.Path(exists=True), required=True)
def dump_graph(catalog_path):
    """Print the source graph in DOT format."""
    cat = load_catalog(catalog_path)
    if cat.graph_payload is not None:
        graph = SourceGraph.from_payload(cat.graph_payload)
    else:
        graph = derive_edges(cat)
    click.echo(graph.to_dot())


@main.command("replay-log")
@click.option("--catalog", "catalog_path", type=click.Path(exists=True), required=True)
@click.option("--log", "log_path", type=click.Path(exists=True), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def replay_log(catalog_path, log_path, config_path):
    """Replay a newline-delimited JSON event log and print the final state."""
    state = AppState(_config(config_path))
    cat = load_catalog(catalog_path)
    events = [
        json.loads(line)
        for line in Path(log_path).read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    session = replay_events(cat, state.registry, state.documents, events, state.graph_config())
    click.echo(json.dumps(session.state_payload(), indent=1))


if __name__ == "__main__":
    main()
