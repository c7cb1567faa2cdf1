"""Service transport with response validation, caching, and retries.

Mock services are in-process lookup tables loaded from fixture CSVs; live
HTTP endpoints are configuration, not code.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass
from pathlib import Path

import httpx

from ..catalog import AttributeSpec, Catalog, ServiceSignature, SourceDescriptor


class ServiceFailure(RuntimeError):
    pass


class MockTransport:
    """Lookup-table service: rows whose leading columns equal the inputs."""

    def __init__(self, rows: list[tuple], n_inputs: int):
        self.rows = rows
        self.n_inputs = n_inputs

    def __call__(self, inputs: tuple) -> list[tuple]:
        return [
            tuple(row[self.n_inputs:])
            for row in self.rows
            if tuple(row[: self.n_inputs]) == tuple(inputs)
        ]


class HttpTransport:
    def __init__(self, url: str, timeout: float = 10.0):
        self.url = url
        self.timeout = timeout

    def __call__(self, inputs: tuple) -> list[tuple]:
        response = httpx.post(self.url, json={"inputs": list(inputs)}, timeout=self.timeout)
        response.raise_for_status()
        return [tuple(out) for out in response.json()["outputs"]]


@dataclass
class ServiceClient:
    service_id: str
    signature: ServiceSignature
    transport: object
    retries: int = 2
    backoff: float = 0.02

    def call_raw(self, inputs: tuple) -> list[tuple]:
        last: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                results = self.transport(inputs)
                break
            except Exception as exc:
                last = exc
                if attempt < self.retries:
                    time.sleep(self.backoff * (2**attempt))
        else:
            raise ServiceFailure(f"service {self.service_id!r} failed after retries: {last}")
        arity = len(self.signature.outputs)
        for out in results:
            if len(out) != arity:
                raise ServiceFailure(
                    f"service {self.service_id!r} returned arity {len(out)}, expected {arity}"
                )
        return [tuple(out) for out in results]


class ServiceRegistry:
    """Shared cache plus transport bookkeeping; the engine's runner."""

    def __init__(self):
        self.clients: dict[str, ServiceClient] = {}
        self.cache: dict[tuple, list[tuple]] = {}
        self.transport_count: dict[str, int] = {}

    def register(self, client: ServiceClient) -> None:
        self.clients[client.service_id] = client

    def call(self, service_id: str, inputs: tuple) -> list[tuple]:
        key = (service_id, tuple(inputs))
        if key in self.cache:
            return self.cache[key]
        client = self.clients.get(service_id)
        if client is None:
            raise ServiceFailure(f"unknown service {service_id!r}")
        results = client.call_raw(tuple(inputs))
        self.cache[key] = results
        self.transport_count[service_id] = self.transport_count.get(service_id, 0) + 1
        return results

    def cached(self, service_id: str, inputs: tuple) -> list[tuple] | None:
        return self.cache.get((service_id, tuple(inputs)))


def load_fixture_services(fixtures_dir: str | Path, catalog: Catalog, registry: ServiceRegistry) -> None:
    """Register mock services described by ``services.json`` in the fixtures
    directory; each entry names a CSV lookup table (header row skipped)."""
    manifest = Path(fixtures_dir) / "services.json"
    if not manifest.exists():
        return
    for spec in json.loads(manifest.read_text(encoding="utf-8")):
        inputs = tuple(
            AttributeSpec(a["name"], i, a.get("semantic_type"))
            for i, a in enumerate(spec["inputs"])
        )
        outputs = tuple(
            AttributeSpec(a["name"], i, a.get("semantic_type"))
            for i, a in enumerate(spec["outputs"])
        )
        sig = ServiceSignature(inputs=inputs, outputs=outputs, fan_out=spec.get("fan_out", "many"))
        schema = tuple(
            AttributeSpec(a.name, i, a.semantic_type) for i, a in enumerate(inputs + outputs)
        )
        descriptor = SourceDescriptor(
            id=spec["id"], kind="service", schema=schema, origin="declared"
        )
        if spec["id"] not in catalog.sources:
            catalog.register_service(sig, descriptor)
        table_path = Path(fixtures_dir) / spec["table"]
        rows = list(csv.reader(io.StringIO(table_path.read_text(encoding="utf-8"))))[1:]
        transport = MockTransport([tuple(r) for r in rows], n_inputs=len(inputs))
        registry.register(ServiceClient(spec["id"], sig, transport))
