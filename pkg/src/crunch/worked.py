"""Network snapshots: a topology, live connections and one pending request.

The bundled seven-node example is one such snapshot; ``dump-cag`` reads any
file in the same format.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path as FsPath
from typing import Any

from .net import Connection, NetworkState, Topology, kbps
from .pricing import Request


@dataclass
class Snapshot:
    state: NetworkState
    request: Request | None
    horizon: float
    free_policy: str
    name: str = ""


def snapshot_from_dict(data: dict[str, Any]) -> Snapshot:
    topo = Topology.from_dict(data["topology"])
    state = NetworkState(topo)
    for row in data.get("connections", []):
        state.allocate(
            Connection(
                id=row["id"],
                path=topo.path(row["path"]),
                req=kbps(row["b_req"]),
                min=kbps(row["b_min"]),
                cur=kbps(row["b_cur"]),
                service_class=row.get("service_class", ""),
                unit_value=float(row["unit_value"]),
            )
        )
    req = data.get("request")
    request = None
    if req is not None:
        request = Request(
            id=req.get("id", "request"),
            source=str(req["source"]),
            destination=str(req["destination"]),
            req=kbps(req["b_req"]),
            min=kbps(req["b_min"]),
            service_class=req.get("service_class", ""),
            unit_value=float(req["unit_value"]),
            blocking_cost=float(req["blocking_cost"]),
        )
    return Snapshot(state, request, float(data.get("horizon", 1.0)), data.get("free_policy", "zero"), data.get("name", ""))


def load_snapshot(path: str | FsPath) -> Snapshot:
    with open(path) as fh:
        return snapshot_from_dict(json.load(fh))


def worked_example_data() -> dict[str, Any]:
    return json.loads(resources.files("crunch.data").joinpath("worked_example.json").read_text())


def worked_example() -> Snapshot:
    """Fresh copy of the seven-node crunch example."""
    return snapshot_from_dict(worked_example_data())
