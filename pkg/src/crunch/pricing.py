"""Service classes, request sampling, revenue and blocking costs.

Money is in dollars and time in seconds. A connection's ``unit_value`` is
its revenue per Gbit carried: the class multiplier times the square root of
the hop length of the uncapacitated shortest path between its endpoints.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Callable, Hashable, Optional, Sequence

import numpy as np

from .net import Connection, Topology, gbps, kbps

MEAN_HOLDING_S = 1800.0


@dataclass(frozen=True)
class ServiceClass:
    name: str
    traffic_share: float
    bw_range: tuple[float, float]  # Gbps, uniform
    degradable_fraction: float
    theta: float  # $ per Gbit, before the path-length factor
    blocking_multiplier: float

    def __post_init__(self):
        lo, hi = self.bw_range
        if not 0 < lo <= hi:
            raise ValueError(f"class {self.name}: bad bandwidth range {self.bw_range}")
        if not 0 <= self.degradable_fraction < 1:
            raise ValueError(f"class {self.name}: degradable fraction must be in [0, 1)")


@dataclass(frozen=True)
class TrafficMix:
    classes: tuple[ServiceClass, ...]
    mean_holding_s: float = MEAN_HOLDING_S

    def __post_init__(self):
        total = sum(c.traffic_share for c in self.classes)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"traffic shares sum to {total}, expected 1")

    @property
    def cumulative(self) -> np.ndarray:
        cum = np.cumsum([c.traffic_share for c in self.classes])
        cum[-1] = 1.0
        return cum

    def by_name(self, name: str) -> ServiceClass:
        for c in self.classes:
            if c.name == name:
                return c
        raise KeyError(name)

    def class_for(self, u: float) -> ServiceClass:
        """Inverse-CDF class draw for a uniform variate ``u``."""
        return self.classes[int(np.searchsorted(self.cumulative, u, side="right"))]

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TrafficMix":
        classes = tuple(
            ServiceClass(
                name=c["name"],
                traffic_share=float(c["traffic_share"]),
                bw_range=(float(c["bw_range"][0]), float(c["bw_range"][1])),
                degradable_fraction=float(c["degradable_fraction"]),
                theta=float(c["theta"]),
                blocking_multiplier=float(c["blocking_multiplier"]),
            )
            for c in data["classes"]
        )
        return cls(classes, float(data.get("mean_holding_s", MEAN_HOLDING_S)))

    def to_dict(self) -> dict[str, Any]:
        return {
            "mean_holding_s": self.mean_holding_s,
            "classes": [
                {
                    "name": c.name,
                    "traffic_share": c.traffic_share,
                    "bw_range": list(c.bw_range),
                    "degradable_fraction": c.degradable_fraction,
                    "theta": c.theta,
                    "blocking_multiplier": c.blocking_multiplier,
                }
                for c in self.classes
            ],
        }


def default_mix() -> TrafficMix:
    text = resources.files("crunch.data").joinpath("traffic_mix.json").read_text()
    return TrafficMix.from_dict(json.loads(text))


@dataclass(eq=False)
class Request:
    """A bandwidth request. ``req``/``min`` are kbps; ``duration`` is hidden from decisions."""

    id: Hashable
    source: str
    destination: str
    req: int
    min: int
    service_class: str
    unit_value: float
    blocking_cost: float
    arrival: float = 0.0
    duration: float = MEAN_HOLDING_S
    revenue_fn: Optional[Callable[[float], float]] = None

    @property
    def b_req(self) -> float:
        return gbps(self.req)

    @property
    def b_min(self) -> float:
        return gbps(self.min)

    def to_connection(self, path, bw: int, t_start: float | None = None) -> Connection:
        start = self.arrival if t_start is None else t_start
        return Connection(
            id=self.id,
            path=path,
            req=self.req,
            min=self.min,
            cur=bw,
            service_class=self.service_class,
            unit_value=self.unit_value,
            t_start=start,
            t_end=start + self.duration,
            revenue_fn=self.revenue_fn,
        )


def unit_value(theta: float, shortest_hops: int) -> float:
    return theta * math.sqrt(shortest_hops)


def revenue_rate(item: Connection | Request, bw_gbps: float) -> float:
    """Revenue per second at ``bw_gbps``; linear in bandwidth."""
    if bw_gbps < 0:
        raise ValueError("bandwidth must be nonnegative")
    return bw_gbps * item.unit_value


def revenue(item: Connection | Request, bw_gbps: float, horizon: float) -> float:
    """Decision-time revenue of carrying ``bw_gbps`` over ``horizon`` seconds."""
    if item.revenue_fn is not None:
        return item.revenue_fn(bw_gbps)
    return bw_gbps * item.unit_value * horizon


def lost_revenue(conn: Connection, b_gbps: float, horizon: float) -> float:
    """Revenue forgone by throttling ``conn`` from its current bandwidth to ``b_gbps``."""
    if b_gbps < 0:
        raise ValueError("bandwidth must be nonnegative")
    return max(revenue(conn, conn.b_cur, horizon) - revenue(conn, b_gbps, horizon), 0.0)


def shed_cost(conn: Connection, delta: int, horizon: float) -> float:
    """Lost revenue of shedding ``delta`` kbps from ``conn``."""
    if delta <= 0:
        return 0.0
    if conn.revenue_fn is None:
        return gbps(delta) * conn.unit_value * horizon
    return lost_revenue(conn, gbps(conn.cur - delta), horizon)


def blocking_cost(cls: ServiceClass, b_min: int, shortest_hops: int, holding_s: float = MEAN_HOLDING_S) -> float:
    return gbps(b_min) * cls.blocking_multiplier * math.sqrt(shortest_hops) * holding_s


def min_bandwidth(cls: ServiceClass, req: int) -> int:
    if cls.degradable_fraction == 0:
        return req
    return max(1, int(round(req * (1.0 - cls.degradable_fraction))))


def make_request(
    id: Hashable,
    topology: Topology,
    source: str,
    destination: str,
    b_req_gbps: float,
    cls: ServiceClass,
    arrival: float = 0.0,
    duration: float = MEAN_HOLDING_S,
    holding_s: float = MEAN_HOLDING_S,
) -> Request:
    hops = topology.shortest_hops(source, destination)
    req = kbps(b_req_gbps)
    b_min = min_bandwidth(cls, req)
    return Request(
        id=id,
        source=source,
        destination=destination,
        req=req,
        min=b_min,
        service_class=cls.name,
        unit_value=unit_value(cls.theta, hops),
        blocking_cost=blocking_cost(cls, b_min, hops, holding_s),
        arrival=arrival,
        duration=duration,
    )


def sample_request(rng: np.random.Generator, time: float, mix: TrafficMix, topology: Topology, id: Hashable = 0) -> Request:
    """Draw one request: class by share, uniform bandwidth, uniform ordered pair."""
    cls = mix.class_for(rng.random())
    lo, hi = cls.bw_range
    bw = rng.uniform(lo, hi)
    n = len(topology.nodes)
    if n < 2:
        raise ValueError("topology needs at least two nodes")
    i = int(rng.integers(n))
    j = int(rng.integers(n - 1))
    if j >= i:
        j += 1
    duration = float(rng.exponential(mix.mean_holding_s))
    return make_request(
        id, topology, topology.nodes[i], topology.nodes[j], bw, cls,
        arrival=time, duration=duration, holding_s=mix.mean_holding_s,
    )


@dataclass
class RequestBatch:
    """Column-oriented request draws for many arrivals at once."""

    times: np.ndarray
    class_idx: np.ndarray
    bw_gbps: np.ndarray
    src_idx: np.ndarray
    dst_idx: np.ndarray
    durations: np.ndarray
    extra: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.times)


def sample_batch(rng: np.random.Generator, times: np.ndarray, mix: TrafficMix, n_nodes: int) -> RequestBatch:
    """Vectorised counterpart of :func:`sample_request` for a sorted arrival vector."""
    m = len(times)
    u = rng.random(m)
    cidx = np.searchsorted(mix.cumulative, u, side="right")
    lo = np.array([c.bw_range[0] for c in mix.classes])[cidx]
    hi = np.array([c.bw_range[1] for c in mix.classes])[cidx]
    bw = lo + (hi - lo) * rng.random(m)
    src = rng.integers(n_nodes, size=m)
    dst = rng.integers(n_nodes - 1, size=m)
    dst = dst + (dst >= src)
    dur = rng.exponential(mix.mean_holding_s, size=m)
    return RequestBatch(np.asarray(times, dtype=float), cidx, bw, src, dst, dur)


def batch_requests(batch: RequestBatch, mix: TrafficMix, topology: Topology, id_start: int = 0) -> list[Request]:
    out = []
    nodes = topology.nodes
    for k in range(len(batch)):
        cls = mix.classes[int(batch.class_idx[k])]
        out.append(
            make_request(
                id_start + k, topology, nodes[int(batch.src_idx[k])], nodes[int(batch.dst_idx[k])],
                float(batch.bw_gbps[k]), cls, arrival=float(batch.times[k]),
                duration=float(batch.durations[k]), holding_s=mix.mean_holding_s,
            )
        )
    return out
