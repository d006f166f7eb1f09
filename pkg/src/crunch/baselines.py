"""Comparison approaches and the policy objects that bind them to a network."""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field
from typing import Hashable, Optional

from .cag import Cag
from .decision import (
    MIN,
    REQ,
    CandidateSet,
    Context,
    DecisionRecord,
    blocked_record,
    decide,
    select,
)
from .lp import lp_provisioner
from .net import NetworkState, Path, Router, gbps
from .pricing import Request
from .provisioner import provision

BASELINE = "baseline"
LP_ONLY = "lp"
SP_GREEDY = "sp"
PROVISIONER = "provisioner"
KINDS = (BASELINE, LP_ONLY, SP_GREEDY, PROVISIONER)


@dataclass(frozen=True)
class ApproachPolicy:
    name: str
    kind: str
    k: int = 1
    capacity_gbps: Optional[float] = None  # overrides the scenario's link capacity
    free_policy: str = "mean-rate"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown approach kind {self.kind!r}")
        if self.k < 1:
            raise ValueError("k must be >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> "ApproachPolicy":
        return cls(
            name=data["name"],
            kind=data["kind"],
            k=int(data.get("k", 1)),
            capacity_gbps=data.get("capacity_gbps"),
            free_policy=data.get("free_policy", "mean-rate"),
        )

    def to_dict(self) -> dict:
        return {"name": self.name, "kind": self.kind, "k": self.k,
                "capacity_gbps": self.capacity_gbps, "free_policy": self.free_policy}


def standard_approaches(capacity_gbps: float = 100.0) -> list[ApproachPolicy]:
    """The eight standard approaches: two Baselines, PROVISIONER, LP-only and SP."""
    return [
        ApproachPolicy(f"Baseline-{capacity_gbps * 1.3:g}", BASELINE, capacity_gbps=capacity_gbps * 1.3),
        ApproachPolicy(f"Baseline-{capacity_gbps:g}", BASELINE),
        ApproachPolicy("PROVISIONER-k1", PROVISIONER, 1),
        ApproachPolicy("PROVISIONER-k10", PROVISIONER, 10),
        ApproachPolicy("LP-k1", LP_ONLY, 1),
        ApproachPolicy("LP-k10", LP_ONLY, 10),
        ApproachPolicy("LP-k100", LP_ONLY, 100),
        ApproachPolicy("SP-k10", SP_GREEDY, 10),
    ]


def baseline_decide(ctx: Context, request: Request, approach: str = "Baseline") -> DecisionRecord:
    return blocked_record(approach, request, None, ctx.horizon)


def lp_only_decide(ctx: Context, request: Request, k: int, approach: str | None = None) -> DecisionRecord:
    t0 = time.perf_counter()
    cand = lp_provisioner(ctx, request, k) if ctx.linear else None
    rec = decide(approach or f"LP-k{k}", ctx, request, cand)
    rec.wall_time = time.perf_counter() - t0
    return rec


def greedy_shed(state: NetworkState, path: Path, bw: int, horizon: float) -> Optional[tuple[tuple[tuple[Hashable, int], ...], float]]:
    """Cheapest-first shedding on each link of ``path`` until ``bw`` kbps are free.

    A connection spanning several path links is charged once: later links
    first count what it already sheds, and may ask it for more.
    """
    conns = state.connections
    shed: dict[Hashable, int] = {}
    for l in path.links:
        need = bw - state.free(l) - sum(shed.get(c, 0) for c in state.on_link[l])
        if need <= 0:
            continue
        order = sorted(state.on_link[l], key=lambda c: (conns[c].unit_value, str(c)))
        for cid in order:
            conn = conns[cid]
            room = conn.cur - conn.min - shed.get(cid, 0)
            if room <= 0:
                continue
            take = min(room, need)
            shed[cid] = shed.get(cid, 0) + take
            need -= take
            if need == 0:
                break
        if need > 0:
            return None
    cost = sum(gbps(d) * conns[c].unit_value * horizon for c, d in shed.items())
    members = tuple(sorted(shed.items(), key=lambda kv: str(kv[0])))
    return members, cost


def sp_greedy_decide(ctx: Context, request: Request, k: int, approach: str | None = None) -> DecisionRecord:
    """Walk the k shortest paths; the first one that can be freed decides."""
    t0 = time.perf_counter()
    name = approach or f"SP-k{k}"
    state = ctx.state
    rec = None
    for path in ctx.router.k_shortest(request.source, request.destination, k):
        sides: dict[str, Optional[CandidateSet]] = {MIN: None, REQ: None}
        targets = ((REQ, request.req),) if request.min == request.req else ((REQ, request.req), (MIN, request.min))
        for target, bw in targets:
            got = greedy_shed(state, path, bw, ctx.horizon)
            if got is not None:
                sides[target] = CandidateSet(got[0], target, bw, got[1], "candidate", "sp", path)
        if request.min == request.req:
            sides[MIN], sides[REQ] = sides[REQ], None
        if sides[MIN] is None and sides[REQ] is None:
            continue
        rec = decide(name, ctx, request, select(request, sides[MIN], sides[REQ], ctx.horizon))
        break
    if rec is None:
        rec = blocked_record(name, request, None, ctx.horizon)
    rec.wall_time = time.perf_counter() - t0
    return rec


def degradation_weighted_path(state: NetworkState, s: str, t: str, bw: int, horizon: float) -> Optional[tuple[Path, float, float]]:
    """Diagnostic: shortest path under per-link greedy degradation cost.

    Each link weighs what it would cost to free ``bw`` on it alone. Returns
    the path, its summed link weights, and the greedy cost of the whole path
    with multi-link connections charged once.
    """
    topo = state.topology
    weights = []
    for link in topo.links:
        single = Path(link.nodes, (link.index,))
        got = greedy_shed(state, single, bw, horizon)
        weights.append(None if got is None else got[1])
    dist = {s: 0.0}
    prev: dict[str, tuple[str, int]] = {}
    heap = [(0.0, s)]
    done = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        if u == t:
            break
        for v, idx in topo.adj[u]:
            w = weights[idx]
            if w is None or v in done:
                continue
            nd = d + w
            if v not in dist or nd < dist[v] - 1e-12:
                dist[v] = nd
                prev[v] = (u, idx)
                heapq.heappush(heap, (nd, v))
    if t not in done:
        return None
    nodes = [t]
    while nodes[-1] != s:
        nodes.append(prev[nodes[-1]][0])
    path = topo.path(list(reversed(nodes)))
    got = greedy_shed(state, path, bw, horizon)
    return path, dist[t], (got[1] if got is not None else float("inf"))


@dataclass
class Approach:
    """A policy bound to one network state (and a CAG when it needs one)."""

    policy: ApproachPolicy
    ctx: Context
    cag: Optional[Cag] = None
    records: list = field(default_factory=list)

    @classmethod
    def bind(cls, policy: ApproachPolicy, state: NetworkState, horizon: float, router: Router | None = None) -> "Approach":
        ctx = Context.fresh(state, horizon, router)
        cag = Cag(state, horizon, policy.free_policy) if policy.kind == PROVISIONER else None
        return cls(policy, ctx, cag)

    def decide(self, request: Request) -> DecisionRecord:
        p = self.policy
        if p.kind == BASELINE:
            return baseline_decide(self.ctx, request, p.name)
        if p.kind == LP_ONLY:
            return lp_only_decide(self.ctx, request, p.k, p.name)
        if p.kind == SP_GREEDY:
            return sp_greedy_decide(self.ctx, request, p.k, p.name)
        return provision(self.ctx, self.cag, request, p.k, p.name)

    def on_departure(self) -> None:
        self.ctx.registry.on_departure(self.ctx.state)
