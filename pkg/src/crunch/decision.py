"""Decision plumbing shared by every approach.

Holds the candidate-set and decision-record types, the profitability rule,
execution of a chosen degradation set, and the registry of degraded
connections that is revisited whenever capacity is released.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Hashable, Optional

from .net import Connection, NetworkError, NetworkState, Path, Router, gbps
from .pricing import Request, revenue

MIN = "min"
REQ = "req"

SERVED_REQ = "served-at-req"
SERVED_MIN = "served-at-min"
BLOCKED = "blocked"


class ExecutionError(NetworkError):
    """Throttling a candidate set did not open a physical path (state is rolled back)."""


@dataclass(frozen=True)
class CandidateSet:
    members: tuple[tuple[Hashable, int], ...]  # (connection id, kbps to shed)
    target: str  # MIN or REQ
    bw: int  # kbps the request would get
    cost: float  # L(S), true lost revenue in $
    quality: str = "candidate"  # "good" | "candidate"
    origin: str = ""
    path: Optional[Path] = None
    vertices: tuple = ()

    def shed(self, conn_id: Hashable) -> int:
        for cid, d in self.members:
            if cid == conn_id:
                return d
        return 0


@dataclass
class DecisionRecord:
    request_id: Hashable
    approach: str
    outcome: str
    bw_gbps: float = 0.0
    degraded: list = field(default_factory=list)  # [[conn id, Gbps shed], ...]
    path: str = ""
    cost: float = 0.0
    revenue: float = 0.0
    blocking_cost: float = 0.0
    quality: str = ""
    wall_time: float = 0.0

    @property
    def served(self) -> bool:
        return self.outcome != BLOCKED

    @property
    def profit_delta(self) -> float:
        return self.revenue - self.cost if self.served else 0.0

    def to_json(self) -> dict:
        row = asdict(self)
        row["request_id"] = str(self.request_id)
        row["degraded"] = [[str(c), d] for c, d in self.degraded]
        return row


def request_revenue(request: Request, bw: int, horizon: float) -> float:
    return revenue(request, gbps(bw), horizon)


def profitable(request: Request, cand: CandidateSet, horizon: float) -> bool:
    """Revenue at the target bandwidth plus the avoided fine covers L(S)."""
    gain = request_revenue(request, cand.bw, horizon) + request.blocking_cost
    return gain >= cand.cost - 1e-9 * max(1.0, abs(cand.cost))


def prefers_req(cand_min: CandidateSet, cand_req: CandidateSet) -> bool:
    """Normalised-cost comparison between the two targets (ties go to req)."""
    lhs = cand_req.cost / gbps(cand_req.bw)
    rhs = cand_min.cost / gbps(cand_min.bw)
    return lhs <= rhs + 1e-12 * max(1.0, abs(rhs))


def select(request: Request, cand_min: Optional[CandidateSet], cand_req: Optional[CandidateSet], horizon: float) -> Optional[CandidateSet]:
    """Pick between the min and req candidates.

    Profitable sides are kept first; if both survive the normalised cost
    decides. When neither is profitable the min side is returned (if any)
    so the caller can report the cost it rejected.
    """
    sides = [c for c in (cand_min, cand_req) if c is not None]
    if not sides:
        return None
    good = [c for c in sides if profitable(request, c, horizon)]
    if not good:
        return sides[0]
    if len(good) == 1:
        return good[0]
    return cand_req if prefers_req(cand_min, cand_req) else cand_min


class DegradedRegistry:
    """Connections running below their requested bandwidth, in upgrade order.

    Order: per-Gbit revenue descending, then hop length ascending, then
    insertion order.
    """

    def __init__(self):
        self._entries: dict[Hashable, tuple] = {}
        self._seq = 0

    def __contains__(self, conn_id: Hashable) -> bool:
        return conn_id in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def add(self, conn: Connection) -> None:
        if conn.id not in self._entries:
            self._seq += 1
            self._entries[conn.id] = (-conn.unit_value, conn.path.hop_length, self._seq)

    def discard(self, conn_id: Hashable) -> None:
        self._entries.pop(conn_id, None)

    def ordered(self) -> list[Hashable]:
        return sorted(self._entries, key=self._entries.__getitem__)

    def order_key(self, conn: Connection) -> tuple:
        return self._entries.get(conn.id, (-conn.unit_value, conn.path.hop_length, math.inf))

    def on_departure(self, state: NetworkState) -> list[tuple[Hashable, int, int]]:
        """Upgrade entries as far as link slack allows; returns (id, old, new) kbps."""
        done = []
        for cid in self.ordered():
            conn = state.connections.get(cid)
            if conn is None:
                del self._entries[cid]
                continue
            new = min(conn.req, conn.cur + state.path_free(conn.path))
            if new > conn.cur:
                old = conn.cur
                state.upgrade(cid, new)
                done.append((cid, old, new))
            if conn.cur >= conn.req:
                del self._entries[cid]
        return done


@dataclass
class Context:
    """Everything a decision needs besides the request."""

    state: NetworkState
    router: Router
    registry: DegradedRegistry
    horizon: float
    linear: bool = True

    @classmethod
    def fresh(cls, state: NetworkState, horizon: float, router: Router | None = None) -> "Context":
        return cls(state, router or Router(state.topology), DegradedRegistry(), horizon)


def execute(ctx: Context, request: Request, cand: CandidateSet) -> Connection:
    """Throttle the candidate's members, allocate the request, then re-upgrade."""
    state = ctx.state
    original: dict[Hashable, int] = {}
    for cid, delta in cand.members:
        conn = state.get(cid)
        delta = min(delta, conn.cur - conn.min)
        if delta > 0:
            original[cid] = conn.cur
            state.throttle(cid, conn.cur - delta)
    path = ctx.router.fit(state, request.source, request.destination, cand.bw)
    if path is None:
        for cid, bw in original.items():
            state.upgrade(cid, bw)
        raise ExecutionError(
            f"no {gbps(cand.bw):g} Gbps path {request.source}->{request.destination} "
            f"after throttling {sorted(map(str, original))}"
        )
    conn = request.to_connection(path, cand.bw)
    state.allocate(conn)
    throttled = [state.connections[cid] for cid in original]
    throttled.sort(key=ctx.registry.order_key)
    for member in throttled:
        target = min(original[member.id], member.cur + state.path_free(member.path))
        if target > member.cur:
            state.upgrade(member.id, target)
    for member in throttled:
        if member.cur < member.req:
            ctx.registry.add(member)
    if conn.cur < conn.req:
        ctx.registry.add(conn)
    return conn


def served_record(approach: str, request: Request, cand: CandidateSet, conn: Connection, horizon: float) -> DecisionRecord:
    return DecisionRecord(
        request_id=request.id,
        approach=approach,
        outcome=SERVED_REQ if cand.bw == request.req else SERVED_MIN,
        bw_gbps=gbps(cand.bw),
        degraded=[[cid, gbps(d)] for cid, d in cand.members],
        path=str(conn.path),
        cost=cand.cost,
        revenue=request_revenue(request, cand.bw, horizon),
        quality=cand.quality,
    )


def blocked_record(approach: str, request: Request, cand: Optional[CandidateSet], horizon: float) -> DecisionRecord:
    rec = DecisionRecord(
        request_id=request.id,
        approach=approach,
        outcome=BLOCKED,
        blocking_cost=request.blocking_cost,
    )
    if cand is not None:
        rec.bw_gbps = gbps(cand.bw)
        rec.degraded = [[cid, gbps(d)] for cid, d in cand.members]
        rec.cost = cand.cost
        rec.revenue = request_revenue(request, cand.bw, horizon)
        rec.quality = cand.quality
        if cand.path is not None:
            rec.path = str(cand.path)
    return rec


def decide(approach: str, ctx: Context, request: Request, cand: Optional[CandidateSet]) -> DecisionRecord:
    """Serve with ``cand`` if it is profitable, otherwise block."""
    if cand is not None and profitable(request, cand, ctx.horizon):
        conn = execute(ctx, request, cand)
        return served_record(approach, request, cand, conn, ctx.horizon)
    return blocked_record(approach, request, cand, ctx.horizon)
