"""Per-path degradation LP and the k-path wrapper.

For a fixed path the LP picks new bandwidths ``y_i`` for every connection
crossing it so that each path link keeps ``B_c`` free, at least lost revenue.
It is solved in shed form (``s_i = B_i - y_i``), which keeps all bounds at
zero and drops connections with nothing to shed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable, Optional

import numpy as np

from .decision import MIN, REQ, CandidateSet, Context, select
from .net import KBPS_PER_GBPS, NetworkState, Path, gbps
from .pricing import Request
from .simplex import LpNumericalError, solve_bounded

__all__ = ["LpInstance", "LpSolution", "LpNumericalError", "build_instance", "solve", "lp_candidate", "lp_provisioner"]


@dataclass
class LpInstance:
    path: Path
    capacity: np.ndarray  # z_j, Gbps
    used: np.ndarray  # current usage per path link, Gbps
    b_c: float  # Gbps
    conn_ids: list[Hashable]
    b_cur: np.ndarray  # B_i, Gbps
    b_min: np.ndarray  # B_i^min, Gbps
    rate: np.ndarray  # $ lost per Gbps shed
    incidence: np.ndarray  # v_i^j, shape (links, connections)
    # exact integer copies (kbps) for the post-solve check
    cap_k: tuple[int, ...] = ()
    used_k: tuple[int, ...] = ()
    b_c_k: int = 0
    deg_k: tuple[int, ...] = ()

    def to_text(self) -> str:
        """Plain LP listing for debugging."""
        ids = [f"y_{c}" for c in self.conn_ids]
        obj = " + ".join(f"{r:g} {v}" for r, v in zip(self.rate, ids)) or "0"
        lines = [f"\\ path {self.path}, B_c = {self.b_c:g}", f"minimize X: {obj} shed", "subject to"]
        for j, link in enumerate(self.path.links):
            terms = " + ".join(ids[i] for i in range(len(ids)) if self.incidence[j, i]) or "0"
            lines.append(f"  l{link}: {terms} <= {self.capacity[j] - self.b_c:g}")
        lines.append("bounds")
        for i, v in enumerate(ids):
            lines.append(f"  {self.b_min[i]:g} <= {v} <= {self.b_cur[i]:g}")
        return "\n".join(lines) + "\nend\n"


@dataclass
class LpSolution:
    y: dict[Hashable, float]  # new bandwidth per connection, Gbps
    objective: float  # X in $
    shed: dict[Hashable, int]  # rounded-up kbps to shed, verified exactly


def build_instance(state: NetworkState, path: Path, bw: int, horizon: float = 1.0) -> LpInstance:
    if bw <= 0:
        raise ValueError("bandwidth must be positive")
    links = path.links
    ids: list[Hashable] = sorted({cid for l in links for cid in state.on_link[l]}, key=str)
    conns = [state.connections[c] for c in ids]
    inc = np.array([[1.0 if c.id in state.on_link[l] else 0.0 for c in conns] for l in links]).reshape(len(links), len(conns))
    return LpInstance(
        path=path,
        capacity=np.array([gbps(state.capacity[l]) for l in links]),
        used=np.array([gbps(state.used[l]) for l in links]),
        b_c=gbps(bw),
        conn_ids=ids,
        b_cur=np.array([c.b_cur for c in conns]),
        b_min=np.array([c.b_min for c in conns]),
        rate=np.array([c.unit_value * horizon for c in conns]),
        incidence=inc,
        cap_k=tuple(state.capacity[l] for l in links),
        used_k=tuple(state.used[l] for l in links),
        b_c_k=bw,
        deg_k=tuple(c.cur - c.min for c in conns),
    )


def solve(inst: LpInstance) -> Optional[LpSolution]:
    """Exact LP optimum, or ``None`` when even full degradation is not enough."""
    need = inst.used + inst.b_c - inst.capacity  # Gbps each link must shed
    need_k = [u + inst.b_c_k - z for u, z in zip(inst.used_k, inst.cap_k)]
    deg = inst.b_cur - inst.b_min
    var = [i for i in range(len(inst.conn_ids)) if inst.deg_k[i] > 0]
    rows = [j for j in range(len(need_k)) if need_k[j] > 0]
    # quick exact infeasibility test: a link cannot shed more than its members own
    for j in rows:
        if sum(inst.deg_k[i] for i in var if inst.incidence[j, i]) < need_k[j]:
            return None
    y = {cid: float(b) for cid, b in zip(inst.conn_ids, inst.b_cur)}
    shed_k: dict[Hashable, int] = {}
    if not rows:
        return LpSolution(y, 0.0, shed_k)
    A = -inst.incidence[np.ix_(rows, var)]
    res = solve_bounded(inst.rate[var], A, -need[rows], deg[var])
    if res.status != "optimal":
        return None
    for k, i in enumerate(var):
        s = float(res.x[k])
        cid = inst.conn_ids[i]
        y[cid] = float(inst.b_cur[i] - s)
        amount = min(max(math.ceil(s * KBPS_PER_GBPS - 1e-3), 0), inst.deg_k[i])
        if amount > 0:
            shed_k[cid] = amount
    for j in rows:
        freed = sum(shed_k.get(inst.conn_ids[i], 0) for i in var if inst.incidence[j, i])
        if freed < need_k[j]:
            raise LpNumericalError(f"rounded solution misses link {inst.path.links[j]} by {need_k[j] - freed} kbps")
    return LpSolution(y, res.objective, shed_k)


def lp_candidate(ctx: Context, request: Request, path: Path, target: str) -> Optional[CandidateSet]:
    bw = request.req if target == REQ else request.min
    sol = solve(build_instance(ctx.state, path, bw, ctx.horizon))
    if sol is None:
        return None
    members = tuple(sorted(sol.shed.items(), key=lambda kv: str(kv[0])))
    conns = ctx.state.connections
    cost = sum(gbps(d) * conns[c].unit_value * ctx.horizon for c, d in members)
    return CandidateSet(members, target, bw, cost, "candidate", "lp", path)


def lp_best(ctx: Context, request: Request, k: int) -> tuple[Optional[CandidateSet], Optional[CandidateSet]]:
    """Cheapest LP candidate per target over the k shortest paths (earlier path wins ties)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    best = {MIN: None, REQ: None}
    targets = (REQ,) if request.min == request.req else (REQ, MIN)
    for path in ctx.router.k_shortest(request.source, request.destination, k):
        for target in targets:
            cand = lp_candidate(ctx, request, path, target)
            if cand is not None and (best[target] is None or cand.cost < best[target].cost):
                best[target] = cand
    if request.min == request.req:
        best[MIN] = best[REQ]
        best[REQ] = None
    return best[MIN], best[REQ]


def lp_provisioner(ctx: Context, request: Request, k: int, prior: Optional[CandidateSet] = None) -> Optional[CandidateSet]:
    """Step II: LP over k paths and both targets, merged with a prior CAG candidate."""
    cand_min, cand_req = lp_best(ctx, request, k)
    if prior is not None:
        if prior.target == REQ and request.min != request.req:
            if cand_req is None or prior.cost <= cand_req.cost:
                cand_req = prior
        elif cand_min is None or prior.cost <= cand_min.cost:
            cand_min = prior
    return select(request, cand_min, cand_req, ctx.horizon)
