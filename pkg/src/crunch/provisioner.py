"""The PROVISIONER pipeline: CAG search, LP fallback, profitability, execution."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional

from .cag import Cag, CagPath
from .decision import (
    MIN,
    REQ,
    CandidateSet,
    Context,
    DecisionRecord,
    blocked_record,
    decide,
    prefers_req,
    profitable,
)
from .lp import lp_provisioner
from .pricing import Request

BLOCK = "block"
GOOD = "good"
CANDIDATE = "candidate"
NONE = "none"


@dataclass(frozen=True)
class CagOutcome:
    kind: str  # BLOCK | GOOD | CANDIDATE | NONE
    cand: Optional[CandidateSet] = None
    relaxed_min: Optional[CagPath] = None
    relaxed_req: Optional[CagPath] = None
    cap_min: Optional[CagPath] = None
    cap_req: Optional[CagPath] = None


def _as_candidate(p: CagPath, target: str, quality: str) -> CandidateSet:
    return CandidateSet(p.members, target, p.bw, p.true_cost, quality, "cag", None, p.vertices)


def _same(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=1e-9, abs_tol=1e-9)


def cag_provisioner(cag: Cag, request: Request, horizon: float | None = None) -> CagOutcome:
    """CAG stage of the pipeline over the four views.

    The min/req choice uses profitability first and then the normalised
    cost rule, exactly like the profitability definition; with a single
    capacitated side available that side is used.
    """
    s, t = request.source, request.destination
    horizon = cag.horizon if horizon is None else horizon
    star_min = cag.min_cost_path(s, t, request.min, "relaxed-min")
    if star_min is None:
        return CagOutcome(BLOCK)
    c_min = cag.min_cost_path(s, t, request.min, "cap-min")
    c_req = cag.min_cost_path(s, t, request.req, "cap-req") if request.req != request.min else None
    if c_min is None and c_req is None:
        return CagOutcome(NONE, None, star_min)
    cand_min = _as_candidate(c_min, MIN, "") if c_min is not None else None
    cand_req = _as_candidate(c_req, REQ, "") if c_req is not None else None
    if cand_min is not None and cand_req is not None:
        ok_min = profitable(request, cand_min, horizon)
        ok_req = profitable(request, cand_req, horizon)
        if ok_min != ok_req:
            use_req = ok_req
        else:
            use_req = prefers_req(cand_min, cand_req)
    else:
        use_req = cand_req is not None
    star_req = None
    if use_req:
        star_req = cag.min_cost_path(s, t, request.req, "relaxed-req")
        chosen, star, target = c_req, star_req, REQ
    else:
        chosen, star, target = c_min, star_min, MIN
    good = star is not None and _same(chosen.weighted_cost, star.weighted_cost)
    kind = GOOD if good else CANDIDATE
    return CagOutcome(kind, _as_candidate(chosen, target, kind), star_min, star_req, c_min, c_req)


def provision(ctx: Context, cag: Cag, request: Request, k: int = 1, approach: str = "PROVISIONER") -> DecisionRecord:
    """Full pipeline for one crunched request; mutates the state when serving."""
    t0 = time.perf_counter()
    out = cag_provisioner(cag, request, ctx.horizon)
    if out.kind == BLOCK:
        rec = blocked_record(approach, request, None, ctx.horizon)
    elif out.kind == GOOD or not ctx.linear:
        rec = decide(approach, ctx, request, out.cand)
    else:
        cand = lp_provisioner(ctx, request, k, prior=out.cand)
        rec = decide(approach, ctx, request, cand)
    rec.wall_time = time.perf_counter() - t0
    return rec
