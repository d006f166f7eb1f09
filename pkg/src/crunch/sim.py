"""Discrete-event simulation of daily resource crunches.

Arrivals follow a non-homogeneous Poisson process generated by thinning,
one independent random stream per (seed, day), so every policy sees the same
requests. Metrics are binned in 5-minute slots of each recorded day.
"""

from __future__ import annotations

import heapq
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path as FsPath
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from .baselines import Approach, ApproachPolicy
from .net import (
    BandwidthChanged,
    ConnectionAdded,
    ConnectionRemoved,
    NetworkState,
    Router,
    Topology,
    gbps,
    load_topology,
    usnet24,
)
from .pricing import MEAN_HOLDING_S, TrafficMix, batch_requests, default_mix, sample_batch

DAY_S = 86400.0
BIN_S = 300.0
CRUNCH_THRESHOLD = 0.02
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ScenarioConfig:
    """Traffic and run settings.

    ``profile="interarrival"`` makes the mean inter-arrival time sinusoidal,
    ``1/lambda(t) = (1/lam_peak) * (1 - A cos(2 pi (t - peak)/day)) / (1 - A)``;
    ``profile="rate"`` makes the rate itself sinusoidal,
    ``lambda(t) = lam_peak * (1 + A cos(2 pi (t - peak)/day)) / (1 + A)``.
    Either way ``lam_peak`` is the rate at ``peak_time_s``.
    """

    name: str = "scenario"
    topology: str = "usnet24"
    capacity_gbps: float = 100.0
    lam_peak: float = 0.1  # arrivals per second at the daily peak
    amplitude: float = 0.0
    profile: str = "interarrival"
    peak_time_s: float = DAY_S / 2
    day_s: float = DAY_S
    mean_holding_s: float = MEAN_HOLDING_S
    days: int = 100
    warmup_days: int = 5
    bin_s: float = BIN_S
    crunch_threshold: float = CRUNCH_THRESHOLD
    seed: int = 0
    target_peak: Optional[float] = None
    target_duration_s: Optional[float] = None

    def __post_init__(self):
        if self.lam_peak < 0:
            raise ValueError("arrival rate must be nonnegative")
        if not 0 <= self.amplitude < 1:
            raise ValueError("amplitude must lie in [0, 1)")
        if self.profile not in ("interarrival", "rate"):
            raise ValueError(f"unknown arrival profile {self.profile!r}")
        if self.days < 1 or self.warmup_days < 0:
            raise ValueError("need at least one recorded day")
        if abs(self.day_s / self.bin_s - round(self.day_s / self.bin_s)) > 1e-9:
            raise ValueError("bin length must divide the day")

    @property
    def bins(self) -> int:
        return int(round(self.day_s / self.bin_s))

    def rate(self, t: np.ndarray | float) -> np.ndarray | float:
        c = np.cos(2 * np.pi * (np.asarray(t) - self.peak_time_s) / self.day_s)
        a = self.amplitude
        if self.profile == "interarrival":
            return self.lam_peak * (1 - a) / (1 - a * c)
        return self.lam_peak * (1 + a * c) / (1 + a)

    def mean_rate(self) -> float:
        a = self.amplitude
        if self.profile == "interarrival":
            return self.lam_peak * (1 - a) / math.sqrt(1 - a * a)
        return self.lam_peak / (1 + a)

    def load_topology(self) -> Topology:
        if self.topology == "usnet24":
            topo = usnet24()
        else:
            topo = load_topology(self.topology)
        return topo.with_capacity(self.capacity_gbps)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ScenarioConfig":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in data.items() if k in known})


def load_scenario(path: str | FsPath) -> ScenarioConfig:
    with open(path) as fh:
        return ScenarioConfig.from_dict(json.load(fh))


def bundled_scenario(name: str) -> ScenarioConfig:
    from importlib import resources

    text = resources.files("crunch.data").joinpath(f"scenario_{name.lower()}.json").read_text()
    return ScenarioConfig.from_dict(json.loads(text))


def day_arrivals(cfg: ScenarioConfig, day: int, seed: int, mix: TrafficMix, n_nodes: int):
    """Request columns for one day; a pure function of (config, seed, day)."""
    rng = np.random.default_rng([seed, day])
    lam_max = cfg.lam_peak
    n = rng.poisson(lam_max * cfg.day_s) if lam_max > 0 else 0
    t = np.sort(rng.uniform(0.0, cfg.day_s, size=n))
    keep = rng.random(n) * lam_max < cfg.rate(t)
    times = t[keep] + day * cfg.day_s
    return sample_batch(rng, times, mix, n_nodes)


@dataclass
class MetricsFrame:
    """Per-day, per-bin accumulators of one (policy, seed) run."""

    policy: str
    seed: int
    bin_s: float
    revenue: np.ndarray  # $ realized, (days, bins)
    blocking: np.ndarray  # $ fines, (days, bins)
    offered: np.ndarray  # requests, (days, bins)
    crunched: np.ndarray  # requests, (days, bins)
    crunched_by_class: np.ndarray  # (days, bins, classes)
    accepted_by_class: np.ndarray  # crunched and served, (days, bins, classes)
    hops_sum: np.ndarray  # allocated hops of served crunched requests, (days, bins)
    classes: tuple[str, ...] = ()
    decision_times: list = field(default_factory=list)
    records: list = field(default_factory=list)

    @classmethod
    def empty(cls, policy: str, seed: int, days: int, bins: int, bin_s: float, classes: Sequence[str]):
        z = lambda *extra: np.zeros((days, bins, *extra))
        return cls(policy, seed, bin_s, z(), z(), z(), z(), z(len(classes)), z(len(classes)), z(), tuple(classes))

    @property
    def profit(self) -> np.ndarray:
        return self.revenue - self.blocking

    @property
    def days(self) -> int:
        return self.revenue.shape[0]

    def crunch_profile(self) -> np.ndarray:
        """Crunched ratio per time-of-day bin, pooled over days."""
        off = self.offered.sum(axis=0)
        return np.divide(self.crunched.sum(axis=0), off, out=np.zeros_like(off), where=off > 0)

    def windows(self, threshold: float = CRUNCH_THRESHOLD) -> list[tuple[int, int]]:
        return detect_crunch_windows(self.crunched.sum(axis=0), self.offered.sum(axis=0), threshold)

    def window_profit(self, windows: Iterable[tuple[int, int]]) -> float:
        """Mean per-day profit inside the given bin windows (end exclusive)."""
        mask = window_mask(windows, self.revenue.shape[1])
        return float(self.profit[:, mask].sum(axis=1).mean())

    def acceptance(self, cls: str | Sequence[str]) -> float:
        names = [cls] if isinstance(cls, str) else list(cls)
        idx = [self.classes.index(c) for c in names]
        c = self.crunched_by_class[..., idx].sum()
        return float(self.accepted_by_class[..., idx].sum() / c) if c else float("nan")

    def mean_hops(self) -> float:
        n = self.accepted_by_class.sum()
        return float(self.hops_sum.sum() / n) if n else float("nan")

    def mean_decision_time(self) -> float:
        return float(np.mean(self.decision_times)) if self.decision_times else float("nan")

    def crunched_fraction(self) -> float:
        off = self.offered.sum()
        return float(self.crunched.sum() / off) if off else 0.0

    def day_rows(self, windows: Sequence[tuple[int, int]] | None = None) -> list[dict[str, Any]]:
        mask = window_mask(windows or [], self.revenue.shape[1])
        rows = []
        for d in range(self.days):
            row = {
                "schema_version": SCHEMA_VERSION,
                "policy": self.policy,
                "seed": self.seed,
                "day": d,
                "revenue": round(float(self.revenue[d].sum()), 6),
                "blocking_cost": round(float(self.blocking[d].sum()), 6),
                "profit": round(float(self.profit[d].sum()), 6),
                "crunch_profit": round(float(self.profit[d, mask].sum()), 6),
                "offered": int(self.offered[d].sum()),
                "crunched": int(self.crunched[d].sum()),
            }
            for i, c in enumerate(self.classes):
                row[f"crunched_{c}"] = int(self.crunched_by_class[d, :, i].sum())
                row[f"accepted_{c}"] = int(self.accepted_by_class[d, :, i].sum())
            rows.append(row)
        return rows


def window_mask(windows: Iterable[tuple[int, int]], bins: int) -> np.ndarray:
    mask = np.zeros(bins, dtype=bool)
    for a, b in windows:
        mask[a:b] = True
    return mask


def detect_crunch_windows(crunched: Sequence[float], offered: Sequence[float], threshold: float = CRUNCH_THRESHOLD) -> list[tuple[int, int]]:
    """Maximal runs of bins whose crunched ratio exceeds ``threshold``.

    Windows are returned as ``(start, end)`` bin indices, end exclusive.
    """
    crunched = np.asarray(crunched, dtype=float)
    offered = np.asarray(offered, dtype=float)
    ratio = np.divide(crunched, offered, out=np.zeros_like(crunched), where=offered > 0)
    over = ratio > threshold
    out = []
    start = None
    for i, flag in enumerate(over):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            out.append((start, i))
            start = None
    if start is not None:
        out.append((start, len(over)))
    return out


class _RevenueMeter:
    """Integrates the network-wide revenue rate into day/bin slots."""

    def __init__(self, frame: MetricsFrame, cfg: ScenarioConfig):
        self.frame = frame
        self.cfg = cfg
        self.rate = 0.0  # $/s
        self.t = 0.0
        self.t0 = cfg.warmup_days * cfg.day_s
        self.t1 = (cfg.warmup_days + cfg.days) * cfg.day_s

    def __call__(self, event) -> None:
        if isinstance(event, ConnectionAdded):
            self.rate += event.conn.b_cur * event.conn.unit_value
        elif isinstance(event, ConnectionRemoved):
            self.rate -= event.conn.b_cur * event.conn.unit_value
        elif isinstance(event, BandwidthChanged):
            self.rate += gbps(event.conn.cur - event.old) * event.conn.unit_value

    def advance(self, t: float) -> None:
        a = max(self.t, self.t0)
        b = min(t, self.t1)
        if b > a and self.rate != 0.0:
            bin_s = self.cfg.bin_s
            bins = self.cfg.bins
            rev = self.frame.revenue
            while a < b:
                k = int((a - self.t0) // bin_s)
                edge = min(self.t0 + (k + 1) * bin_s, b)
                rev[k // bins, k % bins] += self.rate * (edge - a)
                a = edge
        self.t = t


_ROUTERS: dict[tuple, Router] = {}


def shared_router(topo: Topology) -> Router:
    key = (tuple(topo.nodes), tuple((l.a, l.b) for l in topo.links))
    r = _ROUTERS.get(key)
    if r is None:
        r = _ROUTERS[key] = Router(topo)
    return r


def run(
    cfg: ScenarioConfig,
    policy: ApproachPolicy,
    seed: int | None = None,
    mix: TrafficMix | None = None,
    log=None,
    check_every: int = 0,
    keep_records: bool = False,
) -> MetricsFrame:
    """Simulate ``warmup_days + days`` days of one policy.

    ``log`` is an optional callable receiving each recorded decision;
    ``keep_records`` stores them on the frame as JSON-ready dicts.
    ``check_every`` runs the full state audit every that many events.
    """
    seed = cfg.seed if seed is None else seed
    mix = mix or default_mix()
    topo = cfg.load_topology()
    if policy.capacity_gbps is not None:
        topo = topo.with_capacity(policy.capacity_gbps)
    state = NetworkState(topo)
    router = shared_router(topo)
    approach = Approach.bind(policy, state, cfg.mean_holding_s, router)
    classes = tuple(c.name for c in mix.classes)
    cidx = {c: i for i, c in enumerate(classes)}
    frame = MetricsFrame.empty(policy.name, seed, cfg.days, cfg.bins, cfg.bin_s, classes)
    meter = _RevenueMeter(frame, cfg)
    state.subscribe(meter)
    departures: list[tuple[float, int, Any]] = []
    seq = 0
    events = 0
    total_days = cfg.warmup_days + cfg.days
    for day in range(total_days):
        batch = day_arrivals(cfg, day, seed, mix, len(topo.nodes))
        reqs = batch_requests(batch, mix, topo, id_start=day * 10_000_000)
        rec_day = day - cfg.warmup_days
        for req in reqs:
            t = req.arrival
            while departures and departures[0][0] <= t:
                td, _, cid = heapq.heappop(departures)
                meter.advance(td)
                state.release(cid)
                approach.on_departure()
            meter.advance(t)
            k = int((t - day * cfg.day_s) // cfg.bin_s)
            recording = rec_day >= 0
            if recording:
                frame.offered[rec_day, k] += 1
            path = router.fit(state, req.source, req.destination, req.req)
            if path is not None:
                conn = req.to_connection(path, req.req)
                state.allocate(conn)
                seq += 1
                heapq.heappush(departures, (conn.t_end, seq, conn.id))
            else:
                rec = approach.decide(req)
                ci = cidx[req.service_class]
                if rec.served:
                    conn = state.connections[req.id]
                    seq += 1
                    heapq.heappush(departures, (conn.t_end, seq, conn.id))
                if recording:
                    frame.crunched[rec_day, k] += 1
                    frame.crunched_by_class[rec_day, k, ci] += 1
                    frame.blocking[rec_day, k] += rec.blocking_cost
                    if rec.served:
                        frame.accepted_by_class[rec_day, k, ci] += 1
                        frame.hops_sum[rec_day, k] += state.connections[req.id].path.hop_length
                    if policy.kind != "baseline":
                        frame.decision_times.append(rec.wall_time)
                    if log is not None:
                        log(rec)
                    if keep_records:
                        frame.records.append(rec.to_json())
            events += 1
            if check_every and events % check_every == 0:
                state.check()
    end = total_days * cfg.day_s
    while departures and departures[0][0] <= end:
        td, _, cid = heapq.heappop(departures)
        meter.advance(td)
        state.release(cid)
        approach.on_departure()
    meter.advance(end)
    if check_every:
        state.check()
    return frame


# -- replications and comparisons ------------------------------------------


def _run_job(args) -> MetricsFrame:
    cfg, policy, seed, keep, check = args
    return run(cfg, policy, seed, keep_records=keep, check_every=check)


def workers() -> int:
    env = os.environ.get("CRUNCH_THREADS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def run_many(
    cfg: ScenarioConfig,
    policies: Sequence[ApproachPolicy],
    seeds: Sequence[int],
    n_workers: int | None = None,
    keep_records: bool = False,
    check_every: int = 0,
) -> dict[str, list[MetricsFrame]]:
    """Every policy on every seed; results keyed by policy name, ordered by seed."""
    jobs = [(cfg, p, s, keep_records, check_every) for p in policies for s in seeds]
    n = min(n_workers or workers(), len(jobs))
    if n > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(n) as pool:
            frames = list(pool.map(_run_job, jobs))
    else:
        frames = [_run_job(j) for j in jobs]
    out: dict[str, list[MetricsFrame]] = {p.name: [] for p in policies}
    for (_, p, _, _, _), f in zip(jobs, frames):
        out[p.name].append(f)
    return out


def t_interval(values: Sequence[float], confidence: float = 0.95) -> tuple[float, float, float]:
    """Mean and two-sided Student-t confidence interval."""
    from scipy import stats

    x = np.asarray(values, dtype=float)
    m = float(x.mean())
    if len(x) < 2:
        return m, float("nan"), float("nan")
    half = float(stats.t.ppf(0.5 + confidence / 2, len(x) - 1) * x.std(ddof=1) / math.sqrt(len(x)))
    return m, m - half, m + half


@dataclass
class Comparison:
    reference: str
    windows: dict[int, list[tuple[int, int]]]  # seed -> bins
    frames: dict[str, list[MetricsFrame]]

    def crunch_profits(self, policy: str) -> np.ndarray:
        return np.array([f.window_profit(self.windows[f.seed]) for f in self.frames[policy]])

    def gap(self, better: str, worse: str, confidence: float = 0.95) -> tuple[float, float, float]:
        """Paired per-seed difference of crunch-window profit, with its CI."""
        return t_interval(self.crunch_profits(better) - self.crunch_profits(worse), confidence)

    def summary_rows(self) -> list[dict[str, Any]]:
        rows = []
        for name, frames in self.frames.items():
            cp = self.crunch_profits(name)
            m, lo, hi = t_interval(cp)
            classes = frames[0].classes
            row = {
                "schema_version": SCHEMA_VERSION,
                "policy": name,
                "seeds": len(frames),
                "days": frames[0].days,
                "crunch_profit_mean": round(m, 4),
                "crunch_profit_ci_lo": round(lo, 4),
                "crunch_profit_ci_hi": round(hi, 4),
                "daily_profit_mean": round(float(np.mean([f.profit.sum(axis=1).mean() for f in frames])), 4),
                "daily_revenue_mean": round(float(np.mean([f.revenue.sum(axis=1).mean() for f in frames])), 4),
                "crunched_fraction": round(float(np.mean([f.crunched_fraction() for f in frames])), 6),
                "mean_path_hops": round(_pooled(frames, "hops"), 4),
                "mean_decision_ms": round(1e3 * _pooled(frames, "time"), 4),
            }
            for c in classes:
                row[f"acceptance_{c}"] = round(_pooled(frames, "acc", c), 6)
            rows.append(row)
        return rows


def _pooled(frames: Sequence[MetricsFrame], what: str, cls: str | None = None) -> float:
    if what == "hops":
        n = sum(f.accepted_by_class.sum() for f in frames)
        return float(sum(f.hops_sum.sum() for f in frames) / n) if n else float("nan")
    if what == "time":
        times = [t for f in frames for t in f.decision_times]
        return float(np.mean(times)) if times else float("nan")
    i = frames[0].classes.index(cls)
    c = sum(f.crunched_by_class[..., i].sum() for f in frames)
    a = sum(f.accepted_by_class[..., i].sum() for f in frames)
    return float(a / c) if c else float("nan")


def compare(
    cfg: ScenarioConfig,
    policies: Sequence[ApproachPolicy],
    seeds: Sequence[int],
    reference: str | None = None,
    n_workers: int | None = None,
    keep_records: bool = False,
    check_every: int = 0,
) -> Comparison:
    """Run all policies on common random numbers; windows come from ``reference``."""
    if not seeds:
        raise ValueError("need at least one seed")
    names = [p.name for p in policies]
    if reference is None:
        base = [p for p in policies if p.kind == "baseline" and p.capacity_gbps is None]
        if not base:
            raise ValueError("compare needs a baseline at the scenario capacity")
        reference = base[0].name
    if reference not in names:
        raise ValueError(f"reference policy {reference!r} not among {names}")
    frames = run_many(cfg, policies, seeds, n_workers, keep_records, check_every)
    windows = {f.seed: f.windows(cfg.crunch_threshold) for f in frames[reference]}
    return Comparison(reference, windows, frames)


# -- calibration -------------------------------------------------------------


class CalibrationError(RuntimeError):
    def __init__(self, message: str, trace: list):
        super().__init__(message)
        self.trace = trace


def crunch_shape(frame: MetricsFrame, threshold: float = CRUNCH_THRESHOLD) -> tuple[float, float]:
    """(peak crunched ratio, total seconds above threshold) of the pooled daily profile."""
    prof = frame.crunch_profile()
    return float(prof.max()) if len(prof) else 0.0, float((prof > threshold).sum() * frame.bin_s)


def calibrate(
    template: ScenarioConfig,
    target_peak: float,
    target_duration_s: float,
    days: int = 20,
    seed: int | Sequence[int] = 0,
    peak_tol: float = 0.01,
    duration_tol: float = 0.2,
    max_outer: int = 14,
    max_inner: int = 14,
    lam_bounds: tuple[float, float] = (0.005, 2.0),
    amp_bounds: tuple[float, float] = (0.0, 0.98),
) -> tuple[ScenarioConfig, list[dict]]:
    """Fit ``(lam_peak, amplitude)`` so the Baseline shows the target crunch.

    The inner bisection moves the peak rate until the peak crunched ratio
    hits ``target_peak``; the outer bisection moves the amplitude, which
    narrows (larger A) or widens the window at a fixed peak. Several seeds
    may be given; peak and duration are then averaged over them.
    """
    if not 0 <= target_peak < 1:
        raise ValueError("target peak ratio must be in [0, 1)")
    base = ApproachPolicy("Baseline", "baseline")
    trace: list[dict] = []
    seeds = [seed] if isinstance(seed, int) else list(seed)
    probe = replace(template, days=days, seed=seeds[0])

    def measure(lam: float, amp: float) -> tuple[float, float]:
        cfg = replace(probe, lam_peak=lam, amplitude=amp)
        shapes = [crunch_shape(run(cfg, base, s), cfg.crunch_threshold) for s in seeds]
        peak = float(np.mean([p for p, _ in shapes]))
        dur = float(np.mean([d for _, d in shapes]))
        trace.append({"lam_peak": lam, "amplitude": amp, "peak": peak, "duration_s": dur})
        return peak, dur

    if target_peak == 0:
        lam = template.lam_peak
        peak, _ = measure(lam, 0.0)
        if peak > 0:
            raise CalibrationError("baseline crunches at the template rate", trace)
        return replace(template, amplitude=0.0, target_peak=0.0, target_duration_s=0.0), trace

    def fit_peak(amp: float) -> tuple[float, float, float]:
        lo, hi = lam_bounds
        lam = math.sqrt(lo * hi)
        peak = dur = 0.0
        for _ in range(max_inner):
            lam = math.sqrt(lo * hi)
            peak, dur = measure(lam, amp)
            if abs(peak - target_peak) <= peak_tol / 2:
                break
            if peak < target_peak:
                lo = lam
            else:
                hi = lam
        return lam, peak, dur

    a_lo, a_hi = amp_bounds
    best = None
    for _ in range(max_outer):
        amp = (a_lo + a_hi) / 2
        lam, peak, dur = fit_peak(amp)
        err = abs(dur - target_duration_s) / target_duration_s
        ok_peak = abs(peak - target_peak) <= peak_tol
        if best is None or (ok_peak, -err) > (best[3], -best[4]):
            best = (lam, amp, peak, ok_peak, err)
        if ok_peak and err <= duration_tol:
            break
        if dur > target_duration_s:
            a_lo = amp  # window too wide: sharpen the peak
        else:
            a_hi = amp
    lam, amp, peak, ok_peak, err = best
    if not ok_peak or err > duration_tol:
        raise CalibrationError(
            f"no (lam_peak, amplitude) met peak {target_peak:.3f} and duration {target_duration_s:.0f}s", trace
        )
    cfg = replace(template, lam_peak=lam, amplitude=amp, target_peak=target_peak, target_duration_s=target_duration_s)
    return cfg, trace
