import random

import pytest

from crunch.cag import DUMMY, REAL, Cag
from crunch.decision import CandidateSet, Context, execute
from crunch.net import (
    Connection,
    ConnectionAdded,
    NetworkState,
    Topology,
    UnknownConnectionError,
    capacitated_shortest_path,
    kbps,
)
from crunch.pricing import Request

from conftest import random_topology, try_allocate

# Expected relaxed-view adjacency of the worked example, written out by hand from the connection routes.
RELAXED_ADJ = {
    "C1": {"C2", "C4", "C5", "C6", "Free(E,F)"},
    "C2": {"C1", "C5", "Free(E,F)"},
    "C3": {"C4", "C5", "C6", "Free(E,F)"},
    "C4": {"C1", "C3", "C6"},
    "C5": {"C1", "C2", "C3", "C6", "Free(E,F)"},
    "C6": {"C1", "C3", "C4", "C5", "Free(E,F)"},
    "Free(E,F)": {"C1", "C2", "C3", "C5", "C6"},
}


def label(state, vid):
    from crunch.cag import vertex_label

    return vertex_label(state, vid)


def test_worked_example_structure(worked):
    st = worked.state
    cag = Cag(st, 1.0, "zero")
    names = {label(st, v) for v in cag.vertices}
    assert names == set(RELAXED_ADJ)
    adj = {}
    for a, b in cag.edges():
        adj.setdefault(label(st, a), set()).add(label(st, b))
    assert adj == RELAXED_ADJ
    assert {label(st, v) for v in cag.by_node["A"]} == {"C1", "C4"}
    assert {label(st, v) for v in cag.by_node["F"]} == {"C3", "C5", "C6", "Free(E,F)"}


def test_dot_matches_structure(worked):
    cag = Cag(worked.state, 1.0, "zero")
    dot = cag.to_dot("A", "F", kbps(5), "relaxed-min")
    assert '"Source" -> "C1" [weight=15]' in dot
    assert '"Source" -> "C4" [weight=5]' in dot
    assert '"Free(E,F)" -> "Destination" [weight=0]' in dot
    assert dot.count("->") == 2 + sum(len(v) for v in RELAXED_ADJ.values()) + 4
    with pytest.raises(ValueError):
        cag.to_dot("A", "A", kbps(5))


def test_empty_network_has_only_dummies():
    topo = Topology(list("abc"), [("a", "b", 10.0), ("b", "c", 10.0)])
    st = NetworkState(topo)
    cag = Cag(st)
    assert set(cag.vertices) == {(DUMMY, 0), (DUMMY, 1)}
    assert cag.by_node["a"] == {(DUMMY, 0)}


def test_nothing_degradable_no_path():
    topo = Topology(["a", "b"], [("a", "b", 10.0)])
    st = NetworkState(topo)
    st.allocate(Connection(1, topo.path("ab"), kbps(10), kbps(10), kbps(10), unit_value=1.0))
    cag = Cag(st)
    assert len(cag) == 0
    assert cag.min_cost_path("a", "b", kbps(1), "relaxed-min") is None


def test_worked_example_views(worked):
    st = worked.state
    cag = Cag(st, 1.0, "zero")
    cap_min = cag.min_cost_path("A", "F", kbps(5), "cap-min")
    assert cap_min.labels(st) == ["C1", "Free(E,F)"]
    assert cap_min.true_cost == 15.0 and cap_min.weighted_cost == 15.0
    assert cap_min.members == (("C1", kbps(5)),)
    rel_min = cag.min_cost_path("A", "F", kbps(5), "relaxed-min")
    assert rel_min.weighted_cost == cap_min.weighted_cost == 15.0
    cap_req = cag.min_cost_path("A", "F", kbps(10), "cap-req")
    assert cap_req.labels(st) == ["C4", "C6"]
    assert cap_req.true_cost == 90.0
    # C1 (v_bw 8) and C5 (v_bw 4) cannot carry 10 Gbps
    assert cag.v_bw((REAL, "C1")) == kbps(8)
    assert cag.v_bw((REAL, "C5")) == kbps(4)
    rel_req = cag.min_cost_path("A", "F", kbps(10), "relaxed-req")
    assert rel_req.weighted_cost == 30.0 <= cap_req.weighted_cost


def _exhaustive_req_view(worked):
    """Every simple Source-Destination path over the req-view vertices."""
    st = worked.state
    cag = Cag(st, 1.0, "zero")
    bw = kbps(10)
    keep = [v for v in cag.vertices if cag.v_bw(v) >= bw]
    best = None

    def walk(path, cost):
        nonlocal best
        last = path[-1]
        if "F" in cag.vertices[last]:
            if best is None or cost < best[0]:
                best = (cost, tuple(path))
        for v in keep:
            if v not in path and cag.vertices[v] & cag.vertices[last]:
                walk(path + [v], cost + cag.weight(v, bw))

    for v in keep:
        if "A" in cag.vertices[v]:
            walk([v], cag.weight(v, bw))
    return best


def test_req_view_exhaustive_oracle(worked):
    cost, path = _exhaustive_req_view(worked)
    assert cost == 90.0
    assert [label(worked.state, v) for v in path] == ["C4", "C6"]


def test_mean_rate_dummy_weight(worked):
    st = worked.state
    cag = Cag(st, 1.0, "mean-rate")
    assert cag.free_rate() == (30 + 1) / 2
    assert cag.weight((DUMMY, st.topology.link_index(("E", "F"))), kbps(5)) == 15.5 * 5
    # the dummy now weighs 77.5, so C4-C6 (45) beats C1-Free(E,F) (92.5)
    p = cag.min_cost_path("A", "F", kbps(5), "cap-min")
    assert p.labels(st) == ["C4", "C6"] and p.weighted_cost == 45.0
    # true cost never charges dummies
    cag.free_policy = "zero"
    q = cag.min_cost_path("A", "F", kbps(5), "cap-min")
    cag.free_policy = "mean-rate"
    heavy = cag.min_cost_path("A", "F", kbps(5), "relaxed-min")
    assert q.true_cost == 15.0 and heavy.weighted_cost == 45.0


def test_tie_break_fewer_vertices_then_ids():
    # two zero-cost routes: direct dummy a-c, or a-b, b-c
    topo = Topology(list("abc"), [("a", "b", 10.0), ("b", "c", 10.0), ("a", "c", 10.0)])
    st = NetworkState(topo)
    cag = Cag(st, 1.0, "zero")
    p = cag.min_cost_path("a", "c", kbps(1), "relaxed-min")
    assert p.vertices == ((DUMMY, 2),)
    topo = Topology(list("abcd"), [("a", "b", 10.0), ("b", "d", 10.0), ("a", "c", 10.0), ("c", "d", 10.0)])
    cag = Cag(NetworkState(topo), 1.0, "zero")
    p = cag.min_cost_path("a", "d", kbps(1), "relaxed-min")
    assert p.vertices == ((DUMMY, 0), (DUMMY, 1))


def test_events_examples(worked):
    st = worked.state
    cag = Cag(st, 1.0, "zero")
    ef = (DUMMY, st.topology.link_index(("E", "F")))
    conn = Connection("N", st.topology.path("EF"), kbps(20), kbps(10), kbps(20), unit_value=2.0)
    st.allocate(conn)
    assert (REAL, "N") in cag and ef not in cag
    st.release("N")
    assert (REAL, "N") not in cag and ef in cag
    st.throttle("C1", kbps(15))
    # the four links of C1 now have spare capacity
    assert {label(st, v) for v in cag.vertices if v[0] == DUMMY} == {
        "Free(A,B)", "Free(B,C)", "Free(C,D)", "Free(D,E)", "Free(E,F)"}
    assert cag.v_bw((REAL, "C1")) == kbps(8)  # 5 free + 3 still degradable
    sig = cag.signature()
    w = cag.weight((REAL, "C1"), kbps(5))
    st.throttle("C1", kbps(14))
    assert cag.signature() == sig
    assert cag.v_bw((REAL, "C1")) == kbps(8)
    assert cag.degradable((REAL, "C1")) == kbps(2)
    assert cag.weight((REAL, "C1"), kbps(5)) == w
    assert cag.min_cost_path("A", "F", kbps(5), "cap-min").true_cost == 0.0
    st.throttle("C1", kbps(12))
    assert (REAL, "C1") not in cag


def test_apply_event_unknown_connection(worked):
    st = worked.state
    cag = Cag(st, 1.0, "zero", subscribe=False)
    ghost = Connection("ghost", st.topology.path("EF"), kbps(1), kbps(1), kbps(1))
    with pytest.raises(UnknownConnectionError):
        cag.apply_event(ConnectionAdded(ghost))


def random_event(rng, state, nid):
    live = list(state.connections.values())
    op = rng.random()
    if op < 0.35 or not live:
        return try_allocate(rng, state, nid) is not None
    if op < 0.55:
        state.release(rng.choice(live).id)
    elif op < 0.75:
        c = rng.choice(live)
        if c.cur > c.min:
            state.throttle(c.id, rng.randint(c.min, c.cur - 1))
    elif op < 0.95:
        c = rng.choice(live)
        top = min(c.req, c.cur + state.path_free(c.path))
        if top > c.cur:
            state.upgrade(c.id, rng.randint(c.cur + 1, top))
    else:
        l = rng.randrange(len(state.capacity))
        state.set_capacity(l, max(state.used[l], state.capacity[l] + rng.randint(-5, 5) * 10**6) / 1e6)
    return True


def check_cag_laws(state, cag, rng, queries=2):
    fresh = Cag(state, cag.horizon, cag.free_policy, subscribe=False)
    assert cag.signature() == fresh.signature()
    assert cag.edges() == fresh.edges()
    n_deg = sum(1 for c in state.connections.values() if c.cur > c.min)
    e_free = sum(1 for l in range(len(state.used)) if state.free(l) > 0)
    assert len(cag) == n_deg + e_free
    edges = cag.edges()
    assert all((b, a) in edges for a, b in edges)
    rate = cag.free_rate()
    for v in cag.vertices:
        assert cag.weight(v, 10**6, rate) == fresh.weight(v, 10**6, rate)
    out = []
    for _ in range(queries):
        s, t = rng.sample(state.topology.nodes, 2)
        bw = rng.randint(1, 15) * 10**6
        for mode in ("min", "req"):
            rel = cag.min_cost_path(s, t, bw, f"relaxed-{mode}")
            cap = cag.min_cost_path(s, t, bw, f"cap-{mode}")
            if cap is not None:
                assert rel is not None
                assert rel.weighted_cost <= cap.weighted_cost + 1e-9
            out.append((s, t, bw, cap))
    return out


@pytest.mark.parametrize("policy", ["zero", "mean-rate"])
def test_incremental_equals_rebuild_fuzz(policy):
    rng = random.Random(11 if policy == "zero" else 12)
    topo = random_topology(rng, 8, 13)
    state = NetworkState(topo)
    cag = Cag(state, 1.0, policy)
    nid = 0
    for _ in range(1200):
        if random_event(rng, state, nid):
            nid += 1
        check_cag_laws(state, cag, rng, queries=1)


def test_capacitated_path_opens_physical_path():
    rng = random.Random(5)
    checked = 0
    for trial in range(300):
        topo = random_topology(rng, 7, 11)
        state = NetworkState(topo)
        for i in range(12):
            try_allocate(rng, state, i)
        cag = Cag(state, 1.0, rng.choice(["zero", "mean-rate"]))
        s, t = rng.sample(topo.nodes, 2)
        bw = rng.randint(1, 12) * 10**6
        p = cag.min_cost_path(s, t, bw, "cap-min")
        if p is None:
            continue
        before = state.snapshot()
        ctx = Context.fresh(state, 1.0)
        req = Request("new", s, t, bw, bw, "", 1.0, 0.0)
        conn = execute(ctx, req, CandidateSet(p.members, "min", bw, p.true_cost))
        assert conn.cur == bw
        state.check()
        checked += 1
        assert before != state.snapshot()
    assert checked > 50
