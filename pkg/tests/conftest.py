import random

import pytest

from crunch.net import Connection, NetworkState, Topology, kbps
from crunch.worked import worked_example


# criterion number -> (passed, detail); filled by test_acceptance, echoed after the run
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def worked():
    return worked_example()


def random_topology(rng: random.Random, n_nodes: int, n_links: int, cap=(5, 30)) -> Topology:
    nodes = [f"n{i}" for i in range(n_nodes)]
    pairs = [(a, b) for i, a in enumerate(nodes) for b in nodes[i + 1:]]
    rng.shuffle(pairs)
    links = [(a, b, float(rng.randint(*cap))) for a, b in pairs[:n_links]]
    return Topology(nodes, links, name="random")


def random_walk_path(rng: random.Random, topo: Topology, max_hops: int = 4):
    """A random simple path, or None."""
    start = rng.choice(topo.nodes)
    nodes = [start]
    for _ in range(rng.randint(1, max_hops)):
        opts = [v for v, _ in topo.adj[nodes[-1]] if v not in nodes]
        if not opts:
            break
        nodes.append(rng.choice(opts))
    return topo.path(nodes) if len(nodes) > 1 else None


def try_allocate(rng: random.Random, state: NetworkState, cid, max_hops: int = 4, degradable: bool = True):
    path = random_walk_path(rng, state.topology, max_hops)
    if path is None:
        return None
    room = state.path_free(path)
    if room <= 0:
        return None
    cur = rng.randint(1, room // 1000) * 1000 if room >= 1000 else room
    if degradable and rng.random() < 0.8:
        low = rng.randint(1, cur) if cur > 1 else 1
    else:
        low = cur
    req = cur + (rng.randint(0, 3) * kbps(1) if rng.random() < 0.3 else 0)
    conn = Connection(cid, path, req=req, min=low, cur=cur, unit_value=float(rng.randint(1, 9)))
    state.allocate(conn)
    return conn


GRID = 10_000  # 0.01 Gbps in kbps


def random_lp_state(rng: random.Random, max_links: int = 4, max_conns: int = 5, step: int = GRID, max_steps: int = 10):
    """A line of links with connections on contiguous stretches; amounts are multiples of ``step``.

    Returns ``(state, path, bw)`` where ``path`` covers the whole line.
    """
    n_links = rng.randint(1, max_links)
    nodes = [f"v{i}" for i in range(n_links + 1)]
    topo = Topology(nodes, [(a, b, 1.0) for a, b in zip(nodes, nodes[1:])], name="line")
    state = NetworkState(topo)
    conns = []
    for i in range(rng.randint(0, max_conns)):
        a = rng.randrange(n_links)
        b = rng.randint(a + 1, n_links)
        cur = rng.randint(1, 20) * step
        low = max(step, cur - rng.randint(0, max_steps) * step)
        conns.append(Connection(f"c{i}", topo.path(nodes[a:b + 1]), req=cur, min=min(low, cur), cur=cur,
                                unit_value=float(rng.randint(1, 9))))
    used = [0] * n_links
    for c in conns:
        for l in c.path.links:
            used[l] += c.cur
    for l in range(n_links):
        state.set_capacity(l, (used[l] + rng.randint(0, 4) * step) / 10**6)
    for c in conns:
        state.allocate(c)
    bw = rng.randint(1, 12) * step
    return state, topo.path(nodes), bw
