"""Physical network state: topology, connections, and hop-count routing.

Bandwidth is held internally as integer kbps so that capacity bookkeeping is
exact (a throttle followed by an equal upgrade restores the same integers).
Public helpers :func:`kbps` and :func:`gbps` convert at the boundary.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path as FsPath
from typing import Any, Callable, Hashable, Iterable, Iterator, Optional, Sequence

KBPS_PER_GBPS = 1_000_000


def kbps(gbps_value: float) -> int:
    """Convert Gbps to the internal integer unit."""
    return int(round(gbps_value * KBPS_PER_GBPS))


def gbps(kbps_value: int) -> float:
    return kbps_value / KBPS_PER_GBPS


class NetworkError(Exception):
    """Base class for network-state violations."""


class UnknownLinkError(NetworkError, KeyError):
    pass


class UnknownConnectionError(NetworkError, KeyError):
    pass


class CapacityError(NetworkError):
    """A link would carry more than its capacity."""


class BandwidthError(NetworkError):
    """A connection bandwidth would leave its [B_min, B_req] interval."""


@dataclass(frozen=True)
class Link:
    index: int
    a: str
    b: str
    capacity: int  # kbps

    @property
    def nodes(self) -> tuple[str, str]:
        return (self.a, self.b)

    def __str__(self) -> str:
        return f"{self.a}-{self.b}"


class Topology:
    """Undirected topology with one shared capacity pool per link.

    Node order is significant: it defines the node rank used for
    deterministic tie-breaking between equal-hop paths.
    """

    def __init__(self, nodes: Sequence[str], links: Iterable[tuple[str, str, float]], name: str = ""):
        self.name = name
        self.nodes: list[str] = [str(n) for n in nodes]
        if len(set(self.nodes)) != len(self.nodes):
            raise ValueError("duplicate node identifiers")
        self.rank: dict[str, int] = {n: i for i, n in enumerate(self.nodes)}
        self.links: list[Link] = []
        self._index: dict[tuple[str, str], int] = {}
        self.adj: dict[str, list[tuple[str, int]]] = {n: [] for n in self.nodes}
        for a, b, cap in links:
            a, b = str(a), str(b)
            if a == b:
                raise ValueError(f"self-loop link at node {a}")
            if a not in self.rank or b not in self.rank:
                raise ValueError(f"link {a}-{b} references an unknown node")
            if (a, b) in self._index:
                raise ValueError(f"parallel link {a}-{b}")
            if cap <= 0:
                raise ValueError(f"link {a}-{b} needs positive capacity")
            idx = len(self.links)
            self.links.append(Link(idx, a, b, kbps(cap)))
            self._index[(a, b)] = idx
            self._index[(b, a)] = idx
            self.adj[a].append((b, idx))
            self.adj[b].append((a, idx))
        self._hops: dict[str, dict[str, int]] = {}

    def __repr__(self) -> str:
        return f"Topology({self.name!r}, nodes={len(self.nodes)}, links={len(self.links)})"

    def link_index(self, link: int | tuple[str, str] | Link) -> int:
        if isinstance(link, Link):
            return link.index
        if isinstance(link, int):
            if 0 <= link < len(self.links):
                return link
            raise UnknownLinkError(f"no link with index {link}")
        try:
            return self._index[(str(link[0]), str(link[1]))]
        except (KeyError, IndexError, TypeError):
            raise UnknownLinkError(f"no link {link!r}") from None

    def path(self, nodes: Sequence[str]) -> "Path":
        """Build a validated simple :class:`Path` from a node sequence."""
        nodes = tuple(str(n) for n in nodes)
        if len(nodes) < 2:
            raise ValueError("a path needs at least two nodes")
        if len(set(nodes)) != len(nodes):
            raise ValueError(f"path {'-'.join(nodes)} repeats a node")
        links = []
        for u, v in zip(nodes, nodes[1:]):
            idx = self._index.get((u, v))
            if idx is None:
                raise UnknownLinkError(f"no link {u}-{v}")
            links.append(idx)
        return Path(nodes, tuple(links))

    def hop_distances(self, source: str) -> dict[str, int]:
        """BFS hop distances from ``source`` on the bare topology (cached)."""
        cached = self._hops.get(source)
        if cached is None:
            cached = _bfs(self, source, lambda _idx: True)
            self._hops[source] = cached
        return cached

    def shortest_hops(self, s: str, t: str) -> int:
        d = self.hop_distances(s).get(t)
        if d is None:
            raise ValueError(f"{s} and {t} are disconnected")
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Topology":
        links = [(l["a"], l["b"], float(l["capacity_gbps"])) for l in data["links"]]
        return cls(data["nodes"], links, name=data.get("name", ""))

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "nodes": list(self.nodes),
            "links": [{"a": l.a, "b": l.b, "capacity_gbps": gbps(l.capacity)} for l in self.links],
        }

    def with_capacity(self, capacity_gbps: float) -> "Topology":
        """Copy of this topology with every link set to ``capacity_gbps``."""
        return Topology(self.nodes, [(l.a, l.b, capacity_gbps) for l in self.links], name=self.name)


def load_topology(path: str | FsPath) -> Topology:
    with open(path) as fh:
        return Topology.from_dict(json.load(fh))


def usnet24(capacity_gbps: float | None = None) -> Topology:
    """The bundled 24-node, 42-link US-wide topology."""
    text = resources.files("crunch.data").joinpath("usnet24.json").read_text()
    topo = Topology.from_dict(json.loads(text))
    return topo.with_capacity(capacity_gbps) if capacity_gbps is not None else topo


@dataclass(frozen=True)
class Path:
    nodes: tuple[str, ...]
    links: tuple[int, ...]

    @property
    def hop_length(self) -> int:
        return len(self.links)

    @property
    def source(self) -> str:
        return self.nodes[0]

    @property
    def destination(self) -> str:
        return self.nodes[-1]

    def __str__(self) -> str:
        return "-".join(self.nodes)


@dataclass(eq=False)
class Connection:
    """A live allocation. ``req``/``min``/``cur`` are integer kbps.

    ``unit_value`` is the revenue per Gbit carried ($/Gbit, i.e. the class
    multiplier times the square root of the shortest-path hop length).
    ``revenue_fn`` optionally overrides the linear decision-time revenue.
    """

    id: Hashable
    path: Path
    req: int
    min: int
    cur: int
    service_class: str = ""
    unit_value: float = 0.0
    t_start: float = 0.0
    t_end: float = math.inf
    revenue_fn: Optional[Callable[[float], float]] = None

    @property
    def source(self) -> str:
        return self.path.source

    @property
    def destination(self) -> str:
        return self.path.destination

    @property
    def degradable(self) -> int:
        return self.cur - self.min

    @property
    def b_req(self) -> float:
        return gbps(self.req)

    @property
    def b_min(self) -> float:
        return gbps(self.min)

    @property
    def b_cur(self) -> float:
        return gbps(self.cur)

    def __repr__(self) -> str:
        return (
            f"Connection({self.id!r}, {self.path}, cur={self.b_cur:g}, "
            f"min={self.b_min:g}, req={self.b_req:g})"
        )


# State-change notifications, consumed by the CAG and by metric accumulators.
@dataclass(frozen=True)
class ConnectionAdded:
    conn: Connection


@dataclass(frozen=True)
class ConnectionRemoved:
    conn: Connection


@dataclass(frozen=True)
class BandwidthChanged:
    conn: Connection
    old: int


@dataclass(frozen=True)
class CapacityChanged:
    link: int
    old: int


Event = ConnectionAdded | ConnectionRemoved | BandwidthChanged | CapacityChanged


class NetworkState:
    """Mutable ground truth: live connections and per-link usage."""

    def __init__(self, topology: Topology):
        self.topology = topology
        self.capacity: list[int] = [l.capacity for l in topology.links]
        self.used: list[int] = [0] * len(topology.links)
        self.connections: dict[Hashable, Connection] = {}
        self.on_link: list[set[Hashable]] = [set() for _ in topology.links]
        self._listeners: list[Callable[[Event], None]] = []
        self.version = 0  # bumped on every mutation

    def subscribe(self, listener: Callable[[Event], None]) -> None:
        self._listeners.append(listener)

    def unsubscribe(self, listener: Callable[[Event], None]) -> None:
        self._listeners.remove(listener)

    def _emit(self, event: Event) -> None:
        self.version += 1
        for fn in self._listeners:
            fn(event)

    def free(self, link: int) -> int:
        """Free capacity of link index ``link`` in kbps."""
        return self.capacity[link] - self.used[link]

    def free_capacity(self, link: int | tuple[str, str] | Link) -> float:
        """Free capacity in Gbps; raises :class:`UnknownLinkError`."""
        idx = self.topology.link_index(link)
        return gbps(self.capacity[idx] - self.used[idx])

    def path_free(self, path: Path) -> int:
        return min(self.capacity[l] - self.used[l] for l in path.links)

    def get(self, conn_id: Hashable) -> Connection:
        try:
            return self.connections[conn_id]
        except KeyError:
            raise UnknownConnectionError(f"no live connection {conn_id!r}") from None

    def __contains__(self, conn_id: Hashable) -> bool:
        return conn_id in self.connections

    def __iter__(self) -> Iterator[Connection]:
        return iter(self.connections.values())

    def __len__(self) -> int:
        return len(self.connections)

    def _name(self, link: int) -> str:
        return str(self.topology.links[link])

    def allocate(self, conn: Connection) -> None:
        if conn.id in self.connections:
            raise NetworkError(f"connection {conn.id!r} already live")
        if not 0 < conn.min <= conn.cur <= conn.req:
            raise BandwidthError(
                f"connection {conn.id!r} needs 0 < B_min <= B_cur <= B_req "
                f"(got {conn.b_min:g}, {conn.b_cur:g}, {conn.b_req:g})"
            )
        for l in conn.path.links:
            if self.capacity[l] - self.used[l] < conn.cur:
                raise CapacityError(
                    f"link {self._name(l)} has {gbps(self.free(l)):g} Gbps free, "
                    f"{conn.b_cur:g} needed by {conn.id!r}"
                )
        for l in conn.path.links:
            self.used[l] += conn.cur
            self.on_link[l].add(conn.id)
        self.connections[conn.id] = conn
        self._emit(ConnectionAdded(conn))

    def release(self, conn_id: Hashable) -> Connection:
        conn = self.get(conn_id)
        for l in conn.path.links:
            self.used[l] -= conn.cur
            self.on_link[l].discard(conn_id)
        del self.connections[conn_id]
        self._emit(ConnectionRemoved(conn))
        return conn

    def throttle(self, conn_id: Hashable, new_bw: int) -> None:
        """Reduce a connection to ``new_bw`` kbps (B_min <= new_bw < B_cur)."""
        conn = self.get(conn_id)
        if not conn.min <= new_bw < conn.cur:
            raise BandwidthError(
                f"throttle of {conn_id!r} to {gbps(new_bw):g} Gbps outside "
                f"[B_min={conn.b_min:g}, B_cur={conn.b_cur:g})"
            )
        self._set_bw(conn, new_bw)

    def upgrade(self, conn_id: Hashable, new_bw: int) -> None:
        """Raise a connection to ``new_bw`` kbps (B_cur < new_bw <= B_req)."""
        conn = self.get(conn_id)
        if not conn.cur < new_bw <= conn.req:
            raise BandwidthError(
                f"upgrade of {conn_id!r} to {gbps(new_bw):g} Gbps outside "
                f"(B_cur={conn.b_cur:g}, B_req={conn.b_req:g}]"
            )
        extra = new_bw - conn.cur
        for l in conn.path.links:
            if self.capacity[l] - self.used[l] < extra:
                raise CapacityError(
                    f"link {self._name(l)} has {gbps(self.free(l)):g} Gbps free, "
                    f"upgrade of {conn_id!r} needs {gbps(extra):g}"
                )
        self._set_bw(conn, new_bw)

    def _set_bw(self, conn: Connection, new_bw: int) -> None:
        old = conn.cur
        delta = new_bw - old
        for l in conn.path.links:
            self.used[l] += delta
        conn.cur = new_bw
        self._emit(BandwidthChanged(conn, old))

    def set_capacity(self, link: int | tuple[str, str], capacity_gbps: float) -> None:
        """Override one link's capacity (hook for failure-style events)."""
        idx = self.topology.link_index(link)
        new = kbps(capacity_gbps)
        if new < self.used[idx]:
            raise CapacityError(
                f"link {self._name(idx)} carries {gbps(self.used[idx]):g} Gbps, "
                f"cannot shrink to {capacity_gbps:g}"
            )
        old = self.capacity[idx]
        self.capacity[idx] = new
        self._emit(CapacityChanged(idx, old))

    def check(self) -> None:
        """Assert every state invariant exactly; raises AssertionError."""
        sums = [0] * len(self.used)
        members: list[set[Hashable]] = [set() for _ in self.used]
        for conn in self.connections.values():
            assert 0 < conn.min <= conn.cur <= conn.req, f"{conn!r} outside its interval"
            for l in conn.path.links:
                sums[l] += conn.cur
                members[l].add(conn.id)
        assert sums == self.used, "per-link usage drifted from connection sum"
        assert members == self.on_link, "link index out of sync"
        for l, (u, c) in enumerate(zip(self.used, self.capacity)):
            assert u <= c, f"link {self._name(l)} over capacity"

    def snapshot(self) -> bytes:
        """Canonical byte encoding of the state (for exact round-trip checks)."""
        conns = sorted(
            ([repr(c.id), list(c.path.nodes), c.req, c.min, c.cur] for c in self.connections.values()),
            key=lambda row: row[0],
        )
        return json.dumps({"cap": self.capacity, "used": self.used, "conns": conns}).encode()


def _bfs(topology: Topology, source: str, usable: Callable[[int], bool]) -> dict[str, int]:
    dist = {source: 0}
    queue = deque([source])
    adj = topology.adj
    while queue:
        u = queue.popleft()
        du = dist[u] + 1
        for v, idx in adj[u]:
            if v not in dist and usable(idx):
                dist[v] = du
                queue.append(v)
    return dist


def _walk(topology: Topology, s: str, t: str, dist_to_t: dict[str, int], usable: Callable[[int], bool]) -> Path:
    # Greedy descent on distance-to-t, preferring the highest-ranked neighbour:
    # yields the tie-preferred path among all minimum-hop paths.
    rank = topology.rank
    nodes = [s]
    links = []
    u = s
    while u != t:
        want = dist_to_t[u] - 1
        best = None
        for v, idx in topology.adj[u]:
            if dist_to_t.get(v) == want and usable(idx):
                if best is None or rank[v] > rank[best[0]]:
                    best = (v, idx)
        assert best is not None
        u = best[0]
        nodes.append(u)
        links.append(best[1])
    return Path(tuple(nodes), tuple(links))


def tie_key(topology: Topology, path: Path) -> tuple:
    """Sort key: fewer hops first, then the lexicographically greatest node-rank sequence."""
    rank = topology.rank
    return (len(path.links), tuple(-rank[n] for n in path.nodes))


def capacitated_shortest_path(state: NetworkState, s: str, t: str, bw: int) -> Optional[Path]:
    """Minimum-hop path whose links all have at least ``bw`` kbps free."""
    if s == t:
        raise ValueError("source equals destination")
    if bw <= 0:
        raise ValueError("bandwidth must be positive")
    cap, used = state.capacity, state.used

    def usable(idx: int) -> bool:
        return cap[idx] - used[idx] >= bw

    dist = _bfs(state.topology, t, usable)
    if s not in dist:
        return None
    return _walk(state.topology, s, t, dist, usable)


def _simple_paths_within(topology: Topology, s: str, t: str, max_hops: int) -> list[Path]:
    dist_t = topology.hop_distances(t)
    out: list[Path] = []
    nodes = [s]
    links: list[int] = []
    on_path = {s}

    def dfs(u: str) -> None:
        if u == t:
            out.append(Path(tuple(nodes), tuple(links)))
            return
        budget = max_hops - len(links) - 1
        for v, idx in topology.adj[u]:
            if v in on_path:
                continue
            d = dist_t.get(v)
            if d is None or d > budget:
                continue
            on_path.add(v)
            nodes.append(v)
            links.append(idx)
            dfs(v)
            links.pop()
            nodes.pop()
            on_path.discard(v)

    dfs(s)
    out.sort(key=lambda p: tie_key(topology, p))
    return out


def k_shortest_paths(topology: Topology, s: str, t: str, k: int) -> list[Path]:
    """Up to ``k`` loopless paths in (hop count, tie rule) order.

    Paths are enumerated exhaustively by a depth-bounded search whose bound
    grows until ``k`` paths are found, which gives the same set as Yen's
    algorithm on a hop metric but with an exact, total tie order.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if s == t:
        raise ValueError("source equals destination")
    d = topology.hop_distances(s).get(t)
    if d is None:
        return []
    limit = d
    n = len(topology.nodes)
    while True:
        paths = _simple_paths_within(topology, s, t, limit)
        if len(paths) >= k or limit >= n - 1:
            return paths[:k]
        limit += 1


@dataclass
class Router:
    """Per-topology route cache shared by all runs on the same topology.

    ``near`` holds, for each pair, every simple path of at most
    ``shortest + slack`` hops in tie order; normal allocation scans it before
    falling back to a capacitated BFS, with identical results.
    """

    topology: Topology
    slack: int = 2
    _near: dict[tuple[str, str], list[Path]] = field(default_factory=dict)
    _ksp: dict[tuple[str, str], list[Path]] = field(default_factory=dict)

    def k_shortest(self, s: str, t: str, k: int) -> list[Path]:
        key = (s, t)
        cached = self._ksp.get(key)
        if cached is None or (len(cached) < k and not getattr(cached, "complete", False)):
            found = k_shortest_paths(self.topology, s, t, max(k, len(cached or ())))
            found = _PathList(found)
            found.complete = len(found) < k
            self._ksp[key] = cached = found
        return list(cached[:k])

    def near(self, s: str, t: str) -> list[Path]:
        key = (s, t)
        paths = self._near.get(key)
        if paths is None:
            d = self.topology.hop_distances(s).get(t)
            paths = [] if d is None else _simple_paths_within(self.topology, s, t, d + self.slack)
            self._near[key] = paths
        return paths

    def fit(self, state: NetworkState, s: str, t: str, bw: int) -> Optional[Path]:
        """Same result as :func:`capacitated_shortest_path`, faster when it fits."""
        cap, used = state.capacity, state.used
        for p in self.near(s, t):
            for l in p.links:
                if cap[l] - used[l] < bw:
                    break
            else:
                return p
        return capacitated_shortest_path(state, s, t, bw)


class _PathList(list):
    complete: bool = False
