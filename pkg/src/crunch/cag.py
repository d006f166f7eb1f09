"""Connection Adjacency Graph (CAG).

Vertices stand for degradable live connections and for links with spare
capacity ("dummies"). Two vertices are adjacent when their physical node sets
intersect. The graph is kept in sync with a :class:`NetworkState` through its
change events; weights and capacity filters depend on the current bandwidths
and are evaluated at query time, so only the vertex set and a node index are
stored. Terminals are attached per query.

Vertex ids are ``(0, connection_id)`` for connections and ``(1, link_index)``
for dummies, which also fixes the deterministic tie order.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Hashable, Iterator, Optional

from .net import (
    BandwidthChanged,
    CapacityChanged,
    Connection,
    ConnectionAdded,
    ConnectionRemoved,
    NetworkState,
    UnknownConnectionError,
    gbps,
)
from .pricing import revenue, shed_cost

REAL = 0
DUMMY = 1

VIEWS = ("relaxed-min", "relaxed-req", "cap-min", "cap-req")
FREE_POLICIES = ("zero", "mean-rate")

VertexId = tuple[int, Hashable]


@dataclass(frozen=True)
class CagPath:
    vertices: tuple[VertexId, ...]
    bw: int  # kbps
    weighted_cost: float
    true_cost: float
    members: tuple[tuple[Hashable, int], ...]  # (connection id, kbps to shed)

    def labels(self, state: NetworkState) -> list[str]:
        return [vertex_label(state, v) for v in self.vertices]


def _vkey(vid: VertexId) -> tuple:
    # ids may mix ints and strings; order numbers before names
    kind, key = vid
    return (kind, 0, key, "") if isinstance(key, (int, float)) else (kind, 1, 0, str(key))


def vertex_label(state: NetworkState, vid: VertexId) -> str:
    kind, key = vid
    if kind == REAL:
        return str(key)
    link = state.topology.links[key]
    return f"Free({link.a},{link.b})"


class Cag:
    """Persistent CAG bound to one network state."""

    def __init__(self, state: NetworkState, horizon: float = 1.0, free_policy: str = "mean-rate", subscribe: bool = True):
        if free_policy not in FREE_POLICIES:
            raise ValueError(f"unknown free-capacity policy {free_policy!r}")
        self.state = state
        self.horizon = horizon
        self.free_policy = free_policy
        self.vertices: dict[VertexId, frozenset[str]] = {}
        self.by_node: dict[str, set[VertexId]] = {n: set() for n in state.topology.nodes}
        self._link_nodes = [frozenset(l.nodes) for l in state.topology.links]
        self._cache = None
        self.rebuild()
        if subscribe:
            state.subscribe(self.apply_event)

    def detach(self) -> None:
        self.state.unsubscribe(self.apply_event)

    # -- structure ---------------------------------------------------------

    def _add(self, vid: VertexId, nodes: frozenset[str]) -> None:
        self.vertices[vid] = nodes
        for n in nodes:
            self.by_node[n].add(vid)

    def _drop(self, vid: VertexId) -> None:
        nodes = self.vertices.pop(vid, None)
        if nodes is not None:
            for n in nodes:
                self.by_node[n].discard(vid)

    def _sync_conn(self, conn: Connection, live: bool) -> None:
        vid = (REAL, conn.id)
        want = live and conn.cur > conn.min
        if want and vid not in self.vertices:
            self._add(vid, frozenset(conn.path.nodes))
        elif not want and vid in self.vertices:
            self._drop(vid)

    def _sync_link(self, link: int) -> None:
        vid = (DUMMY, link)
        want = self.state.free(link) > 0
        if want and vid not in self.vertices:
            self._add(vid, self._link_nodes[link])
        elif not want and vid in self.vertices:
            self._drop(vid)

    def rebuild(self) -> None:
        self.vertices.clear()
        for s in self.by_node.values():
            s.clear()
        for conn in self.state:
            self._sync_conn(conn, True)
        for l in range(len(self.state.used)):
            self._sync_link(l)

    def apply_event(self, event) -> None:
        state = self.state
        if isinstance(event, ConnectionAdded):
            if event.conn.id not in state:
                raise UnknownConnectionError(f"connection {event.conn.id!r} is not live")
            # The new vertex goes in before exhausted links are pruned.
            self._sync_conn(event.conn, True)
            for l in event.conn.path.links:
                self._sync_link(l)
        elif isinstance(event, ConnectionRemoved):
            if event.conn.id in state:
                raise UnknownConnectionError(f"connection {event.conn.id!r} is still live")
            self._sync_conn(event.conn, False)
            for l in event.conn.path.links:
                self._sync_link(l)
        elif isinstance(event, BandwidthChanged):
            if event.conn.id not in state:
                raise UnknownConnectionError(f"connection {event.conn.id!r} is not live")
            self._sync_conn(event.conn, True)
            for l in event.conn.path.links:
                self._sync_link(l)
        elif isinstance(event, CapacityChanged):
            self._sync_link(event.link)
        else:
            raise TypeError(f"unsupported event {event!r}")

    def __len__(self) -> int:
        return len(self.vertices)

    def __contains__(self, vid: VertexId) -> bool:
        return vid in self.vertices

    def edges(self) -> set[tuple[VertexId, VertexId]]:
        """Directed edge set between non-terminal vertices (both directions)."""
        out = set()
        for members in self.by_node.values():
            for a in members:
                for b in members:
                    if a != b:
                        out.add((a, b))
        return out

    def neighbours(self, vid: VertexId) -> set[VertexId]:
        out: set[VertexId] = set()
        for n in self.vertices[vid]:
            out |= self.by_node[n]
        out.discard(vid)
        return out

    # -- per-query quantities ---------------------------------------------

    def degradable(self, vid: VertexId) -> int:
        kind, key = vid
        if kind == REAL:
            conn = self.state.connections[key]
            return conn.cur - conn.min
        return self.state.free(key)

    def f_min(self, vid: VertexId) -> int:
        """Least free capacity over the vertex's links (0 for dummies)."""
        kind, key = vid
        if kind == DUMMY:
            return 0
        state = self.state
        return min(state.capacity[l] - state.used[l] for l in state.connections[key].path.links)

    def v_bw(self, vid: VertexId) -> int:
        """Bandwidth this vertex can offer once degraded."""
        return self.f_min(vid) + self.degradable(vid)

    def free_rate(self) -> float:
        """Per-Gbit dummy rate under the configured policy."""
        if self.free_policy == "zero":
            return 0.0
        lo = hi = None
        conns = self.state.connections
        for kind, key in self.vertices:
            if kind == REAL:
                uv = conns[key].unit_value
                if lo is None or uv < lo:
                    lo = uv
                if hi is None or uv > hi:
                    hi = uv
        return 0.0 if lo is None else (lo + hi) / 2.0

    def weight(self, vid: VertexId, bw: int, free_rate: float | None = None) -> float:
        """Weight of every edge entering ``vid`` for a request of ``bw`` kbps."""
        kind, key = vid
        if kind == DUMMY:
            rate = self.free_rate() if free_rate is None else free_rate
            return rate * gbps(bw) * self.horizon
        conn = self.state.connections[key]
        if conn.revenue_fn is None:
            return conn.unit_value * gbps(bw) * self.horizon
        low = max(conn.cur - bw, 0)
        return max(revenue(conn, conn.b_cur, self.horizon) - revenue(conn, gbps(low), self.horizon), 0.0)

    def shed_amount(self, vid: VertexId, bw: int) -> int:
        """kbps a member must shed so all of its links reach ``bw`` free."""
        if vid[0] == DUMMY:
            return 0
        return max(0, min(bw - self.f_min(vid), self.degradable(vid)))

    # -- search ------------------------------------------------------------

    def _table(self) -> tuple[float, dict[VertexId, tuple[int, Optional[float]]]]:
        """Per-vertex (v_bw, $ per Gbit or None when non-linear), cached per state version."""
        key = (self.state.version, len(self.vertices), self.free_policy, self.horizon)
        if self._cache is not None and self._cache[0] == key:
            return self._cache[1], self._cache[2]
        state = self.state
        free = [c - u for c, u in zip(state.capacity, state.used)]
        conns = state.connections
        table: dict[VertexId, tuple[int, Optional[float]]] = {}
        rate = self.free_rate()
        h = self.horizon
        for vid in self.vertices:
            kind, key_ = vid
            if kind == REAL:
                conn = conns[key_]
                fmin = min(free[l] for l in conn.path.links)
                per = None if conn.revenue_fn is not None else conn.unit_value * h
                table[vid] = (fmin + conn.cur - conn.min, per)
            else:
                table[vid] = (free[key_], rate * h)
        self._cache = (key, rate, table)
        return rate, table

    def min_cost_path(self, s: str, t: str, bw: int, view: str) -> Optional[CagPath]:
        """Min-cost Source-to-Destination path for a ``bw`` kbps request.

        ``view`` is one of :data:`VIEWS`; the ``cap-*`` views skip vertices
        whose offerable bandwidth is below ``bw``. Ties go to fewer vertices,
        then the lexicographically smallest vertex-id sequence.
        """
        if view not in VIEWS:
            raise ValueError(f"unknown view {view!r}")
        if bw <= 0:
            raise ValueError("bandwidth must be positive")
        if s == t:
            raise ValueError("source equals destination")
        capacitated = view.startswith("cap")
        rate, table = self._table()
        g = gbps(bw)

        # Dijkstra over physical nodes: a label at node x is the best vertex
        # chain whose last vertex covers x. Labels compare as
        # (cost, vertex count, id sequence), which extends consistently.
        best: dict[str, tuple] = {s: (0.0, 0, ())}
        done: set[str] = set()
        used: set[VertexId] = set()
        heap = [(0.0, 0, (), (), s)]
        found = None
        by_node, vertices = self.by_node, self.vertices
        while heap:
            cost, nv, keys, seq, x = heapq.heappop(heap)
            if x in done:
                continue
            done.add(x)
            if x == t:
                found = (cost, nv, seq)
                break
            for vid in by_node[x]:
                if vid in used:
                    continue
                vbw, per = table[vid]
                if capacitated and vbw < bw:
                    continue
                used.add(vid)
                w = per * g if per is not None else self.weight(vid, bw, rate)
                label = (cost + w, nv + 1, keys + (_vkey(vid),))
                for y in vertices[vid]:
                    if y in done:
                        continue
                    cur = best.get(y)
                    if cur is None or label < cur:
                        best[y] = label
                        heapq.heappush(heap, (*label, seq + (vid,), y))
        if found is None:
            return None
        cost, _, seq = found
        members = []
        true_cost = 0.0
        conns = self.state.connections
        for vid in seq:
            if vid[0] == REAL:
                delta = self.shed_amount(vid, bw)
                if delta > 0:
                    members.append((vid[1], delta))
                    true_cost += shed_cost(conns[vid[1]], delta, self.horizon)
        return CagPath(seq, bw, cost, true_cost, tuple(members))

    # -- export ------------------------------------------------------------

    def to_dot(self, s: str, t: str, bw: int, view: str = "relaxed-min") -> str:
        """DOT rendering with Source/Destination terminals and view weights."""
        if s == t:
            raise ValueError("source equals destination")
        capacitated = view.startswith("cap")
        rate = self.free_rate()
        keep = sorted(v for v in self.vertices if not capacitated or self.v_bw(v) >= bw)
        keep_set = set(keep)
        label = {v: vertex_label(self.state, v) for v in keep}
        lines = [f'digraph "CAG {view} {gbps(bw):g}" {{']
        for v in keep:
            nodes = ",".join(sorted(self.vertices[v], key=self.state.topology.rank.get))
            lines.append(f'  "{label[v]}" [nodes="{nodes}"];')
        for v in keep:
            if s in self.vertices[v]:
                lines.append(f'  "Source" -> "{label[v]}" [weight={self.weight(v, bw, rate):g}];')
        for a, b in sorted(self.edges()):
            if a in keep_set and b in keep_set:
                lines.append(f'  "{label[a]}" -> "{label[b]}" [weight={self.weight(b, bw, rate):g}];')
        for v in keep:
            if t in self.vertices[v]:
                lines.append(f'  "{label[v]}" -> "Destination" [weight=0];')
        lines.append("}")
        return "\n".join(lines) + "\n"

    def signature(self) -> tuple:
        """Vertex ids with node sets, for comparing two CAGs."""
        return tuple(sorted((v, tuple(sorted(n))) for v, n in self.vertices.items()))

    def iter_real(self) -> Iterator[Hashable]:
        return (key for kind, key in self.vertices if kind == REAL)
