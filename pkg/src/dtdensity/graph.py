"""Truncation graph and the NPMLE existence diagnostic.

Vertex ``i`` points to vertex ``j`` when ``x[j]`` lies inside ``[u[i], v[i]]``.
The NPMLE of the distribution function exists and is unique exactly when
this graph is strongly connected; when it is connected but not strongly
connected the NPMLE does not exist.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .model import TruncatedSample


class Status(str, enum.Enum):
    UNIQUE_EXISTS = "UniqueExists"
    DOES_NOT_EXIST = "DoesNotExist"
    DISCONNECTED = "Disconnected"


@dataclass(frozen=True)
class TruncationGraph:
    n: int
    adjacency: tuple  # adjacency[i] is a frozenset of successors of i

    def edges(self):
        for i, succ in enumerate(self.adjacency):
            for j in sorted(succ):
                yield i, j


@dataclass(frozen=True)
class NpmleStatus:
    status: Status
    components: tuple  # each component is a sorted tuple of vertex indices
    connected: bool
    sink_vertex: int | None = None  # a vertex with no edge leaving its component

    @property
    def scc_count(self) -> int:
        return len(self.components)

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "scc_count": self.scc_count,
            "connected": self.connected,
            "components": [list(c) for c in self.components],
            "sink_vertex": self.sink_vertex,
        }


def incidence(sample: TruncatedSample) -> np.ndarray:
    """Boolean matrix ``J[i, j] = u[i] <= x[j] <= v[i]``."""
    x = sample.x[None, :]
    return (sample.u[:, None] <= x) & (x <= sample.v[:, None])


def build_graph(sample: TruncatedSample) -> TruncationGraph:
    J = incidence(sample)
    adjacency = tuple(frozenset(np.flatnonzero(row).tolist()) for row in J)
    return TruncationGraph(sample.n, adjacency)


def strongly_connected_components(n, adjacency) -> list:
    """Tarjan's algorithm, iterative. Components come out in reverse
    topological order of the condensation (sinks first)."""
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack = []
    components = []
    counter = 0

    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, iter(sorted(adjacency[root])))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack[root] = True
        while work:
            node, it = work[-1]
            for succ in it:
                if index[succ] == -1:
                    index[succ] = low[succ] = counter
                    counter += 1
                    stack.append(succ)
                    on_stack[succ] = True
                    work.append((succ, iter(sorted(adjacency[succ]))))
                    break
                if on_stack[succ]:
                    low[node] = min(low[node], index[succ])
            else:
                work.pop()
                if work:
                    parent = work[-1][0]
                    low[parent] = min(low[parent], low[node])
                if low[node] == index[node]:
                    comp = []
                    while True:
                        w = stack.pop()
                        on_stack[w] = False
                        comp.append(w)
                        if w == node:
                            break
                    components.append(tuple(sorted(comp)))
    return components


def _weakly_connected(n, adjacency) -> bool:
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    groups = n
    for i, succ in enumerate(adjacency):
        for j in succ:
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[ri] = rj
                groups -= 1
    return groups == 1


def npmle_status(sample: TruncatedSample) -> NpmleStatus:
    """Classify NPMLE existence from the truncation graph of ``sample``."""
    g = build_graph(sample)
    comps = strongly_connected_components(g.n, g.adjacency)
    connected = _weakly_connected(g.n, g.adjacency)
    if len(comps) == 1:
        return NpmleStatus(Status.UNIQUE_EXISTS, tuple(comps), True)
    # Tarjan emits a sink component first: nothing leaves it.
    sink = comps[0][0]
    status = Status.DOES_NOT_EXIST if connected else Status.DISCONNECTED
    return NpmleStatus(status, tuple(sorted(comps)), connected, sink)
