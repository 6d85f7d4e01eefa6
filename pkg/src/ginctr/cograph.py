"""Undirected weighted co-occurrence graph over items.

Edge weight counts how often two items were clicked within ``window``
positions of each other inside one session. Neighbor lists are kept sorted
by weight descending, then item id ascending, so Top-N selection is a prefix
and fully deterministic.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence, TextIO

from .clicklog import Session

MAGIC = "GINGRAPH"
VERSION = "v1"


class GraphFormatError(ValueError):
    """Raised when a graph file cannot be loaded."""


def _neighbor_key(entry: tuple[str, int]):
    return (-entry[1], entry[0])


@dataclass(frozen=True)
class CoGraph:
    nodes: frozenset[str]
    adjacency: Mapping[str, tuple[tuple[str, int], ...]]

    @classmethod
    def from_edges(cls, edges: Mapping[tuple[str, str], int]) -> "CoGraph":
        """Build from canonical ``(u, v) -> weight`` pairs with ``u < v``."""
        adj: dict[str, list[tuple[str, int]]] = {}
        for (u, v), w in edges.items():
            if u == v:
                raise ValueError(f"self-loop on {u!r}")
            if w < 1:
                raise ValueError(f"edge {u}-{v} has weight {w} < 1")
            adj.setdefault(u, []).append((v, w))
            adj.setdefault(v, []).append((u, w))
        frozen = {u: tuple(sorted(nbrs, key=_neighbor_key)) for u, nbrs in adj.items()}
        return cls(frozenset(frozen), frozen)

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    def edges(self) -> list[tuple[str, str, int]]:
        """Undirected edges as ``(src, dst, weight)`` with ``src < dst``, sorted."""
        out = [(u, v, w) for u, nbrs in self.adjacency.items() for v, w in nbrs if u < v]
        out.sort()
        return out

    @property
    def num_edges(self) -> int:
        return sum(len(nbrs) for nbrs in self.adjacency.values()) // 2

    def weight(self, u: str, v: str) -> int:
        for x, w in self.adjacency.get(u, ()):
            if x == v:
                return w
        return 0

    def degree(self, u: str) -> int:
        return len(self.adjacency.get(u, ()))


def count_cooccurrences(sessions: Iterable[Session | Sequence[str]], window: int = 1) -> Counter:
    """Window co-occurrence counts keyed by ``(u, v)`` with ``u < v``."""
    if window < 1:
        raise ValueError("window must be >= 1")
    counts: Counter = Counter()
    for sess in sessions:
        items = sess.items if isinstance(sess, Session) else list(sess)
        for i, u in enumerate(items):
            for j in range(max(0, i - window), i):
                v = items[j]
                if u == v:
                    continue
                counts[(u, v) if u < v else (v, u)] += 1
    return counts


def build_graph(sessions: Iterable[Session | Sequence[str]], window: int = 1) -> CoGraph:
    """Co-occurrence graph from sessions (or plain item-id sequences).

    Nodes are the endpoints of edges; an item that never co-occurs with
    another is simply absent and diffuses to itself only.
    """
    return CoGraph.from_edges(count_cooccurrences(sessions, window))


def neighbors_topn(g: CoGraph, u: str, n: int) -> list[tuple[str, int]]:
    if n < 1:
        raise ValueError("n must be >= 1")
    return list(g.adjacency.get(u, ())[:n])


NeighborSelect = Callable[[str], Sequence[str]]


def topn_selector(g: CoGraph, n: int) -> NeighborSelect:
    if n < 1:
        raise ValueError("n must be >= 1")
    return lambda u: [v for v, _ in g.adjacency.get(u, ())[:n]]


@dataclass(frozen=True)
class DiffusionLayers:
    """Nested frontiers of a multi-hop neighbor expansion.

    ``layers[0]`` is the seed set S^(K) and ``layers[-1]`` is S^(0).
    ``neighbor_map[k]`` maps every ``v`` in S^(k) to its selected neighbors,
    for ``k = K .. 1``.
    """

    depth: int
    layers: tuple[frozenset[str], ...]
    neighbor_map: Mapping[int, Mapping[str, tuple[str, ...]]] = field(default_factory=dict)

    def frontier(self, k: int) -> frozenset[str]:
        """S^(k)."""
        return self.layers[self.depth - k]


def diffuse(
    g: CoGraph,
    seeds: Sequence[str],
    depth: int,
    n: int = 10,
    select: NeighborSelect | None = None,
) -> DiffusionLayers:
    """Expand ``seeds`` over ``depth`` hops of Top-N neighbors.

    ``select`` overrides the neighbor-select function; by default it is the
    Top-N prefix of each adjacency list.
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if not seeds:
        raise ValueError("seeds must be non-empty")
    select = select or topn_selector(g, n)
    current = frozenset(seeds)
    layers = [current]
    neighbor_map = {}
    for k in range(depth, 0, -1):
        picked = {v: tuple(select(v)) for v in sorted(current)}
        neighbor_map[k] = picked
        nxt = set(current)
        for nbrs in picked.values():
            nxt.update(nbrs)
        current = frozenset(nxt)
        layers.append(current)
    return DiffusionLayers(depth, tuple(layers), neighbor_map)


def write_graph(g: CoGraph, sink: TextIO) -> None:
    edges = g.edges()
    sink.write(f"{MAGIC} {VERSION} {g.num_nodes} {len(edges)}\n")
    for u, v, w in edges:
        sink.write(f"{u}\t{v}\t{w}\n")


def save_graph(g: CoGraph, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        write_graph(g, fh)


def read_graph(source: Iterable[str]) -> CoGraph:
    """Parse the text graph format; the loader symmetrizes edges into adjacency."""
    it = iter(source)
    header = next(it, None)
    if header is None:
        raise GraphFormatError("line 1: empty file")
    parts = header.split()
    if len(parts) != 4 or parts[0] != MAGIC or parts[1] != VERSION:
        raise GraphFormatError(f"line 1: bad header {header.strip()!r}")
    try:
        num_nodes, num_edges = int(parts[2]), int(parts[3])
    except ValueError:
        raise GraphFormatError(f"line 1: bad counts in header {header.strip()!r}") from None
    edges: dict[tuple[str, str], int] = {}
    prev = None
    for lineno, raw in enumerate(it, start=2):
        line = raw.rstrip("\r\n")
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise GraphFormatError(f"line {lineno}: expected 3 fields")
        u, v, w_txt = fields
        if not u < v:
            raise GraphFormatError(f"line {lineno}: src {u!r} must sort before dst {v!r}")
        try:
            w = int(w_txt)
        except ValueError:
            raise GraphFormatError(f"line {lineno}: non-integer weight {w_txt!r}") from None
        if w < 1:
            raise GraphFormatError(f"line {lineno}: weight {w} < 1")
        if (u, v) in edges:
            raise GraphFormatError(f"line {lineno}: duplicate edge {u}-{v}")
        if prev is not None and (u, v) < prev:
            raise GraphFormatError(f"line {lineno}: edges not sorted")
        prev = (u, v)
        edges[(u, v)] = w
    if len(edges) != num_edges:
        raise GraphFormatError(f"header declares {num_edges} edges, found {len(edges)}")
    g = CoGraph.from_edges(edges)
    if g.num_nodes != num_nodes:
        raise GraphFormatError(f"header declares {num_nodes} nodes, edges reference {g.num_nodes}")
    return g


def load_graph(path) -> CoGraph:
    with open(path, encoding="utf-8") as fh:
        return read_graph(fh)
