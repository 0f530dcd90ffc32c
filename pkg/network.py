"""Multiplex, bipartite and multilayer network types."""

from __future__ import annotations

from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, field, replace
from functools import cached_property
from types import MappingProxyType

import numpy as np
import scipy.sparse as sp

from logger import get_logger

logger = get_logger()

Pair = tuple[int, int]


class NodeTable:
    """
    Interns node names into dense 0-based ids for one node type.
    Ids are assigned in first-occurrence order and never change.
    """

    def __init__(self, names: Iterable[str] = ()):
        self._names: list[str] = []
        self._index: dict[str, int] = {}
        for name in names:
            self.intern(name)

    def intern(self, name: str) -> int:
        node_id = self._index.get(name)
        if node_id is None:
            node_id = len(self._names)
            self._names.append(name)
            self._index[name] = node_id
        return node_id

    def get(self, name: str) -> int | None:
        return self._index.get(name)

    def id_of(self, name: str) -> int:
        return self._index[name]

    def name_of(self, node_id: int) -> str:
        return self._names[node_id]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self._names)

    def copy(self) -> NodeTable:
        return NodeTable(self._names)

    def __len__(self) -> int:
        return len(self._names)

    def __contains__(self, name: object) -> bool:
        return name in self._index

    def __iter__(self) -> Iterator[str]:
        return iter(self._names)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, NodeTable) and self._names == other._names

    def __repr__(self) -> str:
        return f"NodeTable({len(self._names)} nodes)"


def _merge_edges(
    source: np.ndarray,
    target: np.ndarray,
    weight: np.ndarray,
    directed: bool,
    sum_weights: bool,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Canonicalizes an edge list: merges duplicate pairs, sorts by (source, target)."""
    source = np.asarray(source, dtype=np.int64)
    target = np.asarray(target, dtype=np.int64)
    weight = np.asarray(weight, dtype=np.float64)
    if source.size == 0:
        return source, target, weight

    if not directed:
        source, target = np.minimum(source, target), np.maximum(source, target)

    width = int(max(source.max(), target.max())) + 1
    keys = source * width + target
    unique_keys, inverse = np.unique(keys, return_inverse=True)
    if sum_weights:
        merged = np.bincount(inverse, weights=weight, minlength=unique_keys.size)
    else:
        merged = np.ones(unique_keys.size, dtype=np.float64)

    keep = merged != 0.0
    if not keep.all():
        logger.debug(f"Dropping {int((~keep).sum())} zero-weight edges")
    unique_keys = unique_keys[keep]
    return unique_keys // width, unique_keys % width, merged[keep]


@dataclass(frozen=True, eq=False)
class Layer:
    """One layer of a multiplex: canonical edge arrays over the multiplex node ids."""

    source: np.ndarray
    target: np.ndarray
    weight: np.ndarray
    directed: bool
    weighted: bool
    name: str = ""

    @classmethod
    def from_edges(
        cls,
        source: Iterable[int],
        target: Iterable[int],
        weight: Iterable[float] | None = None,
        directed: bool = False,
        weighted: bool = False,
        self_loops: str = "keep",
        name: str = "",
    ) -> Layer:
        src = np.fromiter(source, dtype=np.int64)
        dst = np.fromiter(target, dtype=np.int64)
        if weight is None or not weighted:
            w = np.ones(src.size, dtype=np.float64)
        else:
            w = np.fromiter(weight, dtype=np.float64)
        if self_loops == "drop":
            mask = src != dst
            src, dst, w = src[mask], dst[mask], w[mask]
        src, dst, w = _merge_edges(src, dst, w, directed, sum_weights=weighted)
        return cls(src, dst, w, directed=directed, weighted=weighted, name=name)

    @property
    def num_edges(self) -> int:
        return int(self.source.size)

    def edges(self) -> list[tuple[int, int, float]]:
        return [
            (int(u), int(v), float(w))
            for u, v, w in zip(self.source, self.target, self.weight, strict=True)
        ]

    def adjacency(self, n: int) -> sp.csr_matrix:
        """Returns the n x n adjacency; symmetric for undirected layers."""
        src, dst, w = self.source, self.target, self.weight
        if not self.directed:
            off_diagonal = src != dst
            src, dst, w = (
                np.concatenate([src, dst[off_diagonal]]),
                np.concatenate([dst, src[off_diagonal]]),
                np.concatenate([w, w[off_diagonal]]),
            )
        matrix = sp.csr_matrix((w, (src, dst)), shape=(n, n), dtype=np.float64)
        matrix.sum_duplicates()
        matrix.sort_indices()
        return matrix

    def with_self_loops(self, node_ids: np.ndarray) -> Layer:
        loops = np.asarray(node_ids, dtype=np.int64)
        return Layer.from_edges(
            np.concatenate([self.source, loops]),
            np.concatenate([self.target, loops]),
            np.concatenate([self.weight, np.ones(loops.size)]),
            directed=self.directed,
            weighted=self.weighted,
            name=self.name,
        )


@dataclass(frozen=True, eq=False)
class MultiplexNetwork:
    """
    Layers sharing one node set (replica nodes).

    delta is the probability to jump between layers; it is forced to 0 when
    there is a single layer. tau holds the restart probability per layer.
    """

    name: str
    node_table: NodeTable
    layers: tuple[Layer, ...]
    delta: float
    tau: tuple[float, ...]

    @property
    def n(self) -> int:
        return len(self.node_table)

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def size(self) -> int:
        return self.num_layers * self.n

    @property
    def effective_delta(self) -> float:
        return 0.0 if self.num_layers == 1 else float(self.delta)

    @property
    def num_edges(self) -> int:
        return sum(layer.num_edges for layer in self.layers)

    @cached_property
    def adjacencies(self) -> tuple[sp.csr_matrix, ...]:
        return tuple(layer.adjacency(self.n) for layer in self.layers)

    def with_parameters(
        self, delta: float | None = None, tau: tuple[float, ...] | None = None
    ) -> MultiplexNetwork:
        return replace(
            self,
            delta=self.delta if delta is None else float(delta),
            tau=self.tau if tau is None else tuple(float(t) for t in tau),
        )

    def with_new_nodes(self, names: list[str], self_loops: bool = False) -> MultiplexNetwork:
        """Returns a copy extended with fresh nodes, isolated or carrying a self-loop per layer."""
        table = self.node_table.copy()
        new_ids = np.array([table.intern(name) for name in names], dtype=np.int64)
        layers = self.layers
        if self_loops and new_ids.size:
            layers = tuple(layer.with_self_loops(new_ids) for layer in layers)
        return replace(self, node_table=table, layers=layers)


@dataclass(frozen=True, eq=False)
class BipartiteNetwork:
    """
    Typed edges from the nodes of multiplex `source_type` to those of `target_type`.
    For undirected couplings the transpose is materialized as a second network
    flagged `mirror=True`.
    """

    source_type: int
    target_type: int
    source: np.ndarray
    target: np.ndarray
    weight: np.ndarray
    directed: bool
    mirror: bool = False

    @classmethod
    def from_edges(
        cls,
        source_type: int,
        target_type: int,
        source: Iterable[int],
        target: Iterable[int],
        weight: Iterable[float] | None = None,
        directed: bool = False,
        mirror: bool = False,
    ) -> BipartiteNetwork:
        src = np.fromiter(source, dtype=np.int64)
        dst = np.fromiter(target, dtype=np.int64)
        w = (
            np.ones(src.size, dtype=np.float64)
            if weight is None
            else np.fromiter(weight, dtype=np.float64)
        )
        # Endpoints live in different id spaces: always merge as directed pairs.
        src, dst, w = _merge_edges(src, dst, w, directed=True, sum_weights=True)
        return cls(source_type, target_type, src, dst, w, directed=directed, mirror=mirror)

    @property
    def pair(self) -> Pair:
        return (self.source_type, self.target_type)

    @property
    def num_edges(self) -> int:
        return int(self.source.size)

    def edges(self) -> list[tuple[int, int, float]]:
        return [
            (int(u), int(v), float(w))
            for u, v, w in zip(self.source, self.target, self.weight, strict=True)
        ]

    def matrix(self, n_source: int, n_target: int) -> sp.csr_matrix:
        matrix = sp.csr_matrix(
            (self.weight, (self.source, self.target)),
            shape=(n_source, n_target),
            dtype=np.float64,
        )
        matrix.sort_indices()
        return matrix

    def source_nodes(self) -> np.ndarray:
        return np.unique(self.source)

    def transposed(self) -> BipartiteNetwork:
        return BipartiteNetwork.from_edges(
            self.target_type,
            self.source_type,
            self.target,
            self.source,
            self.weight,
            directed=self.directed,
            mirror=not self.mirror,
        )

    def with_edges(
        self, source: np.ndarray, target: np.ndarray, weight: np.ndarray
    ) -> BipartiteNetwork:
        return BipartiteNetwork.from_edges(
            self.source_type,
            self.target_type,
            source,
            target,
            weight,
            directed=self.directed,
            mirror=self.mirror,
        )

    def without_edge(self, source_id: int, target_id: int) -> BipartiteNetwork:
        keep = ~((self.source == source_id) & (self.target == target_id))
        return replace(
            self, source=self.source[keep], target=self.target[keep], weight=self.weight[keep]
        )


@dataclass(frozen=True, eq=False)
class MultilayerNetwork:
    """Multiplex networks coupled by at most one bipartite network per ordered pair."""

    multiplexes: tuple[MultiplexNetwork, ...]
    bipartites: Mapping[Pair, BipartiteNetwork] = field(
        default_factory=lambda: MappingProxyType({})
    )

    def __post_init__(self) -> None:
        object.__setattr__(self, "bipartites", MappingProxyType(dict(self.bipartites)))

    @property
    def num_multiplexes(self) -> int:
        return len(self.multiplexes)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(m.name for m in self.multiplexes)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(m.size for m in self.multiplexes)

    @property
    def dimension(self) -> int:
        return sum(self.sizes)

    @property
    def num_edges(self) -> int:
        intra = sum(m.num_edges for m in self.multiplexes)
        return intra + sum(b.num_edges for b in self.bipartites.values() if not b.mirror)

    def index_of(self, name: str) -> int:
        for k, multiplex in enumerate(self.multiplexes):
            if multiplex.name == name:
                return k
        raise KeyError(name)

    def declared_pairs(self) -> list[Pair]:
        """Bipartite pairs as declared, skipping materialized transposes."""
        return sorted(pair for pair, b in self.bipartites.items() if not b.mirror)

    def partners(self, k: int) -> list[int]:
        return sorted(beta for (alpha, beta) in self.bipartites if alpha == k)

    def with_multiplex(self, k: int, multiplex: MultiplexNetwork) -> MultilayerNetwork:
        multiplexes = list(self.multiplexes)
        multiplexes[k] = multiplex
        return replace(self, multiplexes=tuple(multiplexes))

    def with_bipartite(self, bipartite: BipartiteNetwork) -> MultilayerNetwork:
        """Sets a bipartite network, refreshing the materialized transpose when undirected."""
        bipartites = dict(self.bipartites)
        bipartites[bipartite.pair] = bipartite
        if not bipartite.directed:
            mirrored = bipartite.transposed()
            bipartites[mirrored.pair] = mirrored
        return replace(self, bipartites=bipartites)

    def without_bipartite_edge(self, pair: Pair, source_id: int, target_id: int) -> MultilayerNetwork:
        """Removes one edge; undirected couplings lose both materializations."""
        bipartite = self.bipartites[pair]
        bipartites = dict(self.bipartites)
        bipartites[pair] = bipartite.without_edge(source_id, target_id)
        reverse = (pair[1], pair[0])
        if not bipartite.directed and reverse in bipartites:
            bipartites[reverse] = bipartites[reverse].without_edge(target_id, source_id)
        return replace(self, bipartites=bipartites)

    def with_parameters(
        self,
        delta: Mapping[int, float] | None = None,
        tau: Mapping[int, tuple[float, ...]] | None = None,
    ) -> MultilayerNetwork:
        delta = delta or {}
        tau = tau or {}
        multiplexes = tuple(
            m.with_parameters(delta=delta.get(k), tau=tau.get(k))
            for k, m in enumerate(self.multiplexes)
        )
        return replace(self, multiplexes=multiplexes)


def edge_multiset(network: MultilayerNetwork) -> dict[tuple, float]:
    """Flattens every layer and bipartite edge into a comparable mapping."""
    edges: dict[tuple, float] = {}
    for k, multiplex in enumerate(network.multiplexes):
        for a, layer in enumerate(multiplex.layers):
            for u, v, w in layer.edges():
                edges[("layer", k, a, u, v)] = w
    for pair, bipartite in network.bipartites.items():
        for u, v, w in bipartite.edges():
            edges[("bipartite", *pair, u, v)] = w
    return edges
