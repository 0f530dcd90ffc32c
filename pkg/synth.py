"""
Synthetic multilayer networks for demos and tests.

`planted` networks have a ground-truth community per node, shared by every
multiplex: layers are stochastic block models and bipartite edges mostly join
nodes of the same community. `random` networks use uniform (Erdos-Renyi style)
layers and bipartites. In both, `overlap` is the share of nodes of every
multiplex that take part in bipartite networks.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from itertools import combinations
from pathlib import Path
from typing import Literal

import networkx as nx
import numpy as np

import config
from exceptions import ConfigError
from logger import get_logger
from network import BipartiteNetwork, Layer, MultilayerNetwork, MultiplexNetwork, NodeTable
from run_config import write_network
from supra_builder import RwrConfig

logger = get_logger()

SynthKind = Literal["planted", "random"]


@dataclass(frozen=True)
class SynthSpec:
    kind: SynthKind = "planted"
    multiplexes: int = 3
    layers: int = 2
    nodes: int = 60
    communities: int = 3
    p_in: float = 0.3
    p_out: float = 0.01
    bipartite_p_in: float = 0.1
    bipartite_p_out: float = 0.0
    edges: int = 200
    bipartite_edges: int = 100
    overlap: float = 1.0
    seeds: int = 3
    seed: int = config.DEFAULT_RNG_SEED

    def check(self) -> None:
        if self.kind not in ("planted", "random"):
            raise ConfigError(f"unknown synthetic network kind {self.kind!r}")
        for name in ("multiplexes", "layers", "nodes", "communities", "seeds"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.edges < 0 or self.bipartite_edges < 0:
            raise ConfigError("edge counts must be nonnegative")
        for name in ("p_in", "p_out", "bipartite_p_in", "bipartite_p_out", "overlap"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.communities > self.nodes:
            raise ConfigError("more communities than nodes")

    def community_sizes(self) -> list[int]:
        base, extra = divmod(self.nodes, self.communities)
        return [base + (1 if c < extra else 0) for c in range(self.communities)]

    def labels(self) -> np.ndarray:
        return np.repeat(np.arange(self.communities), self.community_sizes())


def _multiplex_name(k: int) -> str:
    return f"m{k + 1}"


def _node_names(k: int, count: int) -> list[str]:
    width = len(str(count - 1))
    return [f"{_multiplex_name(k)}_{i:0{width}d}" for i in range(count)]


def _planted_layer(spec: SynthSpec, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    sizes = spec.community_sizes()
    probabilities = [
        [spec.p_in if a == b else spec.p_out for b in range(len(sizes))] for a in range(len(sizes))
    ]
    graph = nx.stochastic_block_model(sizes, probabilities, seed=int(rng.integers(2**31)))
    edges = np.array(sorted(graph.edges()), dtype=np.int64).reshape(-1, 2)
    return edges[:, 0], edges[:, 1]


def _random_layer(spec: SynthSpec, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    source = rng.integers(spec.nodes, size=spec.edges)
    target = rng.integers(spec.nodes, size=spec.edges)
    keep = source != target
    return source[keep], target[keep]


def _covered(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    count = int(round(spec.overlap * spec.nodes))
    mask = np.zeros(spec.nodes, dtype=bool)
    mask[rng.permutation(spec.nodes)[:count]] = True
    return mask


def _bipartite_edges(
    spec: SynthSpec,
    rng: np.random.Generator,
    covered_source: np.ndarray,
    covered_target: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    labels = spec.labels()
    sources = np.flatnonzero(covered_source)
    targets = np.flatnonzero(covered_target)
    if sources.size == 0 or targets.size == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)

    if spec.kind == "planted":
        same = labels[sources][:, None] == labels[targets][None, :]
        probability = np.where(same, spec.bipartite_p_in, spec.bipartite_p_out)
        hits = rng.random(probability.shape) < probability
        rows, cols = np.nonzero(hits)
        source, target = sources[rows], targets[cols]
    else:
        source = sources[rng.integers(sources.size, size=spec.bipartite_edges)]
        target = targets[rng.integers(targets.size, size=spec.bipartite_edges)]

    # Every covered node gets at least one association, within its community when planted.
    extra_source: list[int] = []
    extra_target: list[int] = []
    linked_source = np.zeros(spec.nodes, dtype=bool)
    linked_target = np.zeros(spec.nodes, dtype=bool)
    linked_source[source] = True
    linked_target[target] = True
    for node in sources[~linked_source[sources]]:
        pool = targets[labels[targets] == labels[node]] if spec.kind == "planted" else targets
        pool = pool if pool.size else targets
        extra_source.append(int(node))
        extra_target.append(int(rng.choice(pool)))
    linked_target[extra_target] = True
    for node in targets[~linked_target[targets]]:
        pool = sources[labels[sources] == labels[node]] if spec.kind == "planted" else sources
        pool = pool if pool.size else sources
        extra_source.append(int(rng.choice(pool)))
        extra_target.append(int(node))
    return (
        np.concatenate([source, np.array(extra_source, dtype=np.int64)]),
        np.concatenate([target, np.array(extra_target, dtype=np.int64)]),
    )


def generate(spec: SynthSpec) -> tuple[MultilayerNetwork, list[tuple[str, str]]]:
    """
    Builds the network and a seed list (multiplex name, node name): nodes of
    the first community of the first multiplex when planted, random nodes of
    the first multiplex otherwise.
    """
    spec.check()
    rng = np.random.default_rng(spec.seed)
    multiplexes = []
    for k in range(spec.multiplexes):
        table = NodeTable(_node_names(k, spec.nodes))
        layers = []
        for a in range(spec.layers):
            build = _planted_layer if spec.kind == "planted" else _random_layer
            source, target = build(spec, rng)
            layers.append(Layer.from_edges(source, target, directed=False, name=f"layer{a + 1}"))
        multiplexes.append(
            MultiplexNetwork(
                name=_multiplex_name(k),
                node_table=table,
                layers=tuple(layers),
                delta=config.DEFAULT_DELTA,
                tau=tuple([1.0 / spec.layers] * spec.layers),
            )
        )
    network = MultilayerNetwork(multiplexes=tuple(multiplexes))

    covered = [_covered(spec, rng) for _ in range(spec.multiplexes)]
    for i, j in combinations(range(spec.multiplexes), 2):
        source, target = _bipartite_edges(spec, rng, covered[i], covered[j])
        network = network.with_bipartite(BipartiteNetwork.from_edges(i, j, source, target, directed=False))

    first = network.multiplexes[0]
    if spec.kind == "planted":
        candidates = np.flatnonzero(spec.labels() == 0)
    else:
        candidates = np.arange(spec.nodes)
    chosen = np.sort(rng.choice(candidates, size=min(spec.seeds, candidates.size), replace=False))
    seed_lines = [(first.name, first.node_table.name_of(int(i))) for i in chosen]

    logger.info("Synthetic network generated", extra={**asdict(spec), "edges_total": network.num_edges})
    return network, seed_lines


def write_synthetic(spec: SynthSpec, out_dir: Path) -> Path:
    network, seed_lines = generate(spec)
    return write_network(network, out_dir, rwr=RwrConfig(), seed_lines=seed_lines)
