"""
Random walk with restart over a normalized transition matrix: restart
distribution, steady-state iteration, per-multiplex rankings and subnetwork
extraction.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

import config
from edge_list import resolve_seed_names
from exceptions import ConvergenceError, RestartError, SeedError
from logger import get_logger
from network import MultilayerNetwork
from sparse_kernel import BlockLayout, TransposeOperator
from supra_builder import RwrConfig, TransitionMatrix, normalize

logger = get_logger()


@dataclass(frozen=True)
class SeedSet:
    """Seed node ids per multiplex index (sorted, unique)."""

    ids: Mapping[int, np.ndarray]

    @classmethod
    def from_ids(cls, ids: Mapping[int, Iterable[int]]) -> SeedSet:
        cleaned = {
            int(k): np.unique(np.asarray(list(v), dtype=np.int64))
            for k, v in sorted(ids.items())
        }
        return cls({k: v for k, v in cleaned.items() if v.size})

    @classmethod
    def from_names(
        cls, network: MultilayerNetwork, seeds: list[tuple[str | None, str]]
    ) -> SeedSet:
        return cls(resolve_seed_names(network, seeds))

    @property
    def seeded_multiplexes(self) -> list[int]:
        return sorted(k for k, ids in self.ids.items() if ids.size)

    @property
    def total(self) -> int:
        return sum(int(ids.size) for ids in self.ids.values())

    def of(self, k: int) -> np.ndarray:
        return self.ids.get(k, np.empty(0, dtype=np.int64))

    def names(self, network: MultilayerNetwork) -> list[tuple[str, str]]:
        table = []
        for k in self.seeded_multiplexes:
            multiplex = network.multiplexes[k]
            table.extend((multiplex.name, multiplex.node_table.name_of(int(i))) for i in self.ids[k])
        return table


@dataclass(frozen=True, eq=False)
class RestartVector:
    p0: np.ndarray
    layout: BlockLayout
    eta: np.ndarray


@dataclass(frozen=True, eq=False)
class ScoreResult:
    """
    Steady-state distribution with per-multiplex node scores, the sum of each
    node's replica entries.
    """

    steady: np.ndarray
    scores: tuple[np.ndarray, ...]
    names: tuple[tuple[str, ...], ...]
    iterations: int
    residual: float
    converged: bool
    residuals: tuple[float, ...] = field(default=(), repr=False)

    def scores_of(self, k: int) -> dict[str, float]:
        return {name: float(s) for name, s in zip(self.names[k], self.scores[k], strict=True)}


class RankedNode(NamedTuple):
    name: str
    score: float
    rank: int


class SubnetworkEdge(NamedTuple):
    source: str
    target: str
    weight: float
    context: str


def build_restart(
    network: MultilayerNetwork,
    rwr_config: RwrConfig,
    seeds: SeedSet,
    restrict_eta: bool = False,
) -> RestartVector:
    """
    Places eta_k * tau_kj / |seeds in k| on every replica j of every seed of k.

    Raises:
        SeedError: Seed id outside its multiplex
        RestartError: No seeds, or explicit eta mass on a multiplex without seeds
    """
    network = rwr_config.apply_parameters(network)
    layout = BlockLayout.from_network(network)
    count = network.num_multiplexes
    seeded = seeds.seeded_multiplexes
    if not seeded:
        raise RestartError("restart distribution is undefined without seeds")

    eta = rwr_config.eta_vector(seeded, count, restrict=restrict_eta)
    seedless = [k for k in range(count) if eta[k] > 0 and k not in seeded]
    if seedless:
        names = ", ".join(network.names[k] for k in seedless)
        raise RestartError(f"eta places restart mass on multiplexes without seeds: {names}")
    if eta.sum() <= 0:
        raise RestartError("eta gives no restart mass to any seeded multiplex")

    p0 = np.zeros(layout.dimension, dtype=np.float64)
    for k in seeded:
        ids = seeds.ids[k]
        multiplex = network.multiplexes[k]
        if ids.min() < 0 or ids.max() >= multiplex.n:
            raise SeedError(f"seed id out of range for multiplex {multiplex.name}")
        share = eta[k] / ids.size
        for layer, tau in enumerate(multiplex.tau):
            start = layout.supra_index(k, layer, 0)
            p0[start + ids] = share * tau
    return RestartVector(p0=p0, layout=layout, eta=eta)


def aggregate_replicas(layout: BlockLayout, vector: np.ndarray) -> tuple[np.ndarray, ...]:
    return tuple(block.sum(axis=0) for block in layout.split(vector))


def solve(
    transition: TransitionMatrix,
    restart: RestartVector,
    r: float,
    epsilon: float = config.DEFAULT_EPSILON,
    max_iter: int = config.DEFAULT_MAX_ITER,
    workers: int = 1,
    strict: bool = False,
) -> ScoreResult:
    """
    Iterates p <- (1 - r) S^T p + ((1 - r) * dangling mass + r) p0 from p0
    until the L1 change drops below epsilon.

    A run that exhausts max_iter is returned with `converged=False`.

    Raises:
        ConvergenceError: Non-convergence when `strict` is set
    """
    p0 = restart.p0
    operator = TransposeOperator(transition.matrix, workers=workers)
    dangling = transition.dangling
    walk = 1.0 - r

    p = p0.copy()
    residuals: list[float] = []
    converged = False
    try:
        for _ in range(max_iter):
            lost = float(p[dangling].sum()) if dangling.size else 0.0
            following = walk * operator(p) + (walk * lost + r) * p0
            residual = float(np.abs(following - p).sum())
            residuals.append(residual)
            p = following
            if residual < epsilon:
                converged = True
                break
    finally:
        operator.close()

    iterations = len(residuals)
    residual = residuals[-1] if residuals else 0.0
    if converged:
        logger.debug("RWR converged", extra={"iterations": iterations, "residual": residual})
    else:
        logger.warning(
            "RWR did not converge",
            extra={"iterations": iterations, "residual": residual, "epsilon": epsilon},
        )
        if strict:
            raise ConvergenceError(
                f"no convergence after {iterations} iterations (residual {residual:.3e})",
                residual=residual,
                iterations=iterations,
            )

    return ScoreResult(
        steady=p,
        scores=aggregate_replicas(transition.layout, p),
        names=transition.names,
        iterations=iterations,
        residual=residual,
        converged=converged,
        residuals=tuple(residuals),
    )


def run_rwr(
    network: MultilayerNetwork,
    rwr_config: RwrConfig,
    seeds: SeedSet,
    workers: int = 1,
    transition: TransitionMatrix | None = None,
    restrict_eta: bool = False,
) -> ScoreResult:
    """Normalizes (unless a transition is given), builds the restart and solves."""
    if transition is None:
        transition = normalize(network, rwr_config)
    restart = build_restart(network, rwr_config, seeds, restrict_eta=restrict_eta)
    return solve(
        transition,
        restart,
        rwr_config.r,
        epsilon=rwr_config.epsilon,
        max_iter=rwr_config.max_iter,
        workers=workers,
    )


def rank(result: ScoreResult, multiplex: int, exclude: Iterable[int] = ()) -> list[RankedNode]:
    """Nodes of one multiplex by descending score, ties by ascending name, ranks from 1."""
    excluded = {int(i) for i in exclude}
    names = result.names[multiplex]
    scores = result.scores[multiplex]
    order = sorted(
        (i for i in range(len(names)) if i not in excluded),
        key=lambda i: (-scores[i], names[i]),
    )
    return [
        RankedNode(names[i], float(scores[i]), position)
        for position, i in enumerate(order, start=1)
    ]


def rank_of(
    result: ScoreResult, multiplex: int, node_id: int, exclude: Iterable[int] = ()
) -> tuple[int, int]:
    """
    Returns (rank, pool size) of one node under the ordering of `rank`, without
    sorting the whole multiplex.
    """
    names = np.asarray(result.names[multiplex])
    scores = result.scores[multiplex]
    competing = np.ones(scores.size, dtype=bool)
    excluded = np.unique(np.asarray(list(exclude), dtype=np.int64))
    competing[excluded] = False
    competing[node_id] = True

    score = scores[node_id]
    ahead = (scores > score) | ((scores == score) & (names < names[node_id]))
    position = int(np.count_nonzero(ahead & competing)) + 1
    return position, int(np.count_nonzero(competing))


def extract_subnetwork(
    network: MultilayerNetwork,
    result: ScoreResult,
    k_per_type: int,
    seeds: SeedSet | None = None,
) -> list[SubnetworkEdge]:
    """
    Induced subgraph on the seeds plus the k best non-seed nodes of each
    multiplex, with every layer and bipartite edge among them.
    """
    if k_per_type < 1:
        raise ValueError("k_per_type must be at least 1")
    seeds = seeds or SeedSet({})

    selected: list[np.ndarray] = []
    for k, multiplex in enumerate(network.multiplexes):
        seed_ids = seeds.of(k)
        top = rank(result, k, exclude=seed_ids)[:k_per_type]
        chosen = np.zeros(multiplex.n, dtype=bool)
        chosen[seed_ids] = True
        chosen[[multiplex.node_table.id_of(node.name) for node in top]] = True
        selected.append(chosen)

    edges: list[SubnetworkEdge] = []
    for k, multiplex in enumerate(network.multiplexes):
        names = multiplex.node_table
        chosen = selected[k]
        for a, layer in enumerate(multiplex.layers):
            context = f"{multiplex.name}:{layer.name or f'layer{a + 1}'}"
            keep = chosen[layer.source] & chosen[layer.target]
            for u, v, w in zip(layer.source[keep], layer.target[keep], layer.weight[keep], strict=True):
                edges.append(SubnetworkEdge(names.name_of(int(u)), names.name_of(int(v)), float(w), context))

    for i, j in network.declared_pairs():
        bipartite = network.bipartites[(i, j)]
        source, target = network.multiplexes[i], network.multiplexes[j]
        context = f"{source.name}->{target.name}"
        keep = selected[i][bipartite.source] & selected[j][bipartite.target]
        for u, v, w in zip(bipartite.source[keep], bipartite.target[keep], bipartite.weight[keep], strict=True):
            edges.append(
                SubnetworkEdge(
                    source.node_table.name_of(int(u)), target.node_table.name_of(int(v)), float(w), context
                )
            )

    logger.info(
        "Subnetwork extracted",
        extra={"nodes": int(sum(s.sum() for s in selected)), "edges": len(edges)},
    )
    return edges


def write_ranking(path: Path, ranking: list[RankedNode]) -> None:
    lines = ["node\tscore\trank"]
    lines.extend(f"{node.name}\t{config.format_score(node.score)}\t{node.rank}" for node in ranking)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_subnetwork(path: Path, edges: list[SubnetworkEdge]) -> None:
    lines = ["source\ttarget\tweight\tcontext"]
    lines.extend(f"{e.source}\t{e.target}\t{e.weight!r}\t{e.context}" for e in edges)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
