"""
Parameter-space exploration: score a grid of walk parameters, compare the
outputs per node type, combine the comparisons into a consensus matrix, and
project and cluster the variants.
"""

from __future__ import annotations

import hashlib
import itertools
from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np
from sklearn.metrics import silhouette_score

import config
from cache_manager import LRUCache, ScoreCache, fingerprint
from exceptions import ConfigError, ExplorationError
from logger import get_logger
from network import MultilayerNetwork
from run_config import RWR_KEYS, parse_rwr, read_yaml
from rwr_engine import ScoreResult, SeedSet, aggregate_replicas, rank, run_rwr
from sparse_kernel import BlockLayout
from supra_builder import RwrConfig, TransitionMatrix, normalize

logger = get_logger()


class Variant(NamedTuple):
    name: str
    config: RwrConfig


@dataclass(frozen=True)
class ParameterGrid:
    variants: tuple[Variant, ...]

    def __post_init__(self) -> None:
        if not self.variants:
            raise ExplorationError("parameter grid is empty")
        names = [variant.name for variant in self.variants]
        duplicates = sorted({name for name in names if names.count(name) > 1})
        if duplicates:
            raise ExplorationError(f"duplicate variant names: {', '.join(duplicates)}")

    @property
    def names(self) -> list[str]:
        return [variant.name for variant in self.variants]

    def __len__(self) -> int:
        return len(self.variants)

    def check(self, network: MultilayerNetwork) -> None:
        for variant in self.variants:
            try:
                variant.config.check(network)
            except ConfigError as e:
                raise ConfigError(f"variant {variant.name}: {e}") from e


def expand_product(product: Mapping[str, Sequence[Any]]) -> list[dict[str, Any]]:
    """Cartesian product of value lists, in key order then value order."""
    keys = list(product)
    for key in keys:
        if key not in RWR_KEYS:
            raise ConfigError(f"product: unknown parameter {key!r}")
        if not isinstance(product[key], list) or not product[key]:
            raise ConfigError(f"product.{key}: expected a nonempty list of values")
    return [dict(zip(keys, values, strict=True)) for values in itertools.product(*(product[k] for k in keys))]


def load_grid(path: Path, network: MultilayerNetwork, base: RwrConfig) -> ParameterGrid:
    """
    Reads named `variants` and a `product` section; omitted keys inherit the
    base configuration. Product variants are named `product<index>`.
    """
    data = read_yaml(Path(path))
    unknown = sorted(set(data) - {"variants", "product"})
    if unknown:
        raise ConfigError(f"{path}: unknown keys {', '.join(unknown)}")

    names = network.names
    variants: list[Variant] = []
    for index, entry in enumerate(data.get("variants") or []):
        if not isinstance(entry, Mapping) or "name" not in entry:
            raise ConfigError(f"variants[{index}]: expected a mapping with a name")
        overrides = {k: v for k, v in entry.items() if k != "name"}
        unknown = sorted(set(overrides) - RWR_KEYS)
        if unknown:
            raise ConfigError(f"variants[{index}]: unknown keys {', '.join(unknown)}")
        variants.append(Variant(str(entry["name"]), parse_rwr(overrides, names, base)))

    product = data.get("product")
    if product:
        if not isinstance(product, Mapping):
            raise ConfigError("product: expected a mapping of parameter to value list")
        combinations = expand_product(product)
        width = len(str(len(combinations)))
        for index, overrides in enumerate(combinations):
            variants.append(Variant(f"product{index:0{width}d}", parse_rwr(overrides, names, base)))

    grid = ParameterGrid(tuple(variants))
    grid.check(network)
    logger.info(f"Loaded parameter grid with {len(grid)} variants")
    return grid


@dataclass
class GridScores:
    results: dict[str, ScoreResult]
    failed: list[str] = field(default_factory=list)

    def converged_names(self, order: Sequence[str]) -> list[str]:
        return [name for name in order if name in self.results and name not in self.failed]


def network_fingerprint(network: MultilayerNetwork) -> str:
    digest = hashlib.sha256()
    for multiplex in network.multiplexes:
        digest.update(multiplex.name.encode("utf-8"))
        digest.update("\n".join(multiplex.node_table).encode("utf-8"))
        for layer in multiplex.layers:
            for array in (layer.source, layer.target, layer.weight):
                digest.update(array.tobytes())
            digest.update(bytes([layer.directed, layer.weighted]))
    for pair in sorted(network.bipartites):
        bipartite = network.bipartites[pair]
        digest.update(repr(pair).encode("utf-8"))
        for array in (bipartite.source, bipartite.target, bipartite.weight):
            digest.update(array.tobytes())
    return digest.hexdigest()


def transition_key(network: MultilayerNetwork, rwr_config: RwrConfig) -> str:
    """Normalization inputs only: lambda and the per-multiplex delta."""
    effective = rwr_config.apply_parameters(network)
    return fingerprint(
        {
            "lambda": rwr_config.resolve_lambda(network).tolist(),
            "delta": [m.effective_delta for m in effective.multiplexes],
        }
    )


def score_grid(
    network: MultilayerNetwork,
    grid: ParameterGrid,
    seeds: SeedSet,
    workers: int = 1,
    cache_dir: Path | None = None,
    transitions: LRUCache | None = None,
) -> GridScores:
    """
    Solves every variant with the same seeds. Variants sharing normalization
    inputs share one transition matrix; results are cached per variant name.
    Non-converged variants are kept but listed in `failed`.
    """
    transitions = transitions or LRUCache(config.TRANSITION_CACHE_CAPACITY)
    disk = ScoreCache(cache_dir) if cache_dir is not None else None
    network_key = network_fingerprint(network)
    seed_key = {str(k): ids.tolist() for k, ids in seeds.ids.items()}
    names = tuple(m.node_table.names for m in network.multiplexes)

    def score(variant: Variant) -> ScoreResult:
        key = fingerprint(
            {"network": network_key, "seeds": seed_key, "params": variant.config.to_dict(network)}
        )
        if disk is not None:
            entry = disk.get(variant.name, key)
            if entry is not None:
                layout = BlockLayout.from_network(network)
                steady = entry["steady"]
                return ScoreResult(
                    steady=steady,
                    scores=aggregate_replicas(layout, steady),
                    names=names,
                    iterations=int(entry["iterations"]),
                    residual=float(entry["residual"]),
                    converged=bool(entry["converged"]),
                )

        transition: TransitionMatrix = transitions.get_or_build(
            transition_key(network, variant.config), lambda: normalize(network, variant.config)
        )
        result = run_rwr(network, variant.config, seeds, transition=transition)
        if disk is not None:
            disk.put(
                variant.name,
                key,
                {
                    "steady": result.steady,
                    "iterations": np.array(result.iterations),
                    "residual": np.array(result.residual),
                    "converged": np.array(result.converged),
                },
            )
        return result

    if workers <= 1:
        solved = [score(variant) for variant in grid.variants]
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            solved = list(executor.map(score, grid.variants))

    outcome = GridScores(results=dict(zip(grid.names, solved, strict=True)))
    outcome.failed = [name for name, result in outcome.results.items() if not result.converged]
    if outcome.failed:
        logger.warning(
            f"{len(outcome.failed)} variants did not converge and are excluded from similarity",
            extra={"variants": outcome.failed},
        )
    logger.info("Grid scored", extra={"variants": len(grid), "transitions": transitions.get_stats()})
    return outcome


def score_similarity(scores_a: np.ndarray, scores_b: np.ndarray) -> float:
    """
    Rank-aligned distance between two score vectors over the same nodes.

    Nodes are ordered by descending score under each vector; for every
    position j the two displacements (a and b read at a's j-th node, and at
    b's j-th node) are combined in a Euclidean norm, summed over j and divided
    by the squared average of the two mean scores.
    """
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ExplorationError(f"score vectors differ in shape: {a.shape} vs {b.shape}")
    scale = (a.mean() + b.mean()) / 2.0
    if a.size == 0 or scale <= 0:
        raise ExplorationError("similarity is undefined for zero mean scores")

    order_a = np.argsort(-a, kind="stable")
    order_b = np.argsort(-b, kind="stable")
    forward = a[order_a] - b[order_a]
    backward = b[order_b] - a[order_b]
    return float(np.sqrt(forward**2 + backward**2).sum() / scale**2)


def similarity(result_a: ScoreResult, result_b: ScoreResult, multiplex: int) -> float:
    return score_similarity(result_a.scores[multiplex], result_b.scores[multiplex])


def similarity_matrices(
    results: Mapping[str, ScoreResult], names: Sequence[str], multiplexes: Sequence[int]
) -> list[np.ndarray]:
    """One symmetric, zero-diagonal P x P matrix per multiplex."""
    matrices = []
    count = len(names)
    for k in multiplexes:
        matrix = np.zeros((count, count), dtype=np.float64)
        for a, b in itertools.combinations(range(count), 2):
            value = similarity(results[names[a]], results[names[b]], k)
            matrix[a, b] = matrix[b, a] = value
        matrices.append(matrix)
    return matrices


def consensus(matrices: Sequence[np.ndarray], sizes: Sequence[int]) -> np.ndarray:
    """Entrywise sqrt(sum_i S_i^2 / m_i)."""
    if not matrices:
        raise ExplorationError("consensus needs at least one similarity matrix")
    if len(matrices) != len(sizes):
        raise ExplorationError("one size per similarity matrix is required")
    shape = matrices[0].shape
    total = np.zeros(shape, dtype=np.float64)
    for matrix, size in zip(matrices, sizes, strict=True):
        if matrix.shape != shape:
            raise ExplorationError("similarity matrices differ in shape")
        total += np.square(matrix) / size
    return np.sqrt(total)


def pca_top2(
    features: np.ndarray,
    seed: int = config.DEFAULT_RNG_SEED,
    max_iter: int = config.PCA_MAX_ITER,
    tolerance: float = config.PCA_TOLERANCE,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Top two principal components of the rows of `features` by power
    iteration with deflation.

    Returns:
        (coordinates P x 2, explained-variance shares (2,), components 2 x F)
    """
    x = np.asarray(features, dtype=np.float64)
    centered = x - x.mean(axis=0)
    covariance = centered.T @ centered / max(x.shape[0] - 1, 1)
    trace = float(np.trace(covariance))
    rng = np.random.default_rng(seed)

    width = covariance.shape[0]
    components = np.zeros((2, width), dtype=np.float64)
    eigenvalues = np.zeros(2, dtype=np.float64)
    remaining = covariance.copy()
    for c in range(min(2, width)):
        vector = rng.standard_normal(width)
        vector -= components[:c].T @ (components[:c] @ vector)
        vector /= np.linalg.norm(vector)
        for _ in range(max_iter):
            following = remaining @ vector
            following -= components[:c].T @ (components[:c] @ following)
            norm = np.linalg.norm(following)
            if norm == 0:
                break
            following /= norm
            if np.linalg.norm(following - vector) < tolerance:
                vector = following
                break
            vector = following
        pivot = np.argmax(np.abs(vector))
        if vector[pivot] < 0:
            vector = -vector
        eigenvalues[c] = max(float(vector @ covariance @ vector), 0.0)
        components[c] = vector
        remaining = remaining - eigenvalues[c] * np.outer(vector, vector)

    shares = eigenvalues / trace if trace > 0 else np.zeros(2)
    return centered @ components.T, shares, components


def kmeans(
    points: np.ndarray,
    k: int,
    seed: int = config.DEFAULT_RNG_SEED,
    restarts: int = config.KMEANS_RESTARTS,
    max_iter: int = config.KMEANS_MAX_ITER,
) -> tuple[np.ndarray, np.ndarray, float, list[float]]:
    """
    Lloyd's k-means with k-means++ seeding, best inertia over `restarts`.

    Returns:
        (labels, centers, inertia, inertia per iteration of the best run);
        labels are numbered by first appearance
    """
    x = np.asarray(points, dtype=np.float64)
    count = x.shape[0]
    if not 1 <= k <= count:
        raise ExplorationError(f"k={k} must lie in [1, {count}]")
    rng = np.random.default_rng(seed)

    best: tuple[np.ndarray, np.ndarray, float, list[float]] | None = None
    for _ in range(restarts):
        centers = np.empty((k, x.shape[1]), dtype=np.float64)
        centers[0] = x[rng.integers(count)]
        for c in range(1, k):
            distance = np.min(((x[:, None, :] - centers[None, :c, :]) ** 2).sum(axis=2), axis=1)
            total = distance.sum()
            pick = rng.choice(count, p=distance / total) if total > 0 else rng.integers(count)
            centers[c] = x[pick]

        labels = np.full(count, -1, dtype=np.int64)
        history: list[float] = []
        for _ in range(max_iter):
            distances = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
            assigned = np.argmin(distances, axis=1)
            history.append(float(distances[np.arange(count), assigned].sum()))
            if np.array_equal(assigned, labels):
                break
            labels = assigned
            for c in range(k):
                members = x[labels == c]
                if members.size:
                    centers[c] = members.mean(axis=0)

        inertia = float(((x - centers[labels]) ** 2).sum())
        history.append(inertia)
        if best is None or inertia < best[2]:
            best = (labels.copy(), centers.copy(), inertia, history)

    assert best is not None
    labels, centers, inertia, history = best
    _, first = np.unique(labels, return_index=True)
    relabel = {int(old): new for new, old in enumerate(labels[np.sort(first)])}
    labels = np.array([relabel[int(label)] for label in labels], dtype=np.int64)
    order = [old for old, _ in sorted(relabel.items(), key=lambda item: item[1])]
    unused = [c for c in range(k) if c not in relabel]
    return labels, centers[order + unused], inertia, history


def silhouette_scan(
    points: np.ndarray,
    seed: int = config.DEFAULT_RNG_SEED,
    k_range: tuple[int, int] = config.SILHOUETTE_K_RANGE,
    restarts: int = config.KMEANS_RESTARTS,
) -> dict[int, float]:
    """Silhouette score per k in k_range, bounded by P - 1."""
    count = points.shape[0]
    scores: dict[int, float] = {}
    for k in range(k_range[0], min(k_range[1], count - 1) + 1):
        labels, _, _, _ = kmeans(points, k, seed=seed, restarts=restarts)
        if len(np.unique(labels)) < 2:
            continue
        try:
            scores[k] = float(silhouette_score(points, labels))
        except ValueError as e:
            logger.debug(f"Silhouette undefined for k={k}: {e}")
    return scores


@dataclass
class ExplorationReport:
    variants: list[str]
    coordinates: np.ndarray
    explained: np.ndarray
    labels: np.ndarray
    inertia: float
    silhouette: dict[int, float] = field(default_factory=dict)
    overlaps: dict[int, dict[int, list[OverlapRow]]] = field(default_factory=dict)


def project_and_cluster(
    consensus_matrix: np.ndarray,
    k: int,
    seed: int = config.DEFAULT_RNG_SEED,
    variants: Sequence[str] | None = None,
    restarts: int = config.KMEANS_RESTARTS,
) -> ExplorationReport:
    """
    Treats consensus rows as feature vectors, projects them on two principal
    components and clusters the projection with k-means.
    """
    count = consensus_matrix.shape[0]
    if not 1 <= k <= count:
        raise ExplorationError(f"k={k} must lie in [1, {count}] for {count} variants")
    coordinates, explained, _ = pca_top2(consensus_matrix, seed=seed)
    labels, _, inertia, _ = kmeans(coordinates, k, seed=seed, restarts=restarts)
    return ExplorationReport(
        variants=list(variants) if variants is not None else [str(i) for i in range(count)],
        coordinates=coordinates,
        explained=explained,
        labels=labels,
        inertia=inertia,
        silhouette=silhouette_scan(coordinates, seed=seed, restarts=restarts),
    )


class OverlapRow(NamedTuple):
    node: str
    count: int
    in_all: bool


def topk_overlap(
    results: Mapping[str, ScoreResult],
    subset: Sequence[str],
    k: int,
    multiplex: int,
    exclude: Sequence[int] = (),
) -> list[OverlapRow]:
    """Occurrences of each node in the variants' top-k lists, most frequent first."""
    if not subset:
        raise ExplorationError("topk_overlap needs at least one variant")
    counts: dict[str, int] = {}
    for name in subset:
        for node in rank(results[name], multiplex, exclude=exclude)[:k]:
            counts[node.name] = counts.get(node.name, 0) + 1
    rows = [OverlapRow(node, count, count == len(subset)) for node, count in counts.items()]
    return sorted(rows, key=lambda row: (-row.count, row.node))


def _write_matrix(path: Path, names: Sequence[str], matrix: np.ndarray) -> None:
    lines = ["variant\t" + "\t".join(names)]
    for name, row in zip(names, matrix, strict=True):
        lines.append(name + "\t" + "\t".join(config.format_score(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def run_exploration(
    network: MultilayerNetwork,
    grid: ParameterGrid,
    seeds: SeedSet,
    out_dir: Path,
    k: int = config.DEFAULT_CLUSTERS,
    top: int = config.DEFAULT_TOP_K,
    seed: int = config.DEFAULT_RNG_SEED,
    workers: int = 1,
    cache_dir: Path | None = None,
) -> tuple[ExplorationReport, GridScores]:
    """
    Scores the grid and writes similarity_<multiplex>.tsv, consensus.tsv,
    pca.tsv, silhouette.tsv and topk_overlap.tsv into `out_dir`. Score vectors
    are cached under the state directory unless `cache_dir` is given.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scores = score_grid(
        network,
        grid,
        seeds,
        workers=workers,
        cache_dir=cache_dir or config.STATE_DIR / config.SCORE_CACHE_DIR,
    )
    names = scores.converged_names(grid.names)
    if len(names) < k:
        raise ExplorationError(f"only {len(names)} converged variants for k={k} clusters")

    multiplexes = list(range(network.num_multiplexes))
    matrices = similarity_matrices(scores.results, names, multiplexes)
    combined = consensus(matrices, [m.n for m in network.multiplexes])
    report = project_and_cluster(combined, k, seed=seed, variants=names)

    for cluster in range(k):
        members = [name for name, label in zip(names, report.labels, strict=True) if label == cluster]
        if members:
            report.overlaps[cluster] = {
                m: topk_overlap(scores.results, members, top, m, exclude=seeds.of(m))
                for m in multiplexes
            }

    for m, matrix in zip(multiplexes, matrices, strict=True):
        _write_matrix(out_dir / f"similarity_{network.names[m]}.tsv", names, matrix)
    _write_matrix(out_dir / "consensus.tsv", names, combined)

    lines = ["variant\tpc1\tpc2\tcluster"]
    for name, (pc1, pc2), label in zip(names, report.coordinates, report.labels, strict=True):
        lines.append(f"{name}\t{config.format_score(pc1)}\t{config.format_score(pc2)}\t{label}")
    lines.append(f"# explained\t{config.format_score(report.explained[0])}\t{config.format_score(report.explained[1])}\t-")
    (out_dir / "pca.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    lines = ["k\tsilhouette"]
    lines.extend(f"{kk}\t{config.format_score(v)}" for kk, v in sorted(report.silhouette.items()))
    (out_dir / "silhouette.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    lines = ["cluster\tmultiplex\tnode\tcount\tin_all"]
    for cluster, tables in sorted(report.overlaps.items()):
        for m, rows in sorted(tables.items()):
            lines.extend(
                f"{cluster}\t{network.names[m]}\t{row.node}\t{row.count}\t{int(row.in_all)}"
                for row in rows
            )
    (out_dir / "topk_overlap.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    logger.info(
        "Exploration finished",
        extra={"variants": len(names), "failed": len(scores.failed), "clusters": k},
    )
    return report, scores
