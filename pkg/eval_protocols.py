"""
Evaluation protocols over one bipartite network: leave-one-out cross-validation,
link prediction, and the transit-node augmentation and randomization
experiments that perturb the evaluated bipartite network.
"""

from __future__ import annotations

import math
from collections.abc import Iterator
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal, NamedTuple

import numpy as np

import config
from exceptions import EvaluationError
from logger import get_logger
from network import BipartiteNetwork, MultilayerNetwork, Pair
from rwr_engine import SeedSet, rank_of, run_rwr
from supra_builder import RwrConfig, SupraBuilder, normalize

logger = get_logger()

ProtocolName = Literal["loocv", "linkpred"]


class EvalRecord(NamedTuple):
    left_out: str
    anchor: str
    rank: int
    pool: int


@dataclass(frozen=True)
class EvalTask:
    """
    One protocol run over bipartite `pair` = (i, j): edges (g, a) link a
    left-out candidate g of multiplex i to an anchor a of multiplex j.
    """

    pair: Pair
    protocol: ProtocolName = "loocv"
    min_degree: int = config.DEFAULT_MIN_DEGREE
    seed_anchor: bool = True
    local_rebuild: bool = True

    @classmethod
    def link_prediction(cls, pair: Pair, min_degree: int = config.DEFAULT_LP_MIN_DEGREE) -> EvalTask:
        return cls(pair=pair, protocol="linkpred", min_degree=min_degree)

    def check(self, network: MultilayerNetwork) -> BipartiteNetwork:
        """
        Raises:
            EvaluationError: Missing or empty target bipartite, or min_degree below 1
        """
        if self.min_degree < 1:
            raise EvaluationError(f"min_degree must be at least 1, got {self.min_degree}")
        bipartite = network.bipartites.get(self.pair)
        if bipartite is None:
            raise EvaluationError(f"no bipartite network for pair {self.pair}")
        if bipartite.num_edges == 0:
            raise EvaluationError(f"bipartite network {self.pair} has no edges")
        if self.protocol == "loocv" and not self.seed_anchor and self.min_degree < 2:
            raise EvaluationError("LOOCV without the anchor as seed needs min_degree >= 2")
        return bipartite


@dataclass
class EvalOutcome:
    records: list[EvalRecord]
    cdf: list[tuple[int, float]]
    skipped_anchors: int = 0
    non_converged: int = 0
    residuals: list[float] = field(default_factory=list, repr=False)

    @property
    def ranks(self) -> np.ndarray:
        return np.array([record.rank for record in self.records], dtype=np.int64)


def compute_cdf(records: list[EvalRecord]) -> list[tuple[int, float]]:
    """Fraction of records ranked within K, for K = 1 .. largest pool."""
    if not records:
        return []
    ranks = np.sort(np.array([record.rank for record in records], dtype=np.int64))
    largest = max(record.pool for record in records)
    ks = np.arange(1, largest + 1)
    within = np.searchsorted(ranks, ks, side="right")
    return [(int(k), float(count) / ranks.size) for k, count in zip(ks, within, strict=True)]


def median_rank(outcome: EvalOutcome) -> float:
    if not outcome.records:
        raise EvaluationError("no records to summarize")
    return float(np.median(outcome.ranks))


def cdf_area(outcome: EvalOutcome) -> float:
    """Mean CDF value over K, a normalized area in [0, 1]."""
    if not outcome.cdf:
        raise EvaluationError("no records to summarize")
    return float(np.mean([fraction for _, fraction in outcome.cdf]))


class RecordLog:
    """
    Streams evaluation records to a TSV file in task order. Reopening an
    existing file keeps its complete records so an interrupted run resumes.
    """

    HEADER = "left_out\tanchor\trank\tpool"

    def __init__(self, path: Path):
        self.path = Path(path)
        self._handle = None

    def load(self) -> list[EvalRecord]:
        if not self.path.exists():
            return []
        lines = self.path.read_text(encoding="utf-8").split("\n")
        if not lines or lines[0] != self.HEADER:
            raise EvaluationError(f"{self.path} is not a records file")
        records = []
        # The last element is either empty (clean end) or a partially written line.
        for line in lines[1:-1]:
            fields = line.split("\t")
            if len(fields) != 4:
                break
            records.append(EvalRecord(fields[0], fields[1], int(fields[2]), int(fields[3])))
        return records

    def open(self, kept: list[EvalRecord]) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        text = "".join(self._format(record) for record in kept)
        self.path.write_text(f"{self.HEADER}\n{text}", encoding="utf-8")
        self._handle = open(self.path, "a", encoding="utf-8")

    def append(self, record: EvalRecord) -> None:
        if self._handle is None:
            raise EvaluationError("record log is not open")
        self._handle.write(self._format(record))
        self._handle.flush()

    def close(self) -> None:
        if self._handle is not None:
            self._handle.close()
            self._handle = None

    @staticmethod
    def _format(record: EvalRecord) -> str:
        return f"{record.left_out}\t{record.anchor}\t{record.rank}\t{record.pool}\n"


class _Evaluation:
    """Shared state of one protocol run; `evaluate` is safe to call from threads."""

    def __init__(self, network: MultilayerNetwork, rwr_config: RwrConfig, task: EvalTask):
        self.network = network
        self.config = rwr_config
        self.task = task
        self.bipartite = task.check(network)
        i, j = task.pair
        self.changed = {i} if self.bipartite.directed else {i, j}
        self.base = SupraBuilder(network, rwr_config)
        # Fills every block row once so rebuilt builders only compute the edited ones.
        self.base.build()

    def items(self) -> tuple[list[tuple[int, int]], int]:
        """(left-out id, anchor id) pairs in evaluation order, and the skipped anchor count."""
        source, target = self.bipartite.source, self.bipartite.target
        anchors, degrees = np.unique(target, return_counts=True)
        eligible = anchors[degrees >= self.task.min_degree]
        skipped = int(anchors.size - eligible.size)
        items = []
        for anchor in eligible:
            for left_out in np.sort(source[target == anchor]):
                items.append((int(left_out), int(anchor)))
        return items, skipped

    def seeds(self, left_out: int, anchor: int) -> SeedSet:
        i, j = self.task.pair
        if self.task.protocol == "linkpred":
            return SeedSet.from_ids({j: [anchor]})
        associates = self.bipartite.source[self.bipartite.target == anchor]
        ids: dict[int, list[int]] = {i: [int(g) for g in associates if g != left_out]}
        if self.task.seed_anchor:
            ids[j] = [anchor]
        return SeedSet.from_ids(ids)

    def evaluate(self, item: tuple[int, int]) -> tuple[EvalRecord, bool, float]:
        left_out, anchor = item
        i, j = self.task.pair
        edited = self.network.without_bipartite_edge(self.task.pair, left_out, anchor)
        if self.task.local_rebuild:
            transition = self.base.rebuild(edited, self.changed).build()
        else:
            transition = normalize(edited, self.config)

        seeds = self.seeds(left_out, anchor)
        result = run_rwr(edited, self.config, seeds, transition=transition, restrict_eta=True)
        position, pool = rank_of(result, i, left_out, exclude=seeds.of(i))
        record = EvalRecord(
            left_out=self.network.multiplexes[i].node_table.name_of(left_out),
            anchor=self.network.multiplexes[j].node_table.name_of(anchor),
            rank=position,
            pool=pool,
        )
        return record, result.converged, result.residual


def _fan_out(evaluation: _Evaluation, items: list[tuple[int, int]], workers: int) -> Iterator:
    if workers <= 1:
        return (evaluation.evaluate(item) for item in items)
    executor = ThreadPoolExecutor(max_workers=workers)

    def ordered() -> Iterator:
        with executor:
            yield from executor.map(evaluation.evaluate, items)

    return ordered()


def run_protocol(
    network: MultilayerNetwork,
    rwr_config: RwrConfig,
    task: EvalTask,
    workers: int = 1,
    records_path: Path | None = None,
) -> EvalOutcome:
    """
    Removes each evaluated edge in turn, seeds the walk, and records the rank of
    the removed candidate among non-seed nodes of its multiplex. The input
    network is never modified.

    Raises:
        EvaluationError: Invalid task, no anchor reaching min_degree, or a records
            file belonging to another run
    """
    evaluation = _Evaluation(network, rwr_config, task)
    items, skipped = evaluation.items()
    if not items:
        raise EvaluationError(
            f"no anchor of bipartite {task.pair} has at least {task.min_degree} associations"
        )
    if skipped:
        logger.info(f"Skipped {skipped} anchors below min_degree {task.min_degree}")

    log = RecordLog(records_path) if records_path is not None else None
    records = log.load() if log is not None else []
    i, j = task.pair
    for record, (left_out, anchor) in zip(records, items, strict=False):
        expected = (
            network.multiplexes[i].node_table.name_of(left_out),
            network.multiplexes[j].node_table.name_of(anchor),
        )
        if (record.left_out, record.anchor) != expected:
            raise EvaluationError(f"{records_path} holds records of a different run")
    records = records[: len(items)]
    if records:
        logger.info(f"Resuming {task.protocol} after {len(records)} records")

    outcome = EvalOutcome(records=list(records), cdf=[], skipped_anchors=skipped)
    if log is not None:
        log.open(records)
    try:
        for record, converged, residual in _fan_out(evaluation, items[len(records) :], workers):
            outcome.records.append(record)
            outcome.residuals.append(residual)
            if not converged:
                outcome.non_converged += 1
            if log is not None:
                log.append(record)
    finally:
        if log is not None:
            log.close()

    outcome.cdf = compute_cdf(outcome.records)
    logger.info(
        f"{task.protocol} finished",
        extra={
            "pair": list(task.pair),
            "records": len(outcome.records),
            "skipped_anchors": skipped,
            "non_converged": outcome.non_converged,
        },
    )
    return outcome


def run_loocv(
    network: MultilayerNetwork,
    rwr_config: RwrConfig,
    task: EvalTask,
    workers: int = 1,
    records_path: Path | None = None,
) -> EvalOutcome:
    if task.protocol != "loocv":
        raise EvaluationError(f"expected a loocv task, got {task.protocol}")
    return run_protocol(network, rwr_config, task, workers=workers, records_path=records_path)


def run_link_prediction(
    network: MultilayerNetwork,
    rwr_config: RwrConfig,
    task: EvalTask,
    workers: int = 1,
    records_path: Path | None = None,
) -> EvalOutcome:
    if task.protocol != "linkpred":
        raise EvaluationError(f"expected a linkpred task, got {task.protocol}")
    return run_protocol(network, rwr_config, task, workers=workers, records_path=records_path)


def _extend_bipartite(
    network: MultilayerNetwork,
    pair: Pair,
    source: np.ndarray,
    target: np.ndarray,
    directed: bool,
) -> MultilayerNetwork:
    existing = network.bipartites.get(pair)
    if existing is None:
        bipartite = BipartiteNetwork.from_edges(pair[0], pair[1], source, target, directed=directed)
    else:
        bipartite = existing.with_edges(
            np.concatenate([existing.source, source]),
            np.concatenate([existing.target, target]),
            np.concatenate([existing.weight, np.ones(source.size)]),
        )
    return network.with_bipartite(bipartite)


def augment_transit(
    network: MultilayerNetwork,
    via: int,
    pair: Pair,
    t: int,
    self_loops: bool = False,
) -> MultilayerNetwork:
    """
    For each edge (g, a) of bipartite (i, j), adds t fresh nodes d to multiplex
    `via` with edges (g, d) in (i, via) and (d, a) in (via, j). Missing
    bipartites are created with the directedness of (i, j).

    Raises:
        EvaluationError: Unknown pair, `via` equal to i or j, or a name collision
    """
    i, j = pair
    bipartite = network.bipartites.get(pair)
    if bipartite is None:
        raise EvaluationError(f"no bipartite network for pair {pair}")
    if via in (i, j) or not 0 <= via < network.num_multiplexes:
        raise EvaluationError(f"transit multiplex {via} must differ from {i} and {j}")
    if t < 0:
        raise EvaluationError("transit count must be nonnegative")
    if t == 0:
        return replace(network, bipartites=dict(network.bipartites))

    multiplex = network.multiplexes[via]
    label = f"{network.names[i]}-{network.names[j]}"
    names = [
        f"{config.TRANSIT_PREFIX}_{label}_{e}_{m}"
        for e in range(bipartite.num_edges)
        for m in range(1, t + 1)
    ]
    clashes = [name for name in names if name in multiplex.node_table]
    if clashes:
        raise EvaluationError(f"transit node {clashes[0]!r} already exists in {multiplex.name}")

    augmented = network.with_multiplex(via, multiplex.with_new_nodes(names, self_loops=self_loops))
    transit = np.arange(multiplex.n, multiplex.n + len(names), dtype=np.int64)
    left = np.repeat(bipartite.source, t)
    right = np.repeat(bipartite.target, t)
    augmented = _extend_bipartite(augmented, (i, via), left, transit, bipartite.directed)
    augmented = _extend_bipartite(augmented, (via, j), transit, right, bipartite.directed)
    logger.info(
        "Transit nodes added",
        extra={"via": multiplex.name, "pair": label, "nodes": len(names), "edges": 2 * len(names)},
    )
    return augmented


def _duplicated(source: np.ndarray, target: np.ndarray, width: int) -> np.ndarray:
    keys = source * width + target
    _, inverse, counts = np.unique(keys, return_inverse=True, return_counts=True)
    return counts[inverse] > 1


def randomize_bipartite(
    network: MultilayerNetwork,
    pair: Pair,
    fraction: float,
    seed: int = config.DEFAULT_RNG_SEED,
    max_attempts: int = 100,
) -> MultilayerNetwork:
    """
    Shuffles the targets of floor(fraction * E) uniformly chosen edges among
    themselves, keeping both degree sequences. Weights stay with their edge.
    Collisions with existing pairs are repaired by further random swaps; a
    shuffle that cannot be repaired leaves the network unchanged.
    """
    if not 0.0 <= fraction <= 1.0:
        raise EvaluationError(f"fraction {fraction} outside [0, 1]")
    bipartite = network.bipartites.get(pair)
    if bipartite is None:
        raise EvaluationError(f"no bipartite network for pair {pair}")
    if bipartite.mirror:
        pair = (pair[1], pair[0])
        bipartite = network.bipartites[pair]

    edges = bipartite.num_edges
    count = math.floor(fraction * edges)
    if count < 2:
        return network

    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(edges, size=count, replace=False))
    source = bipartite.source
    target = bipartite.target.copy()
    target[chosen] = target[chosen][rng.permutation(count)]

    width = int(network.multiplexes[pair[1]].n) + 1
    position = np.full(edges, -1, dtype=np.int64)
    position[chosen] = np.arange(count)
    for _ in range(max_attempts * count):
        clashing = np.flatnonzero(_duplicated(source, target, width) & (position >= 0))
        if clashing.size == 0:
            break
        p = clashing[0]
        q = chosen[rng.integers(count)]
        target[p], target[q] = target[q], target[p]
    else:
        logger.warning(
            "Could not shuffle bipartite targets without duplicate edges; left unchanged",
            extra={"pair": list(pair), "fraction": fraction},
        )
        return network

    shuffled = bipartite.with_edges(source, target, bipartite.weight)
    logger.info("Bipartite randomized", extra={"pair": list(pair), "shuffled": count})
    return network.with_bipartite(shuffled)


def write_records(path: Path, records: list[EvalRecord]) -> None:
    log = RecordLog(path)
    log.open(records)
    log.close()


def write_cdf(path: Path, cdf: list[tuple[int, float]]) -> None:
    lines = ["K\tfraction"]
    lines.extend(f"{k}\t{config.format_score(fraction)}" for k, fraction in cdf)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_cdf_plot(path: Path, cdf: list[tuple[int, float]], title: str = "") -> None:
    """gnuplot data file: `plot 'cdf.dat' using 1:2 with steps`."""
    lines = [f"# {title}".rstrip(), "# K fraction"]
    lines.extend(f"{k} {config.format_score(fraction)}" for k, fraction in cdf)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
