"""Structural validation and descriptive statistics of a multilayer network."""

from dataclasses import dataclass, field

import numpy as np

import config
from exceptions import NetworkValidationError
from logger import get_logger
from network import Layer, MultilayerNetwork, MultiplexNetwork, Pair

logger = get_logger()


@dataclass
class MultiplexStats:
    name: str
    nodes: int
    layer_edges: list[int]
    isolated: list[str]

    @property
    def edges(self) -> int:
        return sum(self.layer_edges)


@dataclass
class BipartiteOverlap:
    pair: Pair
    edges: int
    source_coverage: float
    target_coverage: float


@dataclass
class ValidationReport:
    multiplexes: list[MultiplexStats] = field(default_factory=list)
    overlaps: list[BipartiteOverlap] = field(default_factory=list)
    violations: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.violations

    def overlap(self, pair: Pair) -> BipartiteOverlap:
        for item in self.overlaps:
            if item.pair == pair:
                return item
        raise KeyError(pair)

    def to_lines(self, names: tuple[str, ...]) -> list[str]:
        lines = ["section\titem\tvalue"]
        for stats in self.multiplexes:
            lines.append(f"multiplex\t{stats.name}.nodes\t{stats.nodes}")
            for a, count in enumerate(stats.layer_edges):
                lines.append(f"multiplex\t{stats.name}.layer{a}.edges\t{count}")
            lines.append(f"multiplex\t{stats.name}.isolated\t{len(stats.isolated)}")
        for item in self.overlaps:
            label = f"{names[item.pair[0]]}->{names[item.pair[1]]}"
            lines.append(f"bipartite\t{label}.edges\t{item.edges}")
            lines.append(f"bipartite\t{label}.source_overlap_pct\t{item.source_coverage:.2f}")
            lines.append(f"bipartite\t{label}.target_overlap_pct\t{item.target_coverage:.2f}")
        lines.extend(f"warning\t-\t{message}" for message in self.warnings)
        lines.extend(f"violation\t-\t{message}" for message in self.violations)
        return lines


def _check_layer(multiplex: MultiplexNetwork, a: int, layer: Layer, report: ValidationReport) -> None:
    label = f"multiplex {multiplex.name} layer {a}"
    n = multiplex.n
    if layer.num_edges == 0:
        return
    if layer.source.min() < 0 or layer.target.min() < 0:
        report.violations.append(f"{label}: negative node id")
    if layer.source.max() >= n or layer.target.max() >= n:
        report.violations.append(f"{label}: node id out of range (n={n})")
    if not np.all(np.isfinite(layer.weight)) or np.any(layer.weight < 0):
        report.violations.append(f"{label}: weights must be finite and nonnegative")
    if not layer.weighted and np.any(layer.weight != 1.0):
        report.violations.append(f"{label}: unweighted layer stores weights other than 1.0")

    source, target = layer.source, layer.target
    if not layer.directed:
        source, target = np.minimum(source, target), np.maximum(source, target)
    keys = source * (n + 1) + target
    if np.unique(keys).size != keys.size:
        report.violations.append(f"{label}: duplicate edges")


def _check_multiplex(multiplex: MultiplexNetwork, report: ValidationReport) -> None:
    label = f"multiplex {multiplex.name}"
    if multiplex.num_layers < 1:
        report.violations.append(f"{label}: needs at least one layer")
    if not 0.0 <= multiplex.delta <= 1.0:
        report.violations.append(f"{label}: delta {multiplex.delta} outside [0, 1]")
    tau = np.asarray(multiplex.tau, dtype=np.float64)
    if tau.size != multiplex.num_layers:
        report.violations.append(
            f"{label}: tau has {tau.size} entries for {multiplex.num_layers} layers"
        )
    if np.any(tau < 0):
        report.violations.append(f"{label}: tau entries must be nonnegative")
    if abs(float(tau.sum()) - 1.0) > config.PROBABILITY_TOLERANCE:
        report.violations.append(f"{label}: tau does not sum to 1 (sum={float(tau.sum())!r})")

    touched = np.zeros(multiplex.n, dtype=bool)
    for a, layer in enumerate(multiplex.layers):
        _check_layer(multiplex, a, layer, report)
        valid = (layer.source < multiplex.n) & (layer.target < multiplex.n)
        touched[layer.source[valid]] = True
        touched[layer.target[valid]] = True

    isolated = [multiplex.node_table.name_of(int(i)) for i in np.flatnonzero(~touched)]
    if isolated:
        report.warnings.append(f"{label}: {len(isolated)} isolated nodes")
    report.multiplexes.append(
        MultiplexStats(
            name=multiplex.name,
            nodes=multiplex.n,
            layer_edges=[layer.num_edges for layer in multiplex.layers],
            isolated=isolated,
        )
    )


def validate(network: MultilayerNetwork) -> ValidationReport:
    """
    Reports node/edge counts, bipartite overlaps, isolated nodes and every
    invariant violation. Never raises; the network is valid iff no violations.
    """
    report = ValidationReport()
    if network.num_multiplexes < 1:
        report.violations.append("network needs at least one multiplex")

    for multiplex in network.multiplexes:
        _check_multiplex(multiplex, report)

    count = network.num_multiplexes
    for pair, bipartite in sorted(network.bipartites.items()):
        i, j = pair
        label = f"bipartite {pair}"
        if bipartite.pair != pair:
            report.violations.append(f"{label}: stored under the wrong pair {bipartite.pair}")
        if i == j:
            report.violations.append(f"{label}: source and target types must differ")
            continue
        if not (0 <= i < count and 0 <= j < count):
            report.violations.append(f"{label}: unknown multiplex index")
            continue

        n_source, n_target = network.multiplexes[i].n, network.multiplexes[j].n
        if bipartite.num_edges:
            if bipartite.source.max() >= n_source or bipartite.source.min() < 0:
                report.violations.append(f"{label}: source id out of range (n={n_source})")
            if bipartite.target.max() >= n_target or bipartite.target.min() < 0:
                report.violations.append(f"{label}: target id out of range (n={n_target})")
            if np.any(bipartite.weight < 0) or not np.all(np.isfinite(bipartite.weight)):
                report.violations.append(f"{label}: weights must be finite and nonnegative")
        else:
            report.warnings.append(f"{label}: no edges")

        if not bipartite.directed:
            mirror = network.bipartites.get((j, i))
            if mirror is None:
                report.violations.append(f"{label}: undirected but its transpose is missing")
            elif set(zip(mirror.source.tolist(), mirror.target.tolist(), strict=True)) != set(
                zip(bipartite.target.tolist(), bipartite.source.tolist(), strict=True)
            ):
                report.violations.append(f"{label}: transpose does not mirror the edges")

        source_cover = np.unique(bipartite.source).size / n_source * 100 if n_source else 0.0
        target_cover = np.unique(bipartite.target).size / n_target * 100 if n_target else 0.0
        report.overlaps.append(
            BipartiteOverlap(
                pair=pair,
                edges=bipartite.num_edges,
                source_coverage=float(source_cover),
                target_coverage=float(target_cover),
            )
        )

    for message in report.warnings:
        logger.info(message)
    if report.violations:
        logger.error(
            "Network failed validation", extra={"violations": len(report.violations)}
        )
    return report


def require_valid(network: MultilayerNetwork) -> ValidationReport:
    """
    Raises:
        NetworkValidationError: The network breaks a structural invariant
    """
    report = validate(network)
    if not report.valid:
        raise NetworkValidationError(report)
    return report
