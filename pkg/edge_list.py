"""Edge-list ingestion and serialization (TAB-separated, `#` comments)."""

import math
from pathlib import Path

import numpy as np

from exceptions import EdgeListError, SeedError
from logger import get_logger
from network import BipartiteNetwork, Layer, MultilayerNetwork, NodeTable

logger = get_logger()

ParsedLine = tuple[int, str, str, float | None]


def _iter_edge_lines(path: Path, allow_weight: bool) -> list[ParsedLine]:
    """Parses `source<TAB>target[<TAB>weight]` lines, skipping blanks and comments."""
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise EdgeListError(f"cannot read edge list: {e}", path) from e

    parsed: list[ParsedLine] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        fields = raw.rstrip("\r").split("\t")
        if len(fields) not in (2, 3):
            raise EdgeListError(f"expected 2 or 3 tab-separated fields, got {len(fields)}", path, line_no)
        source, target = fields[0], fields[1]
        if not source or not target:
            raise EdgeListError("empty node name", path, line_no)

        weight: float | None = None
        if len(fields) == 3:
            if not allow_weight:
                raise EdgeListError("weight column present in an unweighted layer", path, line_no)
            try:
                weight = float(fields[2])
            except ValueError as e:
                raise EdgeListError(f"invalid weight {fields[2]!r}", path, line_no) from e
            if not math.isfinite(weight):
                raise EdgeListError(f"non-finite weight {fields[2]!r}", path, line_no)
            if weight < 0:
                raise EdgeListError(f"negative weight {weight}", path, line_no)
        parsed.append((line_no, source, target, weight))
    return parsed


def load_edge_list(
    path: Path,
    directed: bool,
    weighted: bool,
    table: NodeTable,
    self_loops: str = "keep",
    name: str = "",
) -> Layer:
    """
    Loads one layer, interning new names into `table`.

    The table is only extended once the whole file parsed cleanly. Duplicate
    edges are merged by summing weights (weighted layers) or collapsed
    (unweighted layers, which keep weight 1.0).

    Raises:
        EdgeListError: Malformed line, negative weight, or a weight column in an
            unweighted layer
    """
    parsed = _iter_edge_lines(Path(path), allow_weight=weighted)

    sources: list[int] = []
    targets: list[int] = []
    weights: list[float] = []
    for _, source, target, weight in parsed:
        sources.append(table.intern(source))
        targets.append(table.intern(target))
        weights.append(1.0 if weight is None else weight)

    layer = Layer.from_edges(
        sources,
        targets,
        weights,
        directed=directed,
        weighted=weighted,
        self_loops=self_loops,
        name=name or Path(path).stem,
    )
    logger.debug(
        f"Loaded layer {layer.name}",
        extra={"path": str(path), "lines": len(parsed), "edges": layer.num_edges},
    )
    return layer


def load_bipartite(
    path: Path,
    source_table: NodeTable,
    target_table: NodeTable,
    source_type: int,
    target_type: int,
    directed: bool,
) -> BipartiteNetwork:
    """
    Loads a bipartite edge list between two existing multiplexes.

    Raises:
        EdgeListError: Malformed line, or a node absent from its multiplex
    """
    path = Path(path)
    parsed = _iter_edge_lines(path, allow_weight=True)

    sources: list[int] = []
    targets: list[int] = []
    weights: list[float] = []
    for line_no, source, target, weight in parsed:
        source_id = source_table.get(source)
        if source_id is None:
            raise EdgeListError(f"node {source!r} is not in the source multiplex", path, line_no)
        target_id = target_table.get(target)
        if target_id is None:
            raise EdgeListError(f"node {target!r} is not in the target multiplex", path, line_no)
        sources.append(source_id)
        targets.append(target_id)
        weights.append(1.0 if weight is None else weight)

    return BipartiteNetwork.from_edges(
        source_type, target_type, sources, targets, weights, directed=directed
    )


def _format_weight(weight: float) -> str:
    return repr(float(weight))


def write_edge_list(path: Path, layer: Layer, table: NodeTable) -> None:
    lines = []
    for u, v, w in layer.edges():
        fields = [table.name_of(u), table.name_of(v)]
        if layer.weighted:
            fields.append(_format_weight(w))
        lines.append("\t".join(fields))
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def write_bipartite(
    path: Path, bipartite: BipartiteNetwork, source_table: NodeTable, target_table: NodeTable
) -> None:
    lines = []
    for u, v, w in bipartite.edges():
        fields = [source_table.name_of(u), target_table.name_of(v)]
        if w != 1.0:
            fields.append(_format_weight(w))
        lines.append("\t".join(fields))
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def read_seed_file(path: Path) -> list[tuple[str | None, str]]:
    """
    Reads seeds as (multiplex name or None, node name), one per line.
    A line may be `name` or `multiplex<TAB>name`.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise SeedError(f"cannot read seed file {path}: {e}") from e

    seeds: list[tuple[str | None, str]] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) == 1:
            seeds.append((None, fields[0]))
        elif len(fields) == 2:
            seeds.append((fields[0], fields[1]))
        else:
            raise SeedError(f"{path}:{line_no}: expected `name` or `multiplex<TAB>name`")
    return seeds


def resolve_seed_names(
    network: MultilayerNetwork, seeds: list[tuple[str | None, str]]
) -> dict[int, np.ndarray]:
    """
    Maps seed names to (multiplex, id) pairs.

    Raises:
        SeedError: Unknown name, unknown multiplex, or a bare name found in several multiplexes
    """
    resolved: dict[int, set[int]] = {}
    for multiplex_name, name in seeds:
        if multiplex_name is not None:
            try:
                k = network.index_of(multiplex_name)
            except KeyError as e:
                raise SeedError(f"unknown multiplex {multiplex_name!r} for seed {name!r}") from e
            node_id = network.multiplexes[k].node_table.get(name)
            if node_id is None:
                raise SeedError(f"seed {name!r} not found in multiplex {multiplex_name!r}")
            resolved.setdefault(k, set()).add(node_id)
            continue

        matches = [
            (k, m.node_table.get(name))
            for k, m in enumerate(network.multiplexes)
            if name in m.node_table
        ]
        if not matches:
            raise SeedError(f"seed {name!r} not found in any multiplex")
        if len(matches) > 1:
            owners = ", ".join(network.multiplexes[k].name for k, _ in matches)
            raise SeedError(f"seed {name!r} is ambiguous (found in {owners}); prefix it with the multiplex name")
        k, node_id = matches[0]
        resolved.setdefault(k, set()).add(int(node_id))  # type: ignore[arg-type]

    if not resolved:
        raise SeedError("no seeds given")
    return {k: np.array(sorted(ids), dtype=np.int64) for k, ids in sorted(resolved.items())}
