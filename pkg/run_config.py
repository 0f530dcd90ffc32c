"""
YAML run configuration: multiplex and bipartite sources, seeds, and walk
parameters. Relative paths resolve against the configuration file's directory.

    multiplex:
      gene:
        layers: [ppi.tsv, {path: pathways.tsv, weighted: true}]
        delta: 0.5
        tau: [0.5, 0.5]
      disease:
        layers: [disease_similarity.tsv]
    bipartite:
      gene_disease: {path: gene_disease.tsv, directed: false}
    seeds: seeds.txt
    r: 0.7
    eta: auto
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

import config
from edge_list import load_bipartite, load_edge_list, write_bipartite, write_edge_list
from exceptions import ConfigError
from logger import get_logger
from network import MultilayerNetwork, MultiplexNetwork, NodeTable
from supra_builder import RwrConfig

logger = get_logger()

RWR_KEYS = {"r", "lambda", "eta", "delta", "tau", "epsilon", "max_iter"}
TOP_LEVEL_KEYS = {"multiplex", "bipartite", "seeds", "self_loops"} | RWR_KEYS
MULTIPLEX_KEYS = {"layers", "nodes", "directed", "weighted", "delta", "tau", "self_loops"}
BIPARTITE_KEYS = {"path", "directed", "source", "target"}


@dataclass
class RunConfig:
    path: Path
    network: MultilayerNetwork
    rwr: RwrConfig
    seeds_path: Path | None = None
    inputs: list[Path] = field(default_factory=list)


def read_yaml(path: Path) -> dict[str, Any]:
    try:
        with open(path, encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"invalid YAML in {path}: {e}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def _as_float(value: Any, key: str) -> float:
    try:
        result = float(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{key}: expected a number, got {value!r}") from e
    if not np.isfinite(result):
        raise ConfigError(f"{key}: expected a finite number, got {value!r}")
    return result


def _as_bool(value: Any, key: str) -> bool:
    if isinstance(value, bool):
        return value
    raise ConfigError(f"{key}: expected true or false, got {value!r}")


def _per_layer(value: Any, count: int, key: str) -> list[Any]:
    if isinstance(value, list):
        if len(value) != count:
            raise ConfigError(f"{key}: expected {count} entries, got {len(value)}")
        return value
    return [value] * count


def _check_keys(section: Mapping[str, Any], allowed: set[str], where: str) -> None:
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {', '.join(unknown)}")


def _resolve(base: Path, value: Any, key: str) -> Path:
    if not isinstance(value, str) or not value:
        raise ConfigError(f"{key}: expected a file path")
    path = Path(value)
    return path if path.is_absolute() else base / path


def _load_multiplex(
    name: str, section: Mapping[str, Any], base: Path, default_self_loops: str, inputs: list[Path]
) -> MultiplexNetwork:
    where = f"multiplex.{name}"
    if not isinstance(section, Mapping):
        raise ConfigError(f"{where}: expected a mapping")
    _check_keys(section, MULTIPLEX_KEYS, where)
    raw_layers = section.get("layers")
    if not isinstance(raw_layers, list) or not raw_layers:
        raise ConfigError(f"{where}.layers: expected a nonempty list")

    count = len(raw_layers)
    directed = _per_layer(section.get("directed", False), count, f"{where}.directed")
    weighted = _per_layer(section.get("weighted", False), count, f"{where}.weighted")
    self_loops = _per_layer(section.get("self_loops", default_self_loops), count, f"{where}.self_loops")

    table = NodeTable()
    if "nodes" in section:
        nodes_path = _resolve(base, section["nodes"], f"{where}.nodes")
        inputs.append(nodes_path)
        try:
            lines = nodes_path.read_text(encoding="utf-8").splitlines()
        except OSError as e:
            raise ConfigError(f"{where}.nodes: cannot read {nodes_path}: {e}") from e
        for line in lines:
            if line.strip() and not line.startswith("#"):
                table.intern(line.rstrip("\r"))

    layers = []
    for a, entry in enumerate(raw_layers):
        layer_key = f"{where}.layers[{a}]"
        options = entry if isinstance(entry, Mapping) else {"path": entry}
        _check_keys(options, {"path", "directed", "weighted", "self_loops", "name"}, layer_key)
        path = _resolve(base, options.get("path"), layer_key)
        policy = options.get("self_loops", self_loops[a])
        if policy not in config.SELF_LOOP_POLICIES:
            raise ConfigError(f"{layer_key}: self_loops must be one of {config.SELF_LOOP_POLICIES}")
        inputs.append(path)
        layers.append(
            load_edge_list(
                path,
                directed=_as_bool(options.get("directed", directed[a]), f"{layer_key}.directed"),
                weighted=_as_bool(options.get("weighted", weighted[a]), f"{layer_key}.weighted"),
                table=table,
                self_loops=policy,
                name=str(options.get("name", path.stem)),
            )
        )

    delta = _as_float(section.get("delta", config.DEFAULT_DELTA), f"{where}.delta")
    if "tau" in section:
        raw_tau = section["tau"]
        if not isinstance(raw_tau, list):
            raise ConfigError(f"{where}.tau: expected a list")
        tau = tuple(_as_float(t, f"{where}.tau") for t in raw_tau)
    else:
        tau = tuple([1.0 / count] * count)
    return MultiplexNetwork(name=name, node_table=table, layers=tuple(layers), delta=delta, tau=tau)


def _split_pair(key: str, section: Mapping[str, Any], names: tuple[str, ...]) -> tuple[int, int]:
    if "source" in section or "target" in section:
        source, target = section.get("source"), section.get("target")
        if source not in names or target not in names:
            raise ConfigError(f"bipartite.{key}: unknown source/target multiplex")
        return names.index(source), names.index(target)
    splits = [
        (key[:pos], key[pos + 1 :])
        for pos, char in enumerate(key)
        if char == "_" and key[:pos] in names and key[pos + 1 :] in names
    ]
    if len(splits) != 1:
        raise ConfigError(
            f"bipartite.{key}: cannot split into <source>_<target>; add source/target keys"
        )
    source, target = splits[0]
    return names.index(source), names.index(target)


def _name_matrix(value: Any, names: tuple[str, ...], key: str) -> tuple[tuple[float, ...], ...]:
    count = len(names)
    if isinstance(value, Mapping):
        matrix = np.zeros((count, count))
        for row_name, row in value.items():
            if row_name not in names or not isinstance(row, Mapping):
                raise ConfigError(f"{key}: unknown multiplex {row_name!r}")
            for col_name, entry in row.items():
                if col_name not in names:
                    raise ConfigError(f"{key}: unknown multiplex {col_name!r}")
                matrix[names.index(row_name), names.index(col_name)] = _as_float(entry, key)
        return tuple(tuple(float(x) for x in row) for row in matrix)
    if isinstance(value, list) and all(isinstance(row, list) for row in value):
        return tuple(tuple(_as_float(x, key) for x in row) for row in value)
    raise ConfigError(f"{key}: expected a matrix or a nested mapping")


def _name_vector(value: Any, names: tuple[str, ...], key: str) -> tuple[float, ...]:
    if isinstance(value, Mapping):
        vector = [0.0] * len(names)
        for name, entry in value.items():
            if name not in names:
                raise ConfigError(f"{key}: unknown multiplex {name!r}")
            vector[names.index(name)] = _as_float(entry, key)
        return tuple(vector)
    if isinstance(value, list):
        return tuple(_as_float(x, key) for x in value)
    raise ConfigError(f"{key}: expected a list or a mapping")


def parse_rwr(
    data: Mapping[str, Any], names: tuple[str, ...], base: RwrConfig | None = None
) -> RwrConfig:
    """
    Reads walk parameters; omitted keys inherit from `base` (or the defaults).
    `delta` may be one number for every multiplex or a per-name mapping;
    `tau` is a per-name mapping of lists.
    """
    rwr = base or RwrConfig()
    updates: dict[str, Any] = {}
    if "r" in data:
        updates["r"] = _as_float(data["r"], "r")
    if "epsilon" in data:
        updates["epsilon"] = _as_float(data["epsilon"], "epsilon")
    if "max_iter" in data:
        value = data["max_iter"]
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"max_iter: expected an integer, got {value!r}")
        updates["max_iter"] = value
    if "lambda" in data:
        updates["lambda_"] = None if data["lambda"] in (None, "auto") else _name_matrix(data["lambda"], names, "lambda")
    if "eta" in data:
        updates["eta"] = None if data["eta"] in (None, "auto") else _name_vector(data["eta"], names, "eta")
    if "delta" in data:
        raw = data["delta"]
        if isinstance(raw, Mapping):
            delta = [None] * len(names)
            for name, value in raw.items():
                if name not in names:
                    raise ConfigError(f"delta: unknown multiplex {name!r}")
                delta[names.index(name)] = _as_float(value, "delta")
            updates["delta"] = tuple(delta)
        else:
            updates["delta"] = tuple([_as_float(raw, "delta")] * len(names))
    if "tau" in data:
        raw = data["tau"]
        if not isinstance(raw, Mapping):
            raise ConfigError("tau: expected a mapping of multiplex name to list")
        tau: list[tuple[float, ...] | None] = [None] * len(names)
        for name, values in raw.items():
            if name not in names or not isinstance(values, list):
                raise ConfigError(f"tau: unknown multiplex {name!r} or non-list value")
            tau[names.index(name)] = tuple(_as_float(v, "tau") for v in values)
        updates["tau"] = tuple(tau)

    fields = {
        "r": rwr.r,
        "lambda_": rwr.lambda_,
        "eta": rwr.eta,
        "delta": rwr.delta,
        "tau": rwr.tau,
        "epsilon": rwr.epsilon,
        "max_iter": rwr.max_iter,
    }
    fields.update(updates)
    return RwrConfig(**fields)


def load_run_config(path: Path) -> RunConfig:
    """
    Raises:
        ConfigError: Unreadable or malformed configuration
        EdgeListError: Malformed edge list
    """
    path = Path(path).resolve()
    data = read_yaml(path)
    _check_keys(data, TOP_LEVEL_KEYS, str(path))
    base = path.parent
    inputs: list[Path] = [path]

    default_self_loops = data.get("self_loops", config.DEFAULT_SELF_LOOPS)
    if default_self_loops not in config.SELF_LOOP_POLICIES:
        raise ConfigError(f"self_loops must be one of {config.SELF_LOOP_POLICIES}")

    sections = data.get("multiplex")
    if not isinstance(sections, Mapping) or not sections:
        raise ConfigError("multiplex: at least one multiplex network is required")
    multiplexes = tuple(
        _load_multiplex(str(name), section, base, default_self_loops, inputs)
        for name, section in sections.items()
    )
    network = MultilayerNetwork(multiplexes=multiplexes)
    names = network.names

    for key, section in (data.get("bipartite") or {}).items():
        if isinstance(section, str):
            section = {"path": section}
        if not isinstance(section, Mapping):
            raise ConfigError(f"bipartite.{key}: expected a mapping")
        _check_keys(section, BIPARTITE_KEYS, f"bipartite.{key}")
        i, j = _split_pair(str(key), section, names)
        if i == j:
            raise ConfigError(f"bipartite.{key}: source and target must differ")
        if (i, j) in network.bipartites:
            raise ConfigError(f"bipartite.{key}: pair declared twice (an undirected pair covers both directions)")
        bipartite_path = _resolve(base, section.get("path"), f"bipartite.{key}.path")
        inputs.append(bipartite_path)
        bipartite = load_bipartite(
            bipartite_path,
            multiplexes[i].node_table,
            multiplexes[j].node_table,
            i,
            j,
            directed=_as_bool(section.get("directed", False), f"bipartite.{key}.directed"),
        )
        if not bipartite.directed and (j, i) in network.bipartites:
            raise ConfigError(f"bipartite.{key}: undirected pair conflicts with a declared reverse pair")
        network = network.with_bipartite(bipartite)

    seeds_path = _resolve(base, data["seeds"], "seeds") if data.get("seeds") else None
    rwr = parse_rwr(data, names)
    logger.info(
        f"Loaded configuration {path.name}",
        extra={"multiplexes": list(names), "bipartites": len(network.declared_pairs())},
    )
    return RunConfig(path=path, network=network, rwr=rwr, seeds_path=seeds_path, inputs=inputs)


def write_network(
    network: MultilayerNetwork,
    out_dir: Path,
    rwr: RwrConfig | None = None,
    seed_lines: list[tuple[str, str]] | None = None,
) -> Path:
    """
    Serializes a network as a loadable configuration plus edge lists. Node
    files keep ids stable and preserve isolated nodes.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if rwr is not None:
        network = rwr.apply_parameters(network)
    document: dict[str, Any] = {"multiplex": {}, "bipartite": {}}

    for multiplex in network.multiplexes:
        nodes_file = f"{multiplex.name}_nodes.txt"
        (out_dir / nodes_file).write_text(
            "".join(f"{name}\n" for name in multiplex.node_table), encoding="utf-8"
        )
        layers = []
        for a, layer in enumerate(multiplex.layers, start=1):
            layer_file = f"{multiplex.name}_layer{a}.tsv"
            write_edge_list(out_dir / layer_file, layer, multiplex.node_table)
            layers.append(
                {
                    "path": layer_file,
                    "directed": layer.directed,
                    "weighted": layer.weighted,
                    "name": layer.name or f"layer{a}",
                }
            )
        document["multiplex"][multiplex.name] = {
            "nodes": nodes_file,
            "layers": layers,
            "delta": float(multiplex.delta),
            "tau": [float(t) for t in multiplex.tau],
        }

    for i, j in network.declared_pairs():
        bipartite = network.bipartites[(i, j)]
        source, target = network.multiplexes[i], network.multiplexes[j]
        key = f"{source.name}_{target.name}"
        bipartite_file = f"{key}.tsv"
        write_bipartite(out_dir / bipartite_file, bipartite, source.node_table, target.node_table)
        document["bipartite"][key] = {
            "path": bipartite_file,
            "directed": bipartite.directed,
            "source": source.name,
            "target": target.name,
        }

    if seed_lines:
        (out_dir / "seeds.txt").write_text(
            "".join(f"{multiplex}\t{name}\n" for multiplex, name in seed_lines), encoding="utf-8"
        )
        document["seeds"] = "seeds.txt"

    if rwr is not None:
        document["r"] = rwr.r
        if rwr.lambda_ is not None:
            document["lambda"] = [list(row) for row in rwr.lambda_]
        document["eta"] = "auto" if rwr.eta is None else list(rwr.eta)
        document["epsilon"] = rwr.epsilon
        document["max_iter"] = rwr.max_iter

    config_path = out_dir / "config.yaml"
    config_path.write_text(yaml.safe_dump(document, sort_keys=False), encoding="utf-8")
    logger.info(f"Network written to {config_path}")
    return config_path
