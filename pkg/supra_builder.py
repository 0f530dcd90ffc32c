"""
Supra-heterogeneous transition matrix of a universal multilayer network.

Each multiplex contributes a block row [S_a1 ... S_aN] built independently
from the others (normalization is row-local), which lets callers that edit a
single bipartite network rebuild only the block rows it touches.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
import scipy.sparse as sp

import config
from exceptions import ConfigError
from logger import get_logger
from network import BipartiteNetwork, MultilayerNetwork, MultiplexNetwork
from sparse_kernel import BlockKey, BlockLayout, assemble, canonicalize, dump_triplets

logger = get_logger()

Matrix = tuple[tuple[float, ...], ...]


@dataclass(frozen=True)
class RwrConfig:
    """
    Walk parameters. `lambda_` and `eta` left as None take their defaults
    against the concrete network; `delta` and `tau` optionally override the
    values carried by each multiplex (None entries keep the multiplex value).
    """

    r: float = config.DEFAULT_RESTART
    lambda_: Matrix | None = None
    eta: tuple[float, ...] | None = None
    delta: tuple[float | None, ...] | None = None
    tau: tuple[tuple[float, ...] | None, ...] | None = None
    epsilon: float = config.DEFAULT_EPSILON
    max_iter: int = config.DEFAULT_MAX_ITER

    @property
    def eta_is_auto(self) -> bool:
        return self.eta is None

    def apply_parameters(self, network: MultilayerNetwork) -> MultilayerNetwork:
        """Returns the network carrying this config's delta/tau overrides."""
        if self.delta is None and self.tau is None:
            return network
        count = network.num_multiplexes
        delta = {k: d for k, d in enumerate(self.delta or ()) if d is not None and k < count}
        tau = {k: t for k, t in enumerate(self.tau or ()) if t is not None and k < count}
        return network.with_parameters(delta=delta, tau=tau)

    def resolve_lambda(self, network: MultilayerNetwork) -> np.ndarray:
        """
        Returns the N x N jump matrix. The default gives the stay probability and
        each declared partner the same share 1 / (1 + #partners).
        """
        count = network.num_multiplexes
        if self.lambda_ is not None:
            return np.asarray(self.lambda_, dtype=np.float64).reshape(count, count)
        lam = np.zeros((count, count), dtype=np.float64)
        for alpha in range(count):
            partners = network.partners(alpha)
            share = 1.0 / (1 + len(partners))
            lam[alpha, alpha] = share
            for beta in partners:
                lam[alpha, beta] = share
        return lam

    def eta_vector(self, seeded: Iterable[int], count: int, restrict: bool = False) -> np.ndarray:
        """
        Returns the restart weight per multiplex.

        The default is uniform over seeded multiplexes. With `restrict`, an
        explicit eta is zeroed outside the seeded multiplexes and renormalized.
        """
        seeded = sorted(set(seeded))
        if self.eta is None:
            eta = np.zeros(count, dtype=np.float64)
            if seeded:
                eta[seeded] = 1.0 / len(seeded)
            return eta
        eta = np.asarray(self.eta, dtype=np.float64).copy()
        if restrict:
            mask = np.zeros(count, dtype=bool)
            mask[seeded] = True
            eta[~mask] = 0.0
            total = eta.sum()
            if total > 0:
                eta /= total
        return eta

    def check(self, network: MultilayerNetwork) -> None:
        """
        Raises:
            ConfigError: Any parameter outside its domain
        """
        count = network.num_multiplexes
        tol = config.PROBABILITY_TOLERANCE
        if not 0.0 < self.r <= 1.0:
            raise ConfigError(f"restart probability r={self.r} must lie in (0, 1]")
        if self.epsilon <= 0:
            raise ConfigError(f"epsilon={self.epsilon} must be positive")
        if self.max_iter < 1:
            raise ConfigError(f"max_iter={self.max_iter} must be at least 1")

        if self.lambda_ is not None:
            lam = np.asarray(self.lambda_, dtype=np.float64)
            if lam.shape != (count, count):
                raise ConfigError(f"lambda must be {count}x{count}, got shape {lam.shape}")
            if np.any(lam < 0) or not np.all(np.isfinite(lam)):
                raise ConfigError("lambda entries must be finite and nonnegative")
            for alpha in range(count):
                if abs(lam[alpha].sum() - 1.0) > tol:
                    raise ConfigError(
                        f"lambda row {alpha} sums to {lam[alpha].sum()!r}, expected 1"
                    )
                for beta in range(count):
                    if alpha != beta and lam[alpha, beta] > 0 and (alpha, beta) not in network.bipartites:
                        raise ConfigError(
                            f"lambda[{alpha}][{beta}] > 0 but no bipartite network "
                            f"{network.names[alpha]} -> {network.names[beta]} is declared"
                        )

        if self.eta is not None:
            eta = np.asarray(self.eta, dtype=np.float64)
            if eta.shape != (count,):
                raise ConfigError(f"eta must have {count} entries, got {eta.size}")
            if np.any(eta < 0) or abs(eta.sum() - 1.0) > tol:
                raise ConfigError(f"eta must be nonnegative and sum to 1 (sum={eta.sum()!r})")

        if self.delta is not None and len(self.delta) != count:
            raise ConfigError(f"delta override must have {count} entries")
        if self.tau is not None and len(self.tau) != count:
            raise ConfigError(f"tau override must have {count} entries")

    def resolve(self, network: MultilayerNetwork) -> RwrConfig:
        """
        Checks the parameters and returns them with lambda, delta and tau made
        explicit for `network`. An automatic eta stays None: it depends on the seeds.

        Raises:
            ConfigError: Any parameter outside its domain
        """
        self.check(network)
        effective = self.apply_parameters(network)
        return replace(
            self,
            lambda_=tuple(tuple(float(x) for x in row) for row in self.resolve_lambda(network)),
            delta=tuple(float(m.delta) for m in effective.multiplexes),
            tau=tuple(tuple(float(t) for t in m.tau) for m in effective.multiplexes),
        )

    def to_dict(self, network: MultilayerNetwork) -> dict[str, Any]:
        """Effective parameters, defaults included."""
        resolved = self.resolve(network)
        effective = resolved.apply_parameters(network)
        return {
            "r": resolved.r,
            "lambda": [list(row) for row in resolved.lambda_ or ()],
            "eta": "auto" if resolved.eta is None else list(resolved.eta),
            "delta": {m.name: m.effective_delta for m in effective.multiplexes},
            "tau": {m.name: list(m.tau) for m in effective.multiplexes},
            "epsilon": resolved.epsilon,
            "max_iter": resolved.max_iter,
        }


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    matrix: sp.csr_matrix
    layout: BlockLayout
    dangling: np.ndarray
    lambda_: np.ndarray = field(repr=False)
    names: tuple[tuple[str, ...], ...] = ()

    @property
    def dimension(self) -> int:
        return self.layout.dimension

    @property
    def dangling_mask(self) -> np.ndarray:
        mask = np.zeros(self.dimension, dtype=bool)
        mask[self.dangling] = True
        return mask

    def dump(self, path: Path) -> None:
        dump_triplets(self.matrix, path)


def build_supra_adjacency(multiplex: MultiplexNetwork) -> sp.csr_matrix:
    """
    Literal supra-adjacency of one multiplex: (1 - delta) * A[a] on the diagonal
    blocks and delta / (L - 1) * I off the diagonal; a single layer is returned
    unscaled.
    """
    layers = multiplex.num_layers
    adjacencies = multiplex.adjacencies
    if layers == 1:
        return canonicalize(adjacencies[0])

    delta = multiplex.effective_delta
    identity = sp.identity(multiplex.n, format="csr", dtype=np.float64)
    blocks = [
        [
            (1.0 - delta) * adjacencies[a] if a == b else (delta / (layers - 1)) * identity
            for b in range(layers)
        ]
        for a in range(layers)
    ]
    return canonicalize(sp.bmat(blocks, format="csr"))


def build_bipartite_block(
    bipartite: BipartiteNetwork,
    source_layers: int,
    target_layers: int,
    n_source: int,
    n_target: int,
) -> sp.csr_matrix:
    """Tiles the n_i x n_j bipartite matrix source_layers x target_layers times."""
    tile = np.ones((source_layers, target_layers), dtype=np.float64)
    return canonicalize(sp.kron(tile, bipartite.matrix(n_source, n_target), format="csr"))


def _row_normalize(matrix: sp.csr_matrix) -> tuple[sp.csr_matrix, np.ndarray]:
    sums = np.asarray(matrix.sum(axis=1)).ravel()
    nonempty = sums > 0
    inverse = np.zeros_like(sums)
    inverse[nonempty] = 1.0 / sums[nonempty]
    return canonicalize(sp.diags(inverse) @ matrix), nonempty


def coupled_intra_transitions(multiplex: MultiplexNetwork) -> tuple[sp.csr_matrix, np.ndarray]:
    """
    Row-stochastic walk inside one multiplex.

    Each layer is row-normalized first, then coupled: a replica with
    intra-layer edges stays in its layer with 1 - delta and jumps to each other
    replica with delta / (L - 1); a replica without edges spreads its whole mass
    over its other replicas when delta > 0. Returns the matrix and a mask of
    nonempty rows.
    """
    layers, n = multiplex.num_layers, multiplex.n
    delta = multiplex.effective_delta
    normalized: list[sp.csr_matrix] = []
    stay: list[np.ndarray] = []
    hop: list[np.ndarray] = []
    for adjacency in multiplex.adjacencies:
        a_hat, has_edges = _row_normalize(adjacency)
        normalized.append(a_hat)
        if layers == 1:
            stay.append(np.ones(n))
            hop.append(np.zeros(n))
        else:
            stay.append(np.where(has_edges, 1.0 - delta, 0.0))
            isolated_hop = 1.0 / (layers - 1) if delta > 0 else 0.0
            hop.append(np.where(has_edges, delta / (layers - 1), isolated_hop))

    if layers == 1:
        matrix = normalized[0]
    else:
        blocks = [
            [
                sp.diags(stay[a]) @ normalized[a] if a == b else sp.diags(hop[a])
                for b in range(layers)
            ]
            for a in range(layers)
        ]
        matrix = canonicalize(sp.bmat(blocks, format="csr"))
    return matrix, np.diff(matrix.indptr) > 0


class SupraBuilder:
    """
    Builds the normalized transition matrix block row by block row and keeps
    the rows so an edited network can be rebuilt locally with `rebuild`.
    """

    def __init__(self, network: MultilayerNetwork, rwr_config: RwrConfig):
        rwr_config.check(network)
        self.config = rwr_config
        self.network = rwr_config.apply_parameters(network)
        self.layout = BlockLayout.from_network(self.network)
        self.lambda_ = rwr_config.resolve_lambda(self.network)
        self._intra: dict[int, tuple[sp.csr_matrix, np.ndarray]] = {}
        self._rows: dict[int, dict[BlockKey, sp.csr_matrix]] = {}

    def _intra_for(self, alpha: int) -> tuple[sp.csr_matrix, np.ndarray]:
        if alpha not in self._intra:
            self._intra[alpha] = coupled_intra_transitions(self.network.multiplexes[alpha])
        return self._intra[alpha]

    def block_row(self, alpha: int) -> dict[BlockKey, sp.csr_matrix]:
        """Normalized blocks (alpha, beta) for every beta reachable from alpha."""
        if alpha in self._rows:
            return self._rows[alpha]

        network = self.network
        source = network.multiplexes[alpha]
        intra, has_intra = self._intra_for(alpha)

        inter: dict[int, tuple[sp.csr_matrix, np.ndarray]] = {}
        inter_mass = np.zeros(source.n, dtype=np.float64)
        for beta in network.partners(alpha):
            target = network.multiplexes[beta]
            b_hat, has_edges = _row_normalize(
                network.bipartites[(alpha, beta)].matrix(source.n, target.n)
            )
            mass = np.where(has_edges, self.lambda_[alpha, beta], 0.0)
            if not np.any(mass > 0):
                continue
            tile = np.full((source.num_layers, target.num_layers), 1.0 / target.num_layers)
            inter[beta] = (canonicalize(sp.kron(tile, b_hat, format="csr")), mass)
            inter_mass += mass

        # Per supra-row (layer-major replicas of each node).
        total = np.tile(inter_mass, source.num_layers)
        stay = np.where(has_intra, np.clip(1.0 - total, 0.0, 1.0), 0.0)
        spread = np.ones_like(total)
        only_inter = ~has_intra & (total > 0)
        spread[only_inter] = 1.0 / total[only_inter]

        blocks: dict[BlockKey, sp.csr_matrix] = {
            (alpha, alpha): canonicalize(sp.diags(stay) @ intra)
        }
        for beta, (tiled, mass) in inter.items():
            scale = np.tile(mass, source.num_layers) * spread
            blocks[(alpha, beta)] = canonicalize(sp.diags(scale) @ tiled)

        self._rows[alpha] = blocks
        return blocks

    def build(self) -> TransitionMatrix:
        blocks: dict[BlockKey, sp.csr_matrix] = {}
        for alpha in range(self.network.num_multiplexes):
            blocks.update(self.block_row(alpha))
        matrix = assemble(blocks, self.layout)
        dangling = np.flatnonzero(np.diff(matrix.indptr) == 0)
        logger.debug(
            "Transition matrix built",
            extra={"dimension": self.layout.dimension, "nnz": int(matrix.nnz), "dangling": int(dangling.size)},
        )
        return TransitionMatrix(
            matrix=matrix,
            layout=self.layout,
            dangling=dangling,
            lambda_=self.lambda_,
            names=tuple(m.node_table.names for m in self.network.multiplexes),
        )

    def rebuild(self, network: MultilayerNetwork, changed: Iterable[int]) -> SupraBuilder:
        """
        Returns a builder for an edited network that reuses every block row
        outside `changed`. Only valid when the edits are confined to bipartite
        networks whose source multiplex is in `changed`.
        """
        clone = SupraBuilder.__new__(SupraBuilder)
        clone.config = self.config
        clone.network = self.config.apply_parameters(network)
        clone.layout = BlockLayout.from_network(clone.network)
        clone.lambda_ = self.config.resolve_lambda(clone.network)
        same_shape = clone.layout == self.layout and np.array_equal(clone.lambda_, self.lambda_)
        changed = set(changed)
        clone._intra = {
            k: value
            for k, value in self._intra.items()
            if same_shape and clone.network.multiplexes[k].layers is self.network.multiplexes[k].layers
        }
        clone._rows = {
            k: row for k, row in self._rows.items() if same_shape and k not in changed
        }
        return clone


def normalize(network: MultilayerNetwork, rwr_config: RwrConfig) -> TransitionMatrix:
    """
    Builds the row-stochastic transition matrix of a multilayer network.

    Raises:
        ConfigError: Invalid parameters, including lambda mass toward an undeclared bipartite
    """
    return SupraBuilder(network, rwr_config).build()


def row_masses(transition: TransitionMatrix, alpha: int) -> Mapping[int, np.ndarray]:
    """Probability mass each supra-row of multiplex alpha sends into every multiplex."""
    layout = transition.layout
    rows = transition.matrix[layout.multiplex_slice(alpha)]
    return {
        beta: np.asarray(rows[:, layout.multiplex_slice(beta)].sum(axis=1)).ravel()
        for beta in range(layout.num_multiplexes)
    }
