"""
Sparse substrate for the supra-heterogeneous matrices.

Matrices are scipy CSR in canonical form (sorted column indices, no duplicates,
no explicit zeros, float64). The walk needs the transpose product, computed as
a scatter over rows through the CSC view of the CSR matrix, so the transpose is
never materialized.
"""

from collections.abc import Mapping
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from exceptions import DimensionError
from logger import get_logger

logger = get_logger()

SparseMatrix = sp.csr_matrix
MultiplexBlockKey = tuple[int, int]
LayerBlockKey = tuple[int, int, int, int]
BlockKey = MultiplexBlockKey | LayerBlockKey


def canonicalize(matrix: sp.spmatrix) -> sp.csr_matrix:
    """Returns a canonical float64 CSR copy. Idempotent."""
    canonical = sp.csr_matrix(matrix, dtype=np.float64, copy=True)
    canonical.sum_duplicates()
    canonical.eliminate_zeros()
    canonical.sort_indices()
    return canonical


def is_canonical(matrix: sp.csr_matrix) -> bool:
    if not sp.isspmatrix_csr(matrix) or matrix.dtype != np.float64:
        return False
    indptr, indices = matrix.indptr, matrix.indices
    if np.any(np.diff(indptr) < 0) or indptr[-1] != indices.size or indices.size != matrix.data.size:
        return False
    if np.any(matrix.data == 0):
        return False
    for row in range(matrix.shape[0]):
        cols = indices[indptr[row] : indptr[row + 1]]
        if cols.size > 1 and np.any(np.diff(cols) <= 0):
            return False
    return True


@dataclass(frozen=True)
class BlockLayout:
    """
    Global supra-index space: multiplex k owns L_k * n_k consecutive indices,
    layer-major, so replica (k, a, i) sits at offset(k) + a * n_k + i.
    """

    layer_counts: tuple[int, ...]
    node_counts: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.layer_counts) != len(self.node_counts):
            raise DimensionError("layer_counts and node_counts differ in length")

    @classmethod
    def from_network(cls, network) -> "BlockLayout":  # type: ignore[no-untyped-def]
        return cls(
            layer_counts=tuple(m.num_layers for m in network.multiplexes),
            node_counts=tuple(m.n for m in network.multiplexes),
        )

    @property
    def num_multiplexes(self) -> int:
        return len(self.layer_counts)

    def size(self, k: int) -> int:
        return self.layer_counts[k] * self.node_counts[k]

    @property
    def offsets(self) -> tuple[int, ...]:
        offsets = [0]
        for k in range(self.num_multiplexes):
            offsets.append(offsets[-1] + self.size(k))
        return tuple(offsets)

    @property
    def dimension(self) -> int:
        return self.offsets[-1]

    def supra_index(self, k: int, layer: int, node: int) -> int:
        return self.offsets[k] + layer * self.node_counts[k] + node

    def replica_indices(self, k: int, node: int) -> np.ndarray:
        return self.offsets[k] + np.arange(self.layer_counts[k]) * self.node_counts[k] + node

    def multiplex_slice(self, k: int) -> slice:
        offsets = self.offsets
        return slice(offsets[k], offsets[k + 1])

    def block_region(self, key: BlockKey) -> tuple[int, int, int, int]:
        """Returns (row offset, col offset, rows, cols) of a block key."""
        offsets = self.offsets
        if len(key) == 2:
            alpha, beta = key
            self._check_multiplex(alpha)
            self._check_multiplex(beta)
            return offsets[alpha], offsets[beta], self.size(alpha), self.size(beta)
        if len(key) == 4:
            alpha, a, beta, b = key
            self._check_multiplex(alpha)
            self._check_multiplex(beta)
            if not (0 <= a < self.layer_counts[alpha] and 0 <= b < self.layer_counts[beta]):
                raise DimensionError(f"layer out of range in block key {key}")
            return (
                self.supra_index(alpha, a, 0),
                self.supra_index(beta, b, 0),
                self.node_counts[alpha],
                self.node_counts[beta],
            )
        raise DimensionError(f"block key must have 2 or 4 entries, got {key}")

    def split(self, vector: np.ndarray) -> list[np.ndarray]:
        """Splits a supra vector into per-multiplex (L_k, n_k) arrays."""
        return [
            vector[self.multiplex_slice(k)].reshape(self.layer_counts[k], self.node_counts[k])
            for k in range(self.num_multiplexes)
        ]

    def _check_multiplex(self, k: int) -> None:
        if not 0 <= k < self.num_multiplexes:
            raise DimensionError(f"multiplex {k} out of range")


def assemble(blocks: Mapping[BlockKey, sp.spmatrix], layout: BlockLayout) -> sp.csr_matrix:
    """
    Places blocks into the D x D supra-index space.

    Raises:
        DimensionError: A block shape does not match its layout region, or two
            blocks cover the same region
    """
    dimension = layout.dimension
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    data: list[np.ndarray] = []
    covered: set[tuple[int, int]] = set()
    covered_layers: dict[tuple[int, int], set[tuple[int, int]]] = {}

    for key in sorted(blocks, key=lambda k: (len(k), k)):
        block = blocks[key]
        row_offset, col_offset, n_rows, n_cols = layout.block_region(key)
        if block.shape != (n_rows, n_cols):
            raise DimensionError(
                f"block {key} has shape {block.shape}, layout expects {(n_rows, n_cols)}"
            )
        multiplex_pair = (key[0], key[1]) if len(key) == 2 else (key[0], key[2])
        if len(key) == 2:
            if multiplex_pair in covered or multiplex_pair in covered_layers:
                raise DimensionError(f"block {key} overlaps another block")
            covered.add(multiplex_pair)
        else:
            layer_pair = (key[1], key[3])
            seen = covered_layers.setdefault(multiplex_pair, set())
            if multiplex_pair in covered or layer_pair in seen:
                raise DimensionError(f"block {key} overlaps another block")
            seen.add(layer_pair)

        coo = canonicalize(block).tocoo()
        rows.append(coo.row.astype(np.int64) + row_offset)
        cols.append(coo.col.astype(np.int64) + col_offset)
        data.append(coo.data)

    if not rows:
        return sp.csr_matrix((dimension, dimension), dtype=np.float64)
    matrix = sp.csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dimension, dimension),
        dtype=np.float64,
    )
    matrix.sort_indices()
    return matrix


class TransposeOperator:
    """
    Applies m^T to vectors. With several workers the rows are split into
    fixed contiguous ranges whose partial products are summed in range order,
    so results are reproducible for a given worker count. The worker pool
    lives as long as the operator; use it as a context manager or call close().
    """

    def __init__(self, matrix: sp.csr_matrix, workers: int = 1):
        self.matrix = matrix
        self.workers = max(1, int(workers))
        self._transpose = matrix.T
        self._chunks: list[tuple[int, int, sp.spmatrix]] = []
        if self.workers > 1 and matrix.shape[0] > self.workers:
            bounds = np.linspace(0, matrix.shape[0], self.workers + 1).astype(int)
            self._chunks = [
                (int(start), int(stop), matrix[start:stop].T)
                for start, stop in zip(bounds[:-1], bounds[1:], strict=True)
            ]
        self._executor: ThreadPoolExecutor | None = None

    def __enter__(self) -> "TransposeOperator":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()

    def close(self) -> None:
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None

    def __call__(self, vector: np.ndarray) -> np.ndarray:
        if vector.shape != (self.matrix.shape[0],):
            raise DimensionError(
                f"vector of length {vector.shape} for a matrix with {self.matrix.shape[0]} rows"
            )
        if not self._chunks:
            return np.asarray(self._transpose @ vector, dtype=np.float64)

        def partial(chunk: tuple[int, int, sp.spmatrix]) -> np.ndarray:
            start, stop, block = chunk
            return np.asarray(block @ vector[start:stop], dtype=np.float64)

        if self._executor is None:
            self._executor = ThreadPoolExecutor(max_workers=self.workers)
        partials = list(self._executor.map(partial, self._chunks))
        result = partials[0].copy()
        for part in partials[1:]:
            result += part
        return result


def transpose_apply(matrix: sp.csr_matrix, vector: np.ndarray, workers: int = 1) -> np.ndarray:
    """
    Returns matrix^T @ vector.

    Raises:
        DimensionError: len(vector) != number of rows
    """
    vector = np.asarray(vector, dtype=np.float64)
    with TransposeOperator(matrix, workers=workers) as operator:
        return operator(vector)


def dump_triplets(matrix: sp.csr_matrix, path: Path) -> None:
    """Writes `row<TAB>col<TAB>value` lines in row-major order."""
    coo = matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", encoding="utf-8") as f:
        for row, col, value in zip(coo.row[order], coo.col[order], coo.data[order], strict=True):
            f.write(f"{int(row)}\t{int(col)}\t{float(value)!r}\n")
    logger.debug(f"Transition triplets written to {path}", extra={"nnz": int(coo.nnz)})
