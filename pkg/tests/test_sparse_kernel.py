import os
import sys

import numpy as np
import pytest
import scipy.sparse as sp

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from exceptions import DimensionError
from sparse_kernel import (
    BlockLayout,
    TransposeOperator,
    assemble,
    canonicalize,
    dump_triplets,
    is_canonical,
    transpose_apply,
)


def _random_csr(rng: np.random.Generator, rows: int, cols: int, density: float = 0.2) -> sp.csr_matrix:
    return sp.random(rows, cols, density=density, format="csr", random_state=rng, dtype=np.float64)


class TestCanonicalize:
    def test_merges_duplicates_and_drops_zeros(self):
        """Test that duplicates are summed and explicit zeros removed"""
        matrix = sp.csr_matrix(
            (np.array([1.0, 2.0, 0.0]), (np.array([0, 0, 1]), np.array([1, 1, 0]))), shape=(2, 2)
        )
        canonical = canonicalize(matrix)
        assert is_canonical(canonical)
        assert canonical.nnz == 1
        assert canonical[0, 1] == 3.0

    def test_idempotent(self):
        rng = np.random.default_rng(1)
        once = canonicalize(_random_csr(rng, 20, 20))
        twice = canonicalize(once)
        np.testing.assert_array_equal(once.indptr, twice.indptr)
        np.testing.assert_array_equal(once.indices, twice.indices)
        np.testing.assert_array_equal(once.data, twice.data)

    def test_unsorted_indices_not_canonical(self):
        matrix = sp.csr_matrix(
            (np.array([1.0, 2.0]), np.array([1, 0]), np.array([0, 2])), shape=(1, 2)
        )
        assert not is_canonical(matrix)


class TestBlockLayout:
    def test_supra_index_is_layer_major(self):
        """Test replica (k, a, i) sits at offset(k) + a * n_k + i"""
        layout = BlockLayout(layer_counts=(2, 3), node_counts=(4, 5))
        assert layout.offsets == (0, 8, 23)
        assert layout.dimension == 23
        assert layout.supra_index(0, 1, 2) == 6
        assert layout.supra_index(1, 2, 4) == 8 + 2 * 5 + 4
        np.testing.assert_array_equal(layout.replica_indices(1, 3), [11, 16, 21])

    def test_split_reshapes_per_multiplex(self):
        layout = BlockLayout(layer_counts=(2, 1), node_counts=(2, 3))
        parts = layout.split(np.arange(7.0))
        assert parts[0].shape == (2, 2)
        np.testing.assert_array_equal(parts[1], [[4.0, 5.0, 6.0]])

    def test_mismatched_lengths_rejected(self):
        with pytest.raises(DimensionError):
            BlockLayout(layer_counts=(1, 2), node_counts=(3,))


class TestAssemble:
    def test_places_blocks(self):
        layout = BlockLayout(layer_counts=(1, 1), node_counts=(2, 1))
        blocks = {
            (0, 0): sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]])),
            (0, 1): sp.csr_matrix(np.array([[0.5], [0.0]])),
        }
        matrix = assemble(blocks, layout)
        expected = np.array([[0.0, 1.0, 0.5], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
        np.testing.assert_array_equal(matrix.toarray(), expected)
        assert is_canonical(matrix)

    def test_layer_blocks(self):
        layout = BlockLayout(layer_counts=(2,), node_counts=(2,))
        blocks = {(0, 1, 0, 0): sp.csr_matrix(np.array([[2.0, 0.0], [0.0, 3.0]]))}
        matrix = assemble(blocks, layout).toarray()
        assert matrix[2, 0] == 2.0
        assert matrix[3, 1] == 3.0

    def test_shape_mismatch_rejected(self):
        layout = BlockLayout(layer_counts=(1,), node_counts=(2,))
        with pytest.raises(DimensionError):
            assemble({(0, 0): sp.csr_matrix((3, 3))}, layout)

    def test_overlapping_blocks_rejected(self):
        layout = BlockLayout(layer_counts=(2,), node_counts=(2,))
        blocks = {(0, 0): sp.csr_matrix((4, 4)), (0, 0, 0, 0): sp.csr_matrix((2, 2))}
        with pytest.raises(DimensionError):
            assemble(blocks, layout)

    def test_empty_block_set(self):
        layout = BlockLayout(layer_counts=(1,), node_counts=(3,))
        assert assemble({}, layout).shape == (3, 3)


class TestTransposeApply:
    def test_matches_dense_product(self):
        """Test that the transpose product equals the dense oracle"""
        rng = np.random.default_rng(7)
        matrix = canonicalize(_random_csr(rng, 40, 40))
        vector = rng.random(40)
        np.testing.assert_allclose(
            transpose_apply(matrix, vector), matrix.toarray().T @ vector, rtol=0, atol=1e-14
        )

    def test_workers_agree_with_single_thread(self):
        rng = np.random.default_rng(8)
        matrix = canonicalize(_random_csr(rng, 101, 101))
        vector = rng.random(101)
        single = transpose_apply(matrix, vector)
        parallel = transpose_apply(matrix, vector, workers=4)
        np.testing.assert_allclose(parallel, single, rtol=0, atol=1e-14)

    def test_parallel_operator_is_reproducible(self):
        rng = np.random.default_rng(9)
        operator = TransposeOperator(canonicalize(_random_csr(rng, 64, 64)), workers=3)
        vector = rng.random(64)
        np.testing.assert_array_equal(operator(vector), operator(vector))

    def test_operator_reuses_one_pool(self):
        """Test that repeated products share a worker pool that close() releases"""
        rng = np.random.default_rng(13)
        matrix = canonicalize(_random_csr(rng, 80, 80))
        vector = rng.random(80)
        with TransposeOperator(matrix, workers=4) as operator:
            first = operator(vector)
            pool = operator._executor
            assert pool is not None
            second = operator(vector)
            assert operator._executor is pool
        assert operator._executor is None
        np.testing.assert_array_equal(first, second)
        np.testing.assert_allclose(first, matrix.T @ vector, rtol=0, atol=1e-14)

    def test_length_mismatch_rejected(self):
        matrix = sp.csr_matrix((3, 3), dtype=np.float64)
        with pytest.raises(DimensionError):
            transpose_apply(matrix, np.ones(4))


def test_dump_triplets_row_major(tmp_path):
    matrix = sp.csr_matrix(np.array([[0.0, 0.5], [0.25, 0.0]]))
    path = tmp_path / "triplets.tsv"
    dump_triplets(matrix, path)
    assert path.read_text(encoding="utf-8") == "0\t1\t0.5\n1\t0\t0.25\n"
