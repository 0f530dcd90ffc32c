import os
import sys
import tempfile
import unittest
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from edge_list import (
    load_bipartite,
    load_edge_list,
    read_seed_file,
    resolve_seed_names,
    write_edge_list,
)
from exceptions import EdgeListError, NetworkValidationError, SeedError
from network import BipartiteNetwork, Layer, MultilayerNetwork, NodeTable, edge_multiset
from tests.builders import make_bipartite, make_multiplex, make_network
from validation import require_valid, validate


class TestNodeTable(unittest.TestCase):
    def test_ids_follow_first_occurrence(self):
        """Test that ids are dense and assigned in first-occurrence order"""
        table = NodeTable(["b", "a", "b", "c"])
        self.assertEqual(len(table), 3)
        self.assertEqual(table.id_of("b"), 0)
        self.assertEqual(table.id_of("a"), 1)
        self.assertEqual(table.name_of(2), "c")

    def test_bijection(self):
        """Test that name_of and id_of are inverse"""
        table = NodeTable(f"node{i}" for i in range(50))
        for node_id in range(50):
            self.assertEqual(table.id_of(table.name_of(node_id)), node_id)

    def test_copy_is_independent(self):
        """Test that interning into a copy leaves the original untouched"""
        table = NodeTable(["a"])
        copy = table.copy()
        copy.intern("b")
        self.assertEqual(len(table), 1)
        self.assertNotIn("b", table)
        self.assertIn("b", copy)


class TestLayer(unittest.TestCase):
    def test_undirected_duplicates_collapse(self):
        """Test that (a, b) and (b, a) are the same undirected edge"""
        layer = Layer.from_edges([0, 1, 0], [1, 0, 1])
        self.assertEqual(layer.edges(), [(0, 1, 1.0)])

    def test_weighted_duplicates_sum(self):
        """Test that duplicate weighted edges have their weights summed"""
        layer = Layer.from_edges([0, 0], [1, 1], [1.5, 2.0], directed=True, weighted=True)
        self.assertEqual(layer.edges(), [(0, 1, 3.5)])

    def test_directed_keeps_both_directions(self):
        layer = Layer.from_edges([0, 1], [1, 0], directed=True)
        self.assertEqual(layer.num_edges, 2)

    def test_adjacency_is_symmetric_for_undirected(self):
        """Test that undirected adjacency mirrors every non-loop edge"""
        layer = Layer.from_edges([0, 1, 2], [1, 2, 2])
        adjacency = layer.adjacency(3).toarray()
        np.testing.assert_array_equal(adjacency, adjacency.T)
        self.assertEqual(adjacency[2, 2], 1.0)

    def test_zero_weight_edges_dropped(self):
        layer = Layer.from_edges([0, 1], [1, 2], [0.0, 2.0], directed=True, weighted=True)
        self.assertEqual(layer.edges(), [(1, 2, 2.0)])

    def test_self_loop_drop_policy(self):
        layer = Layer.from_edges([0, 1], [0, 2], self_loops="drop")
        self.assertEqual(layer.edges(), [(1, 2, 1.0)])


class TestMultilayerNetwork(unittest.TestCase):
    def setUp(self):
        self.genes = make_multiplex("gene", ["g1", "g2"], [[("g1", "g2")]])
        self.diseases = make_multiplex("disease", ["d1"], [[]])

    def test_undirected_bipartite_materializes_transpose(self):
        """Test that an undirected bipartite also stores its mirror"""
        network = make_network(
            [self.genes, self.diseases],
            [make_bipartite((self.genes, self.diseases), 0, 1, [("g1", "d1"), ("g2", "d1")])],
        )
        self.assertIn((1, 0), network.bipartites)
        self.assertTrue(network.bipartites[(1, 0)].mirror)
        self.assertEqual(network.declared_pairs(), [(0, 1)])
        self.assertEqual(network.bipartites[(1, 0)].edges(), [(0, 0, 1.0), (0, 1, 1.0)])

    def test_edge_removal_updates_mirror(self):
        network = make_network(
            [self.genes, self.diseases],
            [make_bipartite((self.genes, self.diseases), 0, 1, [("g1", "d1"), ("g2", "d1")])],
        )
        edited = network.without_bipartite_edge((0, 1), 0, 0)
        self.assertEqual(edited.bipartites[(0, 1)].edges(), [(1, 0, 1.0)])
        self.assertEqual(edited.bipartites[(1, 0)].edges(), [(0, 1, 1.0)])
        self.assertEqual(len(edge_multiset(network)), 5)

    def test_directed_bipartite_has_no_mirror(self):
        bipartite = BipartiteNetwork.from_edges(0, 1, [0], [0], directed=True)
        network = make_network([self.genes, self.diseases], [bipartite])
        self.assertNotIn((1, 0), network.bipartites)
        self.assertEqual(network.partners(0), [1])
        self.assertEqual(network.partners(1), [])

    def test_single_layer_forces_zero_delta(self):
        self.assertEqual(self.genes.effective_delta, 0.0)

    def test_new_nodes_with_self_loops(self):
        grown = self.genes.with_new_nodes(["x"], self_loops=True)
        self.assertEqual(grown.n, 3)
        self.assertIn((2, 2, 1.0), grown.layers[0].edges())
        self.assertEqual(self.genes.n, 2)


class TestEdgeListLoading:
    def _write(self, tmp_path: Path, text: str) -> Path:
        path = tmp_path / "layer.tsv"
        path.write_text(text, encoding="utf-8")
        return path

    def test_comments_and_blank_lines_skipped(self, tmp_path):
        """Test that comments and blank lines are ignored"""
        path = self._write(tmp_path, "# header\n\na\tb\nb\tc\n")
        table = NodeTable()
        layer = load_edge_list(path, directed=False, weighted=False, table=table)
        assert table.names == ("a", "b", "c")
        assert layer.num_edges == 2
        assert layer.name == "layer"

    def test_malformed_line_reports_line_number(self, tmp_path):
        path = self._write(tmp_path, "a\tb\na b\n")
        with pytest.raises(EdgeListError) as exc_info:
            load_edge_list(path, directed=False, weighted=False, table=NodeTable())
        assert exc_info.value.line_no == 2

    def test_negative_weight_rejected(self, tmp_path):
        path = self._write(tmp_path, "a\tb\t-1\n")
        with pytest.raises(EdgeListError, match="negative"):
            load_edge_list(path, directed=False, weighted=True, table=NodeTable())

    def test_weight_in_unweighted_layer_rejected(self, tmp_path):
        path = self._write(tmp_path, "a\tb\t2.0\n")
        with pytest.raises(EdgeListError, match="unweighted"):
            load_edge_list(path, directed=False, weighted=False, table=NodeTable())

    def test_failed_load_leaves_table_untouched(self, tmp_path):
        """Test that a file failing to parse interns no names"""
        path = self._write(tmp_path, "a\tb\nc\n")
        table = NodeTable(["z"])
        with pytest.raises(EdgeListError):
            load_edge_list(path, directed=False, weighted=False, table=table)
        assert table.names == ("z",)

    def test_weighted_duplicates_summed_on_load(self, tmp_path):
        path = self._write(tmp_path, "a\tb\t1.5\nb\ta\t0.5\n")
        layer = load_edge_list(path, directed=False, weighted=True, table=NodeTable())
        assert layer.edges() == [(0, 1, 2.0)]

    def test_write_then_load_preserves_edges(self, tmp_path):
        table = NodeTable(["a", "b", "c"])
        layer = Layer.from_edges([0, 1], [1, 2], [0.25, 3.0], directed=True, weighted=True)
        path = tmp_path / "out.tsv"
        write_edge_list(path, layer, table)
        loaded = load_edge_list(path, directed=True, weighted=True, table=table.copy())
        assert loaded.edges() == layer.edges()

    def test_bipartite_unknown_node_rejected(self, tmp_path):
        path = self._write(tmp_path, "g1\td1\ng9\td1\n")
        with pytest.raises(EdgeListError) as exc_info:
            load_bipartite(path, NodeTable(["g1"]), NodeTable(["d1"]), 0, 1, directed=False)
        assert exc_info.value.line_no == 2
        assert "g9" in str(exc_info.value)


class TestSeeds:
    @pytest.fixture
    def network(self) -> MultilayerNetwork:
        genes = make_multiplex("gene", ["g1", "shared"], [[("g1", "shared")]])
        drugs = make_multiplex("drug", ["x1", "shared"], [[("x1", "shared")]])
        return make_network([genes, drugs])

    def test_seed_file_forms(self, tmp_path):
        path = tmp_path / "seeds.txt"
        path.write_text("# seeds\ng1\ndrug\tx1\n", encoding="utf-8")
        assert read_seed_file(path) == [(None, "g1"), ("drug", "x1")]

    def test_resolves_bare_and_prefixed_names(self, network):
        resolved = resolve_seed_names(network, [(None, "g1"), ("drug", "shared")])
        assert list(resolved) == [0, 1]
        np.testing.assert_array_equal(resolved[0], [0])
        np.testing.assert_array_equal(resolved[1], [1])

    def test_ambiguous_name_rejected(self, network):
        with pytest.raises(SeedError, match="ambiguous"):
            resolve_seed_names(network, [(None, "shared")])

    def test_unknown_name_rejected(self, network):
        with pytest.raises(SeedError):
            resolve_seed_names(network, [(None, "nope")])

    def test_unknown_multiplex_rejected(self, network):
        with pytest.raises(SeedError):
            resolve_seed_names(network, [("protein", "g1")])


class TestValidation(unittest.TestCase):
    def test_reports_overlap_percentages(self):
        """Test that overlap percentages count the covered nodes of each side"""
        genes = make_multiplex("gene", ["g1", "g2", "g3", "g4"], [[("g1", "g2")]])
        diseases = make_multiplex("disease", ["d1", "d2"], [[("d1", "d2")]])
        network = make_network(
            [genes, diseases], [make_bipartite((genes, diseases), 0, 1, [("g1", "d1"), ("g2", "d1")])]
        )
        report = validate(network)
        self.assertTrue(report.valid)
        overlap = report.overlap((0, 1))
        self.assertEqual(overlap.edges, 2)
        self.assertAlmostEqual(overlap.source_coverage, 50.0)
        self.assertAlmostEqual(overlap.target_coverage, 50.0)
        self.assertEqual(report.multiplexes[0].isolated, ["g3", "g4"])

    def test_tau_not_summing_to_one_is_a_violation(self):
        multiplex = make_multiplex("m", ["a", "b"], [[("a", "b")], [("a", "b")]], tau=(0.5, 0.6))
        report = validate(make_network([multiplex]))
        self.assertFalse(report.valid)
        self.assertTrue(any("tau" in v for v in report.violations))

    def test_delta_outside_unit_interval_is_a_violation(self):
        multiplex = make_multiplex("m", ["a", "b"], [[("a", "b")]], delta=1.5)
        with self.assertRaises(NetworkValidationError):
            require_valid(make_network([multiplex]))

    def test_out_of_range_bipartite_id_is_a_violation(self):
        genes = make_multiplex("gene", ["g1"], [[]])
        diseases = make_multiplex("disease", ["d1"], [[]])
        bipartite = BipartiteNetwork.from_edges(0, 1, [0], [3], directed=True)
        report = validate(make_network([genes, diseases], [bipartite]))
        self.assertFalse(report.valid)

    def test_report_lines_have_header(self):
        multiplex = make_multiplex("m", ["a", "b"], [[("a", "b")]])
        lines = validate(make_network([multiplex])).to_lines(("m",))
        self.assertEqual(lines[0], "section\titem\tvalue")
        self.assertIn("multiplex\tm.nodes\t2", lines)


def test_edge_list_roundtrip_through_temp_directory():
    """Test that unweighted layers are written without a weight column"""
    with tempfile.TemporaryDirectory() as tmpdir:
        table = NodeTable(["a", "b"])
        path = Path(tmpdir) / "edges.tsv"
        write_edge_list(path, Layer.from_edges([0], [1]), table)
        assert path.read_text(encoding="utf-8") == "a\tb\n"
