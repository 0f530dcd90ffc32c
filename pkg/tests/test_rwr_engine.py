import os
import sys
import time
import unittest

import networkx as nx
import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from exceptions import ConvergenceError, RestartError, SeedError
from network import Layer, MultilayerNetwork, MultiplexNetwork, NodeTable
from rwr_engine import (
    SeedSet,
    build_restart,
    extract_subnetwork,
    rank,
    rank_of,
    run_rwr,
    solve,
    write_ranking,
)
from supra_builder import RwrConfig, normalize
from synth import SynthSpec, generate
from tests.builders import (
    dense_steady_state,
    make_bipartite,
    make_multiplex,
    make_network,
    path_monoplex,
    random_multilayer,
)
from validation import validate


def _graph_network(graph: nx.Graph) -> MultilayerNetwork:
    """Monoplex with node i of the graph at id i."""
    nodes = sorted(graph.nodes())
    table = NodeTable(str(i) for i in nodes)
    edges = list(graph.edges())
    layer = Layer.from_edges([u for u, _ in edges], [v for _, v in edges])
    multiplex = MultiplexNetwork(name="g", node_table=table, layers=(layer,), delta=0.0, tau=(1.0,))
    return MultilayerNetwork(multiplexes=(multiplex,))


def _ring(size: int) -> MultilayerNetwork:
    nodes = [f"v{i}" for i in range(size)]
    edges = [(nodes[i], nodes[(i + 1) % size]) for i in range(size)]
    return make_network([make_multiplex("ring", nodes, [edges])])


class TestRestartVector(unittest.TestCase):
    def test_single_seed_monoplex(self):
        network = path_monoplex(3)
        restart = build_restart(network, RwrConfig(), SeedSet.from_ids({0: [0]}))
        np.testing.assert_array_equal(restart.p0, [1.0, 0.0, 0.0])

    def test_seed_spread_over_layers_by_tau(self):
        """Test that a seed puts tau of the mass on each of its replicas"""
        multiplex = make_multiplex("m", ["a", "b"], [[("a", "b")], [("a", "b")]], tau=(0.5, 0.5))
        restart = build_restart(make_network([multiplex]), RwrConfig(), SeedSet.from_ids({0: [1]}))
        np.testing.assert_array_equal(restart.p0, [0.0, 0.5, 0.0, 0.5])

    def test_explicit_eta_across_multiplexes(self):
        first = make_multiplex("A", ["a0", "a1"], [[("a0", "a1")]])
        second = make_multiplex("B", ["b0", "b1"], [[("b0", "b1")]])
        network = make_network([first, second])
        restart = build_restart(
            network, RwrConfig(eta=(0.3, 0.7)), SeedSet.from_ids({0: [0], 1: [1]})
        )
        np.testing.assert_allclose(restart.p0, [0.3, 0.0, 0.0, 0.7])

    def test_default_eta_is_uniform_over_seeded_multiplexes(self):
        first = make_multiplex("A", ["a0", "a1"], [[("a0", "a1")]])
        second = make_multiplex("B", ["b0", "b1"], [[("b0", "b1")]])
        third = make_multiplex("C", ["c0"], [[]])
        network = make_network([first, second, third])
        restart = build_restart(network, RwrConfig(), SeedSet.from_ids({0: [0, 1], 1: [0]}))
        np.testing.assert_allclose(restart.p0, [0.25, 0.25, 0.5, 0.0, 0.0])
        np.testing.assert_allclose(restart.eta, [0.5, 0.5, 0.0])

    def test_no_seeds_rejected(self):
        with self.assertRaises(RestartError):
            build_restart(path_monoplex(2), RwrConfig(), SeedSet.from_ids({}))

    def test_eta_on_seedless_multiplex_rejected(self):
        first = make_multiplex("A", ["a0"], [[]])
        second = make_multiplex("B", ["b0"], [[]])
        network = make_network([first, second])
        with self.assertRaises(RestartError):
            build_restart(network, RwrConfig(eta=(0.5, 0.5)), SeedSet.from_ids({0: [0]}))

    def test_restricted_eta_renormalizes(self):
        first = make_multiplex("A", ["a0"], [[]])
        second = make_multiplex("B", ["b0"], [[]])
        network = make_network([first, second])
        restart = build_restart(
            network, RwrConfig(eta=(0.5, 0.5)), SeedSet.from_ids({0: [0]}), restrict_eta=True
        )
        np.testing.assert_array_equal(restart.p0, [1.0, 0.0])

    def test_out_of_range_seed_rejected(self):
        with self.assertRaises(SeedError):
            build_restart(path_monoplex(2), RwrConfig(), SeedSet.from_ids({0: [5]}))

    def test_seeds_from_names(self):
        network = path_monoplex(3)
        seeds = SeedSet.from_names(network, [(None, "n2"), ("m", "n0")])
        np.testing.assert_array_equal(seeds.of(0), [0, 2])
        self.assertEqual(seeds.total, 2)
        self.assertEqual(seeds.names(network), [("m", "n0"), ("m", "n2")])


class TestSolve:
    def test_two_node_path(self):
        """Test p = [2/3, 1/3] on a single edge seeded at one end with r = 0.5"""
        result = run_rwr(path_monoplex(2), RwrConfig(r=0.5), SeedSet.from_ids({0: [0]}))
        assert result.converged
        np.testing.assert_allclose(result.steady, [2.0 / 3.0, 1.0 / 3.0], atol=1e-9)

    def test_full_restart_returns_restart_vector(self):
        result = run_rwr(path_monoplex(4), RwrConfig(r=1.0), SeedSet.from_ids({0: [1]}))
        assert result.iterations == 1
        np.testing.assert_array_equal(result.steady, [0.0, 1.0, 0.0, 0.0])

    def test_matches_dense_oracle_on_random_instances(self):
        """Test the iterative solution against a direct linear solve"""
        rng = np.random.default_rng(42)
        for _ in range(50):
            network, rwr = random_multilayer(rng)
            seeds = SeedSet.from_ids(
                {k: rng.choice(m.n, size=min(2, m.n), replace=False) for k, m in enumerate(network.multiplexes)}
            )
            transition = normalize(network, rwr)
            restart = build_restart(network, rwr, seeds)
            result = solve(transition, restart, rwr.r, epsilon=rwr.epsilon, max_iter=5000)
            assert result.converged
            oracle = dense_steady_state(transition, restart, rwr.r)
            np.testing.assert_allclose(result.steady, oracle, rtol=0, atol=1e-8)
            assert result.steady.sum() == pytest.approx(1.0, abs=1e-9)
            assert np.all(result.steady >= 0)

    def test_monoplex_reduces_to_personalized_pagerank(self):
        """Test agreement with networkx personalized PageRank for a single layer"""
        for seed in range(20):
            graph = nx.connected_watts_strogatz_graph(20, 4, 0.3, seed=seed)
            r = 0.3
            result = run_rwr(
                _graph_network(graph),
                RwrConfig(r=r, epsilon=1e-14, max_iter=10000),
                SeedSet.from_ids({0: [seed % 20]}),
            )
            pagerank = nx.pagerank(
                graph, alpha=1.0 - r, personalization={seed % 20: 1.0}, tol=1e-15, max_iter=10000
            )
            expected = np.array([pagerank[i] for i in range(20)])
            np.testing.assert_allclose(result.scores[0], expected, rtol=0, atol=1e-10)

    def test_residuals_contract(self):
        """Test the L1 residual shrinks at least by a factor 1 - r each step"""
        rng = np.random.default_rng(3)
        for _ in range(10):
            network, rwr = random_multilayer(rng)
            seeds = SeedSet.from_ids({k: [0] for k in range(network.num_multiplexes)})
            result = run_rwr(network, rwr, seeds)
            residuals = result.residuals
            for before, after in zip(residuals[:-1], residuals[1:], strict=True):
                assert after <= (1.0 - rwr.r) * before + 1e-12

    def test_non_convergence_flagged(self):
        result = run_rwr(path_monoplex(5), RwrConfig(r=0.3, max_iter=2), SeedSet.from_ids({0: [0]}))
        assert not result.converged
        assert result.iterations == 2
        assert result.residual > 0

    def test_strict_non_convergence_raises(self):
        network = path_monoplex(5)
        rwr = RwrConfig(r=0.3, max_iter=2)
        restart = build_restart(network, rwr, SeedSet.from_ids({0: [0]}))
        with pytest.raises(ConvergenceError) as exc_info:
            solve(normalize(network, rwr), restart, rwr.r, max_iter=2, strict=True)
        assert exc_info.value.iterations == 2

    def test_workers_agree(self):
        rng = np.random.default_rng(17)
        network, rwr = random_multilayer(rng, max_nodes=40)
        seeds = SeedSet.from_ids({k: [0] for k in range(network.num_multiplexes)})
        single = run_rwr(network, rwr, seeds)
        parallel = run_rwr(network, rwr, seeds, workers=3)
        np.testing.assert_allclose(parallel.steady, single.steady, rtol=0, atol=1e-12)

    def test_scores_decrease_along_path(self):
        result = run_rwr(path_monoplex(5), RwrConfig(r=0.3), SeedSet.from_ids({0: [0]}))
        assert np.all(np.diff(result.scores[0]) < 0)

    def test_mirror_symmetric_nodes_score_equally(self):
        """Test that nodes swapped by a reflection fixing the seeds score the same"""
        result = run_rwr(_ring(6), RwrConfig(r=0.4), SeedSet.from_ids({0: [0, 3]}))
        scores = result.scores[0]
        assert scores[1] == pytest.approx(scores[5], abs=1e-12)
        assert scores[2] == pytest.approx(scores[4], abs=1e-12)
        assert scores[1] == pytest.approx(scores[2], abs=1e-12)

    def test_relabeling_permutes_scores(self):
        nodes = ["a", "b", "c", "d"]
        edges = [("a", "b"), ("b", "c"), ("c", "d"), ("a", "c")]
        forward = make_network([make_multiplex("m", nodes, [edges])])
        backward = make_network([make_multiplex("m", nodes[::-1], [edges])])
        rwr = RwrConfig(r=0.5)
        first = run_rwr(forward, rwr, SeedSet.from_names(forward, [(None, "a")]))
        second = run_rwr(backward, rwr, SeedSet.from_names(backward, [(None, "a")]))
        for name, score in first.scores_of(0).items():
            assert second.scores_of(0)[name] == pytest.approx(score, abs=1e-12)

    def test_replica_scores_sum_over_layers(self):
        multiplex = make_multiplex("m", ["a", "b"], [[("a", "b")], [("a", "b")]])
        result = run_rwr(make_network([multiplex]), RwrConfig(), SeedSet.from_ids({0: [0]}))
        np.testing.assert_allclose(result.scores[0], result.steady[:2] + result.steady[2:])


class TestRanking:
    def _star(self) -> MultilayerNetwork:
        edges = [("c", f"l{i}") for i in range(1, 5)]
        return make_network([make_multiplex("star", ["c", "l1", "l2", "l3", "l4"], [edges])])

    def test_ties_broken_by_name(self):
        """Test that equal scores are ordered by ascending name"""
        network = self._star()
        result = run_rwr(network, RwrConfig(), SeedSet.from_ids({0: [0]}))
        ranking = rank(result, 0)
        assert [node.name for node in ranking] == ["c", "l1", "l2", "l3", "l4"]
        assert [node.rank for node in ranking] == [1, 2, 3, 4, 5]

    def test_exclusion(self):
        network = self._star()
        result = run_rwr(network, RwrConfig(), SeedSet.from_ids({0: [0]}))
        ranking = rank(result, 0, exclude=[0])
        assert ranking[0] == ("l1", ranking[0].score, 1)
        assert len(ranking) == 4

    def test_rank_of_agrees_with_rank(self):
        rng = np.random.default_rng(23)
        network, rwr = random_multilayer(rng, max_multiplexes=1)
        result = run_rwr(network, rwr, SeedSet.from_ids({0: [0]}))
        ranking = rank(result, 0, exclude=[0])
        names = network.multiplexes[0].node_table
        for node in ranking:
            assert rank_of(result, 0, names.id_of(node.name), exclude=[0]) == (node.rank, len(ranking))

    def test_rank_of_left_out_node_competes(self):
        network = self._star()
        result = run_rwr(network, RwrConfig(), SeedSet.from_ids({0: [0]}))
        assert rank_of(result, 0, 2, exclude=[0, 2]) == (2, 4)

    def test_write_ranking(self, tmp_path):
        result = run_rwr(path_monoplex(2), RwrConfig(r=1.0), SeedSet.from_ids({0: [0]}))
        path = tmp_path / "ranking.tsv"
        write_ranking(path, rank(result, 0))
        assert path.read_text(encoding="utf-8") == "node\tscore\trank\nn0\t1\t1\nn1\t0\t2\n"


class TestSubnetwork:
    def test_star_top_leaf(self):
        edges = [("c", f"l{i}") for i in range(1, 5)]
        network = make_network([make_multiplex("star", ["c", "l1", "l2", "l3", "l4"], [edges])])
        seeds = SeedSet.from_ids({0: [0]})
        result = run_rwr(network, RwrConfig(), seeds)
        subnetwork = extract_subnetwork(network, result, 1, seeds)
        assert [(e.source, e.target, e.weight, e.context) for e in subnetwork] == [
            ("c", "l1", 1.0, "star:layer1")
        ]

    def test_large_k_returns_whole_network(self):
        genes = make_multiplex("gene", ["g1", "g2", "g3"], [[("g1", "g2"), ("g2", "g3")]])
        diseases = make_multiplex("disease", ["d1"], [[]])
        network = make_network(
            [genes, diseases], [make_bipartite((genes, diseases), 0, 1, [("g3", "d1")])]
        )
        seeds = SeedSet.from_ids({0: [0]})
        result = run_rwr(network, RwrConfig(), seeds)
        subnetwork = extract_subnetwork(network, result, 10, seeds)
        assert len(subnetwork) == 3
        assert subnetwork[-1].context == "gene->disease"

    def test_nodes_without_edges_give_no_edges(self):
        multiplex = make_multiplex("m", ["a", "b", "c"], [[]])
        seeds = SeedSet.from_ids({0: [0]})
        result = run_rwr(make_network([multiplex]), RwrConfig(), seeds)
        assert extract_subnetwork(make_network([multiplex]), result, 2, seeds) == []

    def test_k_must_be_positive(self):
        network = path_monoplex(3)
        result = run_rwr(network, RwrConfig(), SeedSet.from_ids({0: [0]}))
        with pytest.raises(ValueError):
            extract_subnetwork(network, result, 0)


@pytest.mark.slow
@pytest.mark.timeout(600)
def test_million_edge_network_builds_and_solves_in_bounds():
    """Test build and single-worker solve times and peak memory on a random network with over 10^6 edges"""
    resource = pytest.importorskip("resource")
    spec = SynthSpec(
        kind="random", multiplexes=2, layers=2, nodes=100_000, edges=250_000, bipartite_edges=300_000, seed=8
    )
    network, seed_lines = generate(spec)
    assert network.num_edges >= 1_000_000
    assert validate(network).valid
    seeds = SeedSet.from_names(network, seed_lines)
    rwr = RwrConfig()

    started = time.perf_counter()
    transition = normalize(network, rwr)
    build_seconds = time.perf_counter() - started

    started = time.perf_counter()
    result = run_rwr(network, rwr, seeds, workers=1, transition=transition)
    solve_seconds = time.perf_counter() - started

    peak = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    peak_bytes = peak if sys.platform == "darwin" else peak * 1024
    assert result.converged
    assert build_seconds < 60.0
    assert solve_seconds < 30.0
    assert peak_bytes < 2 * 1024**3
    assert sum(float(s.sum()) for s in result.scores) == pytest.approx(1.0, abs=1e-8)
