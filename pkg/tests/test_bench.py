import math
import random
import time

import pytest

from cardest.bench import (
    GraphSpec,
    PropSpec,
    enumerate_subqueries,
    generate_graph,
    qerror,
    run_workload,
    summarize,
    write_csv,
)
from cardest.engine import EstimatorConfig
from cardest.stats import build_catalog

from conftest import MOVIE_QUERY_DOC, TWO_CHAIN_DOC


class TestQError:
    def test_examples(self):
        assert qerror(2, 2) == 1
        assert qerror(10, 1) == 10
        assert qerror(0.4, 4.0) == pytest.approx(10)

    def test_zero_handling(self):
        assert qerror(0.0, 0.0) == 1.0
        assert qerror(0.0, 5.0) == math.inf
        assert qerror(5.0, 0.0) == math.inf

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            qerror(-1, 1)


class TestGenerateGraph:
    def test_reproducible_fingerprint(self):
        spec = GraphSpec(n_vertices=40, n_edges=80)
        g1 = generate_graph(spec, seed=5)
        g2 = generate_graph(spec, seed=5)
        assert g1.fingerprint() == g2.fingerprint()
        g3 = generate_graph(spec, seed=6)
        assert g1.fingerprint() != g3.fingerprint()

    def test_zero_correlation_knob(self):
        spec = GraphSpec(
            n_vertices=4000,
            n_edges=0,
            vertex_labels=("L0", "L1"),
            props=(PropSpec("k", base_prob=0.3, given="L0", boost=0.0),),
        )
        g = generate_graph(spec, seed=1)
        with_label = [v for v in g.vertices if "L0" in g.labels_of(v)]
        p_given = sum(1 for v in with_label if "k" in g.props_of(v)) / len(with_label)
        p_all = sum(1 for v in g.vertices if "k" in g.props_of(v)) / g.n_vertices
        assert abs(p_given - p_all) < 0.05

    def test_positive_correlation_knob(self):
        spec = GraphSpec(
            n_vertices=4000,
            n_edges=0,
            vertex_labels=("L0", "L1"),
            props=(PropSpec("k", base_prob=0.2, given="L0", boost=0.8),),
        )
        g = generate_graph(spec, seed=1)
        with_label = [v for v in g.vertices if "L0" in g.labels_of(v)]
        without = [v for v in g.vertices if "L0" not in g.labels_of(v)]
        p_yes = sum(1 for v in with_label if "k" in g.props_of(v)) / len(with_label)
        p_no = sum(1 for v in without if "k" in g.props_of(v)) / len(without)
        assert p_yes > p_no + 0.3

    def test_thousand_elements_fast(self):
        start = time.perf_counter()
        g = generate_graph(GraphSpec(n_vertices=400, n_edges=600), seed=0)
        assert g.n_ids == 1000
        assert time.perf_counter() - start < 1.0

    def test_degree_skew(self):
        flat = generate_graph(GraphSpec(n_vertices=200, n_edges=2000), seed=2)
        skewed = generate_graph(
            GraphSpec(n_vertices=200, n_edges=2000, degree_exponent=1.5), seed=2
        )
        max_flat = max(len(flat.out_edges(v)) for v in flat.vertices)
        max_skew = max(len(skewed.out_edges(v)) for v in skewed.vertices)
        assert max_skew > max_flat


class TestSubqueries:
    def test_connected_only(self, movie_query):
        subs = enumerate_subqueries(movie_query, 2)
        assert len(subs) == 4 + 4  # four single edges, four connected pairs
        for _, sub in subs:
            assert len(sub.edges) <= 2

    def test_props_stripped_variant(self, movie_query):
        subs = enumerate_subqueries(movie_query, 4, include_props=False)
        assert all(not sub.prop_constraints for _, sub in subs)
        keep = enumerate_subqueries(movie_query, 4, include_props=True)
        biggest = max(keep, key=lambda p: len(p[1].edges))[1]
        assert len(biggest.prop_constraints) == 3

    def test_full_query_included(self, movie_query):
        subs = enumerate_subqueries(movie_query, 4)
        sizes = {len(sub.edges) for _, sub in subs}
        assert sizes == {1, 2, 3, 4}


class TestRunWorkload:
    def exact_fixture(self):
        spec = GraphSpec(n_vertices=20, n_edges=30, vertex_labels=("L0",), edge_labels=("a",))
        g = generate_graph(spec, seed=3)
        catalog = build_catalog(g, synopses=[("edge", 1), ("chain", 2)])
        return g, catalog

    def test_exact_estimates_give_qerror_one(self):
        g, catalog = self.exact_fixture()
        queries = [("q0", TWO_CHAIN_DOC)]
        configs = [EstimatorConfig(pets=("EP", "c2"), ct="condIndep(NdSa)", name="rich")]
        rows, summary = run_workload(g, queries, configs, catalog=catalog)
        assert all(r.qerror == pytest.approx(1.0) for r in rows)
        assert summary.per_config["rich"]["median"] == pytest.approx(1.0)

    def test_oracle_budget_skips_and_records(self):
        g, catalog = self.exact_fixture()
        rows, summary = run_workload(
            g,
            [("q0", TWO_CHAIN_DOC)],
            [EstimatorConfig(name="c")],
            oracle_budget=3,
            catalog=catalog,
        )
        assert len(rows) == 1
        assert rows[0].exact is None and rows[0].qerror is None
        assert summary.skipped == 1

    def test_subquery_modes(self):
        g, catalog = self.exact_fixture()
        rows, _ = run_workload(
            g,
            [("j", MOVIE_QUERY_DOC)],
            [EstimatorConfig(name="c")],
            catalog=catalog,
            subquery_max_edges=2,
            props_mode="both",
        )
        assert len(rows) == 2 * 8  # keep & strip variants of 8 subqueries
        assert any("noprops" in r.query_id for r in rows)

    def test_csv_deterministic(self, tmp_path):
        g, catalog = self.exact_fixture()
        queries = [("q0", TWO_CHAIN_DOC), ("j", MOVIE_QUERY_DOC)]
        configs = [
            EstimatorConfig(pets=("EP",), name="ep"),
            EstimatorConfig(pets=("EP", "c2"), ct="condIndep(NdSa)", name="rich"),
        ]
        p1, p2 = tmp_path / "r1.csv", tmp_path / "r2.csv"
        rows1, _ = run_workload(g, queries, configs, catalog=catalog)
        write_csv(rows1, str(p1))
        rows2, _ = run_workload(g, queries, configs, catalog=catalog)
        write_csv(rows2, str(p2))
        assert p1.read_bytes() == p2.read_bytes()

    def test_richer_stats_do_not_hurt_median(self):
        spec = GraphSpec(
            n_vertices=30,
            n_edges=55,
            vertex_labels=("L0", "L1"),
            edge_labels=("a", "b"),
            degree_exponent=1.0,
        )
        g = generate_graph(spec, seed=9)
        catalog = build_catalog(
            g,
            synopses=[("edge", 1), ("chain", 2), ("source_star", 2), ("target_star", 2)],
        )
        queries = [("q0", TWO_CHAIN_DOC)]
        rng = random.Random(4)
        docs = []
        for i in range(6):
            la = rng.choice(["a", "b"])
            docs.append(
                (
                    f"g{i}",
                    {
                        "vertices": [{"id": "u0"}, {"id": "u1"}, {"id": "u2"}],
                        "edges": [
                            {"id": "f0", "src": "u0", "trg": "u1", "labels": [la]},
                            {"id": "f1", "src": "u1", "trg": "u2"},
                        ],
                    },
                )
            )
        queries += docs
        rich = EstimatorConfig(pets=("EP", "c2", "s2", "t2"), name="rich")
        bare = EstimatorConfig(name="bare")
        rows, summary = run_workload(g, queries, [rich, bare], catalog=catalog)
        assert summary.per_config["rich"]["median"] <= summary.per_config["bare"]["median"]
