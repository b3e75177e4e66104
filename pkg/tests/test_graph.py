"""Graph construction: criteria, scopes, invariants, and file round-trips.

The oracle builder here evaluates edge_decision over every unordered pair
with a plain double loop; build_graph must match it exactly.
"""

import numpy as np
import pytest

from boxgraph.datasets import ALL_LABELS, FULL_VOCABULARY, select_artifact_set
from boxgraph.graphs import (
    BoxGraph,
    CRITERIA,
    CRITERION_IDS,
    GraphConfig,
    adjacency_from_edges,
    build_graph,
    build_nodes,
    degree_stats,
    edge_decision,
    load_graph,
    save_graph,
)

from conftest import box, dataset, det, frame, random_box


def make_nodes(
    rng,
    num_frames=4,
    per_frame=(2, 6),
    num_videos=2,
    labels=ALL_LABELS,
    vocabulary=FULL_VOCABULARY,
):
    frames = []
    dets = {}
    for fi in range(num_frames):
        vid = f"v{fi % num_videos}"
        fid = f"{vid}f{fi}"
        frames.append(frame(fid, vid))
        rows = []
        for _ in range(int(rng.integers(per_frame[0], per_frame[1] + 1))):
            label = str(rng.choice(labels))
            rows.append(det(random_box(rng), label, float(rng.uniform(0.3, 1.0))))
        dets[fid] = rows
    data = dataset(frames, dets)
    return build_nodes(data, vocabulary)


def oracle_adjacency(nodes, config):
    n = len(nodes)
    adj = [set() for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if edge_decision(nodes[i], nodes[j], config):
                adj[i].add(j)
                adj[j].add(i)
    return [np.array(sorted(s), dtype=np.int64) for s in adj]


def assert_same_structure(graph, oracle):
    assert len(graph.adjacency) == len(oracle)
    for got, want in zip(graph.adjacency, oracle):
        np.testing.assert_array_equal(got, want)


def test_config_validation():
    with pytest.raises(ValueError):
        GraphConfig(criteria=frozenset())
    with pytest.raises(ValueError):
        GraphConfig(criteria=frozenset({"same_class", "binary"}))
    with pytest.raises(ValueError):
        GraphConfig(criteria=frozenset({"sideways"}))
    with pytest.raises(ValueError):
        GraphConfig(criteria=frozenset({"overlap"}), iou_threshold=1.0)
    with pytest.raises(ValueError):
        GraphConfig(criteria=frozenset({"random"}), random_p=1.5)
    with pytest.raises(ValueError):
        GraphConfig(criteria=frozenset({"overlap"}), inter_frame_scope="frame")
    cfg = GraphConfig(criteria=("overlap", "random"))
    assert cfg.criteria == frozenset({"overlap", "random"})


def test_criterion_ids():
    assert CRITERION_IDS == {"random": 1, "overlap": 2, "same_class": 3, "binary": 4}
    assert set(CRITERIA) == set(CRITERION_IDS)


def test_edge_decision_self_is_false():
    rng = np.random.default_rng(0)
    nodes = make_nodes(rng)
    cfg = GraphConfig(criteria=("binary",))
    assert not edge_decision(nodes[0], nodes[0], cfg)


def test_build_graph_matches_oracle_randomized():
    rng = np.random.default_rng(2024)
    scopes = ("dataset_level", "video_level")
    subsets = (
        ("overlap",),
        ("random",),
        ("same_class",),
        ("binary",),
        ("overlap", "binary"),
        ("overlap", "same_class"),
        ("random", "overlap", "binary"),
        ("random", "same_class"),
    )
    for trial in range(24):
        nodes = make_nodes(rng, num_frames=int(rng.integers(2, 6)))
        cfg = GraphConfig(
            criteria=subsets[trial % len(subsets)],
            iou_threshold=float(rng.uniform(0.05, 0.9)),
            random_p=float(rng.uniform(0.0, 1.0)),
            inter_frame_scope=scopes[trial % 2],
            rng_seed=int(rng.integers(0, 2**32)),
        )
        graph = build_graph(nodes, cfg)
        graph.validate()
        assert_same_structure(graph, oracle_adjacency(nodes, cfg))


def test_same_class_alone_gives_per_class_cliques():
    rng = np.random.default_rng(5)
    nodes = make_nodes(rng, num_frames=5)
    graph = build_graph(nodes, GraphConfig(criteria=("same_class",)))
    by_class = {}
    for node in nodes:
        by_class.setdefault(node.class_index, set()).add(node.node_id)
    for node in nodes:
        expected = sorted(by_class[node.class_index] - {node.node_id})
        np.testing.assert_array_equal(graph.neighbors(node.node_id), expected)


def test_binary_alone_gives_two_cliques():
    rng = np.random.default_rng(6)
    nodes = make_nodes(rng, num_frames=5)
    graph = build_graph(nodes, GraphConfig(criteria=("binary",)))
    polyps = {n.node_id for n in nodes if n.is_polyp}
    artifacts = {n.node_id for n in nodes if not n.is_polyp}
    for node in nodes:
        group = polyps if node.is_polyp else artifacts
        np.testing.assert_array_equal(
            graph.neighbors(node.node_id), sorted(group - {node.node_id})
        )


def test_overlap_edges_are_in_frame_only():
    rng = np.random.default_rng(7)
    nodes = make_nodes(rng, num_frames=6)
    graph = build_graph(nodes, GraphConfig(criteria=("overlap",)))
    for i, j in graph.iter_edges():
        assert nodes[i].frame_id == nodes[j].frame_id


def test_overlap_containment_connects():
    data = dataset(
        [frame("f0")],
        {"f0": [det(box(10, 10, 100, 100), "polyp", 0.9),
                det(box(40, 40, 10, 10), "blur", 0.9),
                det(box(150, 150, 10, 10), "misc", 0.9)]},
    )
    nodes = build_nodes(data, FULL_VOCABULARY)
    graph = build_graph(nodes, GraphConfig(criteria=("overlap",), iou_threshold=0.5))
    # The tiny box is contained in the large one despite low IoU.
    np.testing.assert_array_equal(graph.neighbors(0), [1])
    np.testing.assert_array_equal(graph.neighbors(2), [])


def test_video_scope_gates_cross_frame_criteria():
    rng = np.random.default_rng(8)
    nodes = make_nodes(rng, num_frames=6, num_videos=3)
    for crit in (("binary",), ("same_class",), ("random",)):
        cfg = GraphConfig(criteria=crit, inter_frame_scope="video_level", random_p=0.9)
        graph = build_graph(nodes, cfg)
        for i, j in graph.iter_edges():
            same_frame = nodes[i].frame_id == nodes[j].frame_id
            assert same_frame or nodes[i].video_id == nodes[j].video_id


def test_video_scope_requires_video_ids():
    data = dataset([frame("f0")], {"f0": [det(box(0, 0, 5, 5))]})
    nodes = build_nodes(data, FULL_VOCABULARY)
    nodes[0].video_id = None
    cfg = GraphConfig(criteria=("binary",), inter_frame_scope="video_level")
    with pytest.raises(ValueError, match="video_id"):
        build_graph(nodes, cfg)


def test_random_edges_reproducible_and_seed_sensitive():
    rng = np.random.default_rng(9)
    nodes = make_nodes(rng, num_frames=6)
    cfg_a = GraphConfig(criteria=("random",), random_p=0.3, rng_seed=1)
    e1 = build_graph(nodes, cfg_a).edges()
    e2 = build_graph(nodes, cfg_a).edges()
    np.testing.assert_array_equal(e1, e2)
    cfg_b = GraphConfig(criteria=("random",), random_p=0.3, rng_seed=2)
    e3 = build_graph(nodes, cfg_b).edges()
    assert e1.shape != e3.shape or not np.array_equal(e1, e3)


def test_random_edge_count_tracks_probability():
    rng = np.random.default_rng(10)
    nodes = make_nodes(rng, num_frames=10, per_frame=(8, 12))
    n = len(nodes)
    pairs = n * (n - 1) // 2
    for p in (0.1, 0.5):
        graph = build_graph(nodes, GraphConfig(criteria=("random",), random_p=p, rng_seed=3))
        mean = pairs * p
        sigma = (pairs * p * (1 - p)) ** 0.5
        assert abs(graph.num_edges - mean) < 4.5 * sigma


def test_random_p_extremes():
    rng = np.random.default_rng(11)
    nodes = make_nodes(rng, num_frames=3)
    n = len(nodes)
    empty = build_graph(nodes, GraphConfig(criteria=("random",), random_p=0.0))
    assert empty.num_edges == 0
    # p = 1.0 cannot be configured (u < p with u in [0, 1)), but 0.999999
    # leaves the complete graph with overwhelming probability.
    full = build_graph(nodes, GraphConfig(criteria=("random",), random_p=0.999999))
    assert full.num_edges == n * (n - 1) // 2


def test_empty_and_single_node_graphs():
    cfg = GraphConfig(criteria=("binary",))
    g0 = build_graph([], cfg)
    assert g0.num_nodes == 0 and g0.num_edges == 0
    data = dataset([frame("f0")], {"f0": [det(box(0, 0, 5, 5))]})
    g1 = build_graph(build_nodes(data, FULL_VOCABULARY), cfg)
    assert g1.num_nodes == 1 and g1.num_edges == 0
    g1.validate()


def test_build_nodes_rejects_out_of_vocabulary():
    data = dataset([frame("f0")], {"f0": [det(box(0, 0, 5, 5), "specularity", 0.9)]})
    with pytest.raises(ValueError, match="vocabulary"):
        build_nodes(data, select_artifact_set("art1"))


def test_node_ordering_and_keys():
    data = dataset(
        [frame("f1"), frame("f0")],
        {"f1": [det(box(0, 0, 5, 5)), det(box(1, 1, 5, 5), "blur")],
         "f0": [det(box(2, 2, 5, 5), "misc")]},
    )
    nodes = build_nodes(data, FULL_VOCABULARY)
    assert [n.node_id for n in nodes] == [0, 1, 2]
    assert [n.det_key for n in nodes] == ["f1#0", "f1#1", "f0#0"]
    assert [n.class_index for n in nodes] == [0, 3, 2]


def test_adjacency_from_edges():
    edges = np.array([[0, 2], [1, 2], [0, 1]], dtype=np.int64)
    adj = adjacency_from_edges(4, edges)
    np.testing.assert_array_equal(adj[0], [1, 2])
    np.testing.assert_array_equal(adj[1], [0, 2])
    np.testing.assert_array_equal(adj[2], [0, 1])
    np.testing.assert_array_equal(adj[3], [])


def test_validate_catches_asymmetry():
    data = dataset([frame("f0")], {"f0": [det(box(0, 0, 5, 5)), det(box(1, 1, 5, 5))]})
    nodes = build_nodes(data, FULL_VOCABULARY)
    graph = BoxGraph(
        nodes=nodes,
        adjacency=[np.array([1], dtype=np.int64), np.array([], dtype=np.int64)],
        config=GraphConfig(criteria=("binary",)),
    )
    with pytest.raises(ValueError, match="symmetric"):
        graph.validate()


def test_degree_stats():
    rng = np.random.default_rng(12)
    nodes = make_nodes(rng)
    graph = build_graph(nodes, GraphConfig(criteria=("binary",)))
    stats = degree_stats(graph)
    degrees = [len(graph.neighbors(i)) for i in range(graph.num_nodes)]
    assert stats.num_nodes == graph.num_nodes
    assert stats.num_edges == graph.num_edges
    assert stats.min_degree == min(degrees)
    assert stats.max_degree == max(degrees)
    assert stats.mean_degree == pytest.approx(sum(degrees) / len(degrees))
    assert stats.isolated_count == sum(1 for d in degrees if d == 0)


def test_save_load_roundtrip(tmp_path):
    rng = np.random.default_rng(13)
    nodes = make_nodes(rng, num_frames=5)
    vocab = FULL_VOCABULARY
    cfg = GraphConfig(
        criteria=("overlap", "binary"),
        iou_threshold=0.4,
        inter_frame_scope="video_level",
        rng_seed=17,
    )
    graph = build_graph(nodes, cfg)
    path = tmp_path / "g.graph"
    save_graph(path, graph, vocab)
    loaded, loaded_vocab = load_graph(path)
    assert loaded_vocab.labels == vocab.labels
    assert loaded.config == cfg
    assert loaded.num_nodes == graph.num_nodes
    np.testing.assert_array_equal(loaded.edges(), graph.edges())
    for a, b in zip(loaded.nodes, graph.nodes):
        assert a.det_key == b.det_key
        assert a.class_label == b.class_label
        assert a.bbox == b.bbox
        assert a.score == b.score
        assert a.video_id == b.video_id


def test_save_load_with_features(tmp_path):
    data = dataset(
        [frame("f0")],
        {"f0": [det(box(0, 0, 5, 5)), det(box(1, 1, 5, 5), "blur")]},
    )
    nodes = build_nodes(data, FULL_VOCABULARY)
    graph = build_graph(nodes, GraphConfig(criteria=("binary",)))
    path = tmp_path / "g.graph"
    save_graph(path, graph, FULL_VOCABULARY)
    feats = {"f0#0": np.arange(4.0), "f0#1": np.arange(4.0) + 1}
    loaded, _ = load_graph(path, features=feats)
    np.testing.assert_array_equal(loaded.nodes[1].features, feats["f0#1"])


def test_load_rejects_corrupt_files(tmp_path):
    p = tmp_path / "bad.graph"
    p.write_text("")
    with pytest.raises(ValueError):
        load_graph(p)
    p.write_text('{"format": "other", "version": 1}\n')
    with pytest.raises(ValueError):
        load_graph(p)
