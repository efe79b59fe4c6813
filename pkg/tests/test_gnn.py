import math

import numpy as np
import pytest

from docgraph import gnn
from docgraph.gnn import (GnnConfig, TrainConfig, count_parameters, forward,
                          graph_conv_forward, init_model, load_model,
                          loss_and_gradients, param_shapes, save_model,
                          sort_pooling, train)
from docgraph.graphs import DocGraph, GraphDataset

TINY = GnnConfig(conv_channels=[4, 1], sortpool_k=2,
                 conv1d_channels=(4, 8), conv1d_kernel2=2,
                 dense_hidden=None, dropout_rate=0.0)


def random_graph(rng, n, feat_dim, label=0, n_edges=None):
    if n_edges is None:
        n_edges = 2 * n
    edges = set()
    for _ in range(n_edges):
        i, j = rng.integers(0, n, 2)
        if i != j:
            edges.add((min(i, j), max(i, j)))
    return DocGraph(doc_id="g", label=label, n_nodes=n,
                    node_features=rng.normal(size=(n, feat_dim)),
                    edges=sorted(edges))


def sortpool_oracle(stacked, k):
    """Full lexicographic sort (numpy lexsort) then truncate/pad."""
    n, width = stacked.shape
    keys = tuple(-stacked[:, c] for c in range(width))
    order = np.lexsort(keys)  # last key (= last column, negated) is primary
    out = np.zeros((k, width), dtype=stacked.dtype)
    kept = order[:min(k, n)]
    out[: len(kept)] = stacked[kept]
    return out


def oracle_forward(graph, model):
    """Straight-line reimplementation of the forward math with explicit
    loops; stage-1 1D conv is computed as a literal strided convolution
    over the flattened sort-pooled matrix."""
    cfg = model.config
    p = model.params
    n, f = graph.node_features.shape
    rows = graph.node_features.tolist()
    order = sorted(range(n), key=lambda i: rows[i])
    position = {old: new for new, old in enumerate(order)}
    x = np.asarray([rows[i] for i in order], dtype=np.float64)
    adj = np.eye(n)
    for i, j in graph.edges:
        adj[position[i], position[j]] = 1.0
        adj[position[j], position[i]] = 1.0
    prop = np.diag(1.0 / adj.sum(axis=1)) @ adj

    outputs = []
    z = x
    for t in range(len(cfg.conv_channels)):
        z = np.tanh(prop @ z @ p[f"conv_w{t}"] + p[f"conv_b{t}"])
        outputs.append(z)
    stacked = np.concatenate(outputs, axis=1)
    pooled = sortpool_oracle(stacked, cfg.sortpool_k)

    if cfg.use_conv1d:
        flat = pooled.reshape(-1)
        width = stacked.shape[1]
        ch1, ch2 = cfg.conv1d_channels
        steps = cfg.sortpool_k
        a1 = np.empty((ch1, steps))
        for ch in range(ch1):
            for s in range(steps):
                window = flat[s * width:(s + 1) * width]
                a1[ch, s] = math.tanh(float(window @ p["c1_w"][ch])
                                      + p["c1_b"][ch])
        pool = cfg.conv1d_pool
        pooled_len = -(-steps // pool)
        mp = np.empty((ch1, pooled_len))
        for ch in range(ch1):
            for w in range(pooled_len):
                mp[ch, w] = a1[ch, w * pool:(w + 1) * pool].max()
        kernel = cfg.conv1d_kernel2
        padded_len = max(pooled_len, kernel)
        padded = np.zeros((ch1, padded_len))
        padded[:, :pooled_len] = mp
        out_len = padded_len - kernel + 1
        a2 = np.empty((ch2, out_len))
        for ch in range(ch2):
            for s in range(out_len):
                acc = float(p["c2_b"][ch])
                for c in range(ch1):
                    for t in range(kernel):
                        acc += p["c2_w"][ch, c, t] * padded[c, s + t]
                a2[ch, s] = math.tanh(acc)
        flat = a2.reshape(-1)
    else:
        flat = pooled.reshape(-1)

    if cfg.dense_hidden:
        flat = np.tanh(flat @ p["dense_w"] + p["dense_b"])
    logits = flat @ p["out_w"] + p["out_b"]
    exp = np.exp(logits - logits.max())
    return exp / exp.sum()


class TestGraphConvForward:
    def test_zero_input_zero_output(self):
        z = np.zeros((4, 3))
        w = np.ones((3, 2))
        out = graph_conv_forward(z, [(0, 1), (2, 3)], w)
        np.testing.assert_array_equal(out, np.zeros((4, 2)))

    def test_single_node_identity(self):
        z = np.array([[0.3, -0.7]])
        out = graph_conv_forward(z, [], np.eye(2))
        np.testing.assert_allclose(out, np.tanh(z))

    def test_path_graph_matches_dense_oracle(self):
        rng = np.random.default_rng(0)
        z = rng.normal(size=(3, 4))
        w = rng.normal(size=(4, 2))
        edges = [(0, 1), (1, 2)]
        adj = np.array([[1, 1, 0], [1, 1, 1], [0, 1, 1]], dtype=np.float64)
        expected = np.tanh(np.linalg.inv(np.diag(adj.sum(1))) @ adj @ z @ w)
        np.testing.assert_allclose(graph_conv_forward(z, edges, w), expected,
                                   rtol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            graph_conv_forward(np.zeros((2, 3)), [], np.zeros((4, 2)))

    def test_propagation_row_stochastic(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            n = int(rng.integers(1, 15))
            g = random_graph(rng, n, 2)
            prop = gnn._propagation_matrix(n, g.edges, np.float64)
            np.testing.assert_allclose(prop.sum(axis=1), np.ones(n),
                                       atol=1e-9)


class TestSortPooling:
    def test_descending_identity(self):
        z = np.array([[0.0, 3.0], [1.0, 2.0], [0.0, 1.0]])
        np.testing.assert_array_equal(sort_pooling(z, 3), z)

    def test_padding(self):
        z = np.array([[1.0, 5.0], [2.0, 9.0]])
        out = sort_pooling(z, 5)
        assert out.shape == (5, 2)
        np.testing.assert_array_equal(out[0], [2.0, 9.0])
        np.testing.assert_array_equal(out[2:], np.zeros((3, 2)))

    def test_matches_full_sort_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            n = int(rng.integers(1, 12))
            width = int(rng.integers(1, 6))
            k = int(rng.integers(1, 10))
            # quantized values provoke ties
            z = np.round(rng.normal(size=(n, width)), 1)
            np.testing.assert_array_equal(sort_pooling(z, k),
                                          sortpool_oracle(z, k))

    def test_shape_independent_of_n(self):
        rng = np.random.default_rng(3)
        for n in (1, 4, 8, 20):
            out = sort_pooling(rng.normal(size=(n, 3)), 8)
            assert out.shape == (8, 3)


class TestForward:
    def test_zero_final_layer_gives_uniform(self):
        rng = np.random.default_rng(4)
        model = init_model(GnnConfig(), feature_dim=10, n_classes=4, seed=0)
        model.params["out_w"][:] = 0.0
        model.params["out_b"][:] = 0.0
        g = random_graph(rng, 6, 10)
        g.node_features = g.node_features.astype(np.float32)
        np.testing.assert_allclose(forward(g, model), np.full(4, 0.25),
                                   rtol=1e-6)

    def test_softmax_sums_to_one(self):
        rng = np.random.default_rng(5)
        model = init_model(GnnConfig(), feature_dim=7, n_classes=3, seed=1)
        for _ in range(20):
            g = random_graph(rng, int(rng.integers(1, 15)), 7)
            g.node_features = g.node_features.astype(np.float32)
            probs = forward(g, model)
            assert abs(probs.sum() - 1.0) < 1e-6
            assert ((probs > 0) & (probs < 1)).all()

    def test_permutation_invariance_exact(self):
        rng = np.random.default_rng(6)
        model = init_model(GnnConfig(), feature_dim=8, n_classes=3, seed=2)
        for _ in range(50):
            n = int(rng.integers(2, 15))
            g = random_graph(rng, n, 8)
            g.node_features = g.node_features.astype(np.float32)
            perm = rng.permutation(n)
            position = {int(old): new for new, old in enumerate(perm)}
            permuted = DocGraph(
                doc_id=g.doc_id, label=g.label, n_nodes=n,
                node_features=g.node_features[perm],
                edges=sorted((min(position[i], position[j]),
                              max(position[i], position[j]))
                             for i, j in g.edges))
            assert np.array_equal(forward(g, model), forward(permuted, model))

    def test_matches_straight_line_oracle(self):
        rng = np.random.default_rng(7)
        for seed in range(5):
            model = init_model(GnnConfig(conv_channels=[6, 3, 1],
                                         sortpool_k=4,
                                         conv1d_channels=(5, 7),
                                         conv1d_kernel2=3,
                                         dense_hidden=11),
                               feature_dim=9, n_classes=3, seed=seed,
                               dtype=np.float64)
            g = random_graph(rng, 5, 9)
            np.testing.assert_allclose(forward(g, model),
                                       oracle_forward(g, model), rtol=1e-10)

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(8)
        model = init_model(GnnConfig(), feature_dim=8, n_classes=2, seed=0)
        with pytest.raises(ValueError, match="feature dim"):
            forward(random_graph(rng, 3, 5), model)


class TestLossAndGradients:
    def test_loss_is_negative_log_likelihood(self):
        rng = np.random.default_rng(9)
        model = init_model(TINY, feature_dim=6, n_classes=2, seed=3,
                           dtype=np.float64)
        g = random_graph(rng, 4, 6, label=1)
        p = forward(g, model)[1]
        loss, _ = loss_and_gradients([g], model)
        assert abs(loss - (-math.log(p))) < 1e-12

    def test_duplicate_batch_same_loss(self):
        rng = np.random.default_rng(10)
        model = init_model(TINY, feature_dim=6, n_classes=2, seed=3,
                           dtype=np.float64)
        batch = [random_graph(rng, 4, 6, label=i % 2) for i in range(3)]
        loss_once, _ = loss_and_gradients(batch, model)
        loss_twice, _ = loss_and_gradients(batch + batch, model)
        assert abs(loss_once - loss_twice) < 1e-12

    def test_empty_batch_rejected(self):
        model = init_model(TINY, feature_dim=6, n_classes=2, seed=0)
        with pytest.raises(ValueError):
            loss_and_gradients([], model)

    @pytest.mark.parametrize("config,dropout_seed", [
        (TINY, None),
        (GnnConfig(conv_channels=[4, 1], sortpool_k=2,
                   conv1d_channels=(4, 8), conv1d_kernel2=2,
                   dense_hidden=8, dropout_rate=0.5), 77),
    ])
    def test_gradients_match_finite_differences(self, config, dropout_seed):
        rng = np.random.default_rng(11)
        model = init_model(config, feature_dim=6, n_classes=2, seed=5,
                           dtype=np.float64)
        batch = [random_graph(rng, n, 6, label=i % 2)
                 for i, n in enumerate((5, 3, 1))]
        _, grads = loss_and_gradients(batch, model, dropout_seed)
        eps = 1e-6
        max_rel = 0.0
        for name, param in model.params.items():
            for idx in np.ndindex(param.shape):
                orig = param[idx]
                param[idx] = orig + eps
                plus, _ = loss_and_gradients(batch, model, dropout_seed)
                param[idx] = orig - eps
                minus, _ = loss_and_gradients(batch, model, dropout_seed)
                param[idx] = orig
                fd = (plus - minus) / (2 * eps)
                denom = max(abs(fd), abs(grads[name][idx]), 1e-8)
                max_rel = max(max_rel, abs(fd - grads[name][idx]) / denom)
        assert max_rel < 1e-4


def separable_dataset(n_graphs=60, seed=0):
    """Labels are the sign of feature 0, which is constant on all nodes of
    a graph."""
    rng = np.random.default_rng(seed)
    graphs = []
    for i in range(n_graphs):
        label = i % 2
        n = int(rng.integers(3, 9))
        g = random_graph(rng, n, 6, label=label)
        g.node_features[:, 0] = 1.0 if label else -1.0
        g.node_features = g.node_features.astype(np.float32)
        graphs.append(g)
    return GraphDataset(graphs=graphs, n_classes=2, feature_dim=6)


SEPARABLE_CONFIG = GnnConfig(conv_channels=[8, 1], sortpool_k=4,
                             conv1d_channels=(8, 8), conv1d_kernel2=3,
                             dense_hidden=16, dropout_rate=0.0)


class TestTrain:
    def test_separable_fixture_reaches_99(self):
        dataset = separable_dataset()
        model, history = train(dataset, None, SEPARABLE_CONFIG,
                               TrainConfig(batch_size=16, epochs=50, seed=0))
        assert history.epochs[-1].train_accuracy >= 0.99

    def test_loss_non_increasing_on_separable_fixture(self):
        dataset = separable_dataset()
        _, history = train(dataset, None, SEPARABLE_CONFIG,
                           TrainConfig(batch_size=16, epochs=30,
                                       learning_rate=1e-3, seed=1))
        losses = [e.train_loss for e in history.epochs]
        assert losses[-1] < losses[0]
        violations = sum(1 for a, b in zip(losses, losses[1:])
                         if b > a + 1e-9)
        assert violations == 0

    def test_one_epoch_one_history_entry(self):
        dataset = separable_dataset(n_graphs=10)
        _, history = train(dataset, None, SEPARABLE_CONFIG,
                           TrainConfig(epochs=1, seed=0))
        assert len(history.epochs) == 1

    def test_deterministic_final_parameters(self):
        dataset = separable_dataset(n_graphs=20)
        config = GnnConfig(conv_channels=[4, 1], sortpool_k=3,
                           conv1d_channels=(4, 4), conv1d_kernel2=2,
                           dense_hidden=8, dropout_rate=0.5)
        m1, _ = train(dataset, None, config, TrainConfig(epochs=3, seed=42))
        m2, _ = train(dataset, None, config, TrainConfig(epochs=3, seed=42))
        for name in m1.params:
            assert np.array_equal(m1.params[name], m2.params[name])

    def test_empty_training_set(self):
        empty = GraphDataset(graphs=[], n_classes=2, feature_dim=6)
        with pytest.raises(ValueError):
            train(empty, None, TINY, TrainConfig())


class TestCountParameters:
    def test_hand_counted_minimal_config(self):
        config = GnnConfig(conv_channels=[2], sortpool_k=1,
                           use_conv1d=False, dense_hidden=None,
                           dropout_rate=0.0)
        model = init_model(config, feature_dim=3, n_classes=2, seed=0)
        # conv 3*2+2, output head (k*C=2)*2+2
        assert count_parameters(model) == (3 * 2 + 2) + (2 * 2 + 2) == 14

    def test_dense_hidden_monotonicity(self):
        small = init_model(GnnConfig(dense_hidden=64), 73, 5, seed=0)
        large = init_model(GnnConfig(dense_hidden=128), 73, 5, seed=0)
        assert count_parameters(large) > count_parameters(small)

    def test_default_config_closed_form(self):
        model = init_model(GnnConfig(), feature_dim=73, n_classes=5, seed=0)
        conv = (73 * 32 + 32) + (32 * 32 + 32) + (32 * 32 + 32) + (32 * 1 + 1)
        c1 = 16 * 97 + 16
        c2 = 32 * 16 * 5 + 32
        # k=8 -> stage-1 length 8 -> pooled 4 -> padded 5 -> stage-2 length 1
        dense = 32 * 128 + 128
        head = 128 * 5 + 5
        assert count_parameters(model) == conv + c1 + c2 + dense + head


class TestSerialization:
    def test_round_trip_forward_bit_exact(self, tmp_path):
        rng = np.random.default_rng(12)
        model = init_model(GnnConfig(), feature_dim=8, n_classes=3, seed=6,
                           class_names=["a", "b", "c"],
                           graph_build={"edge_policy": "knn", "knn_k": 3,
                                        "image_feature_dim": None,
                                        "embedding_dim": 4})
        path = tmp_path / "model.bin"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.class_names == ["a", "b", "c"]
        assert loaded.graph_build["edge_policy"] == "knn"
        for _ in range(5):
            g = random_graph(rng, int(rng.integers(1, 10)), 8)
            g.node_features = g.node_features.astype(np.float32)
            assert np.array_equal(forward(g, model), forward(g, loaded))

    def test_truncated_file(self, tmp_path):
        model = init_model(TINY, feature_dim=6, n_classes=2, seed=0)
        path = tmp_path / "model.bin"
        save_model(model, path)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(ValueError, match="corrupt"):
            load_model(path)

    def test_version_mismatch(self, tmp_path):
        import json
        model = init_model(TINY, feature_dim=6, n_classes=2, seed=0)
        path = tmp_path / "model.bin"
        save_model(model, path)
        raw = path.read_bytes()
        header_end = raw.index(b"\n")
        header = json.loads(raw[:header_end])
        header["version"] = 99
        path.write_bytes(json.dumps(header).encode() + raw[header_end:])
        with pytest.raises(ValueError, match="version"):
            load_model(path)
