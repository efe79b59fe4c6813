"""SortPooling graph convolutional classifier: forward pass, hand-derived
backward pass, Adam training loop, and model (de)serialization.

All stages are plain numpy. The propagation rule is random-walk
normalized: Z' = tanh(D^-1 (A + I) Z W + b). Node order is canonicalized
from the feature rows before any arithmetic, which makes the forward pass
invariant to input node permutations at the bit level.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .graphs import DocGraph, GraphDataset

MODEL_VERSION = 1


@dataclass
class GnnConfig:
    conv_channels: list[int] = field(default_factory=lambda: [32, 32, 32, 1])
    sortpool_k: int = 8
    use_conv1d: bool = True
    conv1d_channels: tuple[int, int] = (16, 32)
    conv1d_kernel2: int = 5
    conv1d_pool: int = 2
    dense_hidden: int | None = 128
    dropout_rate: float = 0.5

    def __post_init__(self):
        if not self.conv_channels or self.conv_channels[-1] < 1:
            raise ValueError("conv_channels must end with a width >= 1")
        if self.sortpool_k < 1:
            raise ValueError("sortpool_k must be at least 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")


@dataclass
class TrainConfig:
    batch_size: int = 32
    epochs: int = 50
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1 or self.learning_rate <= 0:
            raise ValueError("batch_size, epochs >= 1 and learning_rate > 0")


@dataclass
class EpochStats:
    train_loss: float
    train_accuracy: float
    val_accuracy: float | None
    wall_time: float


@dataclass
class TrainHistory:
    epochs: list[EpochStats] = field(default_factory=list)


@dataclass
class GnnModel:
    config: GnnConfig
    feature_dim: int
    n_classes: int
    params: dict[str, np.ndarray]
    class_names: list[str] | None = None
    graph_build: dict | None = None


def _dims(config: GnnConfig, feature_dim: int, n_classes: int) -> dict:
    total_channels = sum(config.conv_channels)
    k = config.sortpool_k
    dims = {"C": total_channels, "k": k}
    if config.use_conv1d:
        ch1, ch2 = config.conv1d_channels
        pooled_len = -(-k // config.conv1d_pool)  # ceil-mode pooling
        padded_len = max(pooled_len, config.conv1d_kernel2)
        out_len = padded_len - config.conv1d_kernel2 + 1
        dims.update(ch1=ch1, ch2=ch2, pooled_len=pooled_len,
                    padded_len=padded_len, out_len=out_len,
                    flat=ch2 * out_len)
    else:
        dims["flat"] = k * total_channels
    dims["dense_in"] = dims["flat"]
    dims["last_in"] = (config.dense_hidden if config.dense_hidden
                       else dims["flat"])
    return dims


def param_shapes(config: GnnConfig, feature_dim: int,
                 n_classes: int) -> dict[str, tuple[int, ...]]:
    """Parameter tensors in declaration (= serialization) order."""
    dims = _dims(config, feature_dim, n_classes)
    shapes: dict[str, tuple[int, ...]] = {}
    in_dim = feature_dim
    for t, out_dim in enumerate(config.conv_channels):
        shapes[f"conv_w{t}"] = (in_dim, out_dim)
        shapes[f"conv_b{t}"] = (out_dim,)
        in_dim = out_dim
    if config.use_conv1d:
        shapes["c1_w"] = (dims["ch1"], dims["C"])
        shapes["c1_b"] = (dims["ch1"],)
        shapes["c2_w"] = (dims["ch2"], dims["ch1"], config.conv1d_kernel2)
        shapes["c2_b"] = (dims["ch2"],)
    if config.dense_hidden:
        shapes["dense_w"] = (dims["dense_in"], config.dense_hidden)
        shapes["dense_b"] = (config.dense_hidden,)
    shapes["out_w"] = (dims["last_in"], n_classes)
    shapes["out_b"] = (n_classes,)
    return shapes


def _glorot_limit(shape: tuple[int, ...]) -> float:
    if len(shape) == 1:
        return 0.0
    if len(shape) == 2:
        fan_in, fan_out = shape
    else:  # (out_ch, in_ch, kernel)
        fan_in = shape[1] * shape[2]
        fan_out = shape[0] * shape[2]
    return math.sqrt(6.0 / (fan_in + fan_out))


def init_model(config: GnnConfig, feature_dim: int, n_classes: int,
               seed: int = 0, dtype=np.float32,
               class_names: list[str] | None = None,
               graph_build: dict | None = None) -> GnnModel:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(config, feature_dim, n_classes).items():
        limit = _glorot_limit(shape)
        if limit == 0.0:
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            params[name] = rng.uniform(-limit, limit, size=shape).astype(dtype)
    return GnnModel(config=config, feature_dim=feature_dim,
                    n_classes=n_classes, params=params,
                    class_names=class_names, graph_build=graph_build)


def count_parameters(model: GnnModel) -> int:
    return sum(p.size for p in model.params.values())


def _canonical_order(features: np.ndarray) -> list[int]:
    # lexicographic over the feature row makes the graph representation
    # independent of the caller's node numbering
    rows = features.tolist()
    return sorted(range(len(rows)), key=lambda i: rows[i])


def _propagation_matrix(n: int, edges, dtype) -> np.ndarray:
    a = np.eye(n, dtype=dtype)
    for i, j in edges:
        a[i, j] = 1.0
        a[j, i] = 1.0
    return a / a.sum(axis=1, keepdims=True)


def graph_conv_forward(features: np.ndarray, edges, weight: np.ndarray,
                       bias: np.ndarray | None = None) -> np.ndarray:
    """One propagation step: tanh(D^-1 (A+I) Z W + b)."""
    if features.shape[1] != weight.shape[0]:
        raise ValueError(f"shape mismatch: features {features.shape} vs "
                         f"weight {weight.shape}")
    prop = _propagation_matrix(features.shape[0], edges, features.dtype)
    pre = prop @ features @ weight
    if bias is not None:
        pre = pre + bias
    return np.tanh(pre)


def sort_pooling(stacked: np.ndarray, k: int) -> np.ndarray:
    """Keep the top k rows under descending lexicographic order read from
    the last column leftwards; ties fall back to ascending input order.
    Zero-pads when there are fewer than k rows."""
    if k < 1:
        raise ValueError("k must be at least 1")
    n, width = stacked.shape
    reversed_rows = stacked[:, ::-1].tolist()
    order = sorted(range(n), key=lambda i: reversed_rows[i], reverse=True)
    kept = order[:min(k, n)]
    out = np.zeros((k, width), dtype=stacked.dtype)
    out[: len(kept)] = stacked[kept]
    return out


def _sortpool_order(stacked: np.ndarray) -> list[int]:
    reversed_rows = stacked[:, ::-1].tolist()
    return sorted(range(len(reversed_rows)),
                  key=lambda i: reversed_rows[i], reverse=True)


def _forward(graph: DocGraph, model: GnnModel, training: bool,
             dropout_rng: np.random.Generator | None):
    cfg = model.config
    p = model.params
    dtype = p["out_w"].dtype
    dims = _dims(cfg, model.feature_dim, model.n_classes)
    if graph.node_features.shape[1] != model.feature_dim:
        raise ValueError(
            f"graph feature dim {graph.node_features.shape[1]} != model "
            f"feature dim {model.feature_dim}")

    order = _canonical_order(graph.node_features)
    inverse = {old: new for new, old in enumerate(order)}
    x = np.ascontiguousarray(graph.node_features[order], dtype=dtype)
    edges = [(min(inverse[i], inverse[j]), max(inverse[i], inverse[j]))
             for i, j in graph.edges]
    n = graph.n_nodes
    prop = _propagation_matrix(n, edges, dtype)

    conv_inputs, conv_outputs = [], []
    z = x
    for t in range(len(cfg.conv_channels)):
        s = prop @ z
        conv_inputs.append(s)
        z = np.tanh(s @ p[f"conv_w{t}"] + p[f"conv_b{t}"])
        conv_outputs.append(z)
    stacked = np.concatenate(conv_outputs, axis=1)

    pool_order = _sortpool_order(stacked)
    kept = pool_order[:min(cfg.sortpool_k, n)]
    pooled = np.zeros((cfg.sortpool_k, dims["C"]), dtype=dtype)
    pooled[: len(kept)] = stacked[kept]

    cache = {"prop": prop, "conv_inputs": conv_inputs,
             "conv_outputs": conv_outputs, "kept": kept, "pooled": pooled,
             "n": n, "dims": dims}

    if cfg.use_conv1d:
        a1 = np.tanh(p["c1_w"] @ pooled.T + p["c1_b"][:, None])  # (ch1, k)
        cache["a1"] = a1
        pool = cfg.conv1d_pool
        pooled_len = dims["pooled_len"]
        windows = [a1[:, w * pool:(w + 1) * pool] for w in range(pooled_len)]
        arg = np.empty((dims["ch1"], pooled_len), dtype=np.int64)
        mp = np.empty((dims["ch1"], pooled_len), dtype=dtype)
        for w, win in enumerate(windows):
            local = np.argmax(win, axis=1)
            arg[:, w] = w * pool + local
            mp[:, w] = win[np.arange(dims["ch1"]), local]
        cache["pool_argmax"] = arg
        padded = np.zeros((dims["ch1"], dims["padded_len"]), dtype=dtype)
        padded[:, :pooled_len] = mp
        cache["padded"] = padded
        kernel = cfg.conv1d_kernel2
        out_len = dims["out_len"]
        pre2 = np.tile(p["c2_b"][:, None], (1, out_len))
        for t in range(kernel):
            pre2 += np.einsum("oc,cl->ol", p["c2_w"][:, :, t],
                              padded[:, t:t + out_len])
        a2 = np.tanh(pre2)
        cache["a2"] = a2
        flat = np.ascontiguousarray(a2).reshape(-1)
    else:
        flat = pooled.reshape(-1)
    cache["flat"] = flat

    if cfg.dense_hidden:
        hidden = np.tanh(flat @ p["dense_w"] + p["dense_b"])
        cache["hidden"] = hidden
        if training and cfg.dropout_rate > 0.0:
            if dropout_rng is None:
                raise ValueError("training forward requires a dropout RNG")
            keep = (dropout_rng.random(cfg.dense_hidden)
                    >= cfg.dropout_rate)
            mask = keep.astype(dtype) / dtype.type(1.0 - cfg.dropout_rate)
        else:
            mask = np.ones(cfg.dense_hidden, dtype=dtype)
        cache["mask"] = mask
        last_in = hidden * mask
    else:
        last_in = flat
    cache["last_in"] = last_in

    logits = last_in @ p["out_w"] + p["out_b"]
    shifted = logits - logits.max()
    exp = np.exp(shifted)
    probs = exp / exp.sum()
    cache["probs"] = probs
    return probs, cache


def forward(graph: DocGraph, model: GnnModel, training: bool = False,
            dropout_rng: np.random.Generator | None = None) -> np.ndarray:
    """Class probability vector for one graph."""
    probs, _ = _forward(graph, model, training, dropout_rng)
    return probs


def _backward(graph: DocGraph, model: GnnModel, cache: dict,
              grads: dict[str, np.ndarray]) -> None:
    """Accumulate gradients of -log p[label] into grads (in place)."""
    cfg = model.config
    p = model.params
    dims = cache["dims"]
    dtype = p["out_w"].dtype

    d_logits = cache["probs"].copy()
    d_logits[graph.label] -= 1.0

    grads["out_w"] += np.outer(cache["last_in"], d_logits)
    grads["out_b"] += d_logits
    d_last = p["out_w"] @ d_logits

    if cfg.dense_hidden:
        d_hidden = d_last * cache["mask"]
        d_pre = d_hidden * (1.0 - cache["hidden"] ** 2)
        grads["dense_w"] += np.outer(cache["flat"], d_pre)
        grads["dense_b"] += d_pre
        d_flat = p["dense_w"] @ d_pre
    else:
        d_flat = d_last

    if cfg.use_conv1d:
        out_len, kernel = dims["out_len"], cfg.conv1d_kernel2
        d_a2 = d_flat.reshape(dims["ch2"], out_len)
        d_pre2 = d_a2 * (1.0 - cache["a2"] ** 2)
        grads["c2_b"] += d_pre2.sum(axis=1)
        padded = cache["padded"]
        d_padded = np.zeros_like(padded)
        for t in range(kernel):
            grads["c2_w"][:, :, t] += d_pre2 @ padded[:, t:t + out_len].T
            d_padded[:, t:t + out_len] += p["c2_w"][:, :, t].T @ d_pre2
        d_mp = d_padded[:, : dims["pooled_len"]]
        d_a1 = np.zeros_like(cache["a1"])
        arg = cache["pool_argmax"]
        rows = np.repeat(np.arange(dims["ch1"]), dims["pooled_len"])
        np.add.at(d_a1, (rows, arg.reshape(-1)), d_mp.reshape(-1))
        d_pre1 = d_a1 * (1.0 - cache["a1"] ** 2)
        grads["c1_b"] += d_pre1.sum(axis=1)
        grads["c1_w"] += d_pre1 @ cache["pooled"]
        d_pooled = d_pre1.T @ p["c1_w"]  # (k, C)
    else:
        d_pooled = d_flat.reshape(cfg.sortpool_k, dims["C"])

    n = cache["n"]
    d_stacked = np.zeros((n, dims["C"]), dtype=dtype)
    d_stacked[cache["kept"]] = d_pooled[: len(cache["kept"])]

    prop_t = cache["prop"].T
    offset = dims["C"]
    d_next = None
    for t in reversed(range(len(cfg.conv_channels))):
        width = cfg.conv_channels[t]
        offset -= width
        d_z = d_stacked[:, offset:offset + width].copy()
        if d_next is not None:
            d_z += d_next
        d_pre = d_z * (1.0 - cache["conv_outputs"][t] ** 2)
        grads[f"conv_w{t}"] += cache["conv_inputs"][t].T @ d_pre
        grads[f"conv_b{t}"] += d_pre.sum(axis=0)
        if t > 0:
            d_next = prop_t @ (d_pre @ p[f"conv_w{t}"].T)


def loss_and_gradients(batch: list[DocGraph], model: GnnModel,
                       dropout_seed: int | None = None
                       ) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy over the batch plus gradients for every
    parameter. Dropout is active only when dropout_seed is given."""
    if not batch:
        raise ValueError("batch must be non-empty")
    dtype = model.params["out_w"].dtype
    grads = {name: np.zeros_like(value)
             for name, value in model.params.items()}
    rng = (np.random.default_rng(dropout_seed)
           if dropout_seed is not None else None)
    total = 0.0
    for graph in batch:
        probs, cache = _forward(graph, model, training=rng is not None,
                                dropout_rng=rng)
        total += -math.log(max(float(probs[graph.label]), 1e-300))
        _backward(graph, model, cache, grads)
    for name in grads:
        grads[name] = (grads[name] / len(batch)).astype(dtype)
    return total / len(batch), grads


def _accuracy(model: GnnModel, dataset: GraphDataset) -> float:
    if not dataset.graphs:
        return float("nan")
    correct = sum(1 for g in dataset.graphs
                  if int(np.argmax(forward(g, model))) == g.label)
    return correct / len(dataset.graphs)


def train(train_set: GraphDataset, val_set: GraphDataset | None,
          model_config: GnnConfig, train_config: TrainConfig,
          class_names: list[str] | None = None,
          graph_build: dict | None = None) -> tuple[GnnModel, TrainHistory]:
    """Mini-batch Adam training, seed-deterministic end to end."""
    if not train_set.graphs:
        raise ValueError("training set is empty")
    model = init_model(model_config, train_set.feature_dim,
                       train_set.n_classes, seed=train_config.seed,
                       class_names=class_names, graph_build=graph_build)
    m_state = {n: np.zeros_like(v) for n, v in model.params.items()}
    v_state = {n: np.zeros_like(v) for n, v in model.params.items()}
    step = 0
    shuffle_rng = np.random.default_rng((train_config.seed, 0xD0C))
    history = TrainHistory()
    indices = np.arange(len(train_set.graphs))
    for epoch in range(train_config.epochs):
        start = time.perf_counter()
        shuffle_rng.shuffle(indices)
        losses = []
        for b, lo in enumerate(range(0, len(indices),
                                     train_config.batch_size)):
            batch = [train_set.graphs[i]
                     for i in indices[lo:lo + train_config.batch_size]]
            dropout_seed = None
            if model_config.dense_hidden and model_config.dropout_rate > 0:
                dropout_seed = (train_config.seed * 1_000_003
                                + epoch * 1_009 + b)
            loss, grads = loss_and_gradients(batch, model, dropout_seed)
            losses.append(loss)
            step += 1
            lr_t = (train_config.learning_rate
                    * math.sqrt(1 - train_config.beta2 ** step)
                    / (1 - train_config.beta1 ** step))
            for name, grad in grads.items():
                m_state[name] = (train_config.beta1 * m_state[name]
                                 + (1 - train_config.beta1) * grad)
                v_state[name] = (train_config.beta2 * v_state[name]
                                 + (1 - train_config.beta2) * grad * grad)
                model.params[name] -= (lr_t * m_state[name]
                                       / (np.sqrt(v_state[name])
                                          + train_config.epsilon)
                                       ).astype(model.params[name].dtype)
        val_acc = None
        if val_set is not None and val_set.graphs:
            val_acc = _accuracy(model, val_set)
        history.epochs.append(EpochStats(
            train_loss=float(np.mean(losses)),
            train_accuracy=_accuracy(model, train_set),
            val_accuracy=val_acc,
            wall_time=time.perf_counter() - start))
    return model, history


def _config_to_json(config: GnnConfig) -> dict:
    obj = asdict(config)
    obj["conv1d_channels"] = list(config.conv1d_channels)
    return obj


def _config_from_json(obj: dict) -> GnnConfig:
    obj = dict(obj)
    obj["conv1d_channels"] = tuple(obj["conv1d_channels"])
    return GnnConfig(**obj)


def save_model(model: GnnModel, path) -> None:
    header = {
        "version": MODEL_VERSION,
        "feature_dim": model.feature_dim,
        "n_classes": model.n_classes,
        "config": _config_to_json(model.config),
        "class_names": model.class_names,
        "graph_build": model.graph_build,
        "params": list(model.params.keys()),
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, separators=(",", ":")).encode() + b"\n")
        for value in model.params.values():
            fh.write(np.ascontiguousarray(value, dtype="<f4").tobytes())


def load_model(path) -> GnnModel:
    with open(path, "rb") as fh:
        try:
            header = json.loads(fh.readline())
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ValueError(f"corrupt model file {path}: bad header") from exc
        if header.get("version") != MODEL_VERSION:
            raise ValueError(
                f"unsupported model version {header.get('version')!r}")
        config = _config_from_json(header["config"])
        shapes = param_shapes(config, header["feature_dim"],
                              header["n_classes"])
        params = {}
        for name in header["params"]:
            shape = shapes[name]
            count = int(np.prod(shape))
            raw = fh.read(count * 4)
            if len(raw) != count * 4:
                raise ValueError(f"corrupt model file {path}: truncated "
                                 f"tensor {name}")
            params[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
        if fh.read(1):
            raise ValueError(f"corrupt model file {path}: trailing bytes")
    return GnnModel(config=config, feature_dim=header["feature_dim"],
                    n_classes=header["n_classes"], params=params,
                    class_names=header.get("class_names"),
                    graph_build=header.get("graph_build"))
