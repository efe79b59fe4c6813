"""Wall-clock benchmark of the full pipeline plus instance-hour cost
estimation. Word2vec time is measured but kept in a separate field so the
training/inference numbers stay comparable with GPU-era reports that
exclude preprocessing."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

from .gnn import GnnConfig, TrainConfig, count_parameters, forward, train
from .graphs import EdgePolicy, build_dataset
from .ingest import Corpus, DatasetSplit
from .textembed import Word2VecConfig, train_word2vec

try:
    import psutil
except ImportError:  # pragma: no cover - psutil is a declared dependency
    psutil = None


@dataclass
class BenchmarkReport:
    train_wall_time: float
    inference_wall_time: float
    throughput: float
    graph_build_wall_time: float
    word2vec_wall_time_excluded: float
    gnn_param_count: int
    embedding_param_count: int
    peak_resident_memory_estimate: int | None
    epochs: int
    batch_size: int
    test_size: int
    test_accuracy: float | None = None

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2)

    def format_table(self) -> str:
        lines = [
            f"{'Batch Size':<26}{self.batch_size}",
            f"{'Epochs':<26}{self.epochs}",
            f"{'Training Time':<26}{self.train_wall_time / 60:.2f} min",
            f"{'Inference Time':<26}{self.inference_wall_time:.3f} s "
            f"({self.test_size} graphs)",
            f"{'Throughput':<26}{self.throughput:.0f} graphs/s",
            f"{'GNN Parameters':<26}{self.gnn_param_count}",
            f"{'Embedding Parameters':<26}{self.embedding_param_count}",
            f"{'Word2vec Time (excluded)':<26}"
            f"{self.word2vec_wall_time_excluded:.2f} s",
        ]
        if self.peak_resident_memory_estimate is not None:
            lines.append(f"{'Resident Memory (approx)':<26}"
                         f"{self.peak_resident_memory_estimate / 2**20:.0f} MiB")
        if self.test_accuracy is not None:
            lines.append(f"{'Test Accuracy':<26}{self.test_accuracy:.4f}")
        return "\n".join(lines)


@dataclass
class CostModel:
    instances: list[dict] = field(default_factory=list)

    def __post_init__(self):
        for inst in self.instances:
            if inst["usd_per_hour"] <= 0:
                raise ValueError(
                    f"rate for {inst['instance_name']!r} must be positive")

    @classmethod
    def from_file(cls, path) -> "CostModel":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(instances=json.load(fh))


def _resident_memory() -> int | None:
    if psutil is None:
        return None
    try:
        return psutil.Process().memory_info().rss
    except Exception:
        return None


def run_benchmark(corpus: Corpus, split: DatasetSplit,
                  w2v_config: Word2VecConfig = Word2VecConfig(),
                  policy: EdgePolicy = EdgePolicy.spatial_knn(),
                  image_feature_dim: int | None = None,
                  model_config: GnnConfig = GnnConfig(),
                  train_config: TrainConfig = TrainConfig()
                  ) -> BenchmarkReport:
    """Time embed -> build -> train -> inference on the given corpus."""
    t0 = time.perf_counter()
    embeddings = train_word2vec(corpus, w2v_config)
    word2vec_time = time.perf_counter() - t0

    t0 = time.perf_counter()
    train_set, val_set, test_set = build_dataset(
        corpus, split, embeddings, policy, image_feature_dim)
    build_time = time.perf_counter() - t0

    t0 = time.perf_counter()
    model, _ = train(train_set, val_set, model_config, train_config,
                     class_names=corpus.class_names)
    train_time = time.perf_counter() - t0

    t0 = time.perf_counter()
    correct = 0
    for graph in test_set.graphs:
        probs = forward(graph, model)
        if int(probs.argmax()) == graph.label:
            correct += 1
    inference_time = time.perf_counter() - t0

    test_size = len(test_set.graphs)
    return BenchmarkReport(
        train_wall_time=train_time,
        inference_wall_time=inference_time,
        throughput=test_size / inference_time if inference_time > 0 else 0.0,
        graph_build_wall_time=build_time,
        word2vec_wall_time_excluded=word2vec_time,
        gnn_param_count=count_parameters(model),
        embedding_param_count=2 * len(embeddings.vocabulary) * embeddings.dim,
        peak_resident_memory_estimate=_resident_memory(),
        epochs=train_config.epochs,
        batch_size=train_config.batch_size,
        test_size=test_size,
        test_accuracy=correct / test_size if test_size else None,
    )


def estimate_cost(report: BenchmarkReport, cost_model: CostModel
                  ) -> list[dict]:
    """USD per instance for the benchmarked train + inference time."""
    hours = (report.train_wall_time + report.inference_wall_time) / 3600.0
    return [{"instance_name": inst["instance_name"],
             "usd": hours * inst["usd_per_hour"]}
            for inst in cost_model.instances]
