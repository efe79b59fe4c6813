"""Document -> graph conversion: one node per layout region, node features
from text embeddings + category + normalized geometry (+ reduced image
embedding), edges from a configurable spatial policy."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .ingest import CATEGORIES, Corpus, DatasetSplit, DocumentAnnotation
from .textembed import WordEmbeddings, embed_region_text

DATASET_VERSION = 1


@dataclass(frozen=True)
class EdgePolicy:
    kind: str  # "full" | "knn" | "chain"
    k: int = 3

    def __post_init__(self):
        if self.kind not in ("full", "knn", "chain"):
            raise ValueError(f"unknown edge policy {self.kind!r}")
        if self.kind == "knn" and self.k < 1:
            raise ValueError("knn requires k >= 1")

    @classmethod
    def fully_connected(cls) -> "EdgePolicy":
        return cls("full")

    @classmethod
    def spatial_knn(cls, k: int = 3) -> "EdgePolicy":
        return cls("knn", k)

    @classmethod
    def reading_order_chain(cls) -> "EdgePolicy":
        return cls("chain")


@dataclass
class DocGraph:
    doc_id: str
    label: int
    n_nodes: int
    node_features: np.ndarray  # n x f, float32
    edges: list[tuple[int, int]]  # undirected, i < j, sorted, deduplicated


@dataclass
class GraphDataset:
    graphs: list[DocGraph]
    n_classes: int
    feature_dim: int
    class_names: list[str] | None = None
    build_meta: dict | None = None


def reduce_image_embedding(vec, target_dim: int) -> np.ndarray:
    """Chunked mean-pooling to target_dim; short vectors pass through
    element-wise and are zero-padded."""
    vec = np.asarray(vec, dtype=np.float32)
    if vec.size == 0:
        raise ValueError("image embedding must be non-empty")
    if target_dim < 1:
        raise ValueError("target_dim must be at least 1")
    if vec.size < target_dim:
        out = np.zeros(target_dim, dtype=np.float32)
        out[: vec.size] = vec
        return out
    base, rem = divmod(vec.size, target_dim)
    out = np.empty(target_dim, dtype=np.float32)
    pos = 0
    for i in range(target_dim):
        size = base + 1 if i < rem else base
        out[i] = vec[pos:pos + size].mean(dtype=np.float64)
        pos += size
    return out


def _centroids(doc: DocumentAnnotation) -> np.ndarray:
    boxes = np.asarray([r.bbox for r in doc.regions], dtype=np.float64)
    return np.stack([(boxes[:, 0] + boxes[:, 2]) / 2,
                     (boxes[:, 1] + boxes[:, 3]) / 2], axis=1)


def _knn_edges(doc: DocumentAnnotation, k: int) -> set[tuple[int, int]]:
    pts = _centroids(doc)
    n = len(pts)
    k = min(k, n - 1)
    edges: set[tuple[int, int]] = set()
    dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
    for i in range(n):
        order = sorted((j for j in range(n) if j != i),
                       key=lambda j: (dist[i, j], j))
        for j in order[:k]:
            edges.add((min(i, j), max(i, j)))
    return edges


def _chain_edges(doc: DocumentAnnotation) -> set[tuple[int, int]]:
    order = sorted(range(len(doc.regions)),
                   key=lambda i: (doc.regions[i].bbox[1],
                                  doc.regions[i].bbox[0], i))
    return {(min(a, b), max(a, b)) for a, b in zip(order, order[1:])}


def build_edges(doc: DocumentAnnotation, policy: EdgePolicy
                ) -> list[tuple[int, int]]:
    n = len(doc.regions)
    if n == 1:
        return []
    if policy.kind == "full":
        edges = {(i, j) for i in range(n) for j in range(i + 1, n)}
    elif policy.kind == "knn":
        edges = _knn_edges(doc, policy.k)
    else:
        edges = _chain_edges(doc)
    return sorted(edges)


def document_to_graph(doc: DocumentAnnotation, embeddings: WordEmbeddings,
                      policy: EdgePolicy,
                      image_feature_dim: int | None = None,
                      include_layout_features: bool = True) -> DocGraph:
    """Node feature layout, in order: text mean-embedding (d), category
    one-hot (5), normalized geometry cx/W cy/H w/W h/H (4), reduced image
    embedding (r, only when image_feature_dim is set)."""
    if image_feature_dim is not None and image_feature_dim < 1:
        raise ValueError("image_feature_dim must be at least 1")
    rows = []
    for region in doc.regions:
        parts = [embed_region_text(region.text, embeddings)]
        if include_layout_features:
            one_hot = np.zeros(len(CATEGORIES), dtype=np.float32)
            one_hot[CATEGORIES.index(region.category)] = 1.0
            x0, y0, x1, y1 = region.bbox
            geometry = np.asarray([
                (x0 + x1) / 2 / doc.page_width,
                (y0 + y1) / 2 / doc.page_height,
                (x1 - x0) / doc.page_width,
                (y1 - y0) / doc.page_height,
            ], dtype=np.float32)
            parts += [one_hot, geometry]
        if image_feature_dim is not None:
            if region.image_embedding is not None:
                parts.append(reduce_image_embedding(region.image_embedding,
                                                    image_feature_dim))
            else:
                parts.append(np.zeros(image_feature_dim, dtype=np.float32))
        rows.append(np.concatenate(parts))
    return DocGraph(
        doc_id=doc.doc_id,
        label=doc.label,
        n_nodes=len(doc.regions),
        node_features=np.stack(rows).astype(np.float32),
        edges=build_edges(doc, policy),
    )


def feature_dim(embedding_dim: int, image_feature_dim: int | None = None,
                include_layout_features: bool = True) -> int:
    f = embedding_dim
    if include_layout_features:
        f += len(CATEGORIES) + 4
    if image_feature_dim is not None:
        f += image_feature_dim
    return f


def build_dataset(corpus: Corpus, split: DatasetSplit,
                  embeddings: WordEmbeddings, policy: EdgePolicy,
                  image_feature_dim: int | None = None
                  ) -> tuple[GraphDataset, GraphDataset, GraphDataset]:
    """Convert corpus documents into per-split graph datasets."""
    f = feature_dim(embeddings.dim, image_feature_dim)
    meta = {"edge_policy": policy.kind, "knn_k": policy.k,
            "image_feature_dim": image_feature_dim,
            "embedding_dim": embeddings.dim}
    out = []
    for indices in (split.train, split.validation, split.test):
        graphs = [document_to_graph(corpus.documents[i], embeddings, policy,
                                    image_feature_dim)
                  for i in indices]
        out.append(GraphDataset(graphs=graphs, n_classes=corpus.n_classes,
                                feature_dim=f, class_names=corpus.class_names,
                                build_meta=meta))
    return out[0], out[1], out[2]


def _write_dataset(fh, dataset: GraphDataset) -> None:
    for g in dataset.graphs:
        meta = {"doc_id": g.doc_id, "label": g.label, "n_nodes": g.n_nodes,
                "edges": [list(e) for e in g.edges]}
        fh.write(json.dumps(meta, separators=(",", ":")).encode() + b"\n")
        fh.write(np.ascontiguousarray(g.node_features, dtype="<f4").tobytes())


def _read_dataset(fh, n_graphs: int, n_classes: int,
                  feat_dim: int) -> GraphDataset:
    graphs = []
    for _ in range(n_graphs):
        meta = json.loads(fh.readline())
        n_nodes = meta["n_nodes"]
        raw = fh.read(n_nodes * feat_dim * 4)
        if len(raw) != n_nodes * feat_dim * 4:
            raise ValueError("corrupt graph dataset file: truncated features")
        features = np.frombuffer(raw, dtype="<f4").reshape(n_nodes,
                                                           feat_dim).copy()
        graphs.append(DocGraph(
            doc_id=meta["doc_id"], label=meta["label"], n_nodes=n_nodes,
            node_features=features,
            edges=[tuple(e) for e in meta["edges"]]))
    return GraphDataset(graphs=graphs, n_classes=n_classes,
                        feature_dim=feat_dim)


def save_dataset_bundle(train: GraphDataset, validation: GraphDataset,
                        test: GraphDataset, path) -> None:
    header = {
        "version": DATASET_VERSION,
        "n_classes": train.n_classes,
        "feature_dim": train.feature_dim,
        "counts": [len(train.graphs), len(validation.graphs),
                   len(test.graphs)],
        "class_names": train.class_names,
        "build_meta": train.build_meta,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, separators=(",", ":")).encode() + b"\n")
        for ds in (train, validation, test):
            _write_dataset(fh, ds)


def load_dataset_bundle(path) -> tuple[GraphDataset, GraphDataset,
                                       GraphDataset]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline())
        if header.get("version") != DATASET_VERSION:
            raise ValueError(
                f"unsupported dataset version {header.get('version')!r}")
        n_classes, feat_dim = header["n_classes"], header["feature_dim"]
        counts = header["counts"]
        out = []
        for c in counts:
            ds = _read_dataset(fh, c, n_classes, feat_dim)
            ds.class_names = header.get("class_names")
            ds.build_meta = header.get("build_meta")
            out.append(ds)
    return out[0], out[1], out[2]
