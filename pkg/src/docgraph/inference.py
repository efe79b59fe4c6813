"""Single-document classification shared by the CLI predict command and
the HTTP service, so both paths give identical answers for the same
model file."""

from __future__ import annotations

import numpy as np

from .gnn import GnnModel, forward
from .graphs import EdgePolicy, document_to_graph
from .ingest import DocumentAnnotation, validate_document
from .textembed import WordEmbeddings


def policy_from_meta(meta: dict | None) -> tuple[EdgePolicy, int | None]:
    """Edge policy and image feature dim recorded at training time."""
    if not meta:
        return EdgePolicy.spatial_knn(), None
    kind = meta.get("edge_policy", "knn")
    k = meta.get("knn_k", 3)
    policy = EdgePolicy(kind, k) if kind == "knn" else EdgePolicy(kind)
    return policy, meta.get("image_feature_dim")


def classify_document(doc: DocumentAnnotation, model: GnnModel,
                      embeddings: WordEmbeddings) -> dict:
    """Validate, graph-ify, and classify one document annotation.

    The label field is ignored; validation covers everything else."""
    validate_document(doc, n_classes=None)
    policy, image_dim = policy_from_meta(model.graph_build)
    graph = document_to_graph(doc, embeddings, policy, image_dim)
    probs = forward(graph, model)
    class_names = (model.class_names
                   or [str(i) for i in range(model.n_classes)])
    predicted = int(np.argmax(probs))
    return {
        "doc_id": doc.doc_id,
        "predicted_class": class_names[predicted],
        "class_names": class_names,
        "probabilities": [float(p) for p in probs],
    }
