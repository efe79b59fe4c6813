"""Annotation corpus: schema, validation, (de)serialization, splitting,
and a synthetic corpus generator for desk-scale experiments.

A corpus file is line-delimited JSON: the first line is a header with
``class_names`` and ``version``, every following line is one document.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

from .rng import XorShift64Star

CATEGORIES = ("Title", "Text", "List", "Table", "Figure")
CORPUS_VERSION = 1

_REGION_KEYS = {"region_id", "category", "bbox", "text", "image_embedding"}
_DOC_KEYS = {"doc_id", "page_width", "page_height", "label", "regions"}


class CorpusParseError(ValueError):
    """Malformed corpus file (bad JSON, missing header, wrong version)."""


class ValidationError(ValueError):
    """First violated schema invariant, with the offending doc_id when known."""

    def __init__(self, message: str, doc_id: str | None = None):
        self.doc_id = doc_id
        if doc_id is not None:
            message = f"{message} (doc_id={doc_id!r})"
        super().__init__(message)


@dataclass
class RegionAnnotation:
    region_id: int
    category: str
    bbox: tuple[float, float, float, float]
    text: str
    image_embedding: list[float] | None = None


@dataclass
class DocumentAnnotation:
    doc_id: str
    page_width: float
    page_height: float
    regions: list[RegionAnnotation]
    label: int


@dataclass
class Corpus:
    class_names: list[str]
    documents: list[DocumentAnnotation]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)


@dataclass
class DatasetSplit:
    train: list[int]
    validation: list[int]
    test: list[int]


def validate_region(region: RegionAnnotation, page_width: float,
                    page_height: float, doc_id: str) -> None:
    if region.region_id < 0:
        raise ValidationError("region_id must be non-negative", doc_id)
    if region.category not in CATEGORIES:
        raise ValidationError(
            f"unknown category {region.category!r}, expected one of {CATEGORIES}",
            doc_id)
    x0, y0, x1, y1 = region.bbox
    if not x0 < x1:
        raise ValidationError(f"bbox requires x0 < x1, got ({x0}, {x1})", doc_id)
    if not y0 < y1:
        raise ValidationError(f"bbox requires y0 < y1, got ({y0}, {y1})", doc_id)
    if x0 < 0 or y0 < 0 or x1 > page_width or y1 > page_height:
        raise ValidationError(
            f"bbox {region.bbox} outside page bounds "
            f"({page_width} x {page_height})", doc_id)
    if region.image_embedding is not None:
        if len(region.image_embedding) == 0:
            raise ValidationError("image_embedding must be non-empty", doc_id)
        if not all(math.isfinite(v) for v in region.image_embedding):
            raise ValidationError("image_embedding must be finite-valued", doc_id)


def validate_document(doc: DocumentAnnotation, n_classes: int | None = None) -> None:
    if doc.page_width <= 0 or doc.page_height <= 0:
        raise ValidationError("page dimensions must be positive", doc.doc_id)
    if not doc.regions:
        raise ValidationError("regions must be non-empty", doc.doc_id)
    seen: set[int] = set()
    for region in doc.regions:
        if region.region_id in seen:
            raise ValidationError(
                f"duplicate region_id {region.region_id}", doc.doc_id)
        seen.add(region.region_id)
        validate_region(region, doc.page_width, doc.page_height, doc.doc_id)
    if doc.label < 0:
        raise ValidationError("label must be non-negative", doc.doc_id)
    if n_classes is not None and doc.label >= n_classes:
        raise ValidationError(
            f"label {doc.label} out of range for {n_classes} classes", doc.doc_id)


def validate_corpus(corpus: Corpus) -> None:
    if len(corpus.class_names) < 2:
        raise ValidationError("corpus must declare at least 2 classes")
    per_class = [0] * corpus.n_classes
    for doc in corpus.documents:
        validate_document(doc, corpus.n_classes)
        per_class[doc.label] += 1
    for label, count in enumerate(per_class):
        if count == 0:
            raise ValidationError(
                f"class {corpus.class_names[label]!r} has no documents")


def _region_from_json(obj: dict, doc_id: str, strict: bool) -> RegionAnnotation:
    unknown = set(obj) - _REGION_KEYS
    if unknown:
        if strict:
            raise ValidationError(
                f"unknown region keys {sorted(unknown)}", doc_id)
        warnings.warn(f"ignoring unknown region keys {sorted(unknown)} "
                      f"in doc {doc_id!r}")
    try:
        bbox = tuple(float(v) for v in obj["bbox"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"bad bbox: {exc}", doc_id) from exc
    if len(bbox) != 4:
        raise ValidationError("bbox must have 4 entries", doc_id)
    embedding = obj.get("image_embedding")
    if embedding is not None:
        embedding = [float(v) for v in embedding]
    return RegionAnnotation(
        region_id=int(obj["region_id"]),
        category=str(obj.get("category", "")),
        bbox=bbox,  # type: ignore[arg-type]
        text=str(obj.get("text", "")),
        image_embedding=embedding,
    )


def document_from_json(obj: dict, strict: bool = True) -> DocumentAnnotation:
    doc_id = str(obj.get("doc_id", "<missing doc_id>"))
    unknown = set(obj) - _DOC_KEYS
    if unknown:
        if strict:
            raise ValidationError(
                f"unknown document keys {sorted(unknown)}", doc_id)
        warnings.warn(f"ignoring unknown document keys {sorted(unknown)} "
                      f"in doc {doc_id!r}")
    missing = {"doc_id", "page_width", "page_height", "regions"} - set(obj)
    if missing:
        raise ValidationError(f"missing keys {sorted(missing)}", doc_id)
    regions = [_region_from_json(r, doc_id, strict) for r in obj["regions"]]
    return DocumentAnnotation(
        doc_id=doc_id,
        page_width=float(obj["page_width"]),
        page_height=float(obj["page_height"]),
        regions=regions,
        label=int(obj.get("label", 0)),
    )


def _region_to_json(region: RegionAnnotation) -> dict:
    obj = {
        "region_id": region.region_id,
        "category": region.category,
        "bbox": list(region.bbox),
        "text": region.text,
    }
    if region.image_embedding is not None:
        obj["image_embedding"] = region.image_embedding
    return obj


def document_to_json(doc: DocumentAnnotation) -> dict:
    return {
        "doc_id": doc.doc_id,
        "page_width": doc.page_width,
        "page_height": doc.page_height,
        "label": doc.label,
        "regions": [_region_to_json(r) for r in doc.regions],
    }


def load_corpus(path, strict: bool = True) -> Corpus:
    """Load and validate a line-delimited JSON corpus file."""
    with open(path, "r", encoding="utf-8") as fh:
        header_line = fh.readline()
        if not header_line.strip():
            raise CorpusParseError(f"{path}: empty file, expected header line")
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise CorpusParseError(f"{path}: bad header: {exc}") from exc
        if not isinstance(header, dict) or "class_names" not in header:
            raise CorpusParseError(f"{path}: header must carry class_names")
        if header.get("version") != CORPUS_VERSION:
            raise CorpusParseError(
                f"{path}: unsupported corpus version {header.get('version')!r}")
        documents = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusParseError(
                    f"{path}:{lineno}: bad document JSON: {exc}") from exc
            documents.append(document_from_json(obj, strict=strict))
    corpus = Corpus(class_names=[str(n) for n in header["class_names"]],
                    documents=documents)
    validate_corpus(corpus)
    return corpus


def save_corpus(corpus: Corpus, path) -> None:
    """Write the corpus; output is byte-deterministic for equal corpora."""
    validate_corpus(corpus)
    with open(path, "w", encoding="utf-8") as fh:
        header = {"class_names": corpus.class_names, "version": CORPUS_VERSION}
        fh.write(json.dumps(header, separators=(",", ":")) + "\n")
        for doc in corpus.documents:
            fh.write(json.dumps(document_to_json(doc),
                                separators=(",", ":")) + "\n")


def split_dataset(corpus: Corpus, ratios: tuple[float, float, float],
                  seed: int) -> DatasetSplit:
    """Stratified train/validation/test split, deterministic in the seed.

    Per-class counts follow the ratios by largest-remainder rounding, so
    each class lands within +-1 of its exact share in every split.
    """
    if any(r < 0 for r in ratios):
        raise ValueError("ratios must be non-negative")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")
    if ratios[0] <= 0 or ratios[2] <= 0:
        raise ValueError("train and test fractions must be positive")

    by_class: dict[int, list[int]] = {}
    for idx, doc in enumerate(corpus.documents):
        by_class.setdefault(doc.label, []).append(idx)

    rng = XorShift64Star(seed)
    positive = [i for i, r in enumerate(ratios) if r > 0]
    parts: tuple[list[int], ...] = ([], [], [])
    for label in sorted(by_class):
        members = list(by_class[label])
        rng.shuffle(members)
        n = len(members)
        if n < len(positive):
            raise ValueError(
                f"class {corpus.class_names[label]!r} has {n} documents, "
                f"fewer than the {len(positive)} non-empty splits")
        counts = [int(r * n) for r in ratios]
        fracs = [r * n - c for r, c in zip(ratios, counts)]
        order = sorted(range(3), key=lambda i: (-fracs[i], i))
        for i in order[: n - sum(counts)]:
            counts[i] += 1
        # largest-remainder can starve a small positive split; steal from the
        # biggest one so every requested split stays non-empty
        for i in positive:
            while counts[i] == 0:
                donor = max(range(3), key=lambda j: counts[j])
                counts[donor] -= 1
                counts[i] += 1
        pos = 0
        for part, count in zip(parts, counts):
            part.extend(members[pos:pos + count])
            pos += count
    return DatasetSplit(train=parts[0], validation=parts[1], test=parts[2])


_BACKGROUND_TOKENS = (
    "the", "of", "and", "to", "date", "page", "form", "name", "number",
    "total", "section", "for", "by", "with", "on", "from", "please",
    "reference", "attached", "subject",
)

_CLASS_NAME_POOL = (
    "invoice", "letter", "report", "memo", "form",
    "email", "resume", "article", "contract", "advert",
)

_SYLLABLES = ("ba", "co", "dun", "fer", "gil", "hap", "jor", "kel", "lum",
              "mex", "nor", "pex", "qua", "rin", "sol", "tav", "ulm", "vor",
              "wex", "zan")

# per-class median region counts, all inside the observed real-data range
_MEDIAN_NODES = (4, 8, 12, 6, 16, 3, 10, 14, 5, 18)

_PAGE_W, _PAGE_H = 612.0, 792.0


def _class_tokens(class_index: int) -> list[str]:
    rng = XorShift64Star(0xC1A55 + class_index)
    tokens = []
    for _ in range(12):
        word = "".join(rng.choice(list(_SYLLABLES))
                       for _ in range(2 + rng.randint(2)))
        tokens.append(word)
    return tokens


def _class_name(i: int) -> str:
    base = _CLASS_NAME_POOL[i % len(_CLASS_NAME_POOL)]
    return base if i < len(_CLASS_NAME_POOL) else f"{base}-{i // len(_CLASS_NAME_POOL)}"


def generate_synthetic_corpus(n_classes: int, docs_per_class: int,
                              seed: int) -> Corpus:
    """Generate a labeled corpus where layout and text are both informative.

    Each class has its own template: region-count distribution, category
    mix, column layout, and a private token vocabulary mixed with shared
    background tokens.
    """
    if n_classes < 2:
        raise ValueError("n_classes must be at least 2")
    if docs_per_class < 1:
        raise ValueError("docs_per_class must be at least 1")

    rng = XorShift64Star(seed)
    class_names = [_class_name(i) for i in range(n_classes)]
    vocab = [_class_tokens(c) for c in range(n_classes)]
    documents = []
    for c in range(n_classes):
        median = _MEDIAN_NODES[c % len(_MEDIAN_NODES)]
        n_cols = 1 + c % 2
        margin = 30.0 + 12.0 * (c % 3)
        cat_weights = [(1 + (c + i) % 5) for i in range(5)]
        cat_cdf = [sum(cat_weights[: i + 1]) / sum(cat_weights)
                   for i in range(5)]
        for d in range(docs_per_class):
            n_regions = max(2, min(18, median + rng.randint(5) - 2))
            col_w = (_PAGE_W - 2 * margin) / n_cols
            y_cursor = [margin] * n_cols
            regions = []
            for rid in range(n_regions):
                col = rng.randint(n_cols)
                height = 28.0 + rng.uniform(0.0, 80.0)
                y0 = y_cursor[col]
                if y0 + height > _PAGE_H - margin:
                    y0 = margin + rng.uniform(0.0, 40.0)
                    y_cursor[col] = y0
                y1 = min(y0 + height, _PAGE_H - margin)
                y_cursor[col] = y1 + 6.0
                x0 = margin + col * col_w + rng.uniform(0.0, 12.0)
                x1 = x0 + max(48.0, col_w - rng.uniform(12.0, 40.0))
                x1 = min(x1, _PAGE_W - margin)
                u = rng.random()
                category = CATEGORIES[next(i for i, t in enumerate(cat_cdf)
                                           if u <= t)]
                n_tokens = 4 + rng.randint(10)
                words = []
                for _ in range(n_tokens):
                    if rng.random() < 0.45:
                        words.append(rng.choice(vocab[c]))
                    else:
                        words.append(rng.choice(list(_BACKGROUND_TOKENS)))
                regions.append(RegionAnnotation(
                    region_id=rid,
                    category=category,
                    bbox=(round(x0, 2), round(y0, 2), round(x1, 2), round(y1, 2)),
                    text=" ".join(words),
                ))
            documents.append(DocumentAnnotation(
                doc_id=f"syn-{c}-{d}",
                page_width=_PAGE_W,
                page_height=_PAGE_H,
                regions=regions,
                label=c,
            ))
    corpus = Corpus(class_names=class_names, documents=documents)
    validate_corpus(corpus)
    return corpus
