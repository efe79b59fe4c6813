import { execFileSync } from "child_process";
import * as fs from "fs";
import * as os from "os";
import * as path from "path";

import { beforeAll, describe, expect, it } from "vitest";

import {
  ExtractResult,
  categorize,
  documentFromOcr,
  extractCorpus,
  listImages,
  loadLabels,
  writeCorpus,
} from "../src/extract";
import { OcrRegion } from "../src/ocr";
import { documentSchema } from "../src/schema";

const FIXTURES = path.join(__dirname, "..", "fixtures");
const PAGE = { width: 850, height: 1100 };

function region(overrides: Partial<OcrRegion> = {}): OcrRegion {
  return {
    text: "some body text",
    confidence: 90,
    bbox: { x0: 70, y0: 400, x1: 600, y1: 450 },
    ...overrides,
  };
}

describe("loadLabels", () => {
  it("maps directories to sorted class indices", () => {
    const labels = loadLabels(path.join(FIXTURES, "labels.json"));
    expect(labels.classNames).toEqual(["invoice", "letter"]);
    expect(labels.labelOf.get("invoice")).toBe(0);
    expect(labels.labelOf.get("letter")).toBe(1);
  });

  it("rejects fewer than two classes", () => {
    const file = path.join(os.tmpdir(), `labels-${process.pid}.json`);
    fs.writeFileSync(file, JSON.stringify({ a: "same", b: "same" }));
    expect(() => loadLabels(file)).toThrow(/at least 2 distinct/);
  });
});

describe("listImages", () => {
  it("finds every fixture image in sorted order", () => {
    const labels = loadLabels(path.join(FIXTURES, "labels.json"));
    const images = listImages(FIXTURES, labels);
    expect(images.length).toBeGreaterThanOrEqual(10);
    const sorted = [...images].sort((a, b) => a.join("/").localeCompare(b.join("/")));
    expect(images).toEqual(sorted);
  });

  it("errors on a missing labeled directory", () => {
    const labels = loadLabels(path.join(FIXTURES, "labels.json"));
    expect(() => listImages("/nonexistent", labels)).toThrow(/does not exist/);
  });
});

describe("categorize", () => {
  it("marks a short top-of-page region as Title", () => {
    const r = region({ text: "INVOICE", bbox: { x0: 342, y0: 52, x1: 509, y1: 84 } });
    expect(categorize(r, PAGE)).toBe("Title");
  });

  it("keeps a long top-of-page region as Text", () => {
    const r = region({ text: "x".repeat(80), bbox: { x0: 70, y0: 52, x1: 600, y1: 84 } });
    expect(categorize(r, PAGE)).toBe("Text");
  });

  it("keeps a short low region as Text", () => {
    const r = region({ text: "Sincerely" });
    expect(categorize(r, PAGE)).toBe("Text");
  });
});

describe("documentFromOcr", () => {
  it("drops regions below the confidence threshold", () => {
    const doc = documentFromOcr(
      "d",
      0,
      PAGE,
      [region({ confidence: 90 }), region({ confidence: 30, bbox: { x0: 70, y0: 500, x1: 600, y1: 550 } })],
      0.5,
    );
    expect(doc.regions).toHaveLength(1);
    expect(doc.regions[0].region_id).toBe(0);
  });

  it("falls back to one full-page region when nothing survives", () => {
    const doc = documentFromOcr("d", 1, PAGE, [region({ confidence: 10 })], 0.5);
    expect(doc.regions).toEqual([
      { region_id: 0, category: "Text", bbox: [0, 0, 850, 1100], text: "" },
    ]);
  });

  it("clamps an out-of-page bbox to the page bounds", () => {
    const doc = documentFromOcr(
      "d",
      0,
      PAGE,
      [region({ bbox: { x0: -4, y0: 400, x1: 1000, y1: 450 } })],
      0.5,
    );
    expect(doc.regions[0].bbox).toEqual([0, 400, 850, 450]);
  });

  it("always yields a schema-valid document", () => {
    const doc = documentFromOcr("d", 0, PAGE, [region()], 0.5);
    expect(() => documentSchema.parse(doc)).not.toThrow();
  });
});

describe("extractCorpus on the fixture pages", () => {
  let result: ExtractResult;
  let outPath: string;

  beforeAll(async () => {
    const logs: string[] = [];
    result = await extractCorpus({
      inputDir: FIXTURES,
      labelsPath: path.join(FIXTURES, "labels.json"),
      log: (m) => logs.push(m),
    });
    outPath = path.join(os.tmpdir(), `corpus-${process.pid}.jsonl`);
    writeCorpus(outPath, result);
  });

  it("extracts at least ten documents with no failures", () => {
    expect(result.documents.length).toBeGreaterThanOrEqual(10);
    expect(result.failed).toEqual([]);
  });

  it("covers both classes", () => {
    const labels = new Set(result.documents.map((d) => d.label));
    expect(labels).toEqual(new Set([0, 1]));
  });

  it("segments each page into several regions", () => {
    for (const doc of result.documents) {
      expect(doc.regions.length).toBeGreaterThanOrEqual(2);
    }
  });

  it("detects the page heading as a Title region", () => {
    const withTitle = result.documents.filter((d) =>
      d.regions.some((r) => r.category === "Title"),
    );
    expect(withTitle.length).toBeGreaterThanOrEqual(result.documents.length / 2);
  });

  it("recognizes class-specific words", () => {
    const invoiceText = result.documents
      .filter((d) => d.label === 0)
      .map((d) => d.regions.map((r) => r.text).join(" "))
      .join(" ")
      .toLowerCase();
    expect(invoiceText).toContain("amount");
  });

  it("orders documents by image path", () => {
    const ids = result.documents.map((d) => d.doc_id);
    expect(ids).toEqual([...ids].sort());
  });

  it("rejects the image-embeddings path without a backbone", async () => {
    await expect(
      extractCorpus({
        inputDir: FIXTURES,
        labelsPath: path.join(FIXTURES, "labels.json"),
        imageEmbeddings: "on",
      }),
    ).rejects.toThrow(/backbone/);
  });

  it("loads strictly and trains to completion downstream", () => {
    const script = [
      "import sys",
      "from docgraph import gnn, graphs, ingest, textembed",
      "corpus = ingest.load_corpus(sys.argv[1], strict=True)",
      "assert len(corpus.documents) >= 10",
      "split = ingest.split_dataset(corpus, (0.8, 0.0, 0.2), seed=0)",
      "emb = textembed.train_word2vec(corpus, textembed.Word2VecConfig(dim=8, epochs=2))",
      "tr, _, te = graphs.build_dataset(corpus, split, emb, graphs.EdgePolicy.spatial_knn(3))",
      "model, _ = gnn.train(tr, None, gnn.GnnConfig(), gnn.TrainConfig(epochs=3, seed=0),",
      "                     class_names=corpus.class_names, graph_build=tr.build_meta)",
      "print('trained', model.n_classes)",
    ].join("\n");
    const stdout = execFileSync("python3", ["-c", script, outPath], { encoding: "utf-8" });
    expect(stdout.trim()).toBe("trained 2");
  });
});
