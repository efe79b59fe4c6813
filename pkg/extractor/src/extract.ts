import * as fs from "fs";
import * as path from "path";

import { createOcrWorker, OcrRegion, recognizeRegions } from "./ocr";
import { PageSize, pngDimensions } from "./page";
import { CorpusHeader, Document, Region, documentSchema, serializeCorpus } from "./schema";

/** Fraction of the page height below which a short region can be a Title. */
const TITLE_BAND = 0.2;
const TITLE_MAX_CHARS = 60;

export interface ExtractOptions {
  /** Directory with one subdirectory per labeled class of page images. */
  inputDir: string;
  /** JSON file mapping subdirectory name to class name. */
  labelsPath: string;
  /** Minimum region confidence on a 0-1 scale; weaker regions are dropped. */
  threshold?: number;
  /** Per-region image embeddings; requires a local backbone model. */
  imageEmbeddings?: "on" | "off";
  log?: (message: string) => void;
}

export interface ExtractResult {
  header: CorpusHeader;
  documents: Document[];
  /** Images that failed OCR or dimension parsing, by relative path. */
  failed: string[];
}

export interface LabelMap {
  classNames: string[];
  labelOf: Map<string, number>;
}

export function loadLabels(labelsPath: string): LabelMap {
  const raw = JSON.parse(fs.readFileSync(labelsPath, "utf-8"));
  if (typeof raw !== "object" || raw === null || Array.isArray(raw)) {
    throw new Error(`${labelsPath}: labels file must be an object mapping directory to class name`);
  }
  const entries = Object.entries(raw as Record<string, unknown>);
  if (entries.length === 0) {
    throw new Error(`${labelsPath}: labels file is empty`);
  }
  for (const [dir, name] of entries) {
    if (typeof name !== "string" || name.length === 0) {
      throw new Error(`${labelsPath}: class name for ${dir!} must be a non-empty string`);
    }
  }
  const classNames = [...new Set(entries.map(([, name]) => name as string))].sort();
  if (classNames.length < 2) {
    throw new Error(`${labelsPath}: need at least 2 distinct class names, got ${classNames.length}`);
  }
  const labelOf = new Map<string, number>();
  for (const [dir, name] of entries) {
    labelOf.set(dir, classNames.indexOf(name as string));
  }
  return { classNames, labelOf };
}

/** List labeled page images as [subdirectory, filename] pairs, sorted. */
export function listImages(inputDir: string, labels: LabelMap): Array<[string, string]> {
  const pairs: Array<[string, string]> = [];
  for (const dir of [...labels.labelOf.keys()].sort()) {
    const full = path.join(inputDir, dir);
    if (!fs.existsSync(full)) {
      throw new Error(`labeled directory ${full} does not exist`);
    }
    for (const name of fs.readdirSync(full).sort()) {
      if (name.toLowerCase().endsWith(".png")) {
        pairs.push([dir, name]);
      }
    }
  }
  if (pairs.length === 0) {
    throw new Error(`no .png images found under ${inputDir}`);
  }
  return pairs;
}

/**
 * Heuristic region category: a short, high-up region reads as a Title;
 * everything else stays plain Text. OCR alone cannot distinguish lists,
 * tables, or figures reliably, so those categories are never emitted.
 */
export function categorize(region: OcrRegion, page: PageSize): Region["category"] {
  if (region.bbox.y0 < TITLE_BAND * page.height && region.text.length <= TITLE_MAX_CHARS) {
    return "Title";
  }
  return "Text";
}

/**
 * Turn raw OCR regions into one schema-valid document. Regions below the
 * confidence threshold are dropped; when nothing survives, a single
 * full-page Text region keeps the document usable downstream.
 */
export function documentFromOcr(
  docId: string,
  label: number,
  page: PageSize,
  regions: OcrRegion[],
  threshold: number,
): Document {
  const kept: Region[] = [];
  for (const region of regions) {
    if (region.confidence / 100 < threshold) {
      continue;
    }
    const x0 = Math.max(0, Math.min(region.bbox.x0, page.width - 1));
    const y0 = Math.max(0, Math.min(region.bbox.y0, page.height - 1));
    const x1 = Math.min(page.width, Math.max(region.bbox.x1, x0 + 1));
    const y1 = Math.min(page.height, Math.max(region.bbox.y1, y0 + 1));
    kept.push({
      region_id: kept.length,
      category: categorize(region, page),
      bbox: [x0, y0, x1, y1],
      text: region.text,
    });
  }
  if (kept.length === 0) {
    kept.push({
      region_id: 0,
      category: "Text",
      bbox: [0, 0, page.width, page.height],
      text: "",
    });
  }
  return documentSchema.parse({
    doc_id: docId,
    page_width: page.width,
    page_height: page.height,
    label,
    regions: kept,
  });
}

/**
 * Run OCR over every labeled image and assemble a corpus. Individual image
 * failures are logged and skipped; the run aborts only when more than half
 * of the images fail.
 */
export async function extractCorpus(options: ExtractOptions): Promise<ExtractResult> {
  const threshold = options.threshold ?? 0.5;
  const log = options.log ?? (() => undefined);
  if (threshold < 0 || threshold > 1) {
    throw new Error(`threshold must be within [0, 1], got ${threshold}`);
  }
  if ((options.imageEmbeddings ?? "off") === "on") {
    throw new Error(
      "image embeddings require a local vision backbone model, which is not bundled; rerun with --image-embeddings off",
    );
  }
  const labels = loadLabels(options.labelsPath);
  const images = listImages(options.inputDir, labels);

  const documents: Document[] = [];
  const failed: string[] = [];
  const worker = await createOcrWorker();
  try {
    for (const [dir, name] of images) {
      const relative = `${dir}/${name}`;
      const imagePath = path.join(options.inputDir, dir, name);
      try {
        const page = pngDimensions(fs.readFileSync(imagePath));
        const regions = await recognizeRegions(worker, imagePath);
        const docId = relative.replace(/\.png$/i, "");
        documents.push(documentFromOcr(docId, labels.labelOf.get(dir)!, page, regions, threshold));
        log(`${relative}: ${documents[documents.length - 1].regions.length} regions`);
      } catch (error) {
        failed.push(relative);
        log(`${relative}: skipped (${error instanceof Error ? error.message : error})`);
      }
    }
  } finally {
    await worker.terminate();
  }
  if (failed.length * 2 > images.length) {
    throw new Error(`${failed.length} of ${images.length} images failed extraction; aborting`);
  }
  return { header: { class_names: labels.classNames, version: 1 }, documents, failed };
}

export function writeCorpus(outPath: string, result: ExtractResult): void {
  fs.writeFileSync(outPath, serializeCorpus(result.header, result.documents), "utf-8");
}
