import { createWorker, OEM, PSM, Worker } from "tesseract.js";
import eng from "@tesseract.js-data/eng";

export interface OcrRegion {
  text: string;
  /** Recognition confidence on tesseract's native 0-100 scale. */
  confidence: number;
  bbox: { x0: number; y0: number; x1: number; y1: number };
}

/**
 * Start a tesseract worker against the bundled English model so recognition
 * works without network access. Automatic page segmentation keeps visually
 * separated text areas as distinct blocks.
 */
export async function createOcrWorker(): Promise<Worker> {
  const worker = await createWorker("eng", OEM.LSTM_ONLY, {
    langPath: eng.langPath,
    gzip: eng.gzip,
    cacheMethod: "none",
  });
  await worker.setParameters({ tessedit_pageseg_mode: PSM.AUTO });
  return worker;
}

/**
 * Recognize one page image and flatten the block/paragraph tree into a list
 * of candidate layout regions. Empty paragraphs are dropped.
 */
export async function recognizeRegions(worker: Worker, imagePath: string): Promise<OcrRegion[]> {
  const result = await worker.recognize(imagePath, {}, { blocks: true });
  const regions: OcrRegion[] = [];
  for (const block of result.data.blocks ?? []) {
    for (const paragraph of block.paragraphs ?? []) {
      const text = paragraph.text.replace(/\s+/g, " ").trim();
      if (text.length === 0) {
        continue;
      }
      regions.push({
        text,
        confidence: paragraph.confidence,
        bbox: { ...paragraph.bbox },
      });
    }
  }
  return regions;
}
