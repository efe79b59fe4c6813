import { z } from "zod";

/** Region categories accepted by the corpus schema, in canonical order. */
export const CATEGORIES = ["Title", "Text", "List", "Table", "Figure"] as const;

export const CORPUS_VERSION = 1;

export const regionSchema = z
  .object({
    region_id: z.number().int().nonnegative(),
    category: z.enum(CATEGORIES),
    bbox: z.tuple([z.number(), z.number(), z.number(), z.number()]),
    text: z.string(),
    image_embedding: z.array(z.number().finite()).min(1).optional(),
  })
  .strict();

export const documentSchema = z
  .object({
    doc_id: z.string().min(1),
    page_width: z.number().positive(),
    page_height: z.number().positive(),
    label: z.number().int().nonnegative(),
    regions: z.array(regionSchema).min(1),
  })
  .strict()
  .superRefine((doc, ctx) => {
    const seen = new Set<number>();
    doc.regions.forEach((region, index) => {
      const [x0, y0, x1, y1] = region.bbox;
      if (!(x0 < x1) || !(y0 < y1)) {
        ctx.addIssue({
          code: "custom",
          path: ["regions", index, "bbox"],
          message: `bbox requires x0 < x1 and y0 < y1, got ${region.bbox}`,
        });
      }
      if (x0 < 0 || y0 < 0 || x1 > doc.page_width || y1 > doc.page_height) {
        ctx.addIssue({
          code: "custom",
          path: ["regions", index, "bbox"],
          message: `bbox ${region.bbox} outside page bounds (${doc.page_width} x ${doc.page_height})`,
        });
      }
      if (seen.has(region.region_id)) {
        ctx.addIssue({
          code: "custom",
          path: ["regions", index, "region_id"],
          message: `duplicate region_id ${region.region_id}`,
        });
      }
      seen.add(region.region_id);
    });
  });

export const headerSchema = z
  .object({
    class_names: z.array(z.string()).min(2),
    version: z.literal(CORPUS_VERSION),
  })
  .strict();

export type Region = z.infer<typeof regionSchema>;
export type Document = z.infer<typeof documentSchema>;
export type CorpusHeader = z.infer<typeof headerSchema>;

/**
 * Serialize a corpus to the line-delimited JSON format: one compact header
 * line followed by one compact document line each. Every line is validated
 * before it is rendered, so an invalid document aborts the whole write.
 */
export function serializeCorpus(header: CorpusHeader, documents: Document[]): string {
  const lines = [JSON.stringify(headerSchema.parse(header))];
  for (const doc of documents) {
    const parsed = documentSchema.parse(doc);
    if (parsed.label >= header.class_names.length) {
      throw new Error(
        `label ${parsed.label} out of range for ${header.class_names.length} classes (doc_id=${parsed.doc_id})`,
      );
    }
    lines.push(JSON.stringify(parsed));
  }
  return lines.join("\n") + "\n";
}
