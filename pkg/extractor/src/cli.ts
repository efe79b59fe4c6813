#!/usr/bin/env node
import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { extractCorpus, writeCorpus } from "./extract";

export async function main(argv: string[]): Promise<number> {
  const args = await yargs(argv)
    .command("extract", "OCR a directory of page images into a corpus file")
    .demandCommand(1)
    .option("input", {
      type: "string",
      demandOption: true,
      describe: "directory with one subdirectory of .png images per class",
    })
    .option("labels", {
      type: "string",
      demandOption: true,
      describe: "JSON file mapping subdirectory name to class name",
    })
    .option("out", {
      type: "string",
      demandOption: true,
      describe: "output corpus path (line-delimited JSON)",
    })
    .option("threshold", {
      type: "number",
      default: 0.5,
      describe: "minimum region confidence in [0, 1]",
    })
    .option("image-embeddings", {
      choices: ["on", "off"] as const,
      default: "off" as const,
      describe: "emit per-region image embeddings (needs a local backbone)",
    })
    .strict()
    .parse();

  try {
    const result = await extractCorpus({
      inputDir: args.input,
      labelsPath: args.labels,
      threshold: args.threshold,
      imageEmbeddings: args["image-embeddings"],
      log: (message) => console.error(message),
    });
    writeCorpus(args.out, result);
    console.error(`wrote ${result.documents.length} documents to ${args.out}`);
    return 0;
  } catch (error) {
    console.error(`error: ${error instanceof Error ? error.message : error}`);
    return 1;
  }
}

if (require.main === module) {
  main(hideBin(process.argv)).then((code) => {
    process.exitCode = code;
  });
}
