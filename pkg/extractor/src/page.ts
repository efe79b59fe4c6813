const PNG_SIGNATURE = Buffer.from([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]);

export interface PageSize {
  width: number;
  height: number;
}

/**
 * Read pixel dimensions from a PNG buffer. The IHDR chunk is mandatory and
 * always first, so width and height sit at fixed offsets 16 and 20.
 */
export function pngDimensions(data: Buffer): PageSize {
  if (data.length < 24 || !data.subarray(0, 8).equals(PNG_SIGNATURE)) {
    throw new Error("not a PNG file (bad signature)");
  }
  if (data.toString("latin1", 12, 16) !== "IHDR") {
    throw new Error("malformed PNG (missing IHDR chunk)");
  }
  const width = data.readUInt32BE(16);
  const height = data.readUInt32BE(20);
  if (width === 0 || height === 0) {
    throw new Error(`malformed PNG (zero dimension ${width}x${height})`);
  }
  return { width, height };
}
