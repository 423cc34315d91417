/**
 * Readers and writers for the engine's wire formats.
 *
 * Every numeric path is lossless: box text files and report JSON carry
 * shortest round-trip decimals (IEEE-754 doubles survive both
 * directions in JS and in the engine), response maps travel through the
 * binary float32 container.
 */

import * as fs from "fs";
import * as path from "path";

/** Shortest decimal that parses back to the same double. */
export function formatDouble(value: number): string {
  if (!Number.isFinite(value)) {
    throw new Error(`non-finite value cannot be serialized: ${value}`);
  }
  return String(value);
}

export function writeBoxesFile(filePath: string, boxes: Float64Array): void {
  if (boxes.length % 4 !== 0) {
    throw new Error(`box buffer length ${boxes.length} is not a multiple of 4`);
  }
  const lines: string[] = [];
  for (let i = 0; i < boxes.length; i += 4) {
    lines.push(
      `${formatDouble(boxes[i])},${formatDouble(boxes[i + 1])},` +
        `${formatDouble(boxes[i + 2])},${formatDouble(boxes[i + 3])}`
    );
  }
  fs.mkdirSync(path.dirname(filePath), { recursive: true });
  fs.writeFileSync(filePath, lines.join("\n") + "\n", "utf-8");
}

export function readBoxesFile(filePath: string): Float64Array {
  const text = fs.readFileSync(filePath, "utf-8");
  const rows = text
    .split(/\r?\n/)
    .map((line) => line.trim())
    .filter((line) => line.length > 0);
  const out = new Float64Array(rows.length * 4);
  rows.forEach((line, row) => {
    const cells = line.split(line.includes("\t") ? "\t" : ",");
    if (cells.length !== 4 && cells.length !== 5) {
      throw new Error(`${filePath}:${row + 1}: expected 4 or 5 columns, got ${cells.length}`);
    }
    for (let c = 0; c < 4; c++) {
      const value = Number(cells[c]);
      if (!Number.isFinite(value)) {
        throw new Error(`${filePath}:${row + 1}: non-numeric cell ${cells[c]}`);
      }
      out[row * 4 + c] = value;
    }
  });
  return out;
}

export function writeAbsentFile(filePath: string, absent: ReadonlyArray<boolean>): void {
  fs.mkdirSync(path.dirname(filePath), { recursive: true });
  fs.writeFileSync(filePath, absent.map((a) => (a ? "1" : "0")).join("\n") + "\n", "utf-8");
}

export interface SequenceMeta {
  class: string;
  superclass: string;
  width: number;
  height: number;
  fps: number;
}

export function writeSequenceDir(
  dir: string,
  boxes: Float64Array,
  absent: ReadonlyArray<boolean>,
  meta: SequenceMeta
): void {
  fs.mkdirSync(dir, { recursive: true });
  writeBoxesFile(path.join(dir, "groundtruth_rect.txt"), boxes);
  writeAbsentFile(path.join(dir, "absent.txt"), absent);
  fs.writeFileSync(path.join(dir, "language.txt"), "\n", "utf-8");
  fs.writeFileSync(path.join(dir, "meta.json"), JSON.stringify(meta) + "\n", "utf-8");
}

export function writeManifest(root: string, split: string, names: ReadonlyArray<string>): void {
  fs.mkdirSync(root, { recursive: true });
  fs.writeFileSync(path.join(root, `${split}.txt`), names.map((n) => n + "\n").join(""), "utf-8");
}

/**
 * Response-map container: little-endian uint32 header {frame-count, n},
 * then frame-major row-major float32 grids.
 */
export function writeResponseContainer(
  filePath: string,
  maps: Float32Array,
  frames: number,
  gridN: number
): void {
  if (maps.length !== frames * gridN * gridN) {
    throw new Error(
      `map buffer holds ${maps.length} floats, expected ${frames}x${gridN}x${gridN}`
    );
  }
  const buffer = Buffer.alloc(8 + maps.length * 4);
  buffer.writeUInt32LE(frames >>> 0, 0);
  buffer.writeUInt32LE(gridN >>> 0, 4);
  for (let i = 0; i < maps.length; i++) {
    buffer.writeFloatLE(maps[i], 8 + i * 4);
  }
  fs.mkdirSync(path.dirname(filePath), { recursive: true });
  fs.writeFileSync(filePath, buffer);
}

export interface SequenceScores {
  pre: number;
  npre: number;
  auc: number;
  cauc: number;
  macc: number;
}

export function readReportScores(reportPath: string, sequence: string): SequenceScores {
  const report = JSON.parse(fs.readFileSync(reportPath, "utf-8"));
  const entry = report.sequences?.[sequence];
  if (!entry) {
    throw new Error(`report ${reportPath} has no sequence ${sequence}`);
  }
  return {
    pre: entry.pre,
    npre: entry.npre,
    auc: entry.auc,
    cauc: entry.cauc,
    macc: entry.macc,
  };
}
