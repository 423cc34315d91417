/**
 * Typed-array bindings for the tracking evaluation engine.
 *
 * `evaluate` scores one sequence (the five tracking metrics) and
 * `matpRun` applies Kalman-filter match processing to a raw trajectory.
 * Both delegate to the engine CLI through its documented file formats,
 * with every numeric hop lossless, so results are bit-identical to
 * invoking the CLI directly on the same data.
 */

import * as fs from "fs";
import * as os from "os";
import * as path from "path";

import { runEngine } from "./engine";
import {
  SequenceScores,
  readBoxesFile,
  readReportScores,
  writeBoxesFile,
  writeManifest,
  writeResponseContainer,
  writeSequenceDir,
} from "./wire";

export { SequenceScores } from "./wire";
export { engineCommand } from "./engine";

const SEQUENCE = "seq0000";
const TRACKER = "bind";
// Nominal frame bounds for synthesized annotations; only out-of-frame
// warnings depend on them, none of the five scores do.
const FRAME_SIDE = 1_000_000;

export type BoxArray = Float64Array | ReadonlyArray<ReadonlyArray<number>>;

export interface MatpParams {
  conf?: number;
  threshold?: number;
  iouThreshold?: number;
  alpha?: number;
  topN?: number;
  searchFactor?: number;
}

function toFlatBoxes(name: string, boxes: BoxArray, expectRows?: number): Float64Array {
  let flat: Float64Array;
  if (boxes instanceof Float64Array) {
    if (boxes.length % 4 !== 0) {
      throw new Error(`${name}: flat length ${boxes.length} is not a multiple of 4`);
    }
    flat = boxes;
  } else {
    flat = new Float64Array(boxes.length * 4);
    boxes.forEach((row, i) => {
      if (row.length !== 4) {
        throw new Error(`${name}[${i}]: expected 4 values, got ${row.length}`);
      }
      flat.set(row, i * 4);
    });
  }
  for (let i = 0; i < flat.length; i++) {
    if (!Number.isFinite(flat[i])) {
      throw new Error(`${name}: non-finite value at flat index ${i}`);
    }
  }
  const rows = flat.length / 4;
  if (expectRows !== undefined && rows !== expectRows) {
    throw new Error(`${name}: got ${rows} boxes, expected ${expectRows}`);
  }
  return flat;
}

function toAbsent(absent: ReadonlyArray<boolean | number>, rows: number): boolean[] {
  if (absent.length !== rows) {
    throw new Error(`absent: got ${absent.length} flags, expected ${rows}`);
  }
  return absent.map((a) => Boolean(a));
}

function withTempDir<T>(fn: (dir: string) => T): T {
  const dir = fs.mkdtempSync(path.join(os.tmpdir(), "uotkit-bind-"));
  try {
    return fn(dir);
  } finally {
    fs.rmSync(dir, { recursive: true, force: true });
  }
}

/**
 * Score one sequence: ground-truth boxes (N x 4), per-frame absent
 * flags (N), predicted boxes (N x 4). Returns the five metrics exactly
 * as the engine reports them.
 */
export function evaluate(
  gtBoxes: BoxArray,
  absent: ReadonlyArray<boolean | number>,
  predBoxes: BoxArray
): SequenceScores {
  const gt = toFlatBoxes("gtBoxes", gtBoxes);
  const rows = gt.length / 4;
  if (rows === 0) {
    throw new Error("gtBoxes: need at least one frame");
  }
  const pred = toFlatBoxes("predBoxes", predBoxes, rows);
  const flags = toAbsent(absent, rows);

  return withTempDir((dir) => {
    const dataRoot = path.join(dir, "data");
    writeSequenceDir(path.join(dataRoot, SEQUENCE), gt, flags, {
      class: "object",
      superclass: "fish",
      width: FRAME_SIDE,
      height: FRAME_SIDE,
      fps: 30,
    });
    writeManifest(dataRoot, "test", [SEQUENCE]);
    writeManifest(dataRoot, "train", []);
    writeBoxesFile(path.join(dir, "results", TRACKER, `${SEQUENCE}.txt`), pred);

    const out = path.join(dir, "out");
    runEngine([
      "evaluate",
      "--dataset", dataRoot,
      "--results", path.join(dir, "results"),
      "--tracker", TRACKER,
      "--output", out,
    ]);
    return readReportScores(path.join(out, "report.json"), SEQUENCE);
  });
}

/**
 * Motion-aware match processing over response maps.
 *
 * `initialBox` seeds the filter; `maps` holds T frame-major row-major
 * n x n grids for the frames after the first; `rawBoxes` (T x 4) are
 * the tracker's argmax boxes for those frames. Returns the corrected
 * trajectory as a freshly allocated (T+1) x 4 array, initial box first.
 */
export function matpRun(
  initialBox: ReadonlyArray<number> | Float64Array,
  maps: Float32Array | Float64Array | ReadonlyArray<number>,
  gridN: number,
  rawBoxes: BoxArray,
  params: MatpParams = {}
): Float64Array {
  if (initialBox.length !== 4) {
    throw new Error(`initialBox: expected 4 values, got ${initialBox.length}`);
  }
  if (!Number.isInteger(gridN) || gridN < 1) {
    throw new Error(`gridN must be a positive integer, got ${gridN}`);
  }
  const grids = maps instanceof Float32Array ? maps : Float32Array.from(maps as ArrayLike<number>);
  if (grids.length % (gridN * gridN) !== 0) {
    throw new Error(
      `maps: ${grids.length} floats do not tile ${gridN}x${gridN} grids`
    );
  }
  const frames = grids.length / (gridN * gridN);
  const raw = toFlatBoxes("rawBoxes", rawBoxes, frames);

  const full = new Float64Array((frames + 1) * 4);
  for (let c = 0; c < 4; c++) {
    const v = Number(initialBox[c]);
    if (!Number.isFinite(v)) {
      throw new Error(`initialBox: non-finite value at index ${c}`);
    }
    full[c] = v;
  }
  full.set(raw, 4);

  return withTempDir((dir) => {
    writeBoxesFile(path.join(dir, "raw", TRACKER, `${SEQUENCE}.txt`), full);
    writeResponseContainer(path.join(dir, "maps", `${SEQUENCE}.rmap`), grids, frames, gridN);

    const out = path.join(dir, "out");
    const args = [
      "matp",
      "--results", path.join(dir, "raw"),
      "--tracker", TRACKER,
      "--maps", path.join(dir, "maps"),
      "--output", out,
      "--grid-n", String(gridN),
    ];
    if (params.conf !== undefined) args.push("--conf", String(params.conf));
    if (params.threshold !== undefined) args.push("--threshold", String(params.threshold));
    if (params.iouThreshold !== undefined) {
      args.push("--iou-threshold", String(params.iouThreshold));
    }
    if (params.alpha !== undefined) args.push("--alpha", String(params.alpha));
    if (params.topN !== undefined) args.push("--top-n", String(params.topN));
    if (params.searchFactor !== undefined) {
      args.push("--search-factor", String(params.searchFactor));
    }
    runEngine(args);
    return readBoxesFile(path.join(out, `${SEQUENCE}.txt`));
  });
}
