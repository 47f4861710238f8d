/**
 * Patch aggregation: per-band means over scene-classification-valid pixels.
 */

import { BANDS, VALID_SCL_CLASSES, type ScenePatch } from './schema.js';

export interface PatchAggregate {
  /** Per-band means in canonical band order. */
  bandMeans: number[];
  /** Share of pixels whose scene-classification class is valid. */
  validFraction: number;
}

function gridShape(grid: number[][]): [number, number] {
  const rows = grid.length;
  const cols = rows > 0 ? (grid[0] ?? []).length : 0;
  for (const row of grid) {
    if (row.length !== cols) {
      throw new Error('ragged pixel grid');
    }
  }
  return [rows, cols];
}

/**
 * Average each band over pixels whose SCL class is valid.
 *
 * Returns null when no pixel is valid: a fully masked scene has no defined
 * mean and must be skipped (and reported) by the caller.
 */
export function aggregatePatch(patch: ScenePatch): PatchAggregate | null {
  const [rows, cols] = gridShape(patch.scl);
  if (rows === 0 || cols === 0) {
    throw new Error(`scene ${patch.sceneId}: empty pixel grid`);
  }
  for (const band of BANDS) {
    const grid = patch.bands[band];
    if (!grid) {
      throw new Error(`scene ${patch.sceneId}: missing band ${band}`);
    }
    const [r, c] = gridShape(grid);
    if (r !== rows || c !== cols) {
      throw new Error(`scene ${patch.sceneId}: band ${band} grid is ${r}x${c}, scl is ${rows}x${cols}`);
    }
  }

  let validCount = 0;
  const sums = new Array<number>(BANDS.length).fill(0);
  for (let i = 0; i < rows; i++) {
    for (let j = 0; j < cols; j++) {
      const sclRow = patch.scl[i]!;
      if (!VALID_SCL_CLASSES.has(sclRow[j]!)) continue;
      validCount += 1;
      for (let b = 0; b < BANDS.length; b++) {
        const value = patch.bands[BANDS[b]!]![i]![j]!;
        if (!Number.isFinite(value)) {
          throw new Error(`scene ${patch.sceneId}: non-finite ${BANDS[b]} value at (${i}, ${j})`);
        }
        sums[b]! += value;
      }
    }
  }

  if (validCount === 0) {
    return null;
  }
  return {
    bandMeans: sums.map((s) => s / validCount),
    validFraction: validCount / (rows * cols),
  };
}
