/**
 * Export orchestration: per-record scene retrieval, aggregation, sorting,
 * and atomic CSV emission.
 */

import { renameSync, unlinkSync, writeFileSync, existsSync } from 'node:fs';

import { aggregatePatch } from './aggregate.js';
import { readInSituCsv } from './insitu.js';
import {
  BAND_SAMPLES_HEADER,
  SCALE_COMMENT,
  type BandSampleRow,
  type ExportJob,
  type RecordFailure,
  validateJob,
} from './schema.js';
import { AuthError, type SceneSource } from './sources.js';

export type LogFn = (message: string) => void;

export interface ExportResult {
  rows: BandSampleRow[];
  /** Records whose retrieval failed outright (after retries). */
  failures: RecordFailure[];
  recordCount: number;
}

/** Run the export; per-record problems are logged and collected, never fatal. */
export async function runExport(job: ExportJob, source: SceneSource, log: LogFn): Promise<ExportResult> {
  validateJob(job);
  const records = readInSituCsv(job.insituPath);

  const rows: BandSampleRow[] = [];
  const failures: RecordFailure[] = [];
  for (const record of records) {
    let patches;
    try {
      patches = await source.scenesFor(record, job.windowDays, job.squareKm);
    } catch (err) {
      if (err instanceof AuthError) throw err; // bad credentials sink every record alike
      const reason = err instanceof Error ? err.message : String(err);
      failures.push({ recordId: record.recordId, reason });
      log(`record ${record.recordId}: retrieval failed: ${reason}`);
      continue;
    }
    if (patches.length === 0) {
      log(`record ${record.recordId}: no scene in window`);
      continue;
    }
    for (const patch of patches) {
      const aggregate = aggregatePatch(patch);
      if (aggregate === null) {
        log(`record ${record.recordId}: scene ${patch.sceneId} fully masked, skipped`);
        continue;
      }
      rows.push({
        recordId: record.recordId,
        sceneId: patch.sceneId,
        sceneDatetime: patch.sceneDatetime,
        validFraction: aggregate.validFraction,
        bandMeans: aggregate.bandMeans,
      });
    }
  }

  rows.sort((a, b) =>
    a.recordId.localeCompare(b.recordId) ||
    a.sceneDatetime.localeCompare(b.sceneDatetime) ||
    a.sceneId.localeCompare(b.sceneId));
  return { rows, failures, recordCount: records.length };
}

function formatField(value: string): string {
  if (/[",\n\r]/.test(value)) {
    throw new Error(`field ${JSON.stringify(value)} would need quoting; schema forbids it`);
  }
  return value;
}

function formatNumber(value: number): string {
  if (!Number.isFinite(value)) {
    throw new Error(`non-finite value ${value} in output`);
  }
  return String(value);
}

/** Serialize rows to the band-samples CSV layout (deterministic bytes). */
export function renderBandSamplesCsv(rows: readonly BandSampleRow[]): string {
  const lines = [SCALE_COMMENT, BAND_SAMPLES_HEADER.join(',')];
  for (const row of rows) {
    lines.push([
      formatField(row.recordId),
      formatField(row.sceneId),
      formatField(row.sceneDatetime),
      formatNumber(row.validFraction),
      ...row.bandMeans.map(formatNumber),
    ].join(','));
  }
  return lines.join('\n') + '\n';
}

/** Write the CSV atomically: full temp file first, then rename into place. */
export function writeBandSamplesCsv(path: string, rows: readonly BandSampleRow[]): void {
  const tmp = `${path}.partial-${process.pid}~`;
  try {
    writeFileSync(tmp, renderBandSamplesCsv(rows), 'utf8');
    renameSync(tmp, path);
  } catch (err) {
    if (existsSync(tmp)) unlinkSync(tmp);
    throw err;
  }
}
