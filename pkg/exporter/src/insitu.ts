/**
 * In-situ CSV reader with line-numbered diagnostics.
 *
 * Expected header: record_id,station_id,lat,lon,date,turbidity_ntu
 */

import { readFileSync } from 'node:fs';
import Papa from 'papaparse';

import type { InSituRecord } from './schema.js';
import { parseCivilDateUtc } from './timeWindow.js';

export const INSITU_HEADER = [
  'record_id', 'station_id', 'lat', 'lon', 'date', 'turbidity_ntu',
] as const;

/** Raised when the in-situ file fails validation; carries all diagnostics. */
export class InSituFileError extends Error {
  readonly diagnostics: readonly string[];

  constructor(path: string, diagnostics: readonly string[]) {
    super(`${path}: ${diagnostics.length} problem(s)\n${diagnostics.join('\n')}`);
    this.name = 'InSituFileError';
    this.diagnostics = diagnostics;
  }
}

function parseFiniteNumber(raw: string): number | null {
  if (raw.trim() === '') return null;
  const value = Number(raw);
  return Number.isFinite(value) ? value : null;
}

/** Read and validate the in-situ CSV; throws InSituFileError on any problem. */
export function readInSituCsv(path: string): InSituRecord[] {
  const text = readFileSync(path, 'utf8');
  const parsed = Papa.parse<string[]>(text.replace(/\r\n/g, '\n'), {
    skipEmptyLines: true,
  });

  const rows = parsed.data;
  const diagnostics: string[] = [];
  if (rows.length === 0) {
    throw new InSituFileError(path, ['empty file']);
  }

  const header = rows[0] ?? [];
  if (header.join(',') !== INSITU_HEADER.join(',')) {
    throw new InSituFileError(path, [
      `bad header: expected ${INSITU_HEADER.join(',')}, got ${header.join(',')}`,
    ]);
  }

  const records: InSituRecord[] = [];
  const seen = new Set<string>();
  for (let i = 1; i < rows.length; i++) {
    const line = i + 1; // 1-based, counting the header
    const cells = rows[i] ?? [];
    if (cells.length !== INSITU_HEADER.length) {
      diagnostics.push(`line ${line}: expected ${INSITU_HEADER.length} columns, got ${cells.length}`);
      continue;
    }
    const [recordId, stationId, latRaw, lonRaw, date, ntuRaw] = cells as [
      string, string, string, string, string, string,
    ];
    if (recordId.trim() === '') {
      diagnostics.push(`line ${line}: empty record_id`);
      continue;
    }
    if (seen.has(recordId)) {
      diagnostics.push(`line ${line}: duplicate record_id ${JSON.stringify(recordId)}`);
      continue;
    }
    const lat = parseFiniteNumber(latRaw);
    const lon = parseFiniteNumber(lonRaw);
    const ntu = parseFiniteNumber(ntuRaw);
    if (lat === null || lat < -90 || lat > 90) {
      diagnostics.push(`line ${line}: lat out of range [-90, 90]: ${latRaw}`);
      continue;
    }
    if (lon === null || lon < -180 || lon > 180) {
      diagnostics.push(`line ${line}: lon out of range [-180, 180]: ${lonRaw}`);
      continue;
    }
    try {
      parseCivilDateUtc(date);
    } catch {
      diagnostics.push(`line ${line}: invalid date ${JSON.stringify(date)}`);
      continue;
    }
    if (ntu === null || ntu < 0) {
      diagnostics.push(`line ${line}: turbidity_ntu must be a non-negative number: ${ntuRaw}`);
      continue;
    }
    seen.add(recordId);
    records.push({ recordId, stationId, lat, lon, date, turbidityNtu: ntu });
  }

  if (diagnostics.length > 0) {
    throw new InSituFileError(path, diagnostics);
  }
  return records;
}
