/**
 * Shared schema constants and domain types for the band-sample exporter.
 *
 * The emitted CSV must be consumable by the downstream dataset builder
 * without translation, so the column set and ordering here are fixed.
 */

/** Level-2A band names in canonical column order (no B10 at Level-2A). */
export const BANDS = [
  'B1', 'B2', 'B3', 'B4', 'B5', 'B6', 'B7', 'B8', 'B8A', 'B9', 'B11', 'B12',
] as const;

export type BandName = (typeof BANDS)[number];

/** Column header of the band-samples CSV, in emission order. */
export const BAND_SAMPLES_HEADER: readonly string[] = [
  'record_id', 'scene_id', 'scene_datetime', 'valid_fraction', ...BANDS,
];

/**
 * Values are exported in the catalog's native integer scaling; this comment
 * line at the top of every CSV documents the conversion to reflectance.
 */
export const SCALE_COMMENT =
  '# reflectance scale: native Level-2A digital numbers (divide by 10000 for surface reflectance)';

/**
 * Scene-classification classes counted as valid observations:
 * vegetation (4), bare soil (5), water (6), unclassified (7).  Everything
 * else (no-data, defective, shadow, cloud, cirrus, snow) is masked out.
 */
export const VALID_SCL_CLASSES: ReadonlySet<number> = new Set([4, 5, 6, 7]);

/** Default image collection queried by the live source. */
export const DEFAULT_COLLECTION = 'COPERNICUS/S2_SR';

/** One ground-truth measurement row from the in-situ CSV. */
export interface InSituRecord {
  recordId: string;
  stationId: string;
  lat: number;
  lon: number;
  /** Civil date of the measurement, YYYY-MM-DD (UTC). */
  date: string;
  turbidityNtu: number;
}

/** A scene returned by a source before patch aggregation. */
export interface ScenePatch {
  sceneId: string;
  /** Acquisition timestamp, ISO-8601 UTC. */
  sceneDatetime: string;
  /** Per-band pixel grids over the sampling square, native digital numbers. */
  bands: Record<BandName, number[][]>;
  /** Scene-classification grid aligned with the band grids. */
  scl: number[][];
}

/** One output row: spatially averaged bands for (record, scene). */
export interface BandSampleRow {
  recordId: string;
  sceneId: string;
  sceneDatetime: string;
  validFraction: number;
  bandMeans: number[];
}

/** Full description of one export run. */
export interface ExportJob {
  insituPath: string;
  outPath: string;
  collection: string;
  windowDays: number;
  squareKm: number;
  dryRun: boolean;
  fixturesDir?: string;
}

/** A problem attached to a single record; never aborts the whole job. */
export interface RecordFailure {
  recordId: string;
  reason: string;
}

export function validateJob(job: ExportJob): void {
  if (!(job.squareKm > 0)) {
    throw new Error(`square side must be positive, got ${job.squareKm}`);
  }
  if (!(Number.isInteger(job.windowDays) && job.windowDays >= 0)) {
    throw new Error(`window days must be a non-negative integer, got ${job.windowDays}`);
  }
  if (job.dryRun && !job.fixturesDir) {
    throw new Error('dry-run requires --fixtures DIR');
  }
}
