/**
 * Scene sources: where patches come from.
 *
 * `FixtureSceneSource` serves canned scenes from a local JSON file for
 * dry-run and testing.  `EarthEngineSceneSource` queries the public
 * catalog's REST surface (image listing plus pixel fetch) with bounded
 * retry, so one flaky record cannot sink a whole export.
 */

import { readFileSync } from 'node:fs';
import { join } from 'node:path';

import { BANDS, type BandName, type InSituRecord, type ScenePatch } from './schema.js';
import { civilDateOf, formatUtcDatetime, inWindow, parseCivilDateUtc, parseUtcDatetime } from './timeWindow.js';
import { DEFAULT_RETRY, fetchWithRetry, type FetchLike, type RetryPolicy, type SleepFn } from './retry.js';
import { parseNpy } from './npy.js';

export interface SceneSource {
  /** Every scene covering the record's location within the inclusive window. */
  scenesFor(record: InSituRecord, windowDays: number, squareKm: number): Promise<ScenePatch[]>;
}

/** Credential rejection: fatal for the whole job, unlike transient errors. */
export class AuthError extends Error {
  constructor(message: string) {
    super(message);
    this.name = 'AuthError';
  }
}

interface FixtureScene {
  scene_id: string;
  scene_datetime: string;
  bbox: { min_lat: number; max_lat: number; min_lon: number; max_lon: number };
  bands: Record<string, number[][]>;
  scl: number[][];
}

/** Serves scenes bundled in `<fixturesDir>/scenes.json`. */
export class FixtureSceneSource implements SceneSource {
  private readonly scenes: FixtureScene[];

  constructor(fixturesDir: string) {
    const raw = JSON.parse(readFileSync(join(fixturesDir, 'scenes.json'), 'utf8'));
    if (!raw || !Array.isArray(raw.scenes)) {
      throw new Error(`${fixturesDir}/scenes.json: expected an object with a "scenes" array`);
    }
    this.scenes = raw.scenes as FixtureScene[];
  }

  async scenesFor(record: InSituRecord, windowDays: number, _squareKm: number): Promise<ScenePatch[]> {
    const hits: ScenePatch[] = [];
    for (const scene of this.scenes) {
      const { bbox } = scene;
      const covers =
        record.lat >= bbox.min_lat && record.lat <= bbox.max_lat &&
        record.lon >= bbox.min_lon && record.lon <= bbox.max_lon;
      if (!covers) continue;
      if (!inWindow(scene.scene_datetime, record.date, windowDays)) continue;
      const bands = {} as Record<BandName, number[][]>;
      for (const band of BANDS) {
        const grid = scene.bands[band];
        if (!grid) {
          throw new Error(`fixture scene ${scene.scene_id}: missing band ${band}`);
        }
        bands[band] = grid;
      }
      hits.push({
        sceneId: scene.scene_id,
        sceneDatetime: formatUtcDatetime(parseUtcDatetime(scene.scene_datetime)),
        bands,
        scl: scene.scl,
      });
    }
    return hits;
  }
}

const EE_API = 'https://earthengine.googleapis.com/v1';
const PUBLIC_PROJECT = 'projects/earthengine-public';
const METERS_PER_DEGREE_LAT = 111_320;
const SAMPLE_SCALE_M = 10; // every band resampled server-side to 10 m
const MAX_LIST_PAGES = 10;
const SCL_BAND = 'SCL';

interface ListedImage {
  name: string;
  startTime: string;
}

export interface EarthEngineOptions {
  collection: string;
  accessToken: string;
  fetchImpl?: FetchLike;
  retry?: RetryPolicy;
  sleep?: SleepFn;
}

/** Live source against the catalog's REST API. */
export class EarthEngineSceneSource implements SceneSource {
  private readonly collection: string;
  private readonly accessToken: string;
  private readonly fetchImpl: FetchLike;
  private readonly retry: RetryPolicy;
  private readonly sleep?: SleepFn;

  constructor(options: EarthEngineOptions) {
    this.collection = options.collection;
    this.accessToken = options.accessToken;
    this.fetchImpl = options.fetchImpl ?? ((url, init) => fetch(url, init));
    this.retry = options.retry ?? DEFAULT_RETRY;
    this.sleep = options.sleep;
  }

  async scenesFor(record: InSituRecord, windowDays: number, squareKm: number): Promise<ScenePatch[]> {
    const images = await this.listImages(record, windowDays);
    const patches: ScenePatch[] = [];
    for (const image of images) {
      patches.push(await this.fetchPatch(image, record, squareKm));
    }
    return patches;
  }

  private headers(): Record<string, string> {
    return {
      Authorization: `Bearer ${this.accessToken}`,
      'Content-Type': 'application/json',
    };
  }

  private async request(url: string, init?: RequestInit): Promise<Response> {
    const response = await fetchWithRetry(
      this.fetchImpl, url, { ...init, headers: { ...this.headers(), ...(init?.headers as object) } },
      this.retry, this.sleep,
    );
    if (response.status === 401 || response.status === 403) {
      throw new AuthError(`authentication failure (HTTP ${response.status})`);
    }
    if (!response.ok) {
      throw new Error(`HTTP ${response.status} from ${url}`);
    }
    return response;
  }

  private async listImages(record: InSituRecord, windowDays: number): Promise<ListedImage[]> {
    const anchor = parseCivilDateUtc(record.date);
    const dayMs = 24 * 60 * 60 * 1000;
    const start = civilDateOf(anchor - windowDays * dayMs);
    const endExclusive = civilDateOf(anchor + (windowDays + 1) * dayMs);
    const region = JSON.stringify({ type: 'Point', coordinates: [record.lon, record.lat] });
    const asset = this.collection.replace(/\//g, '_');

    const images: ListedImage[] = [];
    let pageToken = '';
    for (let page = 0; page < MAX_LIST_PAGES; page++) {
      const params = new URLSearchParams({
        region,
        startTime: `${start}T00:00:00Z`,
        endTime: `${endExclusive}T00:00:00Z`,
        pageSize: '100',
      });
      if (pageToken) params.set('pageToken', pageToken);
      const url = `${EE_API}/${PUBLIC_PROJECT}/assets/${asset}:listImages?${params}`;
      const body = await (await this.request(url)).json() as {
        images?: { name?: string; id?: string; startTime?: string }[];
        nextPageToken?: string;
      };
      for (const img of body.images ?? []) {
        const name = img.name ?? img.id;
        if (!name || !img.startTime) continue;
        // The civil-date window is inclusive; the coarse time filter above
        // can only over-fetch, so re-check precisely here.
        if (!inWindow(img.startTime, record.date, windowDays)) continue;
        images.push({ name, startTime: img.startTime });
      }
      pageToken = body.nextPageToken ?? '';
      if (!pageToken) break;
    }
    return images;
  }

  private async fetchPatch(image: ListedImage, record: InSituRecord, squareKm: number): Promise<ScenePatch> {
    const halfSideM = (squareKm * 1000) / 2;
    const dLat = halfSideM / METERS_PER_DEGREE_LAT;
    const dLon = halfSideM / (METERS_PER_DEGREE_LAT * Math.cos((record.lat * Math.PI) / 180));
    const side = Math.max(1, Math.round((squareKm * 1000) / SAMPLE_SCALE_M));

    const url = `${EE_API}/${image.name}:getPixels`;
    const body = {
      fileFormat: 'NPY',
      bandIds: [...BANDS, SCL_BAND],
      grid: {
        dimensions: { width: side, height: side },
        affineTransform: {
          scaleX: (2 * dLon) / side,
          shearX: 0,
          translateX: record.lon - dLon,
          shearY: 0,
          scaleY: -(2 * dLat) / side,
          translateY: record.lat + dLat,
        },
        crsCode: 'EPSG:4326',
      },
    };
    const response = await this.request(url, { method: 'POST', body: JSON.stringify(body) });
    const npy = parseNpy(new Uint8Array(await response.arrayBuffer()));
    if (npy.shape.length !== 2 || npy.shape[0] !== side || npy.shape[1] !== side) {
      throw new Error(`scene ${image.name}: expected ${side}x${side} pixels, got shape [${npy.shape}]`);
    }

    const toGrid = (flat: number[]): number[][] => {
      const grid: number[][] = [];
      for (let i = 0; i < side; i++) {
        grid.push(flat.slice(i * side, (i + 1) * side));
      }
      return grid;
    };

    const bands = {} as Record<BandName, number[][]>;
    for (const band of BANDS) {
      const flat = npy.fields.get(band);
      if (!flat) {
        throw new Error(`scene ${image.name}: response missing band ${band}`);
      }
      bands[band] = toGrid(flat);
    }
    const sclFlat = npy.fields.get(SCL_BAND);
    if (!sclFlat) {
      throw new Error(`scene ${image.name}: response missing ${SCL_BAND}`);
    }

    const sceneId = image.name.split('/').pop() ?? image.name;
    return {
      sceneId,
      sceneDatetime: formatUtcDatetime(parseUtcDatetime(image.startTime)),
      bands,
      scl: toGrid(sclFlat),
    };
  }
}
