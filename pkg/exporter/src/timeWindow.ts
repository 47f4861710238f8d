/**
 * Civil-date window arithmetic, all in UTC.
 *
 * A scene matches a record when the scene's civil date (UTC) falls within
 * [record date - windowDays, record date + windowDays], both ends inclusive.
 */

const DATE_RE = /^\d{4}-\d{2}-\d{2}$/;

/** Parse a YYYY-MM-DD civil date to a UTC-midnight timestamp (ms). */
export function parseCivilDateUtc(date: string): number {
  if (!DATE_RE.test(date)) {
    throw new Error(`invalid date ${JSON.stringify(date)}, expected YYYY-MM-DD`);
  }
  const ms = Date.parse(`${date}T00:00:00Z`);
  if (Number.isNaN(ms)) {
    throw new Error(`invalid date ${JSON.stringify(date)}`);
  }
  // Reject well-formed but non-existent dates (e.g. 2020-02-31), which
  // Date.parse silently rolls over.
  if (civilDateOf(ms) !== date) {
    throw new Error(`invalid calendar date ${JSON.stringify(date)}`);
  }
  return ms;
}

/** Parse an ISO-8601 UTC timestamp to epoch milliseconds. */
export function parseUtcDatetime(value: string): number {
  const ms = Date.parse(value);
  if (Number.isNaN(ms)) {
    throw new Error(`invalid datetime ${JSON.stringify(value)}`);
  }
  return ms;
}

/** Civil date (YYYY-MM-DD, UTC) of an epoch-millisecond timestamp. */
export function civilDateOf(ms: number): string {
  return new Date(ms).toISOString().slice(0, 10);
}

/**
 * Canonical UTC timestamp format: YYYY-MM-DDTHH:MM:SSZ, with fractional
 * seconds kept only when nonzero.
 */
export function formatUtcDatetime(ms: number): string {
  const iso = new Date(ms).toISOString(); // YYYY-MM-DDTHH:MM:SS.mmmZ
  return iso.endsWith('.000Z') ? `${iso.slice(0, 19)}Z` : iso;
}

const DAY_MS = 24 * 60 * 60 * 1000;

/** True when the scene's civil date is within the inclusive window. */
export function inWindow(sceneDatetime: string, recordDate: string, windowDays: number): boolean {
  const anchor = parseCivilDateUtc(recordDate);
  const sceneDay = parseCivilDateUtc(civilDateOf(parseUtcDatetime(sceneDatetime)));
  const deltaDays = Math.abs(sceneDay - anchor) / DAY_MS;
  return deltaDays <= windowDays;
}
