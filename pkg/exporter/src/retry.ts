/**
 * Bounded retry with exponential backoff for transient HTTP failures.
 */

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;
export type SleepFn = (ms: number) => Promise<void>;

export interface RetryPolicy {
  maxAttempts: number;
  baseDelayMs: number;
}

export const DEFAULT_RETRY: RetryPolicy = { maxAttempts: 4, baseDelayMs: 500 };

const TRANSIENT_STATUS = new Set([429, 500, 502, 503, 504]);

const defaultSleep: SleepFn = (ms) => new Promise((resolve) => setTimeout(resolve, ms));

/**
 * Run `fetchImpl` until it returns a non-transient response, retrying
 * transient statuses and network-level failures with exponential backoff.
 * Non-transient error responses (e.g. 401, 404) are returned to the caller
 * for contextual handling; exhausted retries throw.
 */
export async function fetchWithRetry(
  fetchImpl: FetchLike,
  url: string,
  init?: RequestInit,
  policy: RetryPolicy = DEFAULT_RETRY,
  sleep: SleepFn = defaultSleep,
): Promise<Response> {
  let lastFailure = 'no attempt made';
  for (let attempt = 0; attempt < policy.maxAttempts; attempt++) {
    if (attempt > 0) {
      await sleep(policy.baseDelayMs * 2 ** (attempt - 1));
    }
    try {
      const response = await fetchImpl(url, init);
      if (!TRANSIENT_STATUS.has(response.status)) {
        return response;
      }
      lastFailure = `HTTP ${response.status}`;
    } catch (err) {
      lastFailure = err instanceof Error ? err.message : String(err);
    }
  }
  throw new Error(`${url}: giving up after ${policy.maxAttempts} attempts (${lastFailure})`);
}
