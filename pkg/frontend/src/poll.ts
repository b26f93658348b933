/**
 * Job polling with exponential backoff.
 *
 * The server answers /v1/jobs/{id} immediately, so the client polls rather
 * than holding a connection; the interval grows until a ceiling to keep
 * long-running edits cheap for both sides.
 */

import type { JobView } from './api';

export interface PollOptions {
  initialMs?: number;
  maxMs?: number;
  factor?: number;
  timeoutMs?: number;
  sleep?: (ms: number) => Promise<void>;
  onTick?: (view: JobView, elapsedMs: number) => void;
}

export class JobTimeoutError extends Error {
  constructor(readonly jobId: string, readonly timeoutMs: number) {
    super(`job ${jobId} still running after ${timeoutMs}ms`);
    this.name = 'JobTimeoutError';
  }
}

const realSleep = (ms: number): Promise<void> =>
  new Promise((resolve) => setTimeout(resolve, ms));

/**
 * Poll until the job reaches a terminal state and return that view.
 * Failed jobs are returned, not thrown; the caller inspects `state`.
 */
export async function pollJob(
  fetchJob: () => Promise<JobView>,
  jobId: string,
  options: PollOptions = {}
): Promise<JobView> {
  const initialMs = options.initialMs ?? 250;
  const maxMs = options.maxMs ?? 2000;
  const factor = options.factor ?? 1.5;
  const timeoutMs = options.timeoutMs ?? 10 * 60 * 1000;
  const sleep = options.sleep ?? realSleep;

  let intervalMs = initialMs;
  let elapsedMs = 0;
  for (;;) {
    const view = await fetchJob();
    options.onTick?.(view, elapsedMs);
    if (view.state === 'done' || view.state === 'failed') {
      return view;
    }
    if (elapsedMs >= timeoutMs) {
      throw new JobTimeoutError(jobId, timeoutMs);
    }
    await sleep(intervalMs);
    elapsedMs += intervalMs;
    intervalMs = Math.min(maxMs, intervalMs * factor);
  }
}
