/** Job polling that provably stops at terminal states. */

import type { JobHandle, JobState } from "./types.js";

export const TERMINAL_STATES: readonly JobState[] = ["done", "failed", "partial"];

export function isTerminal(state: JobState): boolean {
  return TERMINAL_STATES.includes(state);
}

export interface PollOptions {
  intervalMs?: number;
  onUpdate?: (handle: JobHandle) => void;
  setIntervalImpl?: typeof setInterval;
  clearIntervalImpl?: typeof clearInterval;
}

/**
 * Poll a job until it reaches done/partial/failed. The interval is cleared
 * the moment a terminal handle is seen, so there are no trailing requests.
 */
export function pollJob(
  fetchHandle: () => Promise<JobHandle>,
  options: PollOptions = {},
): { promise: Promise<JobHandle>; stop: () => void } {
  const intervalMs = options.intervalMs ?? 1000;
  const setI = options.setIntervalImpl ?? setInterval;
  const clearI = options.clearIntervalImpl ?? clearInterval;

  let timer: ReturnType<typeof setInterval> | null = null;
  let settled = false;
  let resolvePromise: (handle: JobHandle) => void;
  let rejectPromise: (err: unknown) => void;
  const promise = new Promise<JobHandle>((resolve, reject) => {
    resolvePromise = resolve;
    rejectPromise = reject;
  });

  const stop = () => {
    if (timer !== null) {
      clearI(timer);
      timer = null;
    }
  };

  let inFlight = false;
  const tick = async () => {
    if (settled || inFlight) return;
    inFlight = true;
    try {
      const handle = await fetchHandle();
      options.onUpdate?.(handle);
      if (isTerminal(handle.state)) {
        settled = true;
        stop();
        resolvePromise(handle);
      }
    } catch (err) {
      settled = true;
      stop();
      rejectPromise(err);
    } finally {
      inFlight = false;
    }
  };

  timer = setI(tick, intervalMs);
  void tick();
  return { promise, stop };
}
