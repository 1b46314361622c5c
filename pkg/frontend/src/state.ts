/** Client view state: active resources, the tau slider, and job pollers. */

export interface PollerHandle {
  stop(): void;
}

export class ViewState {
  activeSessionId: string | null = null;
  activeMatrixId: string | null = null;
  selectedSubgoalId: string | null = null;
  private tauValue = 0.4;
  private pollers = new Map<string, PollerHandle>();

  get tau(): number {
    return this.tauValue;
  }

  setTau(value: number): void {
    // slider stays strictly inside (0, 1)
    if (!(value > 0 && value < 1)) {
      throw new RangeError(`tau must lie strictly between 0 and 1, got ${value}`);
    }
    this.tauValue = value;
  }

  registerPoller(jobId: string, handle: PollerHandle): void {
    this.pollers.get(jobId)?.stop();
    this.pollers.set(jobId, handle);
  }

  releasePoller(jobId: string): void {
    this.pollers.get(jobId)?.stop();
    this.pollers.delete(jobId);
  }

  get activePollerCount(): number {
    return this.pollers.size;
  }
}
