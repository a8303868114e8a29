// Request gate used once per endpoint: trailing 50 ms debounce on bursts of
// pose changes, at most one request in flight, and responses tagged with a
// sequence number so anything superseded while airborne is dropped instead
// of painted.

export const DEBOUNCE_MS = 50;

export class LatestGate<A, R> {
  private seq = 0;
  private queued: A | undefined;
  private hasQueued = false;
  private inFlight = false;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private send: (arg: A) => Promise<R>,
    private apply: (result: R, arg: A) => void,
    private onError: (err: unknown) => void = () => {},
    private debounceMs: number = DEBOUNCE_MS,
  ) {}

  request(arg: A): void {
    this.queued = arg;
    this.hasQueued = true;
    this.seq++;
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = setTimeout(() => {
      this.timer = null;
      void this.fire();
    }, this.debounceMs);
  }

  private async fire(): Promise<void> {
    if (this.inFlight || !this.hasQueued) return;
    const arg = this.queued as A;
    this.hasQueued = false;
    this.queued = undefined;
    const id = this.seq;
    this.inFlight = true;
    try {
      const result = await this.send(arg);
      // a newer request arrived while this one was in flight: stale, drop it
      if (id === this.seq) this.apply(result, arg);
    } catch (err) {
      this.onError(err);
    } finally {
      this.inFlight = false;
      if (this.hasQueued && this.timer === null) void this.fire();
    }
  }
}
