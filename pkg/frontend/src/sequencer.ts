/** Per-endpoint request sequencing: responses that arrive after a newer
 * request was issued are discarded so the view never renders stale data. */
export class RequestSequencer {
  private issued = new Map<string, number>();

  /** Returns a ticket to pass back to isCurrent when the response lands. */
  next(endpoint: string): number {
    const seq = (this.issued.get(endpoint) ?? 0) + 1;
    this.issued.set(endpoint, seq);
    return seq;
  }

  isCurrent(endpoint: string, ticket: number): boolean {
    return this.issued.get(endpoint) === ticket;
  }

  /** Runs fn and resolves with its result only if no newer request for the
   * endpoint was issued meanwhile; stale results resolve to null. */
  async run<T>(endpoint: string, fn: () => Promise<T>): Promise<T | null> {
    const ticket = this.next(endpoint);
    const result = await fn();
    return this.isCurrent(endpoint, ticket) ? result : null;
  }
}
