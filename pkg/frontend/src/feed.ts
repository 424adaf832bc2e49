/** Manual-feed flow: one actuation per operator intent.
 *
 * A press while a request is in flight returns the in-flight promise (same
 * command_id), and retries of a failed send reuse the command_id, so the
 * server sees at most one actuation per intent.
 */

import type { ApiClient } from "./api.js";
import type { FeedResult } from "./types.js";

export type IdGenerator = () => string;

const defaultIdGenerator: IdGenerator = () =>
  (globalThis.crypto?.randomUUID?.() ?? `cmd-${Date.now()}-${Math.random().toString(36).slice(2)}`);

export class ManualFeedController {
  private inFlight: Promise<FeedResult> | null = null;
  private pendingCommandId: string | null = null;

  constructor(
    private readonly api: ApiClient,
    private readonly tankId: string,
    private readonly nextId: IdGenerator = defaultIdGenerator,
  ) {}

  /** The grams figure an operator confirms; always the server's plan total. */
  confirmationGrams(planTotal: number | null): number | null {
    return planTotal;
  }

  trigger(): Promise<FeedResult> {
    if (this.inFlight) return this.inFlight;
    const commandId = this.pendingCommandId ?? this.nextId();
    this.pendingCommandId = commandId;
    this.inFlight = this.api
      .manualFeed(this.tankId, commandId)
      .then((result) => {
        this.pendingCommandId = null; // done; the next press is a new intent
        return result;
      })
      .finally(() => {
        this.inFlight = null;
      });
    return this.inFlight;
  }
}
