/**
 * Peer-browsing state machine, kept free of DOM so expiry behaviour is
 * testable: file bytes are requested only on explicit open() calls, and
 * when the session token runs out the controller re-runs the
 * accessible-files flow exactly once and refreshes the listing instead of
 * surfacing an error.
 */

import { ApiError } from "./api.js";

export interface BrowseApi {
  remoteTree(peerFp: string): Promise<{ files: string[]; expiresAt: number }>;
  remoteFile(peerFp: string, path: string): Promise<ArrayBuffer>;
}

export interface BrowseState {
  peer: string;
  files: string[];
  expiresAt: number;
  loading: boolean;
  error: string | null;
  refreshes: number;
  autoRenewals: number;
}

export class PeerBrowserController {
  state: BrowseState;

  constructor(
    private api: BrowseApi,
    peer: string,
    private clock: () => number = () => Date.now() / 1000,
  ) {
    this.state = {
      peer,
      files: [],
      expiresAt: 0,
      loading: false,
      error: null,
      refreshes: 0,
      autoRenewals: 0,
    };
  }

  secondsLeft(): number {
    return Math.max(0, Math.round(this.state.expiresAt - this.clock()));
  }

  expired(): boolean {
    return this.state.expiresAt !== 0 && this.clock() >= this.state.expiresAt;
  }

  async refresh(): Promise<void> {
    this.state.loading = true;
    this.state.error = null;
    try {
      const tree = await this.api.remoteTree(this.state.peer);
      this.state.files = tree.files;
      this.state.expiresAt = tree.expiresAt;
      this.state.refreshes += 1;
    } catch (err) {
      this.state.error = describe(err);
    } finally {
      this.state.loading = false;
    }
  }

  /**
   * Fetch one file. A token that expired while the view sat open triggers
   * exactly one automatic accessible-files re-request before the fetch.
   */
  async open(path: string): Promise<ArrayBuffer | null> {
    if (this.expired()) {
      this.state.autoRenewals += 1;
      await this.refresh();
      if (this.state.error !== null) {
        return null;
      }
    }
    try {
      return await this.api.remoteFile(this.state.peer, path);
    } catch (err) {
      if (err instanceof ApiError && err.message.includes("EXPIRED_TOKEN")) {
        // The peer judged the token dead before we did; renew once.
        this.state.autoRenewals += 1;
        await this.refresh();
        if (this.state.error === null) {
          return await this.api.remoteFile(this.state.peer, path);
        }
        return null;
      }
      this.state.error = describe(err);
      return null;
    }
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) {
    return `API error ${err.status}: ${err.message}`;
  }
  return String(err);
}
