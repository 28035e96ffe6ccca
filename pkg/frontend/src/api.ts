/** Typed client for the node's loopback admin API. */

import type { WireNode, WirePolicy } from "./policy.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

export interface Status {
  unlocked: boolean;
  fingerprint: string | null;
  did: string | null;
  didRegistered: boolean;
  peerCount: number;
}

export interface Peer {
  fingerprint: string;
  did: string;
  address: [string, number];
  lastSeen: number;
}

export interface VaultEntry {
  path: string;
  kind: "file" | "folder";
  size: number;
}

export interface PolicyResponse {
  path: string;
  policy: WirePolicy;
  version: number;
}

export interface RemoteTree {
  peer: string;
  tree: Record<string, unknown>;
  files: string[];
  sessionToken: string;
  expiresAt: number;
}

export interface LogBlock {
  seq: number;
  hash: string;
  timestamp: number;
  hostSeq: number;
  requesterSeq: number;
  insertedPaths: number;
  fpEstimate: number;
  dualSigned: boolean;
}

export interface AuditVerdict {
  seq: number;
  path: string;
  present: boolean;
  fpEstimate: number;
  insertedCount: number;
}

export interface StoredCredential {
  kind: string;
  data: Record<string, unknown>;
}

export class AdminClient {
  constructor(private base: string = "") {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "Content-Type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const resp = await fetch(this.base + path, init);
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        detail = ((await resp.json()) as { error?: string }).error ?? detail;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  private async requestBytes(path: string): Promise<ArrayBuffer> {
    const resp = await fetch(this.base + path);
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        detail = ((await resp.json()) as { error?: string }).error ?? detail;
      } catch {
        /* ignore */
      }
      throw new ApiError(resp.status, detail);
    }
    return resp.arrayBuffer();
  }

  status(): Promise<Status> {
    return this.request("GET", "/status");
  }

  unlock(password: string): Promise<{ ok: boolean }> {
    return this.request("POST", "/unlock", { password });
  }

  lock(): Promise<{ ok: boolean }> {
    return this.request("POST", "/lock");
  }

  peers(): Promise<{ peers: Peer[] }> {
    return this.request("GET", "/peers");
  }

  tree(): Promise<{ entries: VaultEntry[] }> {
    return this.request("GET", "/tree");
  }

  file(path: string): Promise<ArrayBuffer> {
    return this.requestBytes(`/file?path=${encodeURIComponent(path)}`);
  }

  async putFile(path: string, data: ArrayBuffer | Blob): Promise<{ path: string; size: number }> {
    const resp = await fetch(`${this.base}/file?path=${encodeURIComponent(path)}`, {
      method: "PUT",
      body: data,
    });
    if (!resp.ok) throw new ApiError(resp.status, "upload failed");
    return (await resp.json()) as { path: string; size: number };
  }

  deleteFile(path: string): Promise<{ ok: boolean }> {
    return this.request("DELETE", `/file?path=${encodeURIComponent(path)}`);
  }

  policyGet(path: string): Promise<PolicyResponse> {
    return this.request("GET", `/policy?path=${encodeURIComponent(path)}`);
  }

  policySet(
    path: string,
    selector: "combined" | "read" | "write",
    node: WireNode | null,
  ): Promise<PolicyResponse> {
    return this.request("PUT", "/policy", { path, selector, node });
  }

  remoteTree(peerFp: string): Promise<RemoteTree> {
    return this.request("GET", `/remote/${peerFp}/tree`);
  }

  remoteFile(peerFp: string, path: string): Promise<ArrayBuffer> {
    return this.requestBytes(`/remote/${peerFp}/file?path=${encodeURIComponent(path)}`);
  }

  wallet(): Promise<{ credentials: StoredCredential[] }> {
    return this.request("GET", "/wallet");
  }

  issueSic(peer: string, claims: Record<string, unknown>): Promise<{ credential: unknown }> {
    return this.request("POST", "/sic", { peer, claims });
  }

  trustList(): Promise<{ trusted: string[] }> {
    return this.request("GET", "/trust");
  }

  trustAdd(issuer: string): Promise<{ trusted: string[] }> {
    return this.request("POST", "/trust", { issuer });
  }

  trustRemove(issuer: string): Promise<{ trusted: string[] }> {
    return this.request("DELETE", `/trust/${encodeURIComponent(issuer)}`);
  }

  logList(): Promise<{ blocks: LogBlock[] }> {
    return this.request("GET", "/log");
  }

  logVerify(): Promise<{ ok: boolean; length: number; error: null | { position: number; reason: string } }> {
    return this.request("GET", "/log/verify");
  }

  logAudit(seq: number, path: string): Promise<AuditVerdict> {
    return this.request("GET", `/log/audit?seq=${seq}&path=${encodeURIComponent(path)}`);
  }

  metrics(): Promise<Record<string, unknown>> {
    return this.request("GET", "/metrics");
  }
}
