/** Wallet (credentials + self-issued credential form), trust list, log inspector. */

import { AdminClient } from "../api.js";
import { banner, button, clear, el, textInput } from "../dom.js";

export function renderWallet(container: HTMLElement, api: AdminClient): void {
  let peerFp = "";
  let claimsText = "";
  let status = "";

  async function issue(): Promise<void> {
    const claims: Record<string, unknown> = {};
    for (const pair of claimsText.split(",")) {
      const [key, value] = pair.split("=").map((s) => s.trim());
      if (!key || value === undefined) continue;
      claims[key] = /^-?\d+$/.test(value) ? parseInt(value, 10) : value;
    }
    try {
      await api.issueSic(peerFp, claims);
      status = "credential issued and delivered";
    } catch (err) {
      status = String(err);
    }
    await draw();
  }

  async function draw(): Promise<void> {
    clear(container);
    container.append(el("h2", {}, "Wallet"));
    if (status) container.append(banner(status.includes("Error") ? "error" : "info", status));
    try {
      const { credentials } = await api.wallet();
      if (credentials.length === 0) {
        container.append(el("p", {}, "no stored credentials"));
      }
      for (const credential of credentials) {
        container.append(
          el("pre", { class: "credential" }, JSON.stringify(credential, null, 2)),
        );
      }
    } catch (err) {
      container.append(banner("error", String(err)));
    }
    container.append(
      el("h3", {}, "Issue a credential to a peer"),
      el("p", {}, "Claims you assert about them; only presentations back to you will satisfy issuer-is-me rules."),
      el("div", { class: "controls" },
        textInput(peerFp, (v) => (peerFp = v), "peer fingerprint"),
        textInput(claimsText, (v) => (claimsText = v), "claims: met_on_holiday=Italy 2022, group=friends"),
        button("issue", () => void issue(), "primary"),
      ),
    );
  }

  void draw();
}

export function renderTrust(container: HTMLElement, api: AdminClient): void {
  let issuer = "";

  async function draw(): Promise<void> {
    clear(container);
    container.append(el("h2", {}, "Trusted issuers"));
    try {
      const { trusted } = await api.trustList();
      const list = el("ul", { class: "trust" });
      for (const entry of trusted) {
        const item = el("li", {}, el("code", {}, entry), " ");
        if (entry !== "self") {
          item.append(button("revoke", () => void api.trustRemove(entry).then(draw), "danger"));
        }
        list.append(item);
      }
      container.append(list);
    } catch (err) {
      container.append(banner("error", String(err)));
    }
    container.append(
      el("div", { class: "controls" },
        textInput(issuer, (v) => (issuer = v), "issuer DID or attestor key fingerprint"),
        button("grant trust", () => void api.trustAdd(issuer).then(draw), "primary"),
      ),
    );
  }

  void draw();
}

export function renderAccessLog(container: HTMLElement, api: AdminClient): void {
  let auditSeq = "";
  let auditPath = "";
  let verdict = "";

  async function runAudit(): Promise<void> {
    try {
      const result = await api.logAudit(parseInt(auditSeq, 10), auditPath);
      verdict = result.present
        ? `"${result.path}" WAS offered (false-positive probability ${result.fpEstimate.toFixed(4)}, ${result.insertedCount} paths recorded)`
        : `"${result.path}" was NOT offered; bloom filters have no false negatives`;
    } catch (err) {
      verdict = String(err);
    }
    await draw();
  }

  async function draw(): Promise<void> {
    clear(container);
    container.append(el("h2", {}, "Access log"));
    try {
      const [report, { blocks }] = await Promise.all([api.logVerify(), api.logList()]);
      container.append(
        report.ok
          ? banner("info", `chain intact: ${report.length} dual-signed blocks`)
          : banner("error", `chain BROKEN at block ${report.error?.position}: ${report.error?.reason}`),
      );
      const table = el("table", { class: "listing" });
      table.append(el("tr", {},
        el("th", {}, "#"), el("th", {}, "hash"), el("th", {}, "paths"),
        el("th", {}, "fp rate"), el("th", {}, "dual-signed")));
      for (const block of blocks) {
        table.append(el("tr", {},
          el("td", {}, String(block.seq)),
          el("td", {}, el("code", {}, block.hash.slice(0, 16))),
          el("td", {}, String(block.insertedPaths)),
          el("td", {}, block.fpEstimate.toFixed(4)),
          el("td", {}, block.dualSigned ? "yes" : "NO"),
        ));
      }
      container.append(table);
    } catch (err) {
      container.append(banner("error", String(err)));
    }
    if (verdict) container.append(banner("info", verdict));
    container.append(
      el("h3", {}, "Audit a block"),
      el("div", { class: "controls" },
        textInput(auditSeq, (v) => (auditSeq = v), "block #"),
        textInput(auditPath, (v) => (auditPath = v), "path to check"),
        button("query", () => void runAudit(), "primary"),
      ),
    );
  }

  void draw();
}
