/** SPA shell: hash routing over the six views, all state from the API. */

import { AdminClient } from "./api.js";
import { banner, button, clear, el } from "./dom.js";
import { renderLocalBrowser, renderPeerBrowser } from "./views/browsers.js";
import { renderPolicyEditor } from "./views/policyEditor.js";
import { renderAccessLog, renderTrust, renderWallet } from "./views/walletTrustLog.js";

const api = new AdminClient("");

const VIEWS: Record<string, (c: HTMLElement, api: AdminClient) => void> = {
  vault: renderLocalBrowser,
  peers: renderPeerBrowser,
  policies: renderPolicyEditor,
  wallet: renderWallet,
  trust: renderTrust,
  log: renderAccessLog,
};

function currentView(): string {
  const hash = window.location.hash.replace(/^#\/?/, "");
  return hash in VIEWS ? hash : "vault";
}

async function drawShell(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) return;
  clear(root as HTMLElement);

  const nav = el("nav", {});
  for (const name of Object.keys(VIEWS)) {
    const link = el("a", { href: `#/${name}`, class: name === currentView() ? "active" : "" }, name);
    nav.append(link);
  }
  root.append(nav);

  const header = el("header", {});
  root.append(header);
  const body = el("main", {});
  root.append(body);

  try {
    const status = await api.status();
    header.append(
      el("div", { class: "identity" },
        el("strong", {}, "this vault: "),
        el("code", {}, status.fingerprint ?? "?"),
        ` · ${status.did ?? "?"} · peers: ${status.peerCount}`),
    );
    if (!status.unlocked) {
      body.append(banner("error", "vault is locked"));
      const password = el("input", { type: "password", placeholder: "password" });
      body.append(
        el("div", { class: "controls" },
          password,
          button("unlock", () => {
            void api.unlock((password as HTMLInputElement).value).then(drawShell);
          }, "primary")),
      );
      return;
    }
    header.append(button("lock vault", () => void api.lock().then(drawShell), "danger"));
  } catch (err) {
    body.append(banner("error", `node unreachable: ${err}`));
    return;
  }

  VIEWS[currentView()](body, api);
}

window.addEventListener("hashchange", () => void drawShell());
window.addEventListener("DOMContentLoaded", () => void drawShell());
