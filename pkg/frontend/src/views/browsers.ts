/** Local vault browser and on-demand peer browser. */

import { AdminClient } from "../api.js";
import { PeerBrowserController } from "../browseController.js";
import { banner, button, clear, el, fmtBytes, textInput } from "../dom.js";

export function renderLocalBrowser(container: HTMLElement, api: AdminClient): void {
  let uploadPath = "";

  async function draw(): Promise<void> {
    clear(container);
    container.append(el("h2", {}, "Local vault"));
    try {
      const { entries } = await api.tree();
      const table = el("table", { class: "listing" });
      table.append(el("tr", {}, el("th", {}, "path"), el("th", {}, "size"), el("th", {}, "")));
      for (const entry of entries) {
        const row = el("tr", {});
        row.append(
          el("td", {}, entry.kind === "folder" ? `${entry.path}/` : entry.path),
          el("td", {}, entry.kind === "file" ? fmtBytes(entry.size) : ""),
        );
        const actions = el("td", {});
        if (entry.kind === "file") {
          actions.append(
            button("download", () => void download(entry.path)),
            button("delete", () => void remove(entry.path), "danger"),
          );
        }
        row.append(actions);
        table.append(row);
      }
      container.append(table);
    } catch (err) {
      container.append(banner("error", String(err)));
    }
    const pathInput = textInput(uploadPath, (v) => (uploadPath = v), "store as path, e.g. photos/x.jpg");
    const fileInput = el("input", { type: "file" });
    const upload = button("upload", () => {
      const file = (fileInput as HTMLInputElement).files?.[0];
      if (!file || !uploadPath) return;
      void api.putFile(uploadPath, file).then(() => draw());
    }, "primary");
    container.append(el("div", { class: "controls" }, pathInput, fileInput, upload));
  }

  async function download(path: string): Promise<void> {
    const data = await api.file(path);
    saveBlob(data, path.split("/").pop() ?? "file");
  }

  async function remove(path: string): Promise<void> {
    await api.deleteFile(path);
    await draw();
  }

  void draw();
}

export function renderPeerBrowser(container: HTMLElement, api: AdminClient): void {
  let controller: PeerBrowserController | null = null;
  let ticker: number | undefined;

  async function choosePeer(fp: string): Promise<void> {
    controller = new PeerBrowserController(api, fp);
    await controller.refresh();
    draw();
  }

  function drawCountdown(box: HTMLElement): void {
    if (ticker !== undefined) window.clearInterval(ticker);
    ticker = window.setInterval(() => {
      if (!controller) return;
      const left = controller.secondsLeft();
      box.textContent = left > 0 ? `session token expires in ${left}s` : "session token expired (auto-renews on use)";
    }, 500);
  }

  async function open(path: string): Promise<void> {
    if (!controller) return;
    const data = await controller.open(path);
    draw();
    if (data !== null) {
      saveBlob(data, path.split("/").pop() ?? "file");
    }
  }

  function draw(): void {
    clear(container);
    container.append(el("h2", {}, "Peer vaults"));
    void api.peers().then(({ peers }) => {
      const list = el("div", { class: "peer-list" });
      if (peers.length === 0) {
        list.append(el("p", {}, "no live peers discovered"));
      }
      for (const peer of peers) {
        list.append(
          button(`${peer.fingerprint.slice(0, 16)}…  (${peer.address[0]}:${peer.address[1]})`,
                 () => void choosePeer(peer.fingerprint)),
        );
      }
      container.prepend(list);
    });
    if (!controller) {
      container.append(el("p", {}, "select a peer to browse the files your credentials unlock"));
      return;
    }
    const state = controller.state;
    container.append(el("h3", {}, `peer ${state.peer.slice(0, 16)}…`));
    if (state.error) {
      container.append(banner("error", state.error));
    }
    const countdown = el("div", { class: "countdown" });
    container.append(countdown);
    drawCountdown(countdown);
    container.append(
      el("div", { class: "meta" },
        `grants: ${state.refreshes}  auto-renewals: ${state.autoRenewals}`),
      button("refresh listing", () => void controller!.refresh().then(draw)),
    );
    const listing = el("ul", { class: "files" });
    if (state.files.length === 0) {
      container.append(el("p", {}, "nothing accessible with the presented credentials"));
    }
    for (const path of state.files) {
      const item = el("li", {});
      item.append(el("span", {}, path), button("fetch", () => void open(path)));
      listing.append(item);
    }
    container.append(listing);
  }

  draw();
}

function saveBlob(data: ArrayBuffer, name: string): void {
  const url = URL.createObjectURL(new Blob([data]));
  const anchor = el("a", { href: url, download: name });
  anchor.click();
  URL.revokeObjectURL(url);
}
