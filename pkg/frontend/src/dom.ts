/** Tiny DOM helpers; no framework, the API is the source of truth. */

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "class") node.className = value;
    else node.setAttribute(key, value);
  }
  node.append(...children);
  return node;
}

export function clear(node: HTMLElement): HTMLElement {
  node.replaceChildren();
  return node;
}

export function button(label: string, onClick: () => void, cls = ""): HTMLButtonElement {
  const b = el("button", cls ? { class: cls } : {}, label);
  b.addEventListener("click", onClick);
  return b;
}

export function select(
  options: readonly string[],
  current: string,
  onChange: (value: string) => void,
): HTMLSelectElement {
  const s = el("select");
  for (const option of options) {
    const o = el("option", { value: option }, option);
    if (option === current) o.selected = true;
    s.append(o);
  }
  s.addEventListener("change", () => onChange(s.value));
  return s;
}

export function textInput(
  value: string,
  onInput: (value: string) => void,
  placeholder = "",
): HTMLInputElement {
  const input = el("input", { type: "text", value, placeholder });
  input.addEventListener("input", () => onInput(input.value));
  return input;
}

export function banner(kind: "error" | "info", message: string): HTMLElement {
  return el("div", { class: `banner ${kind}` }, message);
}

export function fmtBytes(n: number): string {
  if (n < 1024) return `${n} B`;
  if (n < 1024 * 1024) return `${(n / 1024).toFixed(1)} kB`;
  return `${(n / (1024 * 1024)).toFixed(1)} MB`;
}
