/**
 * Full nested tree editing with explicit AND/OR branch nodes: any policy
 * the JSON schema can express can be built here, not just linear chains.
 * Saving round-trips through the node's parser; the view re-reads what the
 * API persisted rather than trusting its local copy.
 */

import { AdminClient } from "../api.js";
import { banner, button, clear, el, select, textInput } from "../dom.js";
import {
  BoolOp,
  EditorNode,
  RULE_OPS,
  RuleOp,
  ValueType,
  WireNode,
  fromWire,
  leaf,
  removeNode,
  setBranchOp,
  swapChildren,
  toWire,
  updateLeaf,
  validate,
  wireEqual,
  wrapInBranch,
} from "../policy.js";

type Selector = "combined" | "read" | "write";

interface EditorState {
  path: string;
  selector: Selector;
  root: EditorNode | null;
  savedWire: WireNode | null;
  version: number;
  status: string;
}

export function renderPolicyEditor(container: HTMLElement, api: AdminClient): void {
  const state: EditorState = {
    path: "",
    selector: "combined",
    root: null,
    savedWire: null,
    version: 0,
    status: "",
  };

  const dirty = (): boolean => {
    if (state.root === null) return state.savedWire !== null;
    if (validate(state.root).length > 0) return true;
    return !wireEqual(toWire(state.root), state.savedWire);
  };

  async function load(): Promise<void> {
    try {
      const resp = await api.policyGet(state.path);
      const wire = resp.policy[state.selector];
      state.savedWire = wire;
      state.root = wire === null ? null : fromWire(wire);
      state.version = resp.version;
      state.status = "";
    } catch (err) {
      state.status = String(err);
    }
    draw();
  }

  async function save(): Promise<void> {
    const problems = state.root === null ? [] : validate(state.root);
    if (problems.length > 0) {
      state.status = `cannot save: ${problems[0].message}`;
      draw();
      return;
    }
    try {
      const wire = state.root === null ? null : toWire(state.root);
      await api.policySet(state.path, state.selector, wire);
      state.status = "saved";
      await load(); // reconcile from the API, never from local truth
      return;
    } catch (err) {
      state.status = `save failed: ${err}`;
    }
    draw();
  }

  function mutate(next: EditorNode | null): void {
    state.root = next;
    draw();
  }

  function renderNode(node: EditorNode): HTMLElement {
    const problems = new Map(
      state.root === null ? [] : validate(state.root).map((p) => [p.nodeId, p.message]),
    );
    if (node.kind === "branch") {
      const box = el("div", { class: "branch" });
      const head = el("div", { class: "branch-head" });
      head.append(
        select(["and", "or"], node.op, (v) =>
          mutate(setBranchOp(state.root!, node.id, v as BoolOp)),
        ),
        button("swap", () => mutate(swapChildren(state.root!, node.id))),
        button("delete", () => mutate(removeNode(state.root!, node.id)), "danger"),
      );
      box.append(head, renderNode(node.left), renderNode(node.right));
      return box;
    }
    const problem = problems.get(node.id);
    const row = el("div", { class: problem ? "leaf invalid" : "leaf" });
    row.append(
      textInput(node.attr, (v) => mutate(updateLeaf(state.root!, node.id, { attr: v })), "attribute"),
      select(RULE_OPS, node.op, (v) =>
        mutate(updateLeaf(state.root!, node.id, { op: v as RuleOp })),
      ),
      select(["string", "int", "decimal", "date"], node.valueType, (v) =>
        mutate(updateLeaf(state.root!, node.id, { valueType: v as ValueType })),
      ),
      textInput(node.valueText, (v) => mutate(updateLeaf(state.root!, node.id, { valueText: v })), "value"),
      button("and +", () => mutate(wrapInBranch(state.root!, node.id, "and"))),
      button("or +", () => mutate(wrapInBranch(state.root!, node.id, "or"))),
      button("delete", () => mutate(removeNode(state.root!, node.id)), "danger"),
    );
    if (problem) {
      row.append(el("span", { class: "problem" }, problem));
    }
    return row;
  }

  function draw(): void {
    clear(container);
    container.append(el("h2", {}, "Policy editor"));
    const controls = el("div", { class: "controls" });
    controls.append(
      textInput(state.path, (v) => (state.path = v), "path (empty = vault root)"),
      select(["combined", "read", "write"], state.selector, (v) => {
        state.selector = v as Selector;
      }),
      button("load", () => void load()),
    );
    container.append(controls);
    if (state.status) {
      container.append(banner(state.status.includes("fail") || state.status.includes("cannot") ? "error" : "info", state.status));
    }
    container.append(
      el("div", { class: "meta" },
        `selector: ${state.selector}  version: ${state.version}  ${dirty() ? "UNSAVED CHANGES" : "in sync"}`),
    );
    if (state.root === null) {
      container.append(
        el("p", {}, "no restriction at this level"),
        button("add a rule", () => mutate(leaf())),
      );
    } else {
      container.append(renderNode(state.root));
      container.append(button("clear policy", () => mutate(null), "danger"));
    }
    container.append(button("save", () => void save(), "primary"));
  }

  draw();
}
