/**
 * Policy tree model: the node's JSON schema mapped onto editable state.
 *
 * The wire schema is a binary boolean tree:
 *   {type:"branch", op:"and"|"or", left, right}
 * | {type:"leaf", attr, op:"eq|neq|lt|lte|gt|gte", value}
 * where value is a string, an integer, {"decimal": "..."} or {"date": "..."}.
 *
 * Editor nodes carry ids (for DOM bookkeeping) and keep the value as typed
 * text so half-finished input never destroys information. toWire/fromWire
 * are exact inverses for every valid tree; validate() reports the problems
 * that block saving.
 */

export type BoolOp = "and" | "or";
export type RuleOp = "eq" | "neq" | "lt" | "lte" | "gt" | "gte";
export type ValueType = "string" | "int" | "decimal" | "date";

export type WireValue = string | number | { decimal: string } | { date: string };

export interface WireLeaf {
  type: "leaf";
  attr: string;
  op: RuleOp;
  value: WireValue;
}

export interface WireBranch {
  type: "branch";
  op: BoolOp;
  left: WireNode;
  right: WireNode;
}

export type WireNode = WireLeaf | WireBranch;

export interface WirePolicy {
  combined: WireNode | null;
  read: WireNode | null;
  write: WireNode | null;
}

export interface LeafNode {
  id: number;
  kind: "leaf";
  attr: string;
  op: RuleOp;
  valueType: ValueType;
  valueText: string;
}

export interface BranchNode {
  id: number;
  kind: "branch";
  op: BoolOp;
  left: EditorNode;
  right: EditorNode;
}

export type EditorNode = LeafNode | BranchNode;

export const RULE_OPS: RuleOp[] = ["eq", "neq", "lt", "lte", "gt", "gte"];
export const ORDERING_OPS: ReadonlySet<RuleOp> = new Set(["lt", "lte", "gt", "gte"]);

let nextId = 1;

export function freshId(): number {
  return nextId++;
}

export function leaf(
  attr = "",
  op: RuleOp = "eq",
  valueType: ValueType = "string",
  valueText = "",
): LeafNode {
  return { id: freshId(), kind: "leaf", attr, op, valueType, valueText };
}

export function branch(op: BoolOp, left: EditorNode, right: EditorNode): BranchNode {
  return { id: freshId(), kind: "branch", op, left, right };
}

// ---------------------------------------------------------------------------
// Wire mapping
// ---------------------------------------------------------------------------

const INT_RE = /^-?\d+$/;
const DECIMAL_RE = /^-?\d+\.\d+$/;
const DATE_RE = /^\d{4}-\d{2}-\d{2}$/;

export function fromWire(node: WireNode): EditorNode {
  if (node.type === "branch") {
    return branch(node.op, fromWire(node.left), fromWire(node.right));
  }
  const value = node.value;
  if (typeof value === "number") {
    if (!Number.isInteger(value)) {
      // Non-integer JSON numbers are decimals that lost their tag upstream.
      return leaf(node.attr, node.op, "decimal", String(value));
    }
    return leaf(node.attr, node.op, "int", String(value));
  }
  if (typeof value === "string") {
    return leaf(node.attr, node.op, "string", value);
  }
  if ("decimal" in value) {
    return leaf(node.attr, node.op, "decimal", value.decimal);
  }
  return leaf(node.attr, node.op, "date", value.date);
}

export function toWire(node: EditorNode): WireNode {
  const problems = validate(node);
  if (problems.length > 0) {
    throw new Error(`tree is not saveable: ${problems[0].message}`);
  }
  return toWireUnchecked(node);
}

function toWireUnchecked(node: EditorNode): WireNode {
  if (node.kind === "branch") {
    return {
      type: "branch",
      op: node.op,
      left: toWireUnchecked(node.left),
      right: toWireUnchecked(node.right),
    };
  }
  return { type: "leaf", attr: node.attr, op: node.op, value: leafValue(node) };
}

function leafValue(node: LeafNode): WireValue {
  switch (node.valueType) {
    case "int":
      return parseInt(node.valueText, 10);
    case "decimal":
      return { decimal: node.valueText };
    case "date":
      return { date: node.valueText };
    default:
      return node.valueText;
  }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

export interface Problem {
  nodeId: number;
  message: string;
}

export function validate(node: EditorNode): Problem[] {
  const problems: Problem[] = [];
  walk(node, (n) => {
    if (n.kind === "branch") return;
    if (n.attr.trim() === "") {
      problems.push({ nodeId: n.id, message: "attribute name is empty" });
    }
    if (n.valueType === "int" && !INT_RE.test(n.valueText)) {
      problems.push({ nodeId: n.id, message: `not an integer: "${n.valueText}"` });
    }
    if (n.valueType === "decimal" && !DECIMAL_RE.test(n.valueText)) {
      problems.push({ nodeId: n.id, message: `not a decimal: "${n.valueText}"` });
    }
    if (n.valueType === "date" && !DATE_RE.test(n.valueText)) {
      problems.push({ nodeId: n.id, message: `not a date (YYYY-MM-DD): "${n.valueText}"` });
    }
    if (ORDERING_OPS.has(n.op) && n.valueType === "string") {
      problems.push({
        nodeId: n.id,
        message: `${n.op} needs a numeric or date value`,
      });
    }
  });
  return problems;
}

export function walk(node: EditorNode, visit: (n: EditorNode) => void): void {
  visit(node);
  if (node.kind === "branch") {
    walk(node.left, visit);
    walk(node.right, visit);
  }
}

// ---------------------------------------------------------------------------
// Editor operations (used by the tree view)
// ---------------------------------------------------------------------------

/** Replace the node with a branch holding it and a fresh empty rule. */
export function wrapInBranch(root: EditorNode, targetId: number, op: BoolOp): EditorNode {
  return rewrite(root, targetId, (n) => branch(op, n, leaf()));
}

/** Remove a node; its sibling replaces the parent branch. */
export function removeNode(root: EditorNode, targetId: number): EditorNode | null {
  if (root.id === targetId) {
    return null;
  }
  const prune = (node: EditorNode): EditorNode => {
    if (node.kind === "leaf") return node;
    if (node.left.id === targetId) return prune(node.right);
    if (node.right.id === targetId) return prune(node.left);
    return { ...node, left: prune(node.left), right: prune(node.right) };
  };
  return prune(root);
}

export function swapChildren(root: EditorNode, targetId: number): EditorNode {
  return rewrite(root, targetId, (n) =>
    n.kind === "branch" ? { ...n, left: n.right, right: n.left } : n,
  );
}

export function updateLeaf(
  root: EditorNode,
  targetId: number,
  patch: Partial<Omit<LeafNode, "id" | "kind">>,
): EditorNode {
  return rewrite(root, targetId, (n) => (n.kind === "leaf" ? { ...n, ...patch } : n));
}

export function setBranchOp(root: EditorNode, targetId: number, op: BoolOp): EditorNode {
  return rewrite(root, targetId, (n) => (n.kind === "branch" ? { ...n, op } : n));
}

function rewrite(
  node: EditorNode,
  targetId: number,
  replace: (n: EditorNode) => EditorNode,
): EditorNode {
  if (node.id === targetId) {
    return replace(node);
  }
  if (node.kind === "branch") {
    return {
      ...node,
      left: rewrite(node.left, targetId, replace),
      right: rewrite(node.right, targetId, replace),
    };
  }
  return node;
}

// ---------------------------------------------------------------------------
// Equality + generation (shared by tests and the dirty-marker)
// ---------------------------------------------------------------------------

export function wireEqual(a: WireNode | null, b: WireNode | null): boolean {
  return JSON.stringify(normalize(a)) === JSON.stringify(normalize(b));
}

function normalize(node: WireNode | null): unknown {
  if (node === null) return null;
  if (node.type === "branch") {
    return { type: "branch", op: node.op, left: normalize(node.left), right: normalize(node.right) };
  }
  return { type: "leaf", attr: node.attr, op: node.op, value: node.value };
}

/** Deterministic random policy trees for round-trip testing. */
export function randomWireTree(rand: () => number, maxLeaves = 6): WireNode {
  const leaves = 1 + Math.floor(rand() * maxLeaves);
  if (leaves === 1) {
    return randomLeaf(rand);
  }
  const split = 1 + Math.floor(rand() * (leaves - 1));
  return {
    type: "branch",
    op: rand() < 0.5 ? "and" : "or",
    left: randomWireTree(rand, split),
    right: randomWireTree(rand, leaves - split),
  };
}

function randomLeaf(rand: () => number): WireLeaf {
  const attrs = ["age", "university", "club", "score", "joined", "issuer"];
  const attr = attrs[Math.floor(rand() * attrs.length)];
  const kind = Math.floor(rand() * 4);
  if (kind === 0) {
    return { type: "leaf", attr, op: pick(rand, RULE_OPS), value: Math.floor(rand() * 100) };
  }
  if (kind === 1) {
    const cents = Math.floor(rand() * 10000);
    return {
      type: "leaf", attr, op: pick(rand, RULE_OPS),
      value: { decimal: `${Math.floor(cents / 100)}.${String(cents % 100).padStart(2, "0")}` },
    };
  }
  if (kind === 2) {
    const day = 1 + Math.floor(rand() * 28);
    const month = 1 + Math.floor(rand() * 12);
    return {
      type: "leaf", attr, op: pick(rand, RULE_OPS),
      value: { date: `202${Math.floor(rand() * 5)}-${pad(month)}-${pad(day)}` },
    };
  }
  const words = ["TU Delft", "chess", "me", "red team", "a\"quote"];
  return { type: "leaf", attr, op: rand() < 0.5 ? "eq" : "neq", value: pick(rand, words) };
}

function pick<T>(rand: () => number, options: readonly T[]): T {
  return options[Math.floor(rand() * options.length)];
}

function pad(n: number): string {
  return String(n).padStart(2, "0");
}

/** Small deterministic PRNG so test failures reproduce. */
export function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}
