import assert from "node:assert/strict";
import { test } from "node:test";

import {
  branch,
  fromWire,
  leaf,
  mulberry32,
  randomWireTree,
  removeNode,
  toWire,
  updateLeaf,
  validate,
  wireEqual,
  wrapInBranch,
  type WireNode,
} from "./policy.js";

test("editor-schema bijection on generated trees", () => {
  const rand = mulberry32(20220813);
  for (let i = 0; i < 300; i++) {
    const wire = randomWireTree(rand);
    const roundTripped = toWire(fromWire(wire));
    assert.ok(wireEqual(wire, roundTripped), `tree ${i} changed:\n${JSON.stringify(wire)}\n${JSON.stringify(roundTripped)}`);
  }
});

test("every value type survives the round trip", () => {
  const samples: WireNode[] = [
    { type: "leaf", attr: "age", op: "gte", value: 18 },
    { type: "leaf", attr: "score", op: "lt", value: { decimal: "17.50" } },
    { type: "leaf", attr: "joined", op: "lte", value: { date: "2022-01-31" } },
    { type: "leaf", attr: "university", op: "eq", value: "TU Delft" },
    { type: "leaf", attr: "note", op: "neq", value: 'has "quotes" inside' },
  ];
  for (const wire of samples) {
    assert.ok(wireEqual(wire, toWire(fromWire(wire))));
  }
});

test("validation blocks unsaveable trees", () => {
  const noAttr = leaf("", "eq", "string", "x");
  assert.equal(validate(noAttr).length, 1);

  const orderingOnString = leaf("age", "gte", "string", "eighteen");
  assert.ok(validate(orderingOnString).some((p) => p.message.includes("numeric or date")));

  const badInt = leaf("age", "gte", "int", "12x");
  assert.ok(validate(badInt).some((p) => p.message.includes("integer")));

  const badDate = leaf("joined", "lt", "date", "01-01-2022");
  assert.ok(validate(badDate).some((p) => p.message.includes("date")));

  assert.throws(() => toWire(badInt));
});

test("structural edits keep the tree binary", () => {
  let root = fromWire({ type: "leaf", attr: "a", op: "eq", value: 1 });
  root = wrapInBranch(root, root.id, "and");
  assert.equal(root.kind, "branch");
  if (root.kind !== "branch") return;
  assert.equal(root.left.kind, "leaf");
  assert.equal(root.right.kind, "leaf");

  const filled = updateLeaf(root, root.right.id, {
    attr: "b", op: "eq", valueType: "int", valueText: "2",
  });
  const wire = toWire(filled);
  assert.deepEqual(wire, {
    type: "branch",
    op: "and",
    left: { type: "leaf", attr: "a", op: "eq", value: 1 },
    right: { type: "leaf", attr: "b", op: "eq", value: 2 },
  });

  // Deleting one side collapses the branch to the sibling.
  if (filled.kind !== "branch") return;
  const collapsed = removeNode(filled, filled.left.id);
  assert.ok(collapsed !== null && collapsed.kind === "leaf");

  // Deleting the root clears the policy entirely.
  assert.equal(removeNode(collapsed!, collapsed!.id), null);
});

test("branch factory nests arbitrarily", () => {
  const deep = branch("or",
    branch("and", leaf("a", "eq", "int", "1"), leaf("b", "eq", "int", "2")),
    leaf("c", "eq", "string", "x"),
  );
  const wire = toWire(deep);
  assert.equal(wire.type, "branch");
  if (wire.type === "branch") {
    assert.equal(wire.left.type, "branch");
  }
});
