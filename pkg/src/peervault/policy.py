"""Access policies: binary boolean expression trees over attribute rules.

A policy tree has AND/OR branches and attribute-rule leaves. Rules are
(attribute, operator, value) triplets compared against the claims of
verified credentials. A rule leaf keeps exactly the credentials whose
claims satisfy it; an OR branch keeps the union of its children; an AND
branch keeps the union only when both children are independently
satisfiable, so an AND may be met by attributes spread across different
credentials. A tree is satisfied when its surviving credential set is
non-empty.

Every entry in a vault can carry a local policy; the effective policy of a
path is the conjunction of all local policies from the root down, so access
requires satisfying every level.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Iterable, Mapping, Optional, Sequence, Union

from .values import AttrValue, canonical_json, compare, from_wire, is_ordered, to_wire


class PolicyError(Exception):
    """Base class for policy errors."""


class MalformedPolicy(PolicyError):
    """Policy text or structure violates the schema.

    Carries a human-readable position ("$.left.value") and reason.
    """

    def __init__(self, position: str, reason: str):
        self.position = position
        self.reason = reason
        super().__init__(f"{position}: {reason}")


class UnknownPath(PolicyError):
    """The referenced path does not exist in the vault."""


class EmptyRuleList(PolicyError):
    """linearize was called with no rules."""


class Operator(str, Enum):
    EQ = "eq"
    NEQ = "neq"
    LT = "lt"
    LTE = "lte"
    GT = "gt"
    GTE = "gte"


_ORDERING_OPS = {Operator.LT, Operator.LTE, Operator.GT, Operator.GTE}


class BoolOp(str, Enum):
    AND = "and"
    OR = "or"


class Mode(str, Enum):
    READ = "read"
    WRITE = "write"


# The reserved rule value for "issuer = me" rules, substituted with the
# evaluating host's own identity at evaluation time.
SELF_ISSUER = "me"

# Metadata claim names usable in rules alongside ordinary claims.
META_ISSUER = "issuer"
META_ISSUANCE_DATE = "issuanceDate"


@dataclass(frozen=True)
class AttributeRule:
    """One (attribute, operator, value) comparison."""

    attribute: str
    operator: Operator
    value: AttrValue

    def __post_init__(self):
        if not self.attribute:
            raise MalformedPolicy("$", "rule attribute must be non-empty")
        if self.operator in _ORDERING_OPS and not is_ordered(self.value):
            raise MalformedPolicy(
                "$", f"operator {self.operator.value} requires a numeric or date value"
            )


@dataclass(frozen=True)
class Leaf:
    rule: AttributeRule


@dataclass(frozen=True)
class Branch:
    op: BoolOp
    left: "PolicyNode"
    right: "PolicyNode"


PolicyNode = Union[Leaf, Branch]


@dataclass(frozen=True)
class Policy:
    """Per-entry policy: either a combined node or a read/write pair.

    An absent node means no restriction for that mode at this level.
    """

    read: Optional[PolicyNode] = None
    write: Optional[PolicyNode] = None
    combined: Optional[PolicyNode] = None

    def __post_init__(self):
        if self.combined is not None and (self.read is not None or self.write is not None):
            raise MalformedPolicy("$", "combined policy excludes separate read/write")

    def node_for(self, mode: Mode) -> Optional[PolicyNode]:
        if self.combined is not None:
            return self.combined
        return self.read if mode is Mode.READ else self.write

    def is_unrestricted(self) -> bool:
        return self.read is None and self.write is None and self.combined is None


@dataclass(frozen=True, eq=False)
class AttributeBag:
    """Verified claims of one credential, plus its metadata claims.

    Bags are built only by the credential verification paths; the policy
    engine never sees an unverified claim. Metadata (issuer identity,
    issuance date) is addressable in rules under the reserved names
    "issuer" and "issuanceDate"; an ordinary claim with one of those names
    shadows the metadata.
    """

    credential_id: str
    claims: Mapping[str, AttrValue]
    metadata: Mapping[str, AttrValue] = field(default_factory=dict)

    def lookup(self, attribute: str) -> Optional[AttrValue]:
        if attribute in self.claims:
            return self.claims[attribute]
        return self.metadata.get(attribute)

    def _key(self):
        return (
            self.credential_id,
            tuple(sorted(self.claims.items())),
            tuple(sorted(self.metadata.items())),
        )

    def __eq__(self, other):
        if not isinstance(other, AttributeBag):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self):
        return hash(self._key())


@dataclass(frozen=True)
class AccessDecision:
    granted: bool
    satisfying_credential_ids: frozenset[str] = frozenset()


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def _satisfies(actual: AttrValue, op: Operator, expected: AttrValue) -> bool:
    cmp = compare(actual, expected)
    if cmp is None:
        # Type-incompatible comparison excludes the credential; EQ/NEQ do not
        # treat mixed types as unequal, they treat them as not comparable.
        return False
    if op is Operator.EQ:
        return cmp == 0
    if op is Operator.NEQ:
        return cmp != 0
    if op is Operator.LT:
        return cmp < 0
    if op is Operator.LTE:
        return cmp <= 0
    if op is Operator.GT:
        return cmp > 0
    return cmp >= 0


def evaluate_leaf(
    rule: AttributeRule,
    bags: Iterable[AttributeBag],
    me: str | None = None,
) -> frozenset[AttributeBag]:
    """Keep exactly the bags whose claim satisfies the rule.

    Bags missing the attribute, or whose value has an incomparable type,
    are excluded. A rule (issuer, eq, "me") compares against `me`, the
    evaluating host's own identity.
    """
    expected = rule.value
    if rule.attribute == META_ISSUER and expected == SELF_ISSUER:
        if me is None:
            return frozenset()
        expected = me
    kept = []
    for bag in bags:
        actual = bag.lookup(rule.attribute)
        if actual is None:
            continue
        if _satisfies(actual, rule.operator, expected):
            kept.append(bag)
    return frozenset(kept)


def evaluate(
    node: PolicyNode,
    bags: Iterable[AttributeBag],
    me: str | None = None,
) -> frozenset[AttributeBag]:
    """Evaluate a tree, returning the surviving credential set.

    OR is the union of both children. AND is the union when both children
    are independently non-empty, otherwise empty. The tree is satisfied iff
    the result is non-empty.
    """
    bags = frozenset(bags)
    if isinstance(node, Leaf):
        return evaluate_leaf(node.rule, bags, me)
    left = evaluate(node.left, bags, me)
    right = evaluate(node.right, bags, me)
    if node.op is BoolOp.OR:
        return left | right
    if not left or not right:
        return frozenset()
    return left | right


def is_satisfied(node: PolicyNode, bags: Iterable[AttributeBag], me: str | None = None) -> bool:
    return bool(evaluate(node, bags, me))


# ---------------------------------------------------------------------------
# Path inheritance
# ---------------------------------------------------------------------------

PolicyLookup = Callable[[str], Optional[Policy]]


def parent_path(path: str) -> Optional[str]:
    """Parent of a normalized relative path; None for the root ("")."""
    if path == "":
        return None
    head, _, _ = path.rpartition("/")
    return head


def ancestry(path: str) -> list[str]:
    """Root-first chain of paths from "" down to the path itself."""
    if path == "":
        return [""]
    parts = path.split("/")
    return [""] + ["/".join(parts[: i + 1]) for i in range(len(parts))]


def global_policy(path: str, lookup: PolicyLookup, *, known: Callable[[str], bool] | None = None) -> list[Policy]:
    """Restriction chain along the root path, root first.

    Collects every non-empty local policy from the vault root down to the
    entry. A path with no restriction anywhere yields an empty list. When
    a `known` predicate is given, unknown paths raise UnknownPath.
    """
    if known is not None and not known(path):
        raise UnknownPath(path)
    chain: list[Policy] = []
    for ancestor in ancestry(path):
        local = lookup(ancestor)
        if local is not None and not local.is_unrestricted():
            chain.append(local)
    return chain


def check_access(
    path: str,
    mode: Mode,
    bags: Iterable[AttributeBag],
    lookup: PolicyLookup,
    *,
    me: str | None = None,
    known: Callable[[str], bool] | None = None,
) -> AccessDecision:
    """Grant iff every policy along the root path is satisfied for the mode.

    A policy level whose node for the requested mode is absent imposes no
    restriction at that level. The satisfying credential ids are the union
    of surviving credentials across all levels.
    """
    bags = frozenset(bags)
    satisfying: set[str] = set()
    for policy in global_policy(path, lookup, known=known):
        node = policy.node_for(mode)
        if node is None:
            continue
        survivors = evaluate(node, bags, me)
        if not survivors:
            return AccessDecision(granted=False)
        satisfying.update(b.credential_id for b in survivors)
    return AccessDecision(granted=True, satisfying_credential_ids=frozenset(satisfying))


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def node_to_dict(node: PolicyNode) -> dict[str, Any]:
    if isinstance(node, Leaf):
        return {
            "type": "leaf",
            "attr": node.rule.attribute,
            "op": node.rule.operator.value,
            "value": to_wire(node.rule.value),
        }
    return {
        "type": "branch",
        "op": node.op.value,
        "left": node_to_dict(node.left),
        "right": node_to_dict(node.right),
    }


def node_from_dict(raw: Any, position: str = "$") -> PolicyNode:
    if not isinstance(raw, dict):
        raise MalformedPolicy(position, "node must be an object")
    kind = raw.get("type")
    if kind == "leaf":
        extra = set(raw) - {"type", "attr", "op", "value"}
        if extra:
            raise MalformedPolicy(position, f"unexpected keys: {sorted(extra)}")
        attr = raw.get("attr")
        if not isinstance(attr, str) or not attr:
            raise MalformedPolicy(position, "leaf attr must be a non-empty string")
        try:
            op = Operator(raw.get("op"))
        except ValueError:
            raise MalformedPolicy(position, f"unknown operator: {raw.get('op')!r}") from None
        try:
            value = from_wire(raw.get("value"))
        except ValueError as exc:
            raise MalformedPolicy(f"{position}.value", str(exc)) from None
        try:
            return Leaf(AttributeRule(attr, op, value))
        except MalformedPolicy as exc:
            raise MalformedPolicy(position, exc.reason) from None
    if kind == "branch":
        extra = set(raw) - {"type", "op", "left", "right"}
        if extra:
            raise MalformedPolicy(position, f"unexpected keys: {sorted(extra)}")
        try:
            op = BoolOp(raw.get("op"))
        except ValueError:
            raise MalformedPolicy(position, f"unknown boolean op: {raw.get('op')!r}") from None
        if "left" not in raw or "right" not in raw:
            raise MalformedPolicy(position, "branch requires both left and right children")
        left = node_from_dict(raw["left"], position + ".left")
        right = node_from_dict(raw["right"], position + ".right")
        return Branch(op, left, right)
    raise MalformedPolicy(position, f"unknown node type: {kind!r}")


def policy_to_dict(policy: Policy) -> dict[str, Any]:
    return {
        "combined": node_to_dict(policy.combined) if policy.combined else None,
        "read": node_to_dict(policy.read) if policy.read else None,
        "write": node_to_dict(policy.write) if policy.write else None,
    }


def policy_from_dict(raw: Any) -> Policy:
    if not isinstance(raw, dict):
        raise MalformedPolicy("$", "policy must be an object")
    extra = set(raw) - {"combined", "read", "write"}
    if extra:
        raise MalformedPolicy("$", f"unexpected keys: {sorted(extra)}")

    def maybe(key: str) -> Optional[PolicyNode]:
        value = raw.get(key)
        return None if value is None else node_from_dict(value, f"$.{key}")

    return Policy(read=maybe("read"), write=maybe("write"), combined=maybe("combined"))


def serialize(policy: Policy) -> str:
    """Canonical JSON text: sorted keys, deterministic across runs."""
    return canonical_json(policy_to_dict(policy))


def parse(text: str | bytes) -> Policy:
    """Inverse of serialize; never raises anything but MalformedPolicy."""
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedPolicy("$", f"not valid UTF-8: {exc}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedPolicy(f"offset {exc.pos}", exc.msg) from None
    return policy_from_dict(raw)


# ---------------------------------------------------------------------------
# Linear layout
# ---------------------------------------------------------------------------

def linearize(rules: Sequence[tuple[PolicyNode, Optional[BoolOp]]]) -> PolicyNode:
    """Fold an ordered rule list into a right-nested tree.

    [(A, op1), (B, op2), (C, op3), (D, None)] becomes
    Branch(op1, A, Branch(op2, B, Branch(op3, C, D))). A single element is
    returned as-is; the last element's operator is ignored.
    """
    if not rules:
        raise EmptyRuleList("cannot linearize an empty rule list")
    node, _ = rules[-1]
    for prior, op in reversed(rules[:-1]):
        if op is None:
            raise MalformedPolicy("$", "non-final rules need a joining operator")
        node = Branch(op, prior, node)
    return node


# ---------------------------------------------------------------------------
# Accessible-path computation (shared by the vault and tests)
# ---------------------------------------------------------------------------

def accessible_paths(
    file_paths: Iterable[str],
    lookup: PolicyLookup,
    bags: Iterable[AttributeBag],
    mode: Mode,
    me: str | None = None,
) -> set[str]:
    """File paths whose full restriction chain is satisfied by the bags.

    Evaluates each ancestor level once rather than per file.
    """
    bags = frozenset(bags)
    level_ok: dict[str, bool] = {}
    granted: set[str] = set()

    def level(path: str) -> bool:
        if path in level_ok:
            return level_ok[path]
        local = lookup(path)
        node = local.node_for(mode) if local is not None else None
        ok = node is None or bool(evaluate(node, bags, me))
        level_ok[path] = ok
        return ok

    for file_path in file_paths:
        if all(level(ancestor) for ancestor in ancestry(file_path)):
            granted.add(file_path)
    return granted
