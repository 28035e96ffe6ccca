"""Shared generators and independent oracles used across the test suite.

The oracles here deliberately re-derive expectations by brute force rather
than calling the code paths they check.
"""

from __future__ import annotations

import random
from datetime import date, timedelta
from decimal import Decimal

from peervault.policy import (
    AttributeBag,
    AttributeRule,
    BoolOp,
    Branch,
    Leaf,
    Mode,
    Operator,
    Policy,
    PolicyNode,
    ancestry,
    evaluate_leaf,
)

ATTR_NAMES = ["age", "university", "club", "score", "joined", "issuer"]

# Detail strings registered by acceptance tests, reported by the conftest
# hook so every criterion yields one visible line even under capture.
ACCEPTANCE_DETAILS: dict[str, str] = {}


def random_value(rng: random.Random):
    kind = rng.randrange(4)
    if kind == 0:
        return rng.randrange(0, 100)
    if kind == 1:
        return Decimal(rng.randrange(0, 1000)) / 10
    if kind == 2:
        return rng.choice(["TU Delft", "chess", "red", "blue", "me"])
    return date(2020, 1, 1) + timedelta(days=rng.randrange(0, 1500))


def random_rule(rng: random.Random) -> AttributeRule:
    attribute = rng.choice(ATTR_NAMES)
    value = random_value(rng)
    if isinstance(value, str):
        operator = rng.choice([Operator.EQ, Operator.NEQ])
    else:
        operator = rng.choice(list(Operator))
    return AttributeRule(attribute, operator, value)


def random_tree(rng: random.Random, max_leaves: int = 6) -> PolicyNode:
    leaves = rng.randrange(1, max_leaves + 1)
    if leaves == 1:
        return Leaf(random_rule(rng))
    split = rng.randrange(1, leaves)
    op = rng.choice([BoolOp.AND, BoolOp.OR])
    return Branch(op, random_tree(rng, split), random_tree(rng, leaves - split))


def random_bag(rng: random.Random, ident: str) -> AttributeBag:
    claims = {}
    for name in rng.sample(ATTR_NAMES[:-1], rng.randrange(0, 4)):
        claims[name] = random_value(rng)
    metadata = {"issuer": rng.choice(["gov", "uni", "host-a", "host-b"])}
    return AttributeBag(credential_id=ident, claims=claims, metadata=metadata)


def random_bags(rng: random.Random, max_bags: int = 4) -> frozenset[AttributeBag]:
    return frozenset(random_bag(rng, f"cred-{i}") for i in range(rng.randrange(0, max_bags + 1)))


def brute_satisfied(node: PolicyNode, bags, me=None) -> bool:
    """Denotational satisfaction, independent of the survivor-set engine."""
    if isinstance(node, Leaf):
        return any(b in evaluate_leaf(node.rule, [b], me) for b in bags)
    left = brute_satisfied(node.left, bags, me)
    right = brute_satisfied(node.right, bags, me)
    return (left or right) if node.op is BoolOp.OR else (left and right)


def random_vault_shape(rng: random.Random, max_entries: int = 20):
    """Random (files, folders) with nesting depth up to 4."""
    files: list[str] = []
    folders: set[str] = set()
    for _ in range(rng.randrange(1, max_entries + 1)):
        depth = rng.randrange(0, 4)
        parts = [f"d{rng.randrange(3)}" for _ in range(depth)]
        name = f"f{rng.randrange(50)}.dat"
        path = "/".join(parts + [name])
        if path in files:
            continue
        files.append(path)
        for i in range(1, len(parts) + 1):
            folders.add("/".join(parts[:i]))
    return files, sorted(folders)


def random_policy_map(rng: random.Random, files, folders, max_leaves: int = 6):
    """Random per-path policies over a vault shape, including the root."""
    policies: dict[str, Policy] = {}
    for path in ["", *folders, *files]:
        roll = rng.random()
        if roll < 0.55:
            continue
        node = random_tree(rng, max_leaves)
        if roll < 0.8:
            policies[path] = Policy(combined=node)
        else:
            other = random_tree(rng, max_leaves) if rng.random() < 0.5 else None
            policies[path] = Policy(read=node, write=other)
    return policies


def build_chain_pair(host_key, requester_key, grants, timestamps=None):
    """Simulate a sequence of grants and return both parties' chain stores.

    `grants` is a list of path lists, one per accessible-files event.
    """
    from peervault.accesslog import ChainStore, countersign, propose_block

    host_store = ChainStore(host_key.public_bytes())
    req_store = ChainStore(requester_key.public_bytes())
    for i, paths in enumerate(grants):
        ts = timestamps[i] if timestamps else 1_700_000_000.0 + i
        block = propose_block(
            host_key, requester_key.public_bytes(), paths,
            host_store.tip(), req_store.tip(), timestamp=ts,
        )
        signed = countersign(block, requester_key)
        host_store.append(signed)
        req_store.append(signed)
    return host_store, req_store


def brute_accessible(files, policies, bags, mode: Mode, me=None) -> set[str]:
    """Per-file walk that re-collects every ancestor policy from scratch."""
    granted = set()
    for path in files:
        ok = True
        for ancestor in ancestry(path):
            local = policies.get(ancestor)
            if local is None:
                continue
            node = local.node_for(mode)
            if node is None:
                continue
            if not brute_satisfied(node, bags, me):
                ok = False
                break
        if ok:
            granted.add(path)
    return granted
