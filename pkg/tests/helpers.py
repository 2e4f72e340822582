"""Shared builders for the test suite."""

import random

from zkoracle import eddsa
from zkoracle.merkle import Account, StateTree
from zkoracle.nodes import make_vote


def build_committee(depth, count=None, stakes=None, key_salt=0):
    """Full or partial committee tree plus the members' keypairs."""
    capacity = 1 << depth
    count = capacity if count is None else count
    tree = StateTree(depth)
    keys = []
    for i in range(count):
        kp = eddsa.keygen((i + 1 + key_salt).to_bytes(4, "big") * 8)
        stake = stakes[i] if stakes else 100
        tree.set_account(i, Account(i, kp.pk, stake))
        keys.append(kp)
    return tree, keys


def honest_votes(keys, indices, request_id, block_hash):
    return [make_vote(keys[i].sk, i, request_id, block_hash) for i in indices]


def random_occupied_tree(rng: random.Random, depth, keys, min_occupied):
    """Random occupancy and balances over a fixed keypair pool."""
    capacity = 1 << depth
    count = rng.randint(min_occupied, capacity)
    indices = sorted(rng.sample(range(capacity), count))
    tree = StateTree(depth)
    for i in indices:
        tree.set_account(i, Account(i, keys[i].pk, rng.randint(0, 10_000)))
    return tree, indices
