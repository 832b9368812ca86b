"""Attacker deduction: closure rules, concealment soundness, and agreement
with the independent brute-force oracle."""

import random

import pytest

from akalab.deduction import KnowledgeBase
from akalab.terms import ZERO, App, Const, Name, Nat, app, pair, tup, xor

from .oracle import naive_derivable

A, B, C = Name(1, "a"), Name(2, "b"), Name(3, "c")
K, R = Name(4, "k"), Name(5, "r")
SK = Name(6, "sk")
SQN = Nat("ue1", 7)


def kb(*terms, bases=(), depth=4):
    return KnowledgeBase(terms, bases, depth)


def test_projection():
    assert kb(pair(A, B)).derivable(A)
    assert kb(pair(A, B)).derivable(B)


def test_decryption_needs_key():
    enc = app("aenc", A, app("pk", SK))
    assert not kb(enc).derivable(A)
    assert kb(enc, SK).derivable(A)


def test_construction_and_public_zero():
    assert kb(A, B).derivable(pair(A, B))
    assert kb().derivable(ZERO)
    assert not kb().derivable(Const("supi:ue1"))


def test_xor_cancellation_closure():
    assert kb(xor(A, B), B).derivable(A)


def test_concealed_counter():
    conc = xor(SQN, app("f5", K, R))
    # Without K the concealed counter stays hidden at any bound.
    for depth in (1, 2, 4, 8):
        assert not kb(conc, R, depth=depth).derivable(SQN)
    # Knowing the mask (or the key) opens it.
    assert kb(conc, app("f5", K, R)).derivable(SQN)
    assert kb(conc, R, K).derivable(SQN)


def test_nat_reveal_semantics():
    assert not kb().derivable(Nat("ue1", 3))
    assert kb(bases=("ue1",)).derivable(Nat("ue1", 3))
    assert kb(bases=("ue1",)).derivable(Nat("ue1", 99))
    assert not kb(bases=("ue1",)).derivable(Nat("ue2", 0))


def test_xor_span_via_shared_mask():
    # a+c and b+c known: their combination a+b is derivable, a alone is not.
    base = kb(xor(A, C), xor(B, C))
    assert base.derivable(xor(A, B))
    assert not base.derivable(A)


def test_depth_bound_limits_construction():
    shallow = kb(A, B, depth=1)
    assert shallow.derivable(app("f1", A, B))
    assert not shallow.derivable(app("sha256", app("f1", A, B)))
    assert kb(A, B, depth=2).derivable(app("sha256", app("f1", A, B)))


def test_pairing_is_free():
    deep = tup(A, B, A, B, A, B)
    assert kb(A, B, depth=1).derivable(deep)


def test_monotonicity():
    base = kb(pair(A, B))
    assert base.derivable(A)
    assert base.observe(C).derivable(A)
    assert base.observe(C).derivable(C)


def test_observe_is_functional():
    base = kb(A)
    extended = base.observe(B)
    assert not base.derivable(B)
    assert extended.derivable(B)


def test_saturate_idempotent_observably():
    base = kb(pair(A, B), xor(B, C))
    sat = base.saturate()
    for goal in (A, B, C, xor(A, C), pair(C, A)):
        assert base.derivable(goal) == sat.derivable(goal)


# -- randomized equivalence against the naive oracle --------------------------


def _instances(n, seed=20240817):
    """Small universes: at most 5 atoms per instance so the oracle's span
    enumeration stays feasible."""
    rng = random.Random(seed)
    pool = [A, B, C, K, R, SK, Nat("n1", 2), Nat("n2", 5), Const("pub")]

    made = 0
    while made < n:
        atoms = rng.sample(pool, 5)

        def rand_term(depth):
            if depth == 0 or rng.random() < 0.4:
                return rng.choice(atoms)
            kind = rng.randrange(5)
            if kind == 0:
                return pair(rand_term(depth - 1), rand_term(depth - 1))
            if kind == 1:
                return app("aenc", rand_term(depth - 1), app("pk", rng.choice(atoms)))
            if kind == 2:
                return app("f1", rand_term(depth - 1), rand_term(depth - 1))
            if kind == 3:
                return app("sha256", rand_term(depth - 1))
            return xor(rand_term(depth - 1), rand_term(depth - 1))

        known = [rand_term(rng.randrange(1, 3)) for _ in range(rng.randrange(1, 5))]
        bases = ("n1",) if rng.random() < 0.3 else ()
        goals = [rand_term(rng.randrange(1, 4)) for _ in range(4)]
        # Bias toward near-misses: goals sharing structure with the knowledge.
        if known and rng.random() < 0.5:
            goals.append(rng.choice(known))
        made += 1
        yield known, bases, goals


@pytest.mark.parametrize("chunk", range(5))
def test_oracle_equivalence_randomized(chunk):
    depth = 3
    disagreements = []
    for known, bases, goals in _instances(120, seed=1000 + chunk):
        fast = KnowledgeBase(known, bases, depth)
        for g in goals:
            got = fast.derivable(g)
            want = naive_derivable(known, bases, g, depth)
            if got != want:
                disagreements.append((known, bases, g, got, want))
    assert not disagreements, disagreements[:3]
