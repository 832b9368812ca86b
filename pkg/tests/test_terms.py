"""Term algebra: normal forms, XOR laws, counter comparisons, rendering."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from akalab.terms import (
    ZERO,
    App,
    BaseMismatch,
    Const,
    Name,
    Nat,
    Xor,
    app,
    equal_mod_theory,
    nat_increment,
    nat_less,
    normalize,
    pair,
    render,
    sort_key,
    tup,
    xor,
)

A, B, C = Name(1, "a"), Name(2, "b"), Name(3, "c")
K, R = Name(4, "k"), Name(5, "r")


def atoms():
    return st.sampled_from([A, B, C, K, R, ZERO, Const("tag"), Nat("s", 0), Nat("s", 3)])


def terms(max_depth=6):
    return st.recursive(
        atoms(),
        lambda inner: st.one_of(
            st.builds(lambda x, y: App("pair", (x, y)), inner, inner),
            st.builds(lambda x, y: App("f1", (x, y)), inner, inner),
            st.builds(lambda x, y: App("aenc", (x, y)), inner, inner),
            st.builds(lambda x: App("sha256", (x,)), inner),
            st.builds(lambda x: App("pk", (x,)), inner),
            st.lists(inner, min_size=0, max_size=4).map(lambda xs: Xor(tuple(xs))),
        ),
        max_leaves=2 ** 6,
    )


def test_xor_cancellation():
    assert xor(A, A) == ZERO
    assert xor(A, B, A) == B


def test_xor_flattening_and_order():
    t = normalize(Xor((Xor((A, B)), C)))
    assert isinstance(t, Xor) and len(t.parts) == 3
    assert list(t.parts) == sorted(t.parts, key=sort_key)
    assert t == xor(C, B, A)


def test_xor_unit_and_empty():
    assert xor(A, ZERO) == A
    assert normalize(Xor(())) == ZERO
    assert normalize(Xor((A,))) == A


def test_commutativity_and_free_symbols():
    assert equal_mod_theory(xor(A, B), xor(B, A))
    assert equal_mod_theory(xor(A, ZERO), A)
    assert not equal_mod_theory(app("f1", K, pair(A, B)), app("f1", K, pair(B, A)))


def test_projection_reduction():
    assert app("fst", pair(A, B)) == A
    assert app("snd", pair(A, B)) == B
    stuck = app("fst", A)
    assert isinstance(stuck, App) and stuck.symbol == "fst"


def test_arity_enforced():
    with pytest.raises(ValueError):
        normalize(App("f1", (A,)))
    with pytest.raises(ValueError):
        normalize(App("sha256", (A, B)))


def test_tup_right_nested():
    assert tup(A, B, C) == pair(A, pair(B, C))


def test_nat_less():
    assert nat_less(Nat("b1", 3), Nat("b1", 5))
    assert not nat_less(Nat("b1", 5), Nat("b1", 5))
    with pytest.raises(BaseMismatch):
        nat_less(Nat("b1", 1), Nat("b2", 9))


def test_nat_increment():
    assert nat_increment(Nat("b1", 0), 1) == Nat("b1", 1)
    assert nat_increment(Nat("b1", 4), 3) == Nat("b1", 7)
    with pytest.raises(ValueError):
        nat_increment(Nat("b1", 4), 0)


def test_nat_less_total_order():
    ns = [Nat("b", i) for i in (4, 1, 3, 2)]
    srt = sorted(ns, key=lambda n: n.offset)
    for i in range(len(srt) - 1):
        assert nat_less(srt[i], srt[i + 1])


def test_render_canonical():
    assert render(xor(B, A)) == "xor{a#1,b#2}"
    assert render(Nat("ue1", 4)) == "sqn(ue1,+4)"
    assert render(app("f5", K, R)) == "f5(k#4,r#5)"


@settings(max_examples=300, deadline=None)
@given(terms())
def test_normalize_idempotent(t):
    n = normalize(t)
    assert normalize(n) == n


@settings(max_examples=300, deadline=None)
@given(terms(max_depth=4))
def test_xor_involution(t):
    assert equal_mod_theory(Xor((t, t)), ZERO)


@settings(max_examples=200, deadline=None)
@given(terms(max_depth=3), terms(max_depth=3), terms(max_depth=3))
def test_xor_group_laws(x, y, z):
    assert equal_mod_theory(Xor((Xor((x, y)), z)), Xor((x, Xor((y, z)))))
    assert equal_mod_theory(Xor((x, y)), Xor((y, x)))
    assert equal_mod_theory(Xor((x, ZERO)), x)


@settings(max_examples=200, deadline=None)
@given(terms(max_depth=3), terms(max_depth=3), terms(max_depth=3), terms(max_depth=3))
def test_free_symbols_injective(a1, a2, b1, b2):
    eq_apps = equal_mod_theory(app("f1", a1, b1), app("f1", a2, b2))
    eq_args = equal_mod_theory(a1, a2) and equal_mod_theory(b1, b2)
    assert eq_apps == eq_args


@settings(max_examples=300, deadline=None)
@given(terms())
def test_sort_key_total(t):
    n = normalize(t)
    assert sort_key(n) == sort_key(n)
    if isinstance(n, Xor):
        keys = [sort_key(p) for p in n.parts]
        assert keys == sorted(keys)
