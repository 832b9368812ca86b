"""Symbolic message algebra: constants, names, function applications, XOR
multisets, and counter terms, with a canonical normal form.

Normal form rules:
  * XOR is flattened (no nested Xor), cancelled pairwise (t xor t = zero),
    never contains the zero constant, and its elements are kept in a fixed
    total order.  An empty XOR collapses to ``ZERO``; a singleton collapses
    to its element.
  * fst/snd applied to a literal pair reduce to the component.
  * Everything else is free: equality of applications is pointwise equality
    of arguments.

Equality of normal forms is plain ``==`` on the (frozen) dataclasses, so
normalized terms can live in sets and dict keys.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Union

Term = Union["Const", "Name", "Nat", "App", "Xor"]


class BaseMismatch(Exception):
    """Comparison of counter terms with different bases: a modeling bug."""


@dataclass(frozen=True)
class Const:
    """Named constant (protocol tags, identities). Not attacker-known unless
    seeded into or observed by a knowledge base."""

    label: str


@dataclass(frozen=True)
class Name:
    """Fresh name: long-term keys, nonces, random challenges."""

    id: int
    label: str


@dataclass(frozen=True)
class Nat:
    """Counter value as symbolic base plus concrete offset.  The base stands
    for a secret initial value and is never materialized."""

    base: str
    offset: int


@dataclass(frozen=True)
class App:
    symbol: str
    args: tuple[Term, ...]


@dataclass(frozen=True)
class Xor:
    parts: tuple[Term, ...]


ZERO = Const("zero")

# Fixed arities of the protocol's function symbols.
ARITY = {
    "f1": 2,
    "f1star": 2,
    "f2": 2,
    "f3": 2,
    "f4": 2,
    "f5": 2,
    "f5star": 2,
    "kdf": 2,
    "aenc": 2,
    "pair": 2,
    "sha256": 1,
    "pk": 1,
    "fst": 1,
    "snd": 1,
}

# Symbols the attacker may apply to known terms.  fst/snd are destructors:
# the deduction engine projects pairs directly instead of building stuck
# destructor terms.
CONSTRUCTORS = frozenset(ARITY) - {"fst", "snd"}

_TAG = {Const: 0, Name: 1, Nat: 2, App: 3, Xor: 4}


def sort_key(t: Term):
    """Total order over normal-form terms: lexicographic on
    (constructor tag, labels/ids, children)."""
    if isinstance(t, Const):
        return (0, t.label)
    if isinstance(t, Name):
        return (1, t.label, t.id)
    if isinstance(t, Nat):
        return (2, t.base, t.offset)
    if isinstance(t, App):
        return (3, t.symbol, tuple(sort_key(a) for a in t.args))
    return (4, tuple(sort_key(p) for p in t.parts))


def normalize(t: Term) -> Term:
    """Unique normal form; idempotent."""
    if isinstance(t, (Const, Name, Nat)):
        return t
    if isinstance(t, App):
        if len(t.args) != ARITY[t.symbol]:
            raise ValueError(f"{t.symbol} expects {ARITY[t.symbol]} args, got {len(t.args)}")
        args = tuple(normalize(a) for a in t.args)
        if t.symbol == "fst" and isinstance(args[0], App) and args[0].symbol == "pair":
            return args[0].args[0]
        if t.symbol == "snd" and isinstance(args[0], App) and args[0].symbol == "pair":
            return args[0].args[1]
        return App(t.symbol, args)
    # XOR: flatten, drop zero, cancel mod 2, order canonically.
    counts: dict[Term, int] = {}
    for p in t.parts:
        q = normalize(p)
        if isinstance(q, Xor):
            for s in q.parts:
                counts[s] = counts.get(s, 0) + 1
        elif q != ZERO:
            counts[q] = counts.get(q, 0) + 1
    kept = sorted((s for s, n in counts.items() if n % 2 == 1), key=sort_key)
    if not kept:
        return ZERO
    if len(kept) == 1:
        return kept[0]
    return Xor(tuple(kept))


def equal_mod_theory(t1: Term, t2: Term) -> bool:
    return normalize(t1) == normalize(t2)


def xor(*ts: Term) -> Term:
    return normalize(Xor(tuple(ts)))


def app(symbol: str, *args: Term) -> Term:
    return normalize(App(symbol, tuple(args)))


def pair(a: Term, b: Term) -> Term:
    return app("pair", a, b)


def tup(*ts: Term) -> Term:
    """Right-nested tuple: tup(a, b, c) == pair(a, pair(b, c))."""
    if not ts:
        raise ValueError("empty tuple")
    if len(ts) == 1:
        return normalize(ts[0])
    return pair(ts[0], tup(*ts[1:]))


def nat_less(a: Term, b: Term) -> bool:
    if not (isinstance(a, Nat) and isinstance(b, Nat)):
        raise TypeError("nat_less expects Nat terms")
    if a.base != b.base:
        raise BaseMismatch(f"comparing counters of {a.base!r} and {b.base!r}")
    return a.offset < b.offset


def nat_increment(a: Term, k: int) -> Nat:
    if not isinstance(a, Nat):
        raise TypeError("nat_increment expects a Nat term")
    if k < 1:
        raise ValueError("increment must be >= 1")
    return Nat(a.base, a.offset + k)


def subterms(t: Term) -> Iterator[Term]:
    """All subterms, including t itself."""
    yield t
    if isinstance(t, App):
        for a in t.args:
            yield from subterms(a)
    elif isinstance(t, Xor):
        for p in t.parts:
            yield from subterms(p)


def xor_parts(t: Term) -> tuple[Term, ...]:
    """Summands of a normal-form term viewed as an XOR sum."""
    if isinstance(t, Xor):
        return t.parts
    if t == ZERO:
        return ()
    return (t,)


def render(t: Term) -> str:
    """Canonical text rendering used in exported traces."""
    if isinstance(t, Const):
        return t.label
    if isinstance(t, Name):
        return f"{t.label}#{t.id}"
    if isinstance(t, Nat):
        return f"sqn({t.base},+{t.offset})"
    if isinstance(t, App):
        return f"{t.symbol}({','.join(render(a) for a in t.args)})"
    return "xor{" + ",".join(render(p) for p in t.parts) + "}"
