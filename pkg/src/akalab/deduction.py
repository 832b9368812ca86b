"""Dolev-Yao attacker knowledge base with bounded deduction.

The knowledge base stores observed terms in normal form.  Saturation runs an
*analysis* fixpoint (pair projection, asymmetric decryption with a
constructible private key, XOR cancellation against constructible summands);
construction is performed on demand by ``derivable`` and is bounded by
``depth_bound``, the number of function applications the attacker may nest.
XOR combination is not counted against the depth bound.

XOR goals are decided exactly by Gaussian elimination over GF(2): a target is
derivable as an XOR sum iff it lies in the span of the known XOR-valued terms
plus the individually constructible summands.  This is the "goal-directed"
strategy: the eager closure only ever adds cancellations, never the quadratic
set of all pairwise XOR combinations.
"""

from __future__ import annotations

from typing import Iterable

from .terms import (
    CONSTRUCTORS,
    ZERO,
    App,
    Const,
    Name,
    Nat,
    Term,
    Xor,
    normalize,
    render,
    sort_key,
    xor,
    xor_parts,
)

DEFAULT_DEPTH_BOUND = 4


class KnowledgeBase:
    """Immutable attacker knowledge; mutation by replacement via observe()."""

    __slots__ = ("terms", "revealed_bases", "depth_bound", "_closure")

    def __init__(
        self,
        terms: Iterable[Term] = (),
        revealed_bases: Iterable[str] = (),
        depth_bound: int = DEFAULT_DEPTH_BOUND,
    ):
        self.terms = frozenset(normalize(t) for t in terms) | {ZERO}
        self.revealed_bases = frozenset(revealed_bases)
        self.depth_bound = depth_bound
        self._closure: frozenset[Term] | None = None

    def observe(self, *ts: Term) -> "KnowledgeBase":
        new = set(self.terms)
        new.update(normalize(t) for t in ts)
        return KnowledgeBase(new, self.revealed_bases, self.depth_bound)

    def reveal_base(self, base: str) -> "KnowledgeBase":
        return KnowledgeBase(self.terms, self.revealed_bases | {base}, self.depth_bound)

    def saturate(self) -> "KnowledgeBase":
        """Force the analysis closure; observable behavior of ``derivable``
        is unchanged (it saturates lazily anyway)."""
        self._ensure_closure()
        return self

    def closure(self) -> frozenset[Term]:
        return self._ensure_closure()

    def derivable(self, t: Term) -> bool:
        closure = self._ensure_closure()
        return _synth(normalize(t), closure, self.revealed_bases, self.depth_bound, frozenset())

    def digest(self) -> tuple:
        return (
            tuple(sorted(render(t) for t in self.terms)),
            tuple(sorted(self.revealed_bases)),
            self.depth_bound,
        )

    # -- analysis ----------------------------------------------------------

    def _ensure_closure(self) -> frozenset[Term]:
        if self._closure is not None:
            return self._closure
        closure = set(self.terms)
        changed = True
        while changed:
            changed = False
            for u in list(closure):
                for v in _analyze(u, closure, self.revealed_bases, self.depth_bound):
                    if v not in closure:
                        closure.add(v)
                        changed = True
            # Goal-directed XOR: combine known sums only when something
            # cancels (shared summand); never the full pairwise closure.
            xors = [u for u in closure if isinstance(u, Xor)]
            for i, u in enumerate(xors):
                pu = set(u.parts)
                for v in xors[i + 1:]:
                    if pu.isdisjoint(v.parts):
                        continue
                    w = normalize(xor(u, v))
                    if w not in closure:
                        closure.add(w)
                        changed = True
        self._closure = frozenset(closure)
        return self._closure


def _analyze(u: Term, closure: set[Term], bases: frozenset[str], depth: int):
    if isinstance(u, App):
        if u.symbol == "pair":
            yield u.args[0]
            yield u.args[1]
        elif u.symbol == "aenc":
            key = u.args[1]
            if isinstance(key, App) and key.symbol == "pk":
                sk = key.args[0]
                if _synth(sk, frozenset(closure), bases, depth, frozenset()):
                    yield u.args[0]
    elif isinstance(u, Xor):
        # Cancel any constructible summand out of a known XOR sum.
        for s in u.parts:
            if _synth(s, frozenset(closure), bases, depth, frozenset((u,))):
                yield normalize(xor(u, s))


def _synth(t: Term, closure: frozenset[Term], bases: frozenset[str], budget: int, seen: frozenset[Term]) -> bool:
    """Can the attacker construct t from the closure within budget?"""
    if t == ZERO or t in closure:
        return True
    if t in seen:
        return False
    if isinstance(t, Nat):
        return t.base in bases
    if isinstance(t, (Const, Name)):
        return False
    seen = seen | {t}
    if isinstance(t, App):
        if t.symbol not in CONSTRUCTORS:
            return False
        # Tupling is free; every other application costs one construction
        # level.  XOR combination (below) is likewise not depth-counted.
        cost = 0 if t.symbol == "pair" else 1
        if budget < cost:
            return False
        return all(_synth(a, closure, bases, budget - cost, seen) for a in t.args)
    return _xor_solve(t, closure, bases, budget, seen)


def _xor_solve(t: Xor, closure: frozenset[Term], bases: frozenset[str], budget: int, seen: frozenset[Term]) -> bool:
    """GF(2) span membership: target summands vs known XOR terms plus
    constructible unit summands."""
    universe: list[Term] = []
    index: dict[Term, int] = {}

    def bit(s: Term) -> int:
        if s not in index:
            index[s] = len(universe)
            universe.append(s)
        return 1 << index[s]

    def vec(parts: tuple[Term, ...]) -> int:
        v = 0
        for s in parts:
            v ^= bit(s)
        return v

    target = vec(t.parts)
    gens = [vec(u.parts) for u in closure if isinstance(u, Xor)]
    for s in list(universe):
        if _synth(s, closure, bases, budget, seen):
            gens.append(bit(s))

    # Gaussian elimination over GF(2).
    basis: list[int] = []
    for g in gens:
        for b in basis:
            g = min(g, g ^ b)
        if g:
            basis.append(g)
            basis.sort(reverse=True)
    for b in basis:
        target = min(target, target ^ b)
    return target == 0


# Module-level operation aliases matching the knowledge-base contract.


def observe(kb: KnowledgeBase, t: Term) -> KnowledgeBase:
    return kb.observe(t)


def saturate(kb: KnowledgeBase) -> KnowledgeBase:
    return kb.saturate()


def derivable(kb: KnowledgeBase, t: Term) -> bool:
    return kb.derivable(t)
