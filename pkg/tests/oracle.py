"""Independent brute-force deduction oracle.

Deliberately naive: the attacker knowledge is closed under pair projection,
decryption, and the XOR of *every* pair of known terms (iterated to a
fixpoint, i.e. the whole GF(2) span), and goals are decided by recursive
decomposition with single-residual XOR steps.  No goal-directed pruning, no
elimination; this is the second, dumb route the engine is checked against.
Only viable on small universes, which is all it is for.
"""

from __future__ import annotations

from akalab.terms import (
    CONSTRUCTORS,
    ZERO,
    App,
    Const,
    Name,
    Nat,
    Term,
    Xor,
    normalize,
    xor,
)


def naive_closure(terms, revealed_bases, depth_bound: int, cap: int = 3000) -> set[Term]:
    known: set[Term] = {normalize(t) for t in terms} | {ZERO}
    while True:
        added: set[Term] = set()
        for u in known:
            if isinstance(u, App) and u.symbol == "pair":
                added.update(u.args)
            elif isinstance(u, App) and u.symbol == "aenc":
                key = u.args[1]
                if (
                    isinstance(key, App)
                    and key.symbol == "pk"
                    and naive_derivable_in(key.args[0], known, revealed_bases, depth_bound)
                ):
                    added.add(u.args[0])
        for u in list(known):
            for v in list(known):
                added.add(normalize(xor(u, v)))
        added -= known
        if not added:
            return known
        known |= added
        if len(known) > cap:
            raise RuntimeError("oracle universe blew past its cap")


def naive_derivable_in(goal: Term, known: set[Term], revealed_bases, depth_bound: int) -> bool:
    """Decide one goal.  Because the closure is span-complete, an XOR goal
    needs at most one residual step against a known term before falling back
    to summand-wise construction.  Results are memoized unless a cycle cut
    made them provisional."""
    memo: dict[tuple[Term, int], bool] = {}

    def go(t: Term, budget: int, stack: frozenset) -> tuple[bool, bool]:
        t = normalize(t)
        if t == ZERO or t in known:
            return True, True
        key = (t, budget)
        if key in memo:
            return memo[key], True
        if t in stack:
            return False, False
        clean = True

        def note(result: bool, ok: bool) -> bool:
            if ok or result:  # positive results never depend on a cycle cut
                memo[key] = result
            return result

        if isinstance(t, Nat):
            return note(t.base in revealed_bases, True), True
        if isinstance(t, (Const, Name)):
            return note(False, True), True
        stack = stack | {t}
        if isinstance(t, App):
            if t.symbol not in CONSTRUCTORS:
                return note(False, True), True
            cost = 0 if t.symbol == "pair" else 1
            if budget < cost:
                return note(False, True), True
            out = True
            for a in t.args:
                r, ok = go(a, budget - cost, stack)
                clean = clean and ok
                if not r:
                    out = False
                    break
            return note(out, clean), clean

        def parts_ok(parts) -> bool:
            nonlocal clean
            for p in parts:
                r, ok = go(p, budget, stack)
                clean = clean and ok
                if not r:
                    return False
            return True

        if parts_ok(t.parts):
            return note(True, clean), clean
        for u in known:
            residual = normalize(xor(t, u))
            if residual == t:
                continue
            if residual == ZERO:
                return note(True, clean), clean
            if isinstance(residual, Xor):
                if parts_ok(residual.parts):
                    return note(True, clean), clean
            else:
                r, ok = go(residual, budget, stack)
                clean = clean and ok
                if r:
                    return note(True, clean), clean
        return note(False, clean), clean

    def top(t: Term, budget: int) -> bool:
        t = normalize(t)
        r, _ = go(t, budget, frozenset())
        if r or isinstance(t, Xor):
            return r
        # A non-XOR goal can still drop out of a known XOR sum once the
        # remaining summands are buildable.
        for u in known:
            if not isinstance(u, Xor) or t not in u.parts:
                continue
            residual = normalize(xor(t, u))
            rr, _ = go(residual, budget, frozenset((t,)))
            if residual == ZERO or rr:
                return True
        return False

    return top(goal, depth_bound)


def naive_derivable(kb_terms, revealed_bases, goal: Term, depth_bound: int) -> bool:
    known = naive_closure(kb_terms, revealed_bases, depth_bound)
    return naive_derivable_in(goal, known, revealed_bases, depth_bound)
