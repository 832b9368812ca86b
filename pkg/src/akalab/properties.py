"""Checkers for the security goals over recorded traces.

Claim conventions (see protocol.py): a commit by agent ``a`` (role A) about
peer ``b`` (role B) carries the roles tuple (A, B); its witnesses are running
claims by ``b`` about ``a`` tagged with the same roles tuple.  Checks are
prefix-closed: a commit counts only running claims that precede it.

Property identifiers (CLI syntax):
    secrecy:<item>            item in {kseaf, supi, k, skhn, sqn}
    pfs:kseaf                 secrecy of K_SEAF against post-session reveals
    aliveness:<A>:<B>
    weakagree:<A>:<B>
    niagree:<A>:<B>:<data>    data in {kseaf, supi, snname}
    inj:<A>:<B>:<data>
    linkability               the replay distinguisher (scripted, not searched)

``excused`` names reveal kinds that are assumptions of the property under
test: claims whose claimer or claimed peer was compromised by an excused
reveal are skipped (the standard honesty condition).  By default nothing is
excused, which is the attack-finding direction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

from .deduction import KnowledgeBase
from .terms import Term, render

ROLES = ("UE", "SN", "HN")
DATA_ITEMS = ("kseaf", "supi", "snname")
SECRET_ITEMS = ("kseaf", "supi", "k", "skhn", "sqn")


class PropertyParse(Exception):
    pass


@dataclass(frozen=True)
class PropertyId:
    kind: str  # secrecy | pfs | aliveness | weakagree | niagree | inj | linkability
    a: str = ""
    b: str = ""
    data: str = ""
    item: str = ""

    def __str__(self) -> str:
        if self.kind in ("secrecy", "pfs"):
            return f"{self.kind}:{self.item}"
        if self.kind == "linkability":
            return "linkability"
        if self.kind in ("aliveness", "weakagree"):
            return f"{self.kind}:{self.a}:{self.b}"
        return f"{self.kind}:{self.a}:{self.b}:{self.data}"


def parse_property(s: str) -> PropertyId:
    parts = s.strip().split(":")
    kind = parts[0]
    if kind == "linkability" and len(parts) == 1:
        return PropertyId("linkability")
    if kind in ("secrecy", "pfs") and len(parts) == 2:
        item = parts[1]
        if item not in SECRET_ITEMS or (kind == "pfs" and item != "kseaf"):
            raise PropertyParse(f"bad secrecy item {item!r}")
        return PropertyId(kind, item=item)
    if kind in ("aliveness", "weakagree") and len(parts) == 3:
        a, b = parts[1], parts[2]
        if a not in ROLES or b not in ROLES:
            raise PropertyParse(f"bad roles in {s!r}")
        return PropertyId(kind, a=a, b=b)
    if kind in ("niagree", "inj") and len(parts) == 4:
        a, b, data = parts[1], parts[2], parts[3]
        if a not in ROLES or b not in ROLES or data not in DATA_ITEMS:
            raise PropertyParse(f"bad agreement spec {s!r}")
        return PropertyId(kind, a=a, b=b, data=data)
    raise PropertyParse(f"cannot parse property {s!r}")


# -- helpers -----------------------------------------------------------------


def compromised_agents(events, excused: frozenset[str]) -> set[str]:
    out: set[str] = set()
    for e in events:
        if e.ev != "reveal":
            continue
        kind, target, _when = e.info.split(":")
        if kind in excused:
            out.add(target)
    return out


def _data_of(claim, item: str) -> Optional[Term]:
    if claim.data is None:
        return None
    for k, v in claim.data:
        if k == item:
            return v
    return None


def _runnings_before(events, idx: int):
    return [e.claim for e in events[:idx] if e.ev == "claim_running"]


def _commits(events, roles: tuple[str, str]):
    for i, e in enumerate(events):
        if e.ev == "claim_commit" and e.claim.roles == roles:
            yield i, e.claim


# -- secrecy ------------------------------------------------------------------


def check_secrecy(events, kb: KnowledgeBase, item: str, excused: frozenset[str] = frozenset()) -> bool:
    """True iff no claimed secret of this kind is derivable from ``kb`` (the
    attacker knowledge after the trace)."""
    comp = compromised_agents(events, excused)
    for e in events:
        if e.ev != "claim_secret" or e.claim.item != item:
            continue
        if e.claim.agent in comp:
            continue
        if kb.derivable(e.claim.term):
            return False
    return True


def secrecy_witness(events, kb: KnowledgeBase, item: str, excused: frozenset[str] = frozenset()) -> str:
    comp = compromised_agents(events, excused)
    for e in events:
        if e.ev != "claim_secret" or e.claim.item != item or e.claim.agent in comp:
            continue
        if kb.derivable(e.claim.term):
            return f"secret {item} of {e.claim.agent} derivable: {render(e.claim.term)}"
    return ""


# -- authentication hierarchy ---------------------------------------------------


def check_aliveness(events, a: str, b: str, excused: frozenset[str] = frozenset()) -> bool:
    return not aliveness_witness(events, a, b, excused)


def aliveness_witness(events, a: str, b: str, excused: frozenset[str] = frozenset()) -> str:
    comp = compromised_agents(events, excused)
    for i, c in _commits(events, (a, b)):
        if c.agent in comp or c.peer in comp:
            continue
        ok = any(r.agent == c.peer and r.roles[1] == b for r in _runnings_before(events, i))
        if not ok:
            return f"{c.agent} committed aliveness of {c.peer} ({a}->{b}) without any {b} run"
    return ""


def _agreement_witness(events, a: str, b: str, data: Optional[str], excused: frozenset[str]) -> str:
    comp = compromised_agents(events, excused)
    for i, c in _commits(events, (a, b)):
        if c.agent in comp or c.peer in comp:
            continue
        if not any(_matches(r, c, (a, b), data) for r in _runnings_before(events, i)):
            what = f"on {data}" if data else "(weak)"
            return f"commit by {c.agent} about {c.peer} ({a}->{b}) {what} has no matching run"
    return ""


def _matches(r, c, roles: tuple[str, str], data: Optional[str]) -> bool:
    if r.roles != roles or r.agent != c.peer or r.peer != c.agent:
        return False
    if data is None:
        return True
    dv, cv = _data_of(r, data), _data_of(c, data)
    return dv is not None and cv is not None and dv == cv


def check_weak_agreement(events, a: str, b: str, excused: frozenset[str] = frozenset()) -> bool:
    return not _agreement_witness(events, a, b, None, excused)


def check_ni_agreement(events, a: str, b: str, data: str, excused: frozenset[str] = frozenset()) -> bool:
    return not _agreement_witness(events, a, b, data, excused)


def check_inj_agreement(events, a: str, b: str, data: str, excused: frozenset[str] = frozenset()) -> bool:
    return not inj_agreement_witness(events, a, b, data, excused)


def inj_agreement_witness(events, a: str, b: str, data: str, excused: frozenset[str] = frozenset()) -> str:
    w = _agreement_witness(events, a, b, data, excused)
    if w:
        return w
    # Injectivity: each running claim is consumed by at most one commit
    # (maximal bipartite matching must cover every checked commit).
    comp = compromised_agents(events, excused)
    commits = [
        (i, c) for i, c in _commits(events, (a, b))
        if c.agent not in comp and c.peer not in comp
    ]
    runnings = [(i, e.claim) for i, e in enumerate(events) if e.ev == "claim_running"]
    cand: list[list[int]] = []
    for i, c in commits:
        cand.append([j for j, (ri, r) in enumerate(runnings) if ri < i and _matches(r, c, (a, b), data)])
    assign: dict[int, int] = {}

    def try_assign(ci: int, seen: set[int]) -> bool:
        for j in cand[ci]:
            if j in seen:
                continue
            seen.add(j)
            if j not in assign or try_assign(assign[j], seen):
                assign[j] = ci
                return True
        return False

    for ci in range(len(commits)):
        if not try_assign(ci, set()):
            c = commits[ci][1]
            return f"two commits ({a}->{b} on {data}) map to one run of {c.peer}"
    return ""


# -- prefix checking used by the bounded search ----------------------------------


def check_prefix(world, prop: str) -> str:
    """Violation witness for a property on the world's current trace prefix,
    or the empty string."""
    p = parse_property(prop)
    ev = world.events
    if p.kind in ("secrecy", "pfs"):
        return secrecy_witness(ev, world.kb, p.item)
    if p.kind == "aliveness":
        return aliveness_witness(ev, p.a, p.b)
    if p.kind == "weakagree":
        return _agreement_witness(ev, p.a, p.b, None, frozenset())
    if p.kind == "niagree":
        return _agreement_witness(ev, p.a, p.b, p.data, frozenset())
    if p.kind == "inj":
        return inj_agreement_witness(ev, p.a, p.b, p.data)
    raise PropertyParse(f"property {prop!r} is not trace-checkable")


# -- the replay distinguisher -------------------------------------------------


@dataclass
class DistinguisherResult:
    same_world_response: str
    diff_world_response: str
    distinguished: bool


def run_linkability_distinguisher(fixes=None, seed: int = 0) -> DistinguisherResult:
    """Two scripted worlds: record a challenge from a completed session, then
    replay it to the previously observed subscriber (SAME) and to a different
    subscriber (DIFF); the two failure messages are the distinguisher."""
    from . import engine as E
    from . import protocol as P

    fixes = fixes or P.FixToggles()

    def failure_kind(world: E.World) -> str:
        fails = [m for m in world.messages.values()
                 if m.mtype == E.FAIL and m.session == 1]
        if not fails:
            return "none"
        t = fails[-1].term
        if t == P.MAC_FAILURE:
            return "mac_failure"
        return "sync_failure"

    script = [
        {"honest": 4},
        {"drop": {"mtype": E.AUTHREQ, "session": 1}},
        {"drain": True},
        {"replay": {"mtype": E.CHAL, "session": 0, "to_session": 1}},
    ]

    def world_with(plan: tuple[tuple[int, int], ...], n_subs: int) -> E.World:
        cfg = E.ScenarioConfig(
            n_subscribers=n_subs, n_sns=1, n_hns=1, n_sessions=2,
            session_plan=plan, fixes=fixes, seed=seed,
        )
        w, _trace = E.scripted_run(cfg, script)
        return w

    same = failure_kind(world_with(((0, 0), (0, 0)), 1))
    diff = failure_kind(world_with(((0, 0), (1, 0)), 2))
    return DistinguisherResult(same, diff, distinguished=(same != diff))
