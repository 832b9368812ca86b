"""Scenario engine: role instances wired over modeled channels, compromise
reveals, deterministic honest/scripted execution, bounded attacker search,
and trace replay.

Channels:
  * radio (UE <-> SN): the attacker observes every message and chooses
    deliveries; redirects, replays, and forged injections are search moves
    charged against the injection budget.
  * SN-HN: confidential, authentic, replay-protected, type-tagged.  With
    ``channel_binding`` off, pending messages of the same pair, direction,
    and type may be delivered to a concurrent session's handler (the
    permutation move).  A compromised SN exposes its channel endpoint: the
    attacker reads everything on it and may inject.

A World is a value; search branches clone it.  All iteration orders are
deterministic, so any trace replays to the identical event sequence.
"""

from __future__ import annotations

import copy
import time
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

from . import protocol as P
from .deduction import KnowledgeBase
from .terms import (
    App, Const, Name, Nat, Term, app, nat_increment, normalize, pair, render,
    sort_key, tup,
)

# Radio message types.
REQ, SUCI, CHAL, RESP, FAIL, SNCONF, UECONF = "req", "suci", "chal", "resp", "fail", "snconf", "ueconf"
# SN-HN message types (the channel's type tags).
AUTHREQ, AV, RESFWD, FINAL, RESYNC = "authreq", "av", "resfwd", "final", "resync"

_UE_SLOT_TYPES = {
    P.UEPhase.IDLE: (REQ,),
    P.UEPhase.AWAIT_CHALLENGE: (CHAL,),
    P.UEPhase.AWAIT_KEYCONF: (SNCONF,),
}
_SN_SLOT_TYPES = {
    P.SNPhase.AWAIT_SUCI: (SUCI,),
    P.SNPhase.AWAIT_UE_RESPONSE: (RESP, FAIL),
    P.SNPhase.AWAIT_KEYCONF: (UECONF,),
}


class ConfigInvalid(Exception):
    pass


class ScriptInvalid(Exception):
    pass


class TraceDiverged(Exception):
    pass


@dataclass(frozen=True)
class Reveal:
    kind: str  # "k" | "skhn" | "supi" | "sqn" | "sn"
    target: str
    when: str = "start"  # "start" | "post_session"


@dataclass(frozen=True)
class Bounds:
    max_steps: int = 60
    max_injections: int = 3
    deduction_depth: int = 4


@dataclass(frozen=True)
class ScenarioConfig:
    n_subscribers: int = 1
    n_sns: int = 1
    n_hns: int = 1
    n_sessions: int = 1
    reveals: tuple[Reveal, ...] = ()
    channel_binding: bool = True
    fixes: P.FixToggles = P.FixToggles()
    bounds: Bounds = Bounds()
    seed: int = 0
    # Optional explicit (subscriber index, SN index) per session; defaults to
    # round-robin assignment.
    session_plan: Optional[tuple[tuple[int, int], ...]] = None

    def validate(self) -> None:
        if self.n_sessions < 1:
            raise ConfigInvalid("n_sessions must be >= 1")
        if min(self.n_subscribers, self.n_sns, self.n_hns) < 1:
            raise ConfigInvalid("need at least one of each role")
        b = self.bounds
        if min(b.max_steps, b.deduction_depth) < 1 or b.max_injections < 0:
            raise ConfigInvalid("bounds out of range")
        for r in self.reveals:
            if r.kind not in ("k", "skhn", "supi", "sqn", "sn"):
                raise ConfigInvalid(f"unknown reveal kind {r.kind!r}")
            if r.when not in ("start", "post_session"):
                raise ConfigInvalid(f"unknown reveal time {r.when!r}")

    def plan(self) -> tuple[tuple[int, int], ...]:
        if self.session_plan is not None:
            return self.session_plan
        return tuple(
            (i % self.n_subscribers, i % self.n_sns) for i in range(self.n_sessions)
        )


@dataclass(frozen=True)
class Event:
    n: int
    ev: str
    actor: str = ""
    channel: str = ""
    mtype: str = ""
    term: Optional[Term] = None
    to: str = ""
    claim: Optional[P.Claim] = None
    info: str = ""


@dataclass
class Trace:
    events: list[Event]
    decisions: list[dict]
    violation: str = ""


@dataclass
class Verdict:
    prop: str
    outcome: str  # "attack" | "no_attack"
    trace: Optional[Trace] = None
    stats: dict = field(default_factory=dict)

    @property
    def attack_found(self) -> bool:
        return self.outcome == "attack"


@dataclass(frozen=True)
class Msg:
    mid: int
    channel: str  # "radio" | "snhn"
    mtype: str
    term: Term
    sender: str
    session: int = -1  # owning world session index (natural correlation)
    sn: str = ""
    hn: str = ""
    direction: str = ""  # snhn only: "sn2hn" | "hn2sn"


def _suci_component(mtype: str, term: Term) -> Optional[Term]:
    """The concealed identity inside a response-forward or resync message."""
    try:
        if mtype == RESFWD:
            return term.args[1]
        if mtype == RESYNC:
            return term.args[1].args[1].args[1]
    except (AttributeError, IndexError):
        return None
    return None


class World:
    """Mutable scenario state built from immutable pieces; clone() is cheap."""

    def __init__(self, cfg: ScenarioConfig):
        cfg.validate()
        self.cfg = cfg
        self.subs = [f"ue{i+1}" for i in range(cfg.n_subscribers)]
        self.sns = [f"sn{i+1}" for i in range(cfg.n_sns)]
        self.hns = [f"hn{i+1}" for i in range(cfg.n_hns)]
        # Fresh names are drawn per context label so that logically equal
        # states reached through different interleavings carry identical
        # terms (this is what makes duplicate pruning effective).
        self.fresh_counts: dict[str, int] = {}
        self.seed = cfg.seed
        self.events: list[Event] = []
        self.decisions: list[dict] = []
        self.messages: dict[int, Msg] = {}
        self.radio_pending: list[int] = []
        self.radio_recorded: list[int] = []
        self.snhn_pending: list[int] = []
        self.injections = 0
        self.steps = 0
        self.seen_rs: list[Term] = []
        self.max_sqn: dict[str, int] = {}
        self.done_reveals: set[int] = set()

        # Long-term material.
        self.hn_states: dict[str, P.HNState] = {}
        hn_of_sub = {s: self.hns[i % len(self.hns)] for i, s in enumerate(self.subs)}
        self.records: dict[str, P.SubscriberRecord] = {}
        for hn in self.hns:
            self.hn_states[hn] = P.HNState(hn=hn, sk=self.fresh(f"sk_{hn}"))
        for s in self.subs:
            hn = hn_of_sub[s]
            k = self.fresh(f"K_{s}")
            self.records[s] = P.SubscriberRecord(
                sub=s, supi=P.supi_term(s, hn), k=k, sqn=Nat(s, 0), home=hn
            )
            self.hn_states[hn] = self.hn_states[hn].with_entry(
                s, P.HNSubscriberEntry(k, Nat(s, 1))
            )
            self.max_sqn[s] = 1
        self.sn_states: dict[str, P.SNState] = {
            sn: P.SNState(sn=sn, sn_name=P.snname_const(sn), home=self.hns[0])
            for sn in self.sns
        }

        # Sessions: UE role instance plus an SN session per planned session.
        self.plan = cfg.plan()
        self.ue_sessions: list[P.UEState] = []
        self.compromised: set[str] = set()
        self.corr: dict[tuple[str, str, int], int] = {}

        # Attacker initial knowledge: tags, identities, public keys, a few
        # attacker-fresh nonces.
        seeds: list[Term] = [
            P.MAC_FAILURE, P.SYNC_FAILURE, P.AUTH_REQUEST, P.UE_CONF, P.SN_CONF,
        ]
        seeds += [P.idhn_const(h) for h in self.hns]
        seeds += [P.snname_const(s) for s in self.sns]
        seeds += [app("pk", self.hn_states[h].sk) for h in self.hns]
        self.att_nonces = [self.fresh(f"att{i+1}") for i in range(3)]
        seeds += self.att_nonces
        self.kb = KnowledgeBase(seeds, (), cfg.bounds.deduction_depth)

        # Setup secrecy claims.
        for s in self.subs:
            rec = self.records[s]
            for c in (
                P.secret(s, "k", rec.k),
                P.secret(s, "supi", rec.supi),
                P.secret(s, "sqn", rec.sqn),
            ):
                self.add_claim(c)
        for hn in self.hns:
            self.add_claim(P.secret(hn, "skhn", self.hn_states[hn].sk))
            for s, e in self.hn_states[hn].subscribers:
                self.add_claim(P.secret(hn, "k", e.k))
                self.add_claim(P.secret(hn, "supi", self.records[s].supi))

        # Static reveals.
        for i, r in enumerate(cfg.reveals):
            if r.when == "start":
                self.apply_reveal(i)

        # Open all planned sessions: the SN-side request triggers each UE.
        for i, (sub_i, sn_i) in enumerate(self.plan):
            sub, sn = self.subs[sub_i], self.sns[sn_i]
            rec = self.records[sub]
            self.ue_sessions.append(
                P.UEState(
                    record=rec,
                    pk_hn=app("pk", self.hn_states[rec.home].sk),
                    sn_name=P.snname_const(sn),
                )
            )
            st2, req = P.sn_open_session(self.sn_states[sn], i)
            self.sn_states[sn] = st2
            self.send_radio(REQ, req, sender=sn, session=i)

    # -- plumbing ---------------------------------------------------------

    def fresh(self, label: str) -> Name:
        n = self.fresh_counts.get(label, 0) + 1
        self.fresh_counts[label] = n
        return Name(self.seed * 1000 + n, label)

    def clone(self) -> "World":
        w = object.__new__(World)
        w.__dict__.update(self.__dict__)
        for attr in (
            "events", "decisions", "radio_pending", "radio_recorded",
            "snhn_pending", "ue_sessions", "seen_rs",
        ):
            setattr(w, attr, list(getattr(self, attr)))
        w.messages = dict(self.messages)
        w.records = dict(self.records)
        w.sn_states = dict(self.sn_states)
        w.hn_states = dict(self.hn_states)
        w.max_sqn = dict(self.max_sqn)
        w.corr = dict(self.corr)
        w.compromised = set(self.compromised)
        w.done_reveals = set(self.done_reveals)
        w.fresh_counts = dict(self.fresh_counts)
        return w

    def event(self, ev: str, **kw) -> None:
        self.events.append(Event(n=len(self.events), ev=ev, **kw))

    def add_claim(self, claim: P.Claim) -> None:
        self.event(f"claim_{claim.kind}", actor=claim.agent, claim=claim, term=claim.term)

    def add_claims(self, claims: Iterable[P.Claim]) -> None:
        for c in claims:
            self.add_claim(c)

    def sub_of_session(self, i: int) -> str:
        return self.subs[self.plan[i][0]]

    def sn_of_session(self, i: int) -> str:
        return self.sns[self.plan[i][1]]

    # -- sending ----------------------------------------------------------

    def _new_msg(self, **kw) -> Msg:
        mid = len(self.messages)
        m = Msg(mid=mid, **kw)
        self.messages[mid] = m
        return m

    def send_radio(self, mtype: str, term: Term, sender: str, session: int) -> None:
        term = normalize(term)
        m = self._new_msg(channel="radio", mtype=mtype, term=term, sender=sender, session=session)
        self.radio_pending.append(m.mid)
        self.radio_recorded.append(m.mid)
        self.kb = self.kb.observe(term)
        if mtype == CHAL and isinstance(term, App):
            self.seen_rs.append(term.args[0])
        self.event("send", actor=sender, channel="radio", mtype=mtype, term=term)

    def send_snhn(self, mtype: str, term: Term, sender: str, session: int, sn: str, hn: str, direction: str) -> None:
        term = normalize(term)
        m = self._new_msg(
            channel="snhn", mtype=mtype, term=term, sender=sender,
            session=session, sn=sn, hn=hn, direction=direction,
        )
        self.snhn_pending.append(m.mid)
        if sn in self.compromised:
            self.kb = self.kb.observe(term)
        if mtype == AV and isinstance(term, App):
            self.seen_rs.append(term.args[0])
        self.event("send", actor=sender, channel=f"snhn:{sn}-{hn}", mtype=mtype, term=term)

    # -- reveals ------------------------------------------------------------

    def apply_reveal(self, idx: int) -> None:
        r = self.cfg.reveals[idx]
        self.done_reveals.add(idx)
        if r.kind == "k":
            self.kb = self.kb.observe(self.records[r.target].k)
        elif r.kind == "skhn":
            self.kb = self.kb.observe(self.hn_states[r.target].sk)
        elif r.kind == "supi":
            self.kb = self.kb.observe(self.records[r.target].supi)
        elif r.kind == "sqn":
            self.kb = self.kb.reveal_base(r.target)
        elif r.kind == "sn":
            self.compromised.add(r.target)
        self.event("reveal", actor=r.target, info=f"{r.kind}:{r.target}:{r.when}")

    # -- receive slots -------------------------------------------------------

    def radio_slots(self) -> list[tuple]:
        """(kind, session index, accepted mtypes).  kind is 'ue' or 'sn'."""
        slots = []
        for i, ue in enumerate(self.ue_sessions):
            types = _UE_SLOT_TYPES.get(ue.phase)
            if types:
                slots.append(("ue", i, types))
        for i in range(len(self.plan)):
            sn = self.sn_of_session(i)
            try:
                sess = self.sn_states[sn].session(i)
            except P.UnknownSession:
                continue
            types = _SN_SLOT_TYPES.get(sess.phase)
            if types:
                slots.append(("sn", i, types))
        return slots

    def snhn_targets(self, m: Msg) -> list[tuple]:
        """Delivery targets for an SN-HN message: the natural (correlated)
        one first, then same-pair same-type permutations when non-binding.

        Responses and re-synchronization messages carry the SUCI, which the
        HN uses to locate the subscriber session; permutations can therefore
        only confuse sessions of the same concealed identity.  The vector and
        final messages carry nothing the receiving SN can correlate (that gap
        is the point of the binding discussion), so they may cross sessions
        freely on a non-binding channel."""
        natural: list[tuple] = []
        alts: list[tuple] = []
        if m.direction == "sn2hn":
            if m.mtype == AUTHREQ:
                return [("hn", m.hn, -1)]
            suci = _suci_component(m.mtype, m.term)
            hn_st = self.hn_states[m.hn]
            nat_hsid = self.corr.get((m.sn, m.hn, m.session))
            for sess in hn_st.sessions:
                if sess.phase != P.HNPhase.AWAIT_RESPONSE or sess.sn_name.label != f"snname:{m.sn}":
                    continue
                if suci is not None and sess.suci != suci:
                    continue
                tgt = ("hn", m.hn, sess.hsid)
                (natural if sess.hsid == nat_hsid else alts).append(tgt)
        else:
            want = {AV: P.SNPhase.AWAIT_HN_CHALLENGE, FINAL: P.SNPhase.AWAIT_HN_CONFIRM}[m.mtype]
            for sess in self.sn_states[m.sn].sessions:
                if sess.phase != want:
                    continue
                tgt = ("sn", m.sn, sess.sid)
                (natural if sess.sid == m.session else alts).append(tgt)
        if self.cfg.channel_binding:
            return natural
        return natural + alts

    # -- delivery handlers ----------------------------------------------------

    def deliver_radio(self, mid: int, slot: tuple, counted: bool) -> bool:
        m = self.messages[mid]
        kind, i, types = slot
        if m.mtype not in types:
            return False
        if counted:
            # Replay/redirect: the attacker re-emits a recorded term; the
            # original in-flight copy, if any, stays deliverable.
            self.injections += 1
            if not self.kb.derivable(m.term):
                raise AssertionError("injected term not derivable")  # engine bug
            self.event("inject", channel="radio", mtype=m.mtype, term=m.term,
                       to=f"{kind}:{i}")
        elif mid in self.radio_pending:
            self.radio_pending.remove(mid)
        self.event("deliver", channel="radio", mtype=m.mtype, term=m.term,
                   to=f"{kind}:{i}")
        if kind == "ue":
            return self._ue_receive(i, m)
        return self._sn_receive_radio(i, m)

    def inject_radio(self, term: Term, mtype: str, slot: tuple) -> bool:
        term = normalize(term)
        if not self.kb.derivable(term):
            raise AssertionError("forged term not derivable")
        self.injections += 1
        kind, i, types = slot
        self.event("inject", channel="radio", mtype=mtype, term=term, to=f"{kind}:{i}")
        m = self._new_msg(channel="radio", mtype=mtype, term=term, sender="attacker", session=-1)
        self.radio_recorded.append(m.mid)
        if kind == "ue":
            return self._ue_receive(i, m)
        return self._sn_receive_radio(i, m)

    def _ue_receive(self, i: int, m: Msg) -> bool:
        ue = replace(self.ue_sessions[i], record=self.records[self.sub_of_session(i)])
        sub = ue.record.sub
        fixes = self.cfg.fixes
        if m.mtype == REQ and ue.phase == P.UEPhase.IDLE:
            ue2, suci = P.ue_make_suci(ue, self.fresh(f"rs_{sub}_s{i}"))
            self._commit_ue(i, ue2)
            self.send_radio(SUCI, suci, sender=sub, session=i)
            return True
        if m.mtype == CHAL and ue.phase == P.UEPhase.AWAIT_CHALLENGE:
            t = m.term
            if not (isinstance(t, App) and t.symbol == "pair"):
                return False
            r, autn = t.args
            ue2, verdict, reply, claims = P.ue_check_challenge(ue, r, autn, fixes)
            self._commit_ue(i, ue2)
            self.add_claims(claims)
            if verdict == P.UEVerdict.ACCEPT:
                self.max_sqn[sub] = max(self.max_sqn[sub], ue2.record.sqn.offset)
                self.send_radio(RESP, reply, sender=sub, session=i)
            else:
                self.send_radio(FAIL, reply, sender=sub, session=i)
            return True
        if m.mtype == SNCONF and ue.phase == P.UEPhase.AWAIT_KEYCONF:
            ue2, ok, claims = P.ue_check_keyconf(ue, m.term)
            self._commit_ue(i, ue2)
            self.add_claims(claims)
            if not ok:
                self.event("note", actor=sub, info=f"session {i} keyconf rejected")
            elif fixes.key_confirmation and not fixes.unidirectional_keyconf:
                self.send_radio(UECONF, P.keyconf_step(ue2, "ue_to_sn"), sender=sub, session=i)
            return True
        return False

    def _commit_ue(self, i: int, ue: P.UEState) -> None:
        self.ue_sessions[i] = ue
        self.records[ue.record.sub] = ue.record

    def _sn_receive_radio(self, i: int, m: Msg) -> bool:
        sn = self.sn_of_session(i)
        st = self.sn_states[sn]
        sess = st.session(i)
        if m.mtype == SUCI and sess.phase == P.SNPhase.AWAIT_SUCI:
            st2, authreq = P.sn_on_suci(st, i, m.term)
            self.sn_states[sn] = st2
            hn = self._hn_of_suci(m.term) or st.home
            self.send_snhn(AUTHREQ, authreq, sender=sn, session=i, sn=sn, hn=hn, direction="sn2hn")
            return True
        if sess.phase == P.SNPhase.AWAIT_UE_RESPONSE and m.mtype in (RESP, FAIL):
            if m.mtype == RESP:
                st2, ok = P.sn_check_response(st, i, m.term)
                self.sn_states[sn] = st2
                if ok:
                    fwd, claims = P.sn_forward_response(st2, i, m.term)
                    self.add_claims(claims)
                    hn = self._hn_of_suci(sess.suci) or st.home
                    self.send_snhn(RESFWD, fwd, sender=sn, session=i, sn=sn, hn=hn, direction="sn2hn")
                else:
                    self.event("note", actor=sn, info=f"session {i} aborted: bad RES*")
                return True
            # Failure messages: MAC failure aborts; sync failure forwards AUTS.
            t = m.term
            if t == P.MAC_FAILURE:
                self.sn_states[sn] = st.with_session(replace(sess, phase=P.SNPhase.ABORTED))
                self.event("note", actor=sn, info=f"session {i} aborted: mac failure")
                return True
            if isinstance(t, App) and t.symbol == "pair" and t.args[0] == P.SYNC_FAILURE:
                auts = t.args[1]
                self.sn_states[sn] = st.with_session(replace(sess, phase=P.SNPhase.ABORTED))
                hn = self._hn_of_suci(sess.suci) or st.home
                self.send_snhn(
                    RESYNC, tup(P.SYNC_FAILURE, auts, sess.r, sess.suci),
                    sender=sn, session=i, sn=sn, hn=hn, direction="sn2hn",
                )
                return True
            return False
        if m.mtype == UECONF and sess.phase == P.SNPhase.AWAIT_KEYCONF:
            st2, ok = P.sn_check_keyconf(st, i, m.term)
            self.sn_states[sn] = st2
            self.event("note", actor=sn, info=f"session {i} keyconf {'ok' if ok else 'failed'}")
            return True
        return False

    def _hn_of_suci(self, suci: Term) -> Optional[str]:
        if isinstance(suci, App) and suci.symbol == "pair":
            tag = suci.args[1]
            if isinstance(tag, Const) and tag.label.startswith("idhn:"):
                hn = tag.label.split(":", 1)[1]
                if hn in self.hn_states:
                    return hn
        return None

    def deliver_snhn(self, mid: int, target: tuple, *, injected_term: Optional[Term] = None) -> bool:
        if injected_term is None:
            m = self.messages[mid]
            if self.cfg.channel_binding:
                nat = self.snhn_targets(m)
                assert target in nat, "binding channel never reorders across sessions"
            self.snhn_pending.remove(mid)
        else:
            m = self.messages[mid]
        self.event("deliver", channel=f"snhn:{m.sn}-{m.hn}", mtype=m.mtype, term=m.term,
                   to=":".join(str(x) for x in target))
        kind = target[0]
        if kind == "hn":
            return self._hn_receive(m, target[2])
        return self._sn_receive_snhn(m, target[2])

    def _hn_receive(self, m: Msg, hsid: int) -> bool:
        hn = self.hn_states[m.hn]
        fixes = self.cfg.fixes
        if m.mtype == AUTHREQ:
            t = m.term
            if not (isinstance(t, App) and t.symbol == "pair"):
                return False
            suci = t.args[0]
            try:
                sub, supi = P.hn_decrypt_suci(hn, suci)
            except P.UnknownSubscriber:
                self.event("note", actor=m.hn, info="authreq dropped: unknown subscriber")
                return True
            # SNname is trusted from the channel endpoint, not message content.
            sn_name = P.snname_const(m.sn)
            hn2, sess, av, claims = P.hn_make_challenge(
                hn, supi, sn_name, self.fresh(f"R_{m.hn}_s{m.session}"), fixes, suci,
                hsid=m.session,
            )
            self.hn_states[m.hn] = hn2
            self.max_sqn[sub] = max(self.max_sqn[sub], hn2.entry(sub).sqn_hn.offset)
            self.add_claims(claims)
            self.corr[(m.sn, m.hn, m.session)] = sess.hsid
            self.send_snhn(AV, av, sender=m.hn, session=m.session, sn=m.sn, hn=m.hn, direction="hn2sn")
            return True
        if m.mtype == RESFWD:
            t = m.term
            if not (isinstance(t, App) and t.symbol == "pair"):
                return False
            res_star = t.args[0]
            try:
                if hn.session(hsid).suci != _suci_component(RESFWD, t):
                    self.event("note", actor=m.hn, info=f"hn session {hsid}: SUCI mismatch")
                    return True
                hn2, final, claims = P.hn_check_response(hn, hsid, res_star, fixes)
            except P.Mismatch:
                self.event("note", actor=m.hn, info=f"hn session {hsid}: RES* mismatch")
                return True
            except (P.UnknownSession, P.WrongPhase):
                return False
            self.hn_states[m.hn] = hn2
            self.add_claims(claims)
            sn_sid = self._sn_session_of(m.sn, m.hn, hsid, m.session)
            self.send_snhn(FINAL, final, sender=m.hn, session=sn_sid, sn=m.sn, hn=m.hn, direction="hn2sn")
            return True
        if m.mtype == RESYNC:
            t = m.term
            try:
                _tag, rest = t.args
                auts, _rest = rest.args
            except (AttributeError, ValueError):
                return False
            try:
                if hn.session(hsid).suci != _suci_component(RESYNC, t):
                    self.event("note", actor=m.hn, info=f"hn session {hsid}: SUCI mismatch")
                    return True
                hn2, ok, claims = P.hn_resync(hn, hsid, auts)
            except (P.UnknownSession, P.UnknownSubscriber):
                return False
            self.hn_states[m.hn] = hn2
            self.add_claims(claims)
            if ok:
                sub = P.subscriber_of_supi(hn2.session(hsid).supi)
                self.max_sqn[sub] = max(self.max_sqn[sub], hn2.entry(sub).sqn_hn.offset)
            self.event("note", actor=m.hn, info=f"resync {'accepted' if ok else 'rejected'}")
            return True
        return False

    def _sn_session_of(self, sn: str, hn: str, hsid: int, default: int) -> int:
        for (s, h, sid), hid in self.corr.items():
            if (s, h, hid) == (sn, hn, hsid):
                return sid
        return default

    def _sn_receive_snhn(self, m: Msg, sid: int) -> bool:
        sn_st = self.sn_states[m.sn]
        fixes = self.cfg.fixes
        if m.mtype == AV:
            try:
                st2, chal, claims = P.sn_on_challenge(sn_st, sid, m.term, fixes)
            except (P.UnknownSession, P.WrongPhase):
                return False
            self.sn_states[m.sn] = st2
            self.add_claims(claims)
            self.send_radio(CHAL, chal, sender=m.sn, session=sid)
            return True
        if m.mtype == FINAL:
            try:
                st2, ok, claims = P.sn_on_final(sn_st, sid, m.term, fixes)
            except (P.UnknownSession, P.WrongPhase):
                return False
            self.sn_states[m.sn] = st2
            self.add_claims(claims)
            if not ok:
                self.event("note", actor=m.sn, info=f"session {sid} rejected final message")
                return True
            if fixes.key_confirmation:
                sess = st2.session(sid)
                self.send_radio(SNCONF, P.keyconf_step(sess, "sn_to_ue"), sender=m.sn, session=sid)
            return True
        return False

    # -- digest for duplicate pruning -----------------------------------------

    def digest(self) -> int:
        """Structural hash for duplicate pruning: role states, pending
        messages, attacker knowledge, emitted claims, spent budget."""
        ue = tuple(self.ue_sessions)
        sn = tuple(st for _, st in sorted(self.sn_states.items()))
        hn = tuple(st for _, st in sorted(self.hn_states.items()))
        pend = tuple(sorted(
            ((m := self.messages[mid]).channel, m.mtype, sort_key(m.term), m.session)
            for mid in self.radio_pending + self.snhn_pending
        ))
        claims = frozenset(e.claim for e in self.events if e.claim is not None)
        return hash((ue, sn, hn, pend, claims, self.kb.terms,
                     self.kb.revealed_bases, self.injections,
                     tuple(sorted(self.done_reveals))))


# -- initialization and honest/scripted execution ------------------------------


def init_world(cfg: ScenarioConfig) -> World:
    return World(cfg)


def natural_radio_slot(w: World, m: Msg) -> Optional[tuple]:
    """The slot a radio message was aimed at, if still receptive."""
    for slot in w.radio_slots():
        kind, i, types = slot
        if i != m.session or m.mtype not in types:
            continue
        # SN-originated messages go to the session's UE and vice versa.
        if m.mtype in (REQ, CHAL, SNCONF) and kind == "ue":
            return slot
        if m.mtype in (SUCI, RESP, FAIL, UECONF) and kind == "sn":
            return slot
    return None


def natural_actions(w: World) -> list[dict]:
    acts = []
    for mid in w.radio_pending:
        slot = natural_radio_slot(w, w.messages[mid])
        if slot is not None:
            acts.append({"a": "deliver_radio", "mid": mid, "slot": list(slot[:2])})
    for mid in w.snhn_pending:
        m = w.messages[mid]
        targets = w.snhn_targets(m)
        nat = _natural_snhn_target(w, m, targets)
        if nat is not None:
            acts.append({"a": "deliver_snhn", "mid": mid, "target": list(nat)})
    return acts


def _natural_snhn_target(w: World, m: Msg, targets: list[tuple]) -> Optional[tuple]:
    if not targets:
        return None
    if m.direction == "sn2hn":
        if m.mtype == AUTHREQ:
            return targets[0]
        nat_hsid = w.corr.get((m.sn, m.hn, m.session))
        for t in targets:
            if t[2] == nat_hsid:
                return t
    else:
        for t in targets:
            if t[2] == m.session:
                return t
    return None


def apply_action(w: World, act: dict) -> bool:
    """Applies one scheduler/attacker action; returns False for a no-op."""
    a = act["a"]
    w.decisions.append(act)
    w.steps += 1
    if a == "deliver_radio":
        slot = _find_radio_slot(w, act["slot"])
        if slot is None:
            return False
        counted = act.get("counted", False)
        return w.deliver_radio(act["mid"], slot, counted)
    if a == "inject_radio":
        slot = _find_radio_slot(w, act["slot"])
        if slot is None:
            return False
        return w.inject_radio(act["term"], act["mtype"], slot)
    if a == "deliver_snhn":
        return w.deliver_snhn(act["mid"], tuple(act["target"]))
    if a == "inject_snhn":
        return _inject_snhn(w, act)
    if a == "reveal":
        w.apply_reveal(act["idx"])
        return True
    if a == "raise_sqn":
        sub = act["sub"]
        rec = w.records[sub]
        rec2 = replace(rec, sqn=nat_increment(rec.sqn, act["by"]))
        w.records[sub] = rec2
        w.max_sqn[sub] = max(w.max_sqn[sub], rec2.sqn.offset)
        w.event("note", actor="attacker", info=f"raised sqn of {sub} by {act['by']}")
        return True
    raise ScriptInvalid(f"unknown action {a!r}")


def _find_radio_slot(w: World, want: list) -> Optional[tuple]:
    for slot in w.radio_slots():
        if list(slot[:2]) == list(want):
            return slot
    return None


def _inject_snhn(w: World, act: dict) -> bool:
    term = normalize(act["term"])
    if act["sn"] not in w.compromised:
        raise ScriptInvalid("snhn injection requires a compromised SN")
    if not w.kb.derivable(term):
        raise AssertionError("injected term not derivable")
    w.injections += 1
    m = w._new_msg(
        channel="snhn", mtype=act["mtype"], term=term, sender="attacker",
        session=act.get("session", -1), sn=act["sn"], hn=act["hn"],
        direction=act["direction"],
    )
    w.event("inject", channel=f"snhn:{m.sn}-{m.hn}", mtype=m.mtype, term=term)
    return w.deliver_snhn(m.mid, tuple(act["target"]), injected_term=term)


def run_to_quiescence(w: World) -> None:
    while True:
        acts = natural_actions(w)
        if not acts:
            return
        apply_action(w, acts[0])


def run_honest(cfg: ScenarioConfig) -> Trace:
    cfg.validate()
    if cfg.reveals or cfg.bounds.max_injections != 0:
        raise ConfigInvalid("honest run requires no reveals and max_injections=0")
    w = init_world(cfg)
    run_to_quiescence(w)
    for i, ue in enumerate(w.ue_sessions):
        if ue.phase != P.UEPhase.DONE:
            raise ConfigInvalid(f"honest run stalled: ue session {i} in {ue.phase}")
    return Trace(events=w.events, decisions=w.decisions)


def scripted_run(cfg: ScenarioConfig, script: list[dict]) -> tuple[World, Trace]:
    cfg.validate()
    w = init_world(cfg)
    for step in script:
        _apply_script_step(w, step)
    return w, Trace(events=w.events, decisions=w.decisions)


def _apply_script_step(w: World, step: dict) -> None:
    if "drain" in step:
        run_to_quiescence(w)
        return
    if "honest" in step:
        for _ in range(step["honest"]):
            acts = natural_actions(w)
            if not acts:
                raise ScriptInvalid("no honest step available")
            apply_action(w, acts[0])
        return
    if "drop" in step:
        sel = step["drop"]
        mid = _select_pending(w, sel)
        if w.messages[mid].channel == "radio":
            w.radio_pending.remove(mid)
        else:
            w.snhn_pending.remove(mid)
        w.event("note", actor="attacker", info=f"dropped {sel}")
        return
    if "replay" in step:
        sel = step["replay"]
        mid = _select_recorded(w, sel)
        m = w.messages[mid]
        to = sel.get("to_session", m.session)
        kind = "ue" if m.mtype in (REQ, CHAL, SNCONF) else "sn"
        act = {"a": "deliver_radio", "mid": mid, "slot": [kind, to], "counted": True}
        if not apply_action(w, act):
            raise ScriptInvalid(f"replay target not receptive: {sel}")
        return
    if "raise_sqn" in step:
        apply_action(w, {"a": "raise_sqn", **step["raise_sqn"]})
        return
    if "reveal" in step:
        sel = step["reveal"]
        for i, r in enumerate(w.cfg.reveals):
            if i not in w.done_reveals and r.kind == sel["kind"] and r.target == sel["target"]:
                apply_action(w, {"a": "reveal", "idx": i})
                return
        raise ScriptInvalid(f"no pending reveal matches {sel}")
    raise ScriptInvalid(f"unknown script step {step}")


def _select_pending(w: World, sel: dict) -> int:
    for mid in w.radio_pending + w.snhn_pending:
        m = w.messages[mid]
        if m.mtype == sel.get("mtype", m.mtype) and m.session == sel.get("session", m.session):
            return mid
    raise ScriptInvalid(f"no pending message matches {sel}")


def _select_recorded(w: World, sel: dict) -> int:
    for mid in w.radio_recorded:
        m = w.messages[mid]
        if m.mtype == sel.get("mtype", m.mtype) and m.session == sel.get("session", m.session):
            return mid
    raise ScriptInvalid(f"no recorded message matches {sel}")


# -- bounded attack search -------------------------------------------------------


def explore(cfg: ScenarioConfig, prop: str) -> Verdict:
    """Depth-first enumeration over attacker choice points, checking ``prop``
    on every prefix.  Returns the first attack or bounded-absence statistics."""
    from .properties import check_prefix  # local import to avoid a cycle

    cfg.validate()
    start = time.monotonic()
    w0 = init_world(cfg)
    visited: set = set()
    stats = {"states": 0, "injections_tried": 0, "steps_max": 0}

    violation0 = check_prefix(w0, prop)
    if violation0:
        return Verdict(prop, "attack", Trace(w0.events, w0.decisions, violation0), stats)

    def dfs(w: World) -> Optional[Trace]:
        if w.steps >= cfg.bounds.max_steps:
            return None
        for act in enumerate_attacker_actions(w):
            w2 = w.clone()
            try:
                changed = apply_action(w2, act)
            except (P.WrongPhase, P.UnknownSession):
                continue
            if not changed:
                continue
            stats["states"] += 1
            stats["steps_max"] = max(stats["steps_max"], w2.steps)
            if act.get("counted") or act["a"].startswith("inject"):
                stats["injections_tried"] += 1
            violation = check_prefix(w2, prop)
            if violation:
                return Trace(w2.events, w2.decisions, violation)
            h = w2.digest()
            if h in visited:
                continue
            visited.add(h)
            found = dfs(w2)
            if found is not None:
                return found
        return None

    found = dfs(w0)
    stats["wall_time_s"] = round(time.monotonic() - start, 3)
    if found is not None:
        return Verdict(prop, "attack", found, stats)
    return Verdict(prop, "no_attack", None, stats)


def enumerate_attacker_actions(w: World) -> list[dict]:
    acts: list[dict] = []
    seen: set = set()

    def add(act: dict, key) -> None:
        if key not in seen:
            seen.add(key)
            acts.append(act)

    # 1. Honest deliveries.
    for act in natural_actions(w):
        add(act, ("nat", act.get("mid"), tuple(act.get("slot", act.get("target", [])))))

    # 2. Non-binding SN-HN permutations.
    if not w.cfg.channel_binding:
        for mid in w.snhn_pending:
            m = w.messages[mid]
            for tgt in w.snhn_targets(m):
                add({"a": "deliver_snhn", "mid": mid, "target": list(tgt)},
                    ("snhn", render(m.term), tgt))

    budget_left = w.injections < w.cfg.bounds.max_injections
    if not budget_left:
        return acts

    # 3. Radio replays and redirects (charged).  REQ/FAIL/keyconf replays are
    # pruned: requests are contentless, failure and confirmation replays only
    # abort sessions and cannot introduce claims or knowledge.  The same holds
    # for any replay whose sole effect would be an abort, so candidates are
    # prechecked against the receiving state (withholding messages already
    # covers every abort-equivalent prefix).
    slots = w.radio_slots()
    for mid in w.radio_recorded:
        m = w.messages[mid]
        if m.mtype not in (SUCI, CHAL, RESP):
            continue
        for slot in slots:
            kind, i, types = slot
            if m.mtype not in types:
                continue
            if mid in w.radio_pending and slot == natural_radio_slot(w, m):
                continue  # already offered free
            if not _replay_productive(w, m, slot):
                continue
            add({"a": "deliver_radio", "mid": mid, "slot": [kind, i], "counted": True},
                ("replay", render(m.term), kind, i))

    # 4. Goal-directed forged injections (charged).
    for slot in slots:
        for mtype, term in forged_candidates(w, slot):
            add({"a": "inject_radio", "term": term, "mtype": mtype, "slot": list(slot[:2])},
                ("forge", render(term), slot[0], slot[1]))

    # 5. Compromised SN-HN endpoints (charged).
    for act in snhn_injection_candidates(w):
        add(act, ("snhn_inj", render(act["term"]), tuple(act["target"])))

    # 6. Scheduled post-session reveals.
    for idx, r in enumerate(w.cfg.reveals):
        if idx in w.done_reveals or r.when != "post_session":
            continue
        if any(u.phase == P.UEPhase.DONE and u.record.sub == r.target for u in w.ue_sessions):
            add({"a": "reveal", "idx": idx}, ("reveal", idx))
    return acts


def _replay_productive(w: World, m: Msg, slot: tuple) -> bool:
    """False when delivering this recorded message can only abort or no-op
    the receiver; such branches add no claims and no attacker knowledge."""
    kind, i, _types = slot
    if m.mtype == SUCI:
        return True
    if m.mtype == CHAL and kind == "ue":
        t = m.term
        if not (isinstance(t, App) and t.symbol == "pair"):
            return False
        ue = replace(w.ue_sessions[i], record=w.records[w.sub_of_session(i)])
        if ue.phase != P.UEPhase.AWAIT_CHALLENGE:
            return False
        _st, verdict, _reply, _claims = P.ue_check_challenge(ue, t.args[0], t.args[1], w.cfg.fixes)
        return verdict != P.UEVerdict.MAC_FAILURE
    if m.mtype == RESP and kind == "sn":
        sn = w.sn_of_session(i)
        try:
            sess = w.sn_states[sn].session(i)
        except P.UnknownSession:
            return False
        return sess.r is not None and app("sha256", pair(sess.r, m.term)) == sess.hxres
    return False


def forged_candidates(w: World, slot: tuple) -> list[tuple[str, Term]]:
    """Derivable message forgeries aimed at one receive slot.  Candidate
    components come from small pools (observed nonces, revealed keys,
    extractable counters); every candidate is checked derivable before being
    offered, which keeps the injected-terms invariant trivially true."""
    kind, i, types = slot
    out: list[tuple[str, Term]] = []
    fixes = w.cfg.fixes
    kb = w.kb

    def rs_pool() -> list[Term]:
        pool: list[Term] = []
        for r in w.seen_rs + w.att_nonces[:1]:
            if r not in pool and kb.derivable(r):
                pool.append(r)
        return pool

    if kind == "ue":
        ue = w.ue_sessions[i]
        sub = ue.record.sub
        rec = w.records[sub]
        if CHAL in types:
            # Challenge content lifted from vectors the attacker has read
            # (compromised SN-HN endpoints).
            for m in w.messages.values():
                if m.mtype != AV:
                    continue
                t = m.term
                try:
                    r, rest = t.args
                    autn, _ = rest.args
                except (AttributeError, ValueError):
                    continue
                cand = pair(r, autn)
                if kb.derivable(cand):
                    out.append((CHAL, cand))
            if kb.derivable(rec.k):
                sqn_pool = sorted(
                    (t for t in kb.closure() if isinstance(t, Nat) and t.base == sub),
                    key=lambda t: t.offset,
                )
                if sub in kb.revealed_bases:
                    sqn_pool.append(Nat(sub, w.max_sqn[sub] + 1))
                for r in rs_pool():
                    for sqn in sqn_pool:
                        crypto = P._challenge_crypto(rec.k, r, sqn, ue.sn_name, fixes)
                        out.append((CHAL, pair(r, crypto["autn"])))
        if SNCONF in types and ue.k_seaf is not None:
            t = app("kdf", ue.k_seaf, P.SN_CONF)
            if kb.derivable(t):
                out.append((SNCONF, t))
    else:
        sn = w.sn_of_session(i)
        st = w.sn_states[sn]
        try:
            sess = st.session(i)
        except P.UnknownSession:
            return out
        if SUCI in types:
            for sub, rec in sorted(w.records.items()):
                if kb.derivable(rec.supi):
                    pk = app("pk", w.hn_states[rec.home].sk)
                    suci = pair(app("aenc", pair(rec.supi, w.att_nonces[0]), pk),
                                P.idhn_const(rec.home))
                    out.append((SUCI, suci))
        if RESP in types and sess.r is not None:
            for sub, rec in sorted(w.records.items()):
                if kb.derivable(rec.k):
                    crypto = P._challenge_crypto(rec.k, sess.r, Nat(sub, 0), st.sn_name, fixes)
                    out.append((RESP, crypto["xres_star"]))
            # Anything that hashes to the stored HXRES* works as a response.
            for cand in w.att_nonces:
                if sess.hxres == app("sha256", pair(sess.r, cand)):
                    out.append((RESP, cand))
        if UECONF in types and sess.k_seaf is not None:
            t = app("kdf", sess.k_seaf, P.UE_CONF)
            if kb.derivable(t):
                out.append((UECONF, t))
    return [(m, t) for m, t in out if kb.derivable(t)]


def snhn_injection_candidates(w: World) -> list[dict]:
    acts: list[dict] = []
    if not w.compromised:
        return acts
    kb = w.kb
    observed_sucis = [w.messages[m].term for m in w.radio_recorded
                      if w.messages[m].mtype == SUCI]
    att = w.att_nonces
    for sn in sorted(w.compromised):
        hn = w.sn_states[sn].home
        # New authentication requests toward the HN (attacker speaks as sn).
        for suci in observed_sucis:
            term = pair(suci, P.snname_const(sn))
            if kb.derivable(term):
                acts.append({
                    "a": "inject_snhn", "sn": sn, "hn": hn, "mtype": AUTHREQ,
                    "direction": "sn2hn", "term": term, "session": -1,
                    "target": ["hn", hn, -1],
                })
        # Forged vectors and finals toward the SN role instance.
        r_hat, res_hat, k_hat = att[0], att[1], att[2]
        av = tup(r_hat, pair(r_hat, r_hat), app("sha256", pair(r_hat, res_hat)), k_hat)
        finals: list[Term] = [rec.supi for rec in w.records.values() if kb.derivable(rec.supi)]
        for sess in w.sn_states[sn].sessions:
            if sess.phase == P.SNPhase.AWAIT_HN_CHALLENGE and kb.derivable(av):
                acts.append({
                    "a": "inject_snhn", "sn": sn, "hn": hn, "mtype": AV,
                    "direction": "hn2sn", "term": av, "session": sess.sid,
                    "target": ["sn", sn, sess.sid],
                })
            if sess.phase == P.SNPhase.AWAIT_UE_RESPONSE and kb.derivable(res_hat):
                # Matching radio response for the forged vector.
                pass
            if sess.phase == P.SNPhase.AWAIT_HN_CONFIRM:
                for supi in finals:
                    term = pair(supi, sess.suci) if w.cfg.fixes.supi_suci_pairing else supi
                    if kb.derivable(term):
                        acts.append({
                            "a": "inject_snhn", "sn": sn, "hn": hn, "mtype": FINAL,
                            "direction": "hn2sn", "term": term, "session": sess.sid,
                            "target": ["sn", sn, sess.sid],
                        })
        # Forged responses toward HN sessions (the HN locates the session by
        # the SUCI, so only matching identities are worth offering).
        for sess in w.hn_states[hn].sessions:
            if sess.phase != P.HNPhase.AWAIT_RESPONSE or sess.sn_name.label != f"snname:{sn}":
                continue
            for suci in observed_sucis:
                if suci != sess.suci:
                    continue
                for res in [res_hat] + [w.messages[m].term for m in w.radio_recorded
                                        if w.messages[m].mtype == RESP]:
                    term = pair(res, suci)
                    if kb.derivable(term):
                        acts.append({
                            "a": "inject_snhn", "sn": sn, "hn": hn, "mtype": RESFWD,
                            "direction": "sn2hn", "term": term, "session": -1,
                            "target": ["hn", hn, sess.hsid],
                        })
    return acts


def replay_trace(cfg: ScenarioConfig, trace: Trace, prop: str) -> Verdict:
    """Deterministic re-execution of a recorded decision schedule."""
    from .properties import check_prefix

    cfg.validate()
    w = init_world(cfg)
    violation = check_prefix(w, prop)
    for act in trace.decisions:
        if violation:
            break
        try:
            apply_action(w, dict(act))
        except (ScriptInvalid, P.WrongPhase, P.UnknownSession, AssertionError) as e:
            raise TraceDiverged(f"action {act} failed: {e}") from e
        violation = check_prefix(w, prop)
    if bool(violation) != bool(trace.violation):
        if trace.violation:
            raise TraceDiverged("recorded violation did not reproduce")
        raise TraceDiverged("unexpected violation on replay")
    outcome = "attack" if violation else "no_attack"
    return Verdict(prop, outcome, Trace(w.events, w.decisions, violation or ""))
