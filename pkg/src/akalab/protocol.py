"""Executable role logic for the subscriber (UE), serving network (SN), and
home network (HN): message construction, challenge checking with the MAC- and
sync-failure branches, re-synchronization, the optional key-confirmation
roundtrip, and the repair toggles.

Message shapes:
    SUCI    = pair(aenc(pair(SUPI, nonce), pk_HN), idHN)
    AUTN    = pair(SQN_HN xor f5(K,R), f1(K, <SQN_HN, R>))           (MAC may
              additionally cover SNname under the mac_binds_snname fix)
    RES*    = kdf(<f3(K,R), f4(K,R)>, <SNname, R, f2(K,R)>)
    HXRES*  = sha256(<R, RES*>)
    K_SEAF  = kdf(kdf(<f3(K,R), f4(K,R)>, <SNname, SQN_HN xor f5(K,R)>), SNname)
    AUTS    = pair(SQN_UE xor f5star(K,R), f1star(K, <SQN_UE, R>))

Role-step functions are pure: they take a state value plus inputs and return
the replacement state together with emitted terms and claim events.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

from .terms import (
    App,
    Const,
    Name,
    Nat,
    Term,
    app,
    nat_increment,
    nat_less,
    normalize,
    pair,
    tup,
    xor,
)

MAC_FAILURE = Const("mac_failure")
SYNC_FAILURE = Const("sync_failure")
AUTH_REQUEST = Const("auth_request")
UE_CONF = Const("ue_conf")
SN_CONF = Const("sn_conf")

ROLE_UE = "UE"
ROLE_SN = "SN"
ROLE_HN = "HN"


class WrongPhase(Exception):
    pass


class UnknownSubscriber(Exception):
    pass


class UnknownSession(Exception):
    pass


class Mismatch(Exception):
    """HN-side RES* validation failure: the session aborts."""


class KeyMissing(Exception):
    pass


class InvariantViolation(Exception):
    """A runtime state invariant (sequence-number monotonicity) fired."""


class UEPhase(str, Enum):
    IDLE = "idle"
    AWAIT_CHALLENGE = "await_challenge"
    AWAIT_KEYCONF = "await_keyconf"
    DONE = "done"
    FAILED = "failed"


class SNPhase(str, Enum):
    AWAIT_SUCI = "await_suci"
    AWAIT_HN_CHALLENGE = "await_hn_challenge"
    AWAIT_UE_RESPONSE = "await_ue_response"
    AWAIT_HN_CONFIRM = "await_hn_confirm"
    AWAIT_KEYCONF = "await_keyconf"
    DONE = "done"
    ABORTED = "aborted"


class HNPhase(str, Enum):
    AWAIT_RESPONSE = "await_response"
    DONE = "done"
    RESYNCED = "resynced"


class UEVerdict(str, Enum):
    ACCEPT = "accept"
    MAC_FAILURE = "mac_failure"
    SYNC_FAILURE = "sync_failure"


@dataclass(frozen=True)
class FixToggles:
    supi_suci_pairing: bool = False
    mac_binds_snname: bool = False
    unidirectional_keyconf: bool = False
    key_confirmation: bool = True


@dataclass(frozen=True)
class Claim:
    kind: str  # "running" | "commit" | "secret"
    agent: str
    roles: Optional[tuple[str, str]] = None  # commit perspective (A, B)
    peer: Optional[str] = None
    data: Optional[tuple[tuple[str, Term], ...]] = None
    item: Optional[str] = None  # secrecy label
    term: Optional[Term] = None


def running(agent: str, peer: str, roles: tuple[str, str], **data: Term) -> Claim:
    return Claim("running", agent, roles, peer, tuple(sorted(data.items())))


def commit(agent: str, peer: str, roles: tuple[str, str], **data: Term) -> Claim:
    return Claim("commit", agent, roles, peer, tuple(sorted(data.items())))


def secret(agent: str, item: str, term: Term) -> Claim:
    return Claim("secret", agent, item=item, term=normalize(term))


# -- identities -------------------------------------------------------------


def idhn_const(hn: str) -> Const:
    return Const(f"idhn:{hn}")


def snname_const(sn: str) -> Const:
    return Const(f"snname:{sn}")


def supi_term(sub: str, hn: str) -> Term:
    return pair(Const(f"imsi:{sub}"), idhn_const(hn))


def subscriber_of_supi(t: Term) -> Optional[str]:
    if isinstance(t, App) and t.symbol == "pair":
        head = t.args[0]
        if isinstance(head, Const) and head.label.startswith("imsi:"):
            return head.label.split(":", 1)[1]
    return None


def agent_of_snname(c: Const) -> str:
    return c.label.split(":", 1)[1] if c.label.startswith("snname:") else c.label


def subscriber_of_suci(t: Term) -> Optional[str]:
    """Ground-truth resolution of the subscriber a SUCI conceals (engine and
    claim bookkeeping only; roles never peek)."""
    if isinstance(t, App) and t.symbol == "pair":
        enc = t.args[0]
        if isinstance(enc, App) and enc.symbol == "aenc":
            inner = enc.args[0]
            if isinstance(inner, App) and inner.symbol == "pair":
                return subscriber_of_supi(inner.args[0])
    return None


# -- subscriber (UE) ---------------------------------------------------------


@dataclass(frozen=True)
class SubscriberRecord:
    sub: str
    supi: Term
    k: Name
    sqn: Nat
    home: str


@dataclass(frozen=True)
class UEState:
    record: SubscriberRecord
    pk_hn: Term
    sn_name: Const
    phase: UEPhase = UEPhase.IDLE
    k_seaf: Optional[Term] = None
    session_suci_nonce: Optional[Name] = None
    suci: Optional[Term] = None


def ue_make_suci(st: UEState, fresh: Name) -> tuple[UEState, Term]:
    if st.phase != UEPhase.IDLE:
        raise WrongPhase(f"ue in {st.phase}")
    suci = pair(app("aenc", pair(st.record.supi, fresh), st.pk_hn), idhn_const(st.record.home))
    st2 = replace(st, phase=UEPhase.AWAIT_CHALLENGE, session_suci_nonce=fresh, suci=suci)
    return st2, suci


def _challenge_crypto(k: Term, r: Term, sqn: Term, sn_name: Term, fixes: FixToggles) -> dict[str, Term]:
    ak = app("f5", k, r)
    conc = xor(sqn, ak)
    mac_body = tup(sqn, r, sn_name) if fixes.mac_binds_snname else tup(sqn, r)
    mac = app("f1", k, mac_body)
    ck_ik = pair(app("f3", k, r), app("f4", k, r))
    xres_star = app("kdf", ck_ik, tup(sn_name, r, app("f2", k, r)))
    k_ausf = app("kdf", ck_ik, pair(sn_name, conc))
    return {
        "ak": ak,
        "conc": conc,
        "mac": mac,
        "autn": pair(conc, mac),
        "xres_star": xres_star,
        "hxres_star": app("sha256", pair(r, xres_star)),
        "k_seaf": app("kdf", k_ausf, sn_name),
    }


def ue_check_challenge(
    st: UEState, r: Term, autn: Term, fixes: FixToggles
) -> tuple[UEState, UEVerdict, Term, list[Claim]]:
    """Returns (state, verdict, reply term, claims).  On MAC or sync failure
    the subscriber stays receptive to further challenges."""
    if st.phase != UEPhase.AWAIT_CHALLENGE:
        raise WrongPhase(f"ue in {st.phase}")
    rec = st.record
    if not (isinstance(autn, App) and autn.symbol == "pair"):
        return st, UEVerdict.MAC_FAILURE, MAC_FAILURE, []
    xconc, xmac = autn.args
    ak = app("f5", rec.k, r)
    xsqn = xor(ak, xconc)
    mac_body = tup(xsqn, r, st.sn_name) if fixes.mac_binds_snname else tup(xsqn, r)
    if app("f1", rec.k, mac_body) != normalize(xmac):
        return st, UEVerdict.MAC_FAILURE, MAC_FAILURE, []
    if not (isinstance(xsqn, Nat) and xsqn.base == rec.sqn.base and nat_less(rec.sqn, xsqn)):
        auts = pair(
            xor(rec.sqn, app("f5star", rec.k, r)),
            app("f1star", rec.k, tup(rec.sqn, r)),
        )
        return st, UEVerdict.SYNC_FAILURE, pair(SYNC_FAILURE, auts), []
    # Accepted: adopt xSQN (strictly increasing by the check above).
    if not nat_less(rec.sqn, xsqn):
        raise InvariantViolation("ue sqn strict increase")
    crypto = _challenge_crypto(rec.k, r, xsqn, st.sn_name, fixes)
    rec2 = replace(rec, sqn=xsqn)
    next_phase = UEPhase.AWAIT_KEYCONF if fixes.key_confirmation else UEPhase.DONE
    st2 = replace(st, record=rec2, phase=next_phase, k_seaf=crypto["k_seaf"])
    data = {"kseaf": crypto["k_seaf"], "supi": rec.supi, "snname": st.sn_name}
    claims = [
        running(rec.sub, agent_of_snname(st.sn_name), (ROLE_SN, ROLE_UE), **data),
        running(rec.sub, rec.home, (ROLE_HN, ROLE_UE), **data),
        secret(rec.sub, "kseaf", crypto["k_seaf"]),
        secret(rec.sub, "sqn", xsqn),
    ]
    if not fixes.key_confirmation:
        claims += ue_commit_claims(st2)
    return st2, UEVerdict.ACCEPT, crypto["xres_star"], claims


def ue_commit_claims(st: UEState) -> list[Claim]:
    rec = st.record
    data = {"kseaf": st.k_seaf, "supi": rec.supi, "snname": st.sn_name}
    return [
        commit(rec.sub, agent_of_snname(st.sn_name), (ROLE_UE, ROLE_SN), **data),
        commit(rec.sub, rec.home, (ROLE_UE, ROLE_HN), **data),
    ]


def ue_check_keyconf(st: UEState, msg: Term) -> tuple[UEState, bool, list[Claim]]:
    if st.phase != UEPhase.AWAIT_KEYCONF:
        raise WrongPhase(f"ue in {st.phase}")
    if st.k_seaf is None:
        raise KeyMissing("ue has no session key")
    if normalize(msg) != app("kdf", st.k_seaf, SN_CONF):
        return st, False, []
    st2 = replace(st, phase=UEPhase.DONE)
    return st2, True, ue_commit_claims(st2)


# -- serving network ----------------------------------------------------------


@dataclass(frozen=True)
class SNSession:
    sid: int
    phase: SNPhase = SNPhase.AWAIT_SUCI
    suci: Optional[Term] = None
    r: Optional[Term] = None
    hxres: Optional[Term] = None
    k_seaf: Optional[Term] = None
    supi: Optional[Term] = None
    sub_hint: Optional[str] = None  # ground-truth peer for claim bookkeeping


@dataclass(frozen=True)
class SNState:
    sn: str
    sn_name: Const
    home: str
    sessions: tuple[SNSession, ...] = ()

    def session(self, sid: int) -> SNSession:
        for s in self.sessions:
            if s.sid == sid:
                return s
        raise UnknownSession(f"sn session {sid}")

    def with_session(self, sess: SNSession) -> "SNState":
        rest = tuple(s for s in self.sessions if s.sid != sess.sid)
        return replace(self, sessions=tuple(sorted(rest + (sess,), key=lambda s: s.sid)))


def sn_open_session(st: SNState, sid: int) -> tuple[SNState, Term]:
    return st.with_session(SNSession(sid=sid)), AUTH_REQUEST


def sn_on_suci(st: SNState, sid: int, suci: Term) -> tuple[SNState, Term]:
    sess = st.session(sid)
    if sess.phase != SNPhase.AWAIT_SUCI:
        raise WrongPhase(f"sn session {sid} in {sess.phase}")
    suci = normalize(suci)
    sess2 = replace(sess, phase=SNPhase.AWAIT_HN_CHALLENGE, suci=suci, sub_hint=subscriber_of_suci(suci))
    return st.with_session(sess2), pair(suci, st.sn_name)


def sn_on_challenge(
    st: SNState, sid: int, av: Term, fixes: FixToggles
) -> tuple[SNState, Term, list[Claim]]:
    """HN-supplied tuple <R, AUTN, HXRES*, K_SEAF>: store, forward <R, AUTN>.

    With the SNname-in-MAC fix the forwarded challenge itself commits this
    SN into the session, so its engagement witness toward the subscriber is
    emitted here; without the fix the SN is witnessed only once it learns
    the SUPI (which is what the repair is about)."""
    sess = st.session(sid)
    if sess.phase != SNPhase.AWAIT_HN_CHALLENGE:
        raise WrongPhase(f"sn session {sid} in {sess.phase}")
    av = normalize(av)
    try:
        r, rest = av.args
        autn, rest = rest.args
        hxres, k_seaf = rest.args
    except (AttributeError, ValueError):
        raise WrongPhase("malformed authentication vector")
    sess2 = replace(sess, phase=SNPhase.AWAIT_UE_RESPONSE, r=r, hxres=hxres, k_seaf=k_seaf)
    claims = []
    if fixes.mac_binds_snname and sess.sub_hint:
        claims.append(
            running(st.sn, sess.sub_hint, (ROLE_UE, ROLE_SN), kseaf=k_seaf, snname=st.sn_name)
        )
    return st.with_session(sess2), pair(r, autn), claims


def sn_check_response(st: SNState, sid: int, res_star: Term) -> tuple[SNState, bool]:
    sess = st.session(sid)
    if sess.phase != SNPhase.AWAIT_UE_RESPONSE:
        raise WrongPhase(f"sn session {sid} in {sess.phase}")
    if app("sha256", pair(sess.r, res_star)) != sess.hxres:
        return st.with_session(replace(sess, phase=SNPhase.ABORTED)), False
    return st.with_session(replace(sess, phase=SNPhase.AWAIT_HN_CONFIRM)), True


def sn_forward_response(st: SNState, sid: int, res_star: Term) -> tuple[Term, list[Claim]]:
    sess = st.session(sid)
    claims = [running(st.sn, st.home, (ROLE_HN, ROLE_SN), kseaf=sess.k_seaf, snname=st.sn_name)]
    return pair(normalize(res_star), sess.suci), claims


def sn_on_final(
    st: SNState, sid: int, final: Term, fixes: FixToggles
) -> tuple[SNState, bool, list[Claim]]:
    """Final HN message: SUPI, or <SUPI, SUCI> under the pairing fix (then the
    SUCI must match this session's)."""
    sess = st.session(sid)
    if sess.phase != SNPhase.AWAIT_HN_CONFIRM:
        raise WrongPhase(f"sn session {sid} in {sess.phase}")
    final = normalize(final)
    if fixes.supi_suci_pairing:
        if not (isinstance(final, App) and final.symbol == "pair"):
            return st.with_session(replace(sess, phase=SNPhase.ABORTED)), False, []
        supi, suci = final.args
        if suci != sess.suci:
            return st.with_session(replace(sess, phase=SNPhase.ABORTED)), False, []
    else:
        supi = final
    peer = subscriber_of_supi(supi) or "?"
    next_phase = SNPhase.AWAIT_KEYCONF if (
        fixes.key_confirmation and not fixes.unidirectional_keyconf
    ) else SNPhase.DONE
    sess2 = replace(sess, phase=next_phase, supi=supi)
    data = {"kseaf": sess.k_seaf, "supi": supi, "snname": st.sn_name}
    claims = [
        running(st.sn, peer, (ROLE_UE, ROLE_SN), **data),
        commit(st.sn, peer, (ROLE_SN, ROLE_UE), **data),
        commit(st.sn, st.home, (ROLE_SN, ROLE_HN), **data),
        secret(st.sn, "kseaf", sess.k_seaf),
    ]
    return st.with_session(sess2), True, claims


def sn_check_keyconf(st: SNState, sid: int, msg: Term) -> tuple[SNState, bool]:
    sess = st.session(sid)
    if sess.phase != SNPhase.AWAIT_KEYCONF:
        raise WrongPhase(f"sn session {sid} in {sess.phase}")
    ok = normalize(msg) == app("kdf", sess.k_seaf, UE_CONF)
    return st.with_session(replace(sess, phase=SNPhase.DONE if ok else SNPhase.ABORTED)), ok


def keyconf_step(state, direction: str) -> Term:
    """Key-confirmation message for one direction: kdf(K_SEAF, tag).  Accepts
    a UEState or an SNSession; both expose k_seaf."""
    if direction == "sn_to_ue":
        tag = SN_CONF
    elif direction == "ue_to_sn":
        tag = UE_CONF
    else:
        raise ValueError(f"bad direction {direction!r}")
    if state.k_seaf is None:
        raise KeyMissing("no session key established")
    return app("kdf", state.k_seaf, tag)


# -- home network -------------------------------------------------------------


@dataclass(frozen=True)
class HNSubscriberEntry:
    k: Name
    sqn_hn: Nat


@dataclass(frozen=True)
class HNSession:
    hsid: int
    supi: Term
    sn_name: Const
    r: Term
    xres_star: Term
    k_seaf: Term
    suci: Term
    phase: HNPhase = HNPhase.AWAIT_RESPONSE


@dataclass(frozen=True)
class HNState:
    hn: str
    sk: Name
    subscribers: tuple[tuple[str, HNSubscriberEntry], ...] = ()
    sessions: tuple[HNSession, ...] = ()
    next_hsid: int = 0

    def entry(self, sub: str) -> HNSubscriberEntry:
        for name, e in self.subscribers:
            if name == sub:
                return e
        raise UnknownSubscriber(sub)

    def with_entry(self, sub: str, e: HNSubscriberEntry) -> "HNState":
        rest = tuple((n, x) for n, x in self.subscribers if n != sub)
        return replace(self, subscribers=tuple(sorted(rest + ((sub, e),))))

    def session(self, hsid: int) -> HNSession:
        for s in self.sessions:
            if s.hsid == hsid:
                return s
        raise UnknownSession(f"hn session {hsid}")

    def with_session(self, sess: HNSession) -> "HNState":
        rest = tuple(s for s in self.sessions if s.hsid != sess.hsid)
        return replace(self, sessions=tuple(sorted(rest + (sess,), key=lambda s: s.hsid)))


def hn_decrypt_suci(st: HNState, suci: Term) -> tuple[str, Term]:
    """SUCI opening via the HN private key (structural: the model's aenc has
    no standalone decryption symbol)."""
    suci = normalize(suci)
    if isinstance(suci, App) and suci.symbol == "pair":
        enc = suci.args[0]
        if (
            isinstance(enc, App)
            and enc.symbol == "aenc"
            and enc.args[1] == app("pk", st.sk)
            and isinstance(enc.args[0], App)
            and enc.args[0].symbol == "pair"
        ):
            supi = enc.args[0].args[0]
            sub = subscriber_of_supi(supi)
            if sub is not None:
                return sub, supi
    raise UnknownSubscriber("suci does not open to a known subscriber")


def hn_make_challenge(
    st: HNState,
    supi: Term,
    sn_name: Const,
    fresh_r: Name,
    fixes: FixToggles,
    suci: Term,
    hsid: Optional[int] = None,
) -> tuple[HNState, HNSession, Term, list[Claim]]:
    """Creates the session and returns the <R, AUTN, HXRES*, K_SEAF> tuple."""
    sub = subscriber_of_supi(supi)
    if sub is None:
        raise UnknownSubscriber("malformed supi")
    entry = st.entry(sub)
    sqn = entry.sqn_hn
    crypto = _challenge_crypto(entry.k, fresh_r, sqn, sn_name, fixes)
    taken = {s.hsid for s in st.sessions}
    if hsid is None or hsid in taken or hsid < 0:
        hsid = st.next_hsid
        while hsid in taken:
            hsid += 1
    sess = HNSession(
        hsid=hsid,
        supi=supi,
        sn_name=sn_name,
        r=fresh_r,
        xres_star=crypto["xres_star"],
        k_seaf=crypto["k_seaf"],
        suci=normalize(suci),
    )
    av = tup(fresh_r, crypto["autn"], crypto["hxres_star"], crypto["k_seaf"])
    new_sqn = nat_increment(sqn, 1)
    _assert_hn_monotone(sqn, new_sqn)
    st2 = st.with_entry(sub, HNSubscriberEntry(entry.k, new_sqn)).with_session(sess)
    st2 = replace(st2, next_hsid=max(st.next_hsid, hsid + 1))
    data = {"kseaf": crypto["k_seaf"], "supi": supi, "snname": sn_name}
    claims = [
        running(st.hn, agent_of_snname(sn_name), (ROLE_SN, ROLE_HN), **data),
        secret(st.hn, "kseaf", crypto["k_seaf"]),
        secret(st.hn, "sqn", new_sqn),
    ]
    if fixes.mac_binds_snname:
        # The challenge MAC now covers SNname (and thereby everything the
        # session key depends on), so the subscriber-facing engagement is
        # witnessed by the challenge itself.
        claims.insert(0, running(st.hn, sub, (ROLE_UE, ROLE_HN), **data))
    return st2, sess, av, claims


def hn_check_response(
    st: HNState, hsid: int, res_star: Term, fixes: FixToggles
) -> tuple[HNState, Term, list[Claim]]:
    sess = st.session(hsid)
    if sess.phase != HNPhase.AWAIT_RESPONSE:
        raise WrongPhase(f"hn session {hsid} in {sess.phase}")
    if normalize(res_star) != sess.xres_star:
        raise Mismatch("RES* does not match xRES*")
    st2 = st.with_session(replace(sess, phase=HNPhase.DONE))
    final = pair(sess.supi, sess.suci) if fixes.supi_suci_pairing else sess.supi
    sub = subscriber_of_supi(sess.supi) or "?"
    data = {"kseaf": sess.k_seaf, "supi": sess.supi, "snname": sess.sn_name}
    claims = [
        running(st.hn, sub, (ROLE_UE, ROLE_HN), **data),
        commit(st.hn, sub, (ROLE_HN, ROLE_UE), **data),
        commit(st.hn, agent_of_snname(sess.sn_name), (ROLE_HN, ROLE_SN), **data),
    ]
    return st2, final, claims


def hn_resync(st: HNState, hsid: int, auts: Term) -> tuple[HNState, bool, list[Claim]]:
    """Re-synchronization: verify MAC* against this session's R and adopt
    SQN_UE + 1.  The update never rewinds the stored counter (monotone)."""
    sess = st.session(hsid)
    auts = normalize(auts)
    if not (isinstance(auts, App) and auts.symbol == "pair"):
        return st, False, []
    conc_star, mac_star = auts.args
    sub = subscriber_of_supi(sess.supi)
    entry = st.entry(sub)
    ak_star = app("f5star", entry.k, sess.r)
    sqn_ue = xor(ak_star, conc_star)
    if not isinstance(sqn_ue, Nat) or sqn_ue.base != entry.sqn_hn.base:
        return st, False, []
    if normalize(mac_star) != app("f1star", entry.k, tup(sqn_ue, sess.r)):
        return st, False, []
    candidate = nat_increment(sqn_ue, 1)
    claims: list[Claim] = []
    if nat_less(entry.sqn_hn, candidate):
        _assert_hn_monotone(entry.sqn_hn, candidate)
        st = st.with_entry(sub, HNSubscriberEntry(entry.k, candidate))
        claims.append(secret(st.hn, "sqn", candidate))
    st = st.with_session(replace(sess, phase=HNPhase.RESYNCED))
    return st, True, claims


def _assert_hn_monotone(old: Nat, new: Nat) -> None:
    if new.base != old.base or new.offset < old.offset:
        raise InvariantViolation("hn sqn monotone non-decrease")
