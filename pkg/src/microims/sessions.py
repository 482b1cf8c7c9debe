"""Per-call micro services C, O, H, A, T, M as event-driven state machines.

Call flow (one hop per responsibility)::

    UE -INVITE-> entry -> rendezvous LB -> C (admit, 100 Trying)
    C -> O -> H (local cache, central HSS on a miss) -> O (policy)
    O -> A -> T -> M (media slot) -> C -INVITE-> callee -180/200-> C -200-> UE
    UE -BYE-> C (release everything) -200-> UE

Every handler re-checks that the session is still live, so messages that
outlive a dropped session are absorbed silently.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Optional

from . import sip
from .autoscaler import BusySignal
from .hrw import EmptyNodeSet, RendezvousLb, route_invite
from .hss import UnknownSubscriber
from .sip import SipMessage, SipUri


class SessionState(str, enum.Enum):
    CREATED = "Created"
    ORCHESTRATING = "Orchestrating"
    PROFILE_FETCHED = "ProfileFetched"
    ANCHORED = "Anchored"
    TELEPHONY_READY = "TelephonyReady"
    MEDIA_ALLOCATED = "MediaAllocated"
    ESTABLISHED = "Established"
    TERMINATING = "Terminating"
    TERMINATED = "Terminated"
    DROPPED = "Dropped"


_CHAIN = [
    SessionState.CREATED, SessionState.ORCHESTRATING, SessionState.PROFILE_FETCHED,
    SessionState.ANCHORED, SessionState.TELEPHONY_READY, SessionState.MEDIA_ALLOCATED,
    SessionState.ESTABLISHED, SessionState.TERMINATING, SessionState.TERMINATED,
]
_PRE_ESTABLISHED = set(_CHAIN[:6])


class ActorKind(str, enum.Enum):
    C = "C"
    O = "O"
    A = "A"
    T = "T"
    M = "M"
    H = "H"


PLACEMENTS = ("co-located", "spread")
DROP_REASONS = ("busy-capacity", "busy-media", "policy-rejected", "dropped-failure")


class InvalidTransition(RuntimeError):
    pass


class PolicyRejected(Exception):
    def __init__(self, reason: str) -> None:
        super().__init__(reason)
        self.reason = reason


class MediaUnavailable(Exception):
    pass


@dataclass(frozen=True)
class Internal:
    """Actor-to-actor message that is not SIP."""

    kind: str
    call_id: str
    data: Any = None

    def describe(self) -> str:
        return f"{self.kind} {self.call_id}"


@dataclass
class CallSession:
    call_id: str
    originator: SipUri
    callee: SipUri
    index: int = 0
    t_invite_sent: int = 0
    state: SessionState = SessionState.CREATED
    drop_reason: Optional[str] = None
    drop_detail: str = ""
    pouch_assignments: dict = field(default_factory=dict)
    units: dict = field(default_factory=dict)
    target: Optional[str] = None
    admitted_on: Optional[str] = None
    pouch_load: int = 0
    media_on: Optional[str] = None
    counted_call: bool = False
    t_established: Optional[int] = None
    t_ended: Optional[int] = None
    hops: int = 0
    history: list = field(default_factory=list)

    @property
    def live(self) -> bool:
        return self.state not in (SessionState.TERMINATED, SessionState.DROPPED)

    @property
    def latency_ms(self) -> Optional[int]:
        if self.t_established is None:
            return None
        return self.t_established - self.t_invite_sent

    def advance(self, new: SessionState, now: int) -> None:
        cur = self.state
        if new is SessionState.DROPPED:
            ok = cur in _PRE_ESTABLISHED or (
                self.drop_reason == "dropped-failure"
                and cur in (SessionState.ESTABLISHED, SessionState.TERMINATING))
        else:
            ok = cur in _CHAIN and _CHAIN.index(new) == _CHAIN.index(cur) + 1
        if not ok:
            raise InvalidTransition(f"{self.call_id}: {cur.value} -> {new.value}")
        self.state = new
        self.history.append((now, new.value))


def spread_assignment(c_host: str, members: list[str]) -> dict:
    """O, A, T, M, H round-robin over ``members`` starting after ``c_host``."""
    start = members.index(c_host) + 1 if c_host in members else 0
    out = {ActorKind.C: c_host}
    for i, kind in enumerate((ActorKind.O, ActorKind.A, ActorKind.T, ActorKind.M, ActorKind.H)):
        out[kind] = members[(start + i) % len(members)]
    return out


class CallControl:
    """Drives every call through the actor chain on top of an ``ImsSystem``."""

    def __init__(self, system) -> None:
        self.sys = system
        self.engine = system.engine
        self.sessions: dict[str, CallSession] = {}
        self.active_calls: dict[str, int] = {}
        self.node_failure_drops: list[tuple[int, str, CallSession]] = []
        self.live = 0

    # -- helpers --------------------------------------------------------

    @property
    def cfg(self):
        return self.sys.scenario

    def _send(self, msg, src: str, dst: str, handler, *, delay: int = 0,
              session: Optional[CallSession] = None) -> None:
        if session is not None:
            session.hops += 1
        on_drop = None
        if session is not None:
            on_drop = lambda _m, s=session, d=dst: self._lost(s, d)  # noqa: E731
        self.engine.send(msg, src, dst, handler, delay=delay, on_drop=on_drop)

    def _lost(self, session: CallSession, host: str) -> None:
        if session.live:
            self.drop(session, "dropped-failure", f"message to failed {host}",
                      busy=BusySignal(self.engine.now, host, session.call_id, "node-failure"))

    def _get(self, call_id: str) -> Optional[CallSession]:
        s = self.sessions.get(call_id)
        return s if s is not None and s.live else None

    def _service(self, session: CallSession, kind: ActorKind) -> int:
        host = session.pouch_assignments[kind]
        return self.sys.pool[host].service_time(exclude_units=session.units.get(host, 0))

    def live_count(self) -> int:
        """Calls established or being established."""
        return self.live

    # -- origination ----------------------------------------------------

    def place_call(self, session: CallSession) -> None:
        session.t_invite_sent = self.engine.now
        session.history.append((self.engine.now, session.state.value))
        self.sessions[session.call_id] = session
        self.live += 1
        invite = sip.request("INVITE", session.call_id, session.originator, session.callee)
        self._send(invite, "ue", "entry", self._entry_recv, session=session)

    def _entry_recv(self, invite: SipMessage) -> None:
        session = self._get(invite.call_id)
        if session is None:
            return
        lb = self.sys.entry.pick()
        self._send(invite, "entry", lb.id, lambda m, lb=lb: self._rlb_recv(m, lb),
                   delay=self.cfg.session.lb_service_ms, session=session)

    def _rlb_recv(self, invite: SipMessage, lb: RendezvousLb) -> None:
        session = self._get(invite.call_id)
        if session is None:
            return
        try:
            decision = route_invite(invite, lb)
        except EmptyNodeSet:
            self.drop(session, "dropped-failure", "empty node set",
                      busy=BusySignal(self.engine.now, lb.id, session.call_id, "node-failure"))
            return
        self._send(invite, lb.id, decision.target,
                   lambda m, host=decision.target: self._pouch_recv_invite(m, host),
                   delay=self.cfg.session.lb_service_ms, session=session)

    def _pouch_recv_invite(self, invite: SipMessage, host: str) -> None:
        session = self._get(invite.call_id)
        if session is None:
            return
        session.target = host
        pouch = self.sys.pool[host]
        session.pouch_load = pouch.active_sessions
        if not pouch.admit():
            self.drop(session, "busy-capacity", host, busy=BusySignal(
                self.engine.now, host, session.call_id, "capacity"), reply_from=host)
            return
        session.admitted_on = host
        self.on_invite(session, host)

    # -- actors ---------------------------------------------------------

    def on_invite(self, session: CallSession, target: str) -> CallSession:
        """C actor created on ``target``; the other five are placed per policy."""
        if self.cfg.session.placement == "co-located":
            assignments = {kind: target for kind in ActorKind}
        else:
            assignments = spread_assignment(target, list(self.sys.mu.node_set.members))
        session.pouch_assignments = assignments
        for host in assignments.values():
            session.units[host] = session.units.get(host, 0) + 1
        for host, n in session.units.items():
            self.sys.pool[host].add_units(n)
        c = assignments[ActorKind.C]
        st = self._service(session, ActorKind.C)
        invite = sip.request("INVITE", session.call_id, session.originator, session.callee)
        self._send(sip.response(invite, 100), c, "ue", self._ue_recv, delay=st)
        self._send(Internal("create-O", session.call_id), c, assignments[ActorKind.O],
                   self._o_created, delay=st, session=session)
        return session

    def _o_created(self, msg: Internal) -> None:
        session = self._get(msg.call_id)
        if session is None:
            return
        session.advance(SessionState.ORCHESTRATING, self.engine.now)
        a = session.pouch_assignments
        st = self._service(session, ActorKind.O)
        self._send(Internal("profile-req", session.call_id), a[ActorKind.O], a[ActorKind.H],
                   self._h_recv, delay=st, session=session)

    def _h_recv(self, msg: Internal) -> None:
        session = self._get(msg.call_id)
        if session is None:
            return
        h = session.pouch_assignments[ActorKind.H]
        cache = self.sys.hss.cache_for(h)
        st = self._service(session, ActorKind.H)
        found, missing = {}, []
        for uri in (session.originator, session.callee):
            profile = cache.lookup(uri)
            if profile is None:
                missing.append(uri)
            else:
                found[str(uri)] = profile
        delay = st + 2 * self.cfg.hss.local_cache_latency_ms
        if not missing:
            self._send(Internal("profile-resp", session.call_id, found), h,
                       session.pouch_assignments[ActorKind.O], self._o_profiles,
                       delay=delay, session=session)
            return
        query = Internal("hss-query", session.call_id, (h, tuple(missing), found))
        self._send(query, h, "hss", self._hss_recv, delay=delay, session=session)

    def _hss_recv(self, msg: Internal) -> None:
        session = self._get(msg.call_id)
        if session is None:
            return
        h, missing, found = msg.data
        fetched = {}
        for uri in missing:
            try:
                fetched[str(uri)] = self.sys.hss.central_lookup(uri, for_pouch=h)
            except UnknownSubscriber:
                pass
        self._send(Internal("hss-reply", session.call_id, (fetched, found)), "hss", h,
                   self._h_fetched, delay=self.cfg.hss.hss_query_latency_ms,
                   session=session)

    def _h_fetched(self, msg: Internal) -> None:
        session = self._get(msg.call_id)
        if session is None:
            return
        fetched, found = msg.data
        h = session.pouch_assignments[ActorKind.H]
        cache = self.sys.hss.cache_for(h)
        for profile in fetched.values():
            cache.insert(profile)
        self._send(Internal("profile-resp", session.call_id, {**found, **fetched}), h,
                   session.pouch_assignments[ActorKind.O], self._o_profiles, session=session)

    def orchestrate(self, session: CallSession, profiles: dict) -> None:
        """Subscription policy check by O; raises PolicyRejected."""
        caller = profiles.get(str(session.originator))
        if caller is None:
            raise PolicyRejected("unknown-caller")
        if str(session.callee) not in profiles:
            raise PolicyRejected("unknown-callee")
        if self.active_calls.get(str(session.originator), 0) >= caller.max_concurrent_calls:
            raise PolicyRejected("max-concurrent-calls")

    def _o_profiles(self, msg: Internal) -> None:
        session = self._get(msg.call_id)
        if session is None:
            return
        try:
            self.orchestrate(session, msg.data)
        except PolicyRejected as exc:
            self.drop(session, "policy-rejected", exc.reason,
                      reply_from=session.pouch_assignments[ActorKind.C])
            return
        key = str(session.originator)
        self.active_calls[key] = self.active_calls.get(key, 0) + 1
        session.counted_call = True
        session.advance(SessionState.PROFILE_FETCHED, self.engine.now)
        a = session.pouch_assignments
        self._send(Internal("anchor", session.call_id), a[ActorKind.O], a[ActorKind.A],
                   self._a_recv, session=session)

    def _a_recv(self, msg: Internal) -> None:
        session = self._get(msg.call_id)
        if session is None:
            return
        session.advance(SessionState.ANCHORED, self.engine.now)
        a = session.pouch_assignments
        self._send(Internal("telephony", session.call_id), a[ActorKind.A], a[ActorKind.T],
                   self._t_recv, delay=self._service(session, ActorKind.A), session=session)

    def _t_recv(self, msg: Internal) -> None:
        session = self._get(msg.call_id)
        if session is None:
            return
        session.advance(SessionState.TELEPHONY_READY, self.engine.now)
        a = session.pouch_assignments
        self._send(Internal("media", session.call_id), a[ActorKind.T], a[ActorKind.M],
                   self._m_recv, delay=self._service(session, ActorKind.T), session=session)

    def _m_recv(self, msg: Internal) -> None:
        session = self._get(msg.call_id)
        if session is None:
            return
        m = session.pouch_assignments[ActorKind.M]
        if not self.sys.pool[m].reserve_media():
            self.drop(session, "busy-media", m, busy=BusySignal(
                self.engine.now, m, session.call_id, "media"),
                reply_from=session.pouch_assignments[ActorKind.C])
            return
        session.media_on = m
        session.advance(SessionState.MEDIA_ALLOCATED, self.engine.now)
        self._send(Internal("media-ready", session.call_id), m,
                   session.pouch_assignments[ActorKind.C], self._c_media_ready,
                   delay=self._service(session, ActorKind.M), session=session)

    def _c_media_ready(self, msg: Internal) -> None:
        session = self._get(msg.call_id)
        if session is None:
            return
        c = session.pouch_assignments[ActorKind.C]
        invite = sip.request("INVITE", session.call_id, session.originator, session.callee)
        self._send(invite, c, "callee", self._callee_recv, session=session)

    def _callee_recv(self, invite: SipMessage) -> None:
        session = self._get(invite.call_id)
        if session is None:
            return
        c = session.pouch_assignments[ActorKind.C]
        self._send(sip.response(invite, 180), "callee", c, self._c_from_callee, session=session)
        self._send(sip.response(invite, 200), "callee", c, self._c_from_callee, session=session)

    def _c_from_callee(self, resp: SipMessage) -> None:
        session = self._get(resp.call_id)
        if session is None:
            return
        c = session.pouch_assignments[ActorKind.C]
        self._send(resp, c, "ue", self._ue_recv, session=session)

    def _ue_recv(self, msg: SipMessage) -> None:
        if msg.is_request or msg.status != 200 or msg.cseq_method != "INVITE":
            return
        session = self._get(msg.call_id)
        if session is None or session.state is not SessionState.MEDIA_ALLOCATED:
            return
        now = self.engine.now
        session.t_established = now
        session.advance(SessionState.ESTABLISHED, now)
        c = session.pouch_assignments[ActorKind.C]
        ack = sip.request("ACK", session.call_id, session.originator, session.callee)
        self._send(ack, "ue", c, lambda _m: None, session=session)
        self.sys.on_established(session)
        self.engine.schedule(now + self.cfg.hold_ms, lambda s=session: self.hang_up(s),
                             kind="timer", src="ue", detail=f"hold-expired {session.call_id}")

    # -- teardown -------------------------------------------------------

    def hang_up(self, session: CallSession) -> None:
        if session.state is not SessionState.ESTABLISHED:
            return
        session.advance(SessionState.TERMINATING, self.engine.now)
        bye = sip.request("BYE", session.call_id, session.originator, session.callee, cseq=2)
        self._send(bye, "ue", session.pouch_assignments[ActorKind.C], self._c_bye,
                   session=session)

    def _c_bye(self, bye: SipMessage) -> None:
        self.terminate(bye)

    def terminate(self, bye: SipMessage) -> None:
        """BYE at C: release every resource; a duplicate BYE is ignored."""
        session = self.sessions.get(bye.call_id)
        if session is None or session.state is not SessionState.TERMINATING:
            return
        self._release(session)
        session.t_ended = self.engine.now
        session.advance(SessionState.TERMINATED, self.engine.now)
        self.live -= 1
        self._send(sip.response(bye, 200), session.pouch_assignments[ActorKind.C], "ue",
                   self._ue_recv)
        self.sys.on_ended(session)

    def _release(self, session: CallSession) -> None:
        pool = self.sys.pool
        for host, n in session.units.items():
            if pool[host].is_active:
                pool[host].remove_units(n)
        session.units = {}
        if session.admitted_on is not None:
            if pool[session.admitted_on].is_active:
                pool[session.admitted_on].release()
            session.admitted_on = None
        if session.media_on is not None:
            if pool[session.media_on].is_active:
                pool[session.media_on].release_media()
            session.media_on = None
        if session.counted_call:
            key = str(session.originator)
            self.active_calls[key] -= 1
            session.counted_call = False
        self.sys.after_release(session)

    def drop(self, session: CallSession, reason: str, detail: str = "", *,
             busy: Optional[BusySignal] = None, reply_from: Optional[str] = None) -> None:
        if reason not in DROP_REASONS:
            raise ValueError(reason)
        session.drop_reason = reason
        session.drop_detail = detail
        self._release(session)
        session.t_ended = self.engine.now
        session.advance(SessionState.DROPPED, self.engine.now)
        self.live -= 1
        if reply_from is not None and self.engine.host_up(reply_from):
            invite = sip.request("INVITE", session.call_id, session.originator, session.callee)
            self._send(sip.make_busy_response(invite), reply_from, "ue", self._ue_recv)
        self.sys.on_dropped(session)
        if busy is not None:
            self.sys.mu.on_busy(busy)

    def on_pouch_failed(self, host: str) -> list[CallSession]:
        """Drop every live session with an actor on ``host``."""
        victims = [s for s in self.sessions.values()
                   if s.live and host in s.pouch_assignments.values()]
        for s in victims:
            self.node_failure_drops.append((self.engine.now, host, s))
            self.drop(s, "dropped-failure", f"node failure {host}",
                      busy=BusySignal(self.engine.now, host, s.call_id, "node-failure"))
        return victims
