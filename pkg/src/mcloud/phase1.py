"""Cloud formation: a tournament of pairwise commit-reveal interactions.

Fragments (a leader plus its clients) merge one interaction at a time until
a single fragment holds everyone.  Each interaction costs four messages
plus one notification per client of the losing leader, so a full formation
costs 4(n-1) + n_l messages, where n_l depends on the pairing order.

The initiator commits to a digest of its bid before seeing the responder's,
and reveals afterwards; a reveal that does not match the commitment voids
the interaction and marks the initiator as a cheater.
"""

from dataclasses import dataclass, field
from enum import Enum
from random import Random
from typing import Iterable, Mapping, Optional

from . import crypto
from .auction import Bid, commitment_for
from .messages import MessageKind, MessageLog


class Schedule(Enum):
    BALANCED_TREE = "balanced_tree"
    SEQUENTIAL_CHAIN = "sequential_chain"
    RANDOM_SEEDED = "random_seeded"


class CheatDetected(Exception):
    def __init__(self, cheater: int):
        super().__init__(f"node {cheater} revealed a bid that does not match its commitment")
        self.cheater = cheater


class MembershipError(ValueError):
    pass


class InteractionPhase(Enum):
    REQUEST_SENT = "request_sent"
    RESPONDER_BID = "responder_bid"
    INITIATOR_REVEALED = "initiator_revealed"
    RESOLVED = "resolved"


@dataclass
class CloudFragment:
    """A leader, its clients, and the fee they all signed up for."""

    bid: Bid                      # the leader's committed bid
    clients: set = field(default_factory=set)

    @property
    def leader(self) -> int:
        return self.bid.node_id

    @property
    def sd_fee(self) -> float:
        return self.bid.value

    @property
    def members(self) -> set:
        return {self.leader} | self.clients

    @classmethod
    def singleton(cls, bid: Bid) -> "CloudFragment":
        return cls(bid=bid, clients=set())


@dataclass
class PairwiseInteraction:
    initiator: int
    responder: int
    phase: InteractionPhase
    initiator_commitment: bytes
    responder_bid: Optional[float] = None
    initiator_bid: Optional[float] = None
    winner: Optional[int] = None
    loser: Optional[int] = None
    loser_clients: tuple = ()
    round_index: int = 0


def run_interaction(
    a: CloudFragment,
    b: CloudFragment,
    log: MessageLog,
    *,
    dishonest_reveal: Optional[float] = None,
    round_index: int = 0,
    digest=crypto.fnv256,
) -> tuple:
    """One two-fragment interaction; initiator is a's leader.

    Returns (merged_fragment, record).  Raises CheatDetected (after logging
    the three messages that did flow) when the initiator's reveal fails
    verification against its commitment; no merge happens in that case.
    """
    if a.leader == b.leader:
        raise MembershipError("a fragment cannot interact with itself")
    if a.bid.is_abstain or b.bid.is_abstain:
        raise ValueError("abstaining leaders cannot take part in formation")
    initiator, responder = a.leader, b.leader

    record = PairwiseInteraction(
        initiator=initiator,
        responder=responder,
        phase=InteractionPhase.REQUEST_SENT,
        initiator_commitment=a.bid.commitment,
        round_index=round_index,
    )
    log.append(initiator, responder, MessageKind.FORMATION_REQUEST, round_index)

    record.responder_bid = b.sd_fee
    record.phase = InteractionPhase.RESPONDER_BID
    log.append(responder, initiator, MessageKind.RESPONDER_BID, round_index)

    revealed = a.sd_fee if dishonest_reveal is None else dishonest_reveal
    record.initiator_bid = revealed
    record.phase = InteractionPhase.INITIATOR_REVEALED
    log.append(initiator, responder, MessageKind.INITIATOR_REVEAL, round_index)

    if commitment_for(initiator, revealed, digest) != a.bid.commitment:
        raise CheatDetected(initiator)

    # strictly lower bid wins; ties break on node id
    if (a.sd_fee, a.leader) < (b.sd_fee, b.leader):
        winner_frag, loser_frag = a, b
    else:
        winner_frag, loser_frag = b, a

    record.winner = winner_frag.leader
    record.loser = loser_frag.leader
    record.loser_clients = tuple(sorted(loser_frag.clients))
    record.phase = InteractionPhase.RESOLVED

    log.append(loser_frag.leader, winner_frag.leader, MessageKind.CLIENT_LIST, round_index)
    for client in sorted(loser_frag.clients):
        log.append(loser_frag.leader, client, MessageKind.LEADER_NOTIFY, round_index)

    merged = CloudFragment(
        bid=winner_frag.bid,
        clients=winner_frag.clients | loser_frag.clients | {loser_frag.leader},
    )
    return merged, record


def route_request(
    target: int, fragments: Iterable[CloudFragment], log: Optional[MessageLog] = None
) -> int:
    """Resolve whom a formation request to ``target`` actually reaches.

    Clients forward to their leader (one extra message); leaders answer
    themselves.
    """
    for frag in fragments:
        if target == frag.leader:
            return target
        if target in frag.clients:
            if log is not None:
                log.append(target, frag.leader, MessageKind.FORWARD)
            return frag.leader
    raise MembershipError(f"node {target} is not a member of any fragment")


@dataclass
class TournamentResult:
    cloud: CloudFragment
    interactions: list
    n_l: int                   # total loser-client notifications
    messages: int              # formation messages logged by this tournament
    cheaters: tuple = ()       # excluded for failing commitment verification


def run_tournament(
    bids: Iterable[Bid],
    schedule: Schedule = Schedule.RANDOM_SEEDED,
    *,
    seed: int = 0,
    log: Optional[MessageLog] = None,
    dishonest_reveals: Optional[Mapping[int, float]] = None,
    digest=crypto.fnv256,
) -> TournamentResult:
    """Merge singleton fragments under the given pairing policy.

    The final leader is the minimum bid regardless of the policy; only the
    notification count n_l is schedule-dependent.  Cheating initiators are
    excluded from further pairing and their clients re-enter the pool as
    singletons.
    """
    log = log if log is not None else MessageLog()
    dishonest_reveals = dict(dishonest_reveals or {})
    fragments = [CloudFragment.singleton(b) for b in sorted(bids, key=lambda b: b.node_id)]
    if sum(1 for f in fragments if not f.bid.is_abstain) < 2:
        raise ValueError("formation needs at least two bidding nodes")
    if any(f.bid.is_abstain for f in fragments):
        raise ValueError("abstaining nodes cannot enter formation")
    for frag in fragments:
        if not frag.bid.verify_commitment(digest):
            raise ValueError(f"node {frag.leader} entered formation without a valid commitment")

    start_count = len(log)
    interactions: list = []
    cheaters: list = []
    bid_by_node = {f.leader: f.bid for f in fragments}
    rng = Random(seed)
    round_index = 0

    def interact(a: CloudFragment, b: CloudFragment) -> list:
        """Run one interaction; returns the fragments that replace [a, b]."""
        try:
            merged, record = run_interaction(
                a,
                b,
                log,
                dishonest_reveal=dishonest_reveals.get(a.leader),
                round_index=round_index,
                digest=digest,
            )
        except CheatDetected as cheat:
            cheaters.append(cheat.cheater)
            keep, released = (b, a) if cheat.cheater == a.leader else (a, b)
            # cheater drops out; its clients re-enter the pool as singletons
            return [keep] + [
                CloudFragment.singleton(bid_by_node[c]) for c in sorted(released.clients)
            ]
        interactions.append(record)
        return [merged]

    if schedule is Schedule.BALANCED_TREE:
        while len(fragments) > 1:
            survivors: list = []
            for k in range(0, len(fragments) - 1, 2):
                survivors.extend(interact(fragments[k], fragments[k + 1]))
            if len(fragments) % 2:
                survivors.append(fragments[-1])
            fragments = survivors
            round_index += 1
    elif schedule is Schedule.SEQUENTIAL_CHAIN:
        pending = fragments[1:]
        running = fragments[0]
        while pending:
            result = interact(running, pending.pop(0))
            running = result[0]
            pending.extend(result[1:])
            round_index += 1
        fragments = [running]
    elif schedule is Schedule.RANDOM_SEEDED:
        while len(fragments) > 1:
            i, j = sorted(rng.sample(range(len(fragments)), 2))
            pair = fragments[i], fragments[j]
            rest = [f for idx, f in enumerate(fragments) if idx not in (i, j)]
            fragments = rest + interact(*pair)
            round_index += 1
    else:  # pragma: no cover
        raise ValueError(f"unknown schedule {schedule!r}")

    if len(fragments) != 1:
        raise RuntimeError("tournament failed to converge to a single fragment")
    n_l = sum(len(rec.loser_clients) for rec in interactions)
    return TournamentResult(
        cloud=fragments[0],
        interactions=interactions,
        n_l=n_l,
        messages=len(log) - start_count,
        cheaters=tuple(cheaters),
    )
