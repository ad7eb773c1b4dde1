"""Per-slot leader selection run by the incumbent, plus membership churn.

The incumbent broadcasts a digest of its own bid, collects everyone's bids,
then broadcasts the full list and the winner: 3(n-1) messages when nobody
misbehaves.  Clients verify the incumbent's announced bid against its
commitment, and anyone whose bid was announced wrong can claim during the
claim window; peers uphold or reject claims by comparing the claimant's
broadcast value with the incumbent's announced list.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional

from . import crypto
from .auction import AuctionOutcome, Bid, commitment_for, select_winner, serialize_bid
from .messages import MessageKind, MessageLog


class BlacklistReason(Enum):
    COMMITMENT_VIOLATION = "commitment_violation"
    BID_MANIPULATION = "bid_manipulation"
    FAKE_CLAIM = "fake_claim"
    REFUSED_AUCTION = "refused_auction"


@dataclass
class Blacklist:
    entries: dict = field(default_factory=dict)  # node_id -> BlacklistReason

    def add(self, node_id: int, reason: BlacklistReason) -> None:
        self.entries.setdefault(node_id, reason)

    def __contains__(self, node_id: int) -> bool:
        return node_id in self.entries

    def __len__(self) -> int:
        return len(self.entries)


class JoinDecision(Enum):
    ADMITTED = "admitted"
    DEFERRED = "deferred"
    REJECTED = "rejected"


class DepartureOutcome(Enum):
    ROSTER_SHRUNK = "roster_shrunk"
    LEADER_DEPARTED = "leader_departed"   # re-run formation among the rest
    SINGLETON = "singleton"               # one node left; idle until a join


class AuctionRefused(Exception):
    def __init__(self, incumbent: int):
        super().__init__(f"incumbent {incumbent} refused to run the slot auction")
        self.incumbent = incumbent


@dataclass
class CloudState:
    """Roster bookkeeping shared by the slot auctions and the simulator."""

    capacity: int                      # configured cloud size n
    members: list                      # current roster, kept sorted
    leader: Optional[int] = None
    slot_index: int = 0
    blacklist: Blacklist = field(default_factory=Blacklist)
    p_star: Optional[float] = None
    unused_quota: int = 0              # SDs departed clients left unclaimed this slot
    pending_joins: list = field(default_factory=list)

    def __post_init__(self):
        self.members = sorted(self.members)

    @property
    def size(self) -> int:
        return len(self.members)

    def advance_slot(self) -> list:
        """Close the slot: deferred joiners enter and capacity grows with them."""
        admitted = [j for j in self.pending_joins if j not in self.blacklist]
        for joiner in admitted:
            self.capacity += 1
            self.members.append(joiner)
        self.members.sort()
        self.pending_joins.clear()
        self.unused_quota = 0
        self.slot_index += 1
        return admitted


class ClaimVerdict(Enum):
    UPHELD = "upheld"
    REJECTED = "rejected"


@dataclass
class Claim:
    claimant: int
    asserted_bid: float
    attestation: bytes
    verdict: Optional[ClaimVerdict] = None


@dataclass
class SlotBehaviors:
    """Scripted misbehavior for one slot auction; default is everyone honest."""

    altered_announcements: dict = field(default_factory=dict)  # victim -> announced value
    announce_own: Optional[float] = None   # incumbent announces this instead of its committed bid
    refuse: bool = False
    fake_claims: dict = field(default_factory=dict)            # claimant -> asserted value
    silent_victims: set = field(default_factory=set)           # manipulated but do not claim


@dataclass
class SlotAuction:
    slot_index: int
    incumbent: int
    incumbent_commitment: bytes
    collected_bids: dict               # node -> value actually sent (ground truth)
    announced_bids: dict               # node -> value the incumbent broadcast
    announced_outcome: AuctionOutcome
    commitment_ok: bool
    claims: list = field(default_factory=list)
    final_leader: Optional[int] = None


def run_slot_auction(
    cloud: CloudState,
    bids: Mapping[int, Bid],
    log: MessageLog,
    behaviors: Optional[SlotBehaviors] = None,
    suite: crypto.CryptoSuite = crypto.DEFAULT_SUITE,
) -> SlotAuction:
    """One auction round operated by the cloud's current leader.

    ``bids`` maps each participating member to its Bid; abstainers are
    simply absent.  The honest path logs exactly 3(n-1) messages for n
    participants.  Claim messages (one broadcast per claimant) come on top
    and only when someone claims.
    """
    behaviors = behaviors or SlotBehaviors()
    incumbent = cloud.leader
    if incumbent is None:
        raise ValueError("slot auction needs an incumbent leader")
    if behaviors.refuse:
        raise AuctionRefused(incumbent)

    participants = [m for m in cloud.members if m in bids and m not in cloud.blacklist]
    clients = [m for m in participants if m != incumbent]
    own_bid = bids[incumbent]
    commitment = own_bid.commitment or commitment_for(incumbent, own_bid.value, suite.digest)
    slot = cloud.slot_index

    for client in clients:
        log.append(incumbent, client, MessageKind.AUCTION_COMMITMENT, slot)
    collected = {incumbent: own_bid.value}
    for client in clients:
        collected[client] = bids[client].value
        log.append(client, incumbent, MessageKind.AUCTION_BID, slot)

    announced = dict(collected)
    for victim, fake_value in behaviors.altered_announcements.items():
        if victim in announced and victim != incumbent:
            announced[victim] = fake_value
    if behaviors.announce_own is not None:
        announced[incumbent] = behaviors.announce_own

    outcome = select_winner(Bid(node, value) for node, value in announced.items())
    for client in clients:
        log.append(incumbent, client, MessageKind.AUCTION_RESULT, slot)

    # every client checks the incumbent's announced bid against its commitment
    commitment_ok = (
        commitment_for(incumbent, announced[incumbent], suite.digest) == commitment
    )

    auction = SlotAuction(
        slot_index=slot,
        incumbent=incumbent,
        incumbent_commitment=commitment,
        collected_bids=collected,
        announced_bids=announced,
        announced_outcome=outcome,
        commitment_ok=commitment_ok,
    )

    # claim window: genuine victims (unless scripted silent), then fake claims
    for node in sorted(collected):
        if node == incumbent:
            continue
        if announced[node] != collected[node] and node not in behaviors.silent_victims:
            asserted = collected[node]
            auction.claims.append(
                Claim(node, asserted, suite.sign(node, _claim_body(node, asserted, slot)))
            )
    for node, asserted in sorted(behaviors.fake_claims.items()):
        if node in collected and node != incumbent:
            auction.claims.append(
                Claim(node, asserted, suite.sign(node, _claim_body(node, asserted, slot)))
            )
    for claim in auction.claims:
        for peer in participants:
            if peer != claim.claimant:
                log.append(claim.claimant, peer, MessageKind.CLAIM, slot)

    return auction


def _claim_body(node: int, asserted: float, slot: int) -> bytes:
    return serialize_bid(node, asserted) + slot.to_bytes(8, "big")


@dataclass
class ClaimResolution:
    final_leader: Optional[int]
    blacklisted: dict                  # node -> BlacklistReason applied this slot
    rerunner: Optional[int] = None     # node asked to repeat the auction, if any


def process_claims(
    auction: SlotAuction, cloud: CloudState, log: Optional[MessageLog] = None
) -> ClaimResolution:
    """Adjudicate the claim window and settle who leads next.

    A claim is upheld when the claimant's broadcast value differs from what
    the incumbent announced for it AND matches what the claimant actually
    sent; everything else is a fake claim.  Any upheld claim blacklists the
    incumbent and hands the repeat auction to the lowest-asserting genuine
    claimant.  A failed commitment check blacklists the incumbent outright
    and voids the result.
    """
    blacklisted: dict = {}
    peers = sorted(auction.collected_bids)

    def punish(node: int, reason: BlacklistReason) -> None:
        cloud.blacklist.add(node, reason)
        blacklisted[node] = reason

    if not auction.commitment_ok:
        punish(auction.incumbent, BlacklistReason.COMMITMENT_VIOLATION)
        auction.final_leader = None
        return ClaimResolution(None, blacklisted, rerunner=None)

    upheld: list = []
    for claim in auction.claims:
        announced = auction.announced_bids.get(claim.claimant)
        sent = auction.collected_bids.get(claim.claimant)
        if announced != claim.asserted_bid and claim.asserted_bid == sent:
            claim.verdict = ClaimVerdict.UPHELD
            upheld.append(claim)
            kind = MessageKind.CLAIM_CONFIRM
        else:
            claim.verdict = ClaimVerdict.REJECTED
            punish(claim.claimant, BlacklistReason.FAKE_CLAIM)
            kind = MessageKind.CLAIM_REJECT
        if log is not None:
            # every peer but the incumbent and the claimant reports its verdict
            for peer in peers:
                if peer not in (claim.claimant, auction.incumbent):
                    log.append(peer, claim.claimant, kind, auction.slot_index)

    if upheld:
        punish(auction.incumbent, BlacklistReason.BID_MANIPULATION)
        rerunner = min(upheld, key=lambda c: (c.asserted_bid, c.claimant)).claimant
        auction.final_leader = None
        return ClaimResolution(None, blacklisted, rerunner=rerunner)

    winner = auction.announced_outcome.winner
    if winner in cloud.blacklist:
        # a fake-claiming winner just disqualified itself; incumbent repeats
        rerunner = auction.incumbent if auction.incumbent not in cloud.blacklist else None
        auction.final_leader = None
        return ClaimResolution(None, blacklisted, rerunner=rerunner)

    auction.final_leader = winner
    return ClaimResolution(winner, blacklisted, rerunner=None)


def handle_join(cloud: CloudState, newcomer: int) -> JoinDecision:
    """Admission control for a node switching its sharing feature on."""
    if newcomer in cloud.blacklist:
        return JoinDecision.REJECTED
    if newcomer in cloud.members or newcomer in cloud.pending_joins:
        return JoinDecision.REJECTED
    if cloud.size < cloud.capacity and cloud.unused_quota > 0:
        # a departed client left SD quota on the table: serve the newcomer now
        cloud.members.append(newcomer)
        cloud.members.sort()
        cloud.unused_quota = max(0, cloud.unused_quota - 1)
        return JoinDecision.ADMITTED
    cloud.pending_joins.append(newcomer)
    return JoinDecision.DEFERRED


def handle_departure(cloud: CloudState, departing: int, unused_quota: int = 0) -> DepartureOutcome:
    """Remove a member; a departing leader forces formation from scratch."""
    if departing not in cloud.members:
        raise ValueError(f"node {departing} is not a member")
    cloud.members.remove(departing)
    cloud.unused_quota += max(0, unused_quota)
    if cloud.size == 1:
        if departing == cloud.leader:
            cloud.leader = cloud.members[0]
        return DepartureOutcome.SINGLETON
    if departing == cloud.leader:
        cloud.leader = None
        return DepartureOutcome.LEADER_DEPARTED
    return DepartureOutcome.ROSTER_SHRUNK
