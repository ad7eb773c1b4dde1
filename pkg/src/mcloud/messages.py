"""Wire-message records: the unit of protocol overhead accounting."""

import csv
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional


class MessageKind(Enum):
    # cloud formation (pairwise interactions)
    FORMATION_REQUEST = "formation_request"    # commitment inside
    RESPONDER_BID = "responder_bid"
    INITIATOR_REVEAL = "initiator_reveal"
    CLIENT_LIST = "client_list"
    LEADER_NOTIFY = "leader_notify"
    FORWARD = "forward"                        # client relays a request to its leader
    # per-slot auction
    AUCTION_COMMITMENT = "auction_commitment"
    AUCTION_BID = "auction_bid"
    AUCTION_RESULT = "auction_result"
    CLAIM = "claim"
    CLAIM_CONFIRM = "claim_confirm"
    CLAIM_REJECT = "claim_reject"
    # service-discovery transaction
    SD_REQUEST = "sd_request"
    PROVIDER_QUERY = "provider_query"
    PROVIDER_ATTEST = "provider_attest"
    CIPHER_FLOW = "cipher_flow"
    KEY_RELEASE = "key_release"
    SD_FAILURE = "sd_failure"


PHASE1_KINDS = frozenset(
    {
        MessageKind.FORMATION_REQUEST,
        MessageKind.RESPONDER_BID,
        MessageKind.INITIATOR_REVEAL,
        MessageKind.CLIENT_LIST,
        MessageKind.LEADER_NOTIFY,
    }
)

PHASE2_KINDS = frozenset(
    {
        MessageKind.AUCTION_COMMITMENT,
        MessageKind.AUCTION_BID,
        MessageKind.AUCTION_RESULT,
        MessageKind.CLAIM,
        MessageKind.CLAIM_CONFIRM,
        MessageKind.CLAIM_REJECT,
    }
)

TRANSACTION_KINDS = frozenset(
    {
        MessageKind.SD_REQUEST,
        MessageKind.PROVIDER_QUERY,
        MessageKind.PROVIDER_ATTEST,
        MessageKind.CIPHER_FLOW,
        MessageKind.KEY_RELEASE,
        MessageKind.SD_FAILURE,
    }
)

# Rough payload size classes, by kind.
_BYTES_CLASS = {
    MessageKind.FORMATION_REQUEST: "digest",
    MessageKind.RESPONDER_BID: "scalar",
    MessageKind.INITIATOR_REVEAL: "scalar",
    MessageKind.CLIENT_LIST: "roster",
    MessageKind.LEADER_NOTIFY: "scalar",
    MessageKind.FORWARD: "digest",
    MessageKind.AUCTION_COMMITMENT: "digest",
    MessageKind.AUCTION_BID: "scalar",
    MessageKind.AUCTION_RESULT: "roster",
    MessageKind.CLAIM: "scalar",
    MessageKind.CLAIM_CONFIRM: "scalar",
    MessageKind.CLAIM_REJECT: "scalar",
    MessageKind.SD_REQUEST: "scalar",
    MessageKind.PROVIDER_QUERY: "scalar",
    MessageKind.PROVIDER_ATTEST: "attested",
    MessageKind.CIPHER_FLOW: "cipher",
    MessageKind.KEY_RELEASE: "key",
    MessageKind.SD_FAILURE: "scalar",
}


@dataclass(frozen=True)
class ProtocolMessage:
    sender: int
    receiver: int
    kind: MessageKind
    round_index: int = 0
    bytes_class: str = "scalar"


class MessageLog:
    """Append-only list of protocol messages with counting helpers."""

    def __init__(self):
        self._messages: list[ProtocolMessage] = []

    def append(self, sender: int, receiver: int, kind: MessageKind, round_index: int = 0) -> None:
        self._messages.append(
            ProtocolMessage(sender, receiver, kind, round_index, _BYTES_CLASS[kind])
        )

    def __len__(self) -> int:
        return len(self._messages)

    def __iter__(self):
        return iter(self._messages)

    def count(self, kinds: Optional[Iterable[MessageKind]] = None) -> int:
        if kinds is None:
            return len(self._messages)
        kinds = frozenset(kinds)
        return sum(1 for m in self._messages if m.kind in kinds)

    def count_phase1(self) -> int:
        return self.count(PHASE1_KINDS)

    def count_phase2(self) -> int:
        return self.count(PHASE2_KINDS)

    def count_transaction(self) -> int:
        return self.count(TRANSACTION_KINDS)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["from", "to", "kind", "round", "bytes_class"])
            for m in self._messages:
                writer.writerow([m.sender, m.receiver, m.kind.value, m.round_index, m.bytes_class])
