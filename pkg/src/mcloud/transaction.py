"""Secure per-SD exchange between requester, leader, provider, and TU.

Happy path: the requester asks for a service, the leader fetches a signed
attestation from a provider, encrypts it under a fresh session key, sends
the ciphertext plus the key wrapped for the TU, takes a signed voucher as
payment, and only then releases the key.  Credit moves exclusively at the
TU: vouchers are redeemed there, and the TU arbitrates the two cheating
patterns (leader withholds the key after payment; requester tries to pry
the key out of the TU without paying).

Ledger balances are exact rationals internally so conservation can be
asserted with equality, not tolerance.
"""

import struct
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Callable, Optional

from . import crypto
from .messages import MessageKind, MessageLog

_VOUCHER_BODY = struct.Struct(">QQQd")
VOUCHER_WIRE_SIZE = _VOUCHER_BODY.size + crypto.DIGEST_SIZE  # 32 + 32


class ArbitrationRefused(Exception):
    pass


class InsufficientCredit(Exception):
    pass


@dataclass(frozen=True)
class Voucher:
    sr: int
    leader: int
    voucher_no: int
    value: float
    attestation: bytes

    def body_bytes(self) -> bytes:
        return _VOUCHER_BODY.pack(self.sr, self.leader, self.voucher_no, self.value)

    def to_bytes(self) -> bytes:
        return self.body_bytes() + self.attestation

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Voucher":
        if len(raw) != VOUCHER_WIRE_SIZE:
            raise ValueError(f"voucher wire form must be {VOUCHER_WIRE_SIZE} bytes")
        sr, leader, no, value = _VOUCHER_BODY.unpack(raw[: _VOUCHER_BODY.size])
        return cls(sr, leader, no, value, raw[_VOUCHER_BODY.size :])

    @classmethod
    def issue(cls, sr: int, leader: int, voucher_no: int, value: float, suite: crypto.CryptoSuite) -> "Voucher":
        body = _VOUCHER_BODY.pack(sr, leader, voucher_no, value)
        return cls(sr, leader, voucher_no, value, suite.sign(sr, suite.digest(body)))

    def verify(self, suite: crypto.CryptoSuite) -> bool:
        return suite.verify(self.sr, suite.digest(self.body_bytes()), self.attestation)


class CreditLedger:
    """Balances plus a burn sink; total credit is conserved by construction."""

    def __init__(self, initial: Optional[dict] = None):
        self._balances: dict = {}
        self._burned = Fraction(0)
        for node, amount in (initial or {}).items():
            self._balances[node] = Fraction(amount)

    def open_account(self, node: int, stake: float) -> None:
        if node not in self._balances:
            self._balances[node] = Fraction(stake)

    def balance(self, node: int) -> float:
        return float(self._balances.get(node, Fraction(0)))

    def balance_exact(self, node: int) -> Fraction:
        return self._balances.get(node, Fraction(0))

    @property
    def burned(self) -> Fraction:
        return self._burned

    def transfer(self, debtor: int, creditor: int, amount: float) -> None:
        amt = Fraction(amount)
        self._balances[debtor] = self._balances.get(debtor, Fraction(0)) - amt
        self._balances[creditor] = self._balances.get(creditor, Fraction(0)) + amt

    def debit_and_burn(self, debtor: int, amount: float) -> None:
        amt = Fraction(amount)
        self._balances[debtor] = self._balances.get(debtor, Fraction(0)) - amt
        self._burned += amt

    def total_including_burn(self) -> Fraction:
        return sum(self._balances.values(), Fraction(0)) + self._burned

    def nodes(self) -> list:
        return sorted(self._balances)

    def write_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["node", "balance"])
            for node in self.nodes():
                writer.writerow([node, f"{float(self._balances[node]):.9g}"])
            writer.writerow(["burned", f"{float(self._burned):.9g}"])


class TxPhase(Enum):
    REQUESTED = "requested"
    PROVIDER_ATTESTED = "provider_attested"
    CIPHER_SENT = "cipher_sent"
    VOUCHER_PAID = "voucher_paid"
    KEY_RELEASED = "key_released"
    SETTLED = "settled"
    ARBITRATED = "arbitrated"
    FAILED = "failed"

# Legal forward transitions; arbitration may enter from the two phases where
# one side can stall the exchange.
_TRANSITIONS = {
    TxPhase.REQUESTED: {TxPhase.PROVIDER_ATTESTED, TxPhase.FAILED},
    TxPhase.PROVIDER_ATTESTED: {TxPhase.CIPHER_SENT},
    TxPhase.CIPHER_SENT: {TxPhase.VOUCHER_PAID, TxPhase.ARBITRATED},
    TxPhase.VOUCHER_PAID: {TxPhase.KEY_RELEASED, TxPhase.ARBITRATED},
    TxPhase.KEY_RELEASED: {TxPhase.SETTLED, TxPhase.ARBITRATED},
    TxPhase.SETTLED: set(),
    TxPhase.ARBITRATED: set(),
    TxPhase.FAILED: set(),
}


class IllegalTransition(RuntimeError):
    pass


@dataclass(frozen=True)
class CipherFlow:
    """The step-4 message: everything the SR can later show the TU."""

    leader: int
    sr: int
    service_type: int
    seq_number: int
    ciphertext: bytes
    encrypted_key: bytes


@dataclass
class TransactionState:
    sr: int
    leader: int
    service_type: int
    seq_number: int
    phase: TxPhase = TxPhase.REQUESTED
    provider: Optional[int] = None
    session_key: Optional[bytes] = None
    flow: Optional[CipherFlow] = None
    voucher: Optional[Voucher] = None
    key_received: Optional[bytes] = None
    plaintext: Optional[bytes] = None
    provider_message_valid: Optional[bool] = None
    failure: Optional[str] = None

    def advance(self, new_phase: TxPhase) -> None:
        if new_phase not in _TRANSITIONS[self.phase]:
            raise IllegalTransition(f"{self.phase.value} -> {new_phase.value}")
        self.phase = new_phase


class LeaderBehavior(Enum):
    HONEST = "honest"
    WITHHOLD_KEY = "withhold_key"            # take the voucher, never send k
    FORGE_PROVIDER_MESSAGE = "forge_provider_message"


class RequesterBehavior(Enum):
    HONEST = "honest"
    WITHHOLD_VOUCHER = "withhold_voucher"    # receive the ciphertext, never pay
    FREE_KEY_VIA_TU = "free_key_via_tu"      # pay, but fetch k from the TU instead


def _provider_message(provider: int, leader: int, service_type: int, seq: int, suite) -> bytes:
    body = struct.pack(">QQQQ", provider, leader, service_type, seq)
    return body + suite.sign(provider, suite.digest(body))


def _check_provider_message(m: bytes, suite) -> bool:
    if len(m) != 32 + crypto.DIGEST_SIZE:
        return False
    body, sig = m[:32], m[32:]
    provider = struct.unpack(">QQQQ", body)[0]
    return suite.verify(provider, suite.digest(body), sig)


class Disposition(Enum):
    TRANSFERRED = "transferred"
    DUPLICATE = "duplicate"
    DISREGARDED = "disregarded"
    INVALID = "invalid"


class TrustedUnit:
    """Credit clearing plus arbitration; contacted out-of-band, not per slot."""

    def __init__(self, suite: crypto.CryptoSuite, ledger: CreditLedger, beta: float = 0.5):
        if not (0 < beta < 1):
            raise ValueError(f"punishment fraction beta must be in (0, 1), got {beta}")
        self.suite = suite
        self.ledger = ledger
        self.beta = beta
        self._applied: set = set()      # (sr, voucher_no) already charged
        self._disregarded: set = set()  # flagged after a proven forgery

    # -- voucher clearing -------------------------------------------------

    def _key_of(self, voucher: Voucher) -> tuple:
        return (voucher.sr, voucher.voucher_no)

    def redeem_vouchers(self, leader: int, vouchers) -> list:
        """Apply a batch; every voucher gets a disposition, never a batch error."""
        report = []
        for voucher in vouchers:
            key = self._key_of(voucher)
            if not voucher.verify(self.suite) or voucher.leader != leader:
                report.append((voucher.voucher_no, Disposition.INVALID))
            elif key in self._disregarded:
                report.append((voucher.voucher_no, Disposition.DISREGARDED))
            elif key in self._applied:
                report.append((voucher.voucher_no, Disposition.DUPLICATE))
            else:
                self._applied.add(key)
                self.ledger.transfer(voucher.sr, voucher.leader, voucher.value)
                report.append((voucher.voucher_no, Disposition.TRANSFERRED))
        return report

    def flag_forged(self, voucher: Voucher) -> None:
        self._disregarded.add(self._key_of(voucher))

    # -- arbitration ------------------------------------------------------

    def _recover_key(self, flow: CipherFlow) -> bytes:
        opened = self.suite.asym_decrypt_by_tu(flow.encrypted_key)
        key, seq_bytes = opened[:-8], opened[-8:]
        if int.from_bytes(seq_bytes, "big") != flow.seq_number:
            raise ArbitrationRefused("encrypted key does not match the presented flow")
        return key

    def arbitrate_withheld_key(self, flow: CipherFlow, voucher: Voucher) -> bytes:
        """Case: leader took the voucher and never sent the session key.

        The SR gets the key and is charged in full, but the leader only
        receives the fraction beta; the remainder is burned, which is what
        makes withholding strictly worse than honesty.
        """
        if not voucher.verify(self.suite) or voucher.sr != flow.sr or voucher.leader != flow.leader:
            raise ArbitrationRefused("voucher fails verification against the flow")
        key = self._recover_key(flow)
        full = Fraction(voucher.value)
        kept = Fraction(self.beta) * full
        self.ledger.transfer(voucher.sr, voucher.leader, float(kept))
        self.ledger.debit_and_burn(voucher.sr, float(full - kept))
        self._applied.add(self._key_of(voucher))
        return key

    def release_key_for_evidence(self, flow: CipherFlow, voucher: Optional[Voucher]) -> bytes:
        """Case: SR asks the TU for the key directly.

        Paying is unavoidable: the key is released only against a verifying
        voucher, and presenting the voucher charges it immediately, so a
        later redemption by the leader is a no-op.
        """
        if voucher is None:
            raise ArbitrationRefused("no key without a voucher")
        if not voucher.verify(self.suite) or voucher.sr != flow.sr or voucher.leader != flow.leader:
            raise ArbitrationRefused("voucher fails verification against the flow")
        key = self._recover_key(flow)
        if self._key_of(voucher) not in self._applied:
            self._applied.add(self._key_of(voucher))
            self.ledger.transfer(voucher.sr, voucher.leader, voucher.value)
        return key

    def appeal_forged_message(self, flow: CipherFlow, voucher: Voucher) -> bool:
        """SR claims the delivered provider message is bogus; TU re-derives it.

        A true claim flags the voucher so redemption skips it.
        """
        if not voucher.verify(self.suite) or voucher.sr != flow.sr or voucher.leader != flow.leader:
            raise ArbitrationRefused("voucher fails verification against the flow")
        key = self._recover_key(flow)
        message = self.suite.sym_decrypt(key, flow.ciphertext)
        if _check_provider_message(message, self.suite):
            return False
        self.flag_forged(voucher)
        return True


def run_sd_transaction(
    sr: int,
    leader: int,
    service_type: int,
    *,
    suite: crypto.CryptoSuite,
    ledger: CreditLedger,
    log: MessageLog,
    seq_number: int,
    voucher_no: int,
    fee: float,
    session_key: bytes,
    provider_lookup: Callable[[int], Optional[int]],
    leader_behavior: LeaderBehavior = LeaderBehavior.HONEST,
    sr_behavior: RequesterBehavior = RequesterBehavior.HONEST,
    slot_index: int = 0,
) -> TransactionState:
    """Drive one SD exchange as far as the scripted behaviors allow.

    The happy path logs exactly five messages: the request, the two
    leader/provider messages, the cipher flow, and the key release.  The
    voucher handoff is a payment instrument, tracked in the transaction
    state and settled at the TU, not counted as SD messaging.
    """
    state = TransactionState(sr=sr, leader=leader, service_type=service_type, seq_number=seq_number)
    log.append(sr, leader, MessageKind.SD_REQUEST, slot_index)

    provider = provider_lookup(service_type)
    if provider is None:
        state.failure = "no provider for this service"
        state.advance(TxPhase.FAILED)
        log.append(leader, sr, MessageKind.SD_FAILURE, slot_index)
        return state

    state.provider = provider
    if leader_behavior is LeaderBehavior.FORGE_PROVIDER_MESSAGE:
        # leader never contacts the provider: it fabricates the attested
        # message (junk signature) to collect the fee anyway
        body = struct.pack(">QQQQ", provider, leader, service_type, seq_number)
        message = body + bytes(crypto.DIGEST_SIZE)
        state.advance(TxPhase.PROVIDER_ATTESTED)
    else:
        log.append(leader, provider, MessageKind.PROVIDER_QUERY, slot_index)
        log.append(provider, leader, MessageKind.PROVIDER_ATTEST, slot_index)
        message = _provider_message(provider, leader, service_type, seq_number, suite)
        state.advance(TxPhase.PROVIDER_ATTESTED)

    ciphertext = suite.sym_encrypt(session_key, message)
    encrypted_key = suite.asym_encrypt_for_tu(session_key + seq_number.to_bytes(8, "big"))
    state.session_key = session_key
    state.flow = CipherFlow(leader, sr, service_type, seq_number, ciphertext, encrypted_key)
    state.advance(TxPhase.CIPHER_SENT)
    log.append(leader, sr, MessageKind.CIPHER_FLOW, slot_index)

    if sr_behavior is RequesterBehavior.WITHHOLD_VOUCHER:
        # no voucher, no key: the exchange stalls and the SR holds only ciphertext
        return state

    if ledger.balance_exact(sr) < Fraction(fee):
        raise InsufficientCredit(f"node {sr} cannot cover the SD fee {fee}")
    state.voucher = Voucher.issue(sr, leader, voucher_no, fee, suite)
    state.advance(TxPhase.VOUCHER_PAID)

    if leader_behavior is LeaderBehavior.WITHHOLD_KEY:
        return state  # SR will take the flow and voucher to the TU

    if sr_behavior is not RequesterBehavior.FREE_KEY_VIA_TU:
        state.key_received = session_key
        state.advance(TxPhase.KEY_RELEASED)
        log.append(leader, sr, MessageKind.KEY_RELEASE, slot_index)
        state.plaintext = suite.sym_decrypt(state.key_received, ciphertext)
        state.provider_message_valid = _check_provider_message(state.plaintext, suite)
        state.advance(TxPhase.SETTLED)
    return state
