"""Discrete-event simulator: energy evolution, slot cadence, both SD modes.

One scenario is a seeded, fully deterministic run.  In LEADER_BASED mode
the cloud forms once through the pairwise tournament, then every slot the
leader serves eta SDs per client through the secure transaction protocol,
energy drains accordingly, and the incumbent runs the next election late in
the slot.  In PURE mode every node floods its own queries and pays its
self-discovery cost directly.  Paired seeds share initial energies and
positions so the two modes are comparable run by run.

Credit moves through vouchers redeemed at the TU at slot boundaries; the
payoff metric tracks the per-slot utilities (fee income minus leadership
cost for the leader, fee payments for clients, self-discovery cost in the
pure model).
"""

import csv
import json
import math
import statistics
from dataclasses import dataclass
from enum import Enum
from random import Random
from typing import Optional

from . import costs as costs_mod
from .auction import Bid, equilibrium_bid
from .costs import CostProfile, build_profile, eta_min, sdc
from .crypto import DEFAULT_SUITE
from .messages import MessageLog
from .params import SimParams
from .phase1 import Schedule, run_tournament
from .phase2 import (
    AuctionRefused,
    BlacklistReason,
    CloudState,
    DepartureOutcome,
    SlotBehaviors,
    handle_departure,
    handle_join,
    process_claims,
    run_slot_auction,
)
from .transaction import (
    CreditLedger,
    LeaderBehavior,
    RequesterBehavior,
    TrustedUnit,
    run_sd_transaction,
)


class Mode(Enum):
    LEADER_BASED = "leader"
    PURE = "pure"


class Role(Enum):
    LEADER = "leader"
    CLIENT = "client"
    OUTSIDE = "outside"


class InfeasibleScenario(ValueError):
    """Parameters cannot satisfy the quota bound or the initial energy gate."""

    def __init__(self, message: str, eta_min_value: Optional[int] = None):
        super().__init__(message)
        self.eta_min_value = eta_min_value


@dataclass(frozen=True)
class AdversaryEvent:
    """Scripted misbehavior: (slot, node, kind[, value]).

    Kinds: alter_bid (node is the victim; value is the announced bid),
    change_own_bid, refuse_auction, fake_claim (value asserted),
    withhold_key, forge_provider, withhold_voucher, free_key, depart, join.
    """

    slot: int
    node: int
    kind: str
    value: Optional[float] = None


@dataclass(frozen=True)
class Scenario:
    params: SimParams
    n_slots: int = 40
    seed: int = 0
    mode: Mode = Mode.LEADER_BASED
    capacity: float = 2000.0        # energy units per node
    area: float = 100.0             # square side, meters
    tx_range: float = 50.0          # meters
    speed_min: float = 0.0          # meters/second; zero keeps topology static
    speed_max: float = 0.0
    initial_credit: float = 1e6
    msg_energy: float = 0.004       # fixed per-message energy quantum
    schedule: Schedule = Schedule.RANDOM_SEEDED
    adversary: tuple = ()


@dataclass
class NodeState:
    node_id: int
    energy: float
    capacity: float
    x: float
    y: float
    alive: bool = True
    role: Role = Role.CLIENT
    profile: Optional[CostProfile] = None

    @property
    def rs(self) -> float:
        return self.energy / self.capacity


class SlotAction(Enum):
    LEAD_SLOT = "lead_slot"
    CLIENT_SLOT = "client_slot"
    PURE_SLOT = "pure_slot"
    MESSAGE = "message"


def energy_debit(
    node: NodeState,
    action: SlotAction,
    params: SimParams,
    *,
    msg_energy: float = 0.004,
    n_messages: int = 1,
) -> NodeState:
    """Apply one slot's (or one message's) energy cost to a node.

    Leading costs the full per-slot requirement captured in the node's
    profile; a client slot costs its advertisement plus per-SD messaging;
    a pure-model slot costs eta self-discoveries at the current rs.  Dead
    nodes are left untouched.
    """
    if not node.alive:
        return node
    if action is SlotAction.LEAD_SLOT:
        if node.profile is None:
            raise ValueError("leading requires a cost profile")
        comp = costs_mod.ComponentCosts(
            node.profile.c_s, node.profile.c_m, node.profile.c_db, node.profile.c_ls
        )
        amount = costs_mod.e_req(comp, node.profile.m_i, params)
    elif action is SlotAction.CLIENT_SLOT:
        amount = (params.adv_per_slot + 3 * params.eta) * msg_energy
    elif action is SlotAction.PURE_SLOT:
        amount = params.eta * sdc(node.rs, params.n, params)
    elif action is SlotAction.MESSAGE:
        amount = n_messages * msg_energy
    else:  # pragma: no cover
        raise ValueError(f"unknown action {action!r}")
    node.energy = max(0.0, node.energy - amount)
    if node.energy <= 0.0:
        node.alive = False
        node.role = Role.OUTSIDE
    return node


@dataclass(frozen=True)
class MetricsFrame:
    time: float
    energy_pct: tuple              # by node id order, percent of capacity
    alive_fraction: float
    payoff: tuple                  # cumulative utility by node id order
    leader: Optional[int]
    p_star: Optional[float]
    msgs_phase1: int
    msgs_phase2: int
    msgs_sd: int
    msgs_adv: int
    feasible: bool = True          # eta >= eta_min at the current size


@dataclass
class ScenarioResult:
    scenario: Scenario
    frames: list
    log: MessageLog
    slot_records: list
    ledger: Optional[CreditLedger]
    first_death_time: Optional[float]
    dissolved: bool = False

    @property
    def final_frame(self) -> MetricsFrame:
        return self.frames[-1]


def _connected_component(seed_node: int, nodes: dict, ids, tx_range: float) -> set:
    ids = [i for i in ids if nodes[i].alive]
    reach = {seed_node}
    frontier = [seed_node]
    while frontier:
        cur = frontier.pop()
        cx, cy = nodes[cur].x, nodes[cur].y
        for other in ids:
            if other not in reach:
                if math.hypot(nodes[other].x - cx, nodes[other].y - cy) <= tx_range:
                    reach.add(other)
                    frontier.append(other)
    return reach


def _draw_connected_positions(rng: Random, n: int, area: float, tx_range: float) -> list:
    """Positions of a connected placement; a cloud is connected by definition."""
    for _ in range(1000):
        pts = [(rng.uniform(0, area), rng.uniform(0, area)) for _ in range(n)]
        probe = {
            i + 1: NodeState(i + 1, 1.0, 1.0, x, y) for i, (x, y) in enumerate(pts)
        }
        if len(_connected_component(1, probe, list(probe), tx_range)) == n:
            return pts
    raise InfeasibleScenario("could not draw a connected initial placement")


def run_scenario(scenario: Scenario) -> ScenarioResult:
    errors = scenario.params.validate()
    if errors:
        raise ValueError("; ".join(errors))
    if scenario.mode is Mode.PURE:
        return _run_pure(scenario)
    return _run_leader_based(scenario)


def _initial_nodes(scenario: Scenario) -> dict:
    params = scenario.params
    rng_energy = Random(f"{scenario.seed}/energy")
    rng_pos = Random(f"{scenario.seed}/pos")
    energies = [scenario.capacity * rng_energy.uniform(0.5, 1.0) for _ in range(params.n)]
    points = _draw_connected_positions(rng_pos, params.n, scenario.area, scenario.tx_range)
    return {
        i + 1: NodeState(
            node_id=i + 1,
            energy=energies[i],
            capacity=scenario.capacity,
            x=points[i][0],
            y=points[i][1],
        )
        for i in range(params.n)
    }


def _run_pure(scenario: Scenario) -> ScenarioResult:
    params = scenario.params
    nodes = _initial_nodes(scenario)
    ids = sorted(nodes)
    payoff = {i: 0.0 for i in ids}
    frames = [_frame(0.0, nodes, payoff, None, None, 0, 0, 0, 0)]
    first_death = None

    for t in range(scenario.n_slots):
        for i in ids:
            node = nodes[i]
            if not node.alive:
                continue
            payoff[i] -= params.eta * sdc(node.rs, params.n, params)
            energy_debit(node, SlotAction.PURE_SLOT, params, msg_energy=scenario.msg_energy)
            if not node.alive and first_death is None:
                first_death = (t + 1) * params.t_select
        frames.append(_frame((t + 1) * params.t_select, nodes, payoff, None, None, 0, 0, 0, 0))

    return ScenarioResult(
        scenario=scenario,
        frames=frames,
        log=MessageLog(),
        slot_records=[],
        ledger=None,
        first_death_time=first_death,
    )


def _frame(time, nodes, payoff, leader, p_star, m1, m2, msd, madv, feasible=True) -> MetricsFrame:
    ids = sorted(nodes)
    return MetricsFrame(
        time=time,
        energy_pct=tuple(100.0 * nodes[i].energy / nodes[i].capacity for i in ids),
        alive_fraction=sum(1 for i in ids if nodes[i].alive) / len(ids),
        payoff=tuple(payoff[i] for i in ids),
        leader=leader,
        p_star=p_star,
        msgs_phase1=m1,
        msgs_phase2=m2,
        msgs_sd=msd,
        msgs_adv=madv,
        feasible=feasible,
    )


class _LeaderEngine:
    """Mutable state of one LEADER_BASED run; split out for readability."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.params = scenario.params
        self.nodes = _initial_nodes(scenario)
        self.ids = sorted(self.nodes)
        self.payoff = {i: 0.0 for i in self.ids}
        self.log = MessageLog()
        self.ledger = CreditLedger({i: scenario.initial_credit for i in self.ids})
        self.tu = TrustedUnit(DEFAULT_SUITE, self.ledger, beta=self.params.beta)
        self.rng_mi = Random(f"{scenario.seed}/mi")
        self.rng_keys = Random(f"{scenario.seed}/keys")
        self.rng_sched = Random(f"{scenario.seed}/sched")
        self.rng_move = Random(f"{scenario.seed}/move")
        self.seq = {i: 0 for i in self.ids}
        self.voucher_no = 0
        self.adv_count = 0
        self.first_death = None
        self.slot_records = []
        self.frames = []
        self.dissolved = False
        self.eta_min_cache = {}
        self.events = {}
        for ev in scenario.adversary:
            self.events.setdefault(ev.slot, []).append(ev)

        self.cloud = CloudState(capacity=self.params.n, members=list(self.ids))
        self.leader_profile: Optional[CostProfile] = None
        self.p_star: Optional[float] = None
        self.need_formation = True

    # -- helpers ----------------------------------------------------------

    def params_for(self, size: int) -> SimParams:
        return self.params.with_n(max(2, size))

    def feasible_now(self) -> bool:
        size = self.cloud.size
        if size < 2:
            return False
        if size not in self.eta_min_cache:
            try:
                self.eta_min_cache[size] = eta_min(self.params_for(size))
            except costs_mod.NoFeasibleEta:
                self.eta_min_cache[size] = None
        bound = self.eta_min_cache[size]
        return bound is not None and self.params.eta >= bound

    def draw_profile(self, node_id: int, size: int) -> CostProfile:
        m_i = self.rng_mi.randint(0, self.params.lambda_max)
        return build_profile(
            node_id,
            self.nodes[node_id].energy,
            self.scenario.capacity,
            self.params_for(size),
            m_i=m_i,
        )

    def committed_bids(self, participants) -> dict:
        size = len(participants)
        p = self.params_for(size)
        bids = {}
        for i in participants:
            profile = self.draw_profile(i, size)
            self.nodes[i].profile = profile
            if profile.feasible:
                value = equilibrium_bid(profile.sdpc, p.n, p.k_upper)
                bids[i] = Bid.committed(i, value)
        return bids

    def session_key(self) -> bytes:
        return self.rng_keys.getrandbits(256).to_bytes(32, "big")

    # -- slot pieces -------------------------------------------------------

    def form_cloud(self, slot: int) -> bool:
        """Phase-I tournament among the current members; returns success."""
        participants = [m for m in self.cloud.members if m not in self.cloud.blacklist]
        bids = self.committed_bids(participants)
        if len(bids) < 2:
            self.dissolved = True
            return False
        result = run_tournament(
            bids.values(),
            self.scenario.schedule,
            seed=self.rng_sched.getrandbits(63),
            log=self.log,
        )
        self.cloud.members = sorted(result.cloud.members)
        self.cloud.leader = result.cloud.leader
        self.p_star = result.cloud.sd_fee
        self.cloud.p_star = self.p_star
        self.leader_profile = self.nodes[result.cloud.leader].profile
        for i in self.ids:
            if i in self.cloud.members:
                self.nodes[i].role = (
                    Role.LEADER if i == self.cloud.leader else Role.CLIENT
                )
        self.need_formation = False
        return True

    def serve_sds(self, slot: int) -> None:
        leader = self.cloud.leader
        members = list(self.cloud.members)
        clients = [m for m in members if m != leader]
        events = self.events.get(slot, [])
        leader_behavior = LeaderBehavior.HONEST
        for ev in events:
            if ev.kind == "withhold_key" and ev.node == leader:
                leader_behavior = LeaderBehavior.WITHHOLD_KEY
            elif ev.kind == "forge_provider" and ev.node == leader:
                leader_behavior = LeaderBehavior.FORGE_PROVIDER_MESSAGE
        pending_arbitration = []
        pending_appeals = []
        free_key_claims = []
        vouchers = []

        for sr in clients:
            sr_behavior = RequesterBehavior.HONEST
            for ev in events:
                if ev.node == sr and ev.kind == "withhold_voucher":
                    sr_behavior = RequesterBehavior.WITHHOLD_VOUCHER
                elif ev.node == sr and ev.kind == "free_key":
                    sr_behavior = RequesterBehavior.FREE_KEY_VIA_TU
            candidates = [m for m in members if m not in (sr, leader)] or [leader]
            for q in range(self.params.eta):
                provider = candidates[(self.seq[sr] + q) % len(candidates)]
                self.seq[sr] += 1
                self.voucher_no += 1
                state = run_sd_transaction(
                    sr,
                    leader,
                    service_type=1 + (q % 3),
                    suite=self.tu.suite,
                    ledger=self.ledger,
                    log=self.log,
                    seq_number=self.seq[sr],
                    voucher_no=self.voucher_no,
                    fee=self.p_star,
                    session_key=self.session_key(),
                    provider_lookup=lambda _service, _p=provider: _p,
                    leader_behavior=leader_behavior,
                    sr_behavior=sr_behavior,
                    slot_index=slot,
                )
                if state.voucher is not None:
                    if leader_behavior is LeaderBehavior.WITHHOLD_KEY:
                        pending_arbitration.append(state)
                    elif sr_behavior is RequesterBehavior.FREE_KEY_VIA_TU:
                        free_key_claims.append(state)
                        vouchers.append(state.voucher)
                    elif state.provider_message_valid is False:
                        pending_appeals.append(state)
                        vouchers.append(state.voucher)
                    else:
                        vouchers.append(state.voucher)

        # TU contact at the slot boundary: appeals, arbitrations, redemption
        for state in pending_appeals:
            self.tu.appeal_forged_message(state.flow, state.voucher)
        for state in pending_arbitration:
            self.tu.arbitrate_withheld_key(state.flow, state.voucher)
        for state in free_key_claims:
            self.tu.release_key_for_evidence(state.flow, state.voucher)
        self.tu.redeem_vouchers(leader, vouchers)

        # utility accrual for the slot (honest-path accounting)
        size = len(members)
        m_total = (size - 1) * self.params.eta
        for sr in clients:
            self.payoff[sr] -= self.params.eta * self.p_star
        if self.leader_profile is not None and self.leader_profile.feasible:
            self.payoff[leader] += m_total * (self.p_star - self.leader_profile.sdpc)
        self.adv_count += self.params.adv_per_slot * len(clients)

    def apply_slot_energy(self, slot: int) -> None:
        leader = self.cloud.leader
        for i in list(self.cloud.members):
            node = self.nodes[i]
            if i == leader:
                node.profile = self.leader_profile
                energy_debit(node, SlotAction.LEAD_SLOT, self.params_for(self.cloud.size))
            else:
                energy_debit(
                    node,
                    SlotAction.CLIENT_SLOT,
                    self.params,
                    msg_energy=self.scenario.msg_energy,
                )
            if not node.alive and self.first_death is None:
                self.first_death = (slot + 1) * self.params.t_select

    def handle_churn(self, slot: int) -> None:
        # deaths first, then scripted departures/joins, then mobility
        for i in sorted(self.cloud.members):
            if not self.nodes[i].alive:
                self._depart(i, unused=0)
        for ev in self.events.get(slot, []):
            if ev.kind == "depart" and ev.node in self.cloud.members:
                self.nodes[ev.node].role = Role.OUTSIDE
                self._depart(ev.node, unused=self.params.eta)
            elif ev.kind == "join":
                self._join(ev.node)
        self._move(slot)
        if self.cloud.leader is not None and self.scenario.speed_max > 0:
            component = _connected_component(
                self.cloud.leader, self.nodes, self.cloud.members, self.scenario.tx_range
            )
            for i in sorted(self.cloud.members):
                if i not in component:
                    self.nodes[i].role = Role.OUTSIDE
                    self._depart(i, unused=0)

    def _depart(self, node_id: int, unused: int) -> None:
        if node_id not in self.cloud.members:
            return
        outcome = handle_departure(self.cloud, node_id, unused_quota=unused)
        if outcome is DepartureOutcome.LEADER_DEPARTED:
            self.need_formation = True
            self.leader_profile = None
        elif outcome is DepartureOutcome.SINGLETON:
            self.dissolved = True

    def _join(self, node_id: int) -> None:
        if node_id not in self.nodes:
            rng = Random(f"{self.scenario.seed}/join/{node_id}")
            self.nodes[node_id] = NodeState(
                node_id=node_id,
                energy=self.scenario.capacity * rng.uniform(0.5, 1.0),
                capacity=self.scenario.capacity,
                x=rng.uniform(0, self.scenario.area),
                y=rng.uniform(0, self.scenario.area),
                role=Role.OUTSIDE,
            )
            self.ids = sorted(self.nodes)
            self.payoff.setdefault(node_id, 0.0)
            self.seq.setdefault(node_id, 0)
            self.ledger.open_account(node_id, self.scenario.initial_credit)
        decision = handle_join(self.cloud, node_id)
        if decision.value == "admitted":
            self.nodes[node_id].role = Role.CLIENT

    def _move(self, slot: int) -> None:
        if self.scenario.speed_max <= 0:
            return
        seconds = self.params.t_select * 60.0
        for i in self.ids:
            node = self.nodes[i]
            if not node.alive:
                continue
            speed = self.rng_move.uniform(self.scenario.speed_min, self.scenario.speed_max)
            heading = self.rng_move.uniform(0, 2 * math.pi)
            dist = speed * seconds
            node.x = min(self.scenario.area, max(0.0, node.x + dist * math.cos(heading)))
            node.y = min(self.scenario.area, max(0.0, node.y + dist * math.sin(heading)))

    def elect(self, slot: int) -> None:
        """Run the slot auction at the alpha point; settle claims and blacklists."""
        participants = [m for m in self.cloud.members if m not in self.cloud.blacklist]
        if len(participants) < 1:
            self.dissolved = True
            return
        bids = self.committed_bids(participants)
        if not bids:
            self.dissolved = True
            return

        behaviors = SlotBehaviors()
        for ev in self.events.get(slot, []):
            if ev.kind == "alter_bid" and ev.node in bids:
                behaviors.altered_announcements[ev.node] = ev.value
            elif ev.kind == "change_own_bid" and ev.node == self.cloud.leader:
                behaviors.announce_own = ev.value
            elif ev.kind == "refuse_auction" and ev.node == self.cloud.leader:
                behaviors.refuse = True
            elif ev.kind == "fake_claim" and ev.node in bids:
                behaviors.fake_claims[ev.node] = ev.value

        record = {
            "slot": slot,
            "operator": self.cloud.leader,
            "n_members": self.cloud.size,
            "bids": {str(i): bids[i].value for i in sorted(bids)},
            "claims": [],
            "blacklist_delta": [],
            "rerun_by": None,
        }

        try:
            auction = run_slot_auction(self.cloud, bids, self.log, behaviors)
        except AuctionRefused:
            self.cloud.blacklist.add(self.cloud.leader, BlacklistReason.REFUSED_AUCTION)
            record["blacklist_delta"].append(
                {"node": self.cloud.leader, "reason": "refused_auction"}
            )
            self.cloud.members = [m for m in self.cloud.members if m != self.cloud.leader]
            self.need_formation = True
            self.slot_records.append(record)
            return

        resolution = process_claims(auction, self.cloud, self.log)
        record["claims"] = [
            {"claimant": c.claimant, "asserted": c.asserted_bid, "verdict": c.verdict.value}
            for c in auction.claims
        ]
        record["blacklist_delta"] = [
            {"node": node, "reason": reason.value}
            for node, reason in sorted(resolution.blacklisted.items())
        ]

        final = resolution.final_leader
        if final is None and resolution.rerunner is not None:
            # the designated node repeats the auction among the unblacklisted
            record["rerun_by"] = resolution.rerunner
            self.cloud.members = [
                m for m in self.cloud.members if m not in self.cloud.blacklist
            ]
            rerun_cloud = CloudState(
                capacity=self.cloud.capacity,
                members=list(self.cloud.members),
                leader=resolution.rerunner,
                slot_index=self.cloud.slot_index,
                blacklist=self.cloud.blacklist,
            )
            rerun_bids = self.committed_bids(rerun_cloud.members)
            rerun = run_slot_auction(rerun_cloud, rerun_bids, self.log)
            rerun_res = process_claims(rerun, rerun_cloud, self.log)
            final = rerun_res.final_leader
        elif final is None:
            # commitment violation without a rerunner: fall back to formation
            self.cloud.members = [
                m for m in self.cloud.members if m not in self.cloud.blacklist
            ]
            self.need_formation = True
            self.slot_records.append(record)
            return

        record["winner"] = final
        if final is not None:
            leader_profile = self.nodes[final].profile
            new_p = auction.announced_bids.get(final)
            record["p_star"] = new_p
            self.cloud.leader = final
            self.cloud.p_star = new_p
            self.p_star = new_p
            self.leader_profile = leader_profile
            for i in self.cloud.members:
                self.nodes[i].role = Role.LEADER if i == final else Role.CLIENT
        self.slot_records.append(record)

    def snapshot(self, time: float) -> None:
        self.frames.append(
            _frame(
                time,
                self.nodes,
                self.payoff,
                self.cloud.leader if not self.need_formation else None,
                self.p_star if not self.need_formation else None,
                self.log.count_phase1(),
                self.log.count_phase2(),
                self.log.count_transaction(),
                self.adv_count,
                feasible=self.feasible_now(),
            )
        )


def _run_leader_based(scenario: Scenario) -> ScenarioResult:
    params = scenario.params
    engine = _LeaderEngine(scenario)

    bound = eta_min(params)
    if params.eta < bound:
        raise InfeasibleScenario(
            f"eta={params.eta} is below the minimum feasible quota eta_min={bound} "
            f"for n={params.n}; raise eta or adjust the cost constants",
            eta_min_value=bound,
        )
    probe_params = params
    rng_probe = Random(f"{scenario.seed}/mi-probe")
    for i in engine.ids:
        profile = build_profile(
            i, engine.nodes[i].energy, scenario.capacity, probe_params, m_i=params.lambda_max
        )
        if not profile.feasible:
            raise InfeasibleScenario(
                f"node {i} starts below the leadership energy requirement; "
                "raise capacity or initial energy"
            )

    if not engine.form_cloud(slot=0):
        raise InfeasibleScenario("formation failed: fewer than two feasible bidders")
    engine.snapshot(0.0)

    for t in range(scenario.n_slots):
        if engine.dissolved or engine.cloud.size < 2:
            engine.dissolved = True
            break
        if engine.need_formation:
            if not engine.form_cloud(slot=t):
                break
        engine.serve_sds(t)
        engine.apply_slot_energy(t)
        engine.handle_churn(t)
        if not engine.dissolved and not engine.need_formation and engine.cloud.size >= 1:
            engine.elect(t)
        engine.cloud.advance_slot()
        engine.snapshot((t + 1) * params.t_select)

    return ScenarioResult(
        scenario=scenario,
        frames=engine.frames,
        log=engine.log,
        slot_records=engine.slot_records,
        ledger=engine.ledger,
        first_death_time=engine.first_death,
        dissolved=engine.dissolved,
    )


# -- metrics ---------------------------------------------------------------


def linear_fit(points) -> tuple:
    """Least-squares slope and intercept for (x, y) pairs."""
    pts = list(points)
    n = len(pts)
    if n < 2:
        raise ValueError("need at least two points to fit a line")
    mean_x = sum(p[0] for p in pts) / n
    mean_y = sum(p[1] for p in pts) / n
    sxx = sum((p[0] - mean_x) ** 2 for p in pts)
    sxy = sum((p[0] - mean_x) * (p[1] - mean_y) for p in pts)
    slope = sxy / sxx
    return slope, mean_y - slope * mean_x


def energy_std(frame: MetricsFrame) -> float:
    return statistics.pstdev(frame.energy_pct)


def summarize(result: ScenarioResult, pure: Optional[ScenarioResult] = None) -> dict:
    """Cross-node energy spread, liveness, and payoff deltas versus a paired run."""
    frames = result.frames
    summary = {
        "mode": result.scenario.mode.value,
        "seed": result.scenario.seed,
        "slots": len(frames) - 1,
        "energy_std": [energy_std(f) for f in frames],
        "alive_fraction": [f.alive_fraction for f in frames],
        "terminal_energy_std": energy_std(frames[-1]),
        "terminal_alive_fraction": frames[-1].alive_fraction,
        "first_death_time": result.first_death_time,
        "dissolved": result.dissolved,
        "messages": {
            "phase1": frames[-1].msgs_phase1,
            "phase2": frames[-1].msgs_phase2,
            "sd": frames[-1].msgs_sd,
            "advertisement": frames[-1].msgs_adv,
        },
    }
    if pure is not None:
        horizon = min(len(frames), len(pure.frames))
        deltas = []
        for k in range(horizon):
            lf, pf = frames[k], pure.frames[k]
            deltas.append(tuple(a - b for a, b in zip(lf.payoff, pf.payoff)))
        summary["payoff_delta_final"] = deltas[-1]
        summary["payoff_delta_min"] = min(min(d) for d in deltas)
    return summary


# -- artifact export ---------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def write_metrics_csv(result: ScenarioResult, path) -> None:
    ids = sorted(
        range(1, len(result.frames[0].energy_pct) + 1)
    )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = (
            ["time", "alive_fraction", "leader", "p_star", "msgs_phase1", "msgs_phase2", "msgs_sd", "msgs_adv", "feasible"]
            + [f"energy_pct_{i}" for i in ids]
            + [f"payoff_{i}" for i in ids]
        )
        writer.writerow(header)
        for f in result.frames:
            writer.writerow(
                [
                    _fmt(f.time),
                    _fmt(f.alive_fraction),
                    _fmt(f.leader),
                    _fmt(f.p_star),
                    f.msgs_phase1,
                    f.msgs_phase2,
                    f.msgs_sd,
                    f.msgs_adv,
                    int(f.feasible),
                ]
                + [_fmt(e) for e in f.energy_pct]
                + [_fmt(p) for p in f.payoff]
            )


def write_slots_csv(result: ScenarioResult, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["slot", "operator", "winner", "p_star", "n_members", "bids", "claims", "blacklist"]
        )
        for rec in result.slot_records:
            bids = "|".join(f"{k}:{_fmt(v)}" for k, v in sorted(rec["bids"].items(), key=lambda kv: int(kv[0])))
            claims = "|".join(
                f"{c['claimant']}:{_fmt(c['asserted'])}:{c['verdict']}" for c in rec["claims"]
            )
            blacklist = "|".join(f"{b['node']}:{b['reason']}" for b in rec["blacklist_delta"])
            writer.writerow(
                [
                    rec["slot"],
                    rec["operator"],
                    _fmt(rec.get("winner")),
                    _fmt(rec.get("p_star")),
                    rec["n_members"],
                    bids,
                    claims,
                    blacklist,
                ]
            )


def write_slots_jsonl(result: ScenarioResult, path) -> None:
    with open(path, "w") as fh:
        for rec in result.slot_records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def write_summary_txt(result: ScenarioResult, path, pure: Optional[ScenarioResult] = None) -> None:
    summary = summarize(result, pure)
    with open(path, "w") as fh:
        fh.write(f"mode: {summary['mode']}\n")
        fh.write(f"seed: {summary['seed']}\n")
        fh.write(f"slots completed: {summary['slots']}\n")
        fh.write(f"terminal energy std (pct points): {_fmt(summary['terminal_energy_std'])}\n")
        fh.write(f"terminal alive fraction: {_fmt(summary['terminal_alive_fraction'])}\n")
        fh.write(f"first death time: {_fmt(summary['first_death_time'])}\n")
        fh.write(f"dissolved: {summary['dissolved']}\n")
        for phase, count in summary["messages"].items():
            fh.write(f"messages {phase}: {count}\n")
        if "payoff_delta_min" in summary:
            fh.write(f"min payoff delta vs pure: {_fmt(summary['payoff_delta_min'])}\n")
