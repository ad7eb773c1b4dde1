"""Per-node economics: component costs, per-SD costs, payoffs, and the
minimum feasible SD quota.

A node's resource status rs is its remaining energy fraction.  Every
component cost scales as 1/rs, so costs of any two nodes rank identically
under both the leader-based and the self-discovery cost, which is what the
leader-selection argument relies on.

Component cost forms (constants live in SimParams):

    c_s  = kappa_s * log2(n) / rs                 search one of n-1 entries
    c_m  = kappa_m / rs                           the 3-message SD exchange
    c_db = kappa_db * (n-1) * floor(Ts/Ta) / rs   one unit per advertisement
    c_ls = kappa_ls * 2(n-1) / rs                 election messaging, 2(n-1) sends
    sdc  = (kappa_p * (n-1) + kappa_q) / rs       query flooding to n-1 peers

Per-SD leader cost, feasibility gate, and required energy:

    c    = c_s + c_m + (c_db + c_ls + m*c_s) / M        with M = (n-1)*eta
    c    = INFEASIBLE                                    if energy <= e_req
    e_req = (M+m)*c_s + M*c_m + c_db + c_ls              (equals M*c)
"""

import math
from dataclasses import dataclass
from typing import NamedTuple, Union

from .params import SimParams, rs_grid


class Infeasible:
    """Sentinel for an unaffordable leadership slot.

    Deliberately not a float: any arithmetic on it raises instead of
    silently propagating an infinity through payoff computations.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFEASIBLE"


INFEASIBLE = Infeasible()

Cost = Union[float, Infeasible]


class DomainError(ValueError):
    pass


class NoFeasibleEta(ValueError):
    """No finite SD quota makes every bid undercut self-discovery."""


class ComponentCosts(NamedTuple):
    c_s: float
    c_m: float
    c_db: float
    c_ls: float


@dataclass(frozen=True)
class CostProfile:
    """Everything the auction needs to know about one node's economics."""

    node_id: int
    rs: float
    c_s: float
    c_m: float
    c_db: float
    c_ls: float
    m_i: int
    energy: float
    sdpc: Cost
    sdc: float

    @property
    def feasible(self) -> bool:
        return not isinstance(self.sdpc, Infeasible)


def component_costs(rs: float, params: SimParams) -> ComponentCosts:
    if rs <= 0:
        raise DomainError(f"resource status must be > 0 (got {rs})")
    n = params.n
    return ComponentCosts(
        c_s=params.kappa_s * math.log2(n) / rs,
        c_m=params.kappa_m / rs,
        c_db=params.kappa_db * (n - 1) * params.adv_per_slot / rs,
        c_ls=params.kappa_ls * 2 * (n - 1) / rs,
    )


def sdc(rs: float, n: int, params: SimParams) -> float:
    if rs <= 0:
        raise DomainError(f"resource status must be > 0 (got {rs})")
    return (params.kappa_p * (n - 1) + params.kappa_q) / rs


def e_req(costs: ComponentCosts, m_i: int, params: SimParams) -> float:
    """Minimum energy to hold leadership for one slot."""
    m_total = params.m_total
    return (m_total + m_i) * costs.c_s + m_total * costs.c_m + costs.c_db + costs.c_ls


def sdpc_value(costs: ComponentCosts, m_i: int, params: SimParams) -> float:
    """Per-SD leadership cost, ignoring the energy gate."""
    return costs.c_s + costs.c_m + (costs.c_db + costs.c_ls + m_i * costs.c_s) / params.m_total


def sdpc(profile: "CostProfile", params: SimParams) -> Cost:
    """Per-SD leadership cost with the energy gate applied.

    The boundary energy == e_req is infeasible: a node must strictly exceed
    the requirement to bid.
    """
    costs = ComponentCosts(profile.c_s, profile.c_m, profile.c_db, profile.c_ls)
    if profile.energy <= e_req(costs, profile.m_i, params):
        return INFEASIBLE
    return sdpc_value(costs, profile.m_i, params)


def build_profile(
    node_id: int, energy: float, capacity: float, params: SimParams, m_i: int = 0
) -> CostProfile:
    """Assemble a CostProfile from a node's current energy."""
    rs = energy / capacity
    costs = component_costs(rs, params)
    gated: Cost
    if energy <= e_req(costs, m_i, params):
        gated = INFEASIBLE
    else:
        gated = sdpc_value(costs, m_i, params)
    return CostProfile(
        node_id=node_id,
        rs=rs,
        c_s=costs.c_s,
        c_m=costs.c_m,
        c_db=costs.c_db,
        c_ls=costs.c_ls,
        m_i=m_i,
        energy=energy,
        sdpc=gated,
        sdc=sdc(rs, params.n, params),
    )


def leader_payoff(p_star: float, profile: CostProfile, params: SimParams) -> float:
    """M * (p* - c): what a slot of leadership nets at fee p*."""
    if isinstance(profile.sdpc, Infeasible):
        raise DomainError("leader payoff undefined for an infeasible profile")
    return params.m_total * (p_star - profile.sdpc)


def client_payoff(p_star: float, params: SimParams) -> float:
    """-eta * p*: a client pays the fee for each of its eta SDs."""
    return -params.eta * p_star


def pure_payoff(sdc_cost: float, params: SimParams) -> float:
    """-eta * sdc: self-discovery cost for the same eta lookups."""
    return -params.eta * sdc_cost


def eta_min(params: SimParams, grid_points: int = 1024) -> int:
    """Smallest integer quota such that every node's bid stays strictly
    below its self-discovery cost, for all rs in the validation range with
    the self-search count at its upper bound.

    Closed form: with the bid linear in the per-SD cost, the constraint
    solves to eta >= N(rs)/D(rs) where

        N = (n-1) * q2 * (c_db + c_ls + lambda*c_s)
        D = q1 * q2 * sdc - (n-1)^3 * K - (n-1)^2 * q2 * (c_s + c_m)
        q1 = n(n-1)+1,  q2 = (n-1)^2+1

    The strict inequality makes the answer floor(max bound)+1.  A
    non-positive D anywhere on the grid means even an infinite quota cannot
    help (the quota-independent part of the bid already exceeds sdc).
    """
    n = params.n
    k = params.k_upper
    q1 = n * (n - 1) + 1
    q2 = (n - 1) ** 2 + 1
    worst = 0.0
    for rs in rs_grid(params, grid_points):
        costs = component_costs(rs, params)
        bar_c = sdc(rs, n, params)
        num = (n - 1) * q2 * (costs.c_db + costs.c_ls + params.lambda_max * costs.c_s)
        den = q1 * q2 * bar_c - (n - 1) ** 3 * k - (n - 1) ** 2 * q2 * (costs.c_s + costs.c_m)
        if den <= 0:
            raise NoFeasibleEta(
                f"no finite quota works: bid floor exceeds self-discovery cost at rs={rs:.4f} (n={n})"
            )
        worst = max(worst, num / den)
    return max(1, math.floor(worst) + 1)
