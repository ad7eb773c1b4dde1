"""Cloud-wide model parameters.

One frozen dataclass carries everything the cost model and the protocols
need: cloud size, the SD quota, slot timing, the belief-support bound, and
the cost-form constants.  ``validate()`` reports every violation at once
instead of stopping at the first.
"""

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class SimParams:
    n: int = 10                 # participating nodes
    eta: int = 5                # SDs the leader owes each client per slot
    t_select: float = 5.0       # slot duration (minutes)
    t_adv: float = 0.5          # advertisement period (minutes)
    k_upper: float = 10.0       # upper bound of the uniform cost belief [0, K]
    alpha: float = 0.9          # fraction of the slot at which the next election runs
    lambda_max: int = 5         # upper bound on per-slot self-searches m_i
    beta: float = 0.5           # fraction of voucher value a cheating leader keeps
    rs_min: float = 0.3         # resource-status validation range
    rs_max: float = 1.0
    # Cost-form constants.  Defaults are calibrated so that at n=10 the
    # per-SD leader cost lands in (0, 10) and the self-discovery cost in
    # (3, 15) over the whole rs range, and so that a slot of leadership
    # drains roughly twice what a slot of self-discovery does (which is
    # what makes the energy-balancing effect visible at desk scale).
    kappa_s: float = 0.01       # database search
    kappa_m: float = 0.01       # per-SD messaging (3 messages)
    kappa_db: float = 0.45      # database build/update per advertisement processed
    kappa_ls: float = 0.13      # leader-selection messaging, 2(n-1) sends
    kappa_p: float = 0.45       # self-discovery query flooding, per peer
    kappa_q: float = 0.05       # self-discovery fixed part

    @property
    def m_total(self) -> int:
        """Total SDs the leader performs per slot: M = (n-1)*eta."""
        return (self.n - 1) * self.eta

    @property
    def adv_per_slot(self) -> int:
        """How many times each client advertises per slot."""
        return int(self.t_select // self.t_adv)

    def with_n(self, n: int) -> "SimParams":
        return replace(self, n=n)

    def validate(self) -> list[str]:
        errors = []
        if self.n < 2:
            errors.append(f"n must be >= 2 (got {self.n})")
        if self.eta < 1:
            errors.append(f"eta must be >= 1 (got {self.eta})")
        if not (0 < self.t_adv <= self.t_select):
            errors.append(
                f"need 0 < t_adv <= t_select (got t_adv={self.t_adv}, t_select={self.t_select})"
            )
        if not (0 < self.alpha < 1):
            errors.append(f"alpha must be in (0, 1) (got {self.alpha})")
        if not (0 < self.beta < 1):
            errors.append(f"beta must be in (0, 1) (got {self.beta})")
        if not (0 < self.rs_min <= self.rs_max):
            errors.append(
                f"need 0 < rs_min <= rs_max (got rs_min={self.rs_min}, rs_max={self.rs_max})"
            )
        if not self.k_upper > 0:
            errors.append(f"k_upper must be > 0 (got {self.k_upper})")
        if self.lambda_max < 0:
            errors.append(f"lambda_max must be >= 0 (got {self.lambda_max})")
        for name in ("kappa_s", "kappa_m", "kappa_db", "kappa_ls", "kappa_p", "kappa_q"):
            if getattr(self, name) <= 0:
                errors.append(f"{name} must be > 0 (got {getattr(self, name)})")
        if not errors and self.m_total <= 0:
            errors.append("M = (n-1)*eta must be strictly positive")
        if not errors and self.adv_per_slot < 1:
            errors.append("t_select/t_adv must allow at least one advertisement per slot")
        return errors

    def check(self) -> "SimParams":
        errors = self.validate()
        if errors:
            raise ValueError("; ".join(errors))
        return self


def rs_grid(params: SimParams, points: int = 1024) -> list[float]:
    """Evenly spaced rs values over [rs_min, rs_max], endpoints included.

    This grid approximates the continuous maximisation in the minimum-quota
    bound; 1024 points is plenty for the 1/rs cost forms used here.
    """
    lo, hi = params.rs_min, params.rs_max
    if points < 2 or hi == lo:
        return [lo, hi]
    step = (hi - lo) / (points - 1)
    grid = [lo + i * step for i in range(points)]
    grid[-1] = hi
    return grid
