"""Cost model for running batches of physical experiments.

Rates are quoted per hour or per day and durations in days, hours, minutes
or seconds. Everything is converted to one time unit before combining; a day
counts as 24 hours.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

SECONDS_PER = {"hour": 3600.0, "minute": 60.0, "second": 1.0}


@dataclass(frozen=True)
class EconParams:
    """Rates and durations of an experimental campaign.

    Attributes
    ----------
    c_eng : float
        Staff cost, $/hour per person.
    c_recharge, c_wrecharge, c_lost_time : float
        Printer recharge, water-channel recharge and opportunity cost, $/day.
    t_print, t_3dfins : float
        Print times for the main body and one set of fins, hours.
    t_lead : float
        Lead time before channel access, days.
    t_setup, t_reconfig : float
        Channel set-up per batch and model reconfiguration per design, minutes.
    t_exp : float
        One inner-loop experiment, seconds.
    m, m_prime : int
        Staff needed for printing and for running experiments.
    """

    c_eng: float = 30.0
    c_recharge: float = 240.0
    c_wrecharge: float = 2400.0
    c_lost_time: float = 1200.0
    t_print: float = 12.0
    t_3dfins: float = 4.0
    t_lead: float = 5.0
    t_setup: float = 30.0
    t_reconfig: float = 5.0
    t_exp: float = 1200.0
    m: int = 1
    m_prime: int = 2

    def __post_init__(self) -> None:
        for name in (
            "c_eng", "c_recharge", "c_wrecharge", "c_lost_time", "t_print",
            "t_3dfins", "t_lead", "t_setup", "t_reconfig", "t_exp",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.m < 0 or self.m_prime < 0:
            raise ValueError("staff counts must be nonnegative")


@dataclass(frozen=True)
class CostBreakdown:
    c_3d: float
    c_3dfins: float
    c_lead: float
    c_wchannel: float
    n_per_batch: int
    n_convergence: int | None = None

    @property
    def per_batch_total(self) -> float:
        return self.c_3d + self.c_3dfins + self.c_lead + self.c_wchannel

    @property
    def campaign_total(self) -> float | None:
        if self.n_convergence is None:
            return None
        return self.n_convergence * self.per_batch_total


def batch_cost(params: EconParams, n_per_batch: int, unit: str = "hour") -> CostBreakdown:
    """Cost of one batch of ``n_per_batch`` designs.

    ``unit`` selects the internal time unit; the dollars do not depend on it.
    """
    if int(n_per_batch) != n_per_batch or n_per_batch < 1:
        raise ValueError("n_per_batch must be a positive integer")
    if unit not in SECONDS_PER:
        raise ValueError(f"unit must be one of {sorted(SECONDS_PER)}")
    n = int(n_per_batch)
    u = SECONDS_PER[unit]
    hour, day, minute, second = 3600.0 / u, 24 * 3600.0 / u, 60.0 / u, 1.0 / u

    p = params
    eng = p.c_eng / hour  # $ per unit time per person
    recharge = p.c_recharge / day
    wrecharge = p.c_wrecharge / day
    lost = p.c_lost_time / day

    print_rate = p.m * eng + recharge
    c_3d = print_rate * n * p.t_print * hour
    c_3dfins = print_rate * n * p.t_3dfins * hour
    c_lead = lost * p.t_lead * day
    channel_time = p.t_setup * minute + n * p.t_exp * second + n * p.t_reconfig * minute
    c_wchannel = (p.m_prime * eng + wrecharge) * channel_time
    return CostBreakdown(c_3d, c_3dfins, c_lead, c_wchannel, n)


def campaign_cost(params: EconParams, n_per_batch: int, n_convergence: int) -> CostBreakdown:
    """Batch cost multiplied by the number of batches needed to converge."""
    if int(n_convergence) != n_convergence or n_convergence < 1:
        raise ValueError("n_convergence must be a positive integer")
    b = batch_cost(params, n_per_batch)
    return CostBreakdown(b.c_3d, b.c_3dfins, b.c_lead, b.c_wchannel, b.n_per_batch, int(n_convergence))


@dataclass(frozen=True)
class EconomiesReport:
    rows: tuple[CostBreakdown, ...]
    monotone_decreasing: bool

    def table(self) -> str:
        head = f"{'N':>3} {'N_conv':>6} {'C_3D':>9} {'C_3DFins':>9} {'C_lead':>9} {'C_Wchan':>9} {'per batch':>10} {'total':>10}"
        lines = [head, "-" * len(head)]
        for r in self.rows:
            lines.append(
                f"{r.n_per_batch:>3d} {r.n_convergence:>6d} {r.c_3d:>9.2f} {r.c_3dfins:>9.2f} "
                f"{r.c_lead:>9.2f} {r.c_wchannel:>9.2f} {r.per_batch_total:>10.2f} {r.campaign_total:>10.0f}"
            )
        lines.append(f"total cost monotone decreasing: {'yes' if self.monotone_decreasing else 'no'}")
        return "\n".join(lines)


DEFAULT_SCENARIOS: tuple[tuple[int, int], ...] = ((1, 8), (3, 6), (4, 5))


def economies_report(
    params: EconParams, scenarios: Sequence[tuple[int, int]] = DEFAULT_SCENARIOS
) -> EconomiesReport:
    """Campaign costs for ``(n_per_batch, n_convergence)`` scenarios, in the given order."""
    if not scenarios:
        raise ValueError("at least one scenario is required")
    rows = tuple(campaign_cost(params, n, k) for n, k in scenarios)
    totals = [r.campaign_total for r in rows]
    mono = all(b < a for a, b in zip(totals, totals[1:]))
    return EconomiesReport(rows, mono)
