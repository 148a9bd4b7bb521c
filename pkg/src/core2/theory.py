"""Synthetic weak/strong estimator pairs and brute-force verification that
extrapolating past the strong estimator helps.

An instance holds, per mixture component, a ground-truth mean and two
approximations ("weak" and "strong").  The guidance error under a shared
scale w is the weighted quadratic
    E(w) = sum_i w_i || w mu_i^strong + (1 - w) mu_i^weak - mu_i ||^2,
whose closed-form minimizer is compared against a grid search.  The
constraint set mirrors the easy/difficult error-budget split: both models
are tight on the easy components, the strong model is strictly better
everywhere, the easy-budget gap is smaller than the difficult-budget gap,
and each strong mean lies between the weak mean and the truth (positive
inner product).  Under those constraints the minimizer provably exceeds 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

REJECTION_BUDGET = 100_000


class ConstructionError(RuntimeError):
    pass


@dataclass(frozen=True)
class ComponentTriple:
    weight: float
    mu: np.ndarray
    mu_weak: np.ndarray
    mu_strong: np.ndarray
    variance: float = 1.0  # shared across truth/weak/strong

    def betweenness(self) -> float:
        """Inner product <mu - mu_strong, mu_strong - mu_weak>; must be > 0."""
        return float((self.mu - self.mu_strong) @ (self.mu_strong - self.mu_weak))


@dataclass(frozen=True)
class TheoremInstance:
    triples: tuple[ComponentTriple, ...]
    split_index: int          # easy components are indices < split_index
    eta_easy_weak: float
    eta_easy_strong: float
    eta_difficult_weak: float
    eta_difficult_strong: float

    @property
    def num_components(self) -> int:
        return len(self.triples)


def _partition_error(triples, which: str, lo: int, hi: int) -> float:
    total = 0.0
    for tr in triples[lo:hi]:
        approx = tr.mu_weak if which == "weak" else tr.mu_strong
        total += tr.weight * float(np.sum((tr.mu - approx) ** 2))
    return total


@dataclass(frozen=True)
class ConstraintReport:
    easy_within_budget: bool       # easy error <= eta_easy, both models
    difficult_band: bool           # eta_easy < difficult error <= eta_difficult
    gap_ordering: bool             # |easy gap| < |difficult gap|
    strong_dominates: bool         # eta_strong < eta_weak on both budgets
    betweenness: bool              # positive inner product per component
    residuals: dict = field(repr=False, default_factory=dict)

    @property
    def all_ok(self) -> bool:
        return (self.easy_within_budget and self.difficult_band and
                self.gap_ordering and self.strong_dominates and self.betweenness)


def check_constraints(inst: TheoremInstance) -> ConstraintReport:
    """Evaluate every constraint group literally, returning residuals."""
    m1 = inst.split_index
    m = inst.num_components
    easy_w = _partition_error(inst.triples, "weak", 0, m1)
    easy_s = _partition_error(inst.triples, "strong", 0, m1)
    diff_w = _partition_error(inst.triples, "weak", m1, m)
    diff_s = _partition_error(inst.triples, "strong", m1, m)
    inner = [tr.betweenness() for tr in inst.triples]
    report = ConstraintReport(
        easy_within_budget=(easy_w <= inst.eta_easy_weak
                            and easy_s <= inst.eta_easy_strong),
        difficult_band=(inst.eta_easy_weak < diff_w <= inst.eta_difficult_weak
                        and inst.eta_easy_strong < diff_s <= inst.eta_difficult_strong),
        gap_ordering=(abs(inst.eta_easy_weak - inst.eta_easy_strong)
                      < abs(inst.eta_difficult_weak - inst.eta_difficult_strong)),
        strong_dominates=(inst.eta_easy_strong < inst.eta_easy_weak
                          and inst.eta_difficult_strong < inst.eta_difficult_weak),
        betweenness=all(v > 0.0 for v in inner),
        residuals={
            "easy_weak": easy_w, "easy_strong": easy_s,
            "difficult_weak": diff_w, "difficult_strong": diff_s,
            "betweenness_inner": inner,
        },
    )
    return report


@dataclass(frozen=True)
class BudgetParams:
    """Per-component perturbation-norm ranges (lo, hi) used to place the
    weak/strong means around the truth."""

    easy_strong: tuple[float, float] = (0.01, 0.03)
    easy_weak: tuple[float, float] = (0.03, 0.06)
    difficult_strong: tuple[float, float] = (0.25, 0.45)
    difficult_weak: tuple[float, float] = (0.70, 1.10)


def build_instance(seed: int, num_components: int = 6, split_index: int = 3,
                   budgets: BudgetParams = BudgetParams(), dim: int = 8,
                   max_attempts: int = REJECTION_BUDGET) -> TheoremInstance:
    """Rejection-sample an instance until every constraint holds."""
    if not 1 <= split_index < num_components:
        raise ValueError("need 1 <= split_index < num_components")
    for name in ("easy", "difficult"):
        s_lo = getattr(budgets, f"{name}_strong")[0]
        w_hi = getattr(budgets, f"{name}_weak")[1]
        if s_lo >= w_hi:
            raise ConstructionError(
                f"{name} budgets force eta_strong >= eta_weak; the strong"
                " model must dominate")
    rng = np.random.default_rng(seed)
    for attempt in range(max_attempts):
        inst = _draw_instance(rng, num_components, split_index, budgets, dim)
        if check_constraints(inst).all_ok:
            return inst
    raise ConstructionError(
        f"no constraint-satisfying instance in {max_attempts} attempts")


def _draw_instance(rng, m, m1, budgets: BudgetParams, dim) -> TheoremInstance:
    weights = rng.dirichlet(np.ones(m) * 4.0)
    triples = []
    for i in range(m):
        mu = rng.normal(0.0, 2.0, size=dim)
        v = rng.normal(size=dim)
        v /= np.linalg.norm(v)
        rs, rw = (budgets.easy_strong, budgets.easy_weak) if i < m1 else (
            budgets.difficult_strong, budgets.difficult_weak)
        a_s = rng.uniform(*rs)
        a_w = rng.uniform(*rw)
        while a_s >= a_w:  # overlapping ranges: redraw the pair
            a_s = rng.uniform(*rs)
            a_w = rng.uniform(*rw)
        # small jitter orthogonal to v keeps the betweenness product exact
        jit = rng.normal(size=dim)
        jit -= (jit @ v) * v
        jit *= 0.1 * a_w / max(np.linalg.norm(jit), 1e-12)
        mu_strong = mu - a_s * v
        mu_weak = mu - a_w * v + jit
        triples.append(ComponentTriple(float(weights[i]), mu, mu_weak, mu_strong))
    easy_w = _partition_error(triples, "weak", 0, m1)
    easy_s = _partition_error(triples, "strong", 0, m1)
    diff_w = _partition_error(triples, "weak", m1, m)
    diff_s = _partition_error(triples, "strong", m1, m)
    return TheoremInstance(tuple(triples), m1, easy_w, easy_s, diff_w, diff_s)


def build_crossover_instance(seed: int, num_components: int = 4,
                             dim: int = 8) -> TheoremInstance:
    """Cross-model regime: the strong means overshoot past the truth, so
    betweenness is violated and the optimal scale lands inside (0, 1)."""
    rng = np.random.default_rng(seed)
    weights = rng.dirichlet(np.ones(num_components) * 4.0)
    triples = []
    for i in range(num_components):
        mu = rng.normal(0.0, 2.0, size=dim)
        v = rng.normal(size=dim)
        v /= np.linalg.norm(v)
        a_w = rng.uniform(0.5, 0.9)
        a_s = rng.uniform(0.2, 0.4)
        triples.append(ComponentTriple(
            float(weights[i]), mu, mu - a_w * v, mu + a_s * v))
    m1 = max(1, num_components // 2)
    easy_w = _partition_error(triples, "weak", 0, m1)
    easy_s = _partition_error(triples, "strong", 0, m1)
    diff_w = _partition_error(triples, "weak", m1, num_components)
    diff_s = _partition_error(triples, "strong", m1, num_components)
    return TheoremInstance(tuple(triples), m1, easy_w, easy_s, diff_w, diff_s)


def error_curve(inst: TheoremInstance, omegas) -> np.ndarray:
    """E(w) evaluated exactly at every grid point."""
    omegas = np.asarray(omegas, dtype=float)
    if omegas.size == 0:
        raise ValueError("empty grid")
    out = np.zeros_like(omegas)
    for tr in inst.triples:
        step = tr.mu_strong - tr.mu_weak
        base = tr.mu_weak - tr.mu
        out += tr.weight * (
            np.sum(step * step) * omegas**2
            + 2.0 * float(base @ step) * omegas
            + float(np.sum(base * base))
        )
    return out


def optimal_omega(inst: TheoremInstance):
    """Closed-form minimizer of E and the per-component minimizers.

    Aggregate: sum_i w_i <mu_i - mu_i^weak, mu_i^strong - mu_i^weak> over
    sum_i w_i ||mu_i^strong - mu_i^weak||^2.
    """
    num = 0.0
    den = 0.0
    per = []
    for tr in inst.triples:
        step = tr.mu_strong - tr.mu_weak
        gap = tr.mu - tr.mu_weak
        n_i = float(gap @ step)
        d_i = float(step @ step)
        per.append(n_i / d_i if d_i > 0 else np.nan)
        num += tr.weight * n_i
        den += tr.weight * d_i
    if den <= 0.0:
        raise ValueError("weak and strong coincide everywhere; no minimizer")
    return num / den, np.array(per)


@dataclass(frozen=True)
class TheoremReport:
    omega_star: float
    grid_argmin: float
    e0: float
    e1: float
    e_star: float
    constraints_ok: bool
    omega_exceeds_one: bool
    improves_on_both: bool
    curve: np.ndarray = field(repr=False, default=None)

    @property
    def passed(self) -> bool:
        return self.constraints_ok and self.omega_exceeds_one and self.improves_on_both


def verify_theorem(inst: TheoremInstance, grid=None) -> TheoremReport:
    """Compare the closed-form minimizer with a brute-force grid argmin and
    flag the theorem's conclusions."""
    if grid is None:
        grid = np.arange(0.0, 4.0 + 1e-9, 1e-3)
    curve = error_curve(inst, grid)
    omega_star, _ = optimal_omega(inst)
    e0 = float(error_curve(inst, [0.0])[0])
    e1 = float(error_curve(inst, [1.0])[0])
    e_star = float(error_curve(inst, [omega_star])[0])
    return TheoremReport(
        omega_star=float(omega_star),
        grid_argmin=float(grid[int(np.argmin(curve))]),
        e0=e0,
        e1=e1,
        e_star=e_star,
        constraints_ok=check_constraints(inst).all_ok,
        omega_exceeds_one=omega_star > 1.0,
        improves_on_both=e_star < min(e0, e1),
        curve=curve,
    )


def theorem_sweep(num_seeds: int, seed0: int = 0, **kwargs):
    """Reports for `num_seeds` constraint-satisfying instances."""
    return [
        verify_theorem(build_instance(seed0 + i, **kwargs))
        for i in range(num_seeds)
    ]
