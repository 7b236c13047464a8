"""Search over slot subsets: adaptive chain sampling, exhaustive search,
and heuristic benchmark placements.

The decision variable is a length-L binary indicator choosing which N_MA of
the L track slots host a rotatable surface.  The adaptive sampler is a
Metropolized independence chain whose proposal is a product of per-slot
Bernoulli distributions; after every inner sweep the Bernoulli vector is
pulled toward the chain's slot-occupancy frequencies with a decreasing step
size, concentrating proposals on high-capacity subsets.

Scores are kept in the log domain throughout: the unnormalized target is
exp(capacity / tau), whose normalizer cancels in acceptance ratios and whose
raw value would overflow for realistic capacities.
"""

import itertools
import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .capacity import CapacityEvaluator, CapacityEstimate, average_capacity
from .errors import ConfigError, SchemeInapplicableError, SearchSpaceTooLargeError
from .geometry import wrap_angle_delta
from .seeding import ACCEPT_STREAM, PROPOSAL_STREAM, substream_seed

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class IndicatorVector:
    """Binary slot-selection vector; the support lists selected slots."""

    bits: tuple[int, ...]

    def __post_init__(self):
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("indicator entries must be 0 or 1")

    @classmethod
    def from_support(cls, length: int, support) -> "IndicatorVector":
        support = tuple(sorted(int(i) for i in support))
        if len(set(support)) != len(support):
            raise ValueError("support indices must be distinct")
        if support and not 0 <= support[0] <= support[-1] < length:
            raise ValueError("support index out of range")
        bits = [0] * length
        for i in support:
            bits[i] = 1
        return cls(bits=tuple(bits))

    @classmethod
    def initial(cls, length: int, n_ones: int) -> "IndicatorVector":
        """Ones-prefix start state [1..1, 0..0]."""
        return cls(bits=tuple([1] * n_ones + [0] * (length - n_ones)))

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(i for i, b in enumerate(self.bits) if b)

    @property
    def n_selected(self) -> int:
        return sum(self.bits)


@dataclass(frozen=True)
class AmcmcParams:
    """Chain controls: score scale tau, N_s inner steps per outer sweep,
    t_outer sweeps, probability clamp, proposal retry budget."""

    tau: float = 1.0
    n_s: int = 20
    t_outer: int = 10
    p_floor: float = 0.01
    max_proposal_retries: int = 1000

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.n_s < 1:
            raise ValueError("n_s must be >= 1")
        if self.t_outer < 0:
            raise ValueError("t_outer must be >= 0")
        if not 0 < self.p_floor < 0.5:
            raise ValueError("p_floor must lie in (0, 0.5)")
        if self.max_proposal_retries < 1:
            raise ValueError("max_proposal_retries must be >= 1")


@dataclass
class ScoreContext:
    """Capacity-backed chain score over one fixed batch."""

    evaluator: CapacityEvaluator
    tau: float

    def capacity(self, eps: IndicatorVector) -> float:
        return self.evaluator.capacity_mean(eps.support)


@dataclass(frozen=True)
class TraceRecord:
    """One outer-iteration snapshot of the adaptive chain."""

    t: int
    best_capacity: float
    acceptance_rate: float
    alpha: float
    p: tuple[float, ...]

    def as_dict(self) -> dict:
        return {
            "t": self.t,
            "best_capacity": self.best_capacity,
            "acceptance_rate": self.acceptance_rate,
            "alpha": self.alpha,
            "p": list(self.p),
        }


@dataclass
class OptimizerState:
    """Mutable chain state (proposal probabilities, incumbent, trace)."""

    p: np.ndarray
    eps_current: IndicatorVector
    eps_best: IndicatorVector
    best_score: float
    trace: list


@dataclass(frozen=True)
class SchemeResult:
    """Outcome of one benchmark placement scheme."""

    label: str
    rotations: tuple[float, ...]
    capacity: CapacityEstimate


def log_xi(eps: IndicatorVector, context) -> float:
    """Log of the unnormalized target: capacity(eps) / tau."""
    return context.capacity(eps) / context.tau


def log_proposal_unnorm(eps: IndicatorVector, p) -> float:
    """Log of the unnormalized Bernoulli-product proposal mass of ``eps``."""
    bits = np.asarray(eps.bits, dtype=float)
    p = np.asarray(p, dtype=float)
    return float(np.sum(bits * np.log(p) + (1.0 - bits) * np.log1p(-p)))


def proposal_sample(p, n_ma: int, rng: np.random.Generator,
                    max_retries: int) -> IndicatorVector:
    """Draw a subset of exactly ``n_ma`` slots from the Bernoulli proposal.

    Independent Bernoulli(p_l) bits are drawn and the first vector with the
    right selection count is kept, which realizes the proposal conditioned
    on the feasible set exactly.  If ``max_retries`` draws all miss, falls
    back to weighting ``n_ma`` distinct slots by p (an approximation of the
    conditioned law, logged when used).
    """
    p = np.asarray(p, dtype=float)
    for _ in range(max_retries):
        bits = rng.random(p.size) < p
        if int(bits.sum()) == n_ma:
            return IndicatorVector(bits=tuple(int(b) for b in bits))
    logger.debug(
        "proposal rejection budget (%d) exhausted; weighted fallback draw", max_retries
    )
    support = rng.choice(p.size, size=n_ma, replace=False, p=p / p.sum())
    return IndicatorVector.from_support(p.size, support)


def acceptance_probability(eps_new: IndicatorVector, eps_cur: IndicatorVector,
                           p, context) -> float:
    """Metropolized-independence acceptance probability, in [0, 1].

    min{1, target(new)/target(cur) * proposal(cur)/proposal(new)}, with both
    ratios formed in the log domain (normalizers cancel).
    """
    log_ratio = (
        log_xi(eps_new, context) - log_xi(eps_cur, context)
        + log_proposal_unnorm(eps_cur, p) - log_proposal_unnorm(eps_new, p)
    )
    if log_ratio >= 0.0:
        return 1.0
    return math.exp(log_ratio)


def update_probabilities(p, samples, t: int, n_s: int,
                         p_floor: float = 0.01) -> np.ndarray:
    """Pull the proposal probabilities toward the chain occupancy.

    ``samples`` are the n_s chain states of the sweep (the start state is
    excluded); ``t`` counts previously completed updates, so the first
    update (t = 0) uses step size 1/(n_s + 1).  The result is clamped to
    [p_floor, 1 - p_floor] to keep every slot proposable.
    """
    if len(samples) != n_s:
        raise ValueError(f"expected {n_s} chain samples, got {len(samples)}")
    p = np.asarray(p, dtype=float)
    occupancy = np.mean([s.bits for s in samples], axis=0)
    alpha = 1.0 / (n_s + t + 1)
    return np.clip(p + alpha * (occupancy - p), p_floor, 1.0 - p_floor)


def _chain_rngs(rng):
    """Proposal/acceptance generator pair from a seed, SeedSequence or
    Generator (named sub-streams for the former two, spawn for the latter)."""
    if isinstance(rng, np.random.Generator):
        return tuple(rng.spawn(2))
    if isinstance(rng, np.random.SeedSequence):
        children = rng.spawn(2)
        return np.random.default_rng(children[0]), np.random.default_rng(children[1])
    return (
        np.random.default_rng(substream_seed(rng, PROPOSAL_STREAM)),
        np.random.default_rng(substream_seed(rng, ACCEPT_STREAM)),
    )


def amcmc_optimize(scenario, batch, params: AmcmcParams, rng):
    """Adaptive-chain search for the capacity-maximizing slot subset.

    Runs ``params.t_outer`` sweeps of ``params.n_s`` Metropolized
    independence steps each, starting every sweep from the incumbent and
    re-fitting the proposal from the sweep's occupancy.  Returns
    (best indicator, capacity estimate of its rotations, per-sweep trace).

    ``rng`` may be a master seed int (sub-streams are derived by name), a
    SeedSequence, or a Generator.
    """
    grid = scenario.grid
    if grid.L <= scenario.n_ma:
        raise ConfigError("track.num_slots: chain search needs L > N_MA")
    proposal_rng, accept_rng = _chain_rngs(rng)
    context = ScoreContext(
        evaluator=CapacityEvaluator(scenario, batch), tau=params.tau
    )

    state = OptimizerState(
        p=np.full(grid.L, 0.5),
        eps_current=IndicatorVector.initial(grid.L, scenario.n_ma),
        eps_best=IndicatorVector.initial(grid.L, scenario.n_ma),
        best_score=-math.inf,
        trace=[],
    )
    state.best_score = log_xi(state.eps_best, context)

    for t in range(1, params.t_outer + 1):
        current = state.eps_current
        samples = []
        accepted = 0
        for _ in range(params.n_s):
            proposed = proposal_sample(
                state.p, scenario.n_ma, proposal_rng, params.max_proposal_retries
            )
            p_ac = acceptance_probability(proposed, current, state.p, context)
            if accept_rng.random() < p_ac:
                current = proposed
                accepted += 1
            samples.append(current)
            score = log_xi(current, context)
            if score > state.best_score:
                state.best_score = score
                state.eps_best = current
        alpha = 1.0 / (params.n_s + t)
        state.p = update_probabilities(
            state.p, samples, t - 1, params.n_s, params.p_floor
        )
        state.eps_current = state.eps_best
        state.trace.append(
            TraceRecord(
                t=t,
                best_capacity=state.best_score * params.tau,
                acceptance_rate=accepted / params.n_s,
                alpha=alpha,
                p=tuple(state.p),
            )
        )

    rotations = [grid.angles[l] for l in state.eps_best.support]
    estimate = average_capacity(batch, rotations, scenario)
    return state.eps_best, estimate, tuple(state.trace)


def exhaustive_search(scenario, batch):
    """Score every slot subset and return the maximizer.

    Ties go to the lexicographically smallest support.  Refuses to run when
    C(L, N_MA) exceeds the configured enumeration cap.
    """
    grid = scenario.grid
    q = math.comb(grid.L, scenario.n_ma)
    if q > scenario.esm_cap:
        raise SearchSpaceTooLargeError(
            f"exhaustive search over C({grid.L}, {scenario.n_ma}) = {q} candidates "
            f"exceeds the enumeration cap of {scenario.esm_cap}"
        )
    evaluator = CapacityEvaluator(scenario, batch)
    best_support = None
    best_score = -math.inf
    for support in itertools.combinations(range(grid.L), scenario.n_ma):
        score = evaluator.capacity_mean(support)
        if score > best_score:
            best_score = score
            best_support = support
    eps = IndicatorVector.from_support(grid.L, best_support)
    rotations = [grid.angles[l] for l in best_support]
    return eps, average_capacity(batch, rotations, scenario)


def _nearest_slots(grid, targets, counts):
    """Greedy nearest-slot allocation: for each target azimuth in order,
    claim its ``counts[w]`` closest unclaimed slots (wrapped distance, ties
    to the smaller slot index)."""
    angles = np.asarray(grid.angles)
    claimed: list[int] = []
    available = set(range(grid.L))
    for psi, b in zip(targets, counts):
        dist = np.abs(wrap_angle_delta(angles, psi))
        order = sorted(available, key=lambda l: (dist[l], l))
        take = order[:b]
        claimed.extend(take)
        available.difference_update(take)
    return sorted(claimed)


def _scheme_capacity(scenario, batch, slots):
    rotations = tuple(scenario.grid.angles[l] for l in slots)
    return rotations, average_capacity(batch, rotations, scenario)


def scheme1_rotations(scenario, batch=None) -> SchemeResult:
    """Even split: point N_MA/W surfaces at each hotspot azimuth."""
    w = len(scenario.hotspots)
    if w == 0 or scenario.n_ma % w != 0:
        raise SchemeInapplicableError(
            f"scheme1 needs N_MA divisible by the hotspot count ({scenario.n_ma} vs {w})"
        )
    counts = [scenario.n_ma // w] * w
    slots = _nearest_slots(scenario.grid, [h.psi for h in scenario.hotspots], counts)
    batch = batch if batch is not None else scenario.sample_batch()
    rotations, estimate = _scheme_capacity(scenario, batch, slots)
    return SchemeResult(label="scheme1", rotations=rotations, capacity=estimate)


def scheme2_rotations(scenario, batch=None) -> SchemeResult:
    """Load-proportional split: surfaces per hotspot follow the expected
    hotspot user counts."""
    w = len(scenario.hotspots)
    if w == 0:
        raise SchemeInapplicableError("scheme2 needs at least one hotspot")
    total = float(sum(scenario.hotspot_ratio))
    counts = []
    for weight in scenario.hotspot_ratio:
        b = scenario.n_ma * weight / total
        if abs(b - round(b)) > 1e-9:
            raise SchemeInapplicableError(
                f"scheme2 split is not integral: N_MA={scenario.n_ma} at ratio "
                f"{scenario.hotspot_ratio}"
            )
        counts.append(int(round(b)))
    slots = _nearest_slots(scenario.grid, [h.psi for h in scenario.hotspots], counts)
    batch = batch if batch is not None else scenario.sample_batch()
    rotations, estimate = _scheme_capacity(scenario, batch, slots)
    return SchemeResult(label="scheme2", rotations=rotations, capacity=estimate)


def scheme3_scenario(scenario, batch=None) -> SchemeResult:
    """Sector-only baseline: drop the surfaces and grow each of the three
    sector arrays to M/3 elements (total antenna count preserved).

    The vertical element count is kept and the horizontal count grows; both
    divisibility conditions must hold.
    """
    m_total = (
        scenario.n_ma * scenario.surface_shape.total + 3 * scenario.fpa_shape.total
    )
    if m_total % 3 != 0:
        raise SchemeInapplicableError(f"total antenna count {m_total} not divisible by 3")
    per_array = m_total // 3
    m_v = scenario.fpa_shape.m_v
    if per_array % m_v != 0:
        raise SchemeInapplicableError(
            f"per-array count {per_array} not divisible by vertical count {m_v}"
        )
    variant = replace(
        scenario,
        n_ma=0,
        fpa_shape=replace(scenario.fpa_shape, m_h=per_array // m_v),
    )
    batch = batch if batch is not None else scenario.sample_batch()
    estimate = average_capacity(batch, (), variant)
    return SchemeResult(label="scheme3", rotations=(), capacity=estimate)
