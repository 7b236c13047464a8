"""Multiple-access sum-rate capacity and its Monte-Carlo average.

The instantaneous capacity of one user snapshot is
log2 det(I + (P0/sigma^2) * H H^H).  It is always evaluated through the
smaller Gram form (K x K or M x M, whichever is smaller) via a Cholesky
factorization; explicit determinants are never expanded.

Two evaluation paths exist:

* the canonical path (``average_capacity``), which assembles the full
  channel matrix per realization and is used for every reported number;
* ``CapacityEvaluator``, a much faster search-side path for scoring many
  slot subsets against one fixed batch.  It splits the Gram matrix into a
  fixed-sector part and per-slot low-rank parts, so each subset costs one
  small Cholesky instead of a full channel rebuild.  Agreement with the
  canonical path is enforced by tests at 1e-8 relative.
"""

import math
import threading
from collections import OrderedDict
from dataclasses import dataclass
from functools import lru_cache
from weakref import WeakKeyDictionary

import numpy as np
from scipy.linalg import solve_triangular

from .channel import channel_matrix, column_scales, fpa_block, surface_block
from .errors import InvalidIndicatorError, NumericError


@dataclass(frozen=True)
class RfConfig:
    """Transmit power, noise power, wavelength, reference power gain.

    All linear units: watts for powers, meters for wavelength, ``beta0`` the
    dimensionless power gain at 1 m.
    """

    p0: float
    sigma2: float
    lambda_c: float
    beta0: float

    def __post_init__(self):
        for name in ("p0", "sigma2", "lambda_c", "beta0"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")

    @property
    def snr_scale(self) -> float:
        return self.p0 / self.sigma2


@dataclass(frozen=True)
class CapacityEstimate:
    """Monte-Carlo capacity estimate plus the derived area metric."""

    mean_bps_hz: float
    per_realization: tuple[float, ...]
    ase: float

    @classmethod
    def from_values(cls, per_realization, cell_area: float):
        per = tuple(float(v) for v in per_realization)
        mean = float(np.mean(per))
        return cls(mean_bps_hz=mean, per_realization=per, ase=mean / cell_area)


def _logdet2_psd(gram: np.ndarray, c: float) -> float:
    """log2 det(I + c * gram) for Hermitian PSD ``gram`` via Cholesky."""
    a = c * gram
    a[np.diag_indices_from(a)] += 1.0
    chol = np.linalg.cholesky(a)
    return float(2.0 * np.sum(np.log2(np.real(np.diagonal(chol)))))


def instantaneous_capacity(H: np.ndarray, rf: RfConfig) -> float:
    """Sum capacity log2 det(I_M + (P0/sigma^2) H H^H) of one snapshot.

    Computed through the K x K Gram matrix H^H H when K < M (the two forms
    share eigenvalues), otherwise through the M x M form.
    """
    H = np.asarray(H)
    if H.size and not np.isfinite(H).all():
        raise NumericError("channel matrix contains non-finite entries")
    m, k = H.shape
    if k == 0:
        return 0.0
    if k < m:
        gram = H.conj().T @ H
    else:
        gram = H @ H.conj().T
    return _logdet2_psd(gram, rf.snr_scale)


def average_capacity(batch, rotations, scenario) -> CapacityEstimate:
    """Average capacity over a fixed realization batch at given rotations."""
    if len(batch) == 0:
        raise ValueError("realization batch is empty")
    per = [
        instantaneous_capacity(channel_matrix(r, rotations, scenario), scenario.rf)
        for r in batch.realizations
    ]
    return CapacityEstimate.from_values(per, scenario.cell_area)


def _check_indicator(eps, num_slots: int, n_ma: int) -> tuple[int, ...]:
    bits = tuple(int(b) for b in eps.bits)
    if len(bits) != num_slots:
        raise InvalidIndicatorError(f"indicator length {len(bits)} != L = {num_slots}")
    if any(b not in (0, 1) for b in bits):
        raise InvalidIndicatorError("indicator entries must be 0 or 1")
    if sum(bits) != n_ma:
        raise InvalidIndicatorError(
            f"indicator selects {sum(bits)} slots, expected {n_ma}"
        )
    return tuple(i for i, b in enumerate(bits) if b)


_indicator_cache: WeakKeyDictionary = WeakKeyDictionary()
_indicator_cache_lock = threading.Lock()
INDICATOR_CACHE_SIZE = 4096


def capacity_of_indicator(eps, grid, batch, scenario) -> float:
    """Mean capacity of the slot subset selected by ``eps``.

    The support maps to rotation angles in ascending slot order.  Results
    are memoized per (support, scenario) against the batch's identity, with
    a bounded LRU per batch.
    """
    support = _check_indicator(eps, grid.L, scenario.n_ma)
    key = (scenario, support)
    with _indicator_cache_lock:
        per_batch = _indicator_cache.setdefault(batch, OrderedDict())
        if key in per_batch:
            per_batch.move_to_end(key)
            return per_batch[key]
    rotations = [grid.angles[l] for l in support]
    value = average_capacity(batch, rotations, scenario).mean_bps_hz
    with _indicator_cache_lock:
        per_batch[key] = value
        per_batch.move_to_end(key)
        while len(per_batch) > INDICATOR_CACHE_SIZE:
            per_batch.popitem(last=False)
    return value


class CapacityEvaluator:
    """Fast scorer of slot subsets against one fixed batch.

    Per realization, with column-scaled sector block F and per-slot surface
    blocks B_l, the K x K Gram splits as A + c * B_S^H B_S where
    A = I + c F^H F is subset-independent.  Writing V_l = L_A^{-1} B_l^H
    (L_A the Cholesky factor of A) gives

        log2 det(I + c H^H H) = log2 det(A) + log2 det(I + c * P[S, S]),

    with P = V^H V precomputed for all slots, so one subset evaluation is a
    single (N_MA * M_MA)^2 Cholesky.  Subset scores are LRU-cached.
    """

    def __init__(self, scenario, batch, cache_size: int = 65536):
        self.scenario = scenario
        self.batch = batch
        self.grid_angles = np.asarray(scenario.grid.angles)
        self._m_per_slot = scenario.surface_shape.total
        self._c = scenario.rf.snr_scale
        self._base_logdet: list[float] = []
        self._pair_gram: list[np.ndarray | None] = []
        self._precompute()
        self._eval_cached = lru_cache(maxsize=cache_size)(self._evaluate_support)

    def _precompute(self):
        sc = self.scenario
        geo, rf, pat = sc.geometry, sc.rf, sc.pattern
        c = self._c
        for real in self.batch.realizations:
            k = real.count
            if k == 0:
                self._base_logdet.append(0.0)
                self._pair_gram.append(None)
                continue
            scales = column_scales(real.dists, rf.beta0, rf.lambda_c)
            f = np.vstack([
                fpa_block(sc.fpa_shape, pat, phi_f, real.thetas, real.phis,
                          geo.r1, geo.h1, geo.h2, rf.lambda_c)
                for phi_f in geo.fpa_rotations
            ]) * scales
            a = c * (f.conj().T @ f)
            a[np.diag_indices_from(a)] += 1.0
            chol = np.linalg.cholesky(a)
            self._base_logdet.append(
                float(2.0 * np.sum(np.log2(np.real(np.diagonal(chol)))))
            )
            b_all = np.vstack([
                surface_block(sc.surface_shape, pat, phi_n, real.thetas,
                              real.phis, geo.r2, rf.lambda_c)
                for phi_n in self.grid_angles
            ]) * scales
            v = solve_triangular(chol, b_all.conj().T, lower=True)
            self._pair_gram.append(v.conj().T @ v)

    def _evaluate_support(self, support: tuple[int, ...]) -> tuple[float, ...]:
        m = self._m_per_slot
        idx = np.concatenate([np.arange(l * m, (l + 1) * m) for l in support]) \
            if support else np.zeros(0, dtype=int)
        out = []
        for base, pairs in zip(self._base_logdet, self._pair_gram):
            if pairs is None:
                out.append(0.0)
                continue
            if idx.size == 0:
                out.append(base)
                continue
            small = self._c * pairs[np.ix_(idx, idx)]
            small[np.diag_indices_from(small)] += 1.0
            chol = np.linalg.cholesky(small)
            out.append(base + float(2.0 * np.sum(np.log2(np.real(np.diagonal(chol))))))
        return tuple(out)

    def per_realization(self, support) -> tuple[float, ...]:
        """Per-realization capacities of one ascending slot subset."""
        return self._eval_cached(tuple(sorted(support)))

    def capacity_mean(self, support) -> float:
        """Batch-mean capacity of one slot subset."""
        return float(np.mean(self.per_realization(support)))

    def estimate(self, support) -> CapacityEstimate:
        """Full estimate (mean, per-realization, area efficiency)."""
        return CapacityEstimate.from_values(
            self.per_realization(support), self.scenario.cell_area
        )
