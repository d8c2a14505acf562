"""Photon-counting instrument: per-step Kraus operators, record reduction,
the Poisson distribution of Kraus operators with its screened evolution,
POVM elements, Born statistics, and trajectory samplers.

Conventions fixed here:

* Records live on the step grid; a jump "at time t" means the step whose
  left endpoint is t.
* A jump step applies the no-jump contraction together with the jump,
  ``K0 K1``.  With that composition the time-ordered product of step
  operators collapses *exactly* (not just to O(dt)) onto the standard form
  ``sqrt(weight) * exp(-a^dag a kappa_o T / 2) * a^n``, which is what
  :func:`reduce_record` returns.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.stats

from . import records as rec_mod
from .exceptions import (
    DomainError,
    InvalidDimensionError,
    InvalidRecordError,
    NumericError,
    TruncationError,
)
from .fock import (
    lowering_power,
    make_lowering,
    number_diag,
    number_exp,
    projector,
    subblock_norm_diff,
    validate_density,
)
from .params import InstrumentParams

NORM_COLLAPSE = 1e-14


def effective_mean(T: float, kappa_o: float) -> float:
    """Effective Poisson mean ``lambda(T) = 1 - exp(-kappa_o T)``.

    Sublinear in T: the coupling is screened by amplitude renormalization.
    """
    if np.isnan(T) or T < 0.0:
        raise DomainError(f"need T >= 0, got {T}")
    return float(-np.expm1(-kappa_o * T))


def screened_rate(t: float | np.ndarray, kappa_o: float):
    """Effective observation rate ``kappa(t) = kappa_o exp(-kappa_o t)``."""
    return kappa_o * np.exp(-kappa_o * np.asarray(t, dtype=float))


def kraus_jump(p: InstrumentParams) -> np.ndarray:
    """Jump Kraus operator ``K1 = a sqrt(kappa_o dt)``."""
    return np.sqrt(p.kappa_dt) * make_lowering(p.dim)


def kraus_no_jump(p: InstrumentParams) -> np.ndarray:
    """No-jump Kraus operator ``K0 = exp(-a^dag a kappa_o dt / 2)``."""
    return number_exp(p.dim, 0.5 * p.kappa_dt)


def jump_step_operator(p: InstrumentParams) -> np.ndarray:
    """Full operator applied on a jump step, ``K0 K1``."""
    return kraus_no_jump(p) @ kraus_jump(p)


@dataclass(frozen=True)
class PhotoRecord:
    """Jump times within [0, T), strictly increasing, on the step grid."""

    jump_times: np.ndarray
    T: float

    def __post_init__(self):
        times = np.asarray(self.jump_times, dtype=float)
        object.__setattr__(self, "jump_times", times)
        if times.size and (np.any(np.diff(times) <= 0.0) or times[0] < 0.0):
            raise InvalidRecordError("jump times must be strictly increasing, >= 0")
        if times.size and times[-1] >= self.T:
            raise InvalidRecordError(
                f"jump at t={times[-1]} is not before the horizon T={self.T}"
            )

    @property
    def n_jumps(self) -> int:
        return int(self.jump_times.size)


def _grid_indices(rec: PhotoRecord, p: InstrumentParams) -> np.ndarray:
    if abs(rec.T - p.T) > 1e-9 * max(p.T, p.dt):
        raise InvalidRecordError(f"record horizon {rec.T} != params horizon {p.T}")
    steps = rec.jump_times / p.dt
    idx = np.round(steps).astype(int)
    if np.any(np.abs(steps - idx) > 1e-6):
        raise InvalidRecordError("jump times must sit on the dt grid")
    return idx


def reduce_record(rec: PhotoRecord, p: InstrumentParams) -> tuple[int, float]:
    """Reduce a record to standard order: jump count and scalar weight.

    The represented operation is
    ``weight * O(exp(-a^dag a kappa_o T / 2) a^n)`` with
    ``weight = (kappa_o dt)^n exp(-kappa_o sum(T_i))``.
    """
    _grid_indices(rec, p)
    n = rec.n_jumps
    weight = p.kappa_dt**n * float(np.exp(-p.kappa_o * np.sum(rec.jump_times)))
    return n, weight


def time_ordered_product(rec: PhotoRecord, p: InstrumentParams) -> np.ndarray:
    """Brute-force product of the per-step Kraus operators, latest leftmost."""
    idx = set(_grid_indices(rec, p).tolist())
    k0 = kraus_no_jump(p)
    kj = jump_step_operator(p)
    out = np.eye(p.dim, dtype=complex)
    for k in range(p.n_steps):
        out = (kj if k in idx else k0) @ out
    return out


def standard_form_kraus(rec: PhotoRecord, p: InstrumentParams) -> np.ndarray:
    """``sqrt(weight) * exp(-a^dag a kappa_o T/2) a^n`` for the record."""
    n, weight = reduce_record(rec, p)
    if n >= p.dim:
        raise InvalidRecordError(f"{n} jumps exceed the truncation {p.dim}")
    return np.sqrt(weight) * (
        number_exp(p.dim, 0.5 * p.kappa_o * p.T) @ lowering_power(p.dim, n)
    )


@dataclass(frozen=True)
class PoissonKOD:
    """Distribution of Kraus-operator classes over jump counts.

    ``lam`` parameterizes the analytic form exp(-lam) lam^n / n!;
    ``weights`` optionally carries a numerically evolved counterpart.
    """

    lam: float
    weights: np.ndarray | None = None

    def pmf(self, n) -> np.ndarray:
        return scipy.stats.poisson.pmf(n, self.lam)

    def pmf_array(self, n_max: int) -> np.ndarray:
        return self.pmf(np.arange(n_max + 1))


def kod_poisson(T: float, kappa_o: float) -> PoissonKOD:
    """Analytic Kraus-operator distribution, Poisson with mean lambda(T)."""
    return PoissonKOD(lam=effective_mean(T, kappa_o))


def _kod_generator(t: float, weights: np.ndarray, kappa_o: float) -> np.ndarray:
    # dD(n)/dt = kappa(t) (D(n-1) - D(n)); top bin keeps its mass so the
    # generator stays conservative under truncation.
    k = float(screened_rate(t, kappa_o))
    out = -k * weights
    out[1:] += k * weights[:-1]
    out[-1] += k * weights[-1]
    return out


def evolve_kod_poisson(
    T: float, kappa_o: float, n_max: int = 40, steps: int = 1000
) -> PoissonKOD:
    """Integrate the screened birth equation for the jump-count weights.

    Classical 4th-order fixed-step integration from D_0(n) = delta_{n,0}.
    Raises TruncationError if mass reaches the top bin, NumericError if the
    conservative generator fails to conserve mass to 1e-10 at any step.
    """
    if steps < 100:
        raise DomainError(f"need steps >= 100, got {steps}")
    if n_max < 30:
        raise DomainError(f"need n_max >= 30, got {n_max}")
    if T < 0.0:
        raise DomainError(f"need T >= 0, got {T}")
    weights = np.zeros(n_max + 1)
    weights[0] = 1.0
    h = T / steps
    for i in range(steps):
        t = i * h
        k1 = _kod_generator(t, weights, kappa_o)
        k2 = _kod_generator(t + 0.5 * h, weights + 0.5 * h * k1, kappa_o)
        k3 = _kod_generator(t + 0.5 * h, weights + 0.5 * h * k2, kappa_o)
        k4 = _kod_generator(t + h, weights + h * k3, kappa_o)
        weights = weights + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if abs(float(np.sum(weights)) - 1.0) > 1e-10:
            raise NumericError(f"mass drifted beyond 1e-10 at step {i}")
    if weights[-1] > 1e-8:
        raise TruncationError(
            f"mass {weights[-1]} at n_max={n_max}; enlarge the range"
        )
    if float(np.min(weights)) < -1e-12:
        raise NumericError("negative weight beyond the roundoff floor")
    return PoissonKOD(lam=effective_mean(T, kappa_o), weights=weights)


def kraus_class(n: int, T: float, p: InstrumentParams) -> np.ndarray:
    """Class Kraus operator ``K_T(n) = e^{lam/2} e^{-a^dag a kappa_o T/2} a^n``."""
    if not 0 <= n < p.dim:
        raise InvalidDimensionError(f"need 0 <= n < dim, got n={n}")
    lam = effective_mean(T, p.kappa_o)
    return np.exp(0.5 * lam) * (
        number_exp(p.dim, 0.5 * p.kappa_o * T) @ lowering_power(p.dim, n)
    )


def povm_element(n: int, T: float, p: InstrumentParams) -> np.ndarray:
    """POVM element ``E_T(n) = D_T(n) K_T(n)^dag K_T(n)``."""
    k = kraus_class(n, T, p)
    d_n = float(kod_poisson(T, p.kappa_o).pmf(n))
    return d_n * (k.conj().T @ k)


def povm_completeness(
    T: float, p: InstrumentParams, sub_dim: int, n_max: int | None = None
) -> float:
    """Subblock defect of ``sum_n E_T(n)`` against the identity."""
    if n_max is None:
        n_max = p.dim - 1
    total = np.zeros((p.dim, p.dim), dtype=complex)
    for n in range(n_max + 1):
        total += povm_element(n, T, p)
    return subblock_norm_diff(total, np.eye(p.dim), sub_dim)


def projector_convergence(
    n: int, T: float, p: InstrumentParams, sub_dim: int
) -> float:
    """Subblock norm of ``E_T(n) - |n><n|``; decays like n e^{-kappa_o T}."""
    if n >= sub_dim:
        raise InvalidDimensionError(f"need n < sub_dim, got n={n}, sub_dim={sub_dim}")
    return subblock_norm_diff(povm_element(n, T, p), projector(p.dim, n), sub_dim)


def _damped_number_traces(
    rho_diag: np.ndarray, T: float, kappa_o: float, n_max: int
) -> np.ndarray:
    """``Tr(a^dag^n e^{-a^dag a kappa_o T} a^n rho)`` for n = 0..n_max.

    Photon counting is blind to coherences, so only the diagonal of rho
    enters: the trace is sum_j e^{-j kappa_o T} (j+n)!/j! rho[j+n, j+n].
    """
    dim = rho_diag.size
    damp = np.exp(-kappa_o * T * np.arange(dim))
    out = np.empty(n_max + 1)
    fact = np.ones(dim)
    for n in range(n_max + 1):
        if n > 0:
            j = np.arange(dim - n)
            fact = fact[: dim - n] * (j + n)
        out[n] = float(np.real(np.sum(fact * damp[: dim - n] * rho_diag[n:])))
    return out


def born_pmf(
    rho: np.ndarray, T: float, p: InstrumentParams, n_max: int | None = None
) -> np.ndarray:
    """Jump-count statistics ``P(n|rho) = D_T(n) Tr(K_T(n)^dag K_T(n) rho)``."""
    rho = validate_density(rho)
    if n_max is None:
        n_max = p.dim - 1
    lam = effective_mean(T, p.kappa_o)
    traces = _damped_number_traces(np.real(np.diag(rho)), T, p.kappa_o, n_max)
    scale = np.empty(n_max + 1)
    scale[0] = 1.0
    for n in range(1, n_max + 1):
        scale[n] = scale[n - 1] * lam / n
    pmf = scale * traces
    if float(np.min(pmf)) < -1e-10:
        raise NumericError(f"negative probability {np.min(pmf)}")
    return np.clip(pmf, 0.0, None)


def sample_ostensible(T: float, kappa_o: float, rng: np.random.Generator) -> int:
    """Draw a jump count from the state-independent distribution D_T(n)."""
    return int(rng.poisson(effective_mean(T, kappa_o)))


def ostensible_weights(
    rho: np.ndarray, T: float, p: InstrumentParams, n_max: int
) -> np.ndarray:
    """Importance weights ``Tr(K_T(n)^dag K_T(n) rho)`` for n = 0..n_max.

    Pairing these with draws from D_T(n) reproduces :func:`born_pmf`.
    """
    rho = validate_density(rho)
    lam = effective_mean(T, p.kappa_o)
    traces = _damped_number_traces(np.real(np.diag(rho)), T, p.kappa_o, n_max)
    return float(np.exp(lam)) * traces


def sample_trajectory(
    rho: np.ndarray, p: InstrumentParams, rng: np.random.Generator
) -> PhotoRecord:
    """Sequential conditional evolution of a (possibly mixed) state.

    Each step jumps with probability ``Tr(K1^dag K1 rho_t)`` and applies the
    selected operation renormalized.  One uniform is consumed per step, so
    a record is a pure function of the stream.
    """
    rho = validate_density(rho).copy()
    n = number_diag(p.dim)
    decay = np.exp(-0.5 * p.kappa_dt * n)
    outer_decay = np.outer(decay, decay)
    jump_times = []
    for k in range(p.n_steps):
        p_jump = p.kappa_dt * float(np.real(np.sum(n * np.diag(rho))))
        if rng.random() < p_jump:
            lowered = np.zeros_like(rho)
            root = np.sqrt(np.outer(n[1:], n[1:]))
            lowered[:-1, :-1] = root * rho[1:, 1:]
            rho = lowered * outer_decay
            jump_times.append(k * p.dt)
        else:
            rho = rho * outer_decay
        tr = float(np.real(np.trace(rho)))
        if tr < NORM_COLLAPSE:
            raise NumericError(f"state norm collapsed to {tr} at step {k}")
        rho /= tr
    return PhotoRecord(jump_times=np.array(jump_times), T=p.T)


def _evolve_pure_batch(
    psi0: np.ndarray, p: InstrumentParams, uniforms: np.ndarray
) -> np.ndarray:
    """Jump counts for a batch of pure-state trajectories.

    All operations are elementwise or row-wise, so each trajectory's result
    is independent of its batchmates (bit-identical under any batching).
    """
    n_traj = uniforms.shape[0]
    dim = psi0.size
    n = np.arange(dim, dtype=float)
    decay = np.exp(-0.5 * p.kappa_dt * n)
    root = np.sqrt(n[1:])
    psi = np.tile(psi0, (n_traj, 1))
    counts = np.zeros(n_traj, dtype=np.int64)
    for k in range(p.n_steps):
        nbar = np.einsum("bd,bd,d->b", psi.real, psi.real, n) + np.einsum(
            "bd,bd,d->b", psi.imag, psi.imag, n
        )
        jump = uniforms[:, k] < p.kappa_dt * nbar
        if np.any(jump):
            sub = psi[jump]
            lowered = np.zeros_like(sub)
            lowered[:, :-1] = root * sub[:, 1:]
            psi[jump] = lowered
            counts[jump] += 1
        np.multiply(psi, decay, out=psi)
        norms = np.sqrt(
            np.einsum("bd,bd->b", psi.real, psi.real)
            + np.einsum("bd,bd->b", psi.imag, psi.imag)
        )
        if float(np.min(norms)) < NORM_COLLAPSE:
            raise NumericError("state norm collapsed in the batch sampler")
        psi /= norms[:, None]
    return counts


def _pure_vector(initial: np.ndarray) -> np.ndarray | None:
    """Extract the state vector if the input is pure, else None."""
    initial = np.asarray(initial, dtype=complex)
    if initial.ndim == 1:
        return initial / np.linalg.norm(initial)
    validate_density(initial)
    purity = float(np.real(np.trace(initial @ initial)))
    if abs(purity - 1.0) > 1e-12:
        return None
    vals, vecs = np.linalg.eigh(initial)
    return vecs[:, -1]


def run_photo_ensemble(
    initial: np.ndarray,
    p: InstrumentParams,
    n_traj: int,
    seed: int,
    n_threads: int = 1,
    batch: int = 8192,
) -> np.ndarray:
    """Jump counts for ``n_traj`` trajectories, one stream per index.

    Trajectory i draws from ``stream(seed, i)``, so results are
    byte-identical for any thread count or batch size.  Pure initial states
    take a vectorized path; mixed states fall back to the dense sampler.
    """
    if n_traj == 0:
        return np.zeros(0, dtype=np.int64)
    psi0 = _pure_vector(initial)
    if psi0 is None:
        rho = np.asarray(initial, dtype=complex)

        def chunk(lo: int, hi: int) -> np.ndarray:
            return np.array(
                [
                    sample_trajectory(rho, p, rec_mod.stream(seed, i)).n_jumps
                    for i in range(lo, hi)
                ],
                dtype=np.int64,
            )

    else:

        def chunk(lo: int, hi: int) -> np.ndarray:
            out = np.empty(hi - lo, dtype=np.int64)
            for b0 in range(lo, hi, batch):
                b1 = min(b0 + batch, hi)
                uniforms = np.stack(
                    [rec_mod.stream(seed, i).random(p.n_steps) for i in range(b0, b1)]
                )
                out[b0 - lo : b1 - lo] = _evolve_pure_batch(psi0, p, uniforms)
            return out

    bounds = np.linspace(0, n_traj, max(1, n_threads) + 1).astype(int)
    pairs = [(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
    if len(pairs) <= 1:
        parts = [chunk(lo, hi) for lo, hi in pairs]
    else:
        with ThreadPoolExecutor(max_workers=len(pairs)) as pool:
            parts = list(pool.map(lambda b: chunk(*b), pairs))
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)
