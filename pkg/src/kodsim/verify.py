"""Identity verification suites for both instruments.

Each function returns :class:`~kodsim.report.Check` rows; the CLI's
``verify-identities`` command runs them all.  Thresholds are the package's
acceptance gates, not tunables.
"""

from __future__ import annotations

import math

import numpy as np

from . import fock, heterodyne as het, photodetector as pd
from .params import InstrumentParams
from .records import stream
from .report import Check

RENORM_TOL = 1e-12
RECORD_PRODUCT_TOL = 1e-8
CARTAN_TOL = 1e-9
COMPLETENESS_PHOTO_TOL = 1e-8
COMPLETENESS_HET_TOL = 1e-6
KOD_POISSON_TOL = 1e-8
KOD_DIFFUSION_TOL = 1e-3
GROUNDSTATE_TOL = 1e-6
LEFT_INVARIANCE_TOL = 1e-8
SCALING_FACTOR = 2.0


def _random_disk(rng: np.random.Generator, radius: float) -> complex:
    return radius * np.sqrt(rng.random()) * np.exp(2j * np.pi * rng.random())


def renormalization_checks(
    seed: int, dim: int = 40, n_random: int = 100
) -> list[Check]:
    """Both amplitude-renormalization identities over random (r, c).

    c stays inside the unit disk so operator norms keep the roundoff floor
    two orders below the 1e-12 gate; the identities themselves are exact
    under truncation because lowering operators never reach the top row.
    """
    rng = stream(seed, 0)
    a = fock.make_lowering(dim)
    worst_photo = 0.0
    worst_het = 0.0
    for _ in range(n_random):
        r = 3.0 * rng.random()
        c = _random_disk(rng, 1.0)
        decay = fock.number_exp(dim, r)
        lhs = a @ decay
        rhs = decay @ a * np.exp(-r)
        worst_photo = max(worst_photo, float(np.linalg.norm(lhs - rhs, 2)))
        lhs = fock.exp_lowering(dim, c) @ decay
        rhs = decay @ fock.exp_lowering(dim, c * np.exp(-r))
        worst_het = max(worst_het, float(np.linalg.norm(lhs - rhs, 2)))
    return [
        Check("renormalization-photodetector", worst_photo, RENORM_TOL),
        Check("renormalization-heterodyne", worst_het, RENORM_TOL),
    ]


def record_reduction_checks(seed: int, dim: int = 40, sub_dim: int = 25) -> list[Check]:
    """Time-ordered step products against their standard-order forms."""
    rng = stream(seed, 1)
    p = InstrumentParams.fit_steps(kappa_o=1.0, T=1.0, dt=1e-3, dim=dim)
    worst_photo = 0.0
    for n_jumps in (1, 3, 5):
        steps = np.sort(rng.choice(p.n_steps, size=n_jumps, replace=False))
        rec = pd.PhotoRecord(jump_times=steps * p.dt, T=p.T)
        brute = pd.time_ordered_product(rec, p)
        std = pd.standard_form_kraus(rec, p)
        scale = float(np.linalg.norm(std[:sub_dim, :sub_dim], 2))
        worst_photo = max(
            worst_photo, fock.subblock_norm_diff(brute, std, sub_dim) / scale
        )
    worst_exact = 0.0
    worst_plain = 0.0
    for n_steps in (3, 10):
        ph = InstrumentParams(kappa_o=1.0, dt=p.dt, T=n_steps * p.dt, dim=dim)
        incs = (rng.standard_normal(n_steps) + 1j * rng.standard_normal(n_steps))
        incs *= np.sqrt(0.5 * ph.dt)
        rec = het.HeterodyneRecord(increments=incs, dt=ph.dt, T=ph.T)
        brute = het.time_ordered_product_het(rec, ph)
        exact = het.standard_form_kraus_het(rec, ph)
        plain = het.kraus_class_het(het.record_functional(rec, 1.0), rec.T, ph)
        scale = float(np.linalg.norm(exact[:sub_dim, :sub_dim], 2))
        worst_exact = max(
            worst_exact, fock.subblock_norm_diff(brute, exact, sub_dim) / scale
        )
        worst_plain = max(
            worst_plain, fock.subblock_norm_diff(brute, plain, sub_dim) / scale
        )
    return [
        Check("record-product-photodetector", worst_photo, RECORD_PRODUCT_TOL),
        Check("record-product-heterodyne-dragged", worst_exact, 1e-10),
        # the undragged comparison carries the O(kappa_o dt) drag factor
        Check("record-product-heterodyne-raw", worst_plain, p.kappa_dt),
    ]


def kod_poisson_max_err(
    T: float, kappa_o: float, n_max: int, steps: int
) -> float:
    kod = pd.evolve_kod_poisson(T, kappa_o, n_max=n_max, steps=steps)
    return float(np.max(np.abs(kod.weights - kod.pmf_array(n_max))))


def kod_poisson_halving_ratio(
    T: float, kappa_o: float, n_max: int = 40, steps: int = 100
) -> float:
    """Error ratio under step halving, measured where truncation error still
    dominates roundoff (the 1000-step error sits at the 1e-15 floor)."""
    return kod_poisson_max_err(T, kappa_o, n_max, steps) / kod_poisson_max_err(
        T, kappa_o, n_max, 2 * steps
    )


def kod_poisson_checks() -> list[Check]:
    """Evolved jump-count weights against the closed form, plus step-halving."""
    return [
        Check(
            "kod-poisson-evolution",
            kod_poisson_max_err(math.log(2.0), 1.0, 40, 1000),
            KOD_POISSON_TOL,
        ),
        Check(
            "kod-poisson-step-halving",
            kod_poisson_halving_ratio(math.log(2.0), 1.0),
            8.0,
            comparison=">=",
        ),
    ]


def kod_diffusion_max_err(
    T: float,
    kappa_o: float,
    h: float,
    steps: int,
    extent: float = 5.0,
    sigma0_sq: float = 1e-3,
) -> float:
    kod = het.evolve_kod_diffusion(
        T, kappa_o, h=h, extent=extent, steps=steps, sigma0_sq=sigma0_sq
    )
    ax = kod.axis()
    total = kod.sigma + kod.regularization
    target = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / total) / total
    return float(np.max(np.abs(kod.grid - target)))


def kod_diffusion_halving_ratio(
    T: float,
    kappa_o: float,
    h: float = 0.05,
    extent: float = 5.0,
    sigma0_sq: float = 1e-3,
) -> float:
    """Error ratio when h is halved; long step counts push the
    Crank-Nicolson error below the spatial error on both grids."""
    coarse = kod_diffusion_max_err(T, kappa_o, h, 800, extent, sigma0_sq)
    fine = kod_diffusion_max_err(T, kappa_o, 0.5 * h, 1600, extent, sigma0_sq)
    return coarse / fine


def kod_diffusion_checks(convergence: bool = True) -> list[Check]:
    """Evolved amplitude density against the closed form, plus h-halving."""
    checks = [
        Check(
            "kod-diffusion-evolution",
            kod_diffusion_max_err(math.log(2.0), 1.0, 0.05, 200),
            KOD_DIFFUSION_TOL,
        )
    ]
    if convergence:
        checks.append(
            Check(
                "kod-diffusion-h-halving",
                kod_diffusion_halving_ratio(math.log(2.0), 1.0),
                3.5,
                comparison=">=",
            )
        )
    return checks


def completeness_checks(
    kappa_T: float = 1.0, dim: int = 40, sub_dim: int = 20, quad_order: int = 32
) -> list[Check]:
    p = InstrumentParams(kappa_o=1.0, dt=1e-3, T=kappa_T, dim=dim)
    return [
        Check(
            "povm-completeness-photodetector",
            pd.povm_completeness(kappa_T, p, sub_dim, n_max=dim - 1),
            COMPLETENESS_PHOTO_TOL,
        ),
        Check(
            "povm-completeness-heterodyne",
            het.povm_completeness_het(kappa_T, p, sub_dim, quad_order),
            COMPLETENESS_HET_TOL,
        ),
    ]


def cartan_checks(seed: int, n_random: int = 100, sub_dim: int = 20) -> list[Check]:
    """Polar-decomposition defect over random (zeta, r), |zeta| <= 2, r in [0.1, 3]."""
    rng = stream(seed, 2)
    worst = 0.0
    for _ in range(n_random):
        r = 0.1 + 2.9 * rng.random()
        zeta = _random_disk(rng, 2.0)
        worst = max(worst, het.cartan_identity_defect(zeta, r, sub_dim=sub_dim))
    return [Check("cartan-identity", worst, CARTAN_TOL)]


def trace_checks() -> list[Check]:
    """Trace identity at d=50 and the matching groundstate quadrature."""
    kappa_T = math.log(2.0)
    defect = het.trace_identity_defect(kappa_T, 1.0, 50)
    # the exact defect IS the geometric tail; allow a factor 2 of roundoff
    bound = 2.0 * het.trace_tail_bound(kappa_T, 1.0, 50)
    dev = abs(het.groundstate_completeness(kappa_T, 1.0, dim=340, quad_order=32))
    return [
        Check("trace-identity", defect, bound),
        Check("groundstate-completeness", dev, GROUNDSTATE_TOL),
    ]


def left_invariance_checks(
    seed: int, kappa_T: float = 1.0, dim: int = 40, sub_dim: int = 20
) -> list[Check]:
    rng = stream(seed, 3)
    p = InstrumentParams(kappa_o=1.0, dt=1e-3, T=kappa_T, dim=dim)
    worst = 0.0
    for _ in range(10):
        alpha = _random_disk(rng, 1.2)
        worst = max(worst, het.povm_left_invariance_defect(alpha, kappa_T, p, sub_dim))
    return [Check("povm-left-invariance", worst, LEFT_INVARIANCE_TOL)]


def _scaling_factor(defects: list[float]) -> float:
    """Worst multiplicative deviation of consecutive defect ratios from e^{-1}."""
    worst = 1.0
    for a, b in zip(defects[:-1], defects[1:]):
        ratio = (b / a) * math.e
        worst = max(worst, ratio, 1.0 / ratio)
    return worst


def projector_scaling_checks(
    dim: int = 40, sub_dim: int = 20, kappa_T_values=(2.0, 3.0, 4.0, 5.0)
) -> list[Check]:
    """Projector-convergence defects must shrink like e^{-kappa_o T}."""
    checks = []
    for n in (0, 1, 2):
        defects = []
        for kappa_T in kappa_T_values:
            p = InstrumentParams(kappa_o=1.0, dt=1e-3, T=kappa_T, dim=dim)
            defects.append(pd.projector_convergence(n, kappa_T, p, sub_dim))
        checks.append(
            Check(
                f"projector-scaling-photodetector-n{n}",
                _scaling_factor(defects),
                SCALING_FACTOR,
                comparison="<=",
            )
        )
    for zeta in (0.0, 0.5):
        defects = []
        for kappa_T in kappa_T_values:
            p = InstrumentParams(kappa_o=1.0, dt=1e-3, T=kappa_T, dim=dim)
            defects.append(het.projector_convergence_het(zeta, kappa_T, p, sub_dim))
        checks.append(
            Check(
                f"projector-scaling-heterodyne-zeta{zeta:g}",
                _scaling_factor(defects),
                SCALING_FACTOR,
                comparison="<=",
            )
        )
    return checks


ALL_GROUPS = {
    "renormalization": lambda seed: renormalization_checks(seed),
    "record-reduction": lambda seed: record_reduction_checks(seed),
    "kod-poisson": lambda seed: kod_poisson_checks(),
    "kod-diffusion": lambda seed: kod_diffusion_checks(),
    "completeness": lambda seed: completeness_checks(),
    "cartan": lambda seed: cartan_checks(seed),
    "trace": lambda seed: trace_checks(),
    "left-invariance": lambda seed: left_invariance_checks(seed),
    "projector-scaling": lambda seed: projector_scaling_checks(),
}


def run_identity_checks(seed: int, groups: list[str] | None = None) -> list[Check]:
    if groups is None:
        groups = list(ALL_GROUPS)
    checks: list[Check] = []
    for name in groups:
        checks.extend(ALL_GROUPS[name](seed))
    return checks
