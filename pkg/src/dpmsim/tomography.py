"""Two-photon density-matrix reconstruction from 36-setting coincidence counts.

The measurement set is the full 6x6 grid of polarization projections over
{H, V, D, A, R, L} for both photons. Reconstruction is two-stage:

* a direct Stokes-parameter linear inversion, exact on noiseless data but
  not guaranteed positive under noise, and
* a maximum-likelihood fit over the Cholesky-style parametrization
  rho(T) = T^dag T / tr(T^dag T) with T lower triangular (16 real
  parameters), maximizing the Poissonian log-likelihood
  sum_k [n_k log mu_k - mu_k] with mu_k = exposure_k * tr(rho Pi_k),

so the returned state is physical by construction. Statistical uncertainties
come from Poisson bootstrap resampling; systematic uncertainties from
re-analysis under polarizer-angle perturbations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .qstate import (
    LABELS,
    ProjectionSetting,
    basis_vector,
    check_physical,
    density_matrix_to_text,
    negativity,
    projection_operator,
)

_AXES = (("H", "V"), ("D", "A"), ("R", "L"))  # plus/minus label per local axis


@dataclass(frozen=True)
class CountRecord:
    """Observed coincidences for one projection setting at a given exposure."""

    setting: ProjectionSetting
    count: int
    exposure: float

    def __post_init__(self) -> None:
        if self.count < 0:
            raise ValueError("count must be >= 0")
        if self.exposure <= 0:
            raise ValueError("exposure must be positive")


@dataclass(frozen=True)
class MLEConfig:
    max_iterations: int = 1000
    gradient_tolerance: float = 1e-5
    init: str = "inversion"  # 'inversion' or 'mixed'
    mu_floor: float = 1e-12  # floor on mu_k as a fraction of exposure_k
    trace: bool = False


@dataclass
class TomographyResult:
    """Physical density matrix with fit diagnostics and optional uncertainties."""

    rho: np.ndarray
    log_likelihood: float
    iterations: int
    converged: bool
    element_sigmas: np.ndarray | None = None
    negativity_sigma: float | None = None
    trace_log: list = field(default_factory=list)

    @property
    def negativity(self) -> float:
        return negativity(self.rho)


def standard_settings() -> list[ProjectionSetting]:
    """The 36 projection settings in canonical order (XX outer loop, X inner)."""
    return [ProjectionSetting(a, b) for a in LABELS for b in LABELS]


def _records_by_setting(records) -> dict[ProjectionSetting, CountRecord]:
    by = {}
    for r in records:
        key = ProjectionSetting(*r.setting)
        if key in by:
            raise ValueError(f"duplicate setting {key}")
        by[key] = r
    missing = [s for s in standard_settings() if s not in by]
    if missing:
        raise ValueError(f"missing settings: {', '.join(str(s) for s in missing)}")
    return by


def _axis_operator(plus: str, minus: str) -> np.ndarray:
    p = basis_vector(plus)
    m = basis_vector(minus)
    return np.outer(p, p.conj()) - np.outer(m, m.conj())


def stokes_linear_inversion(records) -> np.ndarray:
    """Invert 36 count records to a Hermitian trace-1 matrix (possibly non-PSD).

    For each pair of local axes the four label combinations give normalized
    probabilities, from which the two-photon correlation and the marginal
    single-photon terms follow; marginals are averaged over the three
    complete partner axes. Exact on noiseless data; under noise the output
    may have negative eigenvalues.
    """
    by = _records_by_setting(records)
    eye = np.eye(2, dtype=complex)
    ops = [_axis_operator(p, m) for p, m in _AXES]

    corr = np.zeros((3, 3))
    marg_xx = np.zeros((3, 3))  # [axis of photon 1, partner axis]
    marg_x = np.zeros((3, 3))  # [axis of photon 2, partner axis]
    for a, (pa, ma) in enumerate(_AXES):
        for b, (pb, mb) in enumerate(_AXES):
            rates = {}
            for la, sa in ((pa, 1.0), (ma, -1.0)):
                for lb, sb in ((pb, 1.0), (mb, -1.0)):
                    rec = by[ProjectionSetting(la, lb)]
                    rates[(sa, sb)] = rec.count / rec.exposure
            total = sum(rates.values())
            if total <= 0.0:
                raise ValueError(
                    f"zero total counts on the complete basis pair "
                    f"({pa}/{ma}, {pb}/{mb})"
                )
            corr[a, b] = sum(sa * sb * v for (sa, sb), v in rates.items()) / total
            marg_xx[a, b] = sum(sa * v for (sa, sb), v in rates.items()) / total
            marg_x[b, a] = sum(sb * v for (sa, sb), v in rates.items()) / total

    rho = np.kron(eye, eye).astype(complex)
    for a in range(3):
        rho += marg_xx[a].mean() * np.kron(ops[a], eye)
        rho += marg_x[a].mean() * np.kron(eye, ops[a])
        for b in range(3):
            rho += corr[a, b] * np.kron(ops[a], ops[b])
    return rho / 4.0


def project_to_physical(matrix: np.ndarray) -> np.ndarray:
    """Clip negative eigenvalues of a Hermitian matrix and renormalize to trace 1."""
    sym = 0.5 * (matrix + matrix.conj().T)
    lam, vec = np.linalg.eigh(sym)
    lam = np.clip(lam, 0.0, None)
    if lam.sum() <= 0.0:
        return np.eye(4, dtype=complex) / 4.0
    rho = (vec * lam) @ vec.conj().T
    return rho / np.real(np.trace(rho))


_REV = np.fliplr(np.eye(4))


def _lower_factor(rho: np.ndarray) -> np.ndarray:
    """Lower-triangular T with T^dag T = rho (anti-Cholesky via index reversal)."""
    a = rho + 1e-12 * np.eye(4)
    a = a / np.real(np.trace(a))
    low = np.linalg.cholesky(_REV @ a @ _REV)
    return (_REV @ low @ _REV).conj().T


_LOWER_IDX = [(i, j) for i in range(4) for j in range(i)]


def _params_to_t(theta: np.ndarray) -> np.ndarray:
    t = np.zeros((4, 4), dtype=complex)
    t[np.diag_indices(4)] = theta[:4]
    for k, (i, j) in enumerate(_LOWER_IDX):
        t[i, j] = theta[4 + 2 * k] + 1j * theta[5 + 2 * k]
    return t


def _t_to_params(t: np.ndarray) -> np.ndarray:
    theta = np.empty(16)
    theta[:4] = np.real(np.diag(t))
    for k, (i, j) in enumerate(_LOWER_IDX):
        theta[4 + 2 * k] = t[i, j].real
        theta[5 + 2 * k] = t[i, j].imag
    return theta


def _poisson_objective(theta, counts, exposures, pi_stack, floor_frac):
    """(-log likelihood, gradient over the 16 real parameters)."""
    t = _params_to_t(theta)
    gram = t.conj().T @ t
    tau = np.real(np.trace(gram))
    rho = gram / tau
    p = np.real(np.einsum("kab,ba->k", pi_stack, rho))
    mu_raw = exposures * p
    floor = floor_frac * exposures
    mu = np.maximum(mu_raw, floor)
    loglik = float(np.sum(counts * np.log(mu) - mu))

    w = (counts / mu - 1.0) * exposures
    w = np.where(mu_raw > floor, w, 0.0)
    g = np.einsum("k,kab->ab", w, pi_stack)
    j = t @ (g - np.real(np.einsum("ab,ba->", g, rho)) * np.eye(4)) / tau
    grad = np.empty(16)
    grad[:4] = 2.0 * np.real(np.diag(j))
    for k, (i, jj) in enumerate(_LOWER_IDX):
        grad[4 + 2 * k] = 2.0 * j[i, jj].real
        grad[5 + 2 * k] = 2.0 * j[i, jj].imag
    return -loglik, -grad


def log_likelihood(rho: np.ndarray, records, mu_floor: float = 1e-12) -> float:
    """Poissonian log-likelihood of a density matrix against count records."""
    total = 0.0
    for r in records:
        p = float(np.real(np.trace(np.asarray(rho) @ projection_operator(ProjectionSetting(*r.setting)))))
        mu = max(r.exposure * p, mu_floor * r.exposure)
        total += r.count * np.log(mu) - mu
    return float(total)


def mle_reconstruct(
    records,
    config: MLEConfig = MLEConfig(),
    projectors: dict[ProjectionSetting, np.ndarray] | None = None,
) -> TomographyResult:
    """Maximum-likelihood density matrix from 36 count records.

    Parameters
    ----------
    records : iterable of CountRecord
        One record per setting; all 36 settings required.
    config : MLEConfig
        Optimizer budget, convergence tolerance, initialization mode.
    projectors : optional mapping setting -> 4x4 projection operator
        Overrides the ideal projectors (used by the systematic angle scan).

    Returns a TomographyResult whose rho is PSD and trace-1 by construction;
    converged is True iff the gradient norm fell below the tolerance within
    the iteration budget.
    """
    recs = list(records)
    by = _records_by_setting(recs)
    ordered = [by[s] for s in standard_settings()]
    counts = np.array([r.count for r in ordered], dtype=float)
    exposures = np.array([r.exposure for r in ordered], dtype=float)
    if counts.sum() <= 0:
        raise ValueError("all counts are zero; nothing to reconstruct")
    if projectors is None:
        pi_stack = np.stack([projection_operator(s) for s in standard_settings()])
    else:
        pi_stack = np.stack([np.asarray(projectors[s], dtype=complex) for s in standard_settings()])

    if config.init == "mixed":
        rho0 = np.eye(4, dtype=complex) / 4.0
    else:
        try:
            rho0 = project_to_physical(stokes_linear_inversion(recs))
        except ValueError:
            rho0 = np.eye(4, dtype=complex) / 4.0
    theta0 = _t_to_params(_lower_factor(rho0))

    trace_log: list[float] = []

    def callback(xk):
        trace_log.append(-_poisson_objective(xk, counts, exposures, pi_stack, config.mu_floor)[0])

    res = minimize(
        _poisson_objective,
        theta0,
        args=(counts, exposures, pi_stack, config.mu_floor),
        method="L-BFGS-B",
        jac=True,
        callback=callback if config.trace else None,
        options={
            "maxiter": config.max_iterations,
            "gtol": config.gradient_tolerance,
            "ftol": 1e-14,
        },
    )
    theta = res.x
    f0 = _poisson_objective(theta0, counts, exposures, pi_stack, config.mu_floor)[0]
    if res.fun > f0:
        # never return anything worse than the starting point
        theta = theta0
    t = _params_to_t(theta)
    gram = t.conj().T @ t
    rho = gram / np.real(np.trace(gram))
    _, grad = _poisson_objective(theta, counts, exposures, pi_stack, config.mu_floor)
    converged = bool(np.max(np.abs(grad)) < config.gradient_tolerance)
    return TomographyResult(
        rho=rho,
        log_likelihood=-float(min(res.fun, f0)),
        iterations=int(res.nit),
        converged=converged,
        trace_log=trace_log,
    )


@dataclass(frozen=True)
class BootstrapResult:
    element_sigmas: np.ndarray  # 4x4, complex standard deviation per entry
    negativity_sigma: float
    n_used: int
    n_failed: int


def bootstrap_uncertainties(
    records,
    n_resamples: int,
    config: MLEConfig = MLEConfig(),
    seed: int = 0,
) -> BootstrapResult:
    """Poisson-resample the counts and propagate through the MLE.

    Each resample draws count'_k ~ Poisson(count_k), reconstructs, and the
    per-element and negativity standard deviations over resamples are
    reported. Resamples use per-index substreams of the seed, so results are
    deterministic and independent of any parallel execution order. Failed
    resamples are excluded and counted.
    """
    if n_resamples < 100:
        raise ValueError("n_resamples must be >= 100 for stable uncertainties")
    recs = list(records)
    rhos = []
    negs = []
    failed = 0
    for r_idx in range(n_resamples):
        rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(r_idx,)))
        )
        try:
            resampled = [
                CountRecord(rec.setting, int(rng.poisson(rec.count)), rec.exposure)
                for rec in recs
            ]
            result = mle_reconstruct(resampled, config)
            rhos.append(result.rho)
            negs.append(result.negativity)
        except ValueError:
            failed += 1
    if not rhos:
        raise ValueError("every bootstrap resample failed")
    stack = np.stack(rhos)
    mean = stack.mean(axis=0)
    element_sigmas = np.sqrt(np.mean(np.abs(stack - mean) ** 2, axis=0))
    return BootstrapResult(
        element_sigmas=element_sigmas,
        negativity_sigma=float(np.std(negs)),
        n_used=len(rhos),
        n_failed=failed,
    )


def _rotated_projectors(delta_xx_rad: float, delta_x_rad: float) -> dict[ProjectionSetting, np.ndarray]:
    """Projection operators with each photon's analysis frame rotated in the H-V plane."""

    def rot(d):
        return np.array([[np.cos(d), -np.sin(d)], [np.sin(d), np.cos(d)]], dtype=complex)

    r1, r2 = rot(delta_xx_rad), rot(delta_x_rad)
    out = {}
    for s in standard_settings():
        k = np.kron(r1 @ basis_vector(s.xx), r2 @ basis_vector(s.x))
        out[s] = np.outer(k, k.conj())
    return out


@dataclass(frozen=True)
class AngleScanResult:
    negativity_min: float
    negativity_max: float
    negativity_center: float


def systematic_angle_scan(
    records,
    config: MLEConfig = MLEConfig(),
    angle_tolerance_deg: float = 3.0,
) -> AngleScanResult:
    """Negativity envelope under polarization-setting angle perturbations.

    Re-runs the MLE with every analysis projector rotated by a per-photon
    angle error on a deterministic grid: the four corners of the
    [-tol, +tol]^2 square plus the unperturbed center. The envelope always
    contains the center estimate.
    """
    d = np.deg2rad(angle_tolerance_deg)
    grid = [(0.0, 0.0)]
    if angle_tolerance_deg != 0.0:
        grid += [(d, d), (d, -d), (-d, d), (-d, -d)]
    negs = []
    for dxx, dx in grid:
        projectors = None if (dxx == 0.0 and dx == 0.0) else _rotated_projectors(dxx, dx)
        negs.append(mle_reconstruct(records, config, projectors=projectors).negativity)
    return AngleScanResult(
        negativity_min=min(negs), negativity_max=max(negs), negativity_center=negs[0]
    )


def write_count_records(records, path) -> None:
    with open(path, "w") as f:
        f.write("setting_xx,setting_x,count,exposure\n")
        for r in records:
            f.write(f"{r.setting[0]},{r.setting[1]},{r.count},{r.exposure!r}\n")


def read_count_records(path) -> list[CountRecord]:
    """Parse a count-record CSV; raises ValueError naming file and line on damage."""
    records = []
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line == "setting_xx,setting_x,count,exposure":
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 comma-separated fields")
            try:
                rec = CountRecord(
                    ProjectionSetting(parts[0].strip(), parts[1].strip()),
                    int(parts[2]),
                    float(parts[3]),
                )
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed record: {exc}")
            records.append(rec)
    return records


def result_to_text(result: TomographyResult) -> str:
    """Serialize a TomographyResult to structured text (matrix record plus fit fields)."""
    lines = [
        "# tomography-result",
        f"# log_likelihood={result.log_likelihood!r}",
        f"# iterations={result.iterations}",
        f"# converged={result.converged}",
        f"# negativity={result.negativity!r}",
    ]
    if result.negativity_sigma is not None:
        lines.append(f"# negativity_sigma={result.negativity_sigma!r}")
    text = "\n".join(lines) + "\n" + density_matrix_to_text(result.rho)
    if result.element_sigmas is not None:
        sig_lines = ["# element_sigmas (row-major)"]
        for row in result.element_sigmas:
            sig_lines.append(" ".join(f"{v:.6e}" for v in row))
        text += "\n".join(sig_lines) + "\n"
    return text


def validate_physical(result: TomographyResult, tol: float = 1e-8) -> bool:
    """Convenience check that a reconstruction satisfies the physicality contract."""
    return check_physical(result.rho, tol).passed
