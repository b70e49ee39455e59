"""Exact two-photon polarization-state algebra on the 4-dimensional H/V pair space.

Conventions used throughout the package:

* Single-photon Jones vectors are length-2 complex arrays over (H, V) with

      H = (1, 0)          V = (0, 1)
      D = (H + V)/sqrt2   A = (H - V)/sqrt2
      R = (H - iV)/sqrt2  L = (H + iV)/sqrt2

* Two-photon kets are length-4 complex arrays ordered (HH, HV, VH, VV),
  first letter = biexciton photon, second letter = exciton photon.
* Density matrices are 4x4 complex arrays in the same basis order.

All functions are pure; arrays are never mutated in place.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

LABELS = ("H", "V", "D", "A", "R", "L")
BASIS_ORDER = ("HH", "HV", "VH", "VV")

_SQ2 = 1.0 / np.sqrt(2.0)

_JONES = {
    "H": np.array([1.0, 0.0], dtype=complex),
    "V": np.array([0.0, 1.0], dtype=complex),
    "D": np.array([_SQ2, _SQ2], dtype=complex),
    "A": np.array([_SQ2, -_SQ2], dtype=complex),
    "R": np.array([_SQ2, -1j * _SQ2], dtype=complex),
    "L": np.array([_SQ2, 1j * _SQ2], dtype=complex),
}


class ProjectionSetting(NamedTuple):
    """One polarization projection pair: biexciton-photon basis, exciton-photon basis."""

    xx: str
    x: str

    def __str__(self) -> str:
        return f"{self.xx}{self.x}"


def basis_vector(label: str) -> np.ndarray:
    """Unit Jones vector for one of the six polarization labels."""
    try:
        return _JONES[label].copy()
    except KeyError:
        raise ValueError(f"unknown polarization label {label!r}; expected one of {LABELS}")


def tensor(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Two-photon ket from single-photon Jones vectors, biexciton factor first."""
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def projector_ket(setting: ProjectionSetting) -> np.ndarray:
    """Product ket |b_xx> x |b_x| onto which a coincidence detection projects."""
    return tensor(basis_vector(setting[0]), basis_vector(setting[1]))


def projection_operator(setting: ProjectionSetting) -> np.ndarray:
    """Rank-1 projection operator for a two-photon polarization setting."""
    k = projector_ket(setting)
    return np.outer(k, k.conj())


def bell_phi_plus() -> np.ndarray:
    """The (|HH> + |VV>)/sqrt2 Bell ket, the ideal compensated cascade state."""
    return np.array([_SQ2, 0.0, 0.0, _SQ2], dtype=complex)


def normalize(ket: np.ndarray) -> np.ndarray:
    """Return ket scaled to unit norm."""
    ket = np.asarray(ket, dtype=complex)
    n = np.linalg.norm(ket)
    if n == 0.0:
        raise ValueError("cannot normalize the zero vector")
    return ket / n


def ket_to_density(ket: np.ndarray) -> np.ndarray:
    """Pure-state density matrix |k><k|.

    Rejects input whose norm deviates from 1 by more than 1e-6.
    """
    ket = np.asarray(ket, dtype=complex)
    n = np.linalg.norm(ket)
    if abs(n - 1.0) > 1e-6:
        raise ValueError(f"ket norm {n:.9f} deviates from 1 by more than 1e-6")
    rho = np.outer(ket, ket.conj())
    return rho / np.real(np.trace(rho))


def projection_probability(ket: np.ndarray, setting: ProjectionSetting) -> float:
    """Born probability |<setting|ket>|^2 for a pure two-photon state."""
    amp = projector_ket(setting).conj() @ np.asarray(ket, dtype=complex)
    return float(np.abs(amp) ** 2)


def born_probability(rho: np.ndarray, setting: ProjectionSetting) -> float:
    """Born probability tr(rho Pi) for the projection setting."""
    k = projector_ket(setting)
    p = np.real(k.conj() @ np.asarray(rho, dtype=complex) @ k)
    return float(p)


def partial_transpose(rho: np.ndarray, subsystem: str = "second") -> np.ndarray:
    """Transpose the indices of one photon of a two-photon density matrix.

    subsystem 'first' transposes the biexciton factor, 'second' the exciton
    factor. Output is Hermitian with the same trace; eigenvalues may be
    negative for entangled input.
    """
    r = np.asarray(rho, dtype=complex).reshape(2, 2, 2, 2)
    if subsystem == "first":
        pt = r.transpose(2, 1, 0, 3)
    elif subsystem == "second":
        pt = r.transpose(0, 3, 2, 1)
    else:
        raise ValueError("subsystem must be 'first' or 'second'")
    return pt.reshape(4, 4)


def negativity(rho: np.ndarray) -> float:
    """Entanglement negativity: absolute sum of negative partial-transpose eigenvalues.

    Equals (||rho^PT||_1 - 1)/2 for trace-1 input; ranges over [0, 0.5] for
    two qubits, reaching 0.5 on Bell states.
    """
    lam = np.linalg.eigvalsh(partial_transpose(rho))
    return float(-lam[lam < 0.0].sum())


def fidelity_to(rho: np.ndarray, target: np.ndarray) -> float:
    """Overlap <target|rho|target> of a state with a pure target ket."""
    t = np.asarray(target, dtype=complex)
    return float(np.real(t.conj() @ np.asarray(rho, dtype=complex) @ t))


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    """(1/2) ||rho - sigma||_1 via the Hermitian eigenvalues of the difference."""
    lam = np.linalg.eigvalsh(np.asarray(rho, dtype=complex) - np.asarray(sigma, dtype=complex))
    return float(0.5 * np.sum(np.abs(lam)))


@dataclass(frozen=True)
class PhysicalityReport:
    """Diagnostics from check_physical; passed is True iff all within tol."""

    hermiticity_deviation: float
    trace_deviation: float
    min_eigenvalue: float
    tol: float

    @property
    def passed(self) -> bool:
        return (
            self.hermiticity_deviation <= self.tol
            and self.trace_deviation <= self.tol
            and self.min_eigenvalue >= -self.tol
        )


def check_physical(rho: np.ndarray, tol: float = 1e-9) -> PhysicalityReport:
    """Report Hermiticity, trace and positivity deviations of a density matrix."""
    rho = np.asarray(rho, dtype=complex)
    herm = float(np.max(np.abs(rho - rho.conj().T)))
    trace = float(abs(np.trace(rho) - 1.0))
    sym = 0.5 * (rho + rho.conj().T)
    min_eig = float(np.linalg.eigvalsh(sym)[0])
    return PhysicalityReport(herm, trace, min_eig, tol)


def density_matrix_to_text(rho: np.ndarray) -> str:
    """Serialize a 4x4 density matrix to the structured text record format.

    One header line fixes the basis order, then 16 row-major entries as
    (real, imaginary) pairs with 15 significant digits.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise ValueError(f"expected a 4x4 matrix, got shape {rho.shape}")
    lines = ["# density-matrix", "# basis: " + " ".join(BASIS_ORDER)]
    for row in rho:
        for z in row:
            lines.append(f"{z.real:+.15e} {z.imag:+.15e}")
    return "\n".join(lines) + "\n"


def density_matrix_from_text(text: str) -> np.ndarray:
    """Parse the structured text record written by density_matrix_to_text."""
    entries = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"malformed density-matrix entry line: {line!r}")
        entries.append(complex(float(parts[0]), float(parts[1])))
    if len(entries) != 16:
        raise ValueError(f"expected 16 matrix entries, found {len(entries)}")
    return np.array(entries, dtype=complex).reshape(4, 4)
