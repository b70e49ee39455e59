"""Shared helpers: independent state constructions used as test oracles.

The Jones vectors and Born probabilities here are written out from scratch
(not imported from the package) so that round-trip and projection tests
check the package against an independent implementation of the same
conventions.
"""

from __future__ import annotations

import numpy as np
import pytest

# independent copy of the basis conventions, for oracle-side computations
SQ2 = 1.0 / np.sqrt(2.0)
JONES = {
    "H": np.array([1.0, 0.0], dtype=complex),
    "V": np.array([0.0, 1.0], dtype=complex),
    "D": np.array([SQ2, SQ2], dtype=complex),
    "A": np.array([SQ2, -SQ2], dtype=complex),
    "R": np.array([SQ2, -1j * SQ2], dtype=complex),
    "L": np.array([SQ2, 1j * SQ2], dtype=complex),
}
LABELS6 = ("H", "V", "D", "A", "R", "L")


def oracle_projection_prob(rho: np.ndarray, label_xx: str, label_x: str) -> float:
    """Born probability computed directly from hand-written Jones vectors."""
    k = np.kron(JONES[label_xx], JONES[label_x])
    return float(np.real(k.conj() @ rho @ k))


def oracle_probs_36(rho: np.ndarray) -> dict[tuple[str, str], float]:
    return {
        (a, b): oracle_projection_prob(rho, a, b) for a in LABELS6 for b in LABELS6
    }


def random_density_matrix(rng: np.random.Generator) -> np.ndarray:
    """Ginibre-induced random full-rank two-qubit state."""
    g = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    rho = g @ g.conj().T
    return rho / np.real(np.trace(rho))


def random_pure_ket(rng: np.random.Generator, dim: int = 4) -> np.ndarray:
    k = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return k / np.linalg.norm(k)


def random_unitary(rng: np.random.Generator, dim: int = 2) -> np.ndarray:
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(g)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def pytest_addoption(parser):
    parser.addoption(
        "--acceptance-pulses",
        type=int,
        default=10_000_000,
        help="pulses per setting for the heavy acceptance datasets",
    )
