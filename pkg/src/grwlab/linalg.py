"""Dense complex linear algebra on small Hilbert spaces.

Matrices are plain ``numpy`` arrays of dtype ``complex128``; state vectors are
1-D arrays. Tensor products use the sys-major convention of ``numpy.kron``:
row index ``r = r_a * rows_b + r_b``.
"""
from __future__ import annotations

import numpy as np

HERMITIAN_ATOL = 1e-12
PSD_CLAMP = 1e-10


class LinalgError(ValueError):
    """Raised for malformed inputs to the linear algebra kernels."""


class NotHermitianError(LinalgError):
    pass


class DimensionError(LinalgError):
    pass


def as_matrix(m) -> np.ndarray:
    a = np.asarray(m, dtype=np.complex128)
    if a.ndim != 2:
        raise DimensionError(f"expected a matrix, got shape {a.shape}")
    return a


def is_hermitian(m: np.ndarray, atol: float = HERMITIAN_ATOL) -> bool:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    return bool(np.max(np.abs(m - m.conj().T), initial=0.0) <= atol * scale)


def _require_hermitian(m: np.ndarray, atol: float) -> np.ndarray:
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise DimensionError(f"matrix is not square: {m.shape}")
    if not is_hermitian(m, atol):
        raise NotHermitianError("matrix is not Hermitian")
    return m


def hermitize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.conj().T)


def tensor_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product ``a ⊗ b`` (first factor is the major index)."""
    return np.kron(np.asarray(a), np.asarray(b))


def partial_trace(m: np.ndarray, dims: tuple[int, int], over: str = "env") -> np.ndarray:
    """Partial trace of an operator on ``H_sys ⊗ H_env``.

    Args:
        m: square matrix of size ``d_sys * d_env``.
        dims: ``(d_sys, d_env)``.
        over: ``"env"`` returns ``tr_env m``; ``"sys"`` returns ``tr_sys m``.
    """
    m = as_matrix(m)
    d_sys, d_env = (int(d) for d in dims)
    if m.shape != (d_sys * d_env, d_sys * d_env):
        raise DimensionError(f"shape {m.shape} does not match dims {dims}")
    t = m.reshape(d_sys, d_env, d_sys, d_env)
    if over == "env":
        return np.einsum("ajbj->ab", t)
    if over == "sys":
        return np.einsum("iaib->ab", t)
    raise ValueError(f"over must be 'env' or 'sys', got {over!r}")


def herm_eig(m: np.ndarray, atol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix, eigenvalues ascending."""
    m = _require_hermitian(m, atol)
    w, v = np.linalg.eigh(hermitize(m))
    return w, v


def psd_sqrt(m: np.ndarray, clamp: float = PSD_CLAMP) -> np.ndarray:
    """Principal square root of a positive semidefinite matrix.

    Eigenvalues in ``[-clamp, 0)`` are treated as round-off and set to zero.
    """
    w, v = herm_eig(m)
    if w.size and w[0] < -clamp:
        raise LinalgError(f"matrix has negative eigenvalue {w[0]:.3e}")
    w = np.sqrt(np.clip(w, 0.0, None))
    return hermitize((v * w) @ v.conj().T)


def expm_skew_herm(h: np.ndarray, t: float) -> np.ndarray:
    """Unitary propagator ``exp(-i h t)`` for Hermitian ``h``."""
    w, v = herm_eig(h)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    w = np.linalg.eigvalsh(hermitize(a - b))
    return 0.5 * float(np.sum(np.abs(w)))


def op_norm(m: np.ndarray) -> float:
    """Spectral norm (largest singular value)."""
    m = np.asarray(m)
    if m.size == 0:
        return 0.0
    return float(np.linalg.norm(m, 2))


def ket(dim: int, index: int) -> np.ndarray:
    v = np.zeros(dim, dtype=np.complex128)
    v[index] = 1.0
    return v


def projector(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=np.complex128)
    return np.outer(psi, psi.conj())


def normalize(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=np.complex128)
    n = np.linalg.norm(psi)
    if n == 0:
        raise LinalgError("cannot normalize the zero vector")
    return psi / n


def schmidt_coefficients(psi: np.ndarray, dims: tuple[int, int]) -> np.ndarray:
    """Schmidt coefficients (singular values) of a bipartite pure state."""
    d_sys, d_env = dims
    return np.linalg.svd(np.asarray(psi).reshape(d_sys, d_env), compute_uv=False)


def schmidt_rank(psi: np.ndarray, dims: tuple[int, int], tol: float = 1e-8) -> int:
    s = schmidt_coefficients(psi, dims)
    return int(np.sum(s > tol))


def random_hermitian(dim: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return scale * hermitize(a)


def random_density(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_state(dim: int, rng: np.random.Generator) -> np.ndarray:
    return normalize(rng.normal(size=dim) + 1j * rng.normal(size=dim))
