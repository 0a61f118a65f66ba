"""Covariance families and their factorizations.

Supported families:

- identity
- ar1(rho):      Sigma_ij = rho^|i-j|
- spiked:        Sigma = V diag(spikes) V' + noise_var * I with orthonormal V
- explicit:      dense user matrix (in memory or from a header-free CSV)

A built CovarianceModel carries the eigendecomposition and the symmetric
spectral roots Sigma^{1/2}, Sigma^{-1/2}, Sigma^{-1}. The spectral root (not
Cholesky) is used so that inv_sqrt @ matrix @ inv_sqrt reproduces the identity
exactly up to floating error, which the sampling transformations rely on.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import toeplitz

from . import rng as _rng
from .errors import DefinitenessError, IllConditioningError, ParameterError

__all__ = [
    "EIG_FLOOR",
    "CovarianceSpec",
    "CovarianceModel",
    "build",
    "factor_sqrt",
    "schur_complement",
    "load_matrix_csv",
]

# eigenvalues below this declare the model ill-conditioned
EIG_FLOOR = 1e-10

_FAMILIES = ("identity", "ar1", "spiked", "explicit")


@dataclass(frozen=True, eq=False)
class CovarianceSpec:
    family: str = "identity"
    dim: int = 0
    rho: float = 0.0
    spikes: tuple = ()
    noise_var: float = 1.0
    matrix: np.ndarray | None = None
    matrix_path: str | None = None
    v_seed: int = 0

    def __post_init__(self):
        problems = self.validate()
        if problems:
            raise ParameterError("; ".join(problems))

    def validate(self) -> list:
        """Return a list of problems (empty when the spec is usable)."""
        out = []
        if self.family not in _FAMILIES:
            out.append(f"family must be one of {_FAMILIES}, got {self.family!r}")
            return out
        if self.family == "ar1" and not (-1.0 < self.rho < 1.0):
            out.append(f"rho must satisfy -1 < rho < 1, got {self.rho}")
        if self.family == "spiked":
            if len(self.spikes) == 0:
                out.append("spikes must be a nonempty tuple of positive values")
            elif any(not (s > 0) for s in self.spikes):
                out.append(f"spike values must be positive, got {self.spikes}")
            if not (self.noise_var > 0):
                out.append(f"noise_var must be positive, got {self.noise_var}")
            if self.dim and len(self.spikes) >= self.dim:
                out.append(f"spiked family needs r << p; got r={len(self.spikes)}, p={self.dim}")
        if self.family == "explicit":
            if self.matrix is None and self.matrix_path is None:
                out.append("explicit family needs matrix or matrix_path")
            if self.matrix is not None:
                m = np.asarray(self.matrix)
                if m.ndim != 2 or m.shape[0] != m.shape[1]:
                    out.append(f"explicit matrix must be square, got shape {m.shape}")
                elif self.dim and self.dim != m.shape[0]:
                    out.append(f"dim={self.dim} does not match matrix shape {m.shape}")
        if self.dim < 0:
            out.append(f"dim must be nonnegative, got {self.dim}")
        return out

    def with_dim(self, p: int) -> "CovarianceSpec":
        """Same family at dimension p (identity/ar1/spiked scale freely)."""
        if self.family == "explicit":
            cur = self.dim
            if self.matrix is not None:
                cur = np.asarray(self.matrix).shape[0]
            if cur and p != cur:
                raise ParameterError(
                    f"explicit covariance is fixed at dim {cur}; cannot rescale to {p}"
                )
            return dataclasses.replace(self, dim=p)
        return dataclasses.replace(self, dim=p)

    def to_dict(self) -> dict:
        d = {"family": self.family, "dim": self.dim}
        if self.family == "ar1":
            d["rho"] = self.rho
        elif self.family == "spiked":
            d["spikes"] = list(self.spikes)
            d["noise_var"] = self.noise_var
            d["v_seed"] = self.v_seed
        elif self.family == "explicit":
            if self.matrix_path is not None:
                d["matrix_path"] = self.matrix_path
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CovarianceSpec":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ParameterError(f"unknown covariance fields: {sorted(unknown)}")
        kwargs = dict(d)
        if "spikes" in kwargs:
            kwargs["spikes"] = tuple(float(s) for s in kwargs["spikes"])
        return cls(**kwargs)


@dataclass(eq=False)
class CovarianceModel:
    dim: int
    matrix: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sqrt: np.ndarray
    inv_sqrt: np.ndarray
    inv: np.ndarray
    spec: CovarianceSpec | None = field(default=None, repr=False)

    @property
    def condition_number(self) -> float:
        return float(self.eigenvalues[-1] / self.eigenvalues[0])

    @property
    def is_identity(self) -> bool:
        if self.spec is not None and self.spec.family == "identity":
            return True
        return np.array_equal(self.matrix, np.eye(self.dim))

    @property
    def is_diagonal(self) -> bool:
        return np.count_nonzero(self.matrix - np.diag(np.diagonal(self.matrix))) == 0

    def weighted_norm_sq(self, v: np.ndarray) -> float:
        """v' Sigma v."""
        return float(v @ self.matrix @ v)


def load_matrix_csv(path: str) -> np.ndarray:
    """Dense row-major CSV, no header."""
    m = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    if m.shape[0] != m.shape[1]:
        raise ParameterError(f"covariance CSV must be square, got shape {m.shape}")
    return m


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def _construct_matrix(spec: CovarianceSpec) -> np.ndarray:
    p = spec.dim
    if p <= 0:
        raise ParameterError(f"covariance dim must be positive to build, got {p}")
    if spec.family == "identity":
        return np.eye(p)
    if spec.family == "ar1":
        return toeplitz(spec.rho ** np.arange(p))
    if spec.family == "spiked":
        r = len(spec.spikes)
        if r >= p:
            raise ParameterError(f"spiked family needs r << p; got r={r}, p={p}")
        g = _rng.stream(spec.v_seed, _rng.SPIKE_STREAM, p).standard_normal((p, r))
        q, rr = np.linalg.qr(g)
        # fix the QR sign ambiguity so V is a pure function of the seed
        q = q * np.sign(np.diagonal(rr))
        return _sym(q * np.asarray(spec.spikes) @ q.T + spec.noise_var * np.eye(p))
    # explicit
    m = spec.matrix
    if m is None:
        m = load_matrix_csv(spec.matrix_path)
    m = np.asarray(m, dtype=np.float64)
    if not np.allclose(m, m.T, atol=1e-12, rtol=0.0):
        raise ParameterError("explicit covariance must be symmetric")
    return _sym(m)


def factor_sqrt(model_or_matrix) -> tuple:
    """(Sigma^{1/2}, Sigma^{-1/2}, Sigma^{-1}) via the eigendecomposition.

    Raises IllConditioningError when any eigenvalue falls below EIG_FLOOR.
    """
    if isinstance(model_or_matrix, CovarianceModel):
        m = model_or_matrix
        return m.sqrt, m.inv_sqrt, m.inv
    matrix = np.asarray(model_or_matrix, dtype=np.float64)
    vals, vecs = np.linalg.eigh(_sym(matrix))
    if vals[0] < EIG_FLOOR:
        raise IllConditioningError(
            f"eigenvalue {vals[0]:.3e} below the {EIG_FLOOR:.0e} conditioning floor"
        )
    return _roots_from_eigenpairs(vals, vecs)


def _roots_from_eigenpairs(vals: np.ndarray, vecs: np.ndarray) -> tuple:
    sq = _sym((vecs * np.sqrt(vals)) @ vecs.T)
    isq = _sym((vecs * (1.0 / np.sqrt(vals))) @ vecs.T)
    inv = _sym((vecs * (1.0 / vals)) @ vecs.T)
    return sq, isq, inv


def build(spec: CovarianceSpec) -> CovarianceModel:
    """Construct and factorize the covariance described by `spec`.

    Deterministic: two calls with equal specs produce bitwise-equal arrays
    (the spiked V draw is keyed by spec.v_seed).
    """
    matrix = _construct_matrix(spec)
    vals, vecs = np.linalg.eigh(matrix)
    if spec.family == "explicit" and vals[0] <= 0:
        raise DefinitenessError(
            f"explicit covariance is not positive definite (min eigenvalue {vals[0]:.3e})"
        )
    if vals[0] < EIG_FLOOR:
        raise IllConditioningError(
            f"eigenvalue {vals[0]:.3e} below the {EIG_FLOOR:.0e} conditioning floor"
        )
    sq, isq, inv = _roots_from_eigenpairs(vals, vecs)
    return CovarianceModel(
        dim=matrix.shape[0],
        matrix=matrix,
        eigenvalues=vals,
        eigenvectors=vecs,
        sqrt=sq,
        inv_sqrt=isq,
        inv=inv,
        spec=spec,
    )


def schur_complement(model: CovarianceModel, b_indices) -> np.ndarray:
    """Sigma_{B^c B^c} - Sigma_{B^c B} Sigma_{BB}^{-1} Sigma_{B B^c}.

    The conditional covariance of the complement block. B may be empty
    (returns the full matrix); B = all coordinates has no complement and
    raises.
    """
    p = model.dim
    b = np.asarray(b_indices, dtype=np.intp)
    if b.size and (b.min() < 0 or b.max() >= p):
        raise ParameterError(f"B indices out of range for dim {p}")
    if np.unique(b).size != b.size:
        raise ParameterError("B indices must be distinct")
    if b.size == p:
        raise ParameterError("B covers all coordinates; the complement block is empty")
    if b.size == 0:
        return model.matrix.copy()
    mask = np.ones(p, dtype=bool)
    mask[b] = False
    c = np.flatnonzero(mask)
    sbb = model.matrix[np.ix_(b, b)]
    sbc = model.matrix[np.ix_(b, c)]
    scc = model.matrix[np.ix_(c, c)]
    return _sym(scc - sbc.T @ np.linalg.solve(sbb, sbc))
