"""Symmetric alpha-stable laws, univariate and multivariate.

Conventions: SαS(α, σ) has characteristic function ``exp(-|σt|^α)``; at α = 2 this
is the Gaussian with variance ``2σ²``. A k-dimensional SαS law is described by a
finite measure Γ on the unit sphere and has characteristic function
``exp(-∫|<t, s>|^α Γ(ds))``. Only discrete Γ are represented. Stored atoms are
never symmetrized; every evaluation uses ``(s, w) -> {(s, w/2), (-s, w/2)}``.

No stable density or CDF is evaluated anywhere in the package.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import gamma as gamma_fn

from .exceptions import DomainError
from .logger import get_logger
from .streams import RandomStream, SampleBatch, as_stream

logger = get_logger("stable_dist")

ArrayLike = Union[float, Sequence[float], np.ndarray]

DIRECTION_TOL = 1e-12
SYMMETRY_TOL = 1e-12
EIGEN_TOL = 1e-10
# atoms handled per chunk when evaluating or sampling a spectral measure
ATOM_CHUNK = 1 << 14
SAMPLE_CHUNK = 1 << 12


def _check_alpha(alpha: float, *, allow_two: bool = True) -> float:
    alpha = float(alpha)
    upper_ok = alpha <= 2.0 if allow_two else alpha < 2.0
    if not (alpha > 0.0 and upper_ok and math.isfinite(alpha)):
        bound = "(0, 2]" if allow_two else "(0, 2)"
        raise DomainError(f"alpha must lie in {bound}, got {alpha}")
    return alpha


@dataclass(frozen=True)
class StableParams:
    """Univariate SαS(alpha, sigma)."""

    alpha: float
    sigma: float = 1.0

    def __post_init__(self) -> None:
        _check_alpha(self.alpha)
        if not (self.sigma >= 0.0 and math.isfinite(self.sigma)):
            raise DomainError(f"sigma must be finite and >= 0, got {self.sigma}")

    @property
    def is_gaussian(self) -> bool:
        return self.alpha == 2.0

    @property
    def variance(self) -> float:
        """2σ² at α = 2, infinite otherwise."""
        return 2.0 * self.sigma**2 if self.is_gaussian else math.inf

    def to_dict(self) -> Dict[str, float]:
        return {"alpha": self.alpha, "sigma": self.sigma}


def c_alpha(alpha: float) -> float:
    """(π/2) / (Γ(α) sin(πα/2)) for α < 2, and exactly 1 at α = 2.

    This is the improper integral ∫₀^∞ sin(u) u^{-α} du, the constant in the
    small-t expansion 1 - ψ_W(t) ~ c_α |t|^α L(1/|t|).
    """
    alpha = _check_alpha(alpha)
    if alpha == 2.0:
        return 1.0
    return (math.pi / 2.0) / (float(gamma_fn(alpha)) * math.sin(math.pi * alpha / 2.0))


def cf_sas(params: StableParams, t: ArrayLike) -> Union[float, np.ndarray]:
    """exp(-|σt|^α), vectorized over ``t``."""
    t_arr = np.asarray(t, dtype=np.float64)
    out = np.exp(-np.abs(params.sigma * t_arr) ** params.alpha)
    return float(out) if out.ndim == 0 else out


def draw_sas(params: StableParams, size: Union[int, Tuple[int, ...]], gen: np.random.Generator) -> np.ndarray:
    """Chambers-Mallows-Stuck draws specialised to the symmetric case.

    One uniform angle and one unit exponential per draw; α = 2 uses a normal
    scaled by √2·σ and α = 1 reduces to σ·tan(φ).
    """
    alpha, sigma = params.alpha, params.sigma
    if alpha == 2.0:
        return math.sqrt(2.0) * sigma * gen.standard_normal(size)
    phi = gen.uniform(-math.pi / 2.0, math.pi / 2.0, size)
    if alpha == 1.0:
        return sigma * np.tan(phi)
    w = gen.standard_exponential(size)
    x = (
        np.sin(alpha * phi) / np.cos(phi) ** (1.0 / alpha)
        * (np.cos((1.0 - alpha) * phi) / w) ** ((1.0 - alpha) / alpha)
    )
    return sigma * x


def sample_sas(params: StableParams, n: int, rng: Union[RandomStream, int]) -> SampleBatch:
    """``n`` i.i.d. SαS(α, σ) draws from a seeded stream."""
    if n < 1:
        raise DomainError(f"sample size must be >= 1, got {n}")
    stream = as_stream(rng)
    values = draw_sas(params, int(n), stream.generator())
    return SampleBatch(values=values, lineage=stream.lineage)


def frac_abs_moment(params: StableParams, nu: float) -> float:
    """E|X|^ν for X ~ SαS(α, σ).

    Closed form K_{ν,α} σ^ν with
    K = 2^ν Γ((1+ν)/2) Γ(1-ν/α) / (√π Γ(1-ν/2)); at α = 2 the Gaussian
    moment 2^ν Γ((1+ν)/2)/√π (valid for every ν > 0).
    """
    alpha = params.alpha
    nu = float(nu)
    if not nu > 0.0:
        raise DomainError(f"nu must be > 0, got {nu}")
    if alpha < 2.0 and nu >= alpha:
        raise DomainError(f"E|X|^nu is infinite for nu={nu} >= alpha={alpha}")
    return moment_constant(alpha, nu) * params.sigma**nu


def moment_constant(alpha: float, nu: float) -> float:
    """K_{ν,α} = E|X|^ν for X ~ SαS(α, 1)."""
    alpha = _check_alpha(alpha)
    head = 2.0**nu * float(gamma_fn((1.0 + nu) / 2.0)) / math.sqrt(math.pi)
    if alpha == 2.0:
        return head
    return head * float(gamma_fn(1.0 - nu / alpha)) / float(gamma_fn(1.0 - nu / 2.0))


@dataclass(frozen=True)
class MomentConstantRow:
    alpha: float
    nu: float
    K: float
    seeds: Tuple[int, ...]
    n_draws: int
    spread: float


def moment_constants_table(
    alphas: Iterable[float],
    nus: Iterable[float],
    seeds: Sequence[int] = (11, 23, 37),
    n_draws: int = 10_000_000,
    chunk: int = 1_000_000,
) -> List[MomentConstantRow]:
    """Monte Carlo estimates of K_{ν,α}, one per (α, ν) with ν < α.

    ``K`` is the mean over seeds and ``spread`` the largest relative deviation of
    a single seed from it. Serves as the provenance cross-check for
    :func:`moment_constant`.
    """
    rows: List[MomentConstantRow] = []
    for alpha in alphas:
        for nu in nus:
            if alpha < 2.0 and nu >= alpha:
                continue
            params = StableParams(alpha, 1.0)
            per_seed = []
            for seed in seeds:
                gen = RandomStream(int(seed)).child("moment", int(round(alpha * 1000)), int(round(nu * 1000))).generator()
                total, done = 0.0, 0
                while done < n_draws:
                    size = min(chunk, n_draws - done)
                    total += float(np.sum(np.abs(draw_sas(params, size, gen)) ** nu))
                    done += size
                per_seed.append(total / n_draws)
            k_hat = float(np.mean(per_seed))
            spread = float(np.max(np.abs(np.asarray(per_seed) - k_hat)) / k_hat)
            rows.append(MomentConstantRow(float(alpha), float(nu), k_hat, tuple(int(s) for s in seeds), int(n_draws), spread))
            logger.debug(f"K(alpha={alpha}, nu={nu}) = {k_hat:.6g} (spread {spread:.2e})")
    return rows


def write_moment_table(rows: Iterable[MomentConstantRow], path: Union[str, Path]) -> Path:
    """CSV with columns ``alpha,nu,K,seeds,n_draws``."""
    path = Path(path)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["alpha", "nu", "K", "seeds", "n_draws"])
        for row in rows:
            writer.writerow([row.alpha, row.nu, repr(row.K), " ".join(str(s) for s in row.seeds), row.n_draws])
    return path


class SpectralMeasure:
    """Finite discrete measure on the unit sphere S^{k-1}.

    Atoms are kept as given (unsymmetrized); zero-weight atoms are allowed but
    carry no mass.
    """

    def __init__(self, dim: int, directions: ArrayLike, weights: ArrayLike):
        if dim < 1:
            raise DomainError(f"dim must be >= 1, got {dim}")
        dirs = np.array(directions, dtype=np.float64).reshape(-1, dim) if np.size(directions) else np.zeros((0, dim))
        w = np.array(weights, dtype=np.float64).reshape(-1)
        if dirs.shape[0] != w.shape[0]:
            raise DomainError(f"{dirs.shape[0]} directions but {w.shape[0]} weights")
        if np.any(~np.isfinite(w)) or np.any(w < 0.0):
            raise DomainError("spectral weights must be finite and >= 0")
        if dirs.shape[0]:
            norms = np.linalg.norm(dirs, axis=1)
            bad = np.abs(norms - 1.0) > DIRECTION_TOL
            if np.any(bad):
                raise DomainError(f"direction {int(np.argmax(bad))} has norm {norms[bad][0]!r}, expected 1")
        self.dim = int(dim)
        self.directions = dirs
        self.weights = w
        self.directions.setflags(write=False)
        self.weights.setflags(write=False)

    @classmethod
    def from_atoms(cls, dim: int, atoms: Iterable[Tuple[Sequence[float], float]]) -> "SpectralMeasure":
        atoms = list(atoms)
        dirs = np.array([a[0] for a in atoms], dtype=np.float64).reshape(-1, dim)
        weights = np.array([a[1] for a in atoms], dtype=np.float64)
        return cls(dim, dirs, weights)

    @classmethod
    def from_vectors(cls, vectors: ArrayLike, weights: ArrayLike) -> "SpectralMeasure":
        """Normalize raw vectors to directions; zero vectors are rejected."""
        v = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
        norms = np.linalg.norm(v, axis=1)
        if np.any(norms == 0.0):
            raise DomainError("zero vector has no direction")
        return cls(v.shape[1], v / norms[:, None], weights)

    def __len__(self) -> int:
        return int(self.weights.shape[0])

    @property
    def atoms(self) -> List[Tuple[np.ndarray, float]]:
        return [(self.directions[i], float(self.weights[i])) for i in range(len(self))]

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))

    def symmetrized(self) -> Tuple[np.ndarray, np.ndarray]:
        """Directions and weights of the symmetrization, ``2n`` atoms."""
        dirs = np.concatenate([self.directions, -self.directions], axis=0)
        half = 0.5 * self.weights
        return dirs, np.concatenate([half, half])

    def to_dict(self, alpha: Optional[float] = None) -> Dict[str, Any]:
        out: Dict[str, Any] = {"dim": self.dim}
        if alpha is not None:
            out["alpha"] = float(alpha)
        out["atoms"] = [{"s": [float(x) for x in s], "w": float(w)} for s, w in zip(self.directions, self.weights)]
        return out

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SpectralMeasure":
        try:
            dim = int(data["dim"])
            atoms = [(a["s"], a["w"]) for a in data["atoms"]]
        except (KeyError, TypeError) as e:
            raise DomainError(f"malformed spectral measure: missing {e}") from e
        return cls.from_atoms(dim, atoms)

    def to_json(self, alpha: Optional[float] = None) -> str:
        return json.dumps(self.to_dict(alpha), sort_keys=True)

    def __repr__(self) -> str:
        return f"SpectralMeasure(dim={self.dim}, atoms={len(self)}, total_mass={self.total_mass:.6g})"


def as_t_matrix(t: ArrayLike, dim: int) -> Tuple[np.ndarray, bool]:
    """``(g, dim)`` grid from ``t`` and whether ``t`` was a single point.

    For dim = 1 a flat array is a grid of scalars; otherwise it is one vector.
    """
    t_arr = np.asarray(t, dtype=np.float64)
    if t_arr.ndim == 0:
        if dim != 1:
            raise DomainError(f"scalar t given for dimension {dim}")
        return t_arr.reshape(1, 1), True
    if t_arr.ndim == 1:
        if dim == 1:
            return t_arr.reshape(-1, 1), False
        if t_arr.shape[0] != dim:
            raise DomainError(f"t has dimension {t_arr.shape[0]}, expected {dim}")
        return t_arr.reshape(1, dim), True
    if t_arr.shape[-1] != dim:
        raise DomainError(f"t has dimension {t_arr.shape[-1]}, expected {dim}")
    return t_arr.reshape(-1, dim), False


def spectral_exponent(gamma: SpectralMeasure, alpha: float, t: ArrayLike) -> np.ndarray:
    """∫|<t, s>|^α Γ(ds) over the symmetrized measure, one value per row of ``t``."""
    alpha = _check_alpha(alpha)
    t_mat, _ = as_t_matrix(t, gamma.dim)
    dirs, weights = gamma.symmetrized()
    total = np.zeros(t_mat.shape[0])
    for start in range(0, dirs.shape[0], ATOM_CHUNK):
        stop = start + ATOM_CHUNK
        proj = np.abs(t_mat @ dirs[start:stop].T) ** alpha
        total += proj @ weights[start:stop]
    return total


def cf_multivariate_sas(gamma: SpectralMeasure, alpha: float, t: ArrayLike) -> Union[float, np.ndarray]:
    """exp(-∫|<t, s>|^α Γ(ds)) on the symmetrized measure.

    ``t`` is one k-vector or an ``(g, k)`` grid; for k = 1 a flat array is read as
    a grid of scalars.
    """
    _, single = as_t_matrix(t, gamma.dim)
    out = np.exp(-spectral_exponent(gamma, alpha, t))
    return float(out[0]) if single else out


def draw_multivariate_sas(gamma: SpectralMeasure, alpha: float, n: int, gen: np.random.Generator) -> np.ndarray:
    """``(n, k)`` draws of Σ_j w_j^{1/α} s_j Z_j with Z_j i.i.d. SαS(α, 1).

    One Z per stored atom: the pair {(s, w/2), (-s, w/2)} contributes
    (w/2)^{1/α} s (Z - Z') which has the law of w^{1/α} s Z.
    """
    alpha = _check_alpha(alpha)
    if len(gamma) == 0:
        raise DomainError("spectral measure has no atoms")
    loadings = gamma.weights ** (1.0 / alpha)
    unit = StableParams(alpha, 1.0)
    out = np.zeros((n, gamma.dim))
    for start in range(0, n, SAMPLE_CHUNK):
        rows = min(SAMPLE_CHUNK, n - start)
        for a0 in range(0, len(gamma), ATOM_CHUNK):
            a1 = min(a0 + ATOM_CHUNK, len(gamma))
            z = draw_sas(unit, (rows, a1 - a0), gen)
            out[start:start + rows] += (z * loadings[a0:a1]) @ gamma.directions[a0:a1]
    return out


def sample_multivariate_sas(gamma: SpectralMeasure, alpha: float, n: int, rng: Union[RandomStream, int]) -> SampleBatch:
    """``n`` i.i.d. draws of SαS_k(Γ)."""
    if n < 1:
        raise DomainError(f"sample size must be >= 1, got {n}")
    stream = as_stream(rng)
    values = draw_multivariate_sas(gamma, alpha, int(n), stream.generator())
    return SampleBatch(values=values, lineage=stream.lineage)


class GaussianCov:
    """Centered k-dimensional Gaussian given by its covariance matrix."""

    def __init__(self, matrix: ArrayLike):
        m = np.atleast_2d(np.array(matrix, dtype=np.float64))
        if m.shape[0] != m.shape[1]:
            raise DomainError(f"covariance must be square, got shape {m.shape}")
        if np.max(np.abs(m - m.T), initial=0.0) > SYMMETRY_TOL:
            raise DomainError("covariance is not symmetric")
        eig = np.linalg.eigvalsh(m)
        if eig.size and eig[0] < -EIGEN_TOL:
            raise DomainError(f"covariance has negative eigenvalue {eig[0]:.3e}")
        self.dim = int(m.shape[0])
        self.matrix = m
        self.matrix.setflags(write=False)

    def cf(self, t: ArrayLike) -> Union[float, np.ndarray]:
        """exp(-½ <t, M t>)."""
        t_mat, single = as_t_matrix(t, self.dim)
        quad = np.einsum("gi,ij,gj->g", t_mat, self.matrix, t_mat)
        out = np.exp(-0.5 * quad)
        return float(out[0]) if single else out

    def draw(self, n: int, gen: np.random.Generator) -> np.ndarray:
        return gen.multivariate_normal(np.zeros(self.dim), self.matrix, size=n, method="eigh")

    def to_dict(self) -> Dict[str, Any]:
        return {"dim": self.dim, "matrix": self.matrix.tolist()}

    def __repr__(self) -> str:
        return f"GaussianCov(dim={self.dim})"
