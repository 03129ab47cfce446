"""Predicted infinite-width limits, layer by layer.

Univariate (one input): Y^(ℓ) → SαS(α_ℓ, σ_ℓ) with

    σ_2^{α_2} = σ_B^{α_2} + c_{α_2} E|φ(Y^(1))|^{α_2}
    σ_ℓ^{α_ℓ} = σ_B^{α_ℓ} + c_{α_ℓ} E|φ(S)|^{α_ℓ},   S ~ SαS(α_{ℓ-1}, σ_{ℓ-1})

Multivariate (k inputs): stable layers carry a discrete spectral measure Γ_ℓ
(bias atom at 𝟙/√k plus one atom per Monte Carlo draw), Gaussian layers a
covariance M_ℓ = 2σ_B² 𝟙𝟙ᵀ + 2 E[φ(y)φ(y)ᵀ]. Every expectation is a Monte
Carlo mean over exact draws of the previous layer's limit.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from .exceptions import DomainError, NumericalError
from .heavy_tail import draw_weights
from .logger import get_logger
from .mlp import NetworkConfig
from .stable_dist import (
    EIGEN_TOL,
    GaussianCov,
    SpectralMeasure,
    StableParams,
    c_alpha,
    cf_multivariate_sas,
    cf_sas,
    draw_multivariate_sas,
    draw_sas,
)
from .streams import RandomStream, SampleBatch, as_stream

logger = get_logger("limit_theory")

DEFAULT_MC_SIZE = 1_000_000
BOOTSTRAP_RESAMPLES = 200
SAMPLE_ATOMS = 256
KMEANS_ITER = 20
CLUSTER_WARN = 1e-3
PSD_TOL = 1e-8
Z_95 = 1.959963984540054


@dataclass
class LayerLimit:
    """Predicted law of one layer; ``stable`` when α < 2, ``gaussian`` otherwise."""

    layer: int
    alpha: float
    sigma: Optional[float] = None
    sigma_se: Optional[float] = None
    integral: Optional[float] = None
    integral_se: Optional[float] = None
    gamma: Optional[SpectralMeasure] = None
    mass_se: Optional[float] = None
    cov: Optional[GaussianCov] = None
    cov_se: Optional[np.ndarray] = None
    cluster_bound: float = 0.0

    @property
    def kind(self) -> str:
        return "gaussian" if self.alpha == 2.0 else "stable"

    @property
    def params(self) -> StableParams:
        if self.sigma is None:
            raise DomainError(f"layer {self.layer} has no univariate scale")
        return StableParams(self.alpha, self.sigma)

    @property
    def sigma_ci(self) -> Tuple[float, float]:
        if self.sigma is None or self.sigma_se is None:
            raise DomainError(f"layer {self.layer} has no univariate scale")
        return (self.sigma - Z_95 * self.sigma_se, self.sigma + Z_95 * self.sigma_se)

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"layer": self.layer, "alpha": self.alpha, "type": self.kind}
        if self.sigma is not None:
            out.update(
                sigma=self.sigma,
                sigma_se=self.sigma_se,
                sigma_ci=list(self.sigma_ci),
                integral=self.integral,
                integral_se=self.integral_se,
            )
        if self.gamma is not None:
            out["spectral"] = self.gamma.to_dict(self.alpha)
            out["total_mass"] = self.gamma.total_mass
            out["total_mass_se"] = self.mass_se
            out["cluster_bound"] = self.cluster_bound
        if self.cov is not None:
            out["covariance"] = self.cov.matrix.tolist()
            out["covariance_se"] = None if self.cov_se is None else self.cov_se.tolist()
        return out


@dataclass
class LimitLaw:
    """Per-layer predicted limits plus the Monte Carlo metadata that produced them."""

    k: int
    layers: Dict[int, LayerLimit]
    n_mc: int
    lineage: Tuple[int, Tuple[int, ...]]
    bootstrap: int = BOOTSTRAP_RESAMPLES
    notes: List[str] = field(default_factory=list)

    @property
    def multivariate(self) -> bool:
        return any(v.gamma is not None or v.cov is not None for v in self.layers.values())

    def layer(self, index: int) -> LayerLimit:
        try:
            return self.layers[index]
        except KeyError:
            raise DomainError(f"layer {index} not computed; available layers {sorted(self.layers)}") from None

    def sigma(self, index: int) -> float:
        value = self.layer(index).sigma
        if value is None:
            raise DomainError(f"layer {index} has no univariate scale")
        return value

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": "multivariate" if self.multivariate else "univariate",
            "k": self.k,
            "n_mc": self.n_mc,
            "bootstrap": self.bootstrap,
            "seed": self.lineage[0],
            "stream_key": list(self.lineage[1]),
            "notes": list(self.notes),
            "layers": [self.layers[i].to_dict() for i in sorted(self.layers)],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _mean_se(values: np.ndarray, gen: np.random.Generator, resamples: int = BOOTSTRAP_RESAMPLES) -> Tuple[Any, Any]:
    """Sample mean and its bootstrap standard error (along axis 0)."""
    n = values.shape[0]
    mean = values.mean(axis=0)
    boot = np.empty((resamples,) + values.shape[1:])
    for b in range(resamples):
        boot[b] = values[gen.integers(0, n, size=n)].mean(axis=0)
    return mean, boot.std(axis=0, ddof=1)


def nu1_sampler(net: NetworkConfig, x: Any, n: int, rng: Union[RandomStream, int] = 0) -> SampleBatch:
    """Draws of Y^(1)_1 = Σ_j W^(1)_1j x_j + B^(1).

    A single input gives values of shape ``(n,)``; k inputs ``(k, I)`` give
    ``(n, k)`` with the weights shared across inputs.
    """
    if n < 1:
        raise DomainError(f"sample size must be >= 1, got {n}")
    xs = np.asarray(x, dtype=np.float64)
    single = xs.ndim == 1
    xs2 = xs[None, :] if single else xs
    if xs2.ndim != 2 or xs2.shape[1] != net.input_dim:
        raise DomainError(f"inputs must be vectors in R^{net.input_dim}, got shape {xs.shape}")
    stream = as_stream(rng)
    gen = stream.generator()
    lc = net.layer(1)
    w = draw_weights(lc.weights, (n, net.input_dim), gen)
    b = draw_sas(lc.bias, n, gen)
    values = np.sum(w[:, None, :] * xs2[None, :, :], axis=-1) + b[:, None]
    return SampleBatch(values=values[:, 0] if single else values, lineage=stream.lineage, layer=1)


def _check_mc(n_mc: int) -> None:
    if n_mc < 2:
        raise DomainError(f"Monte Carlo size must be >= 2, got {n_mc}")


def sigma_recursion(
    net: NetworkConfig, x: Any, n_mc: int = DEFAULT_MC_SIZE, rng: Union[RandomStream, int] = 0
) -> LimitLaw:
    """σ_ℓ for ℓ = 2..L+1 at a single input, with delta-method standard errors.

    The error of σ_{ℓ-1} is pushed through the next integral with a central
    difference in σ_{ℓ-1} computed on common random numbers.
    """
    _check_mc(n_mc)
    stream = as_stream(rng)
    phi = net.activation
    layers: Dict[int, LayerLimit] = {}
    prev_sigma, prev_se = 0.0, 0.0
    for ell in range(2, net.n_layers + 1):
        lc = net.layer(ell)
        alpha = lc.alpha
        c = c_alpha(alpha)
        if ell == 2:
            y = nu1_sampler(net, x, n_mc, stream.child("nu1")).values
            z = None
        else:
            z = draw_sas(StableParams(net.layer(ell - 1).alpha, 1.0), n_mc, stream.child(ell).generator())
            y = prev_sigma * z
        f = np.abs(phi(y)) ** alpha
        integral, integral_se = _mean_se(f, stream.child(ell, "bootstrap").generator())
        integral, integral_se = float(integral), float(integral_se)
        if z is not None and prev_se > 0:
            h = max(1e-3 * prev_sigma, 1e-6)
            lo = max(prev_sigma - h, 0.0)
            d_int = (np.mean(np.abs(phi((prev_sigma + h) * z)) ** alpha) - np.mean(np.abs(phi(lo * z)) ** alpha)) / (
                prev_sigma + h - lo
            )
            integral_se = math.hypot(integral_se, float(d_int) * prev_se)
        power = lc.sigma_bias**alpha + c * integral
        sigma = power ** (1.0 / alpha)
        sigma_se = c * integral_se * sigma ** (1.0 - alpha) / alpha if sigma > 0 else 0.0
        logger.info(f"layer {ell}: sigma = {sigma:.6g} (se {sigma_se:.2g}, alpha {alpha})")
        layers[ell] = LayerLimit(ell, alpha, sigma, sigma_se, integral, integral_se)
        prev_sigma, prev_se = sigma, sigma_se
    return LimitLaw(1, layers, n_mc, stream.lineage)


def _fold_axial(directions: np.ndarray, centers: np.ndarray, labels: np.ndarray) -> np.ndarray:
    sign = np.sign(np.einsum("ij,ij->i", directions, centers[labels]))
    sign[sign == 0] = 1.0
    return directions * sign[:, None]


def _assign(directions: np.ndarray, centers: np.ndarray, chunk: int = 1 << 15) -> np.ndarray:
    labels = np.empty(directions.shape[0], dtype=np.int64)
    for start in range(0, directions.shape[0], chunk):
        block = directions[start : start + chunk]
        labels[start : start + chunk] = np.argmax(np.abs(block @ centers.T), axis=1)
    return labels


def cluster_spectral(
    gamma: SpectralMeasure, alpha: float, budget: int, rng: Union[RandomStream, int] = 0
) -> Tuple[SpectralMeasure, float]:
    """Merge atoms into at most ``budget`` axes by weighted spherical k-means.

    Directions s and -s are interchangeable (evaluation symmetrizes), so atoms
    are clustered by the line they span. Each cluster keeps its total weight.
    Returns the merged measure and a bound D with
    |log ψ_merged(t) - log ψ(t)| ≤ D ‖t‖^α.
    """
    if budget < 1:
        raise DomainError(f"atom budget must be >= 1, got {budget}")
    if len(gamma) <= budget:
        return gamma, 0.0
    gen = as_stream(rng).generator()
    d, w = gamma.directions, gamma.weights
    p = w / w.sum()
    n_pos = int(np.count_nonzero(p))
    init = gen.choice(len(gamma), size=min(budget, n_pos), replace=False, p=p)
    centers = d[init].copy()
    labels = _assign(d, centers)
    for _ in range(KMEANS_ITER):
        aligned = _fold_axial(d, centers, labels)
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, aligned * w[:, None])
        norms = np.linalg.norm(sums, axis=1)
        keep = norms > 0
        centers[keep] = sums[keep] / norms[keep, None]
        new_labels = _assign(d, centers)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    aligned = _fold_axial(d, centers, labels)
    mass = np.bincount(labels, weights=w, minlength=centers.shape[0])
    dist = np.linalg.norm(aligned - centers[labels], axis=1)
    bound = float(max(alpha, 1.0) * np.sum(w * dist ** min(alpha, 1.0)))
    used = mass > 0
    merged = SpectralMeasure(gamma.dim, centers[used], mass[used])
    logger.debug(f"clustered {len(gamma)} atoms into {len(merged)} (bound {bound:.3g})")
    return merged, bound


def _spectral_layer(
    ell: int, alpha: float, sigma_bias: float, phi_y: np.ndarray, gen: np.random.Generator
) -> Tuple[SpectralMeasure, float]:
    """Γ_ℓ from draws φ(y) of shape (N, k), plus the bootstrap s.e. of its mass."""
    n, k = phi_y.shape
    c = c_alpha(alpha)
    r = np.linalg.norm(phi_y, axis=1)
    nz = r > 0
    directions = [np.full((1, k), 1.0 / math.sqrt(k))]
    weights = [np.array([(sigma_bias * math.sqrt(k)) ** alpha])]
    if np.any(nz):
        directions.append(phi_y[nz] / r[nz, None])
        weights.append(c * r[nz] ** alpha / n)
    gamma = SpectralMeasure(k, np.concatenate(directions), np.concatenate(weights))
    _, se = _mean_se(c * r**alpha, gen)
    logger.debug(f"layer {ell}: {int(np.count_nonzero(~nz))} zero-norm draws dropped from the spectral measure")
    return gamma, float(se)


def _gaussian_layer(sigma_bias: float, phi_y: np.ndarray, gen: np.random.Generator) -> Tuple[GaussianCov, np.ndarray]:
    """M = 2σ_B² 𝟙𝟙ᵀ + 2 E[φφᵀ], symmetrized and projected onto the PSD cone if needed."""
    k = phi_y.shape[1]
    outer = phi_y[:, :, None] * phi_y[:, None, :]
    mean, se = _mean_se(outer, gen)
    m = 2.0 * sigma_bias**2 * np.ones((k, k)) + 2.0 * mean
    m = 0.5 * (m + m.T)
    eig, vec = np.linalg.eigh(m)
    scale = max(1.0, float(np.max(np.abs(eig))))
    if eig.min() < -PSD_TOL * scale:
        raise NumericalError(f"covariance estimate is not positive semidefinite: eigenvalues {eig.tolist()}")
    if eig.min() < -EIGEN_TOL:
        logger.warning(f"projecting covariance onto the PSD cone (smallest eigenvalue {eig.min():.3g})")
        m = (vec * np.clip(eig, 0.0, None)) @ vec.T
        m = 0.5 * (m + m.T)
    return GaussianCov(m), 2.0 * se


def multivariate_recursion(
    net: NetworkConfig,
    xs: Any,
    n_mc: int = DEFAULT_MC_SIZE,
    rng: Union[RandomStream, int] = 0,
    atoms_budget: Optional[int] = None,
    sample_atoms: int = SAMPLE_ATOMS,
) -> LimitLaw:
    """Walk all layers at k inputs: Γ_ℓ for stable layers, M_ℓ for Gaussian ones.

    Draws of a stable previous layer come from Γ_{ℓ-1} merged to
    ``sample_atoms`` axes; ``atoms_budget`` optionally merges each reported Γ_ℓ.
    """
    _check_mc(n_mc)
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    k = xs.shape[0]
    stream = as_stream(rng)
    phi = net.activation
    layers: Dict[int, LayerLimit] = {}
    notes: List[str] = []
    for ell in range(2, net.n_layers + 1):
        lc = net.layer(ell)
        if ell == 2:
            y = nu1_sampler(net, xs, n_mc, stream.child("nu1")).values
        else:
            prev = layers[ell - 1]
            gen = stream.child(ell).generator()
            if prev.cov is not None:
                y = prev.cov.draw(n_mc, gen)
            else:
                assert prev.gamma is not None
                reduced, bound = cluster_spectral(prev.gamma, prev.alpha, sample_atoms, stream.child(ell, "sample-atoms"))
                if bound > 0:
                    notes.append(f"layer {ell} inputs drawn from layer {ell - 1} merged to {len(reduced)} atoms (bound {bound:.3g})")
                y = draw_multivariate_sas(reduced, prev.alpha, n_mc, gen)
        phi_y = phi(y)
        boot = stream.child(ell, "bootstrap").generator()
        if lc.alpha < 2.0:
            gamma, mass_se = _spectral_layer(ell, lc.alpha, lc.sigma_bias, phi_y, boot)
            bound = 0.0
            if atoms_budget is not None:
                gamma, bound = cluster_spectral(gamma, lc.alpha, atoms_budget, stream.child(ell, "cluster"))
                if bound > CLUSTER_WARN:
                    logger.warning(f"layer {ell}: merging to {atoms_budget} atoms moves the CF exponent by up to {bound:.3g}·|t|^alpha")
            logger.info(f"layer {ell}: spectral measure with {len(gamma)} atoms, mass {gamma.total_mass:.6g}")
            layers[ell] = LayerLimit(ell, lc.alpha, gamma=gamma, mass_se=mass_se, cluster_bound=bound)
        else:
            cov, cov_se = _gaussian_layer(lc.sigma_bias, phi_y, boot)
            logger.info(f"layer {ell}: covariance diagonal {np.diag(cov.matrix).round(6).tolist()}")
            layers[ell] = LayerLimit(ell, 2.0, cov=cov, cov_se=cov_se)
    return LimitLaw(k, layers, n_mc, stream.lineage, notes=notes)


def spectral_recursion(
    net: NetworkConfig,
    xs: Any,
    n_mc: int = DEFAULT_MC_SIZE,
    atoms_budget: Optional[int] = None,
    rng: Union[RandomStream, int] = 0,
) -> LimitLaw:
    """Γ_ℓ for every layer ℓ ≥ 2; all of them must be stable (α < 2)."""
    gaussian = [ell for ell in range(2, net.n_layers + 1) if net.layer(ell).alpha == 2.0]
    if gaussian:
        raise TypeError(f"layers {gaussian} have alpha = 2; use gaussian_recursion or multivariate_recursion")
    return multivariate_recursion(net, xs, n_mc, rng, atoms_budget=atoms_budget)


def gaussian_recursion(
    net: NetworkConfig, xs: Any, n_mc: int = DEFAULT_MC_SIZE, rng: Union[RandomStream, int] = 0
) -> LimitLaw:
    """M_ℓ for every layer ℓ ≥ 2; all of them must have α = 2."""
    stable = [ell for ell in range(2, net.n_layers + 1) if net.layer(ell).alpha < 2.0]
    if stable:
        raise TypeError(f"layers {stable} have alpha < 2; use spectral_recursion or multivariate_recursion")
    return multivariate_recursion(net, xs, n_mc, rng)


def predicted_cf(law: LimitLaw, layer: int, t: Any) -> Union[float, np.ndarray]:
    """Characteristic function of the predicted limit of Y^(layer).

    Univariate layers take scalar or array ``t``; multivariate layers take a
    k-vector or a ``(g, k)`` grid.
    """
    lim = law.layer(layer)
    if lim.gamma is not None:
        return cf_multivariate_sas(lim.gamma, lim.alpha, t)
    if lim.cov is not None:
        return lim.cov.cf(t)
    return cf_sas(lim.params, t)


def predicted_product_cf(law: LimitLaw, layer: int, t_nodes: Any) -> Union[float, np.ndarray]:
    """Joint CF over a set of nodes: the product of the per-node marginals.

    ``t_nodes`` has the node set on its last axis.
    """
    t_arr = np.asarray(t_nodes, dtype=np.float64)
    marg = np.asarray(predicted_cf(law, layer, t_arr))
    out = np.prod(marg, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def univariate_from_spectral(law: LimitLaw, layer: int) -> float:
    """σ implied by a k = 1 spectral measure: σ^α = Γ(S⁰)."""
    lim = law.layer(layer)
    if lim.gamma is None or lim.gamma.dim != 1:
        raise DomainError(f"layer {layer} does not hold a one-dimensional spectral measure")
    return lim.gamma.total_mass ** (1.0 / lim.alpha)

