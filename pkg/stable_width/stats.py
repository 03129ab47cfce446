"""Empirical verification: characteristic functions, tail and scale estimates, sweeps."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import ConfigError, DomainError
from .limit_theory import LimitLaw, multivariate_recursion, predicted_cf, sigma_recursion
from .logger import get_logger
from .mlp import NetworkConfig, replicate_layer
from .reports import write_csv
from .streams import RandomStream, as_stream

logger = get_logger("stats")

ECF_CHUNK = 1 << 16
GRID_POINTS = 61
GRID_HALF_WIDTH = 3.0
DEAD_ZONE = 0.05
JOINT_GRID_POINTS = 441
SCALE_BAND = (0.6, 0.95)
SCALE_GRID_MAX = 12
MIN_SCALE_SAMPLES = 1000
SUP_TOL_FLOOR = 0.02
Z_95 = 1.959963984540054

CSV_HEADER = ("width", "t", "ecf", "predicted", "abs_diff")

WidthSpec = Union[int, Sequence[int]]


class EmpiricalCF(NamedTuple):
    real: np.ndarray
    imag: np.ndarray


class CFDistance(NamedTuple):
    sup: float
    l2: float
    symmetry: float


class HillResult(NamedTuple):
    alpha: float
    ci_low: float
    ci_high: float
    k: int


class ScaleResult(NamedTuple):
    sigma: float
    ci_low: float
    ci_high: float
    n_points: int


def _clean(samples: Any, min_size: int = 2) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 0 or x.shape[0] < min_size:
        raise DomainError(f"need at least {min_size} samples, got {x.shape[0] if x.ndim else 0}")
    if np.isnan(x).any():
        raise DomainError("samples contain NaN")
    if not np.isfinite(x).all():
        raise DomainError("samples contain infinite values")
    return x


def _projections(x: np.ndarray, t: np.ndarray) -> Tuple[np.ndarray, bool]:
    """``(t, multivariate)`` with t as ``(g,)`` or ``(g, k)`` matching the samples."""
    if x.ndim == 1:
        if t.ndim != 1:
            raise DomainError(f"univariate samples need a 1-d grid, got shape {t.shape}")
        return t, False
    t2 = np.atleast_2d(t)
    if t2.shape[1] != x.shape[1]:
        raise DomainError(f"grid vectors have dimension {t2.shape[1]}, samples {x.shape[1]}")
    return t2, True


def ecf(samples: Any, t_grid: Any) -> EmpiricalCF:
    """ψ̂(t) = (1/m) Σ cos(⟨t, X_i⟩), with the sine average as a symmetry diagnostic.

    Samples are ``(m,)`` with a 1-d grid or ``(m, k)`` with a ``(g, k)`` grid.
    """
    x = _clean(samples)
    t, multi = _projections(x, np.asarray(t_grid, dtype=np.float64))
    m = x.shape[0]
    re = np.zeros(t.shape[0])
    im = np.zeros(t.shape[0])
    for start in range(0, m, ECF_CHUNK):
        block = x[start : start + ECF_CHUNK]
        arg = block @ t.T if multi else np.outer(block, t)
        re += np.cos(arg).sum(axis=0)
        im += np.sin(arg).sum(axis=0)
    return EmpiricalCF(re / m, im / m)


def cf_distance(samples: Any, predicted: Union[Callable[[np.ndarray], Any], Any], t_grid: Any) -> CFDistance:
    """Sup and root-mean-square of |ψ̂ - ψ_pred| over the grid, plus max |Im ψ̂|."""
    t = np.asarray(t_grid, dtype=np.float64)
    if t.size == 0:
        raise DomainError("empty t-grid")
    emp = ecf(samples, t)
    pred = np.asarray(predicted(t) if callable(predicted) else predicted, dtype=np.float64).reshape(emp.real.shape)
    diff = np.abs(emp.real - pred)
    return CFDistance(float(diff.max()), float(np.sqrt(np.mean(diff**2))), float(np.abs(emp.imag).max()))


def default_grid(sigma: float, points: int = GRID_POINTS, half_width: float = GRID_HALF_WIDTH, dead_zone: float = DEAD_ZONE) -> np.ndarray:
    """Equispaced grid on [-3/σ, 3/σ] without the dead zone |t| < 0.05/σ."""
    if not sigma > 0:
        raise DomainError(f"grid scale must be positive, got {sigma}")
    t = np.linspace(-half_width / sigma, half_width / sigma, points)
    return t[np.abs(t) >= dead_zone / sigma]


def default_joint_grid(
    dim: int, sigma: float, points: int = JOINT_GRID_POINTS, half_width: float = GRID_HALF_WIDTH, dead_zone: float = DEAD_ZONE
) -> np.ndarray:
    """Product grid in R^dim with about ``points`` vectors (21 × 21 for dim = 2)."""
    per_axis = max(3, int(round(points ** (1.0 / dim))))
    if per_axis % 2 == 0:
        per_axis += 1
    axis = np.linspace(-half_width / sigma, half_width / sigma, per_axis)
    grid = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    return grid[np.max(np.abs(grid), axis=1) >= dead_zone / sigma]


def _top_log_magnitudes(samples: Any, kmax: int) -> np.ndarray:
    """log |X| of the ``kmax + 1`` largest magnitudes, descending."""
    x = np.abs(_clean(samples)).ravel()
    m = x.size
    if not 2 <= kmax < m:
        raise DomainError(f"need 2 <= k < m, got k={kmax}, m={m}")
    top = -np.partition(-x, kmax)[: kmax + 1]
    top.sort()
    with np.errstate(divide="ignore"):
        return np.log(top[::-1])


def _hill_from_logs(logs: np.ndarray, k: int) -> float:
    denom = float(np.sum(logs[:k] - logs[k]))
    if not denom > 0 or not math.isfinite(denom):
        raise DomainError("degenerate magnitudes: Hill denominator is not a positive finite number")
    return k / denom


def hill_default_k(m: int) -> int:
    return int(min(max(round(m ** (2.0 / 3.0)), 2), m - 1))


def hill_estimator(samples: Any, k: Optional[int] = None) -> HillResult:
    """α̂ = k / Σ_{i≤k} log(|X|_(i) / |X|_(k+1)) with the CI α̂(1 ± 1.96/√k)."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    k = hill_default_k(x.size) if k is None else int(k)
    alpha = _hill_from_logs(_top_log_magnitudes(x, k), k)
    half = Z_95 / math.sqrt(k)
    return HillResult(alpha, alpha * (1.0 - half), alpha * (1.0 + half), k)


def hill_sensitivity(samples: Any, n_points: int = 10) -> List[Tuple[int, float]]:
    """α̂ over k log-spaced in [m^{1/2}, m^{0.8}]."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    m = x.size
    lo, hi = max(2, int(math.sqrt(m))), min(m - 1, int(m**0.8))
    if hi < lo:
        raise DomainError(f"too few samples ({m}) for a Hill sensitivity scan")
    ks = np.unique(np.geomspace(lo, hi, n_points).round().astype(int))
    logs = _top_log_magnitudes(x, int(ks[-1]))
    return [(int(k), _hill_from_logs(logs, int(k))) for k in ks]


def _scale_slope(psi: np.ndarray, x_reg: np.ndarray) -> float:
    y = -np.log(psi)
    return float(np.dot(x_reg, y) / np.dot(x_reg, x_reg))


def scale_estimator(
    samples: Any,
    alpha: float,
    t_grid: Optional[Any] = None,
    bootstrap: int = 200,
    rng: Union[RandomStream, int] = 0,
) -> ScaleResult:
    """σ̂ from a least-squares fit of -log ψ̂(t) = σ^α |t|^α through the origin.

    Without ``t_grid`` the fit uses points where ψ̂ lies in [0.6, 0.95] on a
    log grid scaled by the median magnitude. The CI is a percentile bootstrap.
    """
    if not 0.0 < alpha <= 2.0:
        raise DomainError(f"alpha must lie in (0, 2], got {alpha}")
    x = _clean(samples, MIN_SCALE_SAMPLES).ravel()
    if not np.any(x):
        return ScaleResult(0.0, 0.0, 0.0, 0)
    if t_grid is None:
        med = float(np.median(np.abs(x)))
        base = med if med > 0 else float(np.mean(np.abs(x)))
        cand = np.geomspace(0.01, 10.0, 120) / base
        psi = ecf(x, cand).real
        lo, hi = SCALE_BAND
        band = cand[(psi >= lo) & (psi <= hi)]
        if band.size < 2:
            raise DomainError("grid too wide: fewer than two points with the ECF in [0.6, 0.95]")
        t = band[np.unique(np.linspace(0, band.size - 1, min(SCALE_GRID_MAX, band.size)).round().astype(int))]
    else:
        t = np.abs(np.asarray(t_grid, dtype=np.float64))
        if t.size == 0:
            raise DomainError("empty t-grid")
    cos = np.cos(np.outer(x, t))
    psi = cos.mean(axis=0)
    if np.any(psi <= 0):
        raise DomainError("grid too wide: the ECF is not positive at every grid point")
    x_reg = t**alpha
    sigma = _scale_slope(psi, x_reg) ** (1.0 / alpha)
    if bootstrap < 2:
        return ScaleResult(sigma, sigma, sigma, int(t.size))
    gen = as_stream(rng).generator()
    m = x.size
    boots = []
    for _ in range(bootstrap):
        counts = gen.multinomial(m, np.full(m, 1.0 / m))
        psi_b = counts @ cos / m
        if np.all(psi_b > 0):
            slope = _scale_slope(psi_b, x_reg)
            if slope > 0:
                boots.append(slope ** (1.0 / alpha))
    if not boots:
        return ScaleResult(sigma, sigma, sigma, int(t.size))
    lo_ci, hi_ci = np.percentile(boots, [2.5, 97.5])
    return ScaleResult(sigma, float(lo_ci), float(hi_ci), int(t.size))


def independence_score(x: Any, y: Any, t_grid: Any) -> float:
    """sup over t₁, t₂ in the grid of |ψ̂_(X,Y)(t₁, t₂) - ψ̂_X(t₁) ψ̂_Y(t₂)|."""
    xa = np.asarray(x, dtype=np.float64).ravel()
    ya = np.asarray(y, dtype=np.float64).ravel()
    if xa.size == 0 or ya.size == 0:
        raise DomainError("independence score needs at least one pair")
    if xa.size != ya.size:
        raise DomainError(f"paired samples differ in length: {xa.size} vs {ya.size}")
    for arr in (xa, ya):
        if not np.isfinite(arr).all():
            raise DomainError("samples contain NaN or infinite values")
    t = np.asarray(t_grid, dtype=np.float64).ravel()
    if t.size == 0:
        raise DomainError("empty t-grid")
    m = xa.size
    joint = np.zeros((t.size, t.size), dtype=np.complex128)
    mx = np.zeros(t.size, dtype=np.complex128)
    my = np.zeros(t.size, dtype=np.complex128)
    for start in range(0, m, ECF_CHUNK):
        ex = np.exp(1j * np.outer(xa[start : start + ECF_CHUNK], t))
        ey = np.exp(1j * np.outer(ya[start : start + ECF_CHUNK], t))
        joint += ex.T @ ey
        mx += ex.sum(axis=0)
        my += ey.sum(axis=0)
    defect = np.abs(joint / m - np.outer(mx / m, my / m))
    return float(defect.max())


def default_tolerance(m: int) -> float:
    return max(SUP_TOL_FLOOR, 5.0 / math.sqrt(m))


@dataclass
class WidthResult:
    """Diagnostics for one sweep point."""

    widths: Tuple[int, ...]
    sup: float
    l2: float
    symmetry: float
    t: np.ndarray
    ecf: np.ndarray
    predicted: np.ndarray
    alpha_hat: Optional[HillResult] = None
    hill_scan: List[Tuple[int, float]] = field(default_factory=list)
    sigma_hat: Optional[ScaleResult] = None
    independence: Optional[float] = None
    variance: Optional[float] = None

    @property
    def label(self) -> str:
        return "x".join(str(n) for n in self.widths) if len(set(self.widths)) > 1 else str(self.widths[0])

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"widths": list(self.widths), "sup_cf": self.sup, "l2_cf": self.l2, "symmetry": self.symmetry}
        if self.alpha_hat is not None:
            out["alpha_hat"] = self.alpha_hat._asdict()
            out["hill_sensitivity"] = [list(p) for p in self.hill_scan]
        if self.sigma_hat is not None:
            out["sigma_hat"] = self.sigma_hat._asdict()
        if self.independence is not None:
            out["independence"] = self.independence
        if self.variance is not None:
            out["variance"] = self.variance
        return out


@dataclass
class ConvergenceReport:
    """Per-width distances and estimates against one predicted limit."""

    layer: int
    k: int
    m: int
    alpha: float
    predicted: Dict[str, Any]
    tolerances: Dict[str, float]
    lineage: Tuple[int, Tuple[int, ...]]
    results: List[WidthResult] = field(default_factory=list)
    flags: Dict[str, bool] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.flags.values())

    def to_dict(self) -> Dict[str, Any]:
        return {
            "layer": self.layer,
            "k": self.k,
            "replicates": self.m,
            "alpha": self.alpha,
            "predicted": self.predicted,
            "tolerances": self.tolerances,
            "seed": self.lineage[0],
            "stream_key": list(self.lineage[1]),
            "results": [r.to_dict() for r in self.results],
            "flags": self.flags,
            "passed": self.passed,
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def csv_rows(self) -> List[List[Any]]:
        rows: List[List[Any]] = []
        for r in self.results:
            for i in range(r.t.shape[0]):
                t = r.t[i]
                t_str = repr(float(t)) if np.ndim(t) == 0 else ";".join(repr(float(v)) for v in t)
                rows.append([r.label, t_str, repr(float(r.ecf[i])), repr(float(r.predicted[i])), repr(float(abs(r.ecf[i] - r.predicted[i])))])
        return rows

    def write_csv(self, path: Union[str, Path], config: Optional[Dict[str, Any]] = None) -> Path:
        """Columns ``width,t,ecf,predicted,abs_diff``."""
        return write_csv(path, CSV_HEADER, self.csv_rows(), config)


def _normalize_widths(net: NetworkConfig, widths: Sequence[WidthSpec]) -> List[Tuple[int, ...]]:
    if len(widths) == 0:
        raise ConfigError("sweep needs at least one width")
    out = []
    for w in widths:
        tup = (int(w),) * net.depth if isinstance(w, (int, np.integer)) else tuple(int(v) for v in w)
        if len(tup) != net.depth:
            raise ConfigError(f"width tuple {tup} does not match depth {net.depth}")
        out.append(tup)
    for a, b in zip(out, out[1:]):
        if any(y < x for x, y in zip(a, b)) or a == b:
            raise ConfigError(f"widths must increase along the sweep: {a} then {b}")
    return out


def _limit_scale(law: LimitLaw, layer: int) -> float:
    lim = law.layer(layer)
    if lim.sigma is not None:
        return lim.sigma
    if lim.gamma is not None:
        return lim.gamma.total_mass ** (1.0 / lim.alpha)
    assert lim.cov is not None
    return math.sqrt(max(float(np.max(np.diag(lim.cov.matrix))) / 2.0, 1e-300))


def convergence_sweep(
    net: NetworkConfig,
    xs: Any,
    layer: int,
    widths: Sequence[WidthSpec],
    m: int,
    rng: Union[RandomStream, int] = 0,
    law: Optional[LimitLaw] = None,
    n_mc: int = 1_000_000,
    tolerances: Optional[Dict[str, float]] = None,
    threads: int = 1,
    bootstrap: int = 200,
) -> ConvergenceReport:
    """Simulate Y^(layer) at each width and compare it with the predicted limit.

    ``widths`` entries are a single width for all hidden layers or an explicit
    per-layer tuple. Flags: ``sup_cf`` at the largest width against the
    tolerance (default max(0.02, 5/√m)), ``trend`` (last distance below the
    first, only with several widths), and ``scale`` / ``variance`` /
    ``independence`` when a tolerance for them is given. ``variance`` compares
    the sample variance at α = 2 with 2σ².
    """
    if layer < 2:
        raise DomainError("the sweep compares layers >= 2 with their limit")
    if m < 2:
        raise DomainError(f"replicates must be >= 2, got {m}")
    points = _normalize_widths(net, widths)
    stream = as_stream(rng)
    xs_arr = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    k = xs_arr.shape[0]
    if law is None:
        if k == 1:
            law = sigma_recursion(net, xs_arr[0], n_mc, stream.child("limit"))
        else:
            law = multivariate_recursion(net, xs_arr, n_mc, stream.child("limit"))
    lim = law.layer(layer)
    scale = _limit_scale(law, layer)
    tol = {"sup_cf": default_tolerance(m)}
    tol.update(tolerances or {})
    for name, value in tol.items():
        if value is not None and value < 0:
            raise ConfigError(f"tolerance '{name}' must be >= 0, got {value}")
    multi = k > 1
    grid = default_joint_grid(k, scale) if multi else default_grid(scale)
    pred = np.asarray(predicted_cf(law, layer, grid))
    report = ConvergenceReport(
        layer=layer,
        k=k,
        m=m,
        alpha=lim.alpha,
        predicted=lim.to_dict(),
        tolerances={key: float(v) for key, v in tol.items() if v is not None},
        lineage=stream.lineage,
        notes=["trend check (last distance below first) is a heuristic gate; no convergence rate is claimed"],
    )
    for idx, w in enumerate(points):
        logger.info(f"sweep point {idx + 1}/{len(points)}: widths {w}, {m} replicates")
        batch = replicate_layer(net, xs_arr, w, layer, m, nodes=(1, 2), rng=stream.child("width", idx), threads=threads)
        node1 = batch.joint(1) if multi else batch.node(1)
        emp = ecf(node1, grid)
        diff = np.abs(emp.real - pred)
        res = WidthResult(
            widths=w,
            sup=float(diff.max()),
            l2=float(np.sqrt(np.mean(diff**2))),
            symmetry=float(np.abs(emp.imag).max()),
            t=grid,
            ecf=emp.real,
            predicted=pred,
        )
        first = batch.node(1, 0)
        if m >= 3:
            res.alpha_hat = hill_estimator(first)
            if m >= 16:
                res.hill_scan = hill_sensitivity(first)
        if not multi and m >= MIN_SCALE_SAMPLES:
            res.sigma_hat = scale_estimator(first, lim.alpha, bootstrap=bootstrap, rng=stream.child("scale", idx))
        if not multi and lim.alpha == 2.0:
            res.variance = float(np.var(first))
        res.independence = independence_score(first, batch.node(2, 0), default_grid(scale, 21))
        logger.info(f"  sup-CF {res.sup:.4f}, independence {res.independence:.4f}")
        report.results.append(res)
    _set_flags(report, lim.sigma)
    return report


def _set_flags(report: ConvergenceReport, sigma_pred: Optional[float]) -> None:
    tol = report.tolerances
    last = report.results[-1]
    report.flags["sup_cf"] = last.sup < tol["sup_cf"]
    if len(report.results) > 1:
        sups = [r.sup for r in report.results]
        report.flags["trend"] = sups[-1] < sups[0]
        if any(b > a for a, b in zip(sups, sups[1:])):
            logger.warning(f"sup-CF distance is not monotone across widths: {[round(s, 4) for s in sups]}")
    if "scale" in tol and sigma_pred is not None and last.sigma_hat is not None:
        report.flags["scale"] = abs(last.sigma_hat.sigma / sigma_pred - 1.0) < tol["scale"]
    if "variance" in tol and sigma_pred is not None and last.variance is not None:
        report.flags["variance"] = abs(last.variance / (2.0 * sigma_pred**2) - 1.0) < tol["variance"]
    if "independence" in tol and last.independence is not None:
        report.flags["independence"] = last.independence < tol["independence"]
