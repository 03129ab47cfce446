"""Regularly varying symmetric weight laws.

A :class:`TailSpec` describes the law of one layer's weights W:

* ``heavy``  - P(|W| > t) = min(1, t^{-α} L(t)), magnitudes supported on [t₀, ∞)
  where t₀ is the first point at which t^{-α} L(t) drops to 1;
* ``finite`` - a named square-integrable law (α is 2);
* ``stable`` - exactly SαS(α, σ_W). Its tail is regularly varying with
  L(t) → σ_W^α / c_α, and that constant plays the role of L for the scaling.
  At α = 2 this is N(0, 2σ_W²) and is treated as the finite Gaussian law.

The scaling of layer ℓ is a_n = inf{t > 0 : t^{-α} L₀(t) ≤ 1/n} with L₀ = L when
α < 2 and L₀ = L̃ (see :func:`l_tilde`) when α = 2.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Callable, Dict, List, Optional, Sequence, Union

import numpy as np
from scipy import integrate
from scipy import stats as sps

from .exceptions import ConfigError, DomainError, NumericalError
from .logger import get_logger
from .stable_dist import StableParams, c_alpha, draw_sas
from .streams import RandomStream, SampleBatch, as_stream

logger = get_logger("heavy_tail")

ArrayLike = Union[float, Sequence[float], np.ndarray]

BISECT_RTOL = 1e-10
BISECT_MAX_ITER = 200
BRACKET_MAX_STEPS = 1100
QUAD_EPSABS = 1e-9
QUAD_LIMIT = 400
MONOTONE_GRID = 1000
MONOTONE_T_MAX = 1e6
INVERSION_GRID = 4096
INVERSION_REFINE = 40
# smallest tail probability the inversion table must reach (below 2**-53)
INVERSION_FLOOR = 1e-17

SV_KINDS = ("constant", "log-power", "iterated-log", "user-table")
MODES = ("heavy", "finite", "stable")
FINITE_LAWS = {"uniform": 1, "gaussian": 1, "student_t": 1}


def _log_plus(t: np.ndarray) -> np.ndarray:
    return np.log(np.maximum(t, 1.0))


class SlowlyVarying:
    """A positive function with L(λt)/L(t) → 1 for every λ > 0.

    Kinds:
        constant      L(t) = c
        log-power     L(t) = (1 + β log₊ t)^γ
        iterated-log  L(t) = (1 + log₊(1 + log₊ t))^γ
        user-table    log-log interpolation through (t_i, L_i) pairs given as
                      a flat list [t_1, L_1, t_2, L_2, ...], constant outside
    """

    def __init__(self, kind: str = "constant", params: Sequence[float] = (1.0,)):
        if kind not in SV_KINDS:
            raise ConfigError(f"unknown slowly varying kind '{kind}', expected one of {SV_KINDS}")
        self.kind = kind
        self.params = tuple(float(p) for p in params)
        self._validate()

    def _validate(self) -> None:
        p = self.params
        if self.kind == "constant":
            if len(p) != 1 or not p[0] > 0:
                raise ConfigError(f"constant slowly varying function needs one positive value, got {p}")
        elif self.kind == "log-power":
            if len(p) != 2 or p[0] < 0:
                raise ConfigError(f"log-power needs (beta >= 0, gamma), got {p}")
        elif self.kind == "iterated-log":
            if len(p) != 1:
                raise ConfigError(f"iterated-log needs (gamma,), got {p}")
        else:
            if len(p) < 4 or len(p) % 2:
                raise ConfigError("user-table needs at least two (t, L) pairs")
            ts, ls = np.asarray(p[0::2]), np.asarray(p[1::2])
            if np.any(ts <= 0) or np.any(np.diff(ts) <= 0):
                raise ConfigError("user-table abscissae must be positive and increasing")
            if np.any(ls <= 0):
                raise ConfigError("user-table values must be positive")

    @classmethod
    def constant(cls, c: float = 1.0) -> "SlowlyVarying":
        return cls("constant", (c,))

    @classmethod
    def log_power(cls, beta: float = 1.0, gamma: float = 1.0) -> "SlowlyVarying":
        return cls("log-power", (beta, gamma))

    @classmethod
    def iterated_log(cls, gamma: float = 1.0) -> "SlowlyVarying":
        return cls("iterated-log", (gamma,))

    @classmethod
    def table(cls, points: Sequence[Sequence[float]]) -> "SlowlyVarying":
        return cls("user-table", [v for pair in points for v in pair])

    def __call__(self, t: ArrayLike) -> Union[float, np.ndarray]:
        t_arr = np.asarray(t, dtype=np.float64)
        p = self.params
        if self.kind == "constant":
            out = np.full_like(t_arr, p[0])
        elif self.kind == "log-power":
            out = (1.0 + p[0] * _log_plus(t_arr)) ** p[1]
        elif self.kind == "iterated-log":
            out = (1.0 + _log_plus(1.0 + _log_plus(t_arr))) ** p[0]
        else:
            log_t = np.log(np.asarray(p[0::2]))
            log_l = np.log(np.asarray(p[1::2]))
            out = np.exp(np.interp(np.log(np.maximum(t_arr, 1e-300)), log_t, log_l))
        return float(out) if out.ndim == 0 else out

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "params": list(self.params)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SlowlyVarying":
        return cls(data.get("kind", "constant"), data.get("params", (1.0,)))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, SlowlyVarying) and (self.kind, self.params) == (other.kind, other.params)

    def __repr__(self) -> str:
        return f"SlowlyVarying({self.kind!r}, {self.params})"


def bisect_threshold(g: Callable[[float], float], target: float, what: str, start: float = 1.0) -> float:
    """inf{t > 0 : g(t) <= target} for g nonincreasing past the answer.

    Brackets by doubling/halving from ``start``, then bisects in log t. Returns a
    point where the inequality holds.
    """
    lo = hi = float(start)
    if g(hi) <= target:
        steps = 0
        while g(lo) <= target:
            hi = lo
            lo *= 0.5
            steps += 1
            if steps > BRACKET_MAX_STEPS or lo == 0.0:
                raise NumericalError(f"{what}: could not bracket from below (g({hi:.3e}) <= {target:.3e}); the infimum degenerates to 0")
    else:
        steps = 0
        while g(hi) > target:
            lo = hi
            hi *= 2.0
            steps += 1
            if steps > BRACKET_MAX_STEPS or not math.isfinite(hi):
                raise NumericalError(f"{what}: could not bracket from above (g({lo:.3e}) = {g(lo):.3e} > {target:.3e})")
    for it in range(BISECT_MAX_ITER):
        if hi - lo <= BISECT_RTOL * hi:
            logger.debug(f"{what}: converged after {it} bisection steps at {hi:.12g}")
            return hi
        mid = math.sqrt(lo * hi) if lo > 0 else 0.5 * hi
        if g(mid) <= target:
            hi = mid
        else:
            lo = mid
    raise NumericalError(f"{what}: bisection did not converge in {BISECT_MAX_ITER} steps, bracket [{lo:.6g}, {hi:.6g}]")


@dataclass(frozen=True)
class FiniteLaw:
    """A named symmetric square-integrable law."""

    name: str
    params: tuple

    def __post_init__(self) -> None:
        if self.name not in FINITE_LAWS:
            raise ConfigError(f"unknown finite-variance law '{self.name}', expected one of {tuple(FINITE_LAWS)}")
        p = self.params
        if self.name == "uniform" and (len(p) != 1 or not p[0] > 0):
            raise ConfigError(f"uniform law needs a half-width a > 0, got {p}")
        if self.name == "gaussian" and (len(p) != 1 or not p[0] > 0):
            raise ConfigError(f"gaussian law needs a standard deviation s > 0, got {p}")
        if self.name == "student_t" and (len(p) not in (1, 2) or not p[0] > 2 or (len(p) == 2 and not p[1] > 0)):
            raise ConfigError(f"student_t law needs df > 2 and optional scale > 0, got {p}")

    @property
    def scale(self) -> float:
        if self.name == "student_t":
            return float(self.params[1]) if len(self.params) == 2 else 1.0
        return float(self.params[0])

    @property
    def variance(self) -> float:
        if self.name == "uniform":
            return self.params[0] ** 2 / 3.0
        if self.name == "gaussian":
            return self.params[0] ** 2
        df = self.params[0]
        return self.scale**2 * df / (df - 2.0)

    def survival(self, t: np.ndarray) -> np.ndarray:
        """P(|W| > t)."""
        if self.name == "uniform":
            return np.clip(1.0 - t / self.params[0], 0.0, 1.0)
        if self.name == "gaussian":
            return 2.0 * sps.norm.sf(t / self.params[0])
        return 2.0 * sps.t.sf(t / self.scale, self.params[0])

    def effective_support(self) -> float:
        """Point beyond which y P(|W| > y) contributes nothing to L̃ in double precision."""
        if self.name == "uniform":
            return float(self.params[0])
        if self.name == "gaussian":
            return 40.0 * self.params[0]
        return math.inf

    def draw(self, size: int, gen: np.random.Generator) -> np.ndarray:
        if self.name == "uniform":
            a = self.params[0]
            return gen.uniform(-a, a, size)
        if self.name == "gaussian":
            return self.params[0] * gen.standard_normal(size)
        return self.scale * gen.standard_t(self.params[0], size)


class TailSpec:
    """Law of the i.i.d. symmetric weights of one layer."""

    def __init__(
        self,
        alpha: float,
        sv: Optional[SlowlyVarying] = None,
        mode: str = "heavy",
        law: Optional[FiniteLaw] = None,
        scale: float = 1.0,
    ):
        if mode not in MODES:
            raise ConfigError(f"unknown tail mode '{mode}', expected one of {MODES}")
        alpha = float(alpha)
        if not 0.0 < alpha <= 2.0:
            raise ConfigError(f"tail index alpha must lie in (0, 2], got {alpha}")
        self.alpha = alpha
        self.mode = mode
        self.law = law
        self.scale = float(scale)
        if mode == "finite":
            if alpha != 2.0:
                raise ConfigError(f"finite-variance weights force alpha = 2, got {alpha}")
            if law is None:
                raise ConfigError("finite-variance mode needs a named law")
            self.sv = SlowlyVarying.constant(law.variance / 2.0)
        elif mode == "stable":
            if not self.scale > 0:
                raise ConfigError(f"stable weights need a scale > 0, got {scale}")
            if alpha == 2.0:
                # SαS(2, σ) is N(0, 2σ²)
                self.law = FiniteLaw("gaussian", (math.sqrt(2.0) * self.scale,))
                self.sv = SlowlyVarying.constant(self.law.variance / 2.0)
            else:
                self.sv = SlowlyVarying.constant(self.scale**alpha / c_alpha(alpha))
        else:
            self.sv = sv if sv is not None else SlowlyVarying.constant(1.0)
        self._validate_monotone()

    @classmethod
    def pareto(cls, alpha: float, c: float = 1.0) -> "TailSpec":
        """P(|W| > t) = c t^{-α} beyond t₀ = c^{1/α}."""
        return cls(alpha, SlowlyVarying.constant(c))

    @classmethod
    def finite(cls, name: str, *params: float) -> "TailSpec":
        return cls(2.0, mode="finite", law=FiniteLaw(name, tuple(float(p) for p in params)))

    @classmethod
    def stable(cls, alpha: float, scale: float = 1.0) -> "TailSpec":
        return cls(alpha, mode="stable", scale=scale)

    @property
    def is_finite_variance(self) -> bool:
        return self.mode == "finite" or (self.mode == "stable" and self.alpha == 2.0)

    @property
    def is_gaussian(self) -> bool:
        """Exactly Gaussian weights (the polynomial-envelope regime)."""
        return (self.mode == "finite" and self.law is not None and self.law.name == "gaussian") or (
            self.mode == "stable" and self.alpha == 2.0
        )

    @property
    def is_exact_stable(self) -> bool:
        return self.mode == "stable"

    @cached_property
    def t0(self) -> float:
        """Lower end of the magnitude support: t^{-α} L(t) first reaches 1."""
        if self.mode != "heavy":
            return 0.0
        if self.sv.is_constant:
            return self.sv.params[0] ** (1.0 / self.alpha)
        return bisect_threshold(lambda t: t ** (-self.alpha) * self.sv(t), 1.0, "t0")

    def _raw_tail(self, t: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore", over="ignore"):
            return np.minimum(1.0, t ** (-self.alpha) * self.sv(t))

    def _validate_monotone(self) -> None:
        if self.mode != "heavy":
            return
        t0 = self.t0
        grid = np.geomspace(t0, max(MONOTONE_T_MAX, 10.0 * t0), MONOTONE_GRID)
        sv_vals = np.asarray(self.sv(grid))
        if np.any(sv_vals <= 0.0):
            raise ConfigError("slowly varying function must be positive beyond t0")
        tail = self._raw_tail(grid)
        rises = np.diff(tail) > 1e-12 * tail[:-1]
        if np.any(rises):
            at = grid[int(np.argmax(rises)) + 1]
            raise ConfigError(f"tail t^-alpha L(t) is not nonincreasing near t={at:.4g}; inversion sampling needs a monotone tail")

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"alpha": self.alpha, "mode": self.mode}
        if self.mode == "heavy":
            out["sv"] = self.sv.to_dict()
        elif self.mode == "finite" and self.law is not None:
            out["law"] = {"name": self.law.name, "params": list(self.law.params)}
        else:
            out["scale"] = self.scale
        return out

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TailSpec":
        mode = data.get("mode", "heavy")
        alpha = data.get("alpha", 2.0 if mode == "finite" else None)
        if alpha is None:
            raise ConfigError("tail spec needs 'alpha'")
        if mode == "finite":
            law = data.get("law") or {}
            return cls(alpha, mode="finite", law=FiniteLaw(law.get("name", ""), tuple(law.get("params", ()))))
        if mode == "stable":
            return cls(alpha, mode="stable", scale=data.get("scale", 1.0))
        return cls(alpha, SlowlyVarying.from_dict(data.get("sv", {})), mode=mode)

    def __repr__(self) -> str:
        if self.mode == "heavy":
            return f"TailSpec(alpha={self.alpha}, sv={self.sv!r})"
        if self.mode == "finite" and self.law is not None:
            return f"TailSpec(finite {self.law.name}{self.law.params})"
        return f"TailSpec(stable alpha={self.alpha}, scale={self.scale})"

    @cached_property
    def _inversion_table(self) -> tuple:
        t0 = self.t0
        t_max = t0 * 10.0
        steps = 0
        while float(self._raw_tail(np.asarray(t_max))) > INVERSION_FLOOR:
            t_max *= 10.0
            steps += 1
            if steps > 300 or not math.isfinite(t_max):
                raise NumericalError("tail never drops below 1e-17; cannot build the inversion table")
        log_t = np.linspace(math.log(t0), math.log(t_max), INVERSION_GRID)
        log_tail = np.log(self._raw_tail(np.exp(log_t)))
        return log_t, log_tail


def tail_prob(spec: TailSpec, t: ArrayLike) -> Union[float, np.ndarray]:
    """P(|W| > t).

    Heavy mode: 1 below t₀, min(1, t^{-α} L(t)) above. Finite mode and stable
    weights at α = 2: exact survival of the (Gaussian) law. Stable mode at α < 2:
    the regularly varying asymptote min(1, σ_W^α t^{-α} / c_α), no stable CDF is
    evaluated.
    """
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 0):
        raise DomainError("tail_prob needs t >= 0")
    if spec.law is not None:
        out = spec.law.survival(t_arr)
    else:
        out = np.where(t_arr < spec.t0, 1.0, spec._raw_tail(np.maximum(t_arr, 1e-300)))
    return float(out) if np.ndim(out) == 0 else np.asarray(out)


def l_tilde(spec: TailSpec, x: float) -> float:
    """L̃(x) = ∫₀^x y P(|W| > y) dy by adaptive quadrature.

    The integral is split at t₀ (heavy) or at the law's scale (finite); the right
    piece is integrated in log y so that slowly varying growth stays smooth.
    """
    x = float(x)
    if x < 0:
        raise DomainError("l_tilde needs x >= 0")
    if x == 0.0:
        return 0.0
    if spec.law is not None:
        law = spec.law
        upper = min(x, law.effective_support())
        split = min(upper, law.scale)
        head = _quad(lambda y: y * float(law.survival(np.asarray(y))), 0.0, split, points=None)
        tail = 0.0
        if upper > split:
            tail = _quad(lambda u: math.exp(2.0 * u) * float(law.survival(np.asarray(math.exp(u)))), math.log(split), math.log(upper))
        return head + tail
    t0 = spec.t0
    split = min(x, t0)
    head = 0.5 * split * split
    if x <= t0:
        return head
    return head + _quad(lambda u: math.exp(2.0 * u) * float(tail_prob(spec, math.exp(u))), math.log(t0), math.log(x))


def _quad(f: Callable[[float], float], a: float, b: float, points: Optional[Sequence[float]] = None) -> float:
    if b <= a:
        return 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, _ = integrate.quad(f, a, b, epsabs=QUAD_EPSABS, epsrel=1e-10, limit=QUAD_LIMIT, points=points)
        except integrate.IntegrationWarning as e:
            raise NumericalError(f"quadrature on [{a:.4g}, {b:.4g}] did not converge: {e}") from e
    return float(value)


def l_zero(spec: TailSpec, x: float) -> float:
    """L₀(x): the slowly varying function entering the scaling."""
    if spec.alpha < 2.0:
        return float(spec.sv(x))
    return l_tilde(spec, x)


def a_n(spec: TailSpec, n: int) -> float:
    """a_n = inf{t > 0 : t^{-α} L₀(t) ≤ 1/n}.

    Closed form (c n)^{1/α} when α < 2 and L₀ ≡ c; bracketing plus bisection
    otherwise.
    """
    if n < 1:
        raise DomainError(f"a_n needs n >= 1, got {n}")
    alpha = spec.alpha
    if alpha < 2.0 and spec.sv.is_constant:
        return (spec.sv.params[0] * n) ** (1.0 / alpha)
    target = 1.0 / n
    return bisect_threshold(lambda t: t ** (-alpha) * l_zero(spec, t), target, f"a_n(n={n})")


def b_n(spec: TailSpec, n: int) -> float:
    """n a_n^{-α} L₀(a_n); tends to 1."""
    a = a_n(spec, n)
    return n * a ** (-spec.alpha) * l_zero(spec, a)


def draw_weights(spec: TailSpec, size: Union[int, tuple], gen: np.random.Generator) -> np.ndarray:
    """Raw i.i.d. draws of W; magnitudes first, then signs."""
    if spec.mode == "stable":
        return draw_sas(StableParams(spec.alpha, spec.scale), size, gen)
    if spec.mode == "finite" and spec.law is not None:
        return spec.law.draw(size, gen)
    v = 1.0 - gen.random(size)  # in (0, 1]
    magnitude = _invert_tail(spec, v)
    sign = np.where(gen.random(size) < 0.5, -1.0, 1.0)
    return sign * magnitude


def _invert_tail(spec: TailSpec, v: np.ndarray) -> np.ndarray:
    """t with P(|W| > t) = v, for v in (0, 1]."""
    if spec.sv.is_constant:
        return (spec.sv.params[0] / v) ** (1.0 / spec.alpha)
    log_t, log_tail = spec._inversion_table
    log_v = np.log(v)
    # log_tail is nonincreasing; search on its negation
    idx = np.searchsorted(-log_tail, -log_v, side="left")
    if np.any(idx >= len(log_t)):
        raise NumericalError("uniform variate below the inversion table floor")
    lo = log_t[np.maximum(idx - 1, 0)]
    hi = log_t[idx]
    for _ in range(INVERSION_REFINE):
        mid = 0.5 * (lo + hi)
        above = np.log(spec._raw_tail(np.exp(mid))) > log_v
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    return np.exp(hi)


def sample_heavy(spec: TailSpec, n: int, rng: Union[RandomStream, int]) -> SampleBatch:
    """``n`` i.i.d. symmetric weight draws with P(|W| > t) = tail_prob(t)."""
    if n < 1:
        raise DomainError(f"sample size must be >= 1, got {n}")
    stream = as_stream(rng)
    values = draw_weights(spec, int(n), stream.generator())
    return SampleBatch(values=values, lineage=stream.lineage)


@dataclass(frozen=True)
class CFCheckRow:
    t: float
    lhs: float
    rhs: float

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs > 0 else math.nan


def small_t_rhs(spec: TailSpec, t: float) -> float:
    """c_α |t|^α L(1/|t|) for α < 2, |t|² L̃(1/|t|) at α = 2."""
    t = abs(float(t))
    if spec.alpha < 2.0:
        return c_alpha(spec.alpha) * t**spec.alpha * float(spec.sv(1.0 / t))
    return t * t * l_tilde(spec, 1.0 / t)


def small_t_cf_check(
    spec: TailSpec,
    t_grid: Sequence[float],
    rng: Union[RandomStream, int] = 0,
    n_draws: int = 10_000_000,
    chunk: int = 1_000_000,
) -> List[CFCheckRow]:
    """Compare 1 - ψ̂_W(t) from ``n_draws`` weights with the small-t expansion."""
    ts = np.asarray(t_grid, dtype=np.float64)
    if ts.size == 0 or np.any(ts <= 0) or np.any(ts > 0.1):
        raise DomainError("small-t grid must lie in (0, 0.1]")
    gen = as_stream(rng).generator()
    acc = np.zeros_like(ts)
    done = 0
    while done < n_draws:
        size = min(chunk, n_draws - done)
        w = draw_weights(spec, size, gen)
        # 1 - cos(x) = 2 sin²(x/2) keeps precision for tiny t·W
        acc += np.sum(2.0 * np.sin(0.5 * np.outer(ts, w)) ** 2, axis=1)
        done += size
    lhs = acc / n_draws
    return [CFCheckRow(float(t), float(l), small_t_rhs(spec, t)) for t, l in zip(ts, lhs)]


def slow_variation_threshold(sv: SlowlyVarying, lam: float, tol: float = 0.01, t_max: float = 1e300) -> Optional[float]:
    """Smallest grid point T with |L(λt)/L(t) - 1| < tol for every grid t ≥ T.

    Searches a log grid on [1, t_max / λ]; ``None`` when no such T exists there.
    """
    top = t_max / max(lam, 1.0)
    grid = np.geomspace(1.0, top, 3000)
    dev = np.abs(np.asarray(sv(lam * grid)) / np.asarray(sv(grid)) - 1.0)
    bad = np.nonzero(dev >= tol)[0]
    if bad.size == 0:
        return float(grid[0])
    if bad[-1] == grid.size - 1:
        return None
    return float(grid[bad[-1] + 1])


def potter_ratio(spec: TailSpec, lam: float, t: ArrayLike) -> np.ndarray:
    """G(λt)/G(t) for G(t) = t^{-α} L(t)."""
    t_arr = np.asarray(t, dtype=np.float64)
    g = lambda s: s ** (-spec.alpha) * np.asarray(spec.sv(s))  # noqa: E731
    return g(lam * t_arr) / g(t_arr)
