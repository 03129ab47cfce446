"""Quick closed-form checks, run by ``stable-width selftest``.

Each check evaluates one exactly known value and returns ``(ok, detail)``. The
whole suite runs in a few seconds.
"""

import math
from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np

from .counterexample import a_hat_n, product_tail
from .exceptions import DomainError, StableWidthError
from .heavy_tail import TailSpec, SlowlyVarying, a_n, l_tilde, tail_prob
from .limit_theory import sigma_recursion
from .logger import get_logger
from .mlp import Activation, LayerConfig, NetworkConfig, forward
from .stable_dist import SpectralMeasure, StableParams, c_alpha, cf_multivariate_sas, cf_sas, frac_abs_moment
from .stats import ecf, hill_estimator, scale_estimator

logger = get_logger("selftest")

Check = Callable[[], Tuple[bool, str]]


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str


def _close(value: float, expected: float, rtol: float = 1e-9) -> Tuple[bool, str]:
    return math.isclose(value, expected, rel_tol=rtol, abs_tol=rtol), f"{value:.10g} vs {expected:.10g}"


def _raises(fn: Callable[[], object], exc: type = DomainError) -> Tuple[bool, str]:
    try:
        fn()
    except exc as e:
        return True, f"raised {type(e).__name__}"
    return False, "no error raised"


def _constant_net(c: float, sigma_bias: float) -> NetworkConfig:
    layer = LayerConfig(1.5, TailSpec.pareto(1.5), sigma_bias)
    return NetworkConfig(1, (layer, layer, layer), Activation("constant", (c,)))


def _sigma_constant() -> Tuple[bool, str]:
    law = sigma_recursion(_constant_net(0.7, 1.0), [1.0], n_mc=16, rng=0)
    expected = (1.0 + c_alpha(1.5) * 0.7**1.5) ** (1 / 1.5)
    return _close(law.sigma(3), expected)


def _zero_propagation() -> Tuple[bool, str]:
    layer = LayerConfig(1.5, TailSpec.pareto(1.5), 0.0)
    net = NetworkConfig(2, (layer, layer), Activation("tanh"))
    out = forward(net, [0.0, 0.0], (8,), rng=0)
    return bool(np.all(out[-1] == 0.0)), "Y^(2) at x = 0 without biases"


def _hill_closed_form() -> Tuple[bool, str]:
    m, k = 50, 9
    est = hill_estimator(np.exp(np.arange(1, m + 1)), k=k)
    return _close(est.alpha, 2.0 / (k + 1))


def _ecf_signs() -> Tuple[bool, str]:
    t = np.linspace(0.1, 3.0, 7)
    emp = ecf(np.array([1.0, -1.0] * 10), t)
    err = float(np.max(np.abs(emp.real - np.cos(t))))
    return err < 1e-12, f"max |ecf - cos t| = {err:.2e}"


CHECKS: List[Tuple[str, Check]] = [
    ("c_alpha(2) = 1", lambda: _close(c_alpha(2.0), 1.0)),
    ("c_alpha(1) = pi/2", lambda: _close(c_alpha(1.0), math.pi / 2)),
    ("c_alpha(0.5) = sqrt(pi/2)", lambda: _close(c_alpha(0.5), math.sqrt(math.pi / 2))),
    ("cf_sas(2, 1; t=1) = e^-1", lambda: _close(float(cf_sas(StableParams(2.0, 1.0), 1.0)), math.exp(-1))),
    ("cf_sas(1, 2; t=0.5) = e^-1", lambda: _close(float(cf_sas(StableParams(1.0, 2.0), 0.5)), math.exp(-1))),
    ("E|N(0,2)|^2 = 2", lambda: _close(frac_abs_moment(StableParams(2.0, 1.0), 2.0), 2.0)),
    ("moment needs nu < alpha", lambda: _raises(lambda: frac_abs_moment(StableParams(1.5, 1.0), 1.5))),
    (
        "spectral CF along (1, 0)",
        lambda: _close(
            float(cf_multivariate_sas(SpectralMeasure.from_atoms(2, [([1.0, 0.0], 1.0)]), 1.5, [0.8, 5.0])),
            math.exp(-(0.8**1.5)),
        ),
    ),
    ("Pareto(1.5) tail at 4", lambda: _close(float(tail_prob(TailSpec.pareto(1.5), 4.0)), 0.125)),
    (
        "log-power tail at e",
        lambda: _close(float(tail_prob(TailSpec(1.0, SlowlyVarying.log_power(1.0, 1.0)), math.e)), 2 * math.exp(-1)),
    ),
    ("Pareto(1) a_100 = 100", lambda: _close(a_n(TailSpec.pareto(1.0), 100), 100.0, 1e-8)),
    ("uniform L~(2) = 1/6", lambda: _close(l_tilde(TailSpec.finite("uniform", 1.0), 2.0), 1.0 / 6.0, 1e-7)),
    ("product tail at 1 = 1/2", lambda: _close(float(product_tail(1.0, 1.3)), 0.5)),
    ("product tail at e, alpha 1", lambda: _close(float(product_tail(math.e, 1.0)), math.exp(-1))),
    ("a_hat_n solves its equation", lambda: _close(float(product_tail(a_hat_n(1.5, 1000), 1.5)), 1e-3, 1e-8)),
    ("product tail rejects z < 1", lambda: _raises(lambda: product_tail(0.5, 1.5))),
    ("sigma recursion, constant activation", _sigma_constant),
    ("zero input propagates zeros", _zero_propagation),
    ("ecf of +-1 is cos t", _ecf_signs),
    ("Hill on e^1..e^m", _hill_closed_form),
    ("Hill rejects equal samples", lambda: _raises(lambda: hill_estimator(np.ones(100)))),
    ("scale of zeros is 0", lambda: _close(scale_estimator(np.zeros(2000), 1.5, bootstrap=0).sigma, 0.0)),
    ("ecf rejects NaN", lambda: _raises(lambda: ecf(np.array([0.0, math.nan]), [1.0]))),
]


def run_selftest() -> List[CheckResult]:
    """Run every check; a check that raises unexpectedly counts as a failure."""
    results = []
    for name, check in CHECKS:
        try:
            ok, detail = check()
        except StableWidthError as e:
            ok, detail = False, f"{type(e).__name__}: {e}"
        results.append(CheckResult(name, bool(ok), detail))
        logger.debug(f"{'ok' if ok else 'FAIL'} {name}: {detail}")
    return results
