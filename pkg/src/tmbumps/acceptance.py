"""Acceptance checks, grouped into suites and numbered criteria.

Each check returns a :class:`CheckResult` with the measured quantities, the
tolerance it was held to, and its runtime against a budget. A check whose
budget is exceeded fails even when the numbers are fine.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

__all__ = ["CHECKS", "SUITES", "CheckResult", "run_checks", "run_criterion", "run_suite"]


@dataclass
class CheckResult:
    name: str
    suite: str
    criterion: str
    passed: bool
    tolerance: str
    measured: dict
    runtime_s: float
    budget_s: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        vals = ", ".join(f"{k}={_short(v)}" for k, v in self.measured.items())
        return f"[{status}] {self.name} ({self.tolerance}; {self.runtime_s:.2f}s <= {self.budget_s:g}s) {vals}"

    def to_dict(self) -> dict:
        return asdict(self)


def _short(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_short(x) for x in v) + "]"
    return str(v)


@dataclass
class _Check:
    name: str
    suite: str
    criterion: str
    budget_s: float
    tolerance: str
    func: object = field(repr=False)


CHECKS: list[_Check] = []


def _check(name, suite, criterion, budget_s, tolerance):
    def deco(func):
        CHECKS.append(_Check(name, suite, criterion, budget_s, tolerance, func))
        return func

    return deco


def _monotone(values, increasing=True):
    d = np.diff(values)
    return bool(np.all(d > 0) if increasing else np.all(d < 0))


# -- bubble -----------------------------------------------------------------------


@_check("mass_identity_4pi", "bubble", "1", 1.0, "|mass - 4 pi| <= 1e-8")
def _mass():
    from .bubble import limit_profile_mass

    mass = limit_profile_mass()
    err = abs(mass - 4 * math.pi)
    return err <= 1e-8, {"mass": mass, "abs_err": err}


@_check("kernel_lemma_residual", "bubble", "2", 10.0, "sup |L(phi) - F| <= 1e-5 on [0.1, 10]")
def _kernel():
    from .bubble import kernel_solve

    ts = np.linspace(0.1, 10.0, 199)
    forcings = {
        "zero": lambda s: np.zeros_like(np.asarray(s, dtype=float)),
        "s_minus_s2": lambda s: s - s * s,
        "two": lambda s: np.full_like(np.asarray(s, dtype=float), 2.0),
        "sin": np.sin,
    }
    worst = {}
    for key, F in forcings.items():
        sol = kernel_solve(F, 10.5)
        worst[key] = float(np.max(np.abs(sol.operator_residual(ts))))
    return max(worst.values()) <= 1e-5, worst


def _bubble_reports():
    from .bubble import BubbleParams, expansion_report, integrate_bubble

    return {g: expansion_report(integrate_bubble(BubbleParams(g), g * g + 10.0)) for g in (4, 6, 8)}


_cache: dict = {}


def _cached(key, builder):
    if key not in _cache:
        _cache[key] = builder()
    return _cache[key]


def _regression(reports, key):
    vals = [reports[g][key] for g in (4, 6, 8)]
    return all(v <= 1.5 * vals[0] for v in vals[1:]), {"gamma": [4, 6, 8], key: vals,
                                                       "limit": 1.5 * vals[0]}


@_check("bubble_two_term_regression", "bubble", "3", 30.0,
        "gamma^2 sup|B - two_term| at gamma=6,8 <= 1.5x gamma=4")
def _a4():
    return _regression(_cached("bubble", _bubble_reports), "claimA4_scaled_err")


@_check("bubble_slope_regression", "bubble", "3", 30.0,
        "gamma^2 sup|B' + 1/gamma| at gamma=6,8 <= 1.5x gamma=4")
def _a5():
    return _regression(_cached("bubble", _bubble_reports), "claimA5_scaled_err")


@_check("bubble_three_term_remainder_regression", "bubble", "3", 30.0,
        "gamma^5 sup|R'| on t <= gamma^2 - 5 ln gamma at gamma=6,8 <= 1.5x gamma=4")
def _a3():
    return _regression(_cached("bubble", _bubble_reports), "claimA3_scaled_err")


@_check("phi0_asymptote", "bubble", "extra", 10.0,
        "|phi0(40) + 40 - (2 + pi^2/6)| <= 1e-8 and |phi0'(40) + 1| <= 1e-3")
def _phi0():
    from .bubble import phi0, phi0_derivative

    c = 2.0 + math.pi**2 / 6.0
    off = float(phi0(40.0)) + 40.0
    slope = float(phi0_derivative(40.0))
    return abs(off - c) <= 1e-8 and abs(slope + 1.0) <= 1e-3, {
        "phi0_30_plus_30": float(phi0(30.0)) + 30.0, "phi0_40_plus_40": off, "slope_40": slope,
    }


# -- green --------------------------------------------------------------------------


def _disk_probes(n, rmax, rng):
    r = rmax * np.sqrt(rng.random(n))
    a = 2 * math.pi * rng.random(n)
    return np.column_stack([r * np.cos(a), r * np.sin(a)])


@_check("disk_green_collocation_vs_closed_form", "green", "4", 10.0,
        "sup |G_colloc - G_disk| <= 1e-6 at 100 probes")
def _green_oracle():
    from .greenfn import DomainSpec, GreenEvaluator

    rng = np.random.default_rng(20240601)
    th = 2 * math.pi * np.arange(64) / 64
    circle = DomainSpec.smooth_boundary(np.column_stack([np.cos(th), np.sin(th)]))
    num = GreenEvaluator(circle)
    exact = GreenEvaluator(DomainSpec.disk(1.0))
    X, Y = _disk_probes(100, 0.75, rng), _disk_probes(100, 0.75, rng)
    g_err = float(np.max(np.abs(num.green(X, Y) - exact.green(X, Y))))
    h_err = float(np.max(np.abs(num.regular_part(X, X) - exact.regular_part(X, X))))
    return max(g_err, h_err) <= 1e-6, {"green_err": g_err, "robin_err": h_err,
                                       "boundary_residual": num.boundary_residual}


@_check("disk_green_symmetry", "green", "4", 10.0, "max |G(x,y) - G(y,x)| <= 1e-12")
def _green_sym():
    from .greenfn import green_disk

    rng = np.random.default_rng(7)
    X, Y = _disk_probes(1000, 0.999, rng), _disk_probes(1000, 0.999, rng)
    err = float(np.max(np.abs(green_disk(X, Y) - green_disk(Y, X))))
    return err <= 1e-12, {"max_asymmetry": err}


@_check("disk_green_boundary_vanishing", "green", "extra", 5.0, "|G(x on boundary, y)| <= 1e-14")
def _green_bdry():
    from .greenfn import green_disk

    rng = np.random.default_rng(8)
    a = 2 * math.pi * rng.random(500)
    X = np.column_stack([np.cos(a), np.sin(a)])
    err = float(np.max(np.abs(green_disk(X, _disk_probes(500, 0.99, rng)))))
    return err <= 1e-14, {"max_boundary_value": err}


# -- config ---------------------------------------------------------------------------


@_check("single_bump_location", "config", "5", 1.0, "|x| <= 1e-8 and |m - sqrt(e)| <= 1e-8")
def _single():
    from .config import Configuration, WeightField, solve_configuration
    from .greenfn import DomainSpec, GreenEvaluator

    ev = GreenEvaluator(DomainSpec.disk(1.0))
    cfg, rep = solve_configuration(Configuration([[0.3, 0.2]], [1.0]), WeightField.constant(1.0), ev)
    dx = float(np.linalg.norm(cfg.points[0]))
    dm = abs(float(cfg.masses[0]) - math.sqrt(math.e))
    return dx <= 1e-8 and dm <= 1e-8, {"point_norm": dx, "mass_err": dm, "residual": rep.norm}


@_check("phi_equivalence", "config", "6", 30.0,
        "max |FD grad Phi - D res| <= 1e-5 on 50 random disk configurations, N <= 3")
def _phi_eq():
    from .config import phi_gradient_check, random_configuration
    from .greenfn import DomainSpec, GreenEvaluator

    dom = DomainSpec.disk(1.0)
    ev = GreenEvaluator(dom)
    rng = np.random.default_rng(12345)
    errs = [phi_gradient_check(random_configuration(dom, 1 + k % 3, rng), ev) for k in range(50)]
    return max(errs) <= 1e-5, {"max_err": max(errs), "n_configs": len(errs)}


@_check("weighted_pair_vs_reduced_oracle", "config", "extra", 10.0,
        "symmetric pair for f = exp(10 x^2) matches 1D bisection to 1e-8")
def _pair():
    from scipy.optimize import brentq

    from .config import Configuration, WeightField, solve_configuration
    from .greenfn import DomainSpec, GreenEvaluator

    beta = 10.0
    ev = GreenEvaluator(DomainSpec.disk(1.0))
    field = WeightField.from_expression(f"exp({beta}*x**2)")
    cfg, _ = solve_configuration(Configuration([[0.3, 0.0], [-0.3, 0.0]], [1.5, 1.5]), field, ev)

    def g(a):
        return -2 * a / (1 - a * a) - 1 / a + 2 * a / (1 + a * a) + beta * a

    a = brentq(g, 0.2, 0.5, xtol=1e-15)
    m = math.exp(0.5 * (2 * math.log((1 + a * a) / (2 * a)) + 2 * math.log(1 - a * a) + beta * a * a + 1))
    pa = float(np.max(np.abs(np.abs(cfg.points[:, 0]) - a)))
    pm = float(np.max(np.abs(cfg.masses - m)))
    return pa <= 1e-8 and pm <= 1e-8, {"a_oracle": a, "m_oracle": m, "a_err": pa, "m_err": pm}


# -- quantization -------------------------------------------------------------------------


def _branch():
    from .radial import trace_branch

    return trace_branch([4, 5, 6, 7, 8])


@_check("energy_gamma8_within_5pct_of_4pi", "quantization", "7", 30.0,
        "energy(8)/4pi in [0.95, 1.05]")
def _e8():
    tab = _cached("branch", _branch)
    e = tab.points[-1].energy_over_4pi
    return 0.95 <= e <= 1.05, {"energy_over_4pi": e}


@_check("energy_monotone_toward_4pi", "quantization", "7", 30.0,
        "|E/4pi - 1| strictly decreasing over gamma = 4..8")
def _e_mono():
    tab = _cached("branch", _branch)
    dev = np.abs(tab.column("energy_over_4pi") - 1.0)
    return _monotone(dev, increasing=False), {"deviation": dev.tolist()}


@_check("lambda_gamma_sq_gamma8_within_10pct", "quantization", "7", 30.0,
        "|lambda gamma^2 - 4/e| / (4/e) <= 0.10 at gamma = 8")
def _l8():
    tab = _cached("branch", _branch)
    rel = abs(tab.points[-1].lambda_gamma_sq - 4 / math.e) / (4 / math.e)
    return rel <= 0.10, {"lambda_gamma_sq": tab.points[-1].lambda_gamma_sq, "rel_dev": rel}


@_check("lambda_gamma_sq_monotone_toward_4_over_e", "quantization", "7", 30.0,
        "|lambda gamma^2 - 4/e| strictly decreasing over gamma = 4..8")
def _l_mono():
    tab = _cached("branch", _branch)
    dev = np.abs(tab.column("lambda_gamma_sq") - 4 / math.e) / (4 / math.e)
    return _monotone(dev, increasing=False), {"rel_deviation": dev.tolist()}


@_check("energy_identity", "quantization", "extra", 30.0,
        "|E - lambda int f u^2 e^{u^2}| / E <= 1e-6 at every point")
def _e_id():
    tab = _cached("branch", _branch)
    errs = [p.energy_identity_rel_err for p in tab]
    return max(errs) <= 1e-6, {"max_rel_err": max(errs)}


@_check("eigenvalue_bound", "quantization", "9", 30.0, "lambda(gamma) < j0^2 for all gamma")
def _eig():
    from .radial import eigenvalue_bound

    tab = _cached("branch", _branch)
    lam = tab.column("lambda")
    bound = eigenvalue_bound()
    return bool(np.all(lam < bound)), {"max_lambda": float(lam.max()), "j0_sq": bound}


# -- bubble vs solution ---------------------------------------------------------------------


def _weighted_branch():
    from .radial import trace_branch

    return trace_branch([4, 6, 8], weight=lambda r: 1.0 + r * r)


@_check("sup_bubble_err_regression", "bubble_vs_solution", "8", 30.0,
        "gamma sup|u - B| at gamma=6,8 <= 1.5x gamma=4 (f = 1 + |x|^2)")
def _bvs():
    tab = _cached("wbranch", _weighted_branch)
    vals = tab.column("sup_bubble_err_times_gamma").tolist()
    return all(v <= 1.5 * vals[0] for v in vals[1:]), {"gamma": [4, 6, 8], "scaled_err": vals}


@_check("sup_bubble_err_constant_weight", "bubble_vs_solution", "8", 30.0,
        "gamma sup|u - B| <= 1e-6 for f = 1 (the solution is the bubble)")
def _bvs_const():
    tab = _cached("branch", _branch)
    vals = tab.column("sup_bubble_err_times_gamma")
    return float(vals.max()) <= 1e-6, {"max_scaled_err": float(vals.max())}


@_check("rescaled_profile_vs_U", "bubble_vs_solution", "extra", 30.0,
        "sup_{|x|<=10} |gamma(u(mu x) - gamma) - U| <= 5/gamma^2")
def _resc():
    from .radial import rescaled_profile_error

    tab = _cached("wbranch", _weighted_branch)
    errs = [rescaled_profile_error(p) * p.gamma**2 for p in tab]
    return max(errs) <= 5.0, {"scaled_err_times_gamma_sq": errs}


SUITES = ("bubble", "green", "config", "quantization", "bubble_vs_solution")


def run_checks(checks) -> list[CheckResult]:
    out = []
    for chk in checks:
        t0 = time.perf_counter()
        try:
            ok, measured = chk.func()
            detail = ""
        except Exception as exc:  # a crashing check is a failed check
            ok, measured, detail = False, {}, f"{type(exc).__name__}: {exc}"
        dt = time.perf_counter() - t0
        passed = bool(ok) and dt <= chk.budget_s
        if ok and not passed:
            detail = f"runtime {dt:.2f}s over budget"
        out.append(CheckResult(chk.name, chk.suite, chk.criterion, passed, chk.tolerance,
                               measured, dt, chk.budget_s, detail))
    return out


def run_suite(suite: str = "all") -> list[CheckResult]:
    if suite != "all" and suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}")
    _cache.clear()
    return run_checks([c for c in CHECKS if suite == "all" or c.suite == suite])


def run_criterion(number) -> list[CheckResult]:
    """Checks belonging to one numbered criterion (cached work is reused)."""
    return run_checks([c for c in CHECKS if c.criterion == str(number)])
