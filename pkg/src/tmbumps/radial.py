"""Radial solutions of -Laplace u = lambda f u exp(u^2) on a disk.

A radial profile with peak gamma is shot outward from the origin until its
first zero. For a constant weight the unit-coefficient profile v, solving
-(v'' + v'/r) = v exp(v^2), gives every disk solution by scaling:
u(x) = v(r0 |x| / R) with lambda = r0^2 / (f R^2), where r0 is the first zero
of v. For a radial non-constant weight lambda is found by root finding on the
zero radius.

Integration uses s = ln r and (v, w = r v') as unknowns, for which

    dv/ds = w,    dw/ds = -c(r) v exp(v^2 + 2 s),

and the exponential is evaluated as exp((v - g)(v + g) + 2 (s - ln mu)) / g^2,
with mu the bubble scale, so nothing overflows up to gamma = 12.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.optimize import brentq
from scipy.special import jn_zeros

from .bubble import BubbleParams, integrate_bubble, limit_profile_U, t_of_r
from .errors import ConfigurationMismatch, NoZeroCrossing, QuadratureError, StepFailure
from .profile import ProfileTable, fmt

__all__ = [
    "BranchPoint",
    "BranchTable",
    "RadialShot",
    "compare_to_bubble",
    "eigenvalue_bound",
    "predicted_mass_law",
    "rescaled_profile_error",
    "shoot_radial",
    "solve_disk",
    "trace_branch",
]

GAMMA_MAX = 12.0
BRANCH_CSV_HEADER = (
    "gamma", "lambda", "lambda_gamma_sq", "energy", "energy_over_4pi",
    "sup_bubble_err_times_gamma",
)


def eigenvalue_bound(R: float = 1.0, f_min: float = 1.0) -> float:
    """j0^2 / (R^2 f_min): first Dirichlet eigenvalue of the disk over min f."""
    return float(jn_zeros(0, 1)[0] ** 2 / (R * R * f_min))


@dataclass(frozen=True, eq=False)
class RadialShot:
    """A radial profile integrated from its peak to its first zero.

    The equation is -(v'' + v'/r) = coeff * weight(r) * v exp(v^2); the
    weight is normalized by its value at the origin, so ``kappa`` =
    coeff * weight(0) sets the bubble scale ``mu``.
    """

    gamma: float
    coeff: float
    weight: object
    r0: float
    log_mu: float
    rho_start: float
    sol: object = field(repr=False)

    @property
    def sigma_start(self) -> float:
        return self.log_mu + math.log(self.rho_start)

    @property
    def sigma_zero(self) -> float:
        return math.log(self.r0)

    @property
    def kappa(self) -> float:
        return self.coeff * _weight_at(self.weight, 0.0)

    def _series(self, r):
        g = self.gamma
        rho = np.asarray(r, dtype=float) / math.exp(self.log_mu)
        b = (1.0 + 2.0 * g * g) / (64.0 * g**3)
        v = g - rho**2 / (4.0 * g) + b * rho**4
        w = -rho**2 / (2.0 * g) + 4.0 * b * rho**4
        return v, w

    def _state(self, r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        if np.any(r < 0) or np.any(r > self.r0 * (1 + 1e-12)):
            raise ValueError(f"r outside [0, {self.r0}]")
        v = np.empty_like(r)
        w = np.empty_like(r)
        r_start = math.exp(self.sigma_start)
        inner = r <= r_start
        v[inner], w[inner] = self._series(r[inner])
        outer = ~inner
        if np.any(outer):
            y = self.sol.sol(np.minimum(np.log(r[outer]), self.sigma_zero))
            v[outer], w[outer] = y
        return r, v, w

    def value(self, r):
        r_arr, v, _ = self._state(r)
        return v if np.ndim(r) else float(v[0])

    def derivative(self, r):
        """dv/dr (zero at the origin)."""
        r_arr, _, w = self._state(r)
        with np.errstate(invalid="ignore", divide="ignore"):
            d = np.where(r_arr > 0, w / np.where(r_arr > 0, r_arr, 1.0), 0.0)
        return d if np.ndim(r) else float(d[0])

    def table(self) -> ProfileTable:
        """Profile on the integrator's own nodes, with the origin prepended."""
        s = self.sol.t
        r = np.concatenate([[0.0], np.exp(s)])
        v = np.concatenate([[self.gamma], self.sol.y[0]])
        w = np.concatenate([[0.0], self.sol.y[1] / np.exp(s)])
        return ProfileTable("radial_r", r, v, w)

    def _c_exp(self, s, v):
        """c(r) exp(v^2 + 2s), written to avoid overflow."""
        g = self.gamma
        rel = _weight_at(self.weight, math.exp(s)) / _weight_at(self.weight, 0.0)
        return rel * math.exp((v - g) * (v + g) + 2.0 * (s - self.log_mu)) / (g * g)

    @cached_property
    def energy(self) -> float:
        """2 pi int |v'|^2 r dr over [0, r0] = 2 pi int w^2 ds."""
        inner = self.rho_start**4 / (16.0 * self.gamma**2)
        val = _quad_dense(lambda s: self.sol.sol(s)[1] ** 2, self.sigma_start, self.sigma_zero)
        return 2.0 * math.pi * (inner + val)

    @cached_property
    def identity_energy(self) -> float:
        """2 pi int c v^2 exp(v^2) r dr, equal to the energy after integrating by parts."""
        inner = 0.5 * self.rho_start**2

        def integrand(s):
            v = self.sol.sol(s)[0]
            return v * v * self._c_exp(s, v)

        val = _quad_dense(integrand, self.sigma_start, self.sigma_zero)
        return 2.0 * math.pi * (inner + val)


def _weight_at(weight, r):
    if weight is None:
        return 1.0
    return float(weight(r))


def _quad_dense(func, a, b, tol=1e-12):
    val, err, *_ = quad(func, a, b, epsabs=0.0, epsrel=tol, limit=1000, full_output=1)
    if err > 1e-9 * max(abs(val), 1e-300):
        raise QuadratureError(f"energy quadrature error estimate {err:.2e}")
    return val


def shoot_radial(gamma: float, tol: float = 1e-12, r_max: float | None = None,
                 coeff: float = 1.0, weight=None, rho_start: float = 1e-3) -> RadialShot:
    """Integrate the radial profile with peak ``gamma`` to its first zero.

    Parameters
    ----------
    gamma : float
        Peak value, 0.5 <= gamma <= 12.
    tol : float
        Relative tolerance of the DOP853 integrator; the zero is located by
        event detection on the dense output.
    coeff, weight
        The equation is -(v'' + v'/r) = coeff * weight(r) v exp(v^2);
        ``weight`` is a callable of r (None means 1).
    rho_start : float
        Series start, in units of the bubble scale mu.

    Raises
    ------
    NoZeroCrossing
        If v stays positive up to ``r_max``.
    """
    g = float(gamma)
    if not (0.5 <= g <= GAMMA_MAX):
        raise ValueError(f"gamma must lie in [0.5, {GAMMA_MAX:g}], got {gamma}")
    if not coeff > 0:
        raise ValueError("coeff must be positive")
    w0 = _weight_at(weight, 0.0)
    if not w0 > 0:
        raise ValueError("weight must be positive at the origin")
    kappa = coeff * w0
    log_mu = -0.5 * (math.log(kappa) + 2.0 * math.log(g) + g * g)
    if r_max is None:
        r_max = 100.0 / math.sqrt(kappa)
    b = (1.0 + 2.0 * g * g) / (64.0 * g**3)
    rho0 = rho_start
    v0 = g - rho0**2 / (4.0 * g) + b * rho0**4
    w_0 = -rho0**2 / (2.0 * g) + 4.0 * b * rho0**4
    s0 = log_mu + math.log(rho0)
    s_max = math.log(r_max)
    if s_max <= s0:
        raise ValueError("r_max lies inside the series start")

    if weight is None:
        def rhs(s, y):
            v, w = y
            e = min((v - g) * (v + g) + 2.0 * (s - log_mu), 700.0)
            return [w, -v * math.exp(e) / (g * g)]
    else:
        def rhs(s, y):
            v, w = y
            e = min((v - g) * (v + g) + 2.0 * (s - log_mu), 700.0)
            return [w, -v * (weight(math.exp(s)) / w0) * math.exp(e) / (g * g)]

    def zero(s, y):
        return y[0]

    zero.terminal = True
    zero.direction = -1
    sol = solve_ivp(rhs, (s0, s_max), [v0, w_0], method="DOP853", rtol=tol,
                    atol=tol * 1e-2, dense_output=True, events=zero)
    if sol.status == -1:
        raise StepFailure(sol.message)
    if len(sol.t_events[0]) == 0:
        raise NoZeroCrossing(g, r_max)
    r0 = math.exp(sol.t_events[0][0])
    return RadialShot(g, float(coeff), weight, r0, log_mu, rho0, sol)


# -- disk solutions --------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BranchPoint:
    """One radial solution on the disk of radius ``radius``.

    ``u(r) = shot.value(scale * r)``; for a constant weight the shot has unit
    coefficient and ``scale = r0 / radius``, otherwise ``scale = 1``.
    """

    gamma: float
    lam: float
    energy: float
    identity_energy: float
    radius: float
    weight: object
    shot: RadialShot = field(repr=False)
    scale: float = 1.0
    f0: float = 1.0
    sup_bubble_err: float = math.nan

    def __post_init__(self):
        if not (self.lam > 0 and self.energy > 0):
            raise ValueError("lambda and energy must be positive")

    @property
    def lambda_gamma_sq(self) -> float:
        return self.lam * self.gamma**2

    @property
    def energy_over_4pi(self) -> float:
        return self.energy / (4.0 * math.pi)

    @property
    def energy_identity_rel_err(self) -> float:
        return abs(self.energy - self.identity_energy) / self.energy

    def u(self, r):
        return self.shot.value(np.asarray(r, dtype=float) * self.scale)

    def du(self, r):
        return self.shot.derivative(np.asarray(r, dtype=float) * self.scale) * self.scale

    def boundary_value(self) -> float:
        return float(self.u(self.radius))

    def as_row(self) -> dict:
        return {
            "gamma": self.gamma,
            "lambda": self.lam,
            "lambda_gamma_sq": self.lambda_gamma_sq,
            "energy": self.energy,
            "energy_over_4pi": self.energy_over_4pi,
            "sup_bubble_err_times_gamma": self.sup_bubble_err,
        }


def _const_weight(weight):
    if weight is None:
        return 1.0
    if isinstance(weight, (int, float)):
        if not weight > 0:
            raise ValueError("weight must be positive")
        return float(weight)
    return None


def solve_disk(gamma: float, R: float = 1.0, weight=None, tol: float = 1e-12,
               bubble_err: bool = True) -> BranchPoint:
    """Radial solution of -Laplace u = lambda f u exp(u^2) on the disk |x| < R.

    ``weight`` is None (f = 1), a positive constant, or a positive callable of
    r. Constant weights use the scaling of the unit profile; for callables
    lambda solves r0(lambda) = R by Brent's method on ln lambda.
    """
    c = _const_weight(weight)
    if c is not None:
        shot = shoot_radial(gamma, tol)
        lam = shot.r0**2 / (c * R * R)
        point = BranchPoint(gamma, lam, shot.energy, shot.identity_energy, R,
                            c, shot, shot.r0 / R, c)
    else:
        f0 = float(weight(0.0))
        rs = np.linspace(0.0, R, 201)
        fvals = np.array([weight(r) for r in rs])
        if np.any(fvals <= 0):
            raise ValueError("weight must be positive on the disk")
        r_unit = shoot_radial(gamma, tol).r0
        lo = math.log(r_unit**2 / (fvals.max() * R * R)) - 0.2
        hi = math.log(r_unit**2 / (fvals.min() * R * R)) + 0.2

        def mismatch(ll):
            try:
                shot = shoot_radial(gamma, tol, coeff=math.exp(ll), weight=weight, r_max=1e3 * R)
                return math.log(shot.r0 / R)
            except NoZeroCrossing:
                return 10.0

        ll = brentq(mismatch, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)
        lam = math.exp(ll)
        shot = shoot_radial(gamma, tol, coeff=lam, weight=weight, r_max=1e3 * R)
        point = BranchPoint(gamma, lam, shot.energy, shot.identity_energy, R, weight,
                            shot, 1.0, f0)
    if bubble_err:
        object.__setattr__(point, "sup_bubble_err", compare_to_bubble(point))
    return point


def _bubble_for(point: BranchPoint):
    params = BubbleParams(point.gamma, point.lam * point.f0)
    t_R = float(t_of_r(params, point.radius))
    t_max = min(point.gamma**2 + 10.0, t_R * (1 + 1e-9))
    return params, integrate_bubble(params, t_max)


def compare_to_bubble(point: BranchPoint, n: int = 4001) -> float:
    """gamma * sup over the disk of |u - B| for the bubble with the same peak and scale."""
    params, bub = _bubble_for(point)
    # uniform in t resolves the core and the outer layer alike
    t_R = float(t_of_r(params, point.radius))
    from .bubble import r_of_t

    r = np.unique(np.concatenate([
        np.asarray(r_of_t(params, np.linspace(0.0, min(t_R, bub.t_max), n))),
        np.linspace(0.0, point.radius, n),
    ]))
    r = r[r <= min(point.radius, float(r_of_t(params, bub.t_max)))]
    diff = np.abs(point.u(r) - bub.value_r(r))
    return float(point.gamma * diff.max())


def rescaled_profile_error(point: BranchPoint, x_max: float = 10.0, n: int = 2001) -> float:
    """sup over |x| <= x_max of |gamma (u(mu x) - gamma) - U(x)|."""
    params = BubbleParams(point.gamma, point.lam * point.f0)
    x = np.linspace(0.0, x_max, n)
    r = params.mu * x
    if r[-1] > point.radius:
        raise ValueError("x_max reaches past the disk")
    g = point.gamma
    return float(np.max(np.abs(g * (point.u(r) - g) - limit_profile_U(x))))


# -- sweeps ------------------------------------------------------------------------


@dataclass
class BranchTable:
    """Branch points ordered by gamma; failed points are kept in ``failures``."""

    points: list
    failures: list = field(default_factory=list)

    def __post_init__(self):
        gs = [p.gamma for p in self.points]
        if any(b <= a for a, b in zip(gs, gs[1:])):
            raise ValueError("gamma must be strictly increasing")

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def column(self, name: str) -> np.ndarray:
        return np.array([p.as_row()[name] for p in self.points])

    def to_csv(self, target=None):
        buf = io.StringIO(newline="")
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(BRANCH_CSV_HEADER)
        for p in self.points:
            row = p.as_row()
            writer.writerow([fmt(row[k]) for k in BRANCH_CSV_HEADER])
        text = buf.getvalue()
        if target is None:
            return text
        Path(target).write_bytes(text.encode("ascii"))
        return None


def trace_branch(gammas, tol: float = 1e-12, R: float = 1.0, weight=None,
                 threads: int = 1) -> BranchTable:
    """Solve at each gamma (in parallel when ``threads`` > 1).

    Errors at individual points are collected in ``failures`` as
    (gamma, message) and the sweep continues.
    """
    gammas = [float(g) for g in gammas]
    if any(b <= a for a, b in zip(gammas, gammas[1:])):
        raise ValueError("gammas must be strictly increasing")

    def run(g):
        try:
            return solve_disk(g, R, weight, tol)
        except (NoZeroCrossing, StepFailure, QuadratureError, ValueError) as exc:
            return (g, f"{type(exc).__name__}: {exc}")

    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        results = list(pool.map(run, gammas))
    pts = [r for r in results if isinstance(r, BranchPoint)]
    fails = [r for r in results if not isinstance(r, BranchPoint)]
    return BranchTable(pts, fails)


def predicted_mass_law(point: BranchPoint, cfg, field, domain=None) -> dict:
    """Compare sqrt(lambda) gamma with the mass-law prediction.

    The location system fixes m for a single point; the prediction used is
    2 / m. The variant 2 / (m sqrt(f0)) is reported as ``target_with_f0``;
    both agree when f0 = 1.

    Raises
    ------
    ConfigurationMismatch
        If the configuration does not describe one point at the centre of the
        same disk with the same weight.
    """
    if len(cfg) != 1:
        raise ConfigurationMismatch("mass law comparison needs a single point")
    if domain is not None:
        if domain.kind != "disk" or abs(domain.radius - point.radius) > 1e-12 * point.radius:
            raise ConfigurationMismatch(
                f"configuration domain does not match the disk of radius {point.radius:g}"
            )
        centre = np.array(domain.center)
    else:
        centre = np.zeros(2)
    x = cfg.points[0]
    if np.linalg.norm(x - centre) > 1e-6 * point.radius:
        raise ConfigurationMismatch("radial solutions concentrate at the centre")
    f0 = float(field(x))
    if abs(f0 - point.f0) > 1e-9 * point.f0:
        raise ConfigurationMismatch(f"weight at the point is {f0:g}, branch used {point.f0:g}")
    m = float(cfg.masses[0])
    measured = math.sqrt(point.lam) * point.gamma
    target = 2.0 / m
    target_f0 = 2.0 / (m * math.sqrt(f0))
    return {
        "gamma": point.gamma,
        "measured": measured,
        "mass": m,
        "f0": f0,
        "target": target,
        "deviation": abs(measured - target),
        "relative_deviation": abs(measured - target) / target,
        "target_with_f0": target_f0,
        "deviation_with_f0": abs(measured - target_f0),
    }
