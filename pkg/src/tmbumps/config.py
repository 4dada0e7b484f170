"""The location system for concentration points and its variational form.

For N points x_i with masses m_i in a domain with Green function G and regular
part H (G = (1/2pi)(ln 1/|x-y| + H)), the location system reads

    2 m_i grad_y H(x_i, x_i) + 4 pi sum_{j != i} m_j grad_y G(x_j, x_i)
        + (m_i / 2) grad f(x_i) / f(x_i) = 0,

    4 pi sum_{j != i} m_j G(x_j, x_i) + 2 m_i H(x_i, x_i)
        + m_i ln(f(x_i) / m_i^2) + m_i = 0.

The gradient is taken in the second slot of G; since G is symmetric the choice
does not change the value. For f = 1 the system is the gradient of

    Phi = 2 pi sum_{i != j} m_i m_j G(x_i, x_j) + sum m_i^2 H(x_i, x_i)
          + sum (m_i^2 - m_i^2 ln m_i),

with the location rows scaled by m_i.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BoundaryEscape, DegenerateGap, NonConvergence
from .greenfn import GreenEvaluator
from .serialize import dumps

__all__ = [
    "Configuration",
    "ResidualReport",
    "SolveOptions",
    "WeightField",
    "phi_functional",
    "phi_gradient",
    "phi_gradient_check",
    "random_configuration",
    "residual",
    "solve_configuration",
    "solve_multistart",
]

FOUR_PI = 4.0 * math.pi
GAP_FACTOR = 1e-8


class WeightField:
    """A positive weight f with its gradient.

    Parameters
    ----------
    f : callable
        Maps an array of points (..., 2) to values (...).
    grad_f : callable, optional
        Maps points to gradients (..., 2). Central differences are used when
        omitted.
    hess_log_f : callable, optional
        Hessian of ln f, (..., 2, 2). Differences of the gradient otherwise.
    f_min : float
        Positivity floor enforced by :meth:`validate`.
    """

    def __init__(self, f, grad_f=None, hess_log_f=None, f_min: float = 1e-12,
                 description: str = "", fd_step: float = 1e-6):
        self._f = f
        self._grad = grad_f
        self._hess = hess_log_f
        self.f_min = f_min
        self.description = description
        self.fd_step = fd_step
        self.is_constant = False

    @classmethod
    def constant(cls, c: float = 1.0) -> "WeightField":
        if not c > 0:
            raise ValueError("constant weight must be positive")
        c = float(c)
        field = cls(
            lambda p: np.full(np.shape(p)[:-1], c),
            lambda p: np.zeros(np.shape(p)),
            lambda p: np.zeros(np.shape(p) + (2,)),
            f_min=c,
            description=f"const {c!r}",
        )
        field.is_constant = True
        field.value = c
        return field

    @classmethod
    def from_expression(cls, expr: str, f_min: float = 1e-12) -> "WeightField":
        """Build from a formula in ``x`` and ``y`` (``x1``, ``x2`` also accepted).

        Gradients and the Hessian of ln f are derived symbolically.
        """
        import sympy as sp

        x, y = sp.symbols("x y", real=True)
        text = expr.strip()
        if "=" in text:
            text = text.split("=", 1)[1]
        f = sp.sympify(text, locals={"x": x, "y": y, "x1": x, "x2": y})
        extra = f.free_symbols - {x, y}
        if extra:
            raise ValueError(f"unknown symbols in weight: {sorted(map(str, extra))}")
        logf = sp.log(f)
        grad = [sp.diff(f, v) for v in (x, y)]
        hess = [[sp.diff(logf, a, b) for b in (x, y)] for a in (x, y)]
        fn = sp.lambdify((x, y), f, "numpy")
        gn = sp.lambdify((x, y), grad, "numpy")
        hn = sp.lambdify((x, y), hess, "numpy")

        def _f(p):
            p = np.asarray(p, dtype=float)
            return np.broadcast_to(fn(p[..., 0], p[..., 1]), p.shape[:-1]).astype(float)

        def _g(p):
            p = np.asarray(p, dtype=float)
            parts = gn(p[..., 0], p[..., 1])
            return np.stack([np.broadcast_to(c, p.shape[:-1]) for c in parts], axis=-1).astype(float)

        def _h(p):
            p = np.asarray(p, dtype=float)
            rows = hn(p[..., 0], p[..., 1])
            return np.stack(
                [np.stack([np.broadcast_to(c, p.shape[:-1]) for c in r], -1) for r in rows], -2
            ).astype(float)

        return cls(_f, _g, _h, f_min=f_min, description=str(f))

    def __call__(self, p):
        return np.asarray(self._f(np.asarray(p, dtype=float)), dtype=float)

    def gradient(self, p):
        p = np.asarray(p, dtype=float)
        if self._grad is not None:
            return np.asarray(self._grad(p), dtype=float)
        h = self.fd_step * np.maximum(1.0, np.abs(p))
        out = np.empty(p.shape)
        for k in range(2):
            e = np.zeros(2)
            e[k] = 1.0
            out[..., k] = (self(p + h[..., k, None] * e) - self(p - h[..., k, None] * e)) / (2 * h[..., k])
        return out

    def log_gradient(self, p):
        return self.gradient(p) / self(p)[..., None]

    def log_hessian(self, p):
        p = np.asarray(p, dtype=float)
        if self._hess is not None:
            return np.asarray(self._hess(p), dtype=float)
        h = self.fd_step * np.maximum(1.0, np.abs(p))
        out = np.empty(p.shape + (2,))
        for k in range(2):
            e = np.zeros(2)
            e[k] = 1.0
            out[..., :, k] = (
                self.log_gradient(p + h[..., k, None] * e) - self.log_gradient(p - h[..., k, None] * e)
            ) / (2 * h[..., k, None])
        return out

    def validate(self, probes) -> None:
        """Check positivity and the gradient against central differences."""
        probes = np.asarray(probes, dtype=float)
        vals = self(probes)
        if np.any(~np.isfinite(vals)) or np.any(vals < self.f_min):
            raise ValueError(f"weight drops below f_min={self.f_min:g}")
        if self._grad is None:
            return
        h = 1e-5
        fd = np.stack(
            [(self(probes + h * e) - self(probes - h * e)) / (2 * h) for e in np.eye(2)], -1
        )
        g = self.gradient(probes)
        scale = np.maximum(np.abs(g), np.abs(vals)[..., None] * 1e-3 + 1e-300)
        if np.max(np.abs(fd - g) / scale) > 1e-6:
            raise ValueError("weight gradient disagrees with finite differences")


@dataclass(frozen=True, eq=False)
class Configuration:
    """N concentration points with positive masses."""

    points: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        P = np.array(self.points, dtype=float).reshape(-1, 2)
        m = np.array(self.masses, dtype=float).reshape(-1)
        if len(P) == 0 or len(P) != len(m):
            raise ValueError("need as many masses as points, at least one")
        if not np.all(np.isfinite(P)) or not np.all(np.isfinite(m)):
            raise ValueError("non-finite entries in configuration")
        if np.any(m <= 0):
            raise ValueError("masses must be positive")
        P.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "points", P)
        object.__setattr__(self, "masses", m)

    def __len__(self):
        return len(self.masses)

    def min_gap(self) -> float:
        if len(self) < 2:
            return math.inf
        d = np.linalg.norm(self.points[:, None] - self.points[None], axis=-1)
        return float(np.min(d[np.triu_indices(len(self), 1)]))

    def validate(self, domain, gap_floor: float | None = None) -> None:
        if not np.all(domain.contains(self.points)):
            raise ValueError("all points must lie inside the domain")
        floor = GAP_FACTOR * domain.diameter if gap_floor is None else gap_floor
        if self.min_gap() <= floor:
            raise DegenerateGap(f"points closer than the gap floor {floor:.3g}")

    def to_dict(self) -> dict:
        return {"points": self.points.tolist(), "masses": self.masses.tolist()}

    def to_json(self, path=None) -> str | None:
        text = dumps(self.to_dict())
        if path is None:
            return text
        Path(path).write_text(text)
        return None

    @classmethod
    def from_json(cls, source) -> "Configuration":
        if isinstance(source, dict):
            data = source
        elif isinstance(source, str) and source.lstrip().startswith("{"):
            data = json.loads(source)
        else:
            data = json.loads(Path(source).read_text())
        return cls(data["points"], data["masses"])

    def permuted(self, order) -> "Configuration":
        order = np.asarray(order)
        return Configuration(self.points[order], self.masses[order])

    def rotated(self, angle: float, center=(0.0, 0.0)) -> "Configuration":
        c, s = math.cos(angle), math.sin(angle)
        Rm = np.array([[c, -s], [s, c]])
        ctr = np.asarray(center, dtype=float)
        return Configuration((self.points - ctr) @ Rm.T + ctr, self.masses)


@dataclass(frozen=True)
class ResidualReport:
    """Residuals of the location (2 per point) and mass (1 per point) equations."""

    grad_residuals: np.ndarray
    scalar_residuals: np.ndarray

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.grad_residuals**2) + np.sum(self.scalar_residuals**2)))

    def vector(self) -> np.ndarray:
        """Residuals ordered point by point as (grad_x, grad_y, scalar)."""
        return np.column_stack([self.grad_residuals, self.scalar_residuals]).ravel()

    def to_dict(self) -> dict:
        return {
            "grad_residuals": self.grad_residuals.tolist(),
            "scalar_residuals": self.scalar_residuals.tolist(),
            "norm": self.norm,
        }


# -- assembly ------------------------------------------------------------------


def _pair_terms(cfg: Configuration, green: GreenEvaluator):
    """All Green quantities the system needs, in one place.

    Returns G[j, i] = G(x_j, x_i), gradY[j, i] = grad_y G(x_j, x_i),
    gradX[j, i] = grad_x G(x_j, x_i) (diagonals zeroed), the Robin values
    H(x_i, x_i) and gradients grad_y H(x_i, x_i).
    """
    P = cfg.points
    n = len(P)
    G = np.zeros((n, n))
    gradY = np.zeros((n, n, 2))
    gradX = np.zeros((n, n, 2))
    if n > 1:
        j, i = np.where(~np.eye(n, dtype=bool))
        G[j, i] = green.green(P[j], P[i])
        gradY[j, i] = green.grad_green_y(P[j], P[i])
        gradX[j, i] = green.grad_green(P[j], P[i])
    robin = np.atleast_1d(green.robin(P))
    robin_grad = np.atleast_2d(green.robin_gradient(P))
    return G, gradY, gradX, robin, robin_grad


def _check(cfg, green, gap_floor=None):
    cfg.validate(green.domain, gap_floor)


def residual(cfg: Configuration, field: WeightField, green: GreenEvaluator,
             gap_floor: float | None = None) -> ResidualReport:
    """Assemble both equation families of the location system.

    Raises
    ------
    DegenerateGap
        If two points are closer than the gap floor.
    """
    _check(cfg, green, gap_floor)
    m = cfg.masses
    G, gradY, _, robin, robin_grad = _pair_terms(cfg, green)
    f = field(cfg.points)
    glog = field.log_gradient(cfg.points)
    grad = (2.0 * m[:, None] * robin_grad
            + FOUR_PI * np.einsum("j,jik->ik", m, gradY)
            + 0.5 * m[:, None] * glog)
    scalar = FOUR_PI * (m @ G) + 2.0 * m * robin + m * np.log(f / m**2) + m
    return ResidualReport(grad, scalar)


def phi_functional(cfg: Configuration, green: GreenEvaluator) -> float:
    """The interaction functional for f = 1; the i != j sum runs over ordered pairs."""
    _check(cfg, green)
    m = cfg.masses
    G, _, _, robin, _ = _pair_terms(cfg, green)
    return float(2.0 * math.pi * (m @ G @ m) + np.sum(m * m * robin) + np.sum(m * m * (1.0 - np.log(m))))


def phi_gradient(cfg: Configuration, green: GreenEvaluator, rel_step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of Phi, ordered point by point as (x, y, m)."""
    n = len(cfg)
    h_x = rel_step * green.domain.diameter
    out = np.empty((n, 3))
    for i in range(n):
        for k in range(3):
            h = h_x if k < 2 else rel_step * cfg.masses[i]
            vals = []
            for sgn in (1.0, -1.0):
                P = cfg.points.copy()
                m = cfg.masses.copy()
                if k < 2:
                    P[i, k] += sgn * h
                else:
                    m[i] += sgn * h
                vals.append(phi_functional(Configuration(P, m), green))
            out[i, k] = (vals[0] - vals[1]) / (2 * h)
    return out.ravel()


def phi_gradient_check(cfg: Configuration, green: GreenEvaluator) -> float:
    """max |grad Phi - D res| with D scaling location rows by m_i (f = 1)."""
    rep = residual(cfg, WeightField.constant(1.0), green)
    D = np.column_stack([cfg.masses, cfg.masses, np.ones(len(cfg))]).ravel()
    return float(np.max(np.abs(phi_gradient(cfg, green) - D * rep.vector())))


# -- Newton solve ----------------------------------------------------------------


@dataclass(frozen=True)
class SolveOptions:
    tol: float = 1e-10
    max_iter: int = 60
    max_halvings: int = 30
    jacobian: str = "auto"  # "auto", "analytic" or "fd"
    fd_rel_step: float = 1e-6
    gap_floor: float | None = None


def _unpack(z):
    z = z.reshape(-1, 3)
    with np.errstate(over="ignore", under="ignore"):
        m = np.exp(z[:, 2])
    return Configuration(z[:, :2], m)


def _pack(cfg):
    return np.column_stack([cfg.points, np.log(cfg.masses)]).ravel()


def _analytic_jacobian(cfg, field, green):
    P, m = cfg.points, cfg.masses
    n = len(P)
    G, gradY, gradX, robin, robin_grad = _pair_terms(cfg, green)
    glog = field.log_gradient(P)
    hlog = field.log_hessian(P)
    lnf = np.log(field(P))
    J = np.zeros((3 * n, 3 * n))
    I2 = np.eye(2)
    for i in range(n):
        r = slice(3 * i, 3 * i + 2)
        jac_gx = 2.0 * m[i] * green.robin_gradient_jacobian(P[i]) + 0.5 * m[i] * hlog[i]
        for j in range(n):
            if j == i:
                continue
            d = P[i] - P[j]
            r2 = d @ d
            sing = I2 / r2 - 2.0 * np.outer(d, d) / r2**2
            # d/dy and d/dx of grad_y G(x_j, y) at y = x_i
            dyy = (-sing + green.hess_regular_yy(P[j], P[i])) / (2 * math.pi)
            dyx = (sing + green.hess_regular_yx(P[j], P[i])) / (2 * math.pi)
            jac_gx += FOUR_PI * m[j] * dyy
            J[r, 3 * j:3 * j + 2] = FOUR_PI * m[j] * dyx
            J[r, 3 * j + 2] = FOUR_PI * m[j] * gradY[j, i]
            J[3 * i + 2, 3 * j:3 * j + 2] = FOUR_PI * m[j] * gradX[j, i]
            J[3 * i + 2, 3 * j + 2] = FOUR_PI * m[j] * G[j, i]
        J[r, 3 * i:3 * i + 2] = jac_gx
        J[r, 3 * i + 2] = m[i] * (2.0 * robin_grad[i] + 0.5 * glog[i])
        J[3 * i + 2, 3 * i:3 * i + 2] = (
            FOUR_PI * np.einsum("j,jk->k", m, gradY[:, i]) + 4.0 * m[i] * robin_grad[i] + m[i] * glog[i]
        )
        J[3 * i + 2, 3 * i + 2] = m[i] * (2.0 * robin[i] + lnf[i] - 2.0 * math.log(m[i]) - 1.0)
    return J


def _fd_jacobian(z, F, diam, rel_step):
    n = len(z)
    J = np.empty((n, n))
    for k in range(n):
        h = rel_step * (diam if k % 3 < 2 else 1.0)
        e = np.zeros(n)
        e[k] = h
        J[:, k] = (F(z + e) - F(z - e)) / (2 * h)
    return J


def solve_configuration(init: Configuration, field: WeightField, green: GreenEvaluator,
                        opts: SolveOptions | None = None):
    """Damped Newton iteration for the location system.

    Unknowns are the points and s_i = ln m_i, which keeps masses positive.
    The equations of point i are divided by m_i during the iteration; the
    reported residual is the unscaled one. Steps are halved until the trial
    point lies inside the domain and satisfies the Armijo condition on the
    residual norm.

    On collocation backends the attainable residual is limited by the
    boundary fit (about 1e-9 on a square); pass a matching ``tol``.

    Returns
    -------
    (Configuration, ResidualReport)

    Raises
    ------
    NonConvergence
        If the tolerance is not reached in ``max_iter`` steps or the line
        search stalls; carries the best configuration seen.
    BoundaryEscape
        If every backtracked trial left the domain.
    """
    opts = opts or SolveOptions()
    init.validate(green.domain, opts.gap_floor)
    dom = green.domain
    mode = opts.jacobian
    if mode == "auto":
        mode = "analytic" if green.is_disk else "fd"
    if mode == "analytic" and not green.is_disk:
        raise ValueError("analytic Jacobian needs the closed-form disk backend")

    def admissible(z):
        try:
            cfg = _unpack(z)
            cfg.validate(dom, opts.gap_floor)
        except (ValueError, DegenerateGap):
            return None
        return cfg

    # every equation of point i carries a factor m_i; dividing it out removes
    # the spurious zero at m -> 0 and keeps the -2 ln m_i term in control
    def F(z):
        cfg = _unpack(z)
        raw = residual(cfg, field, green, opts.gap_floor).vector()
        return raw / np.repeat(cfg.masses, 3), raw

    def jacobian(z, Fs):
        cfg = _unpack(z)
        if mode == "analytic":
            J = _analytic_jacobian(cfg, field, green)
            J /= np.repeat(cfg.masses, 3)[:, None]
            for i in range(len(cfg)):
                J[3 * i:3 * i + 3, 3 * i + 2] -= Fs[3 * i:3 * i + 3]
            return J
        return _fd_jacobian(z, lambda w: F(w)[0], dom.diameter, opts.fd_rel_step)

    def merit(Fs, raw):
        return max(float(np.linalg.norm(Fs)), float(np.linalg.norm(raw)))

    z = _pack(init)
    Fz, raw = F(z)
    norm = float(np.linalg.norm(Fz))
    best = (float(np.linalg.norm(raw)), init)
    for _ in range(opts.max_iter):
        if merit(Fz, raw) <= opts.tol:
            break
        step = np.linalg.lstsq(jacobian(z, Fz), -Fz, rcond=None)[0]
        t = 1.0
        accepted = False
        any_inside = False
        for _ in range(opts.max_halvings + 1):
            trial = z + t * step
            tcfg = admissible(trial)
            if tcfg is not None:
                any_inside = True
                Ft, raw_t = F(trial)
                nt = float(np.linalg.norm(Ft))
                if np.isfinite(nt) and nt <= (1.0 - 1e-4 * t) * norm:
                    accepted = True
                    break
            t *= 0.5
        if not accepted:
            if not any_inside:
                raise BoundaryEscape("backtracking could not keep the iterate inside the domain",
                                     best[1], best[0])
            # the line search stalls once rounding dominates the residual
            if merit(Fz, raw) <= 1e3 * opts.tol:
                break
            raise NonConvergence("line search stalled", best[1], best[0])
        z, Fz, raw, norm = trial, Ft, raw_t, nt
        if np.linalg.norm(raw) < best[0]:
            best = (float(np.linalg.norm(raw)), tcfg)
    if merit(Fz, raw) > opts.tol:
        raise NonConvergence(f"no convergence in {opts.max_iter} iterations", best[1], best[0])
    cfg = _unpack(z)
    return cfg, residual(cfg, field, green, opts.gap_floor)


def random_configuration(domain, n: int, rng: np.random.Generator, margin: float = 0.05,
                         min_separation: float = 0.1, mass_range=(1.0, 2.0),
                         max_tries: int = 10000) -> Configuration:
    """Uniform random interior points, rejected near the boundary and each other.

    ``margin`` and ``min_separation`` are fractions of the domain diameter.
    """
    diam = domain.diameter
    if domain.kind == "disk":
        lo = np.array(domain.center) - domain.radius
        hi = np.array(domain.center) + domain.radius
    else:
        lo, hi = domain.vertices.min(axis=0), domain.vertices.max(axis=0)
    pts = []
    for _ in range(max_tries):
        p = rng.uniform(lo, hi)
        if not domain.contains(p) or domain.distance_to_boundary(p) < margin * diam:
            continue
        if any(np.linalg.norm(p - q) < min_separation * diam for q in pts):
            continue
        pts.append(p)
        if len(pts) == n:
            return Configuration(np.array(pts), rng.uniform(*mass_range, size=n))
    raise ValueError(f"could not place {n} separated points")


def solve_multistart(inits, field, green, opts=None, threads: int = 1):
    """Solve from several starts concurrently; failures are returned as exceptions."""

    def run(cfg):
        try:
            return solve_configuration(cfg, field, green, opts)
        except NonConvergence as exc:
            return exc

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        return list(pool.map(run, inits))
