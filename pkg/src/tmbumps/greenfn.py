"""Dirichlet Green functions and their regular parts on planar domains.

Conventions: the Green function of -Laplace with zero boundary values is split as

    G(x, y) = (1 / 2 pi) (ln(1 / |x - y|) + H(x, y)),

so that H is dimensionless and H(0, 0) = 0 on the unit disk. The other common
normalization, G = (1/2pi) ln(1/|x-y|) + h_y(x), is recovered as
h_y(x) = H(x, y) / (2 pi).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BackendToleranceError, CoincidentPoints, DomainParseError

__all__ = [
    "DomainSpec",
    "GreenEvaluator",
    "grad_diag_regular_part",
    "grad_green",
    "green_disk",
    "near_boundary_asymptotics",
    "parse_domain",
    "regular_part",
]

TWO_PI = 2.0 * math.pi
# truncation levels tried when rcond="auto"; the one with the smallest
# off-node boundary residual wins
AUTO_RCOND = (1e-6, 1e-7, 1e-8, 1e-9, 1e-10, 1e-11, 1e-12, 1e-13)
KINDS = ("disk", "polygon", "smooth_boundary")


def _segments_cross(P, Q):
    """Proper intersections between segments P[i]->P[i+1] and Q[j]->Q[j+1]."""
    a, b = P[:-1], P[1:]
    c, d = Q[:-1], Q[1:]

    def orient(p, q, r):
        return (q[..., 0] - p[..., 0]) * (r[..., 1] - p[..., 1]) - (
            q[..., 1] - p[..., 1]
        ) * (r[..., 0] - p[..., 0])

    A, B = a[:, None], b[:, None]
    C, D = c[None, :], d[None, :]
    o1, o2 = orient(A, B, C), orient(A, B, D)
    o3, o4 = orient(C, D, A), orient(C, D, B)
    return (o1 * o2 < 0) & (o3 * o4 < 0)


@dataclass(frozen=True, eq=False)
class DomainSpec:
    """A bounded simply connected planar domain.

    Use the constructors :meth:`disk`, :meth:`polygon` and
    :meth:`smooth_boundary`. Polygons must be simple and counterclockwise.
    Smooth boundaries are given by samples at equally spaced parameter values
    of a closed curve; they are reoriented counterclockwise if necessary.
    """

    kind: str
    radius: float | None = None
    center: tuple = (0.0, 0.0)
    vertices: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown domain kind {self.kind!r}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if self.kind == "disk":
            if self.radius is None or not (self.radius > 0 and math.isfinite(self.radius)):
                raise ValueError("disk radius must be positive")
            object.__setattr__(self, "radius", float(self.radius))
            return
        V = np.array(self.vertices, dtype=float)
        if V.ndim != 2 or V.shape[1] != 2 or len(V) < 3:
            raise ValueError("need at least 3 vertices as (x, y) pairs")
        if np.allclose(V[0], V[-1]):
            V = V[:-1]
        area = 0.5 * np.sum(V[:, 0] * np.roll(V[:, 1], -1) - np.roll(V[:, 0], -1) * V[:, 1])
        if self.kind == "polygon" and area <= 0:
            raise ValueError("polygon vertices must be counterclockwise")
        if self.kind == "smooth_boundary" and area < 0:
            V = V[::-1].copy()
        closed = np.vstack([V, V[:1]])
        n = len(V)
        cross = _segments_cross(closed, closed)
        idx = np.arange(n)
        # adjacent edges share a vertex and never cross properly
        cross[idx, idx] = False
        if np.any(cross):
            raise ValueError(f"{self.kind} boundary is self-intersecting")
        V.setflags(write=False)
        object.__setattr__(self, "vertices", V)

    @classmethod
    def disk(cls, radius: float = 1.0, center=(0.0, 0.0)) -> "DomainSpec":
        return cls("disk", radius=radius, center=center)

    @classmethod
    def polygon(cls, vertices) -> "DomainSpec":
        return cls("polygon", vertices=vertices)

    @classmethod
    def smooth_boundary(cls, samples) -> "DomainSpec":
        return cls("smooth_boundary", vertices=samples)

    # geometry

    @property
    def centroid(self) -> np.ndarray:
        if self.kind == "disk":
            return np.array(self.center)
        V = self.vertices
        Vn = np.roll(V, -1, axis=0)
        w = V[:, 0] * Vn[:, 1] - Vn[:, 0] * V[:, 1]
        A = 0.5 * w.sum()
        return ((V + Vn) * w[:, None]).sum(axis=0) / (6.0 * A)

    @property
    def diameter(self) -> float:
        if self.kind == "disk":
            return 2.0 * self.radius
        V = self.vertices
        return float(np.max(np.linalg.norm(V[:, None] - V[None], axis=-1)))

    def contains(self, p) -> np.ndarray:
        """Strict interior test, vectorized over leading axes."""
        p = np.asarray(p, dtype=float)
        if self.kind == "disk":
            return np.linalg.norm(p - self.center, axis=-1) < self.radius
        V = self.vertices
        Vn = np.roll(V, -1, axis=0)
        px, py = p[..., 0, None], p[..., 1, None]
        straddle = (V[:, 1] > py) != (Vn[:, 1] > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xs = V[:, 0] + (py - V[:, 1]) * (Vn[:, 0] - V[:, 0]) / (Vn[:, 1] - V[:, 1])
        inside = np.sum(straddle & (px < xs), axis=-1) % 2 == 1
        return inside & (self.distance_to_boundary(p) > 0)

    def distance_to_boundary(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if self.kind == "disk":
            return np.abs(self.radius - np.linalg.norm(p - self.center, axis=-1))
        V = self.vertices
        E = np.roll(V, -1, axis=0) - V
        rel = p[..., None, :] - V
        s = np.clip(np.sum(rel * E, axis=-1) / np.sum(E * E, axis=-1), 0.0, 1.0)
        return np.min(np.linalg.norm(rel - s[..., None] * E, axis=-1), axis=-1)

    def boundary_points(self, n: int, shift: float = 0.0) -> np.ndarray:
        """n points on the boundary, equally spaced in the natural parameter.

        ``shift`` offsets the parameter by a fraction of the spacing.
        """
        if self.kind == "disk":
            th = TWO_PI * (np.arange(n) + shift) / n
            return np.array(self.center) + self.radius * np.column_stack([np.cos(th), np.sin(th)])
        V = self.vertices
        if self.kind == "smooth_boundary":
            # trigonometric interpolant of the periodic samples
            m = len(V)
            coef = np.fft.fft(V, axis=0) / m
            k = np.fft.fftfreq(m, d=1.0 / m)
            theta = TWO_PI * (np.arange(n) + shift) / n
            return np.real(np.exp(1j * np.outer(theta, k)) @ coef)
        closed = np.vstack([V, V[:1]])
        seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
        s = np.concatenate([[0.0], np.cumsum(seg)])
        target = s[-1] * (np.arange(n) + shift) / n
        return np.column_stack([np.interp(target, s, closed[:, 0]), np.interp(target, s, closed[:, 1])])

    def to_dict(self) -> dict:
        if self.kind == "disk":
            return {"kind": "disk", "R": self.radius, "center": list(self.center)}
        return {"kind": self.kind, "vertices": self.vertices.tolist()}


def parse_domain(source) -> DomainSpec:
    """Read a domain description.

    Format, one directive per line, ``#`` starts a comment::

        kind=disk R=1.0 [center=x,y]

        kind=polygon            (or kind=smooth_boundary)
        v=x,y
        v=x,y
        ...

    ``source`` is a path or the text itself (any string containing a newline
    or ``=``).

    Raises
    ------
    DomainParseError
        Naming the offending line.
    """
    if isinstance(source, Path) or ("\n" not in str(source) and "=" not in str(source)):
        text = Path(source).read_text()
    else:
        text = str(source)
    kind = None
    opts = {}
    verts = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        for token in line.split():
            if "=" not in token:
                raise DomainParseError(f"expected key=value, got {token!r}", lineno)
            key, val = token.split("=", 1)
            try:
                if key == "kind":
                    if kind is not None:
                        raise DomainParseError("kind given twice", lineno)
                    if val not in KINDS:
                        raise DomainParseError(f"unknown kind {val!r}", lineno)
                    kind = val
                elif key == "R":
                    opts["radius"] = float(val)
                elif key == "center":
                    x, y = (float(c) for c in val.split(","))
                    opts["center"] = (x, y)
                elif key == "v":
                    x, y = (float(c) for c in val.split(","))
                    verts.append((x, y))
                else:
                    raise DomainParseError(f"unknown key {key!r}", lineno)
            except ValueError as exc:
                if isinstance(exc, DomainParseError):
                    raise
                raise DomainParseError(f"cannot parse {token!r}", lineno) from None
            if kind is None:
                raise DomainParseError("first directive must be kind=...", lineno)
    if kind is None:
        raise DomainParseError("no kind= directive found")
    try:
        if kind == "disk":
            if verts:
                raise ValueError("disk takes no v= lines")
            if "radius" not in opts:
                raise ValueError("disk needs R=")
            return DomainSpec.disk(opts["radius"], opts.get("center", (0.0, 0.0)))
        return DomainSpec(kind, vertices=np.array(verts))
    except DomainParseError:
        raise
    except ValueError as exc:
        raise DomainParseError(str(exc)) from None


# -- closed form on the disk -------------------------------------------------


def _disk_Q(x, y, R):
    """|(|y|/R) x - R y/|y||^2, written without dividing by |y|."""
    xx = np.sum(x * x, axis=-1)
    yy = np.sum(y * y, axis=-1)
    return xx * yy / (R * R) - 2.0 * np.sum(x * y, axis=-1) + R * R


def green_disk(x, y, R: float = 1.0):
    """Green function of the disk of radius R centred at the origin.

    G(x, y) = (1 / 4 pi) ln( |(|y|/R) x - R y/|y||^2 / |x - y|^2 ).

    Raises
    ------
    CoincidentPoints
        If |x - y| < 1e-14 R.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d2 = np.sum((x - y) ** 2, axis=-1)
    if np.any(d2 < (1e-14 * R) ** 2):
        raise CoincidentPoints("x and y coincide")
    out = np.log(_disk_Q(x, y, R) / d2) / (2.0 * TWO_PI)
    return out[()] if np.ndim(out) == 0 else out


# -- evaluator ----------------------------------------------------------------


def _pairwise_log(P, Z):
    return np.log(np.linalg.norm(P[..., None, :] - Z, axis=-1))


class GreenEvaluator:
    """Green function, regular part and gradients for one domain.

    Parameters
    ----------
    domain : DomainSpec
    backend : {"auto", "closed_form_disk", "harmonic_collocation"}
        ``auto`` picks the closed form for disks.
    n_charges : int
        Number of fundamental-solution sources for the collocation backend,
        placed on the boundary scaled by ``offset`` about the centroid.
    n_collocation : int, optional
        Boundary collocation points (default ``4 * n_charges``).
    rcond : float or "auto"
        Relative singular-value cutoff of the least-squares solve. ``auto``
        tries each level in ``AUTO_RCOND`` and keeps the one with the smallest
        boundary residual measured between the collocation nodes.
    residual_tol : float or None
        Raise BackendToleranceError at construction when the boundary residual
        of the harmonic extension exceeds this; None disables the check.

    The collocation backend represents, for each pole y, the harmonic function
    with boundary values ln|x - y| as c_0 + sum_k c_k ln|x - z_k|. The
    coefficients depend linearly on the boundary data, so the least-squares
    pseudo-inverse is computed once and reused for all poles.
    """

    def __init__(self, domain: DomainSpec, backend: str = "auto", n_charges: int = 128,
                 n_collocation: int | None = None, offset: float = 1.5,
                 rcond="auto", residual_tol: float | None = 1e-6):
        if backend == "auto":
            backend = "closed_form_disk" if domain.kind == "disk" else "harmonic_collocation"
        if backend not in ("closed_form_disk", "harmonic_collocation"):
            raise ValueError(f"unknown backend {backend!r}")
        if backend == "closed_form_disk" and domain.kind != "disk":
            raise ValueError("closed_form_disk backend needs a disk domain")
        self.domain = domain
        self.backend = backend
        self.n_charges = int(n_charges)
        self.n_collocation = int(n_collocation or 4 * n_charges)
        self.offset = float(offset)
        self.rcond = rcond
        self.rcond_used = None
        self.residual_tol = residual_tol
        self._centre = np.array(domain.center) if domain.kind == "disk" else None
        if backend == "harmonic_collocation":
            self._build_collocation()
        self.boundary_residual = self._measure_boundary_residual()
        if residual_tol is not None and self.boundary_residual > residual_tol:
            raise BackendToleranceError(
                f"boundary residual {self.boundary_residual:.2e} exceeds {residual_tol:.1e}; "
                "increase n_charges or adjust offset"
            )

    @property
    def is_disk(self) -> bool:
        return self.backend == "closed_form_disk"

    def _build_collocation(self):
        dom = self.domain
        c = dom.centroid
        Z = c + self.offset * (dom.boundary_points(self.n_charges) - c)
        if np.any(dom.contains(Z)) or np.min(dom.distance_to_boundary(Z)) < 1e-3 * dom.diameter:
            raise ValueError("charge curve meets the domain; increase offset")
        X = dom.boundary_points(self.n_collocation)
        A = np.hstack([np.ones((len(X), 1)), _pairwise_log(X, Z)])
        self._Z = Z
        self._X = X
        U, S, Vt = np.linalg.svd(A, full_matrices=False)
        self._cond = float(S[0] / S[-1])
        if self.rcond == "auto":
            candidates = AUTO_RCOND
        else:
            candidates = (float(self.rcond),)
        best = None
        for rc in candidates:
            k = int(np.sum(S > rc * S[0]))
            self._M = (Vt[:k].T / S[:k]) @ U[:, :k].T
            res = self._measure_boundary_residual()
            if best is None or res < best[0]:
                best = (res, rc, self._M)
        _, self.rcond_used, self._M = best

    def _measure_boundary_residual(self) -> float:
        dom = self.domain
        c = dom.centroid
        Xb = dom.boundary_points(max(64, self.n_collocation // 2), shift=0.5)
        # poles at a few interior points spread toward the boundary
        B = dom.boundary_points(8)
        poles = np.vstack([c[None], c + 0.5 * (B - c)])
        worst = 0.0
        for y in poles:
            if self.is_disk:
                g = self._disk_green(Xb, np.broadcast_to(y, Xb.shape))
            else:
                g = (-np.log(np.linalg.norm(Xb - y, axis=-1))
                     + self._H_mfs(Xb, np.broadcast_to(y, Xb.shape))) / TWO_PI
            worst = max(worst, float(np.max(np.abs(g))))
        return worst

    # internal kernels

    def _shift(self, x):
        x = np.asarray(x, dtype=float)
        return x - self._centre if self._centre is not None else x

    def _disk_green(self, x, y):
        w, v = self._shift(x), self._shift(y)
        R = self.domain.radius
        d2 = np.sum((w - v) ** 2, axis=-1)
        return np.log(_disk_Q(w, v, R) / d2) / (2.0 * TWO_PI)

    def _H_mfs(self, x, y):
        phi = np.concatenate(
            [np.ones(x.shape[:-1] + (1,)), _pairwise_log(x, self._Z)], axis=-1
        )
        b = _pairwise_log(y, self._X)
        return np.sum(phi * (b @ self._M.T), axis=-1)

    def _mfs_phi_grad(self, x):
        d = x[..., None, :] - self._Z
        g = d / np.sum(d * d, axis=-1)[..., None]
        zero = np.zeros(x.shape[:-1] + (1, 2))
        return np.concatenate([zero, g], axis=-2)  # (..., K+1, 2)

    def _check_closure(self, *pts):
        dom = self.domain
        for p in pts:
            if dom.kind == "disk":
                ok = np.linalg.norm(p - dom.center, axis=-1) <= dom.radius * (1 + 1e-12)
            else:
                ok = dom.contains(p) | (dom.distance_to_boundary(p) <= 1e-12 * dom.diameter)
            if not np.all(ok):
                raise ValueError("points must lie in the closed domain")

    @staticmethod
    def _out(a):
        return a[()] if np.ndim(a) == 0 else a

    # public evaluation

    def regular_part(self, x, y):
        """H(x, y) = 2 pi G(x, y) + ln|x - y|, smooth across the diagonal."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        x, y = np.broadcast_arrays(x, y)
        self._check_closure(x, y)
        if self.is_disk:
            out = 0.5 * np.log(_disk_Q(self._shift(x), self._shift(y), self.domain.radius))
        else:
            out = self._H_mfs(x, y)
        return self._out(out)

    def green(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        self._check_closure(x, y)
        d = np.linalg.norm(x - y, axis=-1)
        scale = self.domain.diameter
        if np.any(d < 1e-14 * scale):
            raise CoincidentPoints("x and y coincide")
        if self.is_disk:
            return self._out(self._disk_green(*np.broadcast_arrays(x, y)))
        return self._out((-np.log(d) + self.regular_part(x, y)) / TWO_PI)

    def grad_regular_x(self, x, y):
        """Gradient of H(x, y) in its first argument."""
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        if self.is_disk:
            w, v = self._shift(x), self._shift(y)
            R = self.domain.radius
            Q = _disk_Q(w, v, R)[..., None]
            return (np.sum(v * v, -1)[..., None] * w / R**2 - v) / Q
        coef = _pairwise_log(y, self._X) @ self._M.T
        return np.einsum("...k,...kj->...j", coef, self._mfs_phi_grad(x))

    def grad_regular_y(self, x, y):
        """Gradient of H(x, y) in its second argument."""
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        if self.is_disk:
            w, v = self._shift(x), self._shift(y)
            R = self.domain.radius
            Q = _disk_Q(w, v, R)[..., None]
            return (np.sum(w * w, -1)[..., None] * v / R**2 - w) / Q
        phi = np.concatenate([np.ones(x.shape[:-1] + (1,)), _pairwise_log(x, self._Z)], -1)
        d = y[..., None, :] - self._X
        db = d / np.sum(d * d, axis=-1)[..., None]  # (..., L, 2)
        return np.einsum("...k,kl,...lj->...j", phi, self._M, db)

    def grad_green(self, x, y):
        """Gradient of G(x, y) in x."""
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        d = x - y
        r2 = np.sum(d * d, axis=-1)
        if np.any(r2 < (1e-14 * self.domain.diameter) ** 2):
            raise CoincidentPoints("x and y coincide")
        return (-d / r2[..., None] + self.grad_regular_x(x, y)) / TWO_PI

    def grad_green_y(self, x, y):
        """Gradient of G(x, y) in y."""
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        d = y - x
        r2 = np.sum(d * d, axis=-1)
        if np.any(r2 < (1e-14 * self.domain.diameter) ** 2):
            raise CoincidentPoints("x and y coincide")
        return (-d / r2[..., None] + self.grad_regular_y(x, y)) / TWO_PI

    def robin(self, x):
        """H(x, x)."""
        x = np.asarray(x, dtype=float)
        if self.is_disk:
            w = self._shift(x)
            R = self.domain.radius
            return self._out(np.log((R * R - np.sum(w * w, -1)) / R))
        return self.regular_part(x, x)

    def robin_gradient(self, x):
        """grad_y H(x, y) at y = x, i.e. half the gradient of x -> H(x, x)."""
        x = np.asarray(x, dtype=float)
        if self.is_disk:
            w = self._shift(x)
            R = self.domain.radius
            return -w / (R * R - np.sum(w * w, -1))[..., None]
        return 0.5 * (self.grad_regular_x(x, x) + self.grad_regular_y(x, x))

    # second derivatives, closed form on the disk only

    def _require_disk(self):
        if not self.is_disk:
            raise NotImplementedError("analytic second derivatives exist only for the disk")

    def hess_regular_yy(self, x, y):
        """d^2 H / dy^2 (2x2)."""
        self._require_disk()
        w, v = self._shift(x), self._shift(y)
        R = self.domain.radius
        Q = _disk_Q(w, v, R)
        g = (np.dot(w, w) * v / R**2 - w) / Q
        return np.dot(w, w) / (R * R * Q) * np.eye(2) - 2.0 * np.outer(g, g)

    def hess_regular_yx(self, x, y):
        """d/dx of grad_y H(x, y); row index is the y component."""
        self._require_disk()
        w, v = self._shift(x), self._shift(y)
        R = self.domain.radius
        Q = _disk_Q(w, v, R)
        gy = (np.dot(w, w) * v / R**2 - w) / Q
        gx = (np.dot(v, v) * w / R**2 - v) / Q
        return (2.0 * np.outer(v, w) / R**2 - np.eye(2)) / Q - 2.0 * np.outer(gy, gx)

    def robin_gradient_jacobian(self, x):
        self._require_disk()
        w = self._shift(x)
        R = self.domain.radius
        s = R * R - np.dot(w, w)
        return -np.eye(2) / s - 2.0 * np.outer(w, w) / (s * s)

    def diagnostics(self) -> dict:
        out = {
            "domain": self.domain.to_dict(),
            "backend": self.backend,
            "boundary_residual": self.boundary_residual,
        }
        if not self.is_disk:
            out.update(
                n_charges=self.n_charges,
                n_collocation=self.n_collocation,
                offset=self.offset,
                rcond=self.rcond,
                rcond_used=self.rcond_used,
                condition_number=self._cond,
            )
        return out

    def diagnostics_json(self) -> str:
        return json.dumps(self.diagnostics(), indent=2, sort_keys=True)


# -- module-level conveniences -------------------------------------------------


def regular_part(ev: GreenEvaluator, x, y):
    return ev.regular_part(x, y)


def grad_green(ev: GreenEvaluator, x, y):
    return ev.grad_green(x, y)


def grad_diag_regular_part(ev: GreenEvaluator, x):
    return ev.robin_gradient(x)


def near_boundary_asymptotics(ev: GreenEvaluator, x, y) -> dict:
    """Compare G(x, y) with its leading behaviour for a pole near the boundary.

    With d the distance from y to the boundary, two regimes are reported:
    when d <= |x - y| the Green function is O(d / |x - y|) and the record
    compares against that scale; when |x - y| < d it compares against
    (1 / 2 pi) ln(2 d / |x - y|). ``half_plane`` is the Green function of the
    tangent half-plane, (1/4pi) ln(1 + 4 d(x) d(y) / |x - y|^2).

    Raises
    ------
    ValueError
        If y is farther than 0.1 diam from the boundary.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    dom = ev.domain
    d = float(dom.distance_to_boundary(y))
    if d > 0.1 * dom.diameter:
        raise ValueError(f"pole is {d:g} from the boundary; need <= 0.1 diam")
    dist = float(np.linalg.norm(x - y))
    actual = float(ev.green(x, y))
    if d <= dist:
        regime = "d = O(|x-y|)"
        predicted = d / dist
    else:
        regime = "|x-y| = o(d)"
        predicted = math.log(2.0 * d / dist) / TWO_PI
    dx = float(dom.distance_to_boundary(x))
    return {
        "regime": regime,
        "predicted": predicted,
        "actual": actual,
        "ratio": actual / predicted,
        "difference": actual - predicted,
        "half_plane": math.log1p(4.0 * dx * d / dist**2) / (2.0 * TWO_PI),
        "d": d,
        "distance": dist,
    }
