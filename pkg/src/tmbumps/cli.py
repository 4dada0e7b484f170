"""Command-line front end.

Commands: bubble, green, locate, branch, verify, replay. Every run writes a
``<command>.manifest.json`` next to its outputs, from which ``replay``
reproduces the run.

Exit codes: 0 ok, 2 usage or input error, 3 numerical failure,
4 non-convergence, 5 acceptance failure.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DomainParseError, NonConvergence, NumericalError, TmbumpsError
from .serialize import dumps

EXIT_OK, EXIT_USAGE, EXIT_NUMERICS, EXIT_NONCONV, EXIT_ACCEPT = 0, 2, 3, 4, 5


class UsageError(Exception):
    pass


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _threads(args) -> int:
    env = os.environ.get("TMBUMPS_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise UsageError(f"TMBUMPS_THREADS must be an integer, got {env!r}") from None
    else:
        n = args.threads
    if n < 1:
        raise UsageError("thread count must be >= 1")
    return n


def _point(text: str) -> np.ndarray:
    try:
        x, y = (float(c) for c in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected x,y, got {text!r}") from None
    return np.array([x, y])


def _gammas(text: str) -> list:
    try:
        if ":" in text:
            a, b, step = (float(c) for c in text.split(":"))
            if step <= 0:
                raise ValueError
            n = int(math.floor((b - a) / step + 1e-9)) + 1
            return [a + k * step for k in range(n)]
        return [float(c) for c in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected start:stop:step or a list, got {text!r}") from None


def _write(path: Path, text: str, outputs: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(text.encode("ascii"))
    outputs[path.name] = _sha256(path)


# -- commands ------------------------------------------------------------------------


def cmd_bubble(args, out: Path, outputs: dict, inputs: dict) -> int:
    from .bubble import BubbleParams, expansion_report, integrate_bubble, rescaled_profile_error

    try:
        params = BubbleParams(args.gamma, args.kappa)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    t_max = args.t_max if args.t_max is not None else params.gamma**2
    if not 0 < t_max <= params.gamma**2 + 10:
        raise UsageError("--t-max must lie in (0, gamma^2 + 10]")
    sol = integrate_bubble(params, t_max, args.tol)
    report = expansion_report(sol)
    report.update(
        mu=params.mu,
        log_mu=params.log_mu,
        n_samples=len(sol.table),
        rescaled_profile_err_times_gamma_sq=(
            rescaled_profile_error(sol) * params.gamma**2 if t_max >= math.log1p(25.0) else None
        ),
    )
    _write(out / "bubble.csv", sol.table.to_csv(), outputs)
    _write(out / "bubble_report.json", dumps(report), outputs)
    return EXIT_OK


def cmd_green(args, out: Path, outputs: dict, inputs: dict) -> int:
    from .greenfn import GreenEvaluator, near_boundary_asymptotics, parse_domain

    dom = parse_domain(Path(args.domain))
    inputs[str(args.domain)] = _sha256(args.domain)
    ev = GreenEvaluator(dom, backend=args.backend, n_charges=args.n_charges)
    report = {"diagnostics": ev.diagnostics()}
    if args.x is not None:
        x = args.x
        if not dom.contains(x):
            raise UsageError("--x must be an interior point")
        report["robin"] = float(ev.robin(x))
        report["robin_gradient"] = ev.robin_gradient(x)
        if args.y is not None:
            y = args.y
            if not dom.contains(y):
                raise UsageError("--y must be an interior point")
            report["regular_part"] = float(ev.regular_part(x, y))
            if np.linalg.norm(x - y) > 0:
                report["green"] = float(ev.green(x, y))
                report["grad_green_x"] = ev.grad_green(x, y)
                if dom.distance_to_boundary(y) <= 0.1 * dom.diameter:
                    report["near_boundary"] = near_boundary_asymptotics(ev, x, y)
    _write(out / "green.json", dumps(report), outputs)
    return EXIT_OK


def _field(spec: str, inputs: dict):
    from .config import WeightField

    if spec == "const":
        return WeightField.constant(1.0)
    if spec.startswith("const="):
        try:
            return WeightField.constant(float(spec.split("=", 1)[1]))
        except ValueError as exc:
            raise UsageError(f"bad constant weight: {exc}") from None
    path = Path(spec)
    if not path.exists():
        raise UsageError(f"field must be const, const=C or an expression file; {spec!r} not found")
    inputs[spec] = _sha256(path)
    lines = [ln.split("#", 1)[0].strip() for ln in path.read_text().splitlines()]
    expr = " ".join(ln for ln in lines if ln)
    try:
        return WeightField.from_expression(expr)
    except Exception as exc:
        raise UsageError(f"{spec}: cannot parse weight expression: {exc}") from None


def cmd_locate(args, out: Path, outputs: dict, inputs: dict) -> int:
    from .config import (
        Configuration, SolveOptions, random_configuration, solve_multistart,
    )
    from .greenfn import GreenEvaluator, parse_domain

    dom = parse_domain(Path(args.domain))
    inputs[str(args.domain)] = _sha256(args.domain)
    field = _field(args.field, inputs)
    ev = GreenEvaluator(dom)
    rng = np.random.default_rng(args.seed)
    if args.init == "random":
        inits = [random_configuration(dom, args.n, rng) for _ in range(args.starts)]
    else:
        inputs[args.init] = _sha256(args.init)
        try:
            init = Configuration.from_json(Path(args.init))
        except (KeyError, ValueError) as exc:
            raise UsageError(f"{args.init}: {exc}") from None
        if len(init) != args.n:
            raise UsageError(f"--n {args.n} but the init file has {len(init)} points")
        inits = [init]
    try:
        field.validate(inits[0].points)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    opts = SolveOptions(tol=args.tol)
    results = solve_multistart(inits, field, ev, opts, threads=_threads(args))
    solved = [r for r in results if not isinstance(r, Exception)]
    if not solved:
        exc = results[0]
        report = {"status": "non_convergence", "message": str(exc),
                  "best_residual": exc.best_residual}
        if exc.best is not None:
            report["best"] = exc.best.to_dict()
        _write(out / "locate_report.json", dumps(report), outputs)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONV
    cfg, rep = min(solved, key=lambda r: r[1].norm)
    _write(out / "configuration.json", cfg.to_json(), outputs)
    report = {"status": "converged", "n_starts": len(inits), "n_converged": len(solved),
              "residual": rep.to_dict(), "field": field.description}
    _write(out / "locate_report.json", dumps(report), outputs)
    return EXIT_OK


def cmd_branch(args, out: Path, outputs: dict, inputs: dict) -> int:
    from .radial import trace_branch

    gs = args.gammas
    if any(b <= a for a, b in zip(gs, gs[1:])):
        raise UsageError("gammas must be strictly increasing")
    if args.f0 <= 0 or args.radius <= 0:
        raise UsageError("--f0 and --radius must be positive")
    tab = trace_branch(gs, args.tol, args.radius, args.f0, threads=_threads(args))
    _write(out / "branch.csv", tab.to_csv(), outputs)
    if tab.failures:
        for g, msg in tab.failures:
            print(f"warning: gamma={g:g} failed: {msg}", file=sys.stderr)
        return EXIT_NUMERICS
    return EXIT_OK


def cmd_verify(args, out: Path, outputs: dict, inputs: dict) -> int:
    from .acceptance import run_suite

    results = run_suite(args.suite)
    for r in results:
        print(r.line() + (f"  {r.detail}" if r.detail else ""))
    payload = {
        "suite": args.suite,
        "passed": all(r.passed for r in results),
        "checks": [r.to_dict() for r in results],
    }
    _write(out / "verify.json", dumps(payload), outputs)
    return EXIT_OK if payload["passed"] else EXIT_ACCEPT


COMMANDS = {
    "bubble": cmd_bubble,
    "green": cmd_green,
    "locate": cmd_locate,
    "branch": cmd_branch,
    "verify": cmd_verify,
}


# -- parser --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tmbumps", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, threads=False):
        sp.add_argument("--out", type=Path, default=Path("."), help="output directory")
        if threads:
            sp.add_argument("--threads", type=int, default=1,
                            help="worker threads (TMBUMPS_THREADS overrides)")

    b = sub.add_parser("bubble", help="integrate the standard bubble")
    b.add_argument("--gamma", type=float, required=True)
    b.add_argument("--kappa", type=float, default=1.0)
    b.add_argument("--t-max", type=float, default=None, help="default gamma^2")
    b.add_argument("--tol", type=float, default=1e-10)
    common(b)

    g = sub.add_parser("green", help="evaluate the Green function of a domain")
    g.add_argument("--domain", type=Path, required=True)
    g.add_argument("--x", type=_point)
    g.add_argument("--y", type=_point)
    g.add_argument("--backend", default="auto",
                   choices=["auto", "closed_form_disk", "harmonic_collocation"])
    g.add_argument("--n-charges", type=int, default=128)
    common(g)

    loc = sub.add_parser("locate", help="solve the location system")
    loc.add_argument("--domain", type=Path, required=True)
    loc.add_argument("--field", default="const", help="const, const=C or an expression file")
    loc.add_argument("--n", type=int, default=1)
    loc.add_argument("--init", default="random", help="configuration JSON or 'random'")
    loc.add_argument("--seed", type=int, default=0)
    loc.add_argument("--starts", type=int, default=1, help="random starts")
    loc.add_argument("--tol", type=float, default=1e-10)
    common(loc, threads=True)

    br = sub.add_parser("branch", help="trace the radial branch on a disk")
    br.add_argument("--gammas", type=_gammas, default=_gammas("4:8:1"))
    br.add_argument("--tol", type=float, default=1e-12)
    br.add_argument("--radius", type=float, default=1.0)
    br.add_argument("--f0", type=float, default=1.0, help="constant weight")
    common(br, threads=True)

    v = sub.add_parser("verify", help="run acceptance checks")
    v.add_argument("--suite", default="all",
                   choices=["all", "bubble", "green", "config", "quantization", "bubble_vs_solution"])
    common(v)

    r = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    r.add_argument("manifest", type=Path)
    return p


def _flags(args) -> dict:
    out = {}
    for k, v in vars(args).items():
        if k == "command":
            continue
        if isinstance(v, Path):
            v = str(v)
        elif isinstance(v, np.ndarray):
            v = v.tolist()
        out[k] = v
    return out


def run(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    if args.command == "replay":
        try:
            manifest = json.loads(args.manifest.read_text())
            return run(manifest["argv"])
        except (OSError, ValueError, KeyError) as exc:
            print(f"error: cannot replay {args.manifest}: {exc}", file=sys.stderr)
            return EXIT_USAGE
    out = args.out
    outputs: dict = {}
    inputs: dict = {}
    try:
        if hasattr(args, "n") and args.n < 1:
            raise UsageError("--n must be >= 1")
        code = COMMANDS[args.command](args, out, outputs, inputs)
    except (UsageError, DomainParseError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NonConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONV
    except (NumericalError, TmbumpsError, FloatingPointError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICS
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    manifest = {
        "command": args.command,
        "argv": list(argv),
        "flags": _flags(args),
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "inputs": inputs,
        "outputs": outputs,
        "exit_code": code,
    }
    _write(out / f"{args.command}.manifest.json", dumps(manifest), {})
    return code


def main(argv=None) -> int:
    return run(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
