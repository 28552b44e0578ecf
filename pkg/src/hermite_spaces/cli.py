"""Command-line entry point.

Every subcommand validates its whole configuration first, runs the
corresponding library operation and writes one JSON document (to ``--out``
atomically, else to stdout).  Exit codes: 0 success, 2 invalid input,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .embedding import EmbeddingParams, lower_bound_balls, lower_bound_tiles, necessity_probe, sufficiency_probe
from .errors import ConvergenceError, HermiteSpacesError, ResourceError, ValidationError
from .frames import (
    FrameSequence,
    analyze,
    peetre_probe,
    plancherel_polya_probe,
    synthesize,
    tile_grid_function,
)
from .hermite_core import HermiteExpansion, random_expansions
from .multipliers import (
    DEFAULT_C_FLOOR,
    MultiplierSystem,
    build_system,
    dual_system,
    kernel_decay_diagnostic,
    orthogonality_check,
)
from .norms import SpaceParams, TileMasses, function_norm, sequence_norm
from .tiles import DEFAULT_DELTA_STAR, build_grid, verify_geometry
from .weights import Weight, ahp_certificate, fefferman_stein_probe

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3
DEFAULTS = {
    "n": 1,
    "J": 3,
    "delta_star": DEFAULT_DELTA_STAR,
    "system": "partition",
    "c_floor": DEFAULT_C_FLOOR,
    "seed": 0,
    "threads": os.cpu_count() or 1,
    "tol_quadrature": 1e-6,
    "tol_reconstruction": 1e-8,
}
MAX_J = 6


# ---------------------------------------------------------------------------
# deterministic JSON


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def _encode(obj, indent: int, level: int = 0) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_encode(v, indent) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, float):
        if math.isnan(obj):
            return "null"
        if math.isinf(obj):
            return '"inf"' if obj > 0 else '"-inf"'
        return format(obj, ".17g")
    return json.dumps(obj)


def dumps(obj) -> str:
    """JSON with floats at 17 significant digits, ``inf`` as a string and NaN as null."""
    return _encode(_plain(obj), 2) + "\n"


def write_atomic(path: str, text: str):
    """Write ``text`` to a temporary file next to ``path`` and rename it into place."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_json(path: str, what: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read {what} file {path!r}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{what} file {path!r} is not valid JSON: {exc}") from None


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    """Raise instead of exiting so ``run`` can map the failure to an exit code."""

    def error(self, message):
        raise _UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


class _UsageError(Exception):
    pass


def _common(p: argparse.ArgumentParser):
    g = p.add_argument_group("global options")
    g.add_argument("--out", help="output JSON path (default: stdout)")
    g.add_argument("--seed", type=int, default=DEFAULTS["seed"])
    g.add_argument("--threads", type=int, default=DEFAULTS["threads"], help="worker count; results do not depend on it")
    g.add_argument("--tol-quadrature", type=float, default=DEFAULTS["tol_quadrature"])
    g.add_argument("--tol-reconstruction", type=float, default=DEFAULTS["tol_reconstruction"])


def _grid_args(p, J=True):
    p.add_argument("--n", type=int, default=DEFAULTS["n"])
    if J:
        p.add_argument("--J", type=int, default=DEFAULTS["J"])
    p.add_argument("--delta-star", type=float, default=DEFAULTS["delta_star"])


def _system_args(p):
    p.add_argument("--system", choices=("partition", "tight"), default=DEFAULTS["system"])
    p.add_argument("--c-floor", type=float, default=DEFAULTS["c_floor"])
    p.add_argument("--sharpness", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hermite-spaces", description="Hermite needlet frames and weighted Besov/Triebel-Lizorkin norms.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("grid", help="build the tile grid")
    _grid_args(p)
    p.add_argument("--subdivide", action="store_true")
    _common(p)

    p = sub.add_parser("analyze", help="frame coefficients of an expansion")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--J", type=int, default=DEFAULTS["J"])
    p.add_argument("--delta-star", type=float, default=DEFAULTS["delta_star"])
    _system_args(p)
    _common(p)

    p = sub.add_parser("synthesize", help="expansion from frame coefficients")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--N", type=int, default=None, help="output degree (default: smallest exact)")
    _system_args(p)
    _common(p)

    p = sub.add_parser("norm", help="function or sequence norm")
    p.add_argument("--kind", choices=("besov", "triebel"), required=True)
    p.add_argument("--space", required=True, help='e.g. "a=0.5,p=2,q=2"')
    p.add_argument("--weight", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--J", type=int, default=None, help="expansion level (default: smallest J with degree <= 4^J)")
    _system_args(p)
    _common(p)

    p = sub.add_parser("weight", help="weight utilities")
    wsub = p.add_subparsers(dest="action", parser_class=_Parser, required=True)
    q = wsub.add_parser("certify", help="sampled A_p^eta certificate")
    q.add_argument("--weight", required=True)
    q.add_argument("--p", type=float, required=True)
    q.add_argument("--eta", type=float, default=0.0)
    q.add_argument("--n", type=int, default=DEFAULTS["n"])
    q.add_argument("--m", "--scan-depth", dest="m", type=int, default=6, help="smallest half-side 2^-m")
    q.add_argument("--M", type=int, default=4, help="largest half-side 2^M")
    _common(q)

    p = sub.add_parser("embed", help="embedding probes")
    esub = p.add_subparsers(dest="action", parser_class=_Parser, required=True)
    q = esub.add_parser("check", help="lower-bound scans plus necessity and sufficiency probes")
    q.add_argument("--source", required=True)
    q.add_argument("--target", required=True)
    q.add_argument("--gamma", type=float, default=None, help="order of the lower bound (default: n)")
    q.add_argument("--scale", choices=("b", "f"), default="b")
    q.add_argument("--weight", required=True)
    _grid_args(q, J=False)
    q.add_argument("--J", type=int, default=4)
    q.add_argument("--trials", type=int, default=500)
    q.add_argument("--report", help="alias of --out")
    q.add_argument("--histogram-csv", help="also export the ratio histogram as CSV")
    _common(q)

    p = sub.add_parser("diagnose", help="numerical diagnostics")
    dsub = p.add_subparsers(dest="probe", parser_class=_Parser, required=True)
    q = dsub.add_parser("kernel-decay")
    q.add_argument("--j", type=int, required=True)
    q.add_argument("--N", type=int, default=6)
    q.add_argument("--eps", type=float, default=5.0)
    q.add_argument("--points", type=int, default=200)
    _system_args(q)
    _common(q)
    q = dsub.add_parser("geometry")
    _grid_args(q)
    _common(q)
    q = dsub.add_parser("orthogonality")
    q.add_argument("--j", type=int, required=True)
    q.add_argument("--k", type=int, required=True)
    q.add_argument("--n", type=int, default=DEFAULTS["n"])
    _system_args(q)
    _common(q)
    q = dsub.add_parser("fefferman-stein")
    _grid_args(q, J=False)
    q.add_argument("--j", type=int, default=2, help="tile level carrying the random functions")
    q.add_argument("--count", type=int, default=4)
    q.add_argument("--p", type=float, required=True)
    q.add_argument("--q", type=float, required=True)
    q.add_argument("--s", type=float, required=True)
    q.add_argument("--theta", type=float, default=1.0)
    q.add_argument("--weight", required=True)
    q.add_argument("--r-w", type=float, default=None)
    _common(q)
    q = dsub.add_parser("peetre")
    _grid_args(q, J=False)
    q.add_argument("--j", type=int, default=2)
    q.add_argument("--sigma", type=float, required=True)
    q.add_argument("--s", type=float, required=True)
    q.add_argument("--theta", type=float, default=1.0)
    _common(q)
    q = dsub.add_parser("plancherel-polya")
    _grid_args(q, J=False)
    q.add_argument("--j", type=int, default=2)
    q.add_argument("--p", type=float, default=2.0)
    q.add_argument("--weight", required=True)
    _common(q)
    return parser


# ---------------------------------------------------------------------------
# validation


def validate(args) -> list[str]:
    """All configuration problems at once (empty when valid)."""
    errs = []
    a = vars(args)
    if a.get("n") is not None and not 1 <= a["n"] <= 3:
        errs.append(f"--n must be 1, 2 or 3, got {a['n']}")
    if a.get("J") is not None and not 0 <= a["J"] <= MAX_J:
        errs.append(f"--J must lie in 0..{MAX_J}, got {a['J']}")
    if a.get("delta_star") is not None and not 0 < a["delta_star"] < 1:
        errs.append(f"--delta-star must lie in (0, 1), got {a['delta_star']}")
    if a.get("c_floor") is not None and not 0 < a["c_floor"] < 0.5:
        errs.append(f"--c-floor must lie in (0, 1/2), got {a['c_floor']}")
    if a.get("threads") is not None and a["threads"] < 1:
        errs.append("--threads must be positive")
    for key in ("tol_quadrature", "tol_reconstruction"):
        if a.get(key) is not None and not a[key] > 0:
            errs.append(f"--{key.replace('_', '-')} must be positive")
    if a.get("seed") is not None and a["seed"] < 0:
        errs.append("--seed must be nonnegative")
    for key in ("j", "k"):
        if a.get(key) is not None and not 0 <= a[key] <= MAX_J + 2:
            errs.append(f"--{key} must lie in 0..{MAX_J + 2}")
    if a.get("trials") is not None and a["trials"] < 1:
        errs.append("--trials must be positive")
    if a.get("count") is not None and a["count"] < 1:
        errs.append("--count must be positive")
    if a.get("points") is not None and a["points"] < 2:
        errs.append("--points must be at least 2")
    for key in ("input", "weight"):
        path = a.get(key)
        if path is not None and not os.path.isfile(path):
            errs.append(f"--{'in' if key == 'input' else key} file {path!r} does not exist")
    for key in ("out", "report", "histogram_csv"):
        path = a.get(key)
        if path is not None and not os.path.isdir(os.path.dirname(os.path.abspath(path))):
            errs.append(f"--{key.replace('_', '-')}: directory of {path!r} does not exist")
    return errs


def _config(args) -> dict:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("out", "report", "histogram_csv")}
    return {"version": __version__, "defaults": DEFAULTS, "arguments": cfg}


def _systems(args) -> tuple[MultiplierSystem, MultiplierSystem]:
    phi = build_system(args.system, args.c_floor, args.sharpness)
    psi = phi if args.system == "tight" else dual_system(phi)
    return phi, psi


def _weight(path) -> Weight:
    return Weight.from_json_dict(_read_json(path, "weight"))


def _load_input(path):
    data = _read_json(path, "input")
    if isinstance(data, dict) and "entries" in data:
        return FrameSequence.from_json_dict(data)
    if isinstance(data, dict) and "coeffs" in data:
        return HermiteExpansion.from_json_dict(data)
    raise ValidationError(f"{path!r} is neither an expansion ('coeffs') nor a frame sequence ('entries')")


def _smallest_J(f: HermiteExpansion) -> int:
    d, J = f.effective_degree(), 0
    while 4**J < d:
        J += 1
    return J


# ---------------------------------------------------------------------------
# commands


def cmd_grid(args):
    grid = build_grid(args.n, args.delta_star, args.J, args.subdivide)
    out = grid.to_json_dict()
    out["N"] = [ax.N for ax in grid.axes]
    out["config"] = _config(args)
    return out


def cmd_analyze(args):
    f = _load_input(args.input)
    if not isinstance(f, HermiteExpansion):
        raise ValidationError("analyze needs an expansion as input")
    phi, psi = _systems(args)
    grid = build_grid(f.n, args.delta_star, args.J + 2)
    s = analyze(phi, grid, f, args.J)
    back = synthesize(psi, grid, s, f.N)
    err = (back - f).norm() / max(f.norm(), np.finfo(float).tiny)
    if err > args.tol_reconstruction:
        raise ConvergenceError(f"reconstruction error {err:.3e} exceeds {args.tol_reconstruction:.3e}")
    return s.to_json_dict()


def cmd_synthesize(args):
    s = _load_input(args.input)
    if not isinstance(s, FrameSequence):
        raise ValidationError("synthesize needs a frame sequence as input")
    _, psi = _systems(args)
    grid = build_grid(s.n, s.delta_star, s.J)
    return synthesize(psi, grid, s, args.N).to_json_dict()


def cmd_norm(args):
    params = SpaceParams.parse(args.space, args.kind)
    w = _weight(args.weight)
    obj = _load_input(args.input)
    out = {}
    if isinstance(obj, HermiteExpansion):
        phi, _ = _systems(args)
        J = _smallest_J(obj) if args.J is None else args.J
        res = function_norm(phi, obj, params, w, J)
        fine = function_norm(phi, obj, params, w, J, refine=1)
        rel = abs(fine.value - res.value) / max(res.value, np.finfo(float).tiny)
        if rel > args.tol_quadrature:
            raise ConvergenceError(f"quadrature refinement changed the norm by {rel:.3e} > {args.tol_quadrature:.3e}")
        out = res.to_json_dict()
        out["input"] = "expansion"
        out["J"] = J
        out["refinement_change"] = rel
    else:
        grid = build_grid(obj.n, obj.delta_star, obj.J)
        out = sequence_norm(obj, params, w, grid).to_json_dict()
        out["input"] = "sequence"
    out["weight"] = w.to_json_dict()
    out["config"] = _config(args)
    return out


def cmd_weight(args):
    w = _weight(args.weight)
    rep = ahp_certificate(w, args.p, args.eta, args.n, args.m, args.M)
    out = rep.to_json_dict()
    out["weight"] = w.to_json_dict()
    out["config"] = _config(args)
    return out


def cmd_embed(args):
    gamma = float(args.n) if args.gamma is None else args.gamma
    params = EmbeddingParams.parse(args.source, args.target, gamma, args.scale)
    w = _weight(args.weight)
    grid = build_grid(args.n, args.delta_star, args.J)
    masses = TileMasses(w, grid)
    tiles = lower_bound_tiles(w, grid, gamma, masses=masses)
    balls = lower_bound_balls(w, gamma, grid)
    nec = necessity_probe(params, w, grid, masses=masses)
    suf = sufficiency_probe(params, w, grid, args.trials, args.seed, masses=masses)
    # membership evidence only; the certificate does not prove the hypothesis
    cert = ahp_certificate(w, 2.0, 1.0, args.n, 4, 3)
    if args.histogram_csv:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["log10_lo", "log10_hi", "count"])
        h = suf.histogram
        for lo, hi, c in zip(h["log10_edges"][:-1], h["log10_edges"][1:], h["counts"]):
            wr.writerow([format(lo, ".17g"), format(hi, ".17g"), c])
        write_atomic(args.histogram_csv, buf.getvalue())
    return {
        "params": params.to_json_dict(),
        "weight": w.to_json_dict(),
        "verdicts": {
            "lower_bound_tiles": tiles.verdict,
            "lower_bound_balls": balls.verdict,
            "lower_bound_agree": tiles.verdict == balls.verdict,
            "necessity": nec.verdict,
        },
        "lower_bound_tiles": tiles.to_json_dict(),
        "lower_bound_balls": balls.to_json_dict(),
        "necessity": nec.to_json_dict(),
        "sufficiency": suf.to_json_dict(),
        "ahp_evidence": cert.to_json_dict(),
        "config": _config(args),
    }


def _verdict(ok: bool) -> str:
    return "PASS" if ok else "FAIL"


def cmd_diagnose(args):
    probe = args.probe
    out = {"probe": probe}
    if probe == "kernel-decay":
        phi, _ = _systems(args)
        rep = kernel_decay_diagnostic(phi, args.j, args.N, args.eps, args.points)
        out.update(rep.to_json_dict())
        out["verdict"] = _verdict(math.isfinite(rep.C) and rep.max_violation <= 1e-9)
    elif probe == "geometry":
        rep = verify_geometry(build_grid(args.n, args.delta_star, args.J))
        out.update(rep.to_json_dict())
    elif probe == "orthogonality":
        phi, psi = _systems(args)
        val = orthogonality_check(phi, psi, args.j, args.k, args.n)
        out.update({"j": args.j, "k": args.k, "max_composed_kernel": val})
        out["verdict"] = _verdict(val == 0.0) if abs(args.j - args.k) >= 3 else "N/A"
    elif probe == "fefferman-stein":
        w = _weight(args.weight)
        grid = build_grid(args.n, args.delta_star, args.j)
        rng = np.random.default_rng(args.seed)
        fam = [tile_grid_function(grid, args.j, rng.lognormal(0.0, 1.0, grid.tile_count(args.j))) for _ in range(args.count)]
        ratio = fefferman_stein_probe(fam, args.p, args.q, args.s, args.theta, w, args.r_w)
        out.update({"ratio": ratio, "j": args.j, "count": args.count})
    elif probe == "peetre":
        grid = build_grid(args.n, args.delta_star, args.j)
        a = np.random.default_rng(args.seed).lognormal(0.0, 1.0, grid.tile_count(args.j))
        rep = peetre_probe(grid, args.j, a, args.sigma, args.s, args.theta)
        out.update({"j": args.j, "max_ratio": rep.max_ratio, "argmax": rep.argmax})
    else:
        w = _weight(args.weight)
        grid = build_grid(args.n, args.delta_star, args.j)
        (g,) = random_expansions(args.n, 4**args.j, 1, args.seed)
        ratio = plancherel_polya_probe(grid, g, args.j, args.p, w)
        out.update({"j": args.j, "p": args.p, "ratio": ratio})
    out["config"] = _config(args)
    return out


COMMANDS = {
    "grid": cmd_grid,
    "analyze": cmd_analyze,
    "synthesize": cmd_synthesize,
    "norm": cmd_norm,
    "weight": cmd_weight,
    "embed": cmd_embed,
    "diagnose": cmd_diagnose,
}


def run(argv=None, stdout=None, stderr=None) -> int:
    """Parse ``argv``, execute the subcommand and return the exit code."""
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        stderr.write(str(exc))
        return EXIT_INVALID
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    errs = validate(args)
    if errs:
        stderr.write("invalid configuration:\n" + "".join(f"  - {e}\n" for e in errs))
        return EXIT_INVALID
    try:
        with np.errstate(all="ignore"):
            result = COMMANDS[args.command](args)
        text = dumps(result)
    except (ValidationError, ResourceError) as exc:
        stderr.write(f"error: {exc}\n")
        return EXIT_INVALID
    except HermiteSpacesError as exc:
        stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERICAL
    out = getattr(args, "report", None) or args.out
    if out:
        write_atomic(out, text)
    else:
        stdout.write(text)
    return EXIT_OK


def main():
    sys.exit(run())


__all__ = ["DEFAULTS", "EXIT_INVALID", "EXIT_NUMERICAL", "EXIT_OK", "build_parser", "dumps", "main", "run", "validate", "write_atomic"]
