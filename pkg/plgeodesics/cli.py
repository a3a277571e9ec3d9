"""Command-line driver, ``python -m plgeodesics <command>``.

Every run writes a RunManifest (``run_manifest.json`` next to the first
output, or under PLGEO_OUTPUT_DIR, or the working directory). Exit codes:
0 success, 2 invalid input, 3 numerical abort.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Any, Callable

import colorama
import numpy as np
import pydantic

from . import __version__, config
from .curve import Covector, Polygon, VertexField
from .documents import (
    CurveDocument,
    RunManifest,
    compute_hash,
    from_value,
    load_document,
    read_trajectory_csv,
    render_frames,
    save_document,
    validate_document,
    validate_landmarks,
    write_kernel_csv,
    write_manifest,
    write_trajectory_csv,
)
from .dynamics import (
    HamiltonianState,
    IntegratorConfig,
    LagrangianState,
    ShootingConfig,
    Trajectory,
    integrate_hamiltonian,
    integrate_lagrangian,
    log_map,
)
from .errors import InvalidInput, NumericalAbort
from .generators import (
    gen_diamond,
    gen_fourier_curve,
    gen_regular_polygon,
    random_field,
    random_polygon,
    unit_square,
)
from .landmarks import elastic_kernel_weights, lddmm_hamiltonian_flow, lddmm_kernel_matrix
from .metric import extended_cometric_matrix, metric, metric_gram_weights, pseudo_inverse
from .srvt import SqrtVelocityPair, phi, pullback_isometry_defect, random_stiefel_pair


CSV_HELP = (
    "CSV columns: t, c{i}_{k} for vertex i and coordinate k (1-based), then the diagnostics "
    "energy, length, min_edge, vertex_sum, momentum_sum_{k} (landmark flows report min_distance "
    "instead of length and min_edge)."
)


class RunRecord:
    """Inputs, outputs and outcome of one command, collected for the manifest."""

    def __init__(self, command: str, settings: dict[str, Any]):
        self.command = command
        self.settings = settings
        self.input_hashes: dict[str, str] = {}
        self.outputs: list[Path] = []
        self.abort_reason: str | None = None

    def document(self, path: str) -> CurveDocument:
        self.input_hashes[path] = compute_hash(path)
        return load_document(path)

    def input_file(self, path: str) -> Path:
        self.input_hashes[path] = compute_hash(path)
        return Path(path)

    def output(self, path: str | Path) -> Path:
        resolved = resolve_output(path)
        self.outputs.append(resolved)
        return resolved

    def manifest_path(self) -> Path:
        if self.outputs:
            first = self.outputs[0]
            return (first if first.suffix == "" else first.parent) / config.MANIFEST_NAME
        return Path(config.OUTPUT_DIR or ".") / config.MANIFEST_NAME


def resolve_output(path: str | Path) -> Path:
    """Relative paths are placed under PLGEO_OUTPUT_DIR when it is set."""
    path = Path(path)
    if config.OUTPUT_DIR and not path.is_absolute():
        return Path(config.OUTPUT_DIR) / path
    return path


def _status(symbol: str, message: str, color: str = "") -> None:
    print(color + f"{symbol} {message}" + colorama.Style.RESET_ALL, file=sys.stderr)


def _integrator(args: argparse.Namespace) -> IntegratorConfig:
    return IntegratorConfig(dt=args.dt, t_end=args.t_end, sample_stride=args.stride, edge_guard=args.edge_guard)


def _shooting(args: argparse.Namespace) -> ShootingConfig:
    return ShootingConfig(
        max_iter=args.max_iter, tol=args.tol, integrator=IntegratorConfig(dt=args.dt, edge_guard=args.edge_guard)
    )


def _as(value: Any, kind: type, path: str) -> Any:
    if not isinstance(value, kind):
        raise InvalidInput(f"{path} holds a {type(value).__name__}, expected a {kind.__name__}")
    return value


def _polygon(doc: CurveDocument, path: str, recenter: bool) -> Polygon:
    c = _as(validate_document(doc), Polygon, path)
    return c.centered() if recenter else Polygon(c.vertices, mean_zero=True)


def _finish_trajectory(traj: Trajectory, out: Path) -> int:
    write_trajectory_csv(traj, out)
    if traj.aborted:
        _status("⚠️", f"Integration aborted: {traj.abort_reason}", colorama.Fore.YELLOW)
        raise traj.abort
    _status("✅", f"Wrote {len(traj)} samples to {out}", colorama.Fore.GREEN)
    return config.EXIT_OK


def cmd_exp(args: argparse.Namespace, run: RunRecord) -> int:
    c = _polygon(run.document(args.input), args.input, args.recenter)
    h = _as(validate_document(run.document(args.vel)), VertexField, args.vel)
    v = VertexField.projected(h.values) if args.recenter else VertexField(h.values, mean_zero=True)
    traj = integrate_lagrangian(LagrangianState(c, v), _integrator(args))
    return _finish_trajectory(traj, run.output(args.out))


def cmd_flow_hamiltonian(args: argparse.Namespace, run: RunRecord) -> int:
    c = _polygon(run.document(args.input), args.input, args.recenter)
    a = _as(validate_document(run.document(args.mom)), Covector, args.mom)
    traj = integrate_hamiltonian(HamiltonianState(c, a), _integrator(args))
    return _finish_trajectory(traj, run.output(args.out))


def cmd_flow_lddmm(args: argparse.Namespace, run: RunRecord) -> int:
    q = validate_landmarks(run.document(args.input), args.sigma)
    p = _as(validate_document(run.document(args.mom)), Covector, args.mom)
    traj = lddmm_hamiltonian_flow(q, p, _integrator(args))
    return _finish_trajectory(traj, run.output(args.out))


def cmd_log(args: argparse.Namespace, run: RunRecord) -> int:
    c0 = _polygon(run.document(args.source), args.source, args.recenter)
    c1 = _polygon(run.document(args.target), args.target, args.recenter)
    result = log_map(c0, c1, _shooting(args))
    out = run.output(args.out)
    metadata = {"iterations": result.iterations, "residual": result.residual}
    save_document(from_value(result.velocity, metadata), out)
    _status("✅", f"Shooting converged in {result.iterations} iterations (residual {result.residual:.3e})", colorama.Fore.GREEN)
    return config.EXIT_OK


def cmd_dist(args: argparse.Namespace, run: RunRecord) -> int:
    c0 = _polygon(run.document(args.source), args.source, args.recenter)
    c1 = _polygon(run.document(args.target), args.target, args.recenter)
    result = log_map(c0, c1, _shooting(args))
    distance = float(np.sqrt(max(metric(c0, result.velocity, result.velocity), 0.0)))
    print(repr(distance))
    if args.out:
        out = run.output(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps({"distance": distance, "iterations": result.iterations}, indent=2) + "\n")
    return config.EXIT_OK


def kernel_paths(out: Path, kind: str) -> dict[str, Path]:
    if kind != "both":
        return {kind: out}
    return {name: out.with_name(f"{out.stem}_{name}{out.suffix}") for name in ("elastic", "gaussian")}


def cmd_kernel(args: argparse.Namespace, run: RunRecord) -> int:
    doc = run.document(args.input)
    c = _as(validate_document(doc), Polygon, args.input)
    for name, path in kernel_paths(Path(args.out), args.kind).items():
        if name == "elastic":
            weights = elastic_kernel_weights(c.vertices)
        else:
            weights = lddmm_kernel_matrix(validate_landmarks(doc, args.sigma)).weights
        write_kernel_csv(weights, run.output(path))
        _status("✅", f"Wrote {name} kernel weights to {path}", colorama.Fore.GREEN)
    if args.check:
        closed_form = extended_cometric_matrix(c).weights
        oracle = pseudo_inverse(metric_gram_weights(c))
        error = float(np.abs(closed_form - oracle).max() / np.abs(oracle).max())
        print(json.dumps({"closed_form_relative_error": error}))
    return config.EXIT_OK


def cmd_srvt(args: argparse.Namespace, run: RunRecord) -> int:
    s = _as(validate_document(run.document(args.input)), SqrtVelocityPair, args.input)
    out = run.output(args.out)
    save_document(from_value(phi(s)), out)
    _status("✅", f"Wrote polygon to {out}", colorama.Fore.GREEN)
    if args.tangent:
        doc = run.document(args.tangent)
        if doc.grid.d != 2:
            raise InvalidInput(f"{args.tangent} must hold (de, df) rows")
        tangent = doc.array()
        report = pullback_isometry_defect(s, (tangent[:, 0], tangent[:, 1]))
        print(json.dumps({**report._asdict(), "isometry_ratio": report.isometry_ratio}))
    return config.EXIT_OK


def cmd_validate(args: argparse.Namespace, run: RunRecord) -> int:
    doc = run.document(args.input)
    validate_document(doc)
    _status("✅", f"{args.input}: valid {doc.role} document (n={doc.grid.n}, d={doc.grid.d})", colorama.Fore.GREEN)
    return config.EXIT_OK


def _coefficients(raw: str) -> Any:
    path = Path(raw)
    return json.loads(path.read_text(encoding="utf-8") if path.exists() else raw)


def cmd_gen(args: argparse.Namespace, run: RunRecord) -> int:
    rng = np.random.default_rng(args.seed)
    velocity = None
    if args.kind == "diamond":
        value, velocity, _ = gen_diamond(args.t)
    elif args.kind == "square":
        value = unit_square()
    elif args.kind == "regular":
        value = gen_regular_polygon(args.n, args.radius, args.d)
    elif args.kind == "fourier":
        if not args.coeffs:
            raise InvalidInput("gen fourier needs --coeffs")
        value = gen_fourier_curve(_coefficients(args.coeffs), args.n)
    elif args.kind == "random":
        value = random_polygon(rng, args.n, args.d)
        velocity = random_field(rng, args.n, args.d, args.scale)
    else:
        value = random_stiefel_pair(rng, args.n, args.radius)
    out = run.output(args.out)
    save_document(from_value(value, {"generator": args.kind}), out)
    if args.vel_out:
        if velocity is None:
            raise InvalidInput(f"gen {args.kind} has no velocity to write")
        save_document(from_value(velocity, {"generator": args.kind}), run.output(args.vel_out))
    _status("✅", f"Wrote {args.kind} fixture to {out}", colorama.Fore.GREEN)
    return config.EXIT_OK


def cmd_render(args: argparse.Namespace, run: RunRecord) -> int:
    times, positions = read_trajectory_csv(run.input_file(args.traj))
    out = run.output(args.out)
    paths = render_frames(times, positions, out, args.workers)
    _status("✅", f"Rendered {len(paths)} frames into {out}", colorama.Fore.GREEN)
    return config.EXIT_OK


def _add_integrator_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dt", type=float, default=config.DEFAULT_DT, help="RK4 step size")
    parser.add_argument("--t-end", type=float, default=config.DEFAULT_T_END, help="integration horizon")
    parser.add_argument("--stride", type=int, default=1, help="store every STRIDE-th step (the last step is always stored)")
    parser.add_argument("--edge-guard", type=float, default=config.DEFAULT_EDGE_GUARD, help="relative edge-length guard")


def _add_shooting_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--from", dest="source", required=True, help="start polygon document")
    parser.add_argument("--to", dest="target", required=True, help="end polygon document")
    parser.add_argument("--dt", type=float, default=config.DEFAULT_DT)
    parser.add_argument("--edge-guard", type=float, default=config.DEFAULT_EDGE_GUARD)
    parser.add_argument("--max-iter", type=int, default=config.SHOOTING_MAX_ITER)
    parser.add_argument("--tol", type=float, default=config.SHOOTING_TOL)
    parser.add_argument("--recenter", action="store_true", help="translate polygons to mean zero first")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plgeodesics", description="Elastic geodesics of polygonal curves")
    parser.add_argument("--verbose", action="store_true", help="debug logging from the library")
    parser.add_argument("--manifest", help="where to write the run manifest")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    exp = commands.add_parser("exp", help="initial-value geodesic", epilog=CSV_HELP)
    exp.add_argument("--in", dest="input", required=True, help="polygon document")
    exp.add_argument("--vel", required=True, help="tangent document with the initial velocity")
    exp.add_argument("--out", required=True, help="trajectory CSV")
    exp.add_argument("--recenter", action="store_true", help="project polygon and velocity to mean zero")
    _add_integrator_options(exp)
    exp.set_defaults(handler=cmd_exp)

    log = commands.add_parser("log", help="boundary-value geodesic by shooting")
    _add_shooting_options(log)
    log.add_argument("--out", required=True, help="tangent document with the initial velocity")
    log.set_defaults(handler=cmd_log)

    dist = commands.add_parser("dist", help="geodesic distance between two polygons")
    _add_shooting_options(dist)
    dist.add_argument("--out", help="optional JSON report")
    dist.set_defaults(handler=cmd_dist)

    ham = commands.add_parser("flow-hamiltonian", help="Hamiltonian elastic flow", epilog=CSV_HELP)
    ham.add_argument("--in", dest="input", required=True, help="polygon document")
    ham.add_argument("--mom", required=True, help="covector document with the initial momentum")
    ham.add_argument("--out", required=True, help="trajectory CSV")
    ham.add_argument("--recenter", action="store_true")
    _add_integrator_options(ham)
    ham.set_defaults(handler=cmd_flow_hamiltonian)

    lddmm = commands.add_parser("flow-lddmm", help="Gaussian LDDMM landmark flow", epilog=CSV_HELP)
    lddmm.add_argument("--in", dest="input", required=True, help="landmark document")
    lddmm.add_argument("--mom", required=True, help="covector document with the initial momenta")
    lddmm.add_argument("--sigma", type=float, default=config.DEFAULT_SIGMA)
    lddmm.add_argument("--out", required=True, help="trajectory CSV")
    _add_integrator_options(lddmm)
    lddmm.set_defaults(handler=cmd_flow_lddmm)

    kernel = commands.add_parser("kernel", help="elastic and/or Gaussian kernel weights as CSV")
    kernel.add_argument("--in", dest="input", required=True, help="landmark or polygon document")
    kernel.add_argument("--kind", choices=("elastic", "gaussian", "both"), default="both")
    kernel.add_argument("--sigma", type=float, default=config.DEFAULT_SIGMA)
    kernel.add_argument("--out", required=True, help="CSV path; 'both' writes <stem>_elastic and <stem>_gaussian")
    kernel.add_argument("--check", action="store_true", help="report the closed-form error against the pseudo-inverse")
    kernel.set_defaults(handler=cmd_kernel)

    srvt = commands.add_parser("srvt", help="apply the square-root-velocity map")
    srvt.add_argument("--in", dest="input", required=True, help="srv_pair document")
    srvt.add_argument("--tangent", help="srv_pair-shaped document holding (de, df) for the isometry report")
    srvt.add_argument("--out", required=True, help="polygon document")
    srvt.set_defaults(handler=cmd_srvt)

    validate = commands.add_parser("validate", help="re-check the invariants a document declares")
    validate.add_argument("--in", dest="input", required=True)
    validate.set_defaults(handler=cmd_validate)

    gen = commands.add_parser("gen", help="write fixture documents")
    gen.add_argument("kind", choices=("diamond", "square", "regular", "fourier", "random", "stiefel"))
    gen.add_argument("--out", required=True)
    gen.add_argument("--vel-out", help="velocity document (diamond and random only)")
    gen.add_argument("--n", type=int, default=8)
    gen.add_argument("--d", type=int, default=2)
    gen.add_argument("--t", type=float, default=0.0, help="diamond time")
    gen.add_argument("--radius", type=float, default=1.0, help="regular polygon radius or Stiefel pair length")
    gen.add_argument("--coeffs", help="Fourier coefficients (K x 2 x d) as JSON text or a JSON file")
    gen.add_argument("--scale", type=float, default=0.1, help="random velocity scale")
    gen.add_argument("--seed", type=int, default=0)
    gen.set_defaults(handler=cmd_gen)

    render = commands.add_parser("render", help="SVG frames of a trajectory CSV", epilog=CSV_HELP)
    render.add_argument("--traj", required=True, help="trajectory CSV")
    render.add_argument("--out", required=True, help="frame directory")
    render.add_argument("--workers", type=int, default=1)
    render.set_defaults(handler=cmd_render)
    return parser


def _settings(args: argparse.Namespace) -> dict[str, Any]:
    return {key: value for key, value in vars(args).items() if key not in ("handler", "manifest")}


def main(argv: list[str] | None = None) -> int:
    colorama.just_fix_windows_console()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code in (0, None):
            return config.EXIT_OK
        record = RunRecord("?", {"argv": list(sys.argv[1:] if argv is None else argv)})
        record.abort_reason = "invalid command line"
        _write_manifest(record, None, config.EXIT_VALIDATION, 0.0)
        return config.EXIT_VALIDATION

    if args.verbose:
        logging.basicConfig(level=logging.DEBUG, format="%(levelname)s %(name)s: %(message)s")

    run = RunRecord(args.command, _settings(args))
    _status("▶️", f"plgeodesics {args.command}", colorama.Style.BRIGHT)
    started = time.perf_counter()
    handler: Callable[[argparse.Namespace, RunRecord], int] = args.handler
    try:
        code = handler(args, run)
    except (InvalidInput, pydantic.ValidationError, OSError) as exc:
        run.abort_reason = str(exc)
        _status("❌", f"Invalid input: {exc}", colorama.Fore.RED)
        code = config.EXIT_VALIDATION
    except NumericalAbort as exc:
        run.abort_reason = str(exc)
        _status("❌", f"Numerical abort: {exc}", colorama.Fore.RED)
        code = config.EXIT_NUMERICAL
    _write_manifest(run, args.manifest, code, time.perf_counter() - started)
    return code


def _write_manifest(run: RunRecord, path: str | None, code: int, wall_time: float) -> None:
    manifest = RunManifest(
        command=run.command,
        config=run.settings,
        input_hashes=run.input_hashes,
        outputs=[str(p) for p in run.outputs],
        tool_version=__version__,
        wall_time=wall_time,
        exit_code=code,
        abort_reason=run.abort_reason,
    )
    target = resolve_output(path) if path else run.manifest_path()
    try:
        write_manifest(manifest, target)
    except OSError as exc:
        _status("⚠️", f"Could not write run manifest: {exc}", colorama.Fore.YELLOW)
