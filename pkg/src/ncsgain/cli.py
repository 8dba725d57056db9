"""Command-line front end.

Exit codes: 0 success, 2 malformed input, 3 numerical failure,
4 synthesis could not start, 5 a check did not pass (synthesis not
stabilized, verification failed, demo reference mismatch), 6 the actuator
buffer ran dry during simulation.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import densela
from .cclsynth import CclSettings, CclStatus, InitializationFailed, ccl_synthesize
from .files import (
    FileFormatError,
    ModelFile,
    gain_json,
    load_gains,
    fingerprint,
    load_model,
    model_json,
    parse_gains,
    parse_model,
    read_trace_columns,
    trace_csv,
)
from .ncsmodel import DEFAULT_EPSILON, GainSchedule, SwitchedPlant, verify_theorem1
from .plot import render_svg
from .sdp import SdpSettings
from .sim import (
    DropKind,
    DropModel,
    ModelViolation,
    SimConfig,
    SwitchKind,
    SwitchSignal,
    simulate,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3
EXIT_INIT = 4
EXIT_CHECK = 5
EXIT_VIOLATION = 6

DEMO_SEED = 42
DEMO_STEPS = 200
DEMO_P_LOSS = 0.3

log = logging.getLogger("ncsgain")


class UsageError(Exception):
    """Inputs are inconsistent with each other (exit 2)."""


def _fmt(v: float) -> str:
    return f"{v: .6f}"


def _matrix_lines(name: str, m: np.ndarray) -> list[str]:
    rows = ["[" + ", ".join(_fmt(v) for v in row) + "]" for row in m]
    pad = " " * (len(name) + 3)
    return [f"{name} = {rows[0]}"] + [pad + r for r in rows[1:]]


def _eig_text(f: np.ndarray) -> str:
    if f.shape != (2, 2):
        return "n/a (state dimension is not 2)"
    parts = []
    for lam in densela.eig_2x2(f):
        if lam.imag == 0:
            parts.append(f"{lam.real:.6f}")
        else:
            parts.append(f"{lam.real:.6f}{lam.imag:+.6f}j")
    return ", ".join(parts)


def _sdp_settings(args) -> SdpSettings:
    return SdpSettings(
        feas_tol=args.feas_tol, gap_tol=args.gap_tol, max_iterations=args.sdp_max_iter
    )


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="\n")


# -- discretize ---------------------------------------------------------------

def discretize_report(model: ModelFile, h: float) -> tuple[SwitchedPlant, list[str]]:
    plant = model.plant(h)
    lines = [f"sample period h = {h:g} s, {plant.r} modes, n = {plant.n}, m = {plant.m}"]
    for i, mode in enumerate(plant.modes, start=1):
        lines.append(f"mode {i} ({mode.label}):")
        lines += ["  " + s for s in _matrix_lines(f"F{i}", mode.f)]
        lines += ["  " + s for s in _matrix_lines(f"G{i}", mode.g)]
        lines.append(f"  eig(F{i}) = {_eig_text(mode.f)}")
        lines.append(f"  Schur stable: {'yes' if densela.is_schur_stable(mode.f) else 'no'}")
    return plant, lines


def cmd_discretize(args) -> int:
    model, _ = load_model(args.model)
    if model.continuous is None:
        raise FileFormatError("continuous_modes", "discretize needs continuous modes")
    h = args.h if args.h is not None else model.sample_period
    if not h > 0:
        raise UsageError("--h must be positive")
    plant, lines = discretize_report(model, h)
    print("\n".join(lines))
    if args.out:
        _write(Path(args.out), model_json(h, model.n_drop, discrete=list(plant.modes), x0=model.x0))
        print(f"wrote {args.out}")
    return EXIT_OK


# -- synthesize ---------------------------------------------------------------

def _ccl_settings(args) -> CclSettings:
    return CclSettings(
        max_iterations=args.max_iter,
        trace_tol=args.trace_tol,
        epsilon=args.eps,
        sdp=_sdp_settings(args),
    )


def run_synthesis(plant: SwitchedPlant, settings: CclSettings, model_fp: str, out: Path):
    """Synthesize, write the gain file, return (exit code, summary lines)."""
    lines = [f"synthesis: r = {plant.r} modes, n = {plant.n}, N_drop = {plant.n_drop}, h = {plant.sample_period:g} s"]
    common = dict(
        settings=settings.to_dict(),
        plant_fingerprint=model_fp,
    )
    base_extra = {"sample_period": plant.sample_period, "n_drop": plant.n_drop}
    try:
        result = ccl_synthesize(plant, settings)
    except InitializationFailed as exc:
        _write(out, gain_json(None, CclStatus.INITIALIZATION_FAILED.value,
                              extra={**base_extra, "init_margin": exc.margin}, **common))
        lines.append(f"status: InitializationFailed ({exc})")
        return EXIT_INIT, lines, None
    history = [
        {
            "iteration": rec.iteration,
            "objective": rec.objective,
            "inverse_gap": rec.inverse_gap,
            "verified": rec.verified,
            "sdp_status": rec.sdp_status,
        }
        for rec in result.history
    ]
    for rec in result.history:
        lines.append(
            f"  iteration {rec.iteration:2d}: objective {rec.objective:.6g}  "
            f"|PQ - I| {rec.inverse_gap:.3e}  verified {'yes' if rec.verified else 'no'}"
        )
    extra = dict(base_extra, init_margin=result.init_margin)
    if result.certificate is not None:
        extra["worst_margin"] = result.certificate.worst_margin
        extra["lyapunov_p"] = result.certificate.p.tolist()
    _write(out, gain_json(result.gains, result.status.value, result.p, result.q, history,
                          extra=extra, **common))
    lines.append(f"status: {result.status.value}")
    if result.certificate is not None:
        lines.append(f"worst margin: {result.certificate.worst_margin:.6e}")
    else:
        lines.append("worst margin: n/a (gains not certified)")
    for q in range(1, plant.n_drop + 1):
        lines.append("  " + _matrix_lines(f"K{q}", result.gains[q])[0])
    code = EXIT_OK if result.status is CclStatus.STABILIZED else EXIT_CHECK
    return code, lines, result


def cmd_synthesize(args) -> int:
    model, fp = load_model(args.model)
    h = args.h if args.h is not None else model.sample_period
    plant = model.plant(h, args.ndrop)
    code, lines, _ = run_synthesis(plant, _ccl_settings(args), fp, Path(args.out))
    print("\n".join(lines))
    print(f"wrote {args.out}")
    return code


# -- verify -------------------------------------------------------------------

def _plant_for_gains(model: ModelFile, gains_doc: dict, gains: GainSchedule, h_flag):
    h = h_flag
    if h is None:
        h = gains_doc.get("sample_period", model.sample_period)
    if not isinstance(h, (int, float)) or not h > 0:
        raise FileFormatError("sample_period", "must be a positive number")
    # the gain count fixes the buffer depth
    plant = model.plant(float(h), gains.n_drop)
    try:
        gains.check_plant(plant)
    except ValueError as exc:
        raise UsageError(f"gains do not fit the model: {exc}") from None
    return plant


def verify_report(plant: SwitchedPlant, gains: GainSchedule, eps: float, sdp: SdpSettings):
    cert = verify_theorem1(plant, gains, eps, sdp)
    lines = [f"verification: r = {plant.r}, N_drop = {plant.n_drop}, h = {plant.sample_period:g} s, eps = {eps:g}"]
    for (mode, eta), ok in sorted(cert.per_pair_stable.items()):
        lines.append(f"  Phi[mode={mode}, eta={eta}] Schur stable: {'yes' if ok else 'no'}")
    lines.append(f"common P: {'found' if cert.valid else 'not found'}")
    lines.append(f"phase-1 margin: {cert.phase1_margin:.6e}")
    lines.append(f"worst margin: {cert.worst_margin:.6e}")
    lines.append(f"certified: {'yes' if cert.valid else 'no'}")
    return cert, lines


def cmd_verify(args) -> int:
    model, _ = load_model(args.model)
    gf = load_gains(args.gains)
    plant = _plant_for_gains(model, gf.doc, gf.gains, args.h)
    cert, lines = verify_report(plant, gf.gains, args.eps, _sdp_settings(args))
    print("\n".join(lines))
    return EXIT_OK if cert.valid else EXIT_CHECK


# -- simulate -----------------------------------------------------------------

_DROP_KINDS = {"bernoulli": DropKind.BERNOULLI_LINKS, "uniform-eta": DropKind.UNIFORM_ETA, "none": None}
_SWITCH_KINDS = {
    "fixed": SwitchKind.FIXED,
    "random-effective": SwitchKind.RANDOM_AT_EFFECTIVE,
    "random-step": SwitchKind.RANDOM_EVERY_STEP,
}


def build_sim_config(plant, gains, x0, steps, seed, drop_model, p_loss, switch, mode, dwell, enforce_bound=True):
    if len(p_loss) == 1:
        p_loss = [p_loss[0], p_loss[0]]
    if len(p_loss) != 2:
        raise UsageError("--p-loss takes one value or two (sensor, control)")
    kind = _DROP_KINDS[drop_model]
    if kind is None:
        drop = DropModel(DropKind.BERNOULLI_LINKS, 0.0, 0.0, enforce_bound=enforce_bound, seed=seed)
    else:
        drop = DropModel(kind, p_loss[0], p_loss[1], enforce_bound=enforce_bound, seed=seed)
    switching = SwitchSignal(_SWITCH_KINDS[switch], mode_index=mode, dwell_min=dwell, seed=seed)
    return SimConfig(plant, gains, np.asarray(x0, dtype=float), steps, drop, switching)


def simulate_summary(trace) -> list[str]:
    settled = trace.settled_at
    after = trace.max_norm_after_settle
    return [
        f"steps: {trace.horizon}, effective: {int(np.count_nonzero(trace.effective))}",
        f"settle threshold: {trace.settle_threshold:.6e}",
        f"settled at step: {'never' if settled is None else settled}",
        f"max |x| after settling: {'n/a' if after is None else f'{after:.6e}'}",
    ]


def cmd_simulate(args) -> int:
    model, _ = load_model(args.model)
    gf = load_gains(args.gains)
    plant = _plant_for_gains(model, gf.doc, gf.gains, args.h)
    x0 = args.x0 if args.x0 is not None else model.x0
    if x0 is None:
        raise UsageError("no initial state: pass --x0 or add x0 to the model file")
    config = build_sim_config(
        plant, gf.gains, x0, args.steps, args.seed, args.drop_model, args.p_loss,
        args.switch, args.mode, args.dwell, not args.no_enforce_bound,
    )
    trace = simulate(config)
    _write(Path(args.out), trace_csv(trace))
    print("\n".join(simulate_summary(trace)))
    print(f"wrote {args.out}")
    return EXIT_OK


# -- plot ---------------------------------------------------------------------

def cmd_plot(args) -> int:
    text = Path(args.trace).read_text(encoding="utf-8")
    header, data = read_trace_columns(text)
    columns = None
    if args.columns:
        columns = [c.strip() for c in args.columns.split(",") if c.strip()]
    try:
        svg = render_svg(header, data, columns, title=args.title or "")
    except KeyError as exc:
        raise FileFormatError("columns", str(exc.args[0])) from None
    _write(Path(args.out), svg)
    print(f"wrote {args.out}")
    return EXIT_OK


# -- demo ---------------------------------------------------------------------

def _data_text(name: str) -> str:
    return resources.files("ncsgain").joinpath("data", name).read_text(encoding="utf-8")


def demo_model() -> ModelFile:
    return parse_model(_data_text("dc_motor.json"))


def demo_fixture_name(h: float) -> str:
    return "dc_motor_gains_h010.json" if h == 0.1 else "dc_motor_gains_h020.json"


def reference_table(plant: SwitchedPlant) -> tuple[bool, list[str]]:
    """Compare the discretized demo modes against the published values.

    Matrix entries gate the stage; eigenvalue rows are listed with their own
    verdict but do not gate (see README).
    """
    ref = json.loads(_data_text("dc_motor_reference.json"))
    tol, eig_tol = ref["matrix_tolerance"], ref["eigenvalue_tolerance"]
    ok = True
    lines = [f"{'quantity':<12}{'computed':>14}{'published':>12}{'|diff|':>12}  verdict"]
    for i, (mode, r) in enumerate(zip(plant.modes, ref["modes"]), start=1):
        for name, got, want in (("F", mode.f, r["f"]), ("G", mode.g, r["g"])):
            want = np.asarray(want)
            for (a, b), v in np.ndenumerate(got):
                d = abs(v - want[a, b])
                good = d <= tol
                ok &= bool(good)
                lines.append(
                    f"{f'{name}{i}[{a + 1},{b + 1}]':<12}{v:>14.6f}{want[a, b]:>12.4f}{d:>12.2e}  "
                    f"{'pass' if good else 'FAIL'}"
                )
        eigs = sorted((lam.real for lam in densela.eig_2x2(mode.f)), reverse=True)
        for j, (v, w) in enumerate(zip(eigs, sorted(r["eigenvalues"], reverse=True)), start=1):
            d = abs(v - w)
            lines.append(
                f"{f'eig{j}(F{i})':<12}{v:>14.6f}{w:>12.4f}{d:>12.2e}  "
                f"{'pass' if d <= eig_tol else 'differs'} (informational)"
            )
    lines.append(f"matrix tolerance {tol:g}, eigenvalue tolerance {eig_tol:g}")
    return ok, lines


def cmd_demo(args) -> int:
    h = args.h
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = demo_model()
    stages: list[tuple[str, int]] = []

    model_text = model_json(h, base.n_drop, continuous=base.continuous, x0=base.x0)
    _write(out / "model.json", model_text)
    model = parse_model(model_text)
    fp = fingerprint(model_text.encode("utf-8"))

    plant, lines = discretize_report(model, h)
    disc_ok = all(densela.is_schur_stable(m.f) for m in plant.modes)
    if h == 0.1:
        ref_ok, table = reference_table(plant)
        lines += ["", "comparison with published discretization:"] + table
        disc_ok &= ref_ok
    lines.append(f"stage result: {'pass' if disc_ok else 'FAIL'}")
    _write(out / "discretization.txt", "\n".join(lines) + "\n")
    stages.append(("discretize", EXIT_OK if disc_ok else EXIT_CHECK))

    settings = CclSettings()
    code, syn_lines, result = run_synthesis(plant, settings, fp, out / "gains.json")
    stages.append(("synthesize", code))

    report = []
    verify_ok = False
    if result is not None:
        cert, vlines = verify_report(plant, result.gains, settings.epsilon, settings.sdp)
        report += ["synthesized gains:"] + vlines
        verify_ok = cert.valid
    fixture = load_gains_text(_data_text(demo_fixture_name(h)))
    cert_pub, plines = verify_report(plant, fixture, settings.epsilon, settings.sdp)
    report += ["", "published gains:"] + plines
    verify_ok = verify_ok and cert_pub.valid
    _write(out / "verification.txt", "\n".join(report) + "\n")
    stages.append(("verify", EXIT_OK if verify_ok else EXIT_CHECK))

    sim_code = EXIT_CHECK
    if result is not None and result.stabilized:
        config = build_sim_config(
            plant, result.gains, base.x0, DEMO_STEPS, DEMO_SEED, "bernoulli", [DEMO_P_LOSS],
            "random-effective", 1, 1,
        )
        trace = simulate(config)
        text = trace_csv(trace)
        _write(out / "trace.csv", text)
        sim_code = EXIT_OK if trace.settled_at is not None else EXIT_CHECK
        header, data = read_trace_columns(text)
        _write(out / "trace.svg", render_svg(header, data, title=f"demo, h = {h:g} s, seed {DEMO_SEED}"))
        syn_lines += simulate_summary(trace)
    stages.append(("simulate", sim_code))

    print("\n".join(syn_lines))
    for name, c in stages:
        print(f"stage {name:<11} {'pass' if c == EXIT_OK else f'FAIL (exit {c})'}")
    for _, c in stages:
        if c != EXIT_OK:
            return c
    return EXIT_OK


def load_gains_text(text: str) -> GainSchedule:
    return parse_gains(text).gains


# -- parser -------------------------------------------------------------------

def _add_sdp_flags(p: argparse.ArgumentParser) -> None:
    d = SdpSettings()
    p.add_argument("--feas-tol", type=float, default=d.feas_tol, help="SDP feasibility tolerance")
    p.add_argument("--gap-tol", type=float, default=d.gap_tol, help="SDP duality-gap tolerance")
    p.add_argument("--sdp-max-iter", type=int, default=d.max_iterations, help="SDP iteration budget")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ncsgain", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("discretize", help="zero-order-hold discretization of continuous modes")
    p.add_argument("model")
    p.add_argument("--h", type=float, help="sample period override [s]")
    p.add_argument("--out", help="write a discrete-mode model file")
    p.set_defaults(func=cmd_discretize)

    c = CclSettings()
    p = sub.add_parser("synthesize", help="predictive gain synthesis")
    p.add_argument("model")
    p.add_argument("--h", type=float, help="sample period override [s]")
    p.add_argument("--ndrop", type=int, help="override N_drop from the model")
    p.add_argument("--eps", type=float, default=c.epsilon, help="strictness margin")
    p.add_argument("--max-iter", type=int, default=c.max_iterations, help="linearization iterations")
    p.add_argument("--trace-tol", type=float, default=c.trace_tol, help="trace stopping tolerance")
    p.add_argument("--out", default="gains.json")
    _add_sdp_flags(p)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("verify", help="common Lyapunov certificate for given gains")
    p.add_argument("model")
    p.add_argument("gains")
    p.add_argument("--h", type=float, help="sample period (default: gain file, then model)")
    p.add_argument("--eps", type=float, default=DEFAULT_EPSILON, help="strictness margin")
    _add_sdp_flags(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simulate", help="closed-loop simulation with packet loss")
    p.add_argument("model")
    p.add_argument("gains")
    p.add_argument("--h", type=float, help="sample period (default: gain file, then model)")
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--drop-model", choices=sorted(_DROP_KINDS), default="bernoulli")
    p.add_argument("--p-loss", type=float, nargs="+", default=[DEMO_P_LOSS],
                   help="loss probability for both links, or sensor and control separately")
    p.add_argument("--switch", choices=sorted(_SWITCH_KINDS), default="random-effective")
    p.add_argument("--mode", type=int, default=1, help="mode for --switch fixed")
    p.add_argument("--dwell", type=int, default=1, help="minimum dwell between switches")
    p.add_argument("--x0", type=float, nargs="+", help="initial state (default: model x0)")
    p.add_argument("--no-enforce-bound", action="store_true",
                   help="allow loss runs longer than N_drop - 1 (may exit 6)")
    p.add_argument("--out", default="trace.csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("plot", help="SVG chart of a trace file")
    p.add_argument("trace")
    p.add_argument("--out", default="trace.svg")
    p.add_argument("--columns", help="comma-separated columns (default: all states)")
    p.add_argument("--title")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("demo", help="end-to-end DC motor example")
    p.add_argument("--h", type=float, choices=[0.1, 0.2], default=0.1)
    p.add_argument("--out-dir", default="demo_out")
    p.set_defaults(func=cmd_demo)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (FileFormatError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ModelViolation as exc:
        print(f"model violation: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    except densela.LinAlgError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
