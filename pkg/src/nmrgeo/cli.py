"""Command-line entry point.

Exit codes: 0 success, 1 usage or I/O error, 2 a physics check failed.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace

import numpy as np

from nmrgeo.experiments import (
    FIDELITY_TOL,
    ExperimentConfig,
    GateSynthesisError,
    emit_results,
    run_fig3_sweep,
    run_gate_suite,
    run_prep_check,
    run_tomography,
)
from nmrgeo.phases import DegenerateSweepError
from nmrgeo.sequence import (
    CompileError,
    NonUnitaryProgramError,
    SequenceSyntaxError,
    compile_sequence,
    net_unitary,
    parse_sequence,
    pretty_print,
    read_sequence_file,
)
from nmrgeo.spins import NoiseConfig, conditional_frame, offset_a_frame, on_resonance_frame

EXIT_OK, EXIT_USAGE, EXIT_CHECK = 0, 1, 2

FRAMES = {
    "onres": on_resonance_frame,
    "conditional": conditional_frame,
    "offset-a": offset_a_frame,
}


class CheckFailed(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _noise(args) -> NoiseConfig:
    if not getattr(args, "noise", False) and not getattr(args, "pulse_error", 0.0):
        return NoiseConfig()
    return NoiseConfig(
        enabled=True,
        pulse_amplitude_error=args.pulse_error,
        dephasing_enabled=bool(args.noise),
    )


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    return replace(cfg, seed=args.seed, noise=_noise(args))


def cmd_fig3(args) -> int:
    cfg = _config(args)
    records, fit = run_fig3_sweep(replace(cfg, workers=args.workers))
    if args.out:
        emit_results(records, args.out, args.format)
    else:
        for r in records:
            print(f"{r.loop_variant:6s} theta={r.theta:.6f} phase={r.phase_measured:+.10f} "
                  f"gd={r.gamma_dynamic:+.10f} gg={r.gamma_geometric:+.10f}")
    print(f"fit: alpha_g={fit.alpha_g:+.10f} eta={fit.eta:+.10f} max_residual={fit.max_residual:.3e}")
    if not cfg.noise.enabled:
        for r in records:
            expected = -math.pi / 2 if r.loop_variant == "up" else math.pi / 2
            if abs(r.phase_measured - expected) > 1e-8:
                raise CheckFailed(f"{r.loop_variant} loop at theta={r.theta:.4f}: phase {r.phase_measured}")
        if abs(fit.alpha_g + math.pi / 2) > 1e-6 or abs(fit.eta + 1) > 1e-6 or fit.max_residual > 1e-6:
            raise CheckFailed(f"fit deviates from (-pi/2, -1): {fit}")
    return EXIT_OK


def cmd_prep(args) -> int:
    cfg = _config(args)
    if args.epsilon is not None:
        cfg = replace(cfg, epsilon=args.epsilon)
    report = run_prep_check(cfg)
    print(f"lambda={report.lam:.12g} mu={report.mu:.6e} off-form residual={report.residual:.3e}")
    print(np.array2string(report.rho.real, precision=8, suppress_small=True))
    if not report.passed:
        raise CheckFailed("prepared state is not of pseudo-pure |00> form")
    return EXIT_OK


def cmd_gates(args) -> int:
    cfg = _config(args)
    try:
        results = run_gate_suite(cfg, monte_carlo=args.monte_carlo)
    except GateSynthesisError as exc:
        raise CheckFailed(str(exc)) from None
    payload = {}
    for name, res in results.items():
        f = res.fidelity
        six = "   n/a  " if f.six_state is None else f"{f.six_state:.6f}"
        line = (f"{name:3s} duration={res.duration * 1e3:7.4f} ms six_state={six} "
                f"haar={f.haar:.9f} process={f.process:.9f} unitary_err={res.unitary_error:.2e}")
        if res.mc_fidelity is not None:
            line += f" monte_carlo={res.mc_fidelity:.6f}"
        print(line)
        if f.per_state:
            print("    per-state: " + ", ".join(f"{k}:{v:.6f}" for k, v in f.per_state.items()))
        payload[name] = {
            "six_state": f.six_state, "haar": f.haar, "process": f.process,
            "per_state": f.per_state, "duration_s": res.duration,
        }
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
    if not cfg.noise.enabled:
        for name, res in results.items():
            if min(res.fidelity.haar, res.fidelity.process) < 1 - FIDELITY_TOL:
                raise CheckFailed(f"{name}: noiseless fidelity below 1 - {FIDELITY_TOL}")
    return EXIT_OK


def cmd_tomo(args) -> int:
    cfg = _config(args)
    result, f_avg = run_tomography(cfg, args.gate)
    tp_err = float(np.max(np.abs(result.output_marginal() - np.eye(result.dim))))
    print(f"gate={args.gate} inputs={len(result.inputs_used)} average_fidelity={f_avg:.10f} "
          f"min_choi_eigenvalue={result.min_eigenvalue:.3e} trace_preservation_err={tp_err:.3e}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump({"inputs": list(result.inputs_used),
                       "choi_real": result.choi.real.tolist(),
                       "choi_imag": result.choi.imag.tolist()}, fh)
    if not cfg.noise.enabled and f_avg < 1 - 1e-8:
        raise CheckFailed(f"noiseless tomography fidelity {f_avg}")
    return EXIT_OK


def cmd_sequence(args) -> int:
    ast = read_sequence_file(args.file) if args.file else parse_sequence(args.text or "")
    print(pretty_print(ast))
    bindings = {}
    for spec in args.bind:
        name, _, value = spec.partition("=")
        if not value:
            raise CompileError(f"binding {spec!r} is not NAME=EXPR")
        bindings[name.strip()] = value.strip()
    cfg = _config(args)
    prog = compile_sequence(ast, cfg.system, FRAMES[args.frame](cfg.system), bindings)
    print(f"events={len(prog.events)} total_duration={prog.total_duration:.9g} s")
    try:
        u = net_unitary(prog, cfg.system, cfg.noise).matrix
    except NonUnitaryProgramError:
        print("net unitary: n/a (program contains a crusher)")
    else:
        print(np.array2string(u, precision=6, suppress_small=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML file with system and sweep settings")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--noise", action="store_true", help="enable T2 dephasing")
    common.add_argument("--pulse-error", type=float, default=0.0,
                        help="fractional pulse over-rotation (enables noise)")

    parser = _Parser(prog="nmrgeo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fig3-sweep", parents=[common], help="interferometer phase sweep and fit")
    p.add_argument("--out")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_fig3)

    p = sub.add_parser("prep-check", parents=[common], help="pseudo-pure state preparation")
    p.add_argument("--epsilon", type=float)
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("gate-suite", parents=[common], help="compile and score U1, U2, Uc")
    p.add_argument("--monte-carlo", type=int, default=0, metavar="N",
                   help="also estimate the Haar average from N random states")
    p.add_argument("--json")
    p.set_defaults(func=cmd_gates)

    p = sub.add_parser("tomo", parents=[common], help="process tomography of a compiled gate")
    p.add_argument("--gate", choices=("uc", "u1", "u2"), default="uc")
    p.add_argument("--out")
    p.set_defaults(func=cmd_tomo)

    p = sub.add_parser("sequence", parents=[common], help="parse, compile and multiply out a sequence")
    p.add_argument("text", nargs="?")
    p.add_argument("--file")
    p.add_argument("--bind", action="append", default=[], metavar="NAME=EXPR")
    p.add_argument("--frame", choices=sorted(FRAMES), default="onres")
    p.set_defaults(func=cmd_sequence)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CheckFailed as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except (SequenceSyntaxError, CompileError, DegenerateSweepError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
