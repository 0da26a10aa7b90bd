"""Score U1, U2 and Uc against their targets while T2 is shortened step by step."""

import argparse

from nmrgeo.experiments import ExperimentConfig, run_gate_suite, with_noise
from nmrgeo.spins import T2_ONLY


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config")
    ap.add_argument("--scales", type=float, nargs="+", default=[1.0, 0.1, 0.01])
    ap.add_argument("--monte-carlo", type=int, default=0)
    args = ap.parse_args()

    base = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    print(f"{'T2 scale':>9} {'gate':>4} {'haar':>10} {'process':>10} {'six-state':>10}")
    for scale in args.scales:
        cfg = with_noise(ExperimentConfig(system=base.system.scaled_t2(scale)), T2_ONLY)
        for name, res in run_gate_suite(cfg, monte_carlo=args.monte_carlo).items():
            f = res.fidelity
            six = "-" if f.six_state is None else f"{f.six_state:.6f}"
            print(f"{scale:9g} {name:>4} {f.haar:10.6f} {f.process:10.6f} {six:>10}")


if __name__ == "__main__":
    main()
