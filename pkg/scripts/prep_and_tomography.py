"""Check the pseudo-pure preparation, then reconstruct the Uc channel by process tomography."""

import numpy as np

from nmrgeo.experiments import ExperimentConfig, run_prep_check, run_tomography


def main() -> None:
    cfg = ExperimentConfig()
    rep = run_prep_check(cfg)
    print(f"prep: lambda = {rep.lam:.8f}  mu = {rep.mu:.3e}  residual = {rep.residual:.1e}")
    result, fidelity = run_tomography(cfg, "uc")
    np.set_printoptions(precision=3, suppress=True, linewidth=140)
    print(f"Uc process fidelity: {fidelity:.12f}")
    print("|Choi matrix| entries:")
    print(np.abs(result.choi))


if __name__ == "__main__":
    main()
