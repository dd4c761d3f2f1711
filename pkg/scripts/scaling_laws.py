"""Scaling-law sweeps: excess loss vs mn (non-private), vs ell and vs epsilon
(joint-DP in the noise-dominated regime). Prints the fitted exponents with
confidence intervals and writes per-run CSVs under runs/scaling/.
"""
import dataclasses
import pathlib
import sys

from jointdp.harness import (
    ExperimentConfig,
    LossSpec,
    OptSpec,
    SweepSpec,
    TaskSpec,
    scaling_sweep,
    write_csv,
)
from jointdp.params import DomainSpec

OUT = pathlib.Path("runs/scaling")

NONPRIVATE = ExperimentConfig(
    domain=DomainSpec(n=4, k=1, ell=8, d_x=0.2, d_u=2.0),
    m=16,
    task=TaskSpec(noise_scale=0.25, heterogeneity=0.5, seed=11),
    loss=LossSpec(),
    opt=OptSpec(paradigm="collab_no_dp"),
    sweep=SweepSpec(
        axes=(("m", (16, 32, 64, 128)), ("n", (4, 8, 16, 32)), ("T", (64, 256, 1024, 4096))),
        mode="zip",
        fit_against=("mn",),
    ),
    repetitions=20,
    eval_samples=3000,
    base_seed=100,
)

# degenerate data noise isolates the DP-noise response exactly
_NOISY_BASE = ExperimentConfig(
    domain=DomainSpec(n=8, k=1, ell=128, d_x=0.2, d_u=2.0),
    m=64,
    task=TaskSpec(noise_scale=0.0, heterogeneity=0.5, shared_offset=1.0, seed=11),
    loss=LossSpec(),
    opt=OptSpec(paradigm="joint_dp", epsilon=1.75, delta=1e-5, T=32768),
    repetitions=20,
    eval_samples=200,
    base_seed=100,
)

SWEEPS = {
    "mn_nonprivate": NONPRIVATE,
    "ell_jointdp": dataclasses.replace(
        _NOISY_BASE, sweep=SweepSpec(axes=(("ell", (64, 128, 256, 512)),))
    ),
    "epsilon_jointdp": dataclasses.replace(
        _NOISY_BASE, sweep=SweepSpec(axes=(("epsilon", (1.25, 1.75, 2.5, 3.5)),))
    ),
}


def main() -> int:
    jobs = int(sys.argv[1]) if len(sys.argv) > 1 else 4
    OUT.mkdir(parents=True, exist_ok=True)
    for name, cfg in SWEEPS.items():
        reports, fits = scaling_sweep(cfg, jobs=jobs)
        write_csv(reports, str(OUT / f"{name}.csv"))
        for fit in fits:
            print(
                f"{name:>16}: slope vs {fit.variable} = {fit.slope:+.3f} "
                f"(95% CI [{fit.ci_low:+.3f}, {fit.ci_high:+.3f}], {fit.n_points} points)"
            )
    print(f"wrote results under {OUT}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
