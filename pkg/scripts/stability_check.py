"""Uniform-stability experiment: mean output distance of the non-private run
over record-level neighbor pairs, against min(R, 4 L eta (sqrt(T) + T/(mn))).
"""
import sys

from jointdp.harness import (
    ExperimentConfig,
    LossSpec,
    OptSpec,
    TaskSpec,
    stability_experiment,
)
from jointdp.params import DomainSpec, radius

CFG = ExperimentConfig(
    domain=DomainSpec(n=4, k=2, ell=8, d_x=1.0, d_u=2.0),
    m=16,
    task=TaskSpec(noise_scale=0.2, heterogeneity=0.5, seed=41),
    loss=LossSpec(),
    opt=OptSpec(paradigm="collab_no_dp", T=16 * 16 * 4 * 4),
    repetitions=1,
    eval_samples=100,
    base_seed=1004,
)


def main() -> int:
    pairs = int(sys.argv[1]) if len(sys.argv) > 1 else 200
    report = stability_experiment(CFG, pair_count=pairs)
    print(f"pairs:          {report.pairs}")
    print(f"mean distance:  {report.mean_output_distance:.6f}")
    print(f"max distance:   {report.max_output_distance:.6f}")
    print(f"bound:          {report.bound:.6f}  (R = {radius(CFG.domain):.4f})")
    print(f"bound satisfied: {report.mean_output_distance <= report.bound}")
    return 0 if report.mean_output_distance <= report.bound else 1


if __name__ == "__main__":
    sys.exit(main())
