//! Shared fixtures for the benchmarks.

use clawsim_core::detect::{DetectParams, DetectionWalk, MarkRule, Restriction};
use clawsim_core::walk::DEFAULT_EDGE_CAP;
use clawsim_core::{make_planted_instance, ProblemInstance};

/// Single-claw instance with domains `n` and `m`.
pub fn planted(n: usize, m: usize, seed: u64) -> ProblemInstance {
    make_planted_instance(&[n, m], 1, 4 * (n + m) as u64, seed).expect("feasible sizes")
}

/// Detection walk over the full domains with the given subset sizes.
pub fn detection_walk(
    instance: &ProblemInstance,
    subsets: &[usize],
) -> (DetectionWalk, DetectParams) {
    let params =
        DetectParams::with_subset_sizes(instance.domains(), subsets, 1.0).expect("valid subsets");
    let r = Restriction::full(instance.domains()).expect("non-empty domains");
    let walk = DetectionWalk::build(instance, &r, &params, &MarkRule::Claw, DEFAULT_EDGE_CAP)
        .expect("within edge cap");
    (walk, params)
}
