//! What random restarts protect against.
//!
//! The alternating fit minimizes a non-convex loss, so a single random start
//! can stall in a local minimum — a merged, split, or misassigned version of
//! the real partition — or, at high noise, find a partition whose loss *undercuts*
//! the generating one (overfitting: the loss genuinely rewards a different
//! partition, no optimizer can know better). [`restart_diagnostics`] runs
//! many independent single starts and classifies each against a known
//! grouping:
//!
//! - `TruePartition`: recovered the generating segments exactly;
//! - `LocalMinimum`: stalled with a loss above the truth's;
//! - `Overfit`: found a loss below the truth's.
//!
//! This example prints the classification for a benign design and for a
//! rugged one (noisier segments packed closer together), then shows that
//! multistart fitting (the default, 15 starts) picks the best loss of the
//! bunch.
//!
//! ```text
//! cargo run --release --example restart_landscape
//! ```

use plskm::datagen::{
    generate_dataset, SegmentProfile, SimConfig, StructureKind, SEPARATION_DEFAULT,
};
use plskm::estimator::{fit, FitOptions};
use plskm::metrics::adjusted_rand_index;
use plskm::selection::restart_diagnostics;

fn landscape(sigma: f64, separation: f64, seed: u64) {
    let config = SimConfig {
        separation,
        ..SimConfig::new(
            StructureKind::TwoDriver,
            3,
            150,
            SegmentProfile::Balanced,
            sigma,
            seed,
        )
        .unwrap()
    };
    let dataset = generate_dataset(&config).unwrap();
    let data = dataset.standardized().unwrap();
    let opts = FitOptions::default();

    let table =
        restart_diagnostics(&data, &dataset.model, 3, 40, &opts, Some(&dataset.truth)).unwrap();

    println!("sigma = {sigma}, center separation = {separation}: 40 single starts");
    println!(
        "  true partition {:>3}   local minima {:>3}   overfit {:>3}   failed {:>3}",
        table.n_true_partition,
        table.n_local_minimum,
        table.n_overfit,
        table.failures.len()
    );
    println!(
        "  best objective {:.4}, truth's own objective {:.4}",
        table.best_objective,
        table.true_objective.unwrap()
    );

    // Where stalls happen, show how far off they are — in loss and in
    // agreement with the truth.
    let stalled: Vec<&plskm::selection::RunDiagnostic> =
        table.runs.iter().filter(|r| !r.is_global_best).collect();
    if !stalled.is_empty() {
        let lo = stalled
            .iter()
            .map(|r| r.objective)
            .fold(f64::INFINITY, f64::min);
        let hi = stalled
            .iter()
            .map(|r| r.objective)
            .fold(f64::NEG_INFINITY, f64::max);
        let ari_lo = stalled
            .iter()
            .filter_map(|r| r.ari_to_truth)
            .fold(f64::INFINITY, f64::min);
        println!(
            "  stalled objectives +{:.2} to +{:.2} above best, worst ARI {:.3}",
            lo - table.best_objective,
            hi - table.best_objective,
            ari_lo
        );
    }

    // Multistart keeps the best of its starts, so it recovers whatever the
    // landscape allows.
    let fitted = fit(&data, &dataset.model, 3, &opts).unwrap();
    println!(
        "  15-start fit: objective {:.4}, ARI to truth {:.3} (best start #{})",
        fitted.objective,
        adjusted_rand_index(fitted.membership.labels(), &dataset.truth),
        fitted.best_start + 1
    );
    println!();
}

fn main() {
    landscape(0.3, SEPARATION_DEFAULT, 31);
    landscape(0.5, 2.1, 32);
    landscape(0.5, 2.0, 32);

    println!("Three regimes. With well-separated segments every start lands on the");
    println!("generating partition. Packed closer, the loss turns rugged: a third of");
    println!("the starts stall above the best loss, and multistart fitting is what");
    println!("rescues the estimate. Closer still, every start beats the truth's own");
    println!("loss — at this noise the loss minimum genuinely sits at a partition");
    println!("other than the generating one (a few rows swapped), which no optimizer");
    println!("can know better than the data. Multistart fitting simply returns the");
    println!("best loss the landscape offers.");
}
