//! Replication grids: how recovery degrades across designs.
//!
//! [`run_experiment_grid`] takes a list of cells — structure, cluster count,
//! segment-size profile, noise level, sample size, replications — and fits
//! every replication of every cell, reporting mean recovery (adjusted Rand
//! index against the generating truth) and fit quality per cell. The same
//! machinery backs the `plskm benchmark` subcommand, which reads the grid
//! from a TOML file (see `grids/default_grid.toml`).
//!
//! The small grid below contrasts noise levels and segment-size profiles,
//! with the two-step baseline included for scale.
//!
//! ```text
//! cargo run --release --example simulation_grid
//! ```

use plskm::datagen::{run_experiment_grid, GridCell, SegmentProfile, StructureKind};
use plskm::estimator::FitOptions;

fn main() {
    let mut cells = Vec::new();
    for &sigma in &[0.3, 0.5] {
        for &profile in &[SegmentProfile::Balanced, SegmentProfile::OneDominant] {
            cells.push(GridCell {
                kind: StructureKind::TwoDriver,
                n_clusters: 3,
                profile,
                sigma,
                n_rows: 150,
                replications: 5,
            });
        }
    }
    // One chain-structure cell for contrast.
    cells.push(GridCell {
        kind: StructureKind::Chain,
        n_clusters: 3,
        profile: SegmentProfile::Balanced,
        sigma: 0.4,
        n_rows: 150,
        replications: 5,
    });

    let opts = FitOptions::default();
    let summaries = run_experiment_grid(&cells, &opts, true, 99).unwrap();

    println!(
        "{:<10} {:>6} {:>13} {:>6} {:>9} {:>7} {:>7} {:>10} {:>8}",
        "kind", "sigma", "profile", "n", "mean ARI", "sd", "exact", "tandem", "pen.GoF"
    );
    for s in &summaries {
        println!(
            "{:<10} {:>6} {:>13} {:>6} {:>9.3} {:>7.3} {:>7.2} {:>10.3} {:>8.3}",
            format!("{:?}", s.cell.kind),
            s.cell.sigma,
            format!("{:?}", s.cell.profile),
            s.cell.n_rows,
            s.mean_ari,
            s.sd_ari,
            s.exact_rate,
            s.mean_tandem_ari.unwrap_or(f64::NAN),
            s.mean_penalized_gof,
        );
    }

    println!();
    println!("reading the table:");
    println!("- with the default restarts, recovery stays exact across these noise");
    println!("  levels while the penalized GoF slides — the fit indices feel the noise");
    println!("  even when the partition is right;");
    println!("- the chain structure is harder: a mean ARI near one with a low exact");
    println!("  rate means most replications misplace only a handful of rows;");
    println!("- generated centers are far apart here, so the two-step baseline nearly");
    println!("  keeps up; the joint_vs_tandem example shows the geometry that breaks it.");
}
