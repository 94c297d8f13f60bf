//! End-to-end survey workflow on the customer-satisfaction model.
//!
//! The bundled generator produces a survey-shaped dataset: 24 items on a
//! 1–10 answer scale, three latent customer segments, and roughly 1% missing
//! cells — the raw material a real satisfaction study hands you. The
//! workflow below is the same one the `plskm` binary runs:
//!
//! 1. rescale 1–10 answers onto 0–100,
//! 2. impute missing cells with the column mean,
//! 3. standardize every column,
//! 4. fit the joint path-and-partition model,
//! 5. report measurement quality, path coefficients, and per-segment score
//!    summaries.
//!
//! ```text
//! cargo run --release --example ecsi_workflow
//! ```

use plskm::cli::{summarize_groups, Dataset};
use plskm::data::DataMatrix;
use plskm::datagen::make_ecsi_synthetic;
use plskm::estimator::{fit, FitOptions};
use plskm::metrics::{adjusted_rand_index, FitReport, ScoreBasis};

fn main() {
    // A survey wave: 250 respondents, three true segments.
    let survey = make_ecsi_synthetic(250, 7).unwrap();
    let model = survey.model.clone();

    let mut table = Dataset {
        column_names: survey.column_names.clone(),
        cells: survey.rows.clone(),
    };
    let missing_before: usize = table.missing_counts().iter().sum();
    table.rescale_survey();
    let filled = table.impute_mean().unwrap();
    println!(
        "{} respondents × {} items, {missing_before} missing cells ({filled} imputed)",
        table.n_rows(),
        table.n_cols()
    );

    let raw = table.to_matrix().unwrap();
    let data = DataMatrix::standardize(&raw, &table.column_names).unwrap();

    let fitted = fit(&data, &model, 3, &FitOptions::default()).unwrap();
    let report = FitReport::new(&fitted, &data, ScoreBasis::Data).unwrap();

    println!();
    println!("segment sizes: {:?} (generated: {:?})", fitted.membership.counts(), survey.counts);
    println!(
        "agreement with the generating segments: ARI = {:.3}",
        adjusted_rand_index(fitted.membership.labels(), &survey.truth)
    );

    println!();
    println!("== measurement blocks ==");
    println!(
        "{:<14} {:>5} {:>13} {:>16}",
        "construct", "items", "communality", "Cronbach alpha"
    );
    for b in &report.blocks {
        let alpha = if b.single_indicator {
            "single item".to_string()
        } else {
            format!("{:.3}", b.cronbach_alpha)
        };
        println!(
            "{:<14} {:>5} {:>13.3} {:>16}",
            b.lv, b.n_mvs, b.communality, alpha
        );
    }

    println!();
    println!("== loadings (item -> construct) ==");
    for lv in 0..model.n_lvs() {
        let name = &model.lv_names()[lv];
        let entries: Vec<String> = model
            .block_members(lv)
            .iter()
            .map(|&mv| {
                let item = &model.mv_names()[mv];
                let col = data.column_index(item).unwrap();
                format!("{item} {:.2}", fitted.loadings[(col, lv)])
            })
            .collect();
        println!("{name:<14} {}", entries.join("  "));
    }

    println!();
    println!("== structural paths ==");
    for &(source, target) in model.paths() {
        println!(
            "{:<14} -> {:<14} {:+.3}",
            model.lv_names()[source],
            model.lv_names()[target],
            fitted.path_coefficients[(target, source)]
        );
    }

    println!();
    println!("== average R² {:.3}, GoF {:.3}, penalized GoF {:.3} ==",
        report.average_r_squared, report.gof, report.penalized_gof);

    // Per-segment summaries of the satisfaction scores — the table a survey
    // analyst reads first: do the segments differ where it matters?
    let sat = model
        .lv_names()
        .iter()
        .position(|n| n == "SATISFACTION")
        .unwrap();
    let scores = fitted.scores(&data);
    let sat_scores: Vec<f64> = scores.column(sat).iter().copied().collect();
    println!();
    println!("== SATISFACTION score by fitted segment ==");
    println!(
        "{:<8} {:>5} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
        "segment", "size", "mean", "min", "q1", "median", "q3", "max"
    );
    for g in summarize_groups(&sat_scores, fitted.membership.labels(), 3) {
        println!(
            "{:<8} {:>5} {:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>8.2}",
            g.group, g.size, g.mean, g.min, g.q1, g.median, g.q3, g.max
        );
    }
}
