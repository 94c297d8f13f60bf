//! Choosing the number of clusters, and understanding the restart landscape.
//!
//! [`select_k`] fits every candidate cluster count and scores each one with
//! two classic heuristics computed on the latent scores:
//!
//! - the **pseudo-F** (Caliński–Harabasz) ratio of between- to within-group
//!   variance, maximized over K;
//! - the **gap statistic**: within-group dispersion compared against uniform
//!   reference data drawn over the score ranges, choosing the smallest K
//!   whose gap is within one standard error of the next one.
//!
//! The two do not always agree; the result reports both, flags weak evidence,
//! and keeps the per-K numbers so the curves can be inspected.
//!
//! [`restart_diagnostics`] reruns the estimator from many random starts and
//! classifies each run against a known grouping — useful on synthetic data to
//! see how often the alternation finds the truth, overfits past it, or stalls
//! in a local minimum.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::estimator::{
    fit, fit_plain_pls, fit_single, fit_with_partition, kmeans, within_group_ss, Design,
    FitOptions, Membership,
};
use crate::linalg::population_sd;
use crate::metrics::adjusted_rand_index;
use crate::model::PathModelSpec;

/// Options for [`select_k`].
#[derive(Debug, Clone)]
pub struct SelectionOptions {
    /// Smallest candidate cluster count (usually 1).
    pub k_min: usize,
    /// Largest candidate cluster count.
    pub k_max: usize,
    /// Number of uniform reference datasets for the gap statistic.
    pub n_reference: usize,
    /// Random restarts for each reference k-means run.
    pub reference_starts: usize,
    /// Cluster the scores of one pooled (unclustered) estimate instead of
    /// refitting the joint model per candidate K. Cheaper, but inherits the
    /// pooled estimate's blind spots.
    pub use_plain_scores: bool,
    pub fit: FitOptions,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        Self {
            k_min: 1,
            k_max: 6,
            n_reference: 50,
            reference_starts: 3,
            use_plain_scores: false,
            fit: FitOptions::default(),
        }
    }
}

impl SelectionOptions {
    pub fn validate(&self) -> Result<()> {
        self.fit.validate()?;
        if self.k_min == 0 {
            return Err(Error::InvalidOptions("k_min must be at least 1".into()));
        }
        if self.k_max < self.k_min {
            return Err(Error::InvalidOptions(format!(
                "k_max ({}) must not be below k_min ({})",
                self.k_max, self.k_min
            )));
        }
        if self.n_reference == 0 || self.reference_starts == 0 {
            return Err(Error::InvalidOptions(
                "gap statistic needs at least one reference dataset and one start".into(),
            ));
        }
        Ok(())
    }
}

/// Everything measured for one candidate K.
#[derive(Debug, Clone, Serialize)]
pub struct KCandidate {
    pub k: usize,
    /// Joint-fit objective (or the within-SS itself for the plain-scores
    /// variant).
    pub objective: f64,
    /// Within-group sum of squares of the latent scores.
    pub within_ss: f64,
    /// Caliński–Harabasz ratio; undefined at K = 1.
    pub pseudo_f: Option<f64>,
    pub gap: f64,
    /// Standard error of the gap under the reference distribution.
    pub gap_sd: f64,
}

/// Result of [`select_k`].
#[derive(Debug, Clone, Serialize)]
pub struct KSelectionResult {
    pub candidates: Vec<KCandidate>,
    /// K with the largest pseudo-F (ties to the smallest K).
    pub chosen_k: usize,
    /// Smallest K whose gap is within one standard error of the next gap.
    pub gap_choice: Option<usize>,
    /// Number of reference datasets behind every gap value.
    pub reference_count: usize,
    /// True when neither heuristic gives a clear signal: the pseudo-F curve
    /// is nearly flat (relative range below 0.25) or the gap rule never
    /// fires.
    pub weak_evidence: bool,
    pub warnings: Vec<String>,
}

fn pseudo_f(total_ss: f64, within_ss: f64, n: usize, k: usize) -> Option<f64> {
    if k < 2 || n <= k {
        return None;
    }
    let between = (total_ss - within_ss).max(0.0);
    let num = between / (k as f64 - 1.0);
    let den = within_ss / (n as f64 - k as f64);
    if den == 0.0 {
        Some(f64::INFINITY)
    } else {
        Some(num / den)
    }
}

/// Gap statistic ingredients for one K: mean reference log-dispersion, its
/// standard error, and the resulting gap.
fn gap_for(
    scores: &DMatrix<f64>,
    within_ss: f64,
    k: usize,
    opts: &SelectionOptions,
    ref_seeder: &mut ChaCha8Rng,
) -> Result<(f64, f64)> {
    let n = scores.nrows();
    let p = scores.ncols();
    let mut lo = vec![f64::INFINITY; p];
    let mut hi = vec![f64::NEG_INFINITY; p];
    for c in 0..p {
        for r in 0..n {
            lo[c] = lo[c].min(scores[(r, c)]);
            hi[c] = hi[c].max(scores[(r, c)]);
        }
    }
    let mut log_refs = Vec::with_capacity(opts.n_reference);
    for _ in 0..opts.n_reference {
        let draw_seed: u64 = ref_seeder.random();
        let km_seed: u64 = ref_seeder.random();
        let mut rng = ChaCha8Rng::seed_from_u64(draw_seed);
        let reference = DMatrix::from_fn(n, p, |_, c| {
            lo[c] + (hi[c] - lo[c]) * rng.random::<f64>()
        });
        let km = kmeans(
            &reference,
            k,
            opts.reference_starts,
            opts.fit.max_iterations,
            km_seed,
        )?;
        log_refs.push(km.within_ss.ln());
    }
    let mean_log_ref = log_refs.iter().sum::<f64>() / log_refs.len() as f64;
    let sd = population_sd(&log_refs) * (1.0 + 1.0 / opts.n_reference as f64).sqrt();
    Ok((mean_log_ref - within_ss.ln(), sd))
}

/// Fit every candidate K and score it with the pseudo-F and gap heuristics.
///
/// Deterministic for fixed options. Candidate fits use multistart estimation
/// with `opts.fit`; the latent scores of each fit (data-based, `XΛ`) are what
/// both heuristics work on.
pub fn select_k(
    data: &DataMatrix,
    model: &PathModelSpec,
    opts: &SelectionOptions,
) -> Result<KSelectionResult> {
    opts.validate()?;
    let n = data.n_rows();
    if n <= opts.k_max {
        return Err(Error::TooFewRows {
            context: format!("selecting up to {} clusters", opts.k_max),
            minimum: opts.k_max + 1,
            found: n,
        });
    }
    let mut warnings = Vec::new();
    // Distinct deterministic streams: candidate fits use opts.fit.rng_seed
    // internally; references get their own seeder.
    let mut ref_seeder = ChaCha8Rng::seed_from_u64(opts.fit.rng_seed ^ 0x9e37_79b9_7f4a_7c15);

    let plain_scores = if opts.use_plain_scores {
        let pls = fit_plain_pls(data, model, &opts.fit)?;
        Some(pls.scores(data))
    } else {
        None
    };

    let mut candidates = Vec::new();
    for k in opts.k_min..=opts.k_max {
        let (scores, membership, objective) = match &plain_scores {
            Some(scores) => {
                let km = kmeans(
                    scores,
                    k,
                    opts.fit.n_starts,
                    opts.fit.max_iterations,
                    opts.fit.rng_seed,
                )?;
                (scores.clone(), km.membership, km.within_ss)
            }
            None => {
                let fitted = fit(data, model, k, &opts.fit)?;
                let scores = fitted.scores(data);
                (scores, fitted.membership.clone(), fitted.objective)
            }
        };
        let within = within_group_ss(&scores, &membership);
        let total = {
            let pooled = Membership::new(vec![0; n], 1)?;
            within_group_ss(&scores, &pooled)
        };
        let pf = pseudo_f(total, within, n, k);
        if pf == Some(f64::INFINITY) {
            warnings.push(format!(
                "K = {k}: within-group dispersion is zero; pseudo-F is infinite"
            ));
        }
        let (gap, gap_sd) = gap_for(&scores, within, k, opts, &mut ref_seeder)?;
        candidates.push(KCandidate {
            k,
            objective,
            within_ss: within,
            pseudo_f: pf,
            gap,
            gap_sd,
        });
    }

    // Pseudo-F choice: largest value, ties to the smallest K.
    let chosen_k = candidates
        .iter()
        .filter_map(|c| c.pseudo_f.map(|pf| (c.k, pf)))
        .fold(None::<(usize, f64)>, |best, (k, pf)| match best {
            Some((_, bf)) if pf <= bf => best,
            _ => Some((k, pf)),
        })
        .map(|(k, _)| k)
        .unwrap_or_else(|| {
            warnings.push(
                "pseudo-F is undefined for every candidate (need some K ≥ 2); \
                 falling back to the smallest candidate"
                    .into(),
            );
            opts.k_min
        });

    // Gap rule: smallest K with Gap(K) ≥ Gap(K+1) − s(K+1).
    let gap_choice = candidates
        .windows(2)
        .find(|w| w[0].gap >= w[1].gap - w[1].gap_sd)
        .map(|w| w[0].k);

    let finite_pf: Vec<f64> = candidates
        .iter()
        .filter_map(|c| c.pseudo_f)
        .filter(|v| v.is_finite())
        .collect();
    let flat_pseudo_f = match (
        finite_pf.iter().cloned().fold(f64::INFINITY, f64::min),
        finite_pf.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    ) {
        (lo, hi) if hi > 0.0 && finite_pf.len() >= 2 => (hi - lo) / hi < 0.25,
        _ => false,
    };
    let weak_evidence = flat_pseudo_f || gap_choice.is_none();

    Ok(KSelectionResult {
        candidates,
        chosen_k,
        gap_choice,
        reference_count: opts.n_reference,
        weak_evidence,
        warnings,
    })
}

/// How one restart ended, relative to a known grouping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunClass {
    /// The run recovered the known grouping exactly.
    TruePartition,
    /// The run found a *lower* objective than the known grouping allows —
    /// the loss rewards a partition other than the true one.
    Overfit,
    /// The run stalled above the known grouping's objective.
    LocalMinimum,
}

/// Tolerance below which two objective values count as the same fit.
///
/// Runs that converge to the same partition still stop their loading
/// iteration at slightly different points, so their objectives differ by an
/// amount that scales with the data's sum of squares (≈ rows × columns for
/// standardized data), not with the objective value itself.
pub fn objective_noise_tolerance(n_rows: usize, n_cols: usize) -> f64 {
    1e-6 * (n_rows * n_cols) as f64
}

/// Classify one restart against the known grouping's objective.
///
/// `ari_to_truth` of 1 means exact recovery; otherwise a run counts as
/// overfit when its objective undercuts `true_objective` by more than
/// `tolerance` (see [`objective_noise_tolerance`]), and as a local minimum
/// when it does not.
pub fn classify_run(
    objective: f64,
    ari_to_truth: f64,
    true_objective: f64,
    tolerance: f64,
) -> RunClass {
    if ari_to_truth >= 1.0 - 1e-12 {
        RunClass::TruePartition
    } else if objective < true_objective - tolerance {
        RunClass::Overfit
    } else {
        RunClass::LocalMinimum
    }
}

/// One restart's outcome.
#[derive(Debug, Clone, Serialize)]
pub struct RunDiagnostic {
    pub seed: u64,
    pub objective: f64,
    pub n_iterations: usize,
    pub converged: bool,
    /// Agreement with the known grouping, when one was given.
    pub ari_to_truth: Option<f64>,
    pub class: Option<RunClass>,
    /// Within [`objective_noise_tolerance`] of the best objective seen
    /// across all runs.
    pub is_global_best: bool,
}

/// Summary of [`restart_diagnostics`].
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticTable {
    pub runs: Vec<RunDiagnostic>,
    /// Objective of the known grouping (loadings refitted for it), when one
    /// was given.
    pub true_objective: Option<f64>,
    pub best_objective: f64,
    pub n_true_partition: usize,
    pub n_overfit: usize,
    pub n_local_minimum: usize,
    pub n_global_best: usize,
    /// Starts that failed outright (e.g. collapsed scores), with messages.
    pub failures: Vec<String>,
}

/// Run `n_runs` independent single starts and classify each one.
///
/// When `truth` is given, each run's partition is compared against it and
/// classified with [`classify_run`] relative to the truth's own objective
/// (computed by refitting the loadings with the partition held fixed).
pub fn restart_diagnostics(
    data: &DataMatrix,
    model: &PathModelSpec,
    k: usize,
    n_runs: usize,
    opts: &FitOptions,
    truth: Option<&[usize]>,
) -> Result<DiagnosticTable> {
    opts.validate()?;
    if n_runs == 0 {
        return Err(Error::InvalidOptions("n_runs must be at least 1".into()));
    }
    let design = Design::new(data, model)?;
    let tolerance = objective_noise_tolerance(data.n_rows(), data.n_cols());
    let true_objective = match truth {
        Some(labels) => Some(fit_with_partition(data, model, labels, k, opts)?.objective),
        None => None,
    };
    let mut seeder = ChaCha8Rng::seed_from_u64(opts.rng_seed);
    let seeds: Vec<u64> = (0..n_runs).map(|_| seeder.random()).collect();

    let mut runs = Vec::with_capacity(n_runs);
    let mut failures = Vec::new();
    for &seed in &seeds {
        match fit_single(&data.values, &design, k, seed, opts) {
            Ok(single) => {
                let ari = truth
                    .map(|labels| adjusted_rand_index(single.membership.labels(), labels));
                let class = match (ari, true_objective) {
                    (Some(a), Some(t)) => Some(classify_run(single.objective, a, t, tolerance)),
                    _ => None,
                };
                runs.push(RunDiagnostic {
                    seed,
                    objective: single.objective,
                    n_iterations: single.n_iterations,
                    converged: single.converged,
                    ari_to_truth: ari,
                    class,
                    is_global_best: false, // filled below
                });
            }
            Err(e) => failures.push(format!("seed {seed}: {e}")),
        }
    }
    if runs.is_empty() {
        return Err(Error::AllStartsFailed {
            count: n_runs,
            first: failures
                .first()
                .cloned()
                .unwrap_or_else(|| "no runs".into()),
        });
    }
    let best_objective = runs
        .iter()
        .map(|r| r.objective)
        .fold(f64::INFINITY, f64::min);
    for r in &mut runs {
        r.is_global_best = r.objective <= best_objective + tolerance;
    }
    let count = |c: RunClass| runs.iter().filter(|r| r.class == Some(c)).count();
    Ok(DiagnosticTable {
        n_true_partition: count(RunClass::TruePartition),
        n_overfit: count(RunClass::Overfit),
        n_local_minimum: count(RunClass::LocalMinimum),
        n_global_best: runs.iter().filter(|r| r.is_global_best).count(),
        best_objective,
        true_objective,
        runs,
        failures,
    })
}
