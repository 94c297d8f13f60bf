//! The alternating estimator: one least-squares problem couples a clustered
//! mean structure on the rows with a latent-block structure on the columns.
//!
//! Given standardized data `X` (n×J), a number of clusters `K`, and a path
//! model with `P` latent variables, the estimator minimizes
//!
//! ```text
//! ‖X − U C Λ Λᵀ‖²
//! ```
//!
//! over a binary row partition `U` (n×K, nonempty clusters), cluster centroids
//! `C` (K×J), and a block-structured loading matrix `Λ` (J×P, unit-norm
//! columns, nonzero only where the model assigns a manifest variable to a
//! latent variable). Each sweep updates the loadings from inner-weighted
//! latent scores, reassigns every row to the nearest projected centroid, and
//! recomputes the centroids, until the latent centroids `CΛ` stop moving.
//!
//! Entry points:
//!
//! - [`fit`]: multistart estimation (the usual choice),
//! - [`fit_single_start`]: one run from one seed,
//! - [`fit_with_partition`]: loadings for a fixed row partition,
//! - [`fit_plain_pls`]: the loading/score half alone, no clustering,
//! - [`tandem`]: the two-step baseline (scores first, k-means after),
//! - [`kmeans`]: plain k-means on arbitrary row vectors.
//!
//! The individual sweep steps are exposed on [`Design`] so that diagnostics
//! and tests can replay or instrument the alternation.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::linalg::{column_covariance, lstsq, sample_sd};
use crate::model::PathModelSpec;

/// A hard row partition into `k` clusters, labels `0..k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Membership {
    labels: Vec<usize>,
    k: usize,
}

impl Membership {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidOptions("need at least one cluster".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::InvalidOptions(format!(
                "label {bad} is out of range for {k} clusters"
            )));
        }
        Ok(Self { labels, k })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_clusters(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Rows per cluster.
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.k];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// n×k binary indicator matrix.
    pub fn indicator(&self) -> DMatrix<f64> {
        let mut u = DMatrix::zeros(self.labels.len(), self.k);
        for (i, &l) in self.labels.iter().enumerate() {
            u[(i, l)] = 1.0;
        }
        u
    }

    /// Labels shifted to 1..=k, the convention used in serialized output.
    pub fn one_based(&self) -> Vec<usize> {
        self.labels.iter().map(|&l| l + 1).collect()
    }
}

/// Options shared by the fitting entry points.
#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Stop when the squared change of the latent centroids `CΛ` between
    /// sweeps falls to this value or below.
    pub tolerance: f64,
    /// Hard cap on alternation sweeps per start.
    pub max_iterations: usize,
    /// Number of random restarts in [`fit`].
    pub n_starts: usize,
    /// Seed for everything random; equal seeds give bit-identical results.
    pub rng_seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-12,
            max_iterations: 300,
            n_starts: 15,
            rng_seed: 42,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::InvalidOptions(format!(
                "tolerance must be a positive finite number, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidOptions(
                "max_iterations must be at least 1".into(),
            ));
        }
        if self.n_starts == 0 {
            return Err(Error::InvalidOptions("n_starts must be at least 1".into()));
        }
        Ok(())
    }
}

/// What happened in one random start of [`fit`].
#[derive(Debug, Clone)]
pub struct StartRun {
    pub seed: u64,
    pub outcome: StartOutcome,
}

#[derive(Debug, Clone)]
pub enum StartOutcome {
    Finished {
        objective: f64,
        n_iterations: usize,
        converged: bool,
    },
    Failed {
        message: String,
    },
}

impl StartRun {
    pub fn objective(&self) -> Option<f64> {
        match &self.outcome {
            StartOutcome::Finished { objective, .. } => Some(*objective),
            StartOutcome::Failed { .. } => None,
        }
    }
}

/// A fitted model: partition, centroids, loadings, and path coefficients.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub model: PathModelSpec,
    pub n_clusters: usize,
    /// Names of the data columns the loadings span (model manifest variables
    /// plus any extra data columns, which get all-zero loading rows).
    pub column_names: Vec<String>,
    /// J×P loadings, unit-norm columns, zero outside the model's blocks.
    pub loadings: DMatrix<f64>,
    /// K×J cluster centroids in the standardized data space.
    pub centroids: DMatrix<f64>,
    pub membership: Membership,
    /// P×P standardized path coefficients; entry `(target, source)` is the
    /// coefficient of `source` in the regression explaining `target`, exactly
    /// 0.0 where the model has no path.
    pub path_coefficients: DMatrix<f64>,
    /// Final value of `‖X − U C Λ Λᵀ‖²`.
    pub objective: f64,
    /// Objective after initialization and after each sweep
    /// (`objective_trace.len() == n_iterations + 1`).
    pub objective_trace: Vec<f64>,
    pub n_iterations: usize,
    pub converged: bool,
    /// Per-start diagnostics from multistart fitting; a single entry when a
    /// single start was requested.
    pub start_runs: Vec<StartRun>,
    /// Index into `start_runs` of the run this model came from.
    pub best_start: usize,
}

impl FittedModel {
    /// Latent scores of (new or training) data columns: `XΛ`.
    pub fn scores(&self, data: &DataMatrix) -> DMatrix<f64> {
        &data.values * &self.loadings
    }

    /// Model-implied latent scores `U C Λ`: every row gets its cluster's
    /// latent centroid.
    pub fn fitted_scores(&self) -> DMatrix<f64> {
        let latent = self.latent_centroids();
        let mut out = DMatrix::zeros(self.membership.len(), latent.ncols());
        for (i, &l) in self.membership.labels().iter().enumerate() {
            out.set_row(i, &latent.row(l));
        }
        out
    }

    /// K×P cluster centroids in latent space: `CΛ`.
    pub fn latent_centroids(&self) -> DMatrix<f64> {
        &self.centroids * &self.loadings
    }
}

/// A path model aligned to a concrete set of data columns, with everything
/// the sweep steps need precomputed.
///
/// The data may contain columns the model does not mention; they get all-zero
/// loading rows, never influence the row assignment, and add a constant to
/// the objective.
#[derive(Debug, Clone)]
pub struct Design {
    model: PathModelSpec,
    column_names: Vec<String>,
    /// For each model manifest variable, its data column index.
    mv_to_col: Vec<usize>,
    /// J×P 0/1 mask of allowed loadings (data-column indexed).
    support: DMatrix<f64>,
    /// J×P initial loadings: the mask with unit-normalized columns.
    lambda_init: DMatrix<f64>,
    /// P×P symmetrized structural adjacency.
    d_sym: DMatrix<f64>,
}

impl Design {
    /// Validate `model` and align it to the columns of `data`.
    pub fn new(data: &DataMatrix, model: &PathModelSpec) -> Result<Self> {
        model.validate().into_result()?;
        let mut mv_to_col = Vec::with_capacity(model.n_mvs());
        for name in model.mv_names() {
            mv_to_col.push(data.column_index(name)?);
        }
        let j = data.n_cols();
        let p = model.n_lvs();
        let mut support = DMatrix::zeros(j, p);
        for (mv, &col) in mv_to_col.iter().enumerate() {
            support[(col, model.lv_of_mv(mv))] = 1.0;
        }
        let mut lambda_init = support.clone();
        for mut col in lambda_init.column_iter_mut() {
            let norm = col.norm();
            col.scale_mut(1.0 / norm);
        }
        Ok(Self {
            model: model.clone(),
            column_names: data.column_names.clone(),
            mv_to_col,
            support,
            lambda_init,
            d_sym: model.structural_symmetric(),
        })
    }

    pub fn model(&self) -> &PathModelSpec {
        &self.model
    }

    pub fn n_data_columns(&self) -> usize {
        self.support.nrows()
    }

    pub fn n_lvs(&self) -> usize {
        self.support.ncols()
    }

    /// Data column index of each model manifest variable.
    pub fn mv_columns(&self) -> &[usize] {
        &self.mv_to_col
    }

    /// J×P 0/1 loading mask.
    pub fn support(&self) -> &DMatrix<f64> {
        &self.support
    }

    /// Starting loadings: the mask with each column scaled to unit norm.
    pub fn initial_loadings(&self) -> &DMatrix<f64> {
        &self.lambda_init
    }

    /// Inner weights `W = D ⊙ Σ_Y`: the score covariance masked by the
    /// symmetrized structural adjacency.
    ///
    /// # Errors
    ///
    /// [`Error::Collapse`] when the scores carry (numerically) no variation,
    /// which would zero out every weight.
    pub fn inner_weights(&self, y: &DMatrix<f64>, iteration: usize) -> Result<DMatrix<f64>> {
        let sigma = column_covariance(y);
        let scale = 1.0 + y.norm_squared() / y.nrows() as f64;
        if sigma.norm() <= 1e-20 * scale {
            return Err(Error::Collapse { iteration });
        }
        Ok(sigma.component_mul(&self.d_sym))
    }

    /// Scores mixed along the structural design: `Y W`.
    pub fn weighted_scores(&self, y: &DMatrix<f64>, iteration: usize) -> Result<DMatrix<f64>> {
        Ok(y * self.inner_weights(y, iteration)?)
    }

    /// Loading update: regress the target rows (`UC` during clustering, `X`
    /// itself for the unclustered variant) onto the weighted scores, then
    /// restrict to the support and renormalize.
    ///
    /// The least-squares step uses the minimum-norm solution, because
    /// structural designs routinely make the weighted-score columns linearly
    /// dependent (two exogenous variables explaining the same endogenous one
    /// produce proportional columns). Each column is scaled to unit norm and
    /// flipped, if needed, so its loadings sum positive.
    pub fn update_loadings(
        &self,
        y_w: &DMatrix<f64>,
        target: &DMatrix<f64>,
        iteration: usize,
    ) -> Result<DMatrix<f64>> {
        let theta = lstsq(y_w, target)?; // P×J
        let mut lambda = theta.transpose();
        lambda.component_mul_assign(&self.support);
        for (p, mut col) in lambda.column_iter_mut().enumerate() {
            let norm = col.norm();
            if norm <= 1e-12 {
                return Err(Error::SingularAt {
                    context: format!(
                        "loading update: column for latent variable {:?} vanished",
                        self.model.lv_names()[p]
                    ),
                    iteration,
                });
            }
            let flip = if col.sum() < 0.0 { -1.0 } else { 1.0 };
            col.scale_mut(flip / norm);
        }
        Ok(lambda)
    }

    /// Assign every row of `x` to the nearest projected centroid `c_k Λ Λᵀ`
    /// (squared Euclidean distance, ties to the lowest cluster index), then
    /// repair empty clusters. Returns the membership and whether any repair
    /// was needed.
    ///
    /// Repair handles empty clusters in ascending index order; each receives
    /// the row with the largest distance to its own projected centroid among
    /// rows whose cluster keeps at least two members.
    pub fn assign(
        &self,
        x: &DMatrix<f64>,
        c: &DMatrix<f64>,
        lambda: &DMatrix<f64>,
    ) -> Result<(Membership, bool)> {
        let m = projected_centroids(c, lambda);
        assign_to_centroids(x, &m)
    }

    /// The residual sum of squares `‖X − U C Λ Λᵀ‖²`, computed literally.
    pub fn objective(
        &self,
        x: &DMatrix<f64>,
        membership: &Membership,
        c: &DMatrix<f64>,
        lambda: &DMatrix<f64>,
    ) -> f64 {
        let m = projected_centroids(c, lambda);
        membership
            .labels()
            .iter()
            .enumerate()
            .map(|(i, &l)| row_dist2(x, i, &m, l))
            .sum()
    }
}

/// K×J matrix of projected centroids `C Λ Λᵀ`.
fn projected_centroids(c: &DMatrix<f64>, lambda: &DMatrix<f64>) -> DMatrix<f64> {
    (c * lambda) * lambda.transpose()
}

/// Squared Euclidean distance between row `i` of `a` and row `j` of `b`.
fn row_dist2(a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize) -> f64 {
    let mut s = 0.0;
    for col in 0..a.ncols() {
        let d = a[(i, col)] - b[(j, col)];
        s += d * d;
    }
    s
}

/// Nearest-row assignment with empty-cluster repair; `m` holds one reference
/// row per cluster. Shared by the joint estimator (projected centroids) and
/// plain k-means (plain centroids).
fn assign_to_centroids(x: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<(Membership, bool)> {
    let n = x.nrows();
    let k = m.nrows();
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let mut best = 0usize;
        let mut best_d = row_dist2(x, i, m, 0);
        for kk in 1..k {
            let d = row_dist2(x, i, m, kk);
            if d < best_d {
                best = kk;
                best_d = d;
            }
        }
        labels.push(best);
    }
    let mut counts = vec![0usize; k];
    for &l in &labels {
        counts[l] += 1;
    }
    let mut repaired = false;
    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        // Donate the worst-fitting row from a cluster that can spare one.
        let mut donor: Option<(usize, f64)> = None;
        for i in 0..n {
            if counts[labels[i]] < 2 {
                continue;
            }
            let d = row_dist2(x, i, m, labels[i]);
            if donor.map_or(true, |(_, bd)| d > bd) {
                donor = Some((i, d));
            }
        }
        let (i, _) = donor.ok_or_else(|| Error::EmptyCluster { cluster: empty + 1 })?;
        counts[labels[i]] -= 1;
        labels[i] = empty;
        counts[empty] += 1;
        repaired = true;
    }
    Ok((Membership::new(labels, k)?, repaired))
}

/// K×J cluster means of `x` under `membership`. Clusters must be nonempty.
pub fn cluster_means(x: &DMatrix<f64>, membership: &Membership) -> DMatrix<f64> {
    let k = membership.n_clusters();
    let j = x.ncols();
    let mut sums = DMatrix::zeros(k, j);
    let counts = membership.counts();
    for (i, &l) in membership.labels().iter().enumerate() {
        for col in 0..j {
            sums[(l, col)] += x[(i, col)];
        }
    }
    for l in 0..k {
        let c = counts[l].max(1) as f64;
        for col in 0..j {
            sums[(l, col)] /= c;
        }
    }
    sums
}

/// n×J matrix whose row `i` is the centroid of row `i`'s cluster (`UC`).
fn assigned_means(membership: &Membership, c: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(membership.len(), c.ncols());
    for (i, &l) in membership.labels().iter().enumerate() {
        out.set_row(i, &c.row(l));
    }
    out
}

/// Uniform random membership with every cluster nonempty. Falls back to a
/// shuffled round-robin seed if rejection sampling keeps missing (only likely
/// when `k` is close to `n`).
fn random_membership(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Membership {
    debug_assert!(n >= k && k >= 1);
    for _ in 0..1000 {
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let mut seen = vec![false; k];
        for &l in &labels {
            seen[l] = true;
        }
        if seen.iter().all(|&s| s) {
            return Membership { labels, k };
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut labels = vec![0usize; n];
    for (slot, &row) in order.iter().enumerate() {
        labels[row] = if slot < k {
            slot
        } else {
            rng.random_range(0..k)
        };
    }
    Membership { labels, k }
}

/// Sum of squared distances of each row to its cluster's mean row.
pub fn within_group_ss(points: &DMatrix<f64>, membership: &Membership) -> f64 {
    let c = cluster_means(points, membership);
    membership
        .labels()
        .iter()
        .enumerate()
        .map(|(i, &l)| row_dist2(points, i, &c, l))
        .sum()
}

/// Result of one complete alternation run (no path coefficients yet).
pub(crate) struct SingleFit {
    pub(crate) membership: Membership,
    pub(crate) centroids: DMatrix<f64>,
    pub(crate) lambda: DMatrix<f64>,
    pub(crate) objective: f64,
    pub(crate) trace: Vec<f64>,
    pub(crate) n_iterations: usize,
    pub(crate) converged: bool,
}

fn trivial_single_cluster_fit(x: &DMatrix<f64>, design: &Design) -> SingleFit {
    let membership = Membership {
        labels: vec![0; x.nrows()],
        k: 1,
    };
    let centroids = cluster_means(x, &membership);
    let lambda = design.initial_loadings().clone();
    let objective = design.objective(x, &membership, &centroids, &lambda);
    SingleFit {
        membership,
        centroids,
        lambda,
        objective,
        trace: vec![objective],
        n_iterations: 0,
        converged: true,
    }
}

pub(crate) fn fit_single(
    x: &DMatrix<f64>,
    design: &Design,
    k: usize,
    seed: u64,
    opts: &FitOptions,
) -> Result<SingleFit> {
    let n = x.nrows();
    if k == 0 {
        return Err(Error::InvalidOptions("need at least one cluster".into()));
    }
    if n < k {
        return Err(Error::TooFewRows {
            context: format!("clustering into {k} groups"),
            minimum: k,
            found: n,
        });
    }
    if k == 1 {
        // One cluster means the centroid is the grand mean — zero for
        // standardized data — and the alternation has nothing to update.
        return Ok(trivial_single_cluster_fit(x, design));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut membership = random_membership(n, k, &mut rng);
    let mut centroids = cluster_means(x, &membership);
    let mut lambda = design.initial_loadings().clone();
    let mut trace = vec![design.objective(x, &membership, &centroids, &lambda)];
    let mut converged = false;
    let mut n_iterations = 0;

    for iteration in 1..=opts.max_iterations {
        let y = x * &lambda;
        let y_w = design.weighted_scores(&y, iteration)?;
        let target = assigned_means(&membership, &centroids);
        let lambda_new = design.update_loadings(&y_w, &target, iteration)?;
        let (membership_new, _) = design.assign(x, &centroids, &lambda_new)?;
        let centroids_new = cluster_means(x, &membership_new);

        let drift = (&centroids * &lambda - &centroids_new * &lambda_new).norm_squared();
        membership = membership_new;
        centroids = centroids_new;
        lambda = lambda_new;
        n_iterations = iteration;
        trace.push(design.objective(x, &membership, &centroids, &lambda));
        if drift <= opts.tolerance {
            converged = true;
            break;
        }
    }

    let objective = *trace.last().unwrap();
    Ok(SingleFit {
        membership,
        centroids,
        lambda,
        objective,
        trace,
        n_iterations,
        converged,
    })
}

/// Structural regressions: standardized path coefficients plus the R² of
/// each regression.
#[derive(Debug, Clone)]
pub struct StructuralFit {
    /// P×P coefficients, entry `(target, source)`; exactly zero off the
    /// model's paths.
    pub coefficients: DMatrix<f64>,
    /// Per latent variable: `Some(R²)` for a regression target, `None` for
    /// variables without predecessors.
    pub r_squared: Vec<Option<f64>>,
}

/// Run every structural regression on the given latent scores.
///
/// Each endogenous latent variable is regressed (ordinary least squares, no
/// intercept beyond centering) on all of its direct predecessors at once;
/// scores are standardized first, so coefficients are comparable across
/// variables. When the predecessors are collinear — degenerate data can
/// collapse two score columns onto one line — the regression falls back to
/// the minimum-norm coefficients: fitted values and R² stay well defined
/// even though the individual coefficients are no longer identified.
///
/// # Errors
///
/// [`Error::Singular`] naming the latent variable when its scores are
/// (near) constant, leaving nothing to standardize.
pub fn structural_fit(scores: &DMatrix<f64>, model: &PathModelSpec) -> Result<StructuralFit> {
    let n = scores.nrows();
    let p = model.n_lvs();
    debug_assert_eq!(scores.ncols(), p);
    if n < 2 {
        return Err(Error::TooFewRows {
            context: "path coefficient estimation".into(),
            minimum: 2,
            found: n,
        });
    }
    let mut std_scores = scores.clone();
    for (idx, mut col) in std_scores.column_iter_mut().enumerate() {
        let mean = col.sum() / n as f64;
        col.add_scalar_mut(-mean);
        let sd = sample_sd(col.as_slice());
        if sd <= 1e-12 {
            return Err(Error::Singular {
                context: format!(
                    "path coefficients: latent variable {:?} has constant scores",
                    model.lv_names()[idx]
                ),
            });
        }
        col.scale_mut(1.0 / sd);
    }
    let mut coef = DMatrix::zeros(p, p);
    let mut r_squared = vec![None; p];
    for target in 0..p {
        let preds = model.predecessors(target);
        if preds.is_empty() {
            continue;
        }
        let mut design = DMatrix::zeros(n, preds.len());
        for (c, &s) in preds.iter().enumerate() {
            design.set_column(c, &std_scores.column(s));
        }
        let y = std_scores.columns(target, 1).into_owned();
        let beta = lstsq(&design, &y)?;
        // y is standardized, so its centered sum of squares is n−1.
        let resid = &y - design * &beta;
        r_squared[target] = Some(1.0 - resid.norm_squared() / (n as f64 - 1.0));
        for (c, &s) in preds.iter().enumerate() {
            coef[(target, s)] = beta[(c, 0)];
        }
    }
    Ok(StructuralFit {
        coefficients: coef,
        r_squared,
    })
}

/// Standardized path coefficients from latent scores; see [`structural_fit`].
pub fn path_coefficients(scores: &DMatrix<f64>, model: &PathModelSpec) -> Result<DMatrix<f64>> {
    Ok(structural_fit(scores, model)?.coefficients)
}

fn finish(
    data: &DataMatrix,
    design: &Design,
    single: SingleFit,
    k: usize,
    start_runs: Vec<StartRun>,
    best_start: usize,
) -> Result<FittedModel> {
    let scores = &data.values * &single.lambda;
    let coef = path_coefficients(&scores, design.model())?;
    Ok(FittedModel {
        model: design.model().clone(),
        n_clusters: k,
        column_names: design.column_names.clone(),
        loadings: single.lambda,
        centroids: single.centroids,
        membership: single.membership,
        path_coefficients: coef,
        objective: single.objective,
        objective_trace: single.trace,
        n_iterations: single.n_iterations,
        converged: single.converged,
        start_runs,
        best_start,
    })
}

/// Fit with `opts.n_starts` random restarts and keep the best run (lowest
/// objective; ties go to the earliest start). Deterministic for a fixed seed.
///
/// # Errors
///
/// [`Error::AllStartsFailed`] when no start finishes; individual failures are
/// otherwise recorded in [`FittedModel::start_runs`] and tolerated.
pub fn fit(
    data: &DataMatrix,
    model: &PathModelSpec,
    k: usize,
    opts: &FitOptions,
) -> Result<FittedModel> {
    opts.validate()?;
    let design = Design::new(data, model)?;
    let mut seeder = ChaCha8Rng::seed_from_u64(opts.rng_seed);
    let seeds: Vec<u64> = (0..opts.n_starts).map(|_| seeder.random()).collect();

    let runs: Vec<Result<SingleFit>> = seeds
        .par_iter()
        .map(|&seed| fit_single(&data.values, &design, k, seed, opts))
        .collect();

    let mut start_runs = Vec::with_capacity(runs.len());
    let mut best: Option<(usize, f64)> = None;
    let mut singles: Vec<Option<SingleFit>> = Vec::with_capacity(runs.len());
    let mut first_error: Option<String> = None;
    for (idx, run) in runs.into_iter().enumerate() {
        match run {
            Ok(single) => {
                start_runs.push(StartRun {
                    seed: seeds[idx],
                    outcome: StartOutcome::Finished {
                        objective: single.objective,
                        n_iterations: single.n_iterations,
                        converged: single.converged,
                    },
                });
                if best.map_or(true, |(_, b)| single.objective < b) {
                    best = Some((idx, single.objective));
                }
                singles.push(Some(single));
            }
            Err(e) => {
                if first_error.is_none() {
                    first_error = Some(e.to_string());
                }
                start_runs.push(StartRun {
                    seed: seeds[idx],
                    outcome: StartOutcome::Failed {
                        message: e.to_string(),
                    },
                });
                singles.push(None);
            }
        }
    }
    let (best_start, _) = best.ok_or_else(|| Error::AllStartsFailed {
        count: opts.n_starts,
        first: first_error.unwrap_or_else(|| "no starts were run".into()),
    })?;
    let single = singles[best_start].take().unwrap();
    finish(data, &design, single, k, start_runs, best_start)
}

/// One alternation run from one seed.
pub fn fit_single_start(
    data: &DataMatrix,
    model: &PathModelSpec,
    k: usize,
    seed: u64,
    opts: &FitOptions,
) -> Result<FittedModel> {
    opts.validate()?;
    let design = Design::new(data, model)?;
    let single = fit_single(&data.values, &design, k, seed, opts)?;
    let run = StartRun {
        seed,
        outcome: StartOutcome::Finished {
            objective: single.objective,
            n_iterations: single.n_iterations,
            converged: single.converged,
        },
    };
    finish(data, &design, single, k, vec![run], 0)
}

/// Estimate loadings and paths for a partition that is held fixed.
///
/// The row assignment step is skipped; only the loadings iterate (the
/// centroids are determined by the fixed partition). Used to evaluate how
/// well a known grouping can be fitted.
pub fn fit_with_partition(
    data: &DataMatrix,
    model: &PathModelSpec,
    labels: &[usize],
    k: usize,
    opts: &FitOptions,
) -> Result<FittedModel> {
    opts.validate()?;
    let design = Design::new(data, model)?;
    let x = &data.values;
    if labels.len() != x.nrows() {
        return Err(Error::Dimension {
            context: "fixed partition".into(),
            expected: format!("{} labels", x.nrows()),
            found: format!("{}", labels.len()),
        });
    }
    let membership = Membership::new(labels.to_vec(), k)?;
    if let Some(empty) = membership.counts().iter().position(|&c| c == 0) {
        return Err(Error::EmptyCluster { cluster: empty + 1 });
    }

    if k == 1 {
        let single = trivial_single_cluster_fit(x, &design);
        let run = StartRun {
            seed: opts.rng_seed,
            outcome: StartOutcome::Finished {
                objective: single.objective,
                n_iterations: 0,
                converged: true,
            },
        };
        return finish(data, &design, single, k, vec![run], 0);
    }

    let centroids = cluster_means(x, &membership);
    let target = assigned_means(&membership, &centroids);
    let mut lambda = design.initial_loadings().clone();
    let mut trace = vec![design.objective(x, &membership, &centroids, &lambda)];
    let mut converged = false;
    let mut n_iterations = 0;
    for iteration in 1..=opts.max_iterations {
        let y = x * &lambda;
        let y_w = design.weighted_scores(&y, iteration)?;
        let lambda_new = design.update_loadings(&y_w, &target, iteration)?;
        let drift = (&centroids * (&lambda - &lambda_new)).norm_squared();
        lambda = lambda_new;
        n_iterations = iteration;
        trace.push(design.objective(x, &membership, &centroids, &lambda));
        if drift <= opts.tolerance {
            converged = true;
            break;
        }
    }
    let objective = *trace.last().unwrap();
    let single = SingleFit {
        membership,
        centroids,
        lambda,
        objective,
        trace,
        n_iterations,
        converged,
    };
    let run = StartRun {
        seed: opts.rng_seed,
        outcome: StartOutcome::Finished {
            objective,
            n_iterations,
            converged,
        },
    };
    finish(data, &design, single, k, vec![run], 0)
}

/// The loading/score half of the estimator without any clustering: every row
/// is its own group, so the loadings are regressed against the data itself.
#[derive(Debug, Clone)]
pub struct PlainPlsFit {
    pub model: PathModelSpec,
    pub column_names: Vec<String>,
    pub loadings: DMatrix<f64>,
    pub path_coefficients: DMatrix<f64>,
    pub n_iterations: usize,
    pub converged: bool,
}

impl PlainPlsFit {
    /// Latent scores `XΛ`.
    pub fn scores(&self, data: &DataMatrix) -> DMatrix<f64> {
        &data.values * &self.loadings
    }
}

/// Fit the latent structure without clustering the rows.
pub fn fit_plain_pls(
    data: &DataMatrix,
    model: &PathModelSpec,
    opts: &FitOptions,
) -> Result<PlainPlsFit> {
    opts.validate()?;
    let design = Design::new(data, model)?;
    let x = &data.values;
    let mut lambda = design.initial_loadings().clone();
    let mut converged = false;
    let mut n_iterations = 0;
    for iteration in 1..=opts.max_iterations {
        let y = x * &lambda;
        let y_w = design.weighted_scores(&y, iteration)?;
        let lambda_new = design.update_loadings(&y_w, x, iteration)?;
        let drift = (x * (&lambda - &lambda_new)).norm_squared();
        lambda = lambda_new;
        n_iterations = iteration;
        if drift <= opts.tolerance {
            converged = true;
            break;
        }
    }
    let scores = x * &lambda;
    let coef = path_coefficients(&scores, design.model())?;
    Ok(PlainPlsFit {
        model: design.model().clone(),
        column_names: data.column_names.clone(),
        loadings: lambda,
        path_coefficients: coef,
        n_iterations,
        converged,
    })
}

/// The two-step baseline: estimate the latent structure on the pooled data,
/// then k-means on the resulting scores.
#[derive(Debug, Clone)]
pub struct TandemFit {
    pub pls: PlainPlsFit,
    pub membership: Membership,
    /// K×P centroids in score space.
    pub centroids: DMatrix<f64>,
    pub within_ss: f64,
}

pub fn tandem(
    data: &DataMatrix,
    model: &PathModelSpec,
    k: usize,
    opts: &FitOptions,
) -> Result<TandemFit> {
    let pls = fit_plain_pls(data, model, opts)?;
    let scores = pls.scores(data);
    let km = kmeans(&scores, k, opts.n_starts, opts.max_iterations, opts.rng_seed)?;
    Ok(TandemFit {
        pls,
        membership: km.membership,
        centroids: km.centroids,
        within_ss: km.within_ss,
    })
}

/// Result of [`kmeans`].
#[derive(Debug, Clone)]
pub struct KmeansFit {
    pub membership: Membership,
    pub centroids: DMatrix<f64>,
    /// Sum of squared distances of each row to its centroid.
    pub within_ss: f64,
    pub n_iterations: usize,
    pub converged: bool,
}

fn kmeans_once(points: &DMatrix<f64>, k: usize, max_iterations: usize, seed: u64) -> Result<KmeansFit> {
    let n = points.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Start from k distinct rows.
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut centroids = DMatrix::zeros(k, points.ncols());
    for (slot, &row) in order.iter().take(k).enumerate() {
        centroids.set_row(slot, &points.row(row));
    }
    let mut membership = assign_to_centroids(points, &centroids)?.0;
    let mut converged = false;
    let mut n_iterations = 0;
    for iteration in 1..=max_iterations {
        centroids = cluster_means(points, &membership);
        let next = assign_to_centroids(points, &centroids)?.0;
        n_iterations = iteration;
        let unchanged = next == membership;
        membership = next;
        if unchanged {
            converged = true;
            break;
        }
    }
    centroids = cluster_means(points, &membership);
    let within_ss = membership
        .labels()
        .iter()
        .enumerate()
        .map(|(i, &l)| row_dist2(points, i, &centroids, l))
        .sum();
    Ok(KmeansFit {
        membership,
        centroids,
        within_ss,
        n_iterations,
        converged,
    })
}

/// Multistart Lloyd k-means with the same tie and empty-cluster rules as the
/// joint estimator. Deterministic for a fixed seed.
pub fn kmeans(
    points: &DMatrix<f64>,
    k: usize,
    n_starts: usize,
    max_iterations: usize,
    seed: u64,
) -> Result<KmeansFit> {
    if k == 0 {
        return Err(Error::InvalidOptions("need at least one cluster".into()));
    }
    if n_starts == 0 {
        return Err(Error::InvalidOptions("n_starts must be at least 1".into()));
    }
    if points.nrows() < k {
        return Err(Error::TooFewRows {
            context: format!("k-means with {k} clusters"),
            minimum: k,
            found: points.nrows(),
        });
    }
    let mut seeder = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..n_starts).map(|_| seeder.random()).collect();
    let mut best: Option<KmeansFit> = None;
    for s in seeds {
        let run = kmeans_once(points, k, max_iterations, s)?;
        if best.as_ref().map_or(true, |b| run.within_ss < b.within_ss) {
            best = Some(run);
        }
    }
    Ok(best.unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_valid_model;
    use approx::assert_abs_diff_eq;

    fn tiny_model() -> PathModelSpec {
        parse_valid_model(
            "lv DRIVER exogenous\n\
             lv OUTCOME endogenous\n\
             mv x1 -> DRIVER\n\
             mv x2 -> DRIVER\n\
             mv x3 -> OUTCOME\n\
             mv x4 -> OUTCOME\n\
             path DRIVER -> OUTCOME\n",
        )
        .unwrap()
    }

    /// Eight rows in two perfectly separated groups; every column is the
    /// group signal, so the standardized rows are ±sqrt(7/8)·(1,1,1,1).
    fn separated_data(extra_noise_column: bool) -> DataMatrix {
        let mut names: Vec<String> = (1..=4).map(|i| format!("x{i}")).collect();
        let mut cols = 4;
        if extra_noise_column {
            names.push("junk".into());
            cols = 5;
        }
        let mut raw = DMatrix::zeros(8, cols);
        for i in 0..8 {
            let v = if i < 4 { 5.0 } else { 1.0 };
            for c in 0..4 {
                raw[(i, c)] = v;
            }
            if extra_noise_column {
                // Any non-constant values work; they are outside the model.
                raw[(i, 4)] = (i as f64) * 0.7 + if i % 2 == 0 { 0.3 } else { -0.4 };
            }
        }
        DataMatrix::standardize(&raw, &names).unwrap()
    }

    fn same_partition(a: &[usize], b: &[usize]) -> bool {
        use std::collections::BTreeMap;
        let mut map: BTreeMap<usize, usize> = BTreeMap::new();
        let mut rev: BTreeMap<usize, usize> = BTreeMap::new();
        for (&x, &y) in a.iter().zip(b) {
            if *map.entry(x).or_insert(y) != y {
                return false;
            }
            if *rev.entry(y).or_insert(x) != x {
                return false;
            }
        }
        true
    }

    #[test]
    fn initial_loadings_normalize_each_block_column() {
        let data = separated_data(false);
        let design = Design::new(&data, &tiny_model()).unwrap();
        let l = design.initial_loadings();
        let inv_sqrt2 = 1.0 / std::f64::consts::SQRT_2;
        assert_abs_diff_eq!(l[(0, 0)], inv_sqrt2, epsilon = 1e-15);
        assert_abs_diff_eq!(l[(1, 0)], inv_sqrt2, epsilon = 1e-15);
        assert_abs_diff_eq!(l[(2, 1)], inv_sqrt2, epsilon = 1e-15);
        assert_abs_diff_eq!(l[(3, 1)], inv_sqrt2, epsilon = 1e-15);
        assert_eq!(l[(0, 1)], 0.0);
        assert_eq!(l[(2, 0)], 0.0);
    }

    #[test]
    fn cluster_means_match_hand_averages() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 3.0, 4.0, 10.0, 20.0, 30.0, 40.0]);
        let m = Membership::new(vec![0, 0, 1, 1], 2).unwrap();
        let c = cluster_means(&x, &m);
        assert_abs_diff_eq!(c[(0, 0)], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c[(0, 1)], 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c[(1, 0)], 20.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c[(1, 1)], 30.0, epsilon = 1e-15);
    }

    #[test]
    fn assignment_picks_nearest_centroid_with_ties_to_lowest_index() {
        // Identity-like loadings on two single-MV blocks make the projection
        // the identity, so distances are plain Euclidean.
        let model = parse_valid_model(
            "lv A exogenous\nlv B endogenous\nmv x1 -> A\nmv x2 -> B\npath A -> B\n",
        )
        .unwrap();
        let raw = DMatrix::from_row_slice(4, 2, &[0.9, 0.0, -2.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
        let data = DataMatrix::standardize(&raw, &["x1".into(), "x2".into()]).unwrap();
        let design = Design::new(&data, &model).unwrap();
        let lambda = design.initial_loadings().clone();
        // Centroids symmetric around zero in the first coordinate; the row
        // standardized to ~0 in that coordinate is equidistant -> cluster 0.
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0]);
        let x = DMatrix::from_row_slice(3, 2, &[0.9, 0.0, -0.9, 0.0, 0.0, 0.5]);
        let (m, repaired) = design.assign(&x, &c, &lambda).unwrap();
        assert!(!repaired);
        assert_eq!(m.labels(), &[0, 1, 0]);
    }

    #[test]
    fn empty_cluster_repair_picks_largest_residual() {
        let model = parse_valid_model(
            "lv A exogenous\nlv B endogenous\nmv x1 -> A\nmv x2 -> B\npath A -> B\n",
        )
        .unwrap();
        let raw = DMatrix::from_row_slice(4, 2, &[0.0, 1.0, 0.1, -1.0, 3.0, 0.5, 0.2, 0.3]);
        let data = DataMatrix::standardize(&raw, &["x1".into(), "x2".into()]).unwrap();
        let design = Design::new(&data, &model).unwrap();
        let lambda = design.initial_loadings().clone();
        let c = DMatrix::from_row_slice(2, 2, &[10.0, 0.0, 20.0, 0.0]);
        let x = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 1.0, 0.0, 3.0, 0.0, 2.0, 0.0]);
        let (m, repaired) = design.assign(&x, &c, &lambda).unwrap();
        // All rows prefer centroid 0 (it is closer for every row); the donor
        // for empty cluster 1 is row 0, the farthest from centroid 0.
        assert!(repaired);
        assert_eq!(m.labels(), &[1, 0, 0, 0]);
        assert_eq!(m.counts(), vec![3, 1]);
    }

    #[test]
    fn objective_matches_matrix_expression() {
        let data = separated_data(false);
        let design = Design::new(&data, &tiny_model()).unwrap();
        let m = Membership::new(vec![0, 1, 0, 1, 1, 0, 1, 0], 2).unwrap();
        let c = cluster_means(&data.values, &m);
        let lambda = design.initial_loadings();
        let literal = design.objective(&data.values, &m, &c, lambda);
        let u = m.indicator();
        let resid = &data.values - u * &c * lambda * lambda.transpose();
        assert_abs_diff_eq!(literal, resid.norm_squared(), epsilon = 1e-10);
    }

    #[test]
    fn perfectly_separated_groups_are_recovered_exactly() {
        let data = separated_data(false);
        let model = tiny_model();
        let fit = fit(&data, &model, 2, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.objective < 1e-12, "objective {}", fit.objective);
        assert!(same_partition(
            fit.membership.labels(),
            &[0, 0, 0, 0, 1, 1, 1, 1]
        ));
        assert_eq!(fit.objective_trace.len(), fit.n_iterations + 1);
        // Loadings: unit columns on the support.
        for p in 0..2 {
            assert_abs_diff_eq!(fit.loadings.column(p).norm(), 1.0, epsilon = 1e-12);
        }
        // The two blocks carry the same signal, so the path coefficient from
        // DRIVER to OUTCOME is 1.
        assert_abs_diff_eq!(fit.path_coefficients[(1, 0)], 1.0, epsilon = 1e-8);
        assert_eq!(fit.path_coefficients[(0, 0)], 0.0);
        assert_eq!(fit.path_coefficients[(0, 1)], 0.0);
    }

    #[test]
    fn columns_outside_the_model_do_not_disturb_the_partition() {
        let data = separated_data(true);
        let model = tiny_model();
        let fit = fit(&data, &model, 2, &FitOptions::default()).unwrap();
        // The junk column gets a zero loading row...
        assert_eq!(fit.loadings.nrows(), 5);
        for p in 0..2 {
            assert_eq!(fit.loadings[(4, p)], 0.0);
        }
        // ...and the recovered grouping is still the true one.
        assert!(same_partition(
            fit.membership.labels(),
            &[0, 0, 0, 0, 1, 1, 1, 1]
        ));
        // The junk column's variance is unexplained by construction.
        assert!(fit.objective > 1.0);
    }

    #[test]
    fn fitting_is_deterministic_for_a_fixed_seed() {
        let data = separated_data(true);
        let model = tiny_model();
        let opts = FitOptions {
            n_starts: 7,
            rng_seed: 1234,
            ..FitOptions::default()
        };
        let a = fit(&data, &model, 2, &opts).unwrap();
        let b = fit(&data, &model, 2, &opts).unwrap();
        assert_eq!(a.membership, b.membership);
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
        assert_eq!(a.loadings, b.loadings);
        assert_eq!(a.best_start, b.best_start);
    }

    #[test]
    fn single_cluster_fit_is_trivial_and_converged() {
        let data = separated_data(false);
        let model = tiny_model();
        let fit = fit(&data, &model, 1, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert_eq!(fit.n_iterations, 0);
        assert!(fit.membership.labels().iter().all(|&l| l == 0));
        // Standardized data: ‖X‖² = (n−1)·J.
        assert_abs_diff_eq!(fit.objective, 7.0 * 4.0, epsilon = 1e-9);
    }

    #[test]
    fn fixed_partition_fit_matches_the_free_fit_on_clean_data() {
        let data = separated_data(false);
        let model = tiny_model();
        let fit = fit_with_partition(
            &data,
            &model,
            &[0, 0, 0, 0, 1, 1, 1, 1],
            2,
            &FitOptions::default(),
        )
        .unwrap();
        assert!(fit.converged);
        assert!(fit.objective < 1e-12);
    }

    #[test]
    fn fixed_partition_rejects_empty_clusters() {
        let data = separated_data(false);
        let model = tiny_model();
        let err = fit_with_partition(
            &data,
            &model,
            &[0, 0, 0, 0, 0, 0, 0, 0],
            2,
            &FitOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::EmptyCluster { cluster: 2 }));
    }

    #[test]
    fn plain_pls_on_clean_data_finds_unit_path() {
        let data = separated_data(false);
        let model = tiny_model();
        let fit = fit_plain_pls(&data, &model, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert_abs_diff_eq!(fit.path_coefficients[(1, 0)], 1.0, epsilon = 1e-8);
        for p in 0..2 {
            assert_abs_diff_eq!(fit.loadings.column(p).norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn path_coefficients_match_hand_oracle_on_orthogonal_predictors() {
        // Two orthogonal exogenous variables with sample variance one and an
        // endogenous variable y = 0.5·a + 0.3·b. After standardizing y (its
        // sample variance is 0.25 + 0.09 = 0.34), the coefficients become
        // 0.5/sqrt(0.34) and 0.3/sqrt(0.34).
        let model = PathModelSpec::from_parts(
            vec!["A".into(), "B".into(), "Y".into()],
            2,
            vec!["a1".into(), "b1".into(), "y1".into()],
            vec![0, 1, 2],
            vec![(0, 2), (1, 2)],
        );
        assert!(model.validate().is_valid());
        let c = (3.0f64 / 4.0).sqrt(); // gives sample variance exactly 1 on n=4
        let a = [c, c, -c, -c];
        let b = [c, -c, c, -c];
        let mut scores = DMatrix::zeros(4, 3);
        for i in 0..4 {
            scores[(i, 0)] = a[i];
            scores[(i, 1)] = b[i];
            scores[(i, 2)] = 0.5 * a[i] + 0.3 * b[i];
        }
        let coef = path_coefficients(&scores, &model).unwrap();
        assert_abs_diff_eq!(coef[(2, 0)], 0.5 / 0.34f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(coef[(2, 1)], 0.3 / 0.34f64.sqrt(), epsilon = 1e-12);
        assert_eq!(coef[(0, 0)], 0.0);
        assert_eq!(coef[(1, 2)], 0.0);
    }

    #[test]
    fn kmeans_recovers_two_blobs_with_hand_checked_within_ss() {
        let points = DMatrix::from_column_slice(5, 1, &[0.1, 0.2, 0.3, 10.1, 10.2]);
        let km = kmeans(&points, 2, 5, 100, 7).unwrap();
        assert!(km.converged);
        assert!(same_partition(km.membership.labels(), &[0, 0, 0, 1, 1]));
        // Means 0.2 and 10.15: SS = 0.01 + 0 + 0.01 + 0.005.
        assert_abs_diff_eq!(km.within_ss, 0.025, epsilon = 1e-12);
    }

    #[test]
    fn kmeans_is_deterministic() {
        let points = DMatrix::from_column_slice(6, 1, &[0.0, 0.1, 5.0, 5.2, 9.9, 10.0]);
        let a = kmeans(&points, 3, 8, 100, 99).unwrap();
        let b = kmeans(&points, 3, 8, 100, 99).unwrap();
        assert_eq!(a.membership, b.membership);
        assert_eq!(a.within_ss.to_bits(), b.within_ss.to_bits());
    }

    #[test]
    fn tandem_on_clean_data_agrees_with_the_joint_fit() {
        let data = separated_data(false);
        let model = tiny_model();
        let t = tandem(&data, &model, 2, &FitOptions::default()).unwrap();
        assert!(same_partition(
            t.membership.labels(),
            &[0, 0, 0, 0, 1, 1, 1, 1]
        ));
    }

    #[test]
    fn more_clusters_than_rows_is_an_error() {
        let data = separated_data(false);
        let model = tiny_model();
        let err = fit(&data, &model, 9, &FitOptions::default()).unwrap_err();
        // Every start fails the same way; the multistart reports it.
        assert!(matches!(err, Error::AllStartsFailed { .. }));
    }

    #[test]
    fn random_membership_always_covers_all_clusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for k in 1..=8 {
            let m = random_membership(8, k, &mut rng);
            assert!(m.counts().iter().all(|&c| c > 0), "k = {k}");
        }
    }
}
