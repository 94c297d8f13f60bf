//! Synthetic segmented data with known latent structure.
//!
//! The generator draws segment-specific exogenous scores, propagates them
//! through a structural design, and emits manifest variables with measurement
//! error. One noise level `sigma` controls all three random layers: the
//! within-segment spread of the exogenous scores, the structural residuals,
//! and the measurement errors. `sigma = 0` therefore produces data the
//! estimator must fit *exactly* — each segment collapses to a single point.
//!
//! Two standard layouts cover the usual benchmark designs:
//!
//! - [`StructureKind::TwoDriver`]: two exogenous drivers explain one outcome;
//! - [`StructureKind::Chain`]: a driver feeds a mediator feeds an outcome.
//!
//! Both place their segment centers on a centered, equispaced grid applied to
//! every exogenous dimension (see [`segment_centers`]).
//!
//! [`generate_from_spec`] exposes the raw machinery for arbitrary models and
//! center layouts; [`masked_dataset`] builds the demonstration dataset whose
//! segment structure hides behind irrelevant columns and an outcome that is
//! unrelated to its drivers at the population level; [`make_ecsi_synthetic`]
//! produces a survey-shaped customer-satisfaction dataset on a 1–10 scale
//! with a sprinkle of missing cells.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::estimator::{fit, tandem, FitOptions};
use crate::metrics::{adjusted_rand_index, FitReport, ScoreBasis};
use crate::model::PathModelSpec;

/// Default distance scale between segment centers; see the `calibration`
/// example for how this value was chosen.
pub const SEPARATION_DEFAULT: f64 = 2.4;

/// Loading used for every manifest variable when generating data.
pub const GEN_LOADING: f64 = 0.85;

/// Structural coefficient used for every path when generating data.
pub const GEN_COEFFICIENT: f64 = 0.85;

/// Circle radius of the masked dataset's segment centers in driver space;
/// see the `calibration` example for how this value was chosen.
pub const MASKED_RADIUS: f64 = 3.5;

/// Within-segment standard deviation of the masked dataset's driver scores.
pub const MASKED_WITHIN_SD: f64 = 1.0;

/// Variance of the masked dataset's outcome scores (independent of the
/// drivers by construction).
pub const MASKED_ETA_VAR: f64 = 3.0;

/// Variance of the masked dataset's irrelevant columns.
pub const MASKED_NOISE_VAR: f64 = 6.0;

/// Which benchmark structure to generate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureKind {
    /// Two exogenous drivers, one endogenous outcome; nine manifest
    /// variables in blocks of three.
    TwoDriver,
    /// Driver → mediator → outcome; nine manifest variables in blocks of
    /// three.
    Chain,
}

/// Standard segment-size profiles for 3 or 4 segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentProfile {
    Balanced,
    OneDominant,
    OneSmall,
}

/// The standard proportions of a profile (defined for 3 or 4 segments).
pub fn segment_proportions(profile: SegmentProfile, k: usize) -> Result<Vec<f64>> {
    let p = match (profile, k) {
        (SegmentProfile::Balanced, 3) => vec![0.33, 0.33, 0.34],
        (SegmentProfile::OneDominant, 3) => vec![0.66, 0.17, 0.17],
        (SegmentProfile::OneSmall, 3) => vec![0.15, 0.42, 0.43],
        (SegmentProfile::Balanced, 4) => vec![0.25; 4],
        (SegmentProfile::OneDominant, 4) => vec![0.40, 0.20, 0.20, 0.20],
        (SegmentProfile::OneSmall, 4) => vec![0.10, 0.30, 0.30, 0.30],
        _ => {
            return Err(Error::InvalidConfig(format!(
                "no standard {profile:?} proportions for {k} segments (defined for 3 and 4)"
            )))
        }
    };
    Ok(p)
}

/// Split `n` rows into segments by largest-remainder rounding of
/// `n · proportions`, then bump any empty segment up to one row (taking from
/// the largest). Ties always resolve toward the lowest index.
pub fn segment_counts(n: usize, proportions: &[f64]) -> Result<Vec<usize>> {
    let k = proportions.len();
    if k == 0 {
        return Err(Error::InvalidConfig("no segment proportions given".into()));
    }
    if n < k {
        return Err(Error::TooFewRows {
            context: format!("{k} segments"),
            minimum: k,
            found: n,
        });
    }
    let sum: f64 = proportions.iter().sum();
    if proportions.iter().any(|&p| !(p > 0.0)) || (sum - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidConfig(format!(
            "segment proportions must be positive and sum to 1, got {proportions:?}"
        )));
    }
    let mut counts: Vec<usize> = Vec::with_capacity(k);
    let mut remainders: Vec<(usize, f64)> = Vec::with_capacity(k);
    for (i, &p) in proportions.iter().enumerate() {
        let exact = n as f64 * p;
        let base = exact.floor() as usize;
        counts.push(base);
        remainders.push((i, exact - base as f64));
    }
    let assigned: usize = counts.iter().sum();
    // Largest remainder first; equal remainders go to the lower index.
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for &(i, _) in remainders.iter().take(n - assigned) {
        counts[i] += 1;
    }
    // No segment may be empty.
    while let Some(empty) = counts.iter().position(|&c| c == 0) {
        let donor = counts
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap();
        counts[donor] -= 1;
        counts[empty] += 1;
    }
    Ok(counts)
}

/// Segment centers in exogenous-score space.
///
/// A centered, equispaced grid with spacing `separation`, applied to every
/// dimension, so segment k sits at the same grid value in each exogenous
/// coordinate. Collinear centers keep the loss landscape benign: random
/// single starts almost always sort out well-separated segments, whereas
/// scattered layouts (e.g. a circle) leave the alternating-least-squares
/// sweep stuck in merge/split local minima on a sizable fraction of starts.
pub fn segment_centers(k: usize, h: usize, separation: f64) -> DMatrix<f64> {
    let mut centers = DMatrix::zeros(k, h);
    for kk in 0..k {
        let g = (kk as f64 - (k as f64 - 1.0) / 2.0) * separation;
        for d in 0..h {
            centers[(kk, d)] = g;
        }
    }
    centers
}

/// Equally spaced points on a circle of radius `radius` in the first two
/// dimensions, zero elsewhere. The masked demonstration dataset uses this
/// scattered layout deliberately: it needs segments that pooled-score
/// clustering fails on, not an easy landscape.
fn circle_centers(k: usize, h: usize, radius: f64) -> DMatrix<f64> {
    let mut centers = DMatrix::zeros(k, h);
    for kk in 0..k {
        let angle = 2.0 * std::f64::consts::PI * kk as f64 / k as f64;
        centers[(kk, 0)] = radius * angle.cos();
        centers[(kk, 1)] = radius * angle.sin();
    }
    centers
}

/// Everything [`generate_from_spec`] needs besides the model and layout.
#[derive(Debug, Clone)]
pub struct GenSettings {
    /// Noise level: within-segment spread, structural residual SD, and
    /// measurement error SD all at once.
    pub sigma: f64,
    /// Loading of every manifest variable on its latent variable.
    pub loading: f64,
    /// Coefficient of every structural path.
    pub coefficient: f64,
    pub seed: u64,
}

impl Default for GenSettings {
    fn default() -> Self {
        Self {
            sigma: 0.3,
            loading: GEN_LOADING,
            coefficient: GEN_COEFFICIENT,
            seed: 42,
        }
    }
}

/// A generated dataset with its ground truth.
#[derive(Debug, Clone)]
pub struct SimDataset {
    /// n×J raw (unstandardized) manifest values.
    pub raw: DMatrix<f64>,
    pub column_names: Vec<String>,
    /// True segment label per row (contiguous blocks, segment 0 first).
    pub truth: Vec<usize>,
    pub counts: Vec<usize>,
    /// The model that matches the generating structure, ready for fitting.
    pub model: PathModelSpec,
    /// n×P true latent scores (exogenous first).
    pub latent: DMatrix<f64>,
}

impl SimDataset {
    /// Standardize the raw values for fitting.
    pub fn standardized(&self) -> Result<DataMatrix> {
        DataMatrix::standardize(&self.raw, &self.column_names)
    }
}

/// Solve the structural system for the endogenous scores (before their
/// residuals): `F_endo = F_exo Γᵀ (I − Bᵀ)⁻¹` with every path set to
/// `coefficient`.
fn solve_structural(
    model: &PathModelSpec,
    exo: &DMatrix<f64>,
    coefficient: f64,
) -> Result<DMatrix<f64>> {
    let p = model.n_lvs();
    let h = model.n_exogenous();
    let e = p - h;
    let a = model.structural_design() * coefficient;
    let mut gamma = DMatrix::zeros(e, h);
    let mut b = DMatrix::zeros(e, e);
    for t in h..p {
        for s in 0..p {
            if a[(t, s)] != 0.0 {
                if s < h {
                    gamma[(t - h, s)] = a[(t, s)];
                } else {
                    b[(t - h, s - h)] = a[(t, s)];
                }
            }
        }
    }
    let system = DMatrix::identity(e, e) - b.transpose();
    let inv = system.try_inverse().ok_or_else(|| Error::Singular {
        context: "structural system is not solvable (cyclic design?)".into(),
    })?;
    Ok(exo * gamma.transpose() * inv)
}

/// Generate data for an arbitrary valid model.
///
/// `centers` is K×H (one row per segment, one column per exogenous latent
/// variable); `counts` gives the rows per segment. Rows come out ordered by
/// segment. All randomness derives from `settings.seed`.
pub fn generate_from_spec(
    model: &PathModelSpec,
    centers: &DMatrix<f64>,
    counts: &[usize],
    settings: &GenSettings,
) -> Result<SimDataset> {
    model.validate().into_result()?;
    let h = model.n_exogenous();
    let p = model.n_lvs();
    let j = model.n_mvs();
    let k = counts.len();
    if centers.nrows() != k || centers.ncols() != h {
        return Err(Error::Dimension {
            context: "segment centers".into(),
            expected: format!("{k}×{h}"),
            found: format!("{}×{}", centers.nrows(), centers.ncols()),
        });
    }
    if counts.iter().any(|&c| c == 0) {
        return Err(Error::InvalidConfig("empty segment in counts".into()));
    }
    if settings.sigma < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "sigma must be nonnegative, got {}",
            settings.sigma
        )));
    }
    let n: usize = counts.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);

    let mut truth = Vec::with_capacity(n);
    for (g, &c) in counts.iter().enumerate() {
        truth.extend(std::iter::repeat(g).take(c));
    }

    // Exogenous scores: segment center plus sigma-scaled spread.
    let mut exo = DMatrix::zeros(n, h);
    for (i, &g) in truth.iter().enumerate() {
        for d in 0..h {
            let e: f64 = rng.sample(StandardNormal);
            exo[(i, d)] = centers[(g, d)] + settings.sigma * e;
        }
    }

    // Endogenous scores: solved system plus sigma-scaled residuals.
    let mut endo = solve_structural(model, &exo, settings.coefficient)?;
    for v in endo.iter_mut() {
        let e: f64 = rng.sample(StandardNormal);
        *v += settings.sigma * e;
    }

    let mut latent = DMatrix::zeros(n, p);
    latent.view_mut((0, 0), (n, h)).copy_from(&exo);
    latent.view_mut((0, h), (n, p - h)).copy_from(&endo);

    // Manifest variables: loading times the latent score, plus error.
    let lambda_gen = model.measurement_design() * settings.loading;
    let mut raw = &latent * lambda_gen.transpose();
    for v in raw.iter_mut() {
        let e: f64 = rng.sample(StandardNormal);
        *v += settings.sigma * e;
    }
    debug_assert_eq!(raw.ncols(), j);

    Ok(SimDataset {
        raw,
        column_names: model.mv_names().to_vec(),
        truth,
        counts: counts.to_vec(),
        model: model.clone(),
        latent,
    })
}

/// The fitting model that matches a [`StructureKind`].
pub fn structure_model(kind: StructureKind) -> PathModelSpec {
    let text = match kind {
        StructureKind::TwoDriver => {
            "lv DRIVER_A exogenous\n\
             lv DRIVER_B exogenous\n\
             lv OUTCOME endogenous\n\
             mv x1 -> DRIVER_A\nmv x2 -> DRIVER_A\nmv x3 -> DRIVER_A\n\
             mv x4 -> DRIVER_B\nmv x5 -> DRIVER_B\nmv x6 -> DRIVER_B\n\
             mv x7 -> OUTCOME\nmv x8 -> OUTCOME\nmv x9 -> OUTCOME\n\
             path DRIVER_A -> OUTCOME\npath DRIVER_B -> OUTCOME\n"
        }
        StructureKind::Chain => {
            "lv DRIVER exogenous\n\
             lv MEDIATOR endogenous\n\
             lv OUTCOME endogenous\n\
             mv x1 -> DRIVER\nmv x2 -> DRIVER\nmv x3 -> DRIVER\n\
             mv x4 -> MEDIATOR\nmv x5 -> MEDIATOR\nmv x6 -> MEDIATOR\n\
             mv x7 -> OUTCOME\nmv x8 -> OUTCOME\nmv x9 -> OUTCOME\n\
             path DRIVER -> MEDIATOR\npath MEDIATOR -> OUTCOME\n"
        }
    };
    crate::model::parse_valid_model(text).expect("built-in model must be valid")
}

/// Configuration of one standard benchmark dataset.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub kind: StructureKind,
    pub n_rows: usize,
    pub proportions: Vec<f64>,
    pub sigma: f64,
    /// Distance scale between segment centers.
    pub separation: f64,
    pub seed: u64,
}

impl SimConfig {
    /// Standard configuration: profile proportions and default separation.
    pub fn new(
        kind: StructureKind,
        k: usize,
        n_rows: usize,
        profile: SegmentProfile,
        sigma: f64,
        seed: u64,
    ) -> Result<Self> {
        Ok(Self {
            kind,
            n_rows,
            proportions: segment_proportions(profile, k)?,
            sigma,
            separation: SEPARATION_DEFAULT,
            seed,
        })
    }

    pub fn n_clusters(&self) -> usize {
        self.proportions.len()
    }
}

/// Generate one standard benchmark dataset.
pub fn generate_dataset(config: &SimConfig) -> Result<SimDataset> {
    let model = structure_model(config.kind);
    let counts = segment_counts(config.n_rows, &config.proportions)?;
    let centers = segment_centers(
        counts.len(),
        model.n_exogenous(),
        config.separation,
    );
    let settings = GenSettings {
        sigma: config.sigma,
        loading: GEN_LOADING,
        coefficient: GEN_COEFFICIENT,
        seed: config.seed,
    };
    generate_from_spec(&model, &centers, &counts, &settings)
}

/// The masked-structure demonstration dataset.
///
/// Three segments (30/30/40%) live in the space of two driver constructs
/// whose centers form a triangle of circumradius [`MASKED_RADIUS`]; the
/// modeled outcome construct is drawn *independently* of the drivers, and six
/// high-variance irrelevant columns (`z1..z6`) are appended after the nine
/// structured ones (`x1..x9`, loading 1, unit measurement error). Pooled
/// estimation finds no driver–outcome relation to anchor its weights, so
/// clustering its scores is fragile; the joint estimator anchors the weights
/// on the segment structure instead.
pub fn masked_dataset(n: usize, seed: u64) -> Result<SimDataset> {
    masked_dataset_with_radius(n, seed, MASKED_RADIUS)
}

/// [`masked_dataset`] with an explicit center radius (the calibration
/// sweep varies it; everything else uses the default).
pub fn masked_dataset_with_radius(n: usize, seed: u64, radius: f64) -> Result<SimDataset> {
    let model = crate::model::parse_valid_model(
        "lv DRIVER_A exogenous\n\
         lv DRIVER_B exogenous\n\
         lv OUTCOME endogenous\n\
         mv x1 -> DRIVER_A\nmv x2 -> DRIVER_A\nmv x3 -> DRIVER_A\n\
         mv x4 -> DRIVER_B\nmv x5 -> DRIVER_B\nmv x6 -> DRIVER_B\n\
         mv x7 -> OUTCOME\nmv x8 -> OUTCOME\nmv x9 -> OUTCOME\n\
         path DRIVER_A -> OUTCOME\npath DRIVER_B -> OUTCOME\n",
    )
    .expect("built-in model must be valid");
    let counts = segment_counts(n, &[0.3, 0.3, 0.4])?;
    let centers = circle_centers(3, 2, radius);
    let n_total: usize = counts.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut truth = Vec::with_capacity(n_total);
    for (g, &c) in counts.iter().enumerate() {
        truth.extend(std::iter::repeat(g).take(c));
    }

    let mut latent = DMatrix::zeros(n_total, 3);
    for (i, &g) in truth.iter().enumerate() {
        for d in 0..2 {
            let e: f64 = rng.sample(StandardNormal);
            latent[(i, d)] = centers[(g, d)] + MASKED_WITHIN_SD * e;
        }
    }
    let eta_sd = MASKED_ETA_VAR.sqrt();
    for i in 0..n_total {
        let e: f64 = rng.sample(StandardNormal);
        latent[(i, 2)] = eta_sd * e;
    }

    let mut raw = DMatrix::zeros(n_total, 15);
    for i in 0..n_total {
        for (block, lv) in [(0usize, 0usize), (1, 1), (2, 2)] {
            for within in 0..3 {
                let e: f64 = rng.sample(StandardNormal);
                raw[(i, 3 * block + within)] = latent[(i, lv)] + e;
            }
        }
    }
    let noise_sd = MASKED_NOISE_VAR.sqrt();
    for i in 0..n_total {
        for c in 9..15 {
            let e: f64 = rng.sample(StandardNormal);
            raw[(i, c)] = noise_sd * e;
        }
    }

    let mut column_names: Vec<String> = (1..=9).map(|i| format!("x{i}")).collect();
    column_names.extend((1..=6).map(|i| format!("z{i}")));

    Ok(SimDataset {
        raw,
        column_names,
        truth,
        counts,
        model,
        latent,
    })
}

/// The seven-construct customer-satisfaction model (image, expectations,
/// perceived quality, perceived value, satisfaction, complaints, loyalty)
/// with its 24 survey items.
pub fn ecsi_model() -> PathModelSpec {
    let text = "\
lv IMAGE exogenous
lv EXPECTATIONS endogenous
lv QUALITY endogenous
lv VALUE endogenous
lv SATISFACTION endogenous
lv COMPLAINTS endogenous
lv LOYALTY endogenous
mv x1 -> IMAGE
mv x2 -> IMAGE
mv x3 -> IMAGE
mv x4 -> IMAGE
mv x5 -> IMAGE
mv x6 -> EXPECTATIONS
mv x7 -> EXPECTATIONS
mv x8 -> EXPECTATIONS
mv x9 -> QUALITY
mv x10 -> QUALITY
mv x11 -> QUALITY
mv x12 -> QUALITY
mv x13 -> QUALITY
mv x14 -> QUALITY
mv x15 -> QUALITY
mv x16 -> VALUE
mv x17 -> VALUE
mv x18 -> SATISFACTION
mv x19 -> SATISFACTION
mv x20 -> SATISFACTION
mv x21 -> COMPLAINTS
mv x22 -> LOYALTY
mv x23 -> LOYALTY
mv x24 -> LOYALTY
path IMAGE -> EXPECTATIONS
path IMAGE -> SATISFACTION
path IMAGE -> LOYALTY
path EXPECTATIONS -> QUALITY
path EXPECTATIONS -> VALUE
path EXPECTATIONS -> SATISFACTION
path QUALITY -> VALUE
path QUALITY -> SATISFACTION
path VALUE -> SATISFACTION
path SATISFACTION -> COMPLAINTS
path SATISFACTION -> LOYALTY
path COMPLAINTS -> LOYALTY
";
    crate::model::parse_valid_model(text).expect("built-in model must be valid")
}

/// A survey-shaped synthetic dataset: 24 items on a 1–10 scale.
#[derive(Debug, Clone)]
pub struct SurveyDataset {
    pub column_names: Vec<String>,
    /// Row-major cells; `None` is a missing answer.
    pub rows: Vec<Vec<Option<f64>>>,
    pub truth: Vec<usize>,
    pub counts: Vec<usize>,
    pub model: PathModelSpec,
}

/// Generate the survey-shaped customer-satisfaction dataset: three segments
/// (proportions 0.368/0.448/0.184), noise level 0.4, every column mapped
/// affinely onto [1, 10], and about 1% of cells missing.
pub fn make_ecsi_synthetic(n: usize, seed: u64) -> Result<SurveyDataset> {
    let model = ecsi_model();
    let counts = segment_counts(n, &[0.368, 0.448, 0.184])?;
    let centers = segment_centers(counts.len(), model.n_exogenous(), SEPARATION_DEFAULT);
    let settings = GenSettings {
        sigma: 0.4,
        loading: GEN_LOADING,
        coefficient: GEN_COEFFICIENT,
        seed,
    };
    let base = generate_from_spec(&model, &centers, &counts, &settings)?;
    let n_total = base.raw.nrows();
    let j = base.raw.ncols();

    // Map each column onto exactly [1, 10].
    let mut mapped = base.raw.clone();
    for c in 0..j {
        let col = mapped.column(c);
        let lo = col.min();
        let hi = col.max();
        let span = hi - lo;
        for r in 0..n_total {
            mapped[(r, c)] = if span > 0.0 {
                1.0 + 9.0 * (mapped[(r, c)] - lo) / span
            } else {
                5.5
            };
        }
    }

    // Missing cells: about 1%, never hollowing a column out.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_ab1e_0000_0001);
    let mut rows: Vec<Vec<Option<f64>>> = Vec::with_capacity(n_total);
    let mut observed_per_col = vec![n_total; j];
    for r in 0..n_total {
        let mut row = Vec::with_capacity(j);
        for (c, observed) in observed_per_col.iter_mut().enumerate() {
            if rng.random::<f64>() < 0.01 && *observed > 2 {
                row.push(None);
                *observed -= 1;
            } else {
                row.push(Some(mapped[(r, c)]));
            }
        }
        rows.push(row);
    }

    Ok(SurveyDataset {
        column_names: base.column_names,
        rows,
        truth: base.truth,
        counts: base.counts,
        model,
    })
}

/// Mean silhouette coefficient of a labeled point set (squared-free,
/// plain Euclidean distances). Rows in singleton clusters score zero.
pub fn mean_silhouette(points: &DMatrix<f64>, labels: &[usize]) -> f64 {
    let n = points.nrows();
    assert_eq!(n, labels.len(), "one label per row");
    if n == 0 {
        return 0.0;
    }
    let k = labels.iter().max().map_or(0, |&m| m + 1);
    let mut counts = vec![0usize; k];
    for &l in labels {
        counts[l] += 1;
    }
    let dist = |a: usize, b: usize| -> f64 {
        let mut s = 0.0;
        for c in 0..points.ncols() {
            let d = points[(a, c)] - points[(b, c)];
            s += d * d;
        }
        s.sqrt()
    };
    let mut total = 0.0;
    for i in 0..n {
        if counts[labels[i]] < 2 {
            continue; // silhouette of a singleton is 0
        }
        let mut sums = vec![0.0; k];
        for other in 0..n {
            if other != i {
                sums[labels[other]] += dist(i, other);
            }
        }
        let a = sums[labels[i]] / (counts[labels[i]] - 1) as f64;
        let b = (0..k)
            .filter(|&g| g != labels[i] && counts[g] > 0)
            .map(|g| sums[g] / counts[g] as f64)
            .fold(f64::INFINITY, f64::min);
        if b.is_finite() {
            total += (b - a) / a.max(b);
        }
    }
    total / n as f64
}

/// One cell of a benchmark grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridCell {
    pub kind: StructureKind,
    pub n_clusters: usize,
    pub profile: SegmentProfile,
    pub sigma: f64,
    pub n_rows: usize,
    pub replications: usize,
}

/// Aggregated results for one grid cell.
#[derive(Debug, Clone, Serialize)]
pub struct CellSummary {
    pub cell: GridCell,
    /// Mean adjusted Rand index of the joint fit against the truth.
    pub mean_ari: f64,
    pub sd_ari: f64,
    /// Share of replications recovering the truth exactly.
    pub exact_rate: f64,
    /// Mean ARI of the two-step baseline, when requested.
    pub mean_tandem_ari: Option<f64>,
    pub mean_gof: f64,
    pub mean_penalized_gof: f64,
}

/// Run every cell of a benchmark grid: generate, fit, compare to the truth.
///
/// Each replication draws its own seed from `master_seed`, so the whole grid
/// is reproducible.
pub fn run_experiment_grid(
    cells: &[GridCell],
    fit_opts: &FitOptions,
    include_tandem: bool,
    master_seed: u64,
) -> Result<Vec<CellSummary>> {
    let mut seeder = ChaCha8Rng::seed_from_u64(master_seed);
    let mut summaries = Vec::with_capacity(cells.len());
    for cell in cells {
        if cell.replications == 0 {
            return Err(Error::InvalidConfig(
                "grid cell with zero replications".into(),
            ));
        }
        let mut aris = Vec::with_capacity(cell.replications);
        let mut tandem_aris = Vec::new();
        let mut gofs = Vec::new();
        let mut penalized = Vec::new();
        for _ in 0..cell.replications {
            let seed: u64 = seeder.random();
            let mut config = SimConfig::new(
                cell.kind,
                cell.n_clusters,
                cell.n_rows,
                cell.profile,
                cell.sigma,
                seed,
            )?;
            config.separation = SEPARATION_DEFAULT;
            let dataset = generate_dataset(&config)?;
            let data = dataset.standardized()?;
            let fitted = fit(&data, &dataset.model, cell.n_clusters, fit_opts)?;
            aris.push(adjusted_rand_index(
                fitted.membership.labels(),
                &dataset.truth,
            ));
            let report = FitReport::new(&fitted, &data, ScoreBasis::Data)?;
            gofs.push(report.gof);
            penalized.push(report.penalized_gof);
            if include_tandem {
                let t = tandem(&data, &dataset.model, cell.n_clusters, fit_opts)?;
                tandem_aris.push(adjusted_rand_index(t.membership.labels(), &dataset.truth));
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        summaries.push(CellSummary {
            cell: cell.clone(),
            mean_ari: mean(&aris),
            sd_ari: crate::linalg::sample_sd(&aris),
            exact_rate: aris.iter().filter(|&&a| a >= 1.0 - 1e-12).count() as f64
                / aris.len() as f64,
            mean_tandem_ari: if include_tandem {
                Some(mean(&tandem_aris))
            } else {
                None
            },
            mean_gof: mean(&gofs),
            mean_penalized_gof: mean(&penalized),
        });
    }
    Ok(summaries)
}
