//! Fit and agreement measures: communalities, R², goodness of fit, block
//! reliability, and the adjusted Rand index.

use serde::Serialize;
use std::collections::BTreeMap;

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::estimator::{structural_fit, FittedModel};
use crate::linalg::{pearson, sample_sd};

/// Hubert–Arabie adjusted Rand index between two hard partitions.
///
/// 1 for identical partitions (up to relabeling), about 0 for independent
/// ones, possibly negative for systematic disagreement. The degenerate case
/// where the maximum index equals its expectation (e.g. both partitions put
/// everything in one cluster) is defined as 1.
///
/// # Panics
///
/// Panics if the slices have different lengths.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "partitions must label the same rows");
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let choose2 = |x: usize| (x * x.saturating_sub(1)) as f64 / 2.0;
    let mut cont: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut rows: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cols: BTreeMap<usize, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *cont.entry((x, y)).or_insert(0) += 1;
        *rows.entry(x).or_insert(0) += 1;
        *cols.entry(y).or_insert(0) += 1;
    }
    let index: f64 = cont.values().map(|&v| choose2(v)).sum();
    let sum_a: f64 = rows.values().map(|&v| choose2(v)).sum();
    let sum_b: f64 = cols.values().map(|&v| choose2(v)).sum();
    let expected = sum_a * sum_b / choose2(n);
    let maximum = 0.5 * (sum_a + sum_b);
    let denom = maximum - expected;
    if denom.abs() <= 1e-12 * (1.0 + maximum.abs()) {
        1.0
    } else {
        (index - expected) / denom
    }
}

/// Squared Pearson correlation between a manifest column and its block score.
pub fn communality(column: &[f64], score: &[f64]) -> f64 {
    let r = pearson(column, score);
    r * r
}

/// Goodness of fit from the two averages: the geometric mean of the average
/// communality (over all manifest variables) and the average R² (over the
/// endogenous latent variables).
pub fn gof(average_communality: f64, average_r_squared: f64) -> f64 {
    (average_communality * average_r_squared).sqrt()
}

/// Partition-penalized fit: the geometric mean of the average R² and the
/// share of the data's sum of squares that the clustered model reproduces.
pub fn penalized_gof(average_r_squared: f64, explained_share: f64) -> f64 {
    (average_r_squared * explained_share).sqrt()
}

/// Cronbach's alpha of a block of (standardized) columns.
///
/// With standardized columns this is the "standardized alpha":
/// `J/(J−1) · (1 − J/var(sum))`. A single-column block has no internal
/// consistency to measure; it is reported as 1 and flagged by the caller.
pub fn cronbach_alpha(columns: &[Vec<f64>]) -> f64 {
    let j = columns.len();
    if j < 2 {
        return 1.0;
    }
    let n = columns[0].len();
    let item_var_sum: f64 = columns.iter().map(|c| sample_sd(c).powi(2)).sum();
    let mut total = vec![0.0; n];
    for col in columns {
        for (t, v) in total.iter_mut().zip(col) {
            *t += v;
        }
    }
    let total_var = sample_sd(&total).powi(2);
    if total_var <= 0.0 {
        return 0.0;
    }
    (j as f64 / (j as f64 - 1.0)) * (1.0 - item_var_sum / total_var)
}

/// Which latent scores a [`FitReport`] is computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreBasis {
    /// `XΛ`: every row keeps its own score (the default).
    Data,
    /// `UCΛ`: every row gets its cluster's latent centroid. Degenerates for
    /// small cluster counts (two clusters make any two scores collinear).
    Fitted,
}

/// One manifest variable's communality.
#[derive(Debug, Clone, Serialize)]
pub struct MvCommunality {
    pub mv: String,
    pub lv: String,
    pub value: f64,
}

/// One latent block's summary.
#[derive(Debug, Clone, Serialize)]
pub struct BlockSummary {
    pub lv: String,
    pub n_mvs: usize,
    pub communality: f64,
    pub cronbach_alpha: f64,
    /// Alpha is reported as 1 for single-indicator blocks; this marks them.
    pub single_indicator: bool,
}

/// One endogenous latent variable's R².
#[derive(Debug, Clone, Serialize)]
pub struct LvRSquared {
    pub lv: String,
    pub value: f64,
}

/// Fit measures of a [`FittedModel`] on a dataset.
#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub score_basis: ScoreBasis,
    pub n_rows: usize,
    pub n_clusters: usize,
    pub cluster_sizes: Vec<usize>,
    pub communalities: Vec<MvCommunality>,
    pub blocks: Vec<BlockSummary>,
    /// Mean communality over all manifest variables in the model.
    pub average_communality: f64,
    pub r_squared: Vec<LvRSquared>,
    /// Mean R² over the endogenous latent variables.
    pub average_r_squared: f64,
    /// `sqrt(average_communality · average_r_squared)`.
    pub gof: f64,
    /// Share of the model columns' sum of squares reproduced by `U C Λ Λᵀ`.
    pub explained_share: f64,
    /// `sqrt(average_r_squared · explained_share)`: R² discounted by how much
    /// of the data the clustered structure actually reproduces.
    pub penalized_gof: f64,
    /// Final `‖X − U C Λ Λᵀ‖²` (all data columns, including any the model
    /// does not cover).
    pub objective: f64,
}

impl FitReport {
    /// Compute every measure for `fit` on `data`.
    ///
    /// `data` must be the dataset the model was fitted on (same columns in
    /// the same order).
    pub fn new(fit: &FittedModel, data: &DataMatrix, basis: ScoreBasis) -> Result<FitReport> {
        if fit.column_names != data.column_names {
            return Err(Error::Dimension {
                context: "fit report data".into(),
                expected: format!("columns {:?}", fit.column_names),
                found: format!("columns {:?}", data.column_names),
            });
        }
        let model = &fit.model;
        let n = data.n_rows();
        let scores = match basis {
            ScoreBasis::Data => fit.scores(data),
            ScoreBasis::Fitted => fit.fitted_scores(),
        };

        // Communalities per manifest variable, then per block.
        let mut communalities = Vec::with_capacity(model.n_mvs());
        for (mv, name) in model.mv_names().iter().enumerate() {
            let col_idx = data.column_index(name)?;
            let lv = model.lv_of_mv(mv);
            let column: Vec<f64> = data.values.column(col_idx).iter().copied().collect();
            let score: Vec<f64> = scores.column(lv).iter().copied().collect();
            communalities.push(MvCommunality {
                mv: name.clone(),
                lv: model.lv_names()[lv].clone(),
                value: communality(&column, &score),
            });
        }
        let average_communality =
            communalities.iter().map(|c| c.value).sum::<f64>() / communalities.len() as f64;

        let mut blocks = Vec::with_capacity(model.n_lvs());
        for lv in 0..model.n_lvs() {
            let members = model.block_members(lv);
            let block_com = members
                .iter()
                .map(|&mv| communalities[mv].value)
                .sum::<f64>()
                / members.len() as f64;
            let cols: Vec<Vec<f64>> = members
                .iter()
                .map(|&mv| {
                    let idx = data.column_index(&model.mv_names()[mv]).unwrap();
                    data.values.column(idx).iter().copied().collect()
                })
                .collect();
            blocks.push(BlockSummary {
                lv: model.lv_names()[lv].clone(),
                n_mvs: members.len(),
                communality: block_com,
                cronbach_alpha: cronbach_alpha(&cols),
                single_indicator: members.len() == 1,
            });
        }

        // Structural R².
        let structural = structural_fit(&scores, model)?;
        let mut r_squared = Vec::new();
        for (lv, r2) in structural.r_squared.iter().enumerate() {
            if let Some(v) = r2 {
                r_squared.push(LvRSquared {
                    lv: model.lv_names()[lv].clone(),
                    value: *v,
                });
            }
        }
        let average_r_squared =
            r_squared.iter().map(|r| r.value).sum::<f64>() / r_squared.len().max(1) as f64;

        // Explained share over the model's columns. The loadings have
        // orthonormal columns, so ‖U C Λ Λᵀ‖² = ‖U C Λ‖².
        let reproduced = fit.fitted_scores().norm_squared();
        let mut model_ss = 0.0;
        for name in model.mv_names() {
            let idx = data.column_index(name)?;
            model_ss += data.values.column(idx).norm_squared();
        }
        let explained_share = if model_ss > 0.0 {
            reproduced / model_ss
        } else {
            0.0
        };

        Ok(FitReport {
            score_basis: basis,
            n_rows: n,
            n_clusters: fit.n_clusters,
            cluster_sizes: fit.membership.counts(),
            average_communality,
            communalities,
            blocks,
            average_r_squared,
            r_squared,
            gof: gof(average_communality, average_r_squared),
            explained_share,
            penalized_gof: penalized_gof(average_r_squared, explained_share),
            objective: fit.objective,
        })
    }

    /// A compact human-readable rendering.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "## Fit ({} rows, {} clusters, sizes {:?})\n\n",
            self.n_rows, self.n_clusters, self.cluster_sizes
        ));
        out.push_str(&format!(
            "- objective: {:.6}\n- average communality: {:.4}\n- average R²: {:.4}\n- GoF: {:.4}\n- explained share: {:.4}\n- penalized GoF: {:.4}\n\n",
            self.objective,
            self.average_communality,
            self.average_r_squared,
            self.gof,
            self.explained_share,
            self.penalized_gof
        ));
        out.push_str("| block | indicators | communality | alpha |\n|---|---|---|---|\n");
        for b in &self.blocks {
            let alpha = if b.single_indicator {
                "1 (single indicator)".to_string()
            } else {
                format!("{:.4}", b.cronbach_alpha)
            };
            out.push_str(&format!(
                "| {} | {} | {:.4} | {} |\n",
                b.lv, b.n_mvs, b.communality, alpha
            ));
        }
        out.push('\n');
        if !self.r_squared.is_empty() {
            out.push_str("| endogenous | R² |\n|---|---|\n");
            for r in &self.r_squared {
                out.push_str(&format!("| {} | {:.4} |\n", r.lv, r.value));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{fit, FitOptions};
    use crate::model::parse_valid_model;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ari_is_one_for_identical_and_relabeled_partitions() {
        let a = [0, 0, 1, 1, 2, 2];
        let b = [2, 2, 0, 0, 1, 1];
        assert_abs_diff_eq!(adjusted_rand_index(&a, &a), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(adjusted_rand_index(&a, &b), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn ari_matches_hand_computed_contingency_example() {
        // Contingency [[2,1,0],[0,1,2]]: index 2, expected 18/15, max 4.5.
        let a = [0, 0, 0, 1, 1, 1];
        let b = [0, 0, 1, 1, 2, 2];
        let expected = (2.0 - 1.2) / (4.5 - 1.2);
        assert_abs_diff_eq!(adjusted_rand_index(&a, &b), expected, epsilon = 1e-12);
    }

    #[test]
    fn ari_handles_the_degenerate_single_cluster_case() {
        let a = [0, 0, 0, 0];
        assert_abs_diff_eq!(adjusted_rand_index(&a, &a), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn ari_can_be_negative_for_systematic_disagreement() {
        // Crossed pairs disagree more than chance.
        let a = [0, 0, 1, 1];
        let b = [0, 1, 0, 1];
        assert!(adjusted_rand_index(&a, &b) < 0.0);
    }

    #[test]
    fn communality_of_an_exact_linear_relation_is_one() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| -0.5 * v + 2.0).collect();
        assert_abs_diff_eq!(communality(&x, &y), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn gof_matches_the_reference_value() {
        assert_abs_diff_eq!(gof(0.5916, 0.3872), 0.47861, epsilon = 5e-4);
    }

    #[test]
    fn alpha_of_two_perfectly_correlated_columns_is_one() {
        let a = vec![1.0, 2.0, 3.0, 4.0];
        let b = a.clone();
        assert_abs_diff_eq!(cronbach_alpha(&[a, b]), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn alpha_matches_the_two_item_formula() {
        // For two standardized items with correlation r, alpha = 2r/(1+r).
        let a = vec![-1.0, 0.0, 1.0];
        let b = vec![-1.0, 1.0, 0.0]; // r = 1/2 with a
        let r = crate::linalg::pearson(&a, &b);
        assert_abs_diff_eq!(r, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(
            cronbach_alpha(&[a, b]),
            2.0 * r / (1.0 + r),
            epsilon = 1e-12
        );
    }

    #[test]
    fn singleton_block_alpha_is_one() {
        assert_eq!(cronbach_alpha(&[vec![1.0, 2.0, 3.0]]), 1.0);
    }

    #[test]
    fn report_on_perfectly_clustered_data_reaches_gof_one() {
        // Two groups, every column the group signal: communalities, R², and
        // explained share are all 1.
        let model = parse_valid_model(
            "lv DRIVER exogenous\n\
             lv OUTCOME endogenous\n\
             mv x1 -> DRIVER\n\
             mv x2 -> DRIVER\n\
             mv x3 -> OUTCOME\n\
             mv x4 -> OUTCOME\n\
             path DRIVER -> OUTCOME\n",
        )
        .unwrap();
        let mut raw = nalgebra::DMatrix::zeros(8, 4);
        for i in 0..8 {
            let v = if i < 4 { 5.0 } else { 1.0 };
            for c in 0..4 {
                raw[(i, c)] = v;
            }
        }
        let names: Vec<String> = (1..=4).map(|i| format!("x{i}")).collect();
        let data = crate::data::DataMatrix::standardize(&raw, &names).unwrap();
        let fitted = fit(&data, &model, 2, &FitOptions::default()).unwrap();
        let report = FitReport::new(&fitted, &data, ScoreBasis::Data).unwrap();
        assert_abs_diff_eq!(report.average_communality, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(report.average_r_squared, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(report.gof, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(report.explained_share, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(report.penalized_gof, 1.0, epsilon = 1e-9);
        assert_eq!(report.cluster_sizes.iter().sum::<usize>(), 8);
        // Markdown rendering carries the headline numbers.
        let md = report.to_markdown();
        assert!(md.contains("GoF"));
        assert!(md.contains("DRIVER"));
    }

    #[test]
    fn single_predictor_r_squared_equals_squared_correlation() {
        // Structural R² for one predictor must equal the squared Pearson
        // correlation — computed here through a different code path.
        let model = crate::model::PathModelSpec::from_parts(
            vec!["A".into(), "Y".into()],
            1,
            vec!["a1".into(), "y1".into()],
            vec![0, 1],
            vec![(0, 1)],
        );
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [1.2, 1.9, 3.4, 3.8, 5.1];
        let mut scores = nalgebra::DMatrix::zeros(5, 2);
        for i in 0..5 {
            scores[(i, 0)] = a[i];
            scores[(i, 1)] = y[i];
        }
        let s = structural_fit(&scores, &model).unwrap();
        let r = crate::linalg::pearson(&a, &y);
        assert_abs_diff_eq!(s.r_squared[1].unwrap(), r * r, epsilon = 1e-12);
        assert_eq!(s.r_squared[0], None);
    }
}
