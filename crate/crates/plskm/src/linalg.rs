//! Small numeric helpers shared across the crate.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Minimum-norm least-squares solution of `A X = B`.
///
/// Computed from a complete orthogonal decomposition: a column-pivoted QR of
/// `A` reveals the numerical rank (diagonal entries of `R` at or below
/// `1e-12` times the largest are treated as zero), and when the rank falls
/// short a second QR of the retained rows of `R` turns the basic solution
/// into the minimum-norm one. Both factorizations are finite Householder
/// passes, so rank-deficient systems — two collinear predictors, a constant
/// column — get the pseudoinverse solution without relying on an iterative
/// kernel that may not converge on exactly such inputs. `A` is m×k, `B` is
/// m×c; the result is k×c.
pub fn lstsq(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    debug_assert_eq!(a.nrows(), b.nrows());
    let k = a.ncols();
    let c = b.ncols();
    let qr = a.clone().col_piv_qr();
    let r = qr.r(); // min(m,k) × k, upper trapezoidal, non-negative diagonal.
    let r0 = r.nrows();
    let dmax = (0..r0).map(|i| r[(i, i)]).fold(0.0f64, f64::max);
    if !dmax.is_finite() {
        return Err(Error::Singular {
            context: "least squares: factorization produced non-finite values".into(),
        });
    }
    let cutoff = 1e-12 * dmax;
    let rank = (0..r0).take_while(|&i| r[(i, i)] > cutoff).count();
    if rank == 0 {
        // A is numerically zero; the minimum-norm solution is zero.
        return Ok(DMatrix::zeros(k, c));
    }
    let mut qtb = b.clone();
    qr.q_tr_mul(&mut qtb);
    let w = qtb.rows(0, rank);
    let mut z;
    if rank == k {
        // Full column rank: back-substitute R z = Q^T B.
        z = DMatrix::zeros(k, c);
        for col in 0..c {
            for i in (0..k).rev() {
                let mut s = w[(i, col)];
                for j in (i + 1)..k {
                    s -= r[(i, j)] * z[(j, col)];
                }
                z[(i, col)] = s / r[(i, i)];
            }
        }
    } else {
        // Rank-deficient: factor the retained rows as R1^T = Q2 T, so that
        // R1 = T^T Q2^T with T square and invertible. Forward-substitute
        // T^T u = Q^T B; z = Q2 u is then the minimum-norm solution.
        let r1t = r.rows(0, rank).transpose(); // k × rank
        let qr2 = r1t.qr();
        let q2 = qr2.q(); // k × rank
        let t = qr2.r(); // rank × rank, upper triangular
        let mut u = DMatrix::zeros(rank, c);
        for col in 0..c {
            for i in 0..rank {
                if t[(i, i)] == 0.0 {
                    return Err(Error::Singular {
                        context: "least squares: rank detection failed".into(),
                    });
                }
                let mut s = w[(i, col)];
                for j in 0..i {
                    s -= t[(j, i)] * u[(j, col)];
                }
                u[(i, col)] = s / t[(i, i)];
            }
        }
        z = q2 * u;
    }
    qr.p().inv_permute_rows(&mut z);
    Ok(z)
}

/// Biased (1/n) covariance matrix of the columns of `y`, after centering.
pub fn column_covariance(y: &DMatrix<f64>) -> DMatrix<f64> {
    let n = y.nrows() as f64;
    let mut centered = y.clone();
    for mut col in centered.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
    (centered.transpose() * &centered) / n
}

/// Pearson correlation between two equally long slices.
///
/// Returns 0 when either side has zero spread.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        num += (x - ma) * (y - mb);
        da += (x - ma).powi(2);
        db += (y - mb).powi(2);
    }
    if da <= 0.0 || db <= 0.0 {
        0.0
    } else {
        num / (da.sqrt() * db.sqrt())
    }
}

/// Sample standard deviation (n−1 denominator).
pub fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if n < 2.0 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (ss / (n - 1.0)).sqrt()
}

/// Population standard deviation (1/n denominator).
pub fn population_sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if n == 0.0 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (ss / n).sqrt()
}

/// Linear-interpolation quantile (the common "type 7" definition) of already
/// sorted data. `q` in [0, 1].
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    debug_assert!(sorted.windows(2).all(|w| w[0] <= w[1]));
    if sorted.len() == 1 {
        return sorted[0];
    }
    let h = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
