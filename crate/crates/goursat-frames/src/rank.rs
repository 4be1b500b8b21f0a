//! Audited numerical rank, kernels and span membership.
//!
//! Every rank decision records the ratio between the smallest singular value
//! it kept and the largest it discarded. Decisions with a ratio below the
//! policy minimum are refused rather than guessed.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankPolicy {
    /// Singular values at or below `tol_rel * σ_max` count as zero.
    pub tol_rel: f64,
    /// Required ratio between the smallest kept and largest dropped singular value.
    pub min_gap: f64,
    /// Columns whose norm is below this fraction of the largest column are treated as zero.
    pub zero_rel: f64,
}

impl Default for RankPolicy {
    fn default() -> Self {
        RankPolicy {
            tol_rel: 1e-8,
            min_gap: 1e3,
            zero_rel: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankDecision {
    pub context: String,
    pub rank: usize,
    /// `σ_r / σ_{r+1}`; infinite when nothing was dropped or the dropped value is exactly zero.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RankError {
    #[error("indeterminate rank in {context}: gap ratio {gap:.3e} below {min_gap:.1e} (singular values {singular_values:?})")]
    Indeterminate {
        context: String,
        gap: f64,
        min_gap: f64,
        singular_values: Vec<f64>,
    },
}

/// Normalise nonzero columns; report the scale applied to each (0 for dropped columns).
fn normalized(cols: &[Vec<f64>], policy: &RankPolicy) -> (Vec<Vec<f64>>, Vec<f64>) {
    let norms: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let max = norms.iter().cloned().fold(0.0, f64::max);
    let mut out = Vec::with_capacity(cols.len());
    let mut scales = Vec::with_capacity(cols.len());
    for (c, &n) in cols.iter().zip(&norms) {
        if max > 0.0 && n > policy.zero_rel * max && n.is_finite() {
            out.push(c.iter().map(|x| x / n).collect());
            scales.push(1.0 / n);
        } else {
            out.push(vec![0.0; c.len()]);
            scales.push(0.0);
        }
    }
    (out, scales)
}

fn to_matrix(cols: &[Vec<f64>], rows: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols.len(), |i, j| cols[j][i])
}

fn decide(sv: &[f64], policy: &RankPolicy, context: &str) -> Result<RankDecision, RankError> {
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let mut sorted = sv.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let rank = sorted
        .iter()
        .filter(|&&s| s > policy.tol_rel * smax)
        .count();
    let gap = if rank == 0 || rank == sorted.len() || sorted[rank] == 0.0 {
        f64::INFINITY
    } else {
        sorted[rank - 1] / sorted[rank]
    };
    if gap < policy.min_gap || sorted.iter().any(|s| !s.is_finite()) {
        return Err(RankError::Indeterminate {
            context: context.to_string(),
            gap,
            min_gap: policy.min_gap,
            singular_values: sorted,
        });
    }
    Ok(RankDecision {
        context: context.to_string(),
        rank,
        gap,
    })
}

/// Rank of the span of `cols` (each a vector of equal length).
pub fn numerical_rank(
    cols: &[Vec<f64>],
    policy: &RankPolicy,
    context: &str,
) -> Result<RankDecision, RankError> {
    if cols.is_empty() {
        return Ok(RankDecision {
            context: context.into(),
            rank: 0,
            gap: f64::INFINITY,
        });
    }
    let rows = cols[0].len();
    let (n, _) = normalized(cols, policy);
    let m = to_matrix(&n, rows);
    let sv = m.singular_values();
    decide(sv.as_slice(), policy, context)
}

/// Basis of `{c : Σ_a c_a cols[a] = 0}` together with the audited rank.
pub fn kernel(
    cols: &[Vec<f64>],
    policy: &RankPolicy,
    context: &str,
) -> Result<(Vec<Vec<f64>>, RankDecision), RankError> {
    let ncols = cols.len();
    if ncols == 0 {
        return Ok((
            Vec::new(),
            RankDecision {
                context: context.into(),
                rank: 0,
                gap: f64::INFINITY,
            },
        ));
    }
    let rows = cols[0].len();
    let (n, scales) = normalized(cols, policy);
    // Pad with zero rows so the thin SVD carries a full right basis.
    let padded = rows.max(ncols);
    let m = DMatrix::from_fn(padded, ncols, |i, j| if i < rows { n[j][i] } else { 0.0 });
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("requested V");
    let sv: Vec<f64> = svd.singular_values.iter().cloned().collect();
    let d = decide(&sv, policy, context)?;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let mut basis = Vec::new();
    for (k, &s) in sv.iter().enumerate() {
        if !(s > policy.tol_rel * smax) {
            let v: Vec<f64> = (0..ncols)
                .map(|a| {
                    if scales[a] == 0.0 {
                        vt[(k, a)]
                    } else {
                        vt[(k, a)] * scales[a]
                    }
                })
                .collect();
            basis.push(v);
        }
    }
    debug_assert_eq!(basis.len(), ncols - d.rank);
    Ok((basis, d))
}

/// Relative distance of `v` from span(`basis`): ‖v − Pv‖ / max(‖v‖, floor).
pub fn span_residual(basis: &[Vec<f64>], v: &[f64], floor: f64) -> f64 {
    let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = vn.max(floor);
    if denom == 0.0 {
        return 0.0;
    }
    if basis.is_empty() {
        return vn / denom;
    }
    let (nb, _) = normalized(basis, &RankPolicy::default());
    let a = to_matrix(&nb, v.len());
    let b = DVector::from_column_slice(v);
    let svd = a.clone().svd(true, true);
    let x = match svd.solve(&b, 1e-12) {
        Ok(x) => x,
        Err(_) => return f64::INFINITY,
    };
    let r = &b - &a * x;
    r.norm() / denom
}

/// Dimension of span(A) ∩ span(B) via dim A + dim B − dim(A + B).
pub fn intersection_dim(
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    policy: &RankPolicy,
    context: &str,
) -> Result<(usize, Vec<RankDecision>), RankError> {
    let ra = numerical_rank(a, policy, &format!("{context} (first)"))?;
    let rb = numerical_rank(b, policy, &format!("{context} (second)"))?;
    let both: Vec<Vec<f64>> = a.iter().chain(b.iter()).cloned().collect();
    let rs = numerical_rank(&both, policy, &format!("{context} (sum)"))?;
    let dim = (ra.rank + rb.rank).saturating_sub(rs.rank);
    Ok((dim, vec![ra, rb, rs]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_of_dependent_columns() {
        let cols = vec![
            vec![1.0, 0.0, 0.0],
            vec![2.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
        ];
        let d = numerical_rank(&cols, &RankPolicy::default(), "t").unwrap();
        assert_eq!(d.rank, 2);
        assert!(d.gap > 1e10);
    }

    #[test]
    fn near_threshold_is_refused() {
        let cols = vec![
            vec![1.0, 0.0, 0.0],
            vec![1.0, 1e-7, 0.0],
            vec![1.0, 1e-7, 1e-9],
        ];
        let e = numerical_rank(&cols, &RankPolicy::default(), "near").unwrap_err();
        assert!(matches!(e, RankError::Indeterminate { .. }));
    }

    #[test]
    fn kernel_of_wide_matrix() {
        // columns in R^2; 3 columns -> kernel dim 1
        let cols = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
        let (k, d) = kernel(&cols, &RankPolicy::default(), "k").unwrap();
        assert_eq!(d.rank, 2);
        assert_eq!(k.len(), 1);
        let v = &k[0];
        assert!((v[0] + v[2]).abs() < 1e-12 && (v[1] + v[2]).abs() < 1e-12);
    }

    #[test]
    fn kernel_respects_column_scaling() {
        let cols = vec![vec![1e6, 0.0], vec![1.0, 0.0]];
        let (k, _) = kernel(&cols, &RankPolicy::default(), "k").unwrap();
        assert_eq!(k.len(), 1);
        let v = &k[0];
        assert!((1e6 * v[0] + v[1]).abs() < 1e-9 * v[1].abs().max(1.0));
    }

    #[test]
    fn residual_and_intersection() {
        let basis = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]];
        assert!(span_residual(&basis, &[3.0, -2.0, 0.0], 1e-300) < 1e-14);
        assert!((span_residual(&basis, &[0.0, 0.0, 2.0], 1e-300) - 1.0).abs() < 1e-14);
        let other = vec![vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let (d, _) = intersection_dim(&basis, &other, &RankPolicy::default(), "i").unwrap();
        assert_eq!(d, 1);
    }
}
