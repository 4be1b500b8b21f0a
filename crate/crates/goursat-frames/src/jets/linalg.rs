//! Small dense linear algebra with jet entries.
//!
//! Pivots are chosen from the values at the expansion point, so the
//! elimination is the Taylor expansion of the pointwise one.

use super::{JetError, JetScalar};

/// Row-major matrix of jets.
pub type JetMatrix = Vec<Vec<JetScalar>>;

pub fn jet_transpose(a: &JetMatrix) -> JetMatrix {
    if a.is_empty() {
        return Vec::new();
    }
    (0..a[0].len())
        .map(|j| a.iter().map(|row| row[j].clone()).collect())
        .collect()
}

pub fn jet_matmul(a: &JetMatrix, b: &JetMatrix) -> JetMatrix {
    let inner = b.len();
    let cols = b.first().map_or(0, |r| r.len());
    a.iter()
        .map(|row| {
            assert_eq!(row.len(), inner, "matmul dimension mismatch");
            (0..cols)
                .map(|j| {
                    let mut acc = row[0].zero_like();
                    for k in 0..inner {
                        acc = &acc + &(&row[k] * &b[k][j]);
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

/// Solve `A X = B` by Gaussian elimination with partial pivoting on point values.
pub fn jet_solve(a: &JetMatrix, b: &JetMatrix) -> Result<JetMatrix, JetError> {
    let n = a.len();
    let mut a: JetMatrix = a.clone();
    let mut b: JetMatrix = b.clone();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |m, x| m.max(x.value().abs()));
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].value().abs().total_cmp(&a[j][col].value().abs()))
            .expect("nonempty range");
        if !(a[piv][col].value().abs() > 1e-14 * scale) {
            return Err(JetError::SingularEvaluation { op: "linear solve" });
        }
        a.swap(col, piv);
        b.swap(col, piv);
        let inv = a[col][col].recip()?;
        for row in col + 1..n {
            if a[row][col].max_abs() == 0.0 {
                continue;
            }
            let f = &a[row][col] * &inv;
            for k in col..n {
                let t = &f * &a[col][k];
                a[row][k] = &a[row][k] - &t;
            }
            for k in 0..b[row].len() {
                let t = &f * &b[col][k];
                b[row][k] = &b[row][k] - &t;
            }
        }
    }
    let m = b.first().map_or(0, |r| r.len());
    let mut x: JetMatrix = vec![Vec::with_capacity(m); n];
    for row in (0..n).rev() {
        let inv = a[row][row].recip()?;
        let mut xs = Vec::with_capacity(m);
        for k in 0..m {
            let mut acc = b[row][k].clone();
            for j in row + 1..n {
                acc = &acc - &(&a[row][j] * &x[j][k]);
            }
            xs.push(&acc * &inv);
        }
        x[row] = xs;
    }
    Ok(x)
}

pub fn jet_inverse(a: &JetMatrix) -> Result<JetMatrix, JetError> {
    let n = a.len();
    let Some(proto) = a.first().and_then(|r| r.first()) else {
        return Ok(Vec::new());
    };
    let eye: JetMatrix = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| proto.constant_like(if i == j { 1.0 } else { 0.0 }))
                .collect()
        })
        .collect();
    jet_solve(a, &eye)
}

/// Upper-triangular `θ` with positive diagonal and `θᵀθ = g`.
///
/// This is `Lᵀ` for the Cholesky factor `g = L Lᵀ`.
pub fn jet_cholesky_upper(g: &JetMatrix) -> Result<JetMatrix, JetError> {
    let n = g.len();
    let Some(proto) = g.first().and_then(|r| r.first()) else {
        return Ok(Vec::new());
    };
    let mut l: JetMatrix = vec![vec![proto.zero_like(); n]; n];
    for j in 0..n {
        let mut d = g[j][j].clone();
        for k in 0..j {
            d = &d - &(&l[j][k] * &l[j][k]);
        }
        if !(d.value() > 0.0) {
            return Err(JetError::SingularEvaluation { op: "cholesky" });
        }
        let ljj = d.sqrt()?;
        let inv = ljj.recip()?;
        for i in j + 1..n {
            let mut s = g[i][j].clone();
            for k in 0..j {
                s = &s - &(&l[i][k] * &l[j][k]);
            }
            l[i][j] = &s * &inv;
        }
        l[j][j] = ljj;
    }
    Ok(jet_transpose(&l))
}
