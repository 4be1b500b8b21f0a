//! Orthonormal frames, Levi-Civita connection forms and the Riemannian curve bundle.
//!
//! The lifted coframe is `ω = O(r) θ(x) dx`, with `θ` the upper Cholesky factor of
//! the metric and `O` a parametrised rotation. The connection forms `π` are
//! antisymmetric and satisfy `dω = π ∧ ω`; curvature is read from
//! `dπ − π ∧ π = ½ R ω ∧ ω`, so constant sectional curvature `K` gives
//! `R^i_{jij} = −K`.
//!
//! Chart of the frame bundle: base coordinates, rotation parameters, then the
//! fiber invariants `κ^a_b` ordered by `b` and then `a`. Its dimension is `n²`.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distribution::{
    bracket_jets, DistError, Distribution, FieldJet, FieldProvider, VectorField,
};
use crate::exprdsl::{self, EvalError, Expr, ParseError};
use crate::jets::{jet_cholesky_upper, jet_inverse, jet_matmul, jet_transpose, JetMatrix};
use crate::jets::{JetError, JetScalar};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CartanError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error("metric not positive-definite at {point:?}")]
    NotPositiveDefinite { point: Vec<f64> },
    #[error("metric entries g[{i}][{j}] and g[{j}][{i}] differ")]
    NotSymmetric { i: usize, j: usize },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid metric: {0}")]
    Invalid(String),
    #[error("unknown built-in metric `{0}`")]
    UnknownBuiltin(String),
}

impl From<CartanError> for DistError {
    fn from(e: CartanError) -> Self {
        match e {
            CartanError::Dist(d) => d,
            CartanError::Jet(j) => DistError::Jet(j),
            CartanError::Eval(v) => DistError::Eval(v),
            CartanError::Parse(p) => DistError::Parse(p),
            other => DistError::Invalid(other.to_string()),
        }
    }
}

/// JSON form of a metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDoc {
    pub coords: Vec<String>,
    pub g: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basepoint: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

/// A Riemannian metric given by expression entries in a coordinate chart.
#[derive(Debug, Clone)]
pub struct MetricSpec {
    pub name: String,
    pub coords: Vec<String>,
    pub g: Vec<Vec<Expr>>,
    pub basepoint: Vec<f64>,
}

fn default_base(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.1 * (i as f64 + 1.0) * if i % 2 == 0 { 1.0 } else { -1.0 })
        .collect()
}

impl MetricSpec {
    pub fn new(
        name: impl Into<String>,
        coords: Vec<String>,
        g: Vec<Vec<Expr>>,
        basepoint: Vec<f64>,
    ) -> Result<Self, CartanError> {
        let n = coords.len();
        if n == 0 {
            return Err(CartanError::Invalid("no coordinates".into()));
        }
        for (i, a) in coords.iter().enumerate() {
            if coords[..i].contains(a) {
                return Err(CartanError::Invalid(format!("duplicate coordinate `{a}`")));
            }
        }
        if g.len() != n || g.iter().any(|r| r.len() != n) {
            return Err(CartanError::Invalid(format!("g must be {n}×{n}")));
        }
        if basepoint.len() != n || basepoint.iter().any(|v| !v.is_finite()) {
            return Err(CartanError::Invalid(format!(
                "basepoint must have {n} finite entries"
            )));
        }
        let m = MetricSpec {
            name: name.into(),
            coords,
            g,
            basepoint,
        };
        m.check_symmetric()?;
        m.cholesky_at(&m.basepoint)?;
        Ok(m)
    }

    /// Entries must agree structurally, or numerically at the basepoint and a few nearby points.
    fn check_symmetric(&self) -> Result<(), CartanError> {
        let n = self.dim();
        let pts = crate::distribution::sample_points(&self.basepoint, 4, 1e-1, 0x5e77);
        for i in 0..n {
            for j in 0..i {
                if self.g[i][j] == self.g[j][i] {
                    continue;
                }
                for p in &pts {
                    let a = self.g[i][j].eval_f64(p)?;
                    let b = self.g[j][i].eval_f64(p)?;
                    if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                        return Err(CartanError::NotSymmetric { i, j });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn from_doc(doc: &MetricDoc) -> Result<Self, CartanError> {
        let vars: Vec<&str> = doc.coords.iter().map(|s| s.as_str()).collect();
        let g = doc
            .g
            .iter()
            .map(|row| exprdsl::parse_all(row, &vars))
            .collect::<Result<Vec<_>, _>>()?;
        let base = doc
            .basepoint
            .clone()
            .unwrap_or_else(|| default_base(vars.len()));
        MetricSpec::new(
            doc.name.clone().unwrap_or_else(|| "metric".into()),
            doc.coords.clone(),
            g,
            base,
        )
    }

    pub fn from_json(text: &str) -> Result<Self, CartanError> {
        let doc: MetricDoc = serde_json::from_str(text)
            .map_err(|e| CartanError::Invalid(format!("metric JSON: {e}")))?;
        Self::from_doc(&doc)
    }

    pub fn to_doc(&self) -> MetricDoc {
        MetricDoc {
            coords: self.coords.clone(),
            g: self
                .g
                .iter()
                .map(|r| r.iter().map(|e| e.to_string()).collect())
                .collect(),
            basepoint: Some(self.basepoint.clone()),
            name: Some(self.name.clone()),
        }
    }

    fn from_text(
        name: &str,
        coords: &[&str],
        entries: Vec<Vec<String>>,
        base: Vec<f64>,
    ) -> Result<Self, CartanError> {
        let g = entries
            .iter()
            .map(|r| exprdsl::parse_all(r, coords))
            .collect::<Result<Vec<_>, _>>()?;
        MetricSpec::new(
            name,
            coords.iter().map(|s| s.to_string()).collect(),
            g,
            base,
        )
    }

    fn conformal(
        name: &str,
        coords: &[&str],
        factor: &str,
        base: Vec<f64>,
    ) -> Result<Self, CartanError> {
        let n = coords.len();
        let entries = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if i == j {
                            factor.to_string()
                        } else {
                            "0".into()
                        }
                    })
                    .collect()
            })
            .collect();
        Self::from_text(name, coords, entries, base)
    }

    /// The upper half-space model `(dx² + dy² + dz²)/z²`.
    pub fn h3() -> Self {
        Self::conformal("h3", &["x", "y", "z"], "1/z^2", vec![0.3, -0.2, 1.1])
            .expect("built-in metric")
    }

    /// `δ/Λ²` with `Λ = 1 + λ/4 (x² + y² + z²)`, of constant sectional curvature `λ`.
    pub fn constant_curvature(lambda: f64) -> Result<Self, CartanError> {
        if !lambda.is_finite() {
            return Err(CartanError::Invalid("lambda must be finite".into()));
        }
        let factor = format!("1/(1+({lambda})/4*(x^2+y^2+z^2))^2");
        let mut m = Self::conformal(
            "constant-curvature",
            &["x", "y", "z"],
            &factor,
            vec![0.2, -0.1, 0.15],
        )?;
        m.name = format!("constant-curvature(lambda={lambda})");
        Ok(m)
    }

    pub fn euclidean(n: usize) -> Result<Self, CartanError> {
        if n == 0 {
            return Err(CartanError::Invalid("dimension must be positive".into()));
        }
        let names: Vec<String> = if n == 3 {
            vec!["x".into(), "y".into(), "z".into()]
        } else {
            (1..=n).map(|i| format!("x{i}")).collect()
        };
        let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        Self::conformal("euclidean", &refs, "1", default_base(n))
    }

    /// Look up a built-in by name: `h3`, `constant-curvature` (needs `lambda`), `euclidean` (default n = 3).
    pub fn builtin(name: &str, lambda: Option<f64>, n: Option<usize>) -> Result<Self, CartanError> {
        match name {
            "h3" => Ok(Self::h3()),
            "constant-curvature" => {
                let l = lambda.ok_or_else(|| {
                    CartanError::Invalid("constant-curvature needs a lambda".into())
                })?;
                Self::constant_curvature(l)
            }
            "euclidean" => Self::euclidean(n.unwrap_or(3)),
            other => Err(CartanError::UnknownBuiltin(other.to_string())),
        }
    }

    /// Metric entries as jets; `xs` are the jets of the coordinates.
    pub fn eval_jets(&self, xs: &[JetScalar]) -> Result<JetMatrix, CartanError> {
        let proto = xs
            .first()
            .ok_or_else(|| CartanError::Invalid("no coordinate jets".into()))?;
        self.g
            .iter()
            .map(|r| {
                r.iter()
                    .map(|e| e.eval_jet_like(xs, proto).map_err(CartanError::from))
                    .collect()
            })
            .collect()
    }

    pub fn at(&self, p: &[f64]) -> Result<DMatrix<f64>, CartanError> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = self.g[i][j].eval_f64(p)?;
            }
        }
        Ok(m)
    }

    fn cholesky_at(&self, p: &[f64]) -> Result<JetMatrix, CartanError> {
        let xs = JetScalar::seed_all(p, 0)?;
        orthonormal_coframe(self, &xs)
    }
}

/// Upper-triangular `θ` with positive diagonal and `θᵀθ = g`, as jets.
pub fn orthonormal_coframe(g: &MetricSpec, xs: &[JetScalar]) -> Result<JetMatrix, CartanError> {
    let gm = g.eval_jets(xs)?;
    jet_cholesky_upper(&gm).map_err(|e| match e {
        JetError::SingularEvaluation { .. } => CartanError::NotPositiveDefinite {
            point: xs.iter().map(|x| x.value()).collect(),
        },
        other => other.into(),
    })
}

/// Christoffel symbols `Γ[a][b][c] = Γ^a_{bc}`, one order below the coordinate jets.
pub fn christoffel(
    g: &MetricSpec,
    xs: &[JetScalar],
) -> Result<Vec<Vec<Vec<JetScalar>>>, CartanError> {
    let n = g.dim();
    let gm = g.eval_jets(xs)?;
    let order = xs[0].order();
    if order == 0 {
        return Err(JetError::InsufficientOrder {
            needed: 1,
            available: 0,
        }
        .into());
    }
    let low: JetMatrix = gm
        .iter()
        .map(|r| r.iter().map(|e| e.truncate(order - 1)).collect())
        .collect::<Result<_, _>>()?;
    let ginv = jet_inverse(&low)?;
    let mut dg = Vec::with_capacity(n);
    for d in 0..n {
        let rows: JetMatrix = gm
            .iter()
            .map(|r| r.iter().map(|e| e.partial(d)).collect())
            .collect::<Result<_, _>>()?;
        dg.push(rows);
    }
    let zero = low[0][0].zero_like();
    let mut out = vec![vec![vec![zero.clone(); n]; n]; n];
    for b in 0..n {
        for c in 0..n {
            let lowered: Vec<JetScalar> = (0..n)
                .map(|d| &(&dg[b][d][c] + &dg[c][d][b]) - &dg[d][b][c])
                .collect();
            for a in 0..n {
                let mut acc = zero.clone();
                for (d, l) in lowered.iter().enumerate() {
                    acc = &acc + &(&ginv[a][d] * l);
                }
                out[a][b][c] = acc.scale(0.5);
            }
        }
    }
    Ok(out)
}

/// Index pairs `(i, j)`, `i < j`, in lexicographic order.
pub fn rotation_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            v.push((i, j));
        }
    }
    v
}

/// A chart of SO(n): parameter names and the rotation matrix as expressions.
#[derive(Debug, Clone)]
pub struct SoParametrization {
    pub n: usize,
    pub names: Vec<String>,
    pub matrix: Vec<Vec<Expr>>,
}

const SO3_ROWS: [[&str; 3]; 3] = [
    [
        "cos(b)*cos(c)-sin(a)*sin(b)*sin(c)",
        "-cos(a)*sin(c)",
        "sin(a)*cos(b)*sin(c)+sin(b)*cos(c)",
    ],
    [
        "cos(b)*sin(c)+sin(a)*sin(b)*cos(c)",
        "cos(a)*cos(c)",
        "sin(b)*sin(c)-sin(a)*cos(b)*cos(c)",
    ],
    ["-cos(a)*sin(b)", "sin(a)", "cos(a)*cos(b)"],
];

/// Euler-type angles `a, b, c` for n = 3; a lexicographic product of Givens rotations otherwise.
pub fn so_n(n: usize) -> SoParametrization {
    if n == 3 {
        let names = vec!["a".to_string(), "b".into(), "c".into()];
        let matrix = SO3_ROWS
            .iter()
            .map(|r| exprdsl::parse_all(r, &["a", "b", "c"]).expect("built-in rotation"))
            .collect();
        return SoParametrization { n, names, matrix };
    }
    let pairs = rotation_pairs(n);
    let names: Vec<String> = pairs
        .iter()
        .map(|(i, j)| format!("r{}{}", i + 1, j + 1))
        .collect();
    let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    let mut o: Vec<Vec<Expr>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| Expr::Num(if i == j { 1.0 } else { 0.0 }))
                .collect()
        })
        .collect();
    for (p, &(i, j)) in pairs.iter().enumerate() {
        let c = exprdsl::parse(&format!("cos({})", refs[p]), &refs).expect("cos");
        let s = exprdsl::parse(&format!("sin({})", refs[p]), &refs).expect("sin");
        let ms = Expr::Neg(Box::new(s.clone()));
        for row in o.iter_mut() {
            let (oi, oj) = (row[i].clone(), row[j].clone());
            row[i] = exprdsl::add(
                exprdsl::mul(oi.clone(), c.clone()),
                exprdsl::mul(oj.clone(), s.clone()),
            );
            row[j] = exprdsl::add(exprdsl::mul(oi, ms.clone()), exprdsl::mul(oj, c.clone()));
        }
    }
    SoParametrization {
        n,
        names,
        matrix: o,
    }
}

impl SoParametrization {
    pub fn param_count(&self) -> usize {
        self.names.len()
    }

    /// The rotation as jets of the parameter jets `r`.
    pub fn jets(&self, r: &[JetScalar]) -> Result<JetMatrix, CartanError> {
        let proto = r
            .first()
            .ok_or_else(|| CartanError::Invalid("no rotation parameters".into()))?;
        if self.n == 3 {
            return self
                .matrix
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|e| e.eval_jet_like(r, proto).map_err(CartanError::from))
                        .collect()
                })
                .collect();
        }
        let n = self.n;
        let mut o: JetMatrix = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| proto.constant_like(if i == j { 1.0 } else { 0.0 }))
                    .collect()
            })
            .collect();
        for (p, (i, j)) in rotation_pairs(n).into_iter().enumerate() {
            let (c, s) = (r[p].cos(), r[p].sin());
            for row in o.iter_mut() {
                let (oi, oj) = (row[i].clone(), row[j].clone());
                row[i] = &(&oi * &c) + &(&oj * &s);
                row[j] = &(&oj * &c) - &(&oi * &s);
            }
        }
        Ok(o)
    }

    pub fn at(&self, r: &[f64]) -> Result<DMatrix<f64>, CartanError> {
        let jets = self.jets(&JetScalar::seed_all(r, 0)?)?;
        Ok(DMatrix::from_fn(self.n, self.n, |i, j| jets[i][j].value()))
    }

    /// Parameters `r` with `O(r) = target`, for a target in SO(n) inside the chart.
    pub fn solve(&self, target: &DMatrix<f64>) -> Result<Vec<f64>, CartanError> {
        let n = self.n;
        if target.nrows() != n || target.ncols() != n {
            return Err(CartanError::Invalid(
                "rotation target has wrong shape".into(),
            ));
        }
        if (target.transpose() * target - DMatrix::identity(n, n)).amax() > 1e-8
            || target.determinant() < 0.0
        {
            return Err(CartanError::Invalid(
                "rotation target is not in SO(n)".into(),
            ));
        }
        if n == 3 {
            let a = target[(2, 1)].clamp(-1.0, 1.0).asin();
            let b = (-target[(2, 0)]).atan2(target[(2, 2)]);
            let c = (-target[(0, 1)]).atan2(target[(1, 1)]);
            let r = vec![a, b, c];
            if (self.at(&r)? - target).amax() < 1e-10 {
                return Ok(r);
            }
            return Err(CartanError::Invalid(
                "rotation target is on the chart boundary (cos a = 0)".into(),
            ));
        }
        let m = self.param_count();
        let mut best = (f64::INFINITY, vec![0.0; m]);
        for start in 0..4 {
            let mut r: Vec<f64> = (0..m)
                .map(|i| match start {
                    0 => 0.0,
                    1 => 0.5,
                    2 => -0.5 + 0.1 * i as f64,
                    _ => 1.0 - 0.2 * i as f64,
                })
                .collect();
            for _ in 0..60 {
                let o = self.jets(&JetScalar::seed_all(&r, 1)?)?;
                let mut jac = DMatrix::zeros(n * n, m);
                let mut res = nalgebra::DVector::zeros(n * n);
                for i in 0..n {
                    for j in 0..n {
                        res[i * n + j] = o[i][j].value() - target[(i, j)];
                        for (k, g) in o[i][j].gradient()?.into_iter().enumerate() {
                            jac[(i * n + j, k)] = g;
                        }
                    }
                }
                let err = res.amax();
                if err < best.0 {
                    best = (err, r.clone());
                }
                if err < 1e-14 {
                    break;
                }
                let step = match jac.svd(true, true).solve(&-res, 1e-12) {
                    Ok(s) => s,
                    Err(_) => break,
                };
                for (x, d) in r.iter_mut().zip(step.iter()) {
                    *x += d;
                }
            }
            if best.0 < 1e-12 {
                return Ok(best.1);
            }
        }
        Err(CartanError::Invalid(format!(
            "rotation target not reached by the parametrisation (residual {:.3e})",
            best.0
        )))
    }
}

/// Coordinate layout of the frame bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameBundleChart {
    pub n: usize,
    pub base: Vec<String>,
    pub rotation: Vec<String>,
    pub fiber: Vec<String>,
    /// `(a, b)` of each fiber coordinate `κ^a_b`, in chart order.
    pub fiber_index: Vec<(usize, usize)>,
}

fn fiber_name(n: usize, a: usize, b: usize) -> String {
    if n == 3 {
        match (a, b) {
            (1, 0) => "kappa".into(),
            (2, 0) => "tau".into(),
            _ => format!("kappa{b}"),
        }
    } else {
        format!("k{a}_{b}")
    }
}

impl FrameBundleChart {
    pub fn new(base: Vec<String>, rotation: Vec<String>) -> Self {
        let n = base.len();
        let mut fiber_index = Vec::new();
        for b in 0..n.saturating_sub(1) {
            for a in 1..n - b {
                fiber_index.push((a, b));
            }
        }
        let fiber = fiber_index
            .iter()
            .map(|&(a, b)| fiber_name(n, a, b))
            .collect();
        FrameBundleChart {
            n,
            base,
            rotation,
            fiber,
            fiber_index,
        }
    }

    pub fn dim(&self) -> usize {
        self.base.len() + self.rotation.len() + self.fiber.len()
    }

    pub fn names(&self) -> Vec<String> {
        self.base
            .iter()
            .chain(&self.rotation)
            .chain(&self.fiber)
            .cloned()
            .collect()
    }

    /// Chart index of `κ^a_b`.
    pub fn fiber_slot(&self, a: usize, b: usize) -> Option<usize> {
        let off = self.base.len() + self.rotation.len();
        self.fiber_index
            .iter()
            .position(|&k| k == (a, b))
            .map(|i| off + i)
    }
}

/// Jet data of the lifted coframe in the base and rotation variables.
struct FrameData {
    w: JetMatrix,
    winv: JetMatrix,
    b: JetMatrix,
    binv: JetMatrix,
    /// `s[P][k]`: coefficient of `ω^k` in the semi-basic part of `π_P`.
    s: JetMatrix,
}

/// The coframe `(ω, π, dκ)` of the frame bundle and its dual frame.
pub struct CartanFrame {
    metric: MetricSpec,
    so: SoParametrization,
    chart: FrameBundleChart,
    pairs: Vec<(usize, usize)>,
    /// Maps torsion coefficients `C^i_{kl}` (k < l) to the semi-basic table `s[P][k]`.
    solver: DMatrix<f64>,
}

/// Connection forms at a point, as covectors in the chart's coordinate basis.
#[derive(Debug, Clone, Serialize)]
pub struct ConnectionForms {
    pub pairs: Vec<(usize, usize)>,
    pub omega: Vec<Vec<f64>>,
    pub pi: Vec<Vec<f64>>,
    /// Maurer–Cartan part `(dO·Oᵀ)_P` of each `π_P`.
    pub maurer_cartan: Vec<Vec<f64>>,
    /// `s[P][k]` with `π_P = (dO·Oᵀ)_P + Σ_k s[P][k] ω^k`.
    pub semibasic: Vec<Vec<f64>>,
}

/// Frame-indexed curvature `R^i_{jkl}` at a point.
#[derive(Debug, Clone, Serialize)]
pub struct CurvatureSample {
    pub point: Vec<f64>,
    pub n: usize,
    pub r: Vec<f64>,
}

impl CurvatureSample {
    fn zeros(point: Vec<f64>, n: usize) -> Self {
        CurvatureSample {
            point,
            n,
            r: vec![0.0; n * n * n * n],
        }
    }

    fn idx(&self, i: usize, j: usize, k: usize, l: usize) -> usize {
        ((i * self.n + j) * self.n + k) * self.n + l
    }

    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.r[self.idx(i, j, k, l)]
    }

    fn set(&mut self, i: usize, j: usize, k: usize, l: usize, v: f64) {
        let at = self.idx(i, j, k, l);
        self.r[at] = v;
    }

    fn quads(&self) -> impl Iterator<Item = (usize, usize, usize, usize)> {
        let n = self.n;
        (0..n * n * n * n).map(move |x| (x / (n * n * n), x / (n * n) % n, x / n % n, x % n))
    }

    /// Largest violation of antisymmetry in `(i,j)` and in `(k,l)`.
    pub fn antisymmetry_residual(&self) -> f64 {
        self.quads()
            .map(|(i, j, k, l)| {
                (self.get(i, j, k, l) + self.get(j, i, k, l))
                    .abs()
                    .max((self.get(i, j, k, l) + self.get(i, j, l, k)).abs())
            })
            .fold(0.0, f64::max)
    }

    /// Largest `|R^i_{jkl} + R^i_{klj} + R^i_{ljk}|`.
    pub fn bianchi_residual(&self) -> f64 {
        self.quads()
            .map(|(i, j, k, l)| {
                (self.get(i, j, k, l) + self.get(i, k, l, j) + self.get(i, l, j, k)).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn pair_symmetry_residual(&self) -> f64 {
        self.quads()
            .map(|(i, j, k, l)| (self.get(i, j, k, l) - self.get(k, l, i, j)).abs())
            .fold(0.0, f64::max)
    }

    /// Sectional curvature of the plane `e_i ∧ e_j`.
    pub fn sectional(&self, i: usize, j: usize) -> f64 {
        -self.get(i, j, i, j)
    }

    pub fn max_difference(&self, other: &CurvatureSample) -> f64 {
        self.r
            .iter()
            .zip(&other.r)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Residuals of the structure equations and frame relations at one point.
#[derive(Debug, Clone, Serialize)]
pub struct StructureReport {
    pub point: Vec<f64>,
    /// `dω − π∧ω` in coordinates.
    pub first_structure: f64,
    /// Components of `dπ − π∧π` outside `ω∧ω`.
    pub second_structure: f64,
    /// Dual-frame bracket relations, with curvature from the second structure equation.
    pub frame_brackets: f64,
    pub antisymmetry: f64,
    pub bianchi: f64,
    pub pair_symmetry: f64,
    /// Curvature from the structure equations against the Christoffel formula.
    pub christoffel: f64,
    /// `((i, j), K(e_i, e_j))` for `i < j`.
    pub sectional: Vec<((usize, usize), f64)>,
    pub curvature: CurvatureSample,
}

impl StructureReport {
    pub fn max_residual(&self) -> f64 {
        [
            self.first_structure,
            self.second_structure,
            self.frame_brackets,
            self.antisymmetry,
            self.bianchi,
            self.pair_symmetry,
            self.christoffel,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

fn truncate_all(m: &JetMatrix, order: usize) -> Result<JetMatrix, JetError> {
    m.iter()
        .map(|r| r.iter().map(|e| e.truncate(order)).collect())
        .collect()
}

impl CartanFrame {
    pub fn new(metric: MetricSpec) -> Result<Self, CartanError> {
        let n = metric.dim();
        if n < 2 {
            return Err(CartanError::Unsupported(format!(
                "frame bundle of a {n}-dimensional metric"
            )));
        }
        let so = so_n(n);
        for r in &so.names {
            if metric.coords.contains(r) {
                return Err(CartanError::Invalid(format!(
                    "metric coordinate `{r}` clashes with a rotation parameter"
                )));
            }
        }
        let chart = FrameBundleChart::new(metric.coords.clone(), so.names.clone());
        for f in &chart.fiber {
            if metric.coords.contains(f) {
                return Err(CartanError::Invalid(format!(
                    "metric coordinate `{f}` clashes with a fiber coordinate"
                )));
            }
        }
        let pairs = rotation_pairs(n);
        let solver = torsion_solver(n, &pairs);
        Ok(CartanFrame {
            metric,
            so,
            chart,
            pairs,
            solver,
        })
    }

    pub fn metric(&self) -> &MetricSpec {
        &self.metric
    }

    pub fn chart(&self) -> &FrameBundleChart {
        &self.chart
    }

    pub fn rotation(&self) -> &SoParametrization {
        &self.so
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn n(&self) -> usize {
        self.metric.dim()
    }

    fn m(&self) -> usize {
        self.pairs.len()
    }

    pub fn pair_index(&self, i: usize, j: usize) -> Option<usize> {
        self.pairs.iter().position(|&p| p == (i, j))
    }

    fn check_point(&self, point: &[f64]) -> Result<(), CartanError> {
        if point.len() != self.chart.dim() {
            return Err(CartanError::Invalid(format!(
                "point has {} entries, frame bundle has dimension {}",
                point.len(),
                self.chart.dim()
            )));
        }
        Ok(())
    }

    fn data(&self, point: &[f64], order: usize) -> Result<FrameData, CartanError> {
        self.check_point(point)?;
        let (n, m) = (self.n(), self.m());
        let xr = JetScalar::seed_all(&point[..n + m], order + 1)?;
        let theta = orthonormal_coframe(&self.metric, &xr[..n])?;
        let o = self.so.jets(&xr[n..])?;
        let o_low = truncate_all(&o, order)?;
        let theta_low = truncate_all(&theta, order)?;
        let w = jet_matmul(&o_low, &theta_low);
        let winv = jet_inverse(&w)
            .map_err(|_| CartanError::Invalid("coframe degenerate at this point".into()))?;
        let zero = w[0][0].zero_like();

        let mut b = vec![vec![zero.clone(); m]; m];
        for p in 0..m {
            let d_o: JetMatrix = o
                .iter()
                .map(|r| r.iter().map(|e| e.partial(n + p)).collect())
                .collect::<Result<_, _>>()?;
            for (pp, &(i, j)) in self.pairs.iter().enumerate() {
                let mut acc = zero.clone();
                for q in 0..n {
                    acc = &acc + &(&d_o[i][q] * &o_low[j][q]);
                }
                b[pp][p] = acc;
            }
        }
        let binv = jet_inverse(&b)
            .map_err(|_| CartanError::Invalid("rotation chart degenerate at this point".into()))?;

        // dθ as F^q_{ab} = ∂_a θ_{qb} − ∂_b θ_{qa}.
        let mut dtheta = Vec::with_capacity(n);
        for a in 0..n {
            let rows: JetMatrix = theta
                .iter()
                .map(|r| r.iter().map(|e| e.partial(a)).collect())
                .collect::<Result<_, _>>()?;
            dtheta.push(rows);
        }
        let mut g_q: Vec<JetMatrix> = Vec::with_capacity(n);
        for q in 0..n {
            let f: JetMatrix = (0..n)
                .map(|a| {
                    (0..n)
                        .map(|bb| &dtheta[a][q][bb] - &dtheta[bb][q][a])
                        .collect()
                })
                .collect();
            let t = jet_matmul(&jet_transpose(&winv), &f);
            g_q.push(jet_matmul(&t, &winv));
        }
        let mut c = Vec::with_capacity(n * m);
        for i in 0..n {
            for &(k, l) in &self.pairs {
                let mut acc = zero.clone();
                for q in 0..n {
                    if o_low[i][q].max_abs() != 0.0 {
                        acc = &acc + &(&o_low[i][q] * &g_q[q][k][l]);
                    }
                }
                c.push(acc);
            }
        }
        let mut s = vec![vec![zero.clone(); n]; m];
        for (pp, row) in s.iter_mut().enumerate() {
            for (k, out) in row.iter_mut().enumerate() {
                let r = pp * n + k;
                let mut acc = zero.clone();
                for (e, ce) in c.iter().enumerate() {
                    let coef = self.solver[(r, e)];
                    if coef != 0.0 {
                        acc.axpy(coef, ce);
                    }
                }
                *out = acc;
            }
        }
        Ok(FrameData {
            w,
            winv,
            b,
            binv,
            s,
        })
    }

    /// Coframe rows `ω^1..ω^n, π_P, dκ` over the coordinate cobasis, as jets in all chart variables.
    pub fn coframe_jets(&self, point: &[f64], order: usize) -> Result<JetMatrix, CartanError> {
        let (n, m) = (self.n(), self.m());
        let dim = self.chart.dim();
        let d = self.data(point, order)?;
        let vars: Vec<usize> = (0..n + m).collect();
        let zero = JetScalar::constant(dim, order, 0.0)?;
        let mut rows = vec![vec![zero.clone(); dim]; dim];
        let sw = jet_matmul(&d.s, &d.w);
        for i in 0..n {
            for a in 0..n {
                rows[i][a] = d.w[i][a].embed(dim, &vars)?;
            }
        }
        for p in 0..m {
            for a in 0..n {
                rows[n + p][a] = sw[p][a].embed(dim, &vars)?;
            }
            for q in 0..m {
                rows[n + p][n + q] = d.b[p][q].embed(dim, &vars)?;
            }
        }
        for (f, row) in rows.iter_mut().enumerate().skip(n + m) {
            row[f] = zero.constant_like(1.0);
        }
        Ok(rows)
    }

    pub fn coframe_at(&self, point: &[f64]) -> Result<DMatrix<f64>, CartanError> {
        let rows = self.coframe_jets(point, 0)?;
        let dim = rows.len();
        Ok(DMatrix::from_fn(dim, dim, |i, j| rows[i][j].value()))
    }

    /// Rotation parameters whose frame `∂ω^1 … ∂ω^n` has base components `frame` (columns).
    pub fn rotation_for_frame(
        &self,
        base: &[f64],
        frame: &DMatrix<f64>,
    ) -> Result<Vec<f64>, CartanError> {
        let xs = JetScalar::seed_all(base, 0)?;
        let th = orthonormal_coframe(&self.metric, &xs)?;
        let n = self.n();
        let theta = DMatrix::from_fn(n, n, |i, j| th[i][j].value());
        self.rotation().solve(&(theta * frame).transpose())
    }

    /// Components of a tangent vector in the frame `(∂ω, ∂π, ∂κ)`.
    pub fn frame_components(&self, point: &[f64], v: &[f64]) -> Result<Vec<f64>, CartanError> {
        let m = self.coframe_at(point)?;
        if v.len() != m.ncols() {
            return Err(CartanError::Invalid("vector dimension mismatch".into()));
        }
        Ok((m * nalgebra::DVector::from_column_slice(v))
            .iter()
            .cloned()
            .collect())
    }

    pub fn connection_forms(&self, point: &[f64]) -> Result<ConnectionForms, CartanError> {
        let (n, m) = (self.n(), self.m());
        let dim = self.chart.dim();
        let d = self.data(point, 0)?;
        let cf = self.coframe_at(point)?;
        let row = |i: usize| -> Vec<f64> { (0..dim).map(|j| cf[(i, j)]).collect() };
        let maurer_cartan = (0..m)
            .map(|p| {
                let mut v = vec![0.0; dim];
                for q in 0..m {
                    v[n + q] = d.b[p][q].value();
                }
                v
            })
            .collect();
        Ok(ConnectionForms {
            pairs: self.pairs.clone(),
            omega: (0..n).map(row).collect(),
            pi: (n..n + m).map(row).collect(),
            maurer_cartan,
            semibasic: d
                .s
                .iter()
                .map(|r| r.iter().map(|e| e.value()).collect())
                .collect(),
        })
    }

    pub fn labels(&self) -> Vec<String> {
        let mut v: Vec<String> = (1..=self.n()).map(|i| format!("d_omega{i}")).collect();
        v.extend(
            self.pairs
                .iter()
                .map(|(i, j)| format!("d_pi{}{}", i + 1, j + 1)),
        );
        v
    }

    /// The dual fields `∂ω^1..∂ω^n, ∂π_P` as jets in all chart variables.
    pub fn dual_frame(&self, point: &[f64], order: usize) -> Result<Vec<FieldJet>, CartanError> {
        let (n, m) = (self.n(), self.m());
        let dim = self.chart.dim();
        let d = self.data(point, order)?;
        let vars: Vec<usize> = (0..n + m).collect();
        let zero = JetScalar::constant(dim, order, 0.0)?;
        let bs = jet_matmul(&d.binv, &d.s);
        let mut out = Vec::with_capacity(n + m);
        for c in 0..n {
            let mut f = vec![zero.clone(); dim];
            for a in 0..n {
                f[a] = d.winv[a][c].embed(dim, &vars)?;
            }
            for p in 0..m {
                f[n + p] = (-&bs[p][c]).embed(dim, &vars)?;
            }
            out.push(f);
        }
        for q in 0..m {
            let mut f = vec![zero.clone(); dim];
            for p in 0..m {
                f[n + p] = d.binv[p][q].embed(dim, &vars)?;
            }
            out.push(f);
        }
        Ok(out)
    }

    /// Curvature from the second structure equation, with the first-equation and
    /// semi-basic residuals.
    fn structure_curvature(
        &self,
        point: &[f64],
    ) -> Result<(CurvatureSample, f64, f64), CartanError> {
        let (n, m) = (self.n(), self.m());
        let dim = self.chart.dim();
        let rows = self.coframe_jets(point, 1)?;
        let val: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().map(|e| e.value()).collect())
            .collect();
        let grad: Vec<Vec<Vec<f64>>> = rows
            .iter()
            .map(|r| {
                r.iter()
                    .map(|e| e.gradient())
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<_, _>>()?;
        // d(row)_{AB} = ∂_A row_B − ∂_B row_A
        let d2 = |r: usize, a: usize, b: usize| grad[r][b][a] - grad[r][a][b];
        let pi = |i: usize, j: usize, a: usize| -> f64 {
            if i == j {
                0.0
            } else if i < j {
                val[n + self.pair_index(i, j).expect("pair")][a]
            } else {
                -val[n + self.pair_index(j, i).expect("pair")][a]
            }
        };
        let mut first: f64 = 0.0;
        for i in 0..n {
            for a in 0..dim {
                for b in 0..dim {
                    let mut rhs = 0.0;
                    for j in 0..n {
                        rhs += pi(i, j, a) * val[j][b] - pi(i, j, b) * val[j][a];
                    }
                    first = first.max((d2(i, a, b) - rhs).abs());
                }
            }
        }
        let cf = DMatrix::from_fn(dim, dim, |i, j| val[i][j]);
        let frame = cf
            .try_inverse()
            .ok_or_else(|| CartanError::Invalid("coframe degenerate at this point".into()))?;
        let mut curv = CurvatureSample::zeros(point.to_vec(), n);
        let mut second: f64 = 0.0;
        for (p, &(i, l)) in self.pairs.iter().enumerate() {
            let omega = DMatrix::from_fn(dim, dim, |a, b| {
                let mut pp = 0.0;
                for j in 0..n {
                    pp += pi(i, j, a) * pi(j, l, b) - pi(i, j, b) * pi(j, l, a);
                }
                d2(n + p, a, b) - pp
            });
            let in_frame = frame.transpose() * omega * &frame;
            for x in 0..dim {
                for y in 0..dim {
                    if x < n && y < n {
                        curv.set(i, l, x, y, in_frame[(x, y)]);
                        curv.set(l, i, x, y, -in_frame[(x, y)]);
                    } else {
                        second = second.max(in_frame[(x, y)].abs());
                    }
                }
            }
        }
        let _ = m;
        Ok((curv, first, second))
    }

    /// Frame curvature `R^i_{jkl}` from the structure equations.
    pub fn curvature(&self, point: &[f64]) -> Result<CurvatureSample, CartanError> {
        Ok(self.structure_curvature(point)?.0)
    }

    /// Frame curvature from the Christoffel symbols of the metric, in this module's sign convention.
    pub fn christoffel_curvature(&self, point: &[f64]) -> Result<CurvatureSample, CartanError> {
        self.check_point(point)?;
        let n = self.n();
        let m = self.m();
        let xs = JetScalar::seed_all(&point[..n], 2)?;
        let gam = christoffel(&self.metric, &xs)?;
        let gv = |a: usize, b: usize, c: usize| gam[a][b][c].value();
        let mut dg = vec![vec![vec![vec![0.0; n]; n]; n]; n];
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let g = gam[a][b][c].gradient()?;
                    dg[a][b][c] = g;
                }
            }
        }
        // classical R^a_{bcd} = ∂_c Γ^a_{db} − ∂_d Γ^a_{cb} + Γ^a_{ce} Γ^e_{db} − Γ^a_{de} Γ^e_{cb}
        let mut classical = vec![0.0; n * n * n * n];
        let at = |a: usize, b: usize, c: usize, d: usize| ((a * n + b) * n + c) * n + d;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        let mut v = dg[a][d][b][c] - dg[a][c][b][d];
                        for e in 0..n {
                            v += gv(a, c, e) * gv(e, d, b) - gv(a, d, e) * gv(e, c, b);
                        }
                        classical[at(a, b, c, d)] = v;
                    }
                }
            }
        }
        let r = &point[n..n + m];
        let o = self.so.at(r)?;
        let th = orthonormal_coframe(&self.metric, &JetScalar::seed_all(&point[..n], 0)?)?;
        let theta = DMatrix::from_fn(n, n, |i, j| th[i][j].value());
        let w = o * theta;
        let winv = w
            .clone()
            .try_inverse()
            .ok_or_else(|| CartanError::Invalid("coframe degenerate".into()))?;
        let mut out = CurvatureSample::zeros(point.to_vec(), n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let mut v = 0.0;
                        for a in 0..n {
                            if w[(i, a)] == 0.0 {
                                continue;
                            }
                            for b in 0..n {
                                for c in 0..n {
                                    for d in 0..n {
                                        v += w[(i, a)]
                                            * classical[at(a, b, c, d)]
                                            * winv[(b, j)]
                                            * winv[(c, k)]
                                            * winv[(d, l)];
                                    }
                                }
                            }
                        }
                        out.set(i, j, k, l, -v);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Expected frame components of `[E_x, E_y]` for the dual frame, given the curvature.
    fn expected_bracket(&self, x: usize, y: usize, curv: &CurvatureSample) -> Vec<f64> {
        let (n, m) = (self.n(), self.m());
        let mut out = vec![0.0; n + m];
        let as_matrix = |p: usize| {
            let (a, b) = self.pairs[p];
            let mut q = DMatrix::<f64>::zeros(n, n);
            q[(a, b)] = 1.0;
            q[(b, a)] = -1.0;
            q
        };
        match (x < n, y < n) {
            (true, true) => {
                for (p, &(k, l)) in self.pairs.iter().enumerate() {
                    out[n + p] = -curv.get(k, l, x, y);
                }
            }
            (true, false) => {
                let q = as_matrix(y - n);
                for (k, o) in out.iter_mut().enumerate().take(n) {
                    *o = q[(k, x)];
                }
            }
            (false, true) => {
                let q = as_matrix(x - n);
                for (k, o) in out.iter_mut().enumerate().take(n) {
                    *o = -q[(k, y)];
                }
            }
            (false, false) => {
                let (a, b) = (as_matrix(x - n), as_matrix(y - n));
                let c = &a * &b - &b * &a;
                for (p, &(i, l)) in self.pairs.iter().enumerate() {
                    out[n + p] = -c[(i, l)];
                }
            }
        }
        out
    }

    /// Brackets of every pair of dual-frame fields, in frame components, against the
    /// relations implied by the structure equations.
    pub fn frame_bracket_residual(
        &self,
        point: &[f64],
        curv: &CurvatureSample,
    ) -> Result<f64, CartanError> {
        let (n, m) = (self.n(), self.m());
        let fields = self.dual_frame(point, 1)?;
        let cf = self.coframe_at(point)?;
        let mut worst: f64 = 0.0;
        for x in 0..n + m {
            for y in x + 1..n + m {
                let br = bracket_jets(&fields[x], &fields[y])?;
                let v = nalgebra::DVector::from_iterator(br.len(), br.iter().map(|e| e.value()));
                let comps = &cf * v;
                let want = self.expected_bracket(x, y, curv);
                for (k, c) in comps.iter().enumerate() {
                    let w = want.get(k).copied().unwrap_or(0.0);
                    worst = worst.max((c - w).abs());
                }
            }
        }
        Ok(worst)
    }

    /// The full structure-equation audit at `point`.
    pub fn structure_report(&self, point: &[f64]) -> Result<StructureReport, CartanError> {
        let (curv, first, second) = self.structure_curvature(point)?;
        let frame_brackets = self.frame_bracket_residual(point, &curv)?;
        let classical = self.christoffel_curvature(point)?;
        let n = self.n();
        let sectional = rotation_pairs(n)
            .into_iter()
            .map(|(i, j)| ((i, j), curv.sectional(i, j)))
            .collect();
        Ok(StructureReport {
            point: point.to_vec(),
            first_structure: first,
            second_structure: second,
            frame_brackets,
            antisymmetry: curv.antisymmetry_residual(),
            bianchi: curv.bianchi_residual(),
            pair_symmetry: curv.pair_symmetry_residual(),
            christoffel: curv.max_difference(&classical),
            sectional,
            curvature: curv,
        })
    }
}

/// Linear map from `C^i_{kl}` (index `i·m + pair(k,l)`) to `s[P][k]` (index `P·n + k`)
/// solving `s_{ilk} − s_{ikl} = C^i_{kl}` with `s` antisymmetric in its first two indices.
fn torsion_solver(n: usize, pairs: &[(usize, usize)]) -> DMatrix<f64> {
    let m = pairs.len();
    let unknown = |i: usize, j: usize, k: usize| -> Option<(usize, f64)> {
        if i == j {
            return None;
        }
        let (p, sign) = if i < j {
            (pairs.iter().position(|&q| q == (i, j)).expect("pair"), 1.0)
        } else {
            (pairs.iter().position(|&q| q == (j, i)).expect("pair"), -1.0)
        };
        Some((p * n + k, sign))
    };
    let mut a = DMatrix::<f64>::zeros(n * m, n * m);
    for i in 0..n {
        for (e, &(k, l)) in pairs.iter().enumerate() {
            let row = i * m + e;
            if let Some((c, s)) = unknown(i, l, k) {
                a[(row, c)] += s;
            }
            if let Some((c, s)) = unknown(i, k, l) {
                a[(row, c)] -= s;
            }
        }
    }
    a.try_inverse()
        .expect("the torsion-absorption system is uniquely solvable")
}

impl FieldProvider for CartanFrame {
    fn dim(&self) -> usize {
        self.chart.dim()
    }

    fn labels(&self) -> Vec<String> {
        CartanFrame::labels(self)
    }

    fn eval(&self, point: &[f64], order: usize) -> Result<Vec<FieldJet>, DistError> {
        Ok(self.dual_frame(point, order)?)
    }
}

/// The curve bundle over a Riemannian manifold, with its frame.
#[derive(Clone)]
pub struct RiemannianBundle {
    pub frame: Arc<CartanFrame>,
    pub distribution: Distribution,
}

impl RiemannianBundle {
    pub fn chart(&self) -> &FrameBundleChart {
        self.frame.chart()
    }

    pub fn n(&self) -> usize {
        self.frame.n()
    }

    pub fn metric(&self) -> &MetricSpec {
        self.frame.metric()
    }

    /// `∂ω^i` (1-based `i`).
    pub fn omega_field(&self, i: usize) -> VectorField {
        VectorField::Provided {
            provider: self.frame.clone(),
            index: i - 1,
        }
    }

    /// `∂π^i_j` for `i < j` (1-based).
    pub fn pi_field(&self, i: usize, j: usize) -> VectorField {
        let p = self
            .frame
            .pair_index(i - 1, j - 1)
            .expect("i < j within range");
        VectorField::Provided {
            provider: self.frame.clone(),
            index: self.n() + p,
        }
    }

    pub fn with_basepoint(&self, p: Vec<f64>) -> Result<Self, CartanError> {
        Ok(RiemannianBundle {
            frame: self.frame.clone(),
            distribution: self.distribution.with_basepoint(p)?,
        })
    }
}

fn default_bundle_point(metric: &MetricSpec, chart: &FrameBundleChart) -> Vec<f64> {
    let mut p = metric.basepoint.clone();
    if chart.n == 3 {
        p.extend([0.2, 0.3, 0.7]);
        p.extend([0.5, 0.4, -0.3]);
    } else {
        p.extend((0..chart.rotation.len()).map(|i| 0.15 + 0.1 * i as f64));
        p.extend(
            (0..chart.fiber.len())
                .map(|j| (0.45 + 0.05 * j as f64) * if (j / 2) % 2 == 0 { 1.0 } else { -1.0 }),
        );
    }
    p
}

/// The bundle `{D, ∂κ^1_{n−2}, …, ∂κ^{n−1}_0}` whose integral curves are Frenet lifts, with
/// `D = ∂ω^1 + Σ_l κ^l_0 ∂π^l_{l+1} + Σ κ^a_{b+1} ∂κ^a_b`.
pub fn build_riemannian_bundle(metric: &MetricSpec) -> Result<RiemannianBundle, CartanError> {
    let n = metric.dim();
    if n < 3 {
        return Err(CartanError::Unsupported(format!(
            "curve bundle needs n ≥ 3, got n = {n}"
        )));
    }
    let frame = Arc::new(CartanFrame::new(metric.clone())?);
    let chart = frame.chart().clone();
    let names = chart.names();
    let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    let var = |slot: usize| exprdsl::parse(refs[slot], &refs).expect("chart name");
    let provided = |index: usize| VectorField::Provided {
        provider: frame.clone() as Arc<dyn FieldProvider>,
        index,
    };
    let slot = |a: usize, b: usize| chart.fiber_slot(a, b).expect("fiber coordinate");

    let mut terms = vec![(Expr::Num(1.0), provided(0))];
    for l in 1..n {
        let p = frame.pair_index(l - 1, l).expect("pair");
        terms.push((var(slot(l, 0)), provided(n + p)));
    }
    for a in 1..n {
        for b in 0..n.saturating_sub(a + 1) {
            terms.push((var(slot(a, b + 1)), VectorField::Coordinate(slot(a, b))));
        }
    }
    let mut generators = vec![VectorField::Sum(terms)];
    let mut labels = vec!["D".to_string()];
    for a in 1..n {
        let s = slot(a, n - a - 1);
        generators.push(VectorField::Coordinate(s));
        labels.push(format!("d_{}", names[s]));
    }
    let base = default_bundle_point(metric, &chart);
    let distribution = Distribution::new(names, generators, labels, base)?;
    Ok(RiemannianBundle {
        frame,
        distribution,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::sample_points;

    fn h3_point() -> Vec<f64> {
        vec![0.3, -0.2, 1.1, 0.2, 0.3, 0.7, 0.5, 0.4, -0.3]
    }

    #[test]
    fn chart_layout_for_n3_and_n4() {
        let c = FrameBundleChart::new(vec!["x".into(), "y".into(), "z".into()], so_n(3).names);
        assert_eq!(
            c.names(),
            ["x", "y", "z", "a", "b", "c", "kappa", "tau", "kappa1"]
        );
        let c4 = FrameBundleChart::new((1..=4).map(|i| format!("x{i}")).collect(), so_n(4).names);
        assert_eq!(c4.dim(), 16);
        assert_eq!(c4.fiber_index[..3], [(1, 0), (2, 0), (3, 0)]);
        assert_eq!(c4.fiber_index[3..], [(1, 1), (2, 1), (1, 2)]);
    }

    #[test]
    fn so3_identity_and_orthogonality() {
        let so = so_n(3);
        let o = so.at(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(o, DMatrix::identity(3, 3));
        let o = so.at(&[0.3, -1.1, 2.0]).unwrap();
        assert!((o.transpose() * &o - DMatrix::identity(3, 3)).amax() < 1e-12);
        assert!((o.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn so2_quarter_turn() {
        let o = so_n(2).at(&[std::f64::consts::FRAC_PI_2]).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!((o - want).amax() < 1e-15);
    }

    #[test]
    fn givens_expressions_match_jets() {
        let so = so_n(4);
        let r = [0.3, -0.2, 0.9, 0.4, -0.7, 0.1];
        let o = so.at(&r).unwrap();
        assert!((o.transpose() * &o - DMatrix::identity(4, 4)).amax() < 1e-12);
        assert!((o.determinant() - 1.0).abs() < 1e-12);
        for i in 0..4 {
            for j in 0..4 {
                let e = so.matrix[i][j].eval_f64(&r).unwrap();
                assert!((e - o[(i, j)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn h3_coframe_is_diagonal() {
        let g = MetricSpec::h3();
        let xs = JetScalar::seed_all(&[0.4, 0.1, 2.0], 3).unwrap();
        let th = orthonormal_coframe(&g, &xs).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 0.5 } else { 0.0 };
                assert!((th[i][j].value() - want).abs() < 1e-15);
            }
        }
        let back = jet_matmul(&jet_transpose(&th), &th);
        let gm = g.eval_jets(&xs).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((&back[i][j] - &gm[i][j]).max_abs() < 1e-12);
            }
        }
    }

    #[test]
    fn indefinite_metric_is_rejected() {
        let doc = MetricDoc {
            coords: vec!["x".into(), "y".into()],
            g: vec![vec!["1".into(), "0".into()], vec!["0".into(), "-1".into()]],
            basepoint: None,
            name: None,
        };
        assert!(matches!(
            MetricSpec::from_doc(&doc),
            Err(CartanError::NotPositiveDefinite { .. })
        ));
        let asym = MetricDoc {
            g: vec![vec!["1".into(), "x".into()], vec!["0".into(), "1".into()]],
            ..doc
        };
        assert!(matches!(
            MetricSpec::from_doc(&asym),
            Err(CartanError::NotSymmetric { .. })
        ));
    }

    #[test]
    fn metric_json_round_trip() {
        let g = MetricSpec::constant_curvature(-1.0).unwrap();
        let text = serde_json::to_string(&g.to_doc()).unwrap();
        let back = MetricSpec::from_json(&text).unwrap();
        let p = [0.1, 0.3, -0.2];
        assert_eq!(g.at(&p).unwrap(), back.at(&p).unwrap());
        assert!(MetricSpec::builtin("nope", None, None).is_err());
    }

    #[test]
    fn dual_frame_pairs_with_coframe() {
        let f = CartanFrame::new(MetricSpec::h3()).unwrap();
        let p = h3_point();
        let cf = f.coframe_at(&p).unwrap();
        let fields = f.dual_frame(&p, 0).unwrap();
        for (b, fb) in fields.iter().enumerate() {
            for a in 0..9 {
                let pair: f64 = (0..9).map(|k| cf[(a, k)] * fb[k].value()).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((pair - want).abs() < 1e-12, "<{a},{b}> = {pair}");
            }
        }
    }

    #[test]
    fn euclidean_identity_frame() {
        let f = CartanFrame::new(MetricSpec::euclidean(3).unwrap()).unwrap();
        let p = [0.1, 0.2, 0.3, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let fields = f.dual_frame(&p, 0).unwrap();
        for (i, fi) in fields.iter().take(3).enumerate() {
            for (k, c) in fi.iter().enumerate() {
                let want = if k == i { 1.0 } else { 0.0 };
                assert!((c.value() - want).abs() < 1e-15);
            }
        }
        let cf = f.connection_forms(&p).unwrap();
        for row in &cf.semibasic {
            assert!(row.iter().all(|v| v.abs() < 1e-15));
        }
    }

    /// Printed H³ forms in coordinates `(x, y, z, a, b, c, …)`.
    fn printed_h3(p: &[f64]) -> [Vec<f64>; 3] {
        let (z, a, b, c) = (p[2], p[3], p[4], p[5]);
        let (sa, ca, sb, cb, sc, cc) = (a.sin(), a.cos(), b.sin(), b.cos(), c.sin(), c.cos());
        let o = so_n(3).at(&[a, b, c]).unwrap();
        let omega = |i: usize| -> Vec<f64> {
            let mut v = vec![0.0; 9];
            for k in 0..3 {
                v[k] = o[(i, k)] / z;
            }
            v
        };
        let mut w12 = vec![0.0; 9];
        w12[5] = -1.0;
        w12[4] = -sa;
        let mut w13 = vec![0.0; 9];
        w13[3] = sc;
        w13[4] = ca * cc;
        let mut w23 = vec![0.0; 9];
        w23[4] = sc * ca;
        w23[3] = -cc;
        let comb = |base: &[f64], terms: &[(f64, Vec<f64>)]| -> Vec<f64> {
            let mut v = base.to_vec();
            for (k, w) in terms {
                for (x, y) in v.iter_mut().zip(w) {
                    *x += k * y;
                }
            }
            v
        };
        let p12 = comb(
            &w12,
            &[
                (sc * sb - sa * cb * cc, omega(0)),
                (-(sa * cb * sc + sb * cc), omega(1)),
            ],
        );
        let p13 = comb(
            &w13,
            &[(ca * cb, omega(0)), (-(sa * cb * sc + sb * cc), omega(2))],
        );
        let p23 = comb(
            &w23,
            &[(ca * cb, omega(1)), (-(sb * sc - sa * cb * cc), omega(2))],
        );
        [p12, p13, p23]
    }

    #[test]
    fn h3_connection_matches_printed_forms() {
        let f = CartanFrame::new(MetricSpec::h3()).unwrap();
        for p in sample_points(&h3_point(), 4, 0.3, 3) {
            let cf = f.connection_forms(&p).unwrap();
            let printed = printed_h3(&p);
            for (mine, theirs) in cf.pi.iter().zip(&printed) {
                for (u, v) in mine.iter().zip(theirs) {
                    assert!((u - v).abs() < 1e-12, "{mine:?} vs {theirs:?}");
                }
            }
        }
    }

    #[test]
    fn h3_structure_equations() {
        let f = CartanFrame::new(MetricSpec::h3()).unwrap();
        for p in sample_points(&h3_point(), 4, 0.1, 5) {
            let r = f.structure_report(&p).unwrap();
            assert!(r.max_residual() < 1e-9, "{r:?}");
            for (_, k) in &r.sectional {
                assert!((k + 1.0).abs() < 1e-9);
            }
            // Ω^1_2 = ω¹∧ω²
            assert!((r.curvature.get(0, 1, 0, 1) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_curvature_sectional() {
        for lambda in [-1.0, 0.5, 2.0] {
            let g = MetricSpec::constant_curvature(lambda).unwrap();
            let b = build_riemannian_bundle(&g).unwrap();
            for p in sample_points(&b.distribution.basepoint, 4, 0.1, 9) {
                let r = b.frame.structure_report(&p).unwrap();
                assert!(r.max_residual() < 1e-9, "{r:?}");
                for (_, k) in &r.sectional {
                    assert!((k - lambda).abs() < 1e-8, "{k} vs {lambda}");
                }
            }
        }
    }

    #[test]
    fn nonconformal_metric_passes_structure_suite() {
        let doc = MetricDoc {
            coords: vec!["x".into(), "y".into(), "z".into()],
            g: vec![
                vec!["2+sin(y)".into(), "x*z/4".into(), "0".into()],
                vec!["x*z/4".into(), "1+x^2".into(), "y/5".into()],
                vec!["0".into(), "y/5".into(), "exp(z/3)".into()],
            ],
            basepoint: Some(vec![0.2, 0.4, -0.1]),
            name: None,
        };
        let f = CartanFrame::new(MetricSpec::from_doc(&doc).unwrap()).unwrap();
        let p = [0.2, 0.4, -0.1, 0.2, 0.3, 0.7, 0.5, 0.4, -0.3];
        let r = f.structure_report(&p).unwrap();
        assert!(r.max_residual() < 1e-9, "{r:?}");
        assert!(r.curvature.r.iter().any(|v| v.abs() > 1e-3));
    }

    #[test]
    fn n2_is_unsupported() {
        let g = MetricSpec::euclidean(2).unwrap();
        assert!(matches!(
            build_riemannian_bundle(&g),
            Err(CartanError::Unsupported(_))
        ));
    }

    #[test]
    fn h3_bundle_shape() {
        let b = build_riemannian_bundle(&MetricSpec::h3()).unwrap();
        assert_eq!(b.distribution.dim(), 9);
        assert_eq!(b.distribution.rank(), 3);
        assert_eq!(b.distribution.labels, ["D", "d_kappa1", "d_tau"]);
        let p = b.distribution.basepoint.clone();
        let drift = b.distribution.generators[0].value_at(&p).unwrap();
        let comps = b.frame.frame_components(&p, &drift).unwrap();
        // ∂ω¹ + κ∂π¹₂ + τ∂π²₃ + κ₁∂κ
        let want = [1.0, 0.0, 0.0, 0.5, 0.0, 0.4, -0.3, 0.0, 0.0];
        for (c, w) in comps.iter().zip(want) {
            assert!((c - w).abs() < 1e-12, "{comps:?}");
        }
    }

    #[test]
    fn h3_bundle_is_uniform_goursat() {
        use crate::distribution::{recognize, FlagConfig};
        let b = build_riemannian_bundle(&MetricSpec::h3()).unwrap();
        let c = recognize(&b.distribution, &FlagConfig::default()).unwrap();
        assert_eq!(c.derived_type, vec![[3, 0], [5, 2], [7, 4], [9, 9]]);
        assert_eq!(c.signature, vec![0, 0, 2]);
        assert!(c.uniform, "{:?}", c.hypothesis_checks);
    }

    #[test]
    fn so3_solve_inverts_parametrisation() {
        let so = so_n(3);
        for r in [[0.2, 0.3, 0.7], [-1.1, 2.5, -0.4], [0.0, -3.0, 3.0]] {
            let o = so.at(&r).unwrap();
            let back = so.solve(&o).unwrap();
            assert!((so.at(&back).unwrap() - &o).amax() < 1e-12);
        }
        let flip = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 1.0, -1.0]));
        assert!(so.solve(&flip).is_err());
    }

    #[test]
    fn so4_solve_by_gauss_newton() {
        let so = so_n(4);
        let r: Vec<f64> = (0..6).map(|i| 0.1 + 0.07 * i as f64).collect();
        let o = so.at(&r).unwrap();
        let back = so.solve(&o).unwrap();
        assert!((so.at(&back).unwrap() - o).amax() < 1e-12);
    }

    #[test]
    fn rotation_for_frame_reproduces_the_frame() {
        let f = CartanFrame::new(MetricSpec::h3()).unwrap();
        let p = h3_point();
        let r = f.rotation_for_frame(&p[..3], &{
            let z = p[2];
            // An orthonormal frame for g = I/z² is z times a rotation.
            f.rotation().at(&[0.4, -0.2, 1.3]).unwrap() * z
        });
        let r = r.unwrap();
        let mut q = p.clone();
        q[3..6].copy_from_slice(&r);
        let df = f.dual_frame(&q, 0).unwrap();
        let want = f.rotation().at(&[0.4, -0.2, 1.3]).unwrap() * p[2];
        for i in 0..3 {
            for a in 0..3 {
                assert!((df[i][a].value() - want[(a, i)]).abs() < 1e-12);
            }
        }
    }
}
