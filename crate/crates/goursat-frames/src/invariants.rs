//! Differential invariants of curves.
//!
//! Three independent routes are provided: inversion of the contact map of the
//! curve bundle (`invariants_via_phi`), a covariant Gram–Schmidt Frenet oracle,
//! and literal transcriptions of reference closed forms.

use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use twofloat::TwoFloat;

use crate::cartan::{
    build_riemannian_bundle, christoffel, CartanError, MetricSpec, RiemannianBundle,
};
use crate::contact::{build_contact_map, invert, ContactError, ContactMap, NewtonOptions};
use crate::distribution::{recognize, DistError, Distribution, FlagConfig, GoursatCertificate};
use crate::exprdsl::{self, EvalError, Expr, ParseError};
use crate::fixtures;
use crate::jets::{JetError, JetScalar};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InvariantError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Cartan(#[from] CartanError),
    #[error(transparent)]
    Contact(#[from] ContactError),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error("curve is not immersed at t = {t}")]
    NotImmersed { t: f64 },
    #[error("graph condition violated at t = {t}: d{coord}/dt = 0")]
    GraphCondition { coord: String, t: f64 },
    #[error("vanishing denominator in {0}")]
    Denominator(String),
    #[error("genericity violated: {0}")]
    Genericity(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}

/// Curve document: `{ "param": "t", "coords": [...], "domain": [a, b] }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveDoc {
    pub param: String,
    pub coords: Vec<String>,
    pub domain: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct CurveSpec {
    pub param: String,
    pub coords: Vec<Expr>,
    pub domain: [f64; 2],
    texts: Vec<String>,
}

impl CurveSpec {
    pub fn new<S: AsRef<str>>(
        param: &str,
        coords: &[S],
        domain: [f64; 2],
    ) -> Result<Self, InvariantError> {
        if !(domain[0] < domain[1]) {
            return Err(InvariantError::Invalid(format!(
                "empty domain [{}, {}]",
                domain[0], domain[1]
            )));
        }
        if coords.is_empty() {
            return Err(InvariantError::Invalid("curve has no coordinates".into()));
        }
        Ok(CurveSpec {
            param: param.to_string(),
            coords: exprdsl::parse_all(coords, &[param])?,
            domain,
            texts: coords.iter().map(|s| s.as_ref().to_string()).collect(),
        })
    }

    pub fn from_doc(doc: &CurveDoc) -> Result<Self, InvariantError> {
        CurveSpec::new(&doc.param, &doc.coords, doc.domain)
    }

    pub fn from_json(text: &str) -> Result<Self, InvariantError> {
        let doc: CurveDoc = serde_json::from_str(text)
            .map_err(|e| InvariantError::Invalid(format!("curve JSON: {e}")))?;
        CurveSpec::from_doc(&doc)
    }

    pub fn to_doc(&self) -> CurveDoc {
        CurveDoc {
            param: self.param.clone(),
            coords: self.texts.clone(),
            domain: self.domain,
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn at(&self, t: f64) -> Result<Vec<f64>, InvariantError> {
        Ok(self
            .coords
            .iter()
            .map(|e| e.eval_f64(&[t]))
            .collect::<Result<_, _>>()?)
    }

    /// Coordinate jets in the parameter, univariate of the given order.
    pub fn jets(&self, t: f64, order: usize) -> Result<Vec<JetScalar>, InvariantError> {
        let tj = JetScalar::seed(&[t], 0, order)?;
        Ok(self
            .coords
            .iter()
            .map(|e| e.eval_jet(std::slice::from_ref(&tj)))
            .collect::<Result<_, _>>()?)
    }

    /// `count` parameters evenly spaced strictly inside the domain.
    pub fn sample_params(&self, count: usize) -> Vec<f64> {
        let [a, b] = self.domain;
        (0..count)
            .map(|i| a + (b - a) * (i as f64 + 1.0) / (count as f64 + 1.0))
            .collect()
    }
}

/// Derivatives `d^m c_i / dt^m` for `m ≤ order`, one row per coordinate.
pub fn curve_jet(c: &CurveSpec, t: f64, order: usize) -> Result<Vec<Vec<f64>>, InvariantError> {
    let jets = c.jets(t, order)?;
    jets.iter()
        .map(|j| {
            (0..=order)
                .map(|m| j.derivative(&[m]).map_err(Into::into))
                .collect()
        })
        .collect()
}

/// The curve as a graph over one of its coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphJet {
    pub independent: usize,
    pub x: f64,
    /// Indices of the remaining coordinates, in order.
    pub dependents: Vec<usize>,
    /// `derivs[j][m] = d^m c_{dependents[j]} / dx^m`.
    pub derivs: Vec<Vec<f64>>,
}

/// Reparametrize over coordinate `independent` and return derivatives up to `order`.
pub fn graph_jet(
    c: &CurveSpec,
    t: f64,
    independent: usize,
    order: usize,
) -> Result<GraphJet, InvariantError> {
    if independent >= c.dim() {
        return Err(InvariantError::Invalid(format!(
            "independent coordinate {independent} out of range"
        )));
    }
    let jets = c.jets(t, order + 1)?;
    let x = &jets[independent];
    let dx = x.partial(0)?;
    let speed: f64 = jets
        .iter()
        .map(|j| j.derivative(&[1]).map(|v| v * v))
        .sum::<Result<f64, _>>()?;
    if dx.value().abs() <= 1e-12 * speed.sqrt().max(1e-300) {
        return Err(InvariantError::GraphCondition {
            coord: format!("c{}", independent + 1),
            t,
        });
    }
    let inv = dx.recip()?;
    let mut dependents = Vec::new();
    let mut derivs = Vec::new();
    for (i, j) in jets.iter().enumerate() {
        if i == independent {
            continue;
        }
        dependents.push(i);
        let mut row = vec![j.value()];
        let mut h = j.clone();
        for _ in 0..order {
            let d = h.partial(0)?;
            h = &d * &inv.truncate(d.order())?;
            row.push(h.value());
        }
        derivs.push(row);
    }
    Ok(GraphJet {
        independent,
        x: x.value(),
        dependents,
        derivs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Phi,
    Oracle,
    ClosedForm,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Phi => "phi",
            Method::Oracle => "oracle",
            Method::ClosedForm => "closed-form",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantSample {
    pub t: f64,
    pub kappa: Vec<f64>,
    pub method: Method,
    pub iterations: Option<usize>,
    pub residual: Option<f64>,
    pub degenerate: bool,
    pub flags: Vec<String>,
}

impl InvariantSample {
    fn new(t: f64, kappa: Vec<f64>, method: Method) -> Self {
        InvariantSample {
            t,
            kappa,
            method,
            iterations: None,
            residual: None,
            degenerate: false,
            flags: Vec::new(),
        }
    }
}

const GRAM_TOL: f64 = 1e-10;

/// Curve point, metric matrix there and the covariant derivatives `V_1..V_n`.
type CovariantData = (Vec<f64>, DMatrix<f64>, Vec<Vec<f64>>);

/// Covariant derivatives `V_1 = γ'`, `V_{i+1} = ∇_t V_i` at `t`, with the metric there.
fn covariant_derivatives(
    g: &MetricSpec,
    c: &CurveSpec,
    t: f64,
) -> Result<CovariantData, InvariantError> {
    let n = g.dim();
    if c.dim() != n {
        return Err(InvariantError::Invalid(format!(
            "curve has {} coordinates, metric has {n}",
            c.dim()
        )));
    }
    let gamma = c.jets(t, n)?;
    let p: Vec<f64> = gamma.iter().map(|j| j.value()).collect();
    let seeds = JetScalar::seed_all(&p, n)?;
    let gam = christoffel(g, &seeds)?;
    let along: Vec<JetScalar> = gamma
        .iter()
        .map(|j| j.truncate(n - 1))
        .collect::<Result<_, _>>()?;
    let mut gt = vec![vec![vec![along[0].zero_like(); n]; n]; n];
    for a in 0..n {
        for b in 0..n {
            for cc in 0..n {
                gt[a][b][cc] = gam[a][b][cc].compose(&along)?;
            }
        }
    }
    let vel: Vec<JetScalar> = gamma
        .iter()
        .map(|j| j.partial(0))
        .collect::<Result<_, _>>()?;
    let mut out = Vec::with_capacity(n);
    let mut v = vel.clone();
    out.push(v.iter().map(|j| j.value()).collect());
    for _ in 1..n {
        let o = v[0].order() - 1;
        let mut next = Vec::with_capacity(n);
        for a in 0..n {
            let mut acc = v[a].partial(0)?;
            for b in 0..n {
                for cc in 0..n {
                    let term = &(&gt[a][b][cc].truncate(o)? * &vel[b].truncate(o)?)
                        * &v[cc].truncate(o)?;
                    acc = &acc + &term;
                }
            }
            next.push(acc);
        }
        v = next;
        out.push(v.iter().map(|j| j.value()).collect());
    }
    let gm = g.at(&p)?;
    Ok((p, gm, out))
}

fn dot(gm: &DMatrix<f64>, a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        for j in 0..b.len() {
            s += a[i] * gm[(i, j)] * b[j];
        }
    }
    s
}

struct Frenet {
    frame: Vec<Vec<f64>>,
    kappa: Vec<f64>,
    /// First index whose Gram–Schmidt remainder vanished.
    degenerate_at: Option<usize>,
}

/// Gram–Schmidt of the covariant derivatives; degenerate directions are completed from the
/// coordinate basis so that the frame stays orthonormal and positively oriented.
fn frenet(gm: &DMatrix<f64>, vs: &[Vec<f64>]) -> Result<Frenet, InvariantError> {
    let n = vs.len();
    let mut frame: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut rho = Vec::with_capacity(n);
    let mut degenerate_at = None;
    let remainder = |v: &[f64], frame: &[Vec<f64>]| {
        let mut r = v.to_vec();
        for e in frame {
            let c = dot(gm, v, e);
            for (x, y) in r.iter_mut().zip(e) {
                *x -= c * y;
            }
        }
        r
    };
    for (i, v) in vs.iter().enumerate() {
        let scale = dot(gm, v, v);
        let r = remainder(v, &frame);
        let nr = dot(gm, &r, &r);
        if i == 0 && !(nr > 0.0) {
            return Err(InvariantError::NotImmersed { t: f64::NAN });
        }
        if degenerate_at.is_none() && nr > GRAM_TOL * scale.max(f64::MIN_POSITIVE) {
            rho.push(nr.sqrt());
            frame.push(r.iter().map(|x| x / nr.sqrt()).collect());
            continue;
        }
        degenerate_at.get_or_insert(i);
        rho.push(0.0);
        let mut best: Option<(f64, Vec<f64>)> = None;
        for k in 0..n {
            let mut ek = vec![0.0; n];
            ek[k] = 1.0;
            let r = remainder(&ek, &frame);
            let nr = dot(gm, &r, &r);
            if best.as_ref().map_or(true, |(b, _)| nr > *b) {
                best = Some((nr, r));
            }
        }
        let (nr, r) = best.expect("n ≥ 1");
        frame.push(r.iter().map(|x| x / nr.sqrt()).collect());
    }
    let det = DMatrix::from_fn(n, n, |i, j| frame[j][i]).determinant();
    if det < 0.0 {
        for x in frame[n - 1].iter_mut() {
            *x = -*x;
        }
    }
    let mut kappa = vec![0.0; n - 1];
    for i in 0..n - 1 {
        if degenerate_at.is_some_and(|d| d <= i + 1) {
            break;
        }
        kappa[i] = if i + 1 == n - 1 {
            dot(gm, &vs[n - 1], &frame[n - 1]) / (rho[n - 2] * rho[0])
        } else {
            rho[i + 1] / (rho[i] * rho[0])
        };
    }
    Ok(Frenet {
        frame,
        kappa,
        degenerate_at,
    })
}

/// Covariant Gram–Schmidt Frenet curvatures `κ^1 … κ^{n−1}` at `t`.
pub fn frenet_oracle(
    g: &MetricSpec,
    c: &CurveSpec,
    t: f64,
) -> Result<InvariantSample, InvariantError> {
    let (_, gm, vs) = covariant_derivatives(g, c, t)?;
    let f = frenet(&gm, &vs).map_err(|e| match e {
        InvariantError::NotImmersed { .. } => InvariantError::NotImmersed { t },
        other => other,
    })?;
    let mut s = InvariantSample::new(t, f.kappa, Method::Oracle);
    if let Some(d) = f.degenerate_at {
        s.degenerate = true;
        s.flags
            .push(format!("degenerate jet: derivative {} dependent", d + 1));
    }
    Ok(s)
}

/// Curve data `(y; u, u', u'', u'''; v, …)` as a graph `(u(y), y, v(y))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UvJet {
    pub y: f64,
    pub u: [f64; 4],
    pub v: [f64; 4],
}

impl UvJet {
    pub fn from_curve(c: &CurveSpec, t: f64) -> Result<Self, InvariantError> {
        if c.dim() != 3 {
            return Err(InvariantError::Unsupported(
                "closed forms need n = 3".into(),
            ));
        }
        let gj = graph_jet(c, t, 1, 3)?;
        let row = |j: usize| {
            [
                gj.derivs[j][0],
                gj.derivs[j][1],
                gj.derivs[j][2],
                gj.derivs[j][3],
            ]
        };
        Ok(UvJet {
            y: gj.x,
            u: row(0),
            v: row(1),
        })
    }
}

/// Sum of monomials `c · Π factors` accumulated in double-double precision.
///
/// The H³ radicand and torsion denominator vanish to second order on geodesics, so plain
/// `f64` evaluation leaves cancellation noise whose square root is about `1e-8`.
fn dd_poly(terms: &[(f64, &[f64])]) -> f64 {
    let mut acc = TwoFloat::from(0.0);
    for (c, fs) in terms {
        let mut m = TwoFloat::from(*c);
        for f in fs.iter() {
            m *= *f;
        }
        acc += m;
    }
    acc.hi()
}

fn h3_radicand(j: &UvJet) -> f64 {
    let [_, u1, u2, _] = j.u;
    let [v, v1, v2, _] = j.v;
    dd_poly(&[
        (1.0, &[u1, u1, u1, u1, u1, u1]),
        (2.0, &[u1, u1, u1, u1, v1, v1]),
        (2.0, &[u1, u1, u1, u1, v, v2]),
        (3.0, &[u1, u1, u1, u1]),
        (-2.0, &[u1, u1, u1, v, u2, v1]),
        (1.0, &[v1, v1, v1, v1, u1, u1]),
        (2.0, &[v1, v1, u1, u1, v, v2]),
        (4.0, &[u1, u1, v, v2]),
        (1.0, &[u1, u1, v, v, v2, v2]),
        (4.0, &[v1, v1, u1, u1]),
        (3.0, &[u1, u1]),
        (-2.0, &[u1, v, v, u2, v1, v2]),
        (-2.0, &[u1, v, u2, v1, v1, v1]),
        (-2.0, &[u1, v1, u2, v]),
        (1.0, &[]),
        (1.0, &[v1, v1, v1, v1]),
        (1.0, &[v, v, u2, u2, v1, v1]),
        (2.0, &[v1, v1, v, v2]),
        (2.0, &[v, v2]),
        (1.0, &[v2, v2, v, v]),
        (1.0, &[v, v, u2, u2]),
        (2.0, &[v1, v1]),
    ])
}

fn h3_torsion(j: &UvJet) -> Option<f64> {
    let [_, u1, u2, u3] = j.u;
    let [v, v1, v2, v3] = j.v;
    let num = dd_poly(&[
        (3.0, &[u2, u2, u1, v, v]),
        (3.0, &[u2, v1, v2, v, v]),
        (1.0, &[v, u2, v3, v, v]),
        (-1.0, &[u3, u1, u1, v, v]),
        (-1.0, &[u3, v1, v1, v, v]),
        (-1.0, &[u3, v, v2, v, v]),
        (-1.0, &[u3, v, v]),
    ]);
    let den = dd_poly(&[
        (1.0, &[u2, u2, v, v, v1, v1]),
        (1.0, &[u2, u2, v, v]),
        (-2.0, &[u2, v, v, v1, u1, v2]),
        (-2.0, &[u2, v, v1, u1]),
        (-2.0, &[v1, v1, v1, u1, u2, v]),
        (-2.0, &[u1, u1, u1, v1, u2, v]),
        (1.0, &[u1, u1, v, v, v2, v2]),
        (1.0, &[v, v, v2, v2]),
        (4.0, &[u1, u1, v, v2]),
        (2.0, &[v1, v1, v, v2]),
        (2.0, &[v, v2]),
        (2.0, &[u1, u1, u1, u1, v, v2]),
        (2.0, &[v1, v1, u1, u1, v, v2]),
        (1.0, &[]),
        (2.0, &[v1, v1]),
        (1.0, &[v1, v1, v1, v1]),
        (4.0, &[u1, u1, v1, v1]),
        (3.0, &[u1, u1]),
        (2.0, &[u1, u1, u1, u1, v1, v1]),
        (1.0, &[v1, v1, v1, v1, u1, u1]),
        (3.0, &[u1, u1, u1, u1]),
        (1.0, &[u1, u1, u1, u1, u1, u1]),
    ]);
    (den.abs() > 1e-14 * num.abs().max(1.0)).then(|| num / den)
}

/// Curvature and torsion (absent when its denominator vanishes).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvatureTorsion {
    pub kappa: f64,
    pub tau: Option<f64>,
}

/// Curvature and torsion in the half-space model, transcribed as printed.
pub fn closed_form_h3(j: &UvJet) -> CurvatureTorsion {
    let [_, _, u2, _] = j.u;
    let v1 = j.v[1];
    CurvatureTorsion {
        kappa: -h3_radicand(j).max(0.0).sqrt() / (v1 * v1 + u2 * u2 + 1.0).powf(1.5),
        tau: h3_torsion(j),
    }
}

/// As [`closed_form_h3`] with the curvature denominator `(u'² + v'² + 1)^{3/2}`.
pub fn closed_form_h3_corrected(j: &UvJet) -> CurvatureTorsion {
    let (u1, v1) = (j.u[1], j.v[1]);
    CurvatureTorsion {
        kappa: -h3_radicand(j).max(0.0).sqrt() / (u1 * u1 + v1 * v1 + 1.0).powf(1.5),
        tau: h3_torsion(j),
    }
}

/// Printed curvature and torsion for the conformally flat metric of curvature `λ`.
pub fn closed_form_lambda(lambda: f64, j: &UvJet) -> Result<CurvatureTorsion, InvariantError> {
    if lambda == 0.0 {
        return Err(InvariantError::Unsupported(
            "λ=0 unsupported by closed form".into(),
        ));
    }
    if !lambda.is_finite() {
        return Err(InvariantError::Invalid("λ is not finite".into()));
    }
    let y = j.y;
    let [u, u1, _, u3] = j.u;
    let [v, v1, _, v3] = j.v;
    let cross = (y * u1 - u).powi(2) + (y * v1 - v).powi(2) + (v * u1 - u * v1).powi(2);
    let speed = 1.0 + u1 * u1 + v1 * v1;
    let kappa = lambda * cross.sqrt() / (2.0 * speed.sqrt());
    let tau = (cross > 1e-28).then(|| {
        -(4.0 + lambda * (y * y + v * v + u * u)).powi(2)
            * (u * v3 - v * u3 + y * (v1 * u3 - v3 * u1))
            / (8.0 * lambda * speed * cross)
    });
    Ok(CurvatureTorsion { kappa, tau })
}

/// Equi-affine curvature of `y = f(x)` in both printed forms, from `f, f', …, f''''`.
pub fn equiaffine_plane_kappa(f: &[f64; 5]) -> Result<(f64, f64), InvariantError> {
    let (f2, f3, f4) = (f[2], f[3], f[4]);
    if !(f2 > 0.0) {
        return Err(InvariantError::Genericity(format!(
            "f'' = {f2} must be positive"
        )));
    }
    let rational = (5.0 * f3 * f3 - 3.0 * f2 * f4) / (9.0 * f2.powf(8.0 / 3.0));
    let h = JetScalar::from_coeffs(1, 2, vec![f2, f3, f4 / 2.0])?;
    let second = h.powf(-2.0 / 3.0)?.derivative(&[2])?;
    Ok((rational, 0.5 * second))
}

/// Equi-affine arc-length density `f''^{1/3}`.
pub fn equiaffine_arclength_density(f: &[f64; 5]) -> Result<f64, InvariantError> {
    if !(f[2] > 0.0) {
        return Err(InvariantError::Genericity(format!(
            "f'' = {} must be positive",
            f[2]
        )));
    }
    Ok(f[2].cbrt())
}

/// Printed space-curve invariants `(κ₁, κ₂)` from `z_i = f^{(i)}`, `w_j = g^{(j)}`, `i, j ≤ 5`.
pub fn equiaffine_space_invariants(
    z: &[f64; 6],
    w: &[f64; 6],
) -> Result<(f64, f64), InvariantError> {
    let (z2, z3, z4, z5) = (z[2], z[3], z[4], z[5]);
    let (w2, w3, w4, w5) = (w[2], w[3], w[4], w[5]);
    let base = w3 * z2 - w2 * z3;
    let scale = (w3 * z2).abs().max((w2 * z3).abs());
    if base.abs() <= 1e-12 * scale || base == 0.0 {
        return Err(InvariantError::Genericity("w₃z₂ − w₂z₃ = 0".into()));
    }
    let n1 = 24.0 * z2 * z2 * w3 * w5 - 35.0 * z2 * z2 * w4 * w4 - 60.0 * z2 * w3 * w3 * z4
        + 60.0 * z2 * w3 * z3 * w4
        - 24.0 * z2 * w2 * w3 * z5
        + 70.0 * z2 * w4 * w2 * z4
        - 24.0 * z2 * w2 * z3 * w5
        + 60.0 * w2 * w3 * z3 * z4
        - 60.0 * w2 * z3 * z3 * w4
        - 35.0 * w2 * w2 * z4 * z4
        + 24.0 * z5 * w2 * w2 * z3;
    let n2 = -18.0 * z2.powi(3) * w3 * w4 * w5 + 25.0 * z2.powi(3) * w4.powi(3)
        - 36.0 * z2 * z2 * w3.powi(3) * z5
        + 90.0 * z2 * z2 * w3 * w3 * z4 * w4
        + 36.0 * z2 * z2 * w3 * w3 * z3 * w5
        - 90.0 * z2 * z2 * w3 * z3 * w4 * w4
        + 18.0 * z2 * z2 * w3 * w2 * z4 * w5
        + 18.0 * z2 * z2 * w3 * w2 * w4 * z5
        - 75.0 * z2 * z2 * w2 * w4 * w4 * z4
        + 18.0 * z2 * z2 * w2 * z3 * w4 * w5
        - 90.0 * z2 * w3 * w3 * w2 * z4 * z4
        + 72.0 * z2 * w3 * w3 * z5 * w2 * z3
        - 18.0 * z2 * w3 * w2 * w2 * z4 * z5
        - 72.0 * z2 * w3 * w2 * z3 * z3 * w5
        + 90.0 * z2 * w2 * z3 * z3 * w4 * w4
        + 75.0 * z2 * w2 * w2 * w4 * z4 * z4
        - 18.0 * z2 * w2 * w2 * z3 * w4 * z5
        - 18.0 * z2 * w2 * w2 * z3 * z4 * w5
        + 90.0 * w3 * w2 * w2 * z3 * z4 * z4
        - 36.0 * w3 * z5 * w2 * w2 * z3 * z3
        - 25.0 * w2.powi(3) * z4.powi(3)
        - 90.0 * w2 * w2 * z3 * z3 * w4 * z4
        + 18.0 * w2.powi(3) * z3 * z4 * z5
        + 36.0 * w2 * w2 * z3.powi(3) * w5;
    let k1 = n1 / base.cbrt().powi(7);
    if base < 0.0 {
        return Err(InvariantError::Genericity(format!(
            "(w₃z₂ − w₂z₃)^(7/2) with w₃z₂ − w₂z₃ = {base:.3e} < 0"
        )));
    }
    let k2 = n2 / base.powf(3.5);
    Ok((k1, k2))
}

/// Pipeline for curves in a Riemannian manifold: bundle, certificate and contact maps.
pub struct RiemannianPipeline {
    bundle: RiemannianBundle,
    cert: GoursatCertificate,
    maps: Mutex<Vec<Option<Arc<ContactMap>>>>,
    pub newton: NewtonOptions,
}

impl RiemannianPipeline {
    pub fn new(metric: &MetricSpec, cfg: &FlagConfig) -> Result<Self, InvariantError> {
        let bundle = build_riemannian_bundle(metric)?;
        let cert = recognize(&bundle.distribution, cfg)?;
        if !cert.uniform {
            return Err(ContactError::NotUniform(
                cert.hypothesis_checks
                    .iter()
                    .filter(|c| !c.passed)
                    .map(|c| c.detail.clone())
                    .collect::<Vec<_>>()
                    .join("; "),
            )
            .into());
        }
        let n = bundle.n();
        Ok(RiemannianPipeline {
            bundle,
            cert,
            maps: Mutex::new(vec![None; n]),
            newton: NewtonOptions::default(),
        })
    }

    pub fn bundle(&self) -> &RiemannianBundle {
        &self.bundle
    }

    pub fn certificate(&self) -> &GoursatCertificate {
        &self.cert
    }

    /// Contact map with the base coordinates as resolvent invariants.
    pub fn map(&self, independent: usize) -> Result<Arc<ContactMap>, InvariantError> {
        let n = self.bundle.n();
        if independent >= n {
            return Err(InvariantError::Invalid(
                "independent coordinate out of range".into(),
            ));
        }
        let mut maps = self.maps.lock().expect("map cache");
        if let Some(m) = &maps[independent] {
            return Ok(m.clone());
        }
        let d = &self.bundle.distribution;
        let inv: Vec<Expr> = (0..n)
            .map(|i| Expr::Var {
                name: d.coords[i].as_str().into(),
                slot: i,
            })
            .collect();
        let map = Arc::new(build_contact_map(d, &self.cert, &inv, independent)?);
        maps[independent] = Some(map.clone());
        Ok(map)
    }

    /// Frame-bundle point over `γ(t)` carrying the covariant Gram–Schmidt frame, fibers 0.
    pub fn cold_start(&self, c: &CurveSpec, t: f64) -> Result<Vec<f64>, InvariantError> {
        let g = self.bundle.metric();
        let (p, gm, vs) = covariant_derivatives(g, c, t)?;
        let f = frenet(&gm, &vs)?;
        let n = p.len();
        let e = DMatrix::from_fn(n, n, |i, j| f.frame[j][i]);
        let r = self.bundle.frame.rotation_for_frame(&p, &e)?;
        let mut out = p;
        out.extend(r);
        out.extend(std::iter::repeat(0.0).take(self.bundle.chart().fiber.len()));
        Ok(out)
    }

    /// Contact-coordinate target of the curve at `t` over coordinate `independent`.
    pub fn target(
        &self,
        c: &CurveSpec,
        t: f64,
        independent: usize,
    ) -> Result<Vec<f64>, InvariantError> {
        let k = self.cert.k;
        let gj = graph_jet(c, t, independent, k)?;
        let q = gj.dependents.len();
        let mut out = vec![gj.x];
        for m in 0..=k {
            for j in 0..q {
                out.push(gj.derivs[j][m]);
            }
        }
        Ok(out)
    }

    /// Invariants at `t` from the inverted contact map; returns the sample and the chart point.
    pub fn sample(
        &self,
        c: &CurveSpec,
        t: f64,
        guess: Option<&[f64]>,
    ) -> Result<(InvariantSample, Vec<f64>), InvariantError> {
        let n = self.bundle.n();
        if c.dim() != n {
            return Err(InvariantError::Invalid(format!(
                "curve has {} coordinates, metric has {n}",
                c.dim()
            )));
        }
        let d1 = curve_jet(c, t, 1)?;
        let independent = (0..n)
            .max_by(|&a, &b| d1[a][1].abs().total_cmp(&d1[b][1].abs()))
            .expect("n ≥ 3");
        if d1.iter().all(|r| r[1] == 0.0) {
            return Err(InvariantError::NotImmersed { t });
        }
        let map = self.map(independent)?;
        let target = self.target(c, t, independent)?;
        let cold;
        let guess = match guess {
            Some(g) => g,
            None => {
                cold = self.cold_start(c, t)?;
                &cold
            }
        };
        let mut flags = vec![format!(
            "independent {}",
            self.bundle.distribution.coords[independent]
        )];
        let opts = NewtonOptions {
            least_squares: true,
            ..self.newton
        };
        let inv = invert(&map, &target, guess, &opts)?;
        let condition = singular_condition(&map, &inv.point);
        if !(condition < 1e12) {
            flags.push(format!(
                "rank-deficient Jacobian at the solution (condition {condition:.1e})"
            ));
        }
        if inv.homotopy {
            flags.push("homotopy".into());
        }
        let p = inv.point.clone();
        let raw: Vec<f64> = (1..n)
            .map(|a| p[self.bundle.chart().fiber_slot(a, 0).expect("fiber")])
            .collect();
        let e1 = self
            .frame_at(&p)?
            .column(0)
            .iter()
            .cloned()
            .collect::<Vec<_>>();
        let gm = self.bundle.metric().at(&p[..n])?;
        let vel: Vec<f64> = d1.iter().map(|r| r[1]).collect();
        let along = dot(&gm, &e1, &vel);
        let (kappa, degenerate) = normalize_signs(&raw, along);
        let mut s = InvariantSample::new(t, kappa, Method::Phi);
        s.iterations = Some(inv.iterations);
        s.residual = Some(inv.residual);
        s.degenerate = degenerate;
        if degenerate {
            flags.push("degenerate jet: vanishing curvature".into());
        }
        s.flags = flags;
        Ok((s, p))
    }

    /// Samples along the curve with each inversion warm-started from the previous point.
    pub fn along(&self, c: &CurveSpec, ts: &[f64]) -> Vec<Result<InvariantSample, InvariantError>> {
        let mut prev: Option<Vec<f64>> = None;
        let mut out = Vec::with_capacity(ts.len());
        for &t in ts {
            let mut r = self.sample(c, t, prev.as_deref());
            if r.is_err() && prev.is_some() {
                r = self.sample(c, t, None);
            }
            match r {
                Ok((s, p)) => {
                    prev = Some(p);
                    out.push(Ok(s));
                }
                Err(e) => {
                    prev = None;
                    out.push(Err(e));
                }
            }
        }
        out
    }

    /// Base components of `∂ω^1 … ∂ω^n` (columns) at a chart point.
    fn frame_at(&self, p: &[f64]) -> Result<DMatrix<f64>, InvariantError> {
        let n = self.bundle.n();
        let cf = self.bundle.frame.coframe_at(p)?;
        let w = cf.view((0, 0), (n, n)).clone_owned();
        w.try_inverse()
            .ok_or_else(|| InvariantError::Invalid("singular coframe".into()))
    }
}

fn singular_condition(map: &ContactMap, p: &[f64]) -> f64 {
    map.eval_with_jacobian(p)
        .map(|cv| {
            let sv = cv.jacobian.singular_values();
            if sv.min() > 0.0 {
                sv.max() / sv.min()
            } else {
                f64::INFINITY
            }
        })
        .unwrap_or(f64::NAN)
}

const ZERO_CURVATURE: f64 = 1e-9;

/// Map fiber values `κ^a_0` to Gram–Schmidt conventions.
///
/// The recovered frame differs from the Frenet frame by signs `ε_i` with `Π ε_i = 1`, and each
/// fiber value is `ε_1 ε_a ε_{a+1} κ^a` (the extra `ε_1` because derivatives are taken along
/// `e_1`). `along` is the sign of `e_1` against the velocity.
fn normalize_signs(raw: &[f64], along: f64) -> (Vec<f64>, bool) {
    let n = raw.len() + 1;
    let mut eps = vec![1.0; n];
    eps[0] = if along < 0.0 { -1.0 } else { 1.0 };
    let mut out = vec![0.0; n - 1];
    for a in 0..n - 1 {
        if raw[a].abs() <= ZERO_CURVATURE {
            return (out, true);
        }
        if a + 1 < n - 1 {
            eps[a + 1] = eps[0] * eps[a] * raw[a].signum();
            out[a] = raw[a].abs();
        } else {
            let last: f64 = eps[..n - 1].iter().product();
            out[a] = eps[0] * eps[a] * last * raw[a];
        }
    }
    (out, false)
}

/// Invariants at each of `ts` through the contact map, with a fresh pipeline.
pub fn invariants_via_phi(
    g: &MetricSpec,
    c: &CurveSpec,
    ts: &[f64],
) -> Result<Vec<Result<InvariantSample, InvariantError>>, InvariantError> {
    let p = RiemannianPipeline::new(g, &FlagConfig::default())?;
    Ok(p.along(c, ts))
}

/// Closed-form sample for a built-in three-dimensional metric.
pub fn closed_form_sample(
    metric: &ClosedFormMetric,
    c: &CurveSpec,
    t: f64,
) -> Result<InvariantSample, InvariantError> {
    let j = UvJet::from_curve(c, t)?;
    let ct = match metric {
        ClosedFormMetric::H3 => closed_form_h3(&j),
        ClosedFormMetric::H3Corrected => closed_form_h3_corrected(&j),
        ClosedFormMetric::Lambda(l) => closed_form_lambda(*l, &j)?,
    };
    let mut s = InvariantSample::new(t, vec![ct.kappa, ct.tau.unwrap_or(0.0)], Method::ClosedForm);
    if ct.tau.is_none() {
        s.degenerate = true;
        s.flags.push("torsion denominator vanishes".into());
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClosedFormMetric {
    H3,
    H3Corrected,
    Lambda(f64),
}

/// Printed closed forms are stated in their own sign conventions; this maps them to the
/// Gram–Schmidt one (`κ ≥ 0`, torsion of the positively oriented frame).
pub fn closed_form_to_oracle(sample: &InvariantSample) -> Vec<f64> {
    match sample.kappa.as_slice() {
        [k, t] => vec![k.abs(), -t],
        other => other.to_vec(),
    }
}

/// The space-curve fixture together with its contact map over `x`.
pub struct EquiaffineSpacePipeline {
    pub distribution: Distribution,
    pub certificate: GoursatCertificate,
    pub map: ContactMap,
    pub newton: NewtonOptions,
}

/// Result of the fixture pipeline for one space-curve jet.
#[derive(Debug, Clone, Serialize)]
pub struct SpaceInvariants {
    pub kappa1: f64,
    pub kappa2: f64,
    pub point: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

impl EquiaffineSpacePipeline {
    pub fn new() -> Result<Self, InvariantError> {
        let d = fixtures::equiaffine_space();
        let cert = recognize(&d, &FlagConfig::default())?;
        let inv: Vec<Expr> = ["x", "y", "z"]
            .iter()
            .map(|s| d.parse_scalar(s))
            .collect::<Result<_, _>>()?;
        let map = build_contact_map(&d, &cert, &inv, 0)?;
        Ok(EquiaffineSpacePipeline {
            distribution: d,
            certificate: cert,
            map,
            newton: NewtonOptions::default(),
        })
    }

    /// `(κ₁, κ₂)` read from the chart point over the jet `(x; f, …, f⁽⁵⁾; g, …, g⁽⁵⁾)`.
    pub fn invariants(
        &self,
        x: f64,
        f: &[f64; 6],
        g: &[f64; 6],
        guess: Option<&[f64]>,
    ) -> Result<SpaceInvariants, InvariantError> {
        let base = g[3] * f[2] - g[2] * f[3];
        if !(base > 0.0) {
            return Err(InvariantError::Genericity(format!(
                "w₃z₂ − w₂z₃ = {base:.3e}: the contact chart only reaches jets where it is positive"
            )));
        }
        let mut target = vec![x];
        for m in 0..6 {
            target.push(f[m]);
            target.push(g[m]);
        }
        let cold;
        let guess = match guess {
            Some(g) => g,
            None => {
                cold = self.cold_start(x, f, g)?;
                &cold
            }
        };
        let r = invert(&self.map, &target, guess, &self.newton)?;
        Ok(SpaceInvariants {
            kappa1: r.point[11],
            kappa2: r.point[12],
            point: r.point,
            iterations: r.iterations,
            residual: r.residual,
        })
    }

    /// Group element whose first two columns follow the curve's first two derivatives.
    ///
    /// `v1 = a1∂x + a4∂y + a7∂z` must be tangent, so `(a1, a4, a7) ∝ (1, f', g')`; the second
    /// column is taken along the curve's acceleration and the fibers start at 0.
    pub fn cold_start(
        &self,
        x: f64,
        f: &[f64; 6],
        g: &[f64; 6],
    ) -> Result<Vec<f64>, InvariantError> {
        let t = nalgebra::Vector3::new(1.0, f[1], g[1]);
        let acc = nalgebra::Vector3::new(0.0, f[2], g[2]);
        let normal = t.cross(&acc);
        let vol = t.dot(&acc.cross(&normal));
        if !(vol.abs() > 1e-14) {
            return Err(InvariantError::Genericity("curve jet is degenerate".into()));
        }
        let s = vol.abs().cbrt();
        let sign = vol.signum();
        let (c1, c2, c3) = (t / s, acc / s, normal * sign / s);
        Ok(vec![
            x, f[0], g[0], c1[0], c2[0], c3[0], c1[1], c2[1], c3[1], c1[2], c2[2], 0.0, 0.0,
        ])
    }
}
