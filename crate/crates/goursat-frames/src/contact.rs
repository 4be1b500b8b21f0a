//! Contact coordinates for uniform Goursat bundles and their numerical inversion.
//!
//! Given first integrals `x, z^j_0` of the resolvent bundle, the total derivative
//! is `Z = D / D(x)` for the drift generator `D`, and `z^j_m = Z^m z^j_0`. The map
//! `φ = (x, z^j_0, …, z^j_k)` is evaluated as jets, so its Jacobian is exact.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::distribution::{
    apply_field, bracket_jets, values, DistError, Distribution, EvalContext, FieldJet,
    GoursatCertificate,
};
use crate::exprdsl::Expr;
use crate::jets::{JetError, JetScalar};
use crate::rank::{numerical_rank, span_residual, RankPolicy};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContactError {
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error("certificate is not uniform: {0}")]
    NotUniform(String),
    #[error("independent-choice critical here: drift applied to it is {value:.3e}")]
    IndependentCritical { value: f64 },
    #[error("not resolvent invariants: annihilation residual {residual:.3e}")]
    NotResolventInvariants { residual: f64 },
    #[error("supplied integrals rejected: {reason} (residual {residual:.3e})")]
    Rejected { reason: String, residual: f64 },
    #[error("procedure needs q = 1, certificate has q = {0}")]
    WrongQ(usize),
    #[error("no convergence after {iterations} iterations (residual {residual:.3e}){}", cause.as_ref().map(|c| format!(": {c}")).unwrap_or_default())]
    NoConvergence {
        iterations: usize,
        residual: f64,
        cause: Option<String>,
    },
    #[error("singular Jacobian (condition estimate {condition:.3e})")]
    SingularJacobian { condition: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
}

impl From<JetError> for ContactError {
    fn from(e: JetError) -> Self {
        ContactError::Dist(e.into())
    }
}

/// The map `φ` into the canonical contact chart `(x, z^1_0 … z^q_0, z^1_1 …, z^q_k)`.
#[derive(Debug, Clone)]
pub struct ContactMap {
    dist: Distribution,
    pub k: usize,
    pub q: usize,
    pub x: Expr,
    pub z0: Vec<Expr>,
    /// Output `i` of the map is internal component `perm[i]`.
    perm: Vec<usize>,
}

/// Values and Jacobian of `φ` at a point.
#[derive(Debug, Clone)]
pub struct ContactValue {
    pub value: Vec<f64>,
    pub jacobian: DMatrix<f64>,
}

impl ContactMap {
    fn new(dist: &Distribution, k: usize, x: Expr, z0: Vec<Expr>) -> Self {
        let q = z0.len();
        ContactMap {
            dist: dist.clone(),
            k,
            q,
            x,
            z0,
            perm: (0..1 + q * (k + 1)).collect(),
        }
    }

    pub fn distribution(&self) -> &Distribution {
        &self.dist
    }

    pub fn out_dim(&self) -> usize {
        1 + self.q * (self.k + 1)
    }

    /// Output index of `z^j_m` (`j` 1-based).
    pub fn index_of(&self, j: usize, m: usize) -> usize {
        1 + m * self.q + (j - 1)
    }

    /// Names of the contact coordinates in output order.
    pub fn output_names(&self) -> Vec<String> {
        let mut v = vec!["x".to_string()];
        for m in 0..=self.k {
            for j in 1..=self.q {
                v.push(format!("z{j}_{m}"));
            }
        }
        self.perm.iter().map(|&i| v[i].clone()).collect()
    }

    /// Same map with outputs `a` and `b` exchanged. Used as a negative control.
    pub fn with_swapped_outputs(&self, a: usize, b: usize) -> Self {
        let mut m = self.clone();
        m.perm.swap(a, b);
        m
    }

    /// `Z = D / D(x)` as a field jet at `order`.
    pub fn total_derivative(&self, point: &[f64], order: usize) -> Result<FieldJet, ContactError> {
        let mut ctx = EvalContext::new(point);
        let (z, _) = self.total_derivative_in(&mut ctx, order)?;
        Ok(z)
    }

    fn total_derivative_in(
        &self,
        ctx: &mut EvalContext<'_>,
        order: usize,
    ) -> Result<(FieldJet, JetScalar), ContactError> {
        let drift = self.dist.generators[0].eval(ctx, order + 1)?;
        let x = ctx.scalar(&self.x, order + 1)?;
        let mu = apply_field(&drift, &x)?;
        let scale = values(&drift).iter().fold(0.0f64, |m, v| m.max(v.abs()))
            * x.gradient()?.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(mu.value().abs() > 1e-12 * scale.max(1e-300)) {
            return Err(ContactError::IndependentCritical { value: mu.value() });
        }
        let inv = mu.recip()?;
        let z = drift
            .iter()
            .map(|c| Ok(&c.truncate(order)? * &inv))
            .collect::<Result<FieldJet, JetError>>()?;
        Ok((z, x))
    }

    /// All contact coordinates as jets of order `order` at `point`, in output order.
    pub fn eval_jets(&self, point: &[f64], order: usize) -> Result<Vec<JetScalar>, ContactError> {
        if point.len() != self.dist.dim() {
            return Err(ContactError::Invalid(format!(
                "point has {} entries, chart has {}",
                point.len(),
                self.dist.dim()
            )));
        }
        let top = order + self.k + 1;
        let mut ctx = EvalContext::new(point);
        let (z, x) = self.total_derivative_in(&mut ctx, top - 1)?;
        let mut out = Vec::with_capacity(self.out_dim());
        out.push(x.truncate(order)?);
        let mut current: Vec<JetScalar> = self
            .z0
            .iter()
            .map(|e| ctx.scalar(e, top - 1))
            .collect::<Result<_, _>>()?;
        for m in 0..=self.k {
            if m > 0 {
                current = current
                    .iter()
                    .map(|f| apply_field(&z, f))
                    .collect::<Result<_, _>>()?;
            }
            for f in &current {
                out.push(f.truncate(order)?);
            }
        }
        Ok(self.perm.iter().map(|&i| out[i].clone()).collect())
    }

    pub fn eval(&self, point: &[f64]) -> Result<Vec<f64>, ContactError> {
        Ok(self
            .eval_jets(point, 0)?
            .iter()
            .map(|j| j.value())
            .collect())
    }

    pub fn eval_with_jacobian(&self, point: &[f64]) -> Result<ContactValue, ContactError> {
        let jets = self.eval_jets(point, 1)?;
        let d = point.len();
        let mut jac = DMatrix::zeros(jets.len(), d);
        for (i, j) in jets.iter().enumerate() {
            for (c, g) in j.gradient()?.into_iter().enumerate() {
                jac[(i, c)] = g;
            }
        }
        Ok(ContactValue {
            value: jets.iter().map(|j| j.value()).collect(),
            jacobian: jac,
        })
    }
}

fn check_uniform(cert: &GoursatCertificate) -> Result<(), ContactError> {
    if !cert.uniform {
        let failed: Vec<String> = cert
            .hypothesis_checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{}: {}", c.name, c.detail))
            .collect();
        return Err(ContactError::NotUniform(failed.join("; ")));
    }
    Ok(())
}

fn gradients(exprs: &[Expr], point: &[f64]) -> Result<Vec<Vec<f64>>, ContactError> {
    let mut ctx = EvalContext::new(point);
    exprs
        .iter()
        .map(|e| Ok(ctx.scalar(e, 1)?.gradient()?))
        .collect()
}

/// `|df(v)| / (|df| |v|)`, worst case over the given covectors and vectors.
fn annihilation(grads: &[Vec<f64>], vecs: &[Vec<f64>]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut worst: f64 = 0.0;
    for g in grads {
        for v in vecs {
            let dot: f64 = g.iter().zip(v).map(|(a, b)| a * b).sum();
            let s = norm(g) * norm(v);
            if s > 0.0 {
                worst = worst.max(dot.abs() / s);
            }
        }
    }
    worst
}

const ANNIHILATION_TOL: f64 = 1e-9;

/// Contact map from `q + 1` first integrals of the resolvent bundle, with
/// `invariants[independent]` as the independent variable.
pub fn build_contact_map(
    dist: &Distribution,
    cert: &GoursatCertificate,
    invariants: &[Expr],
    independent: usize,
) -> Result<ContactMap, ContactError> {
    check_uniform(cert)?;
    if invariants.len() != cert.q + 1 {
        return Err(ContactError::Invalid(format!(
            "need {} resolvent invariants, got {}",
            cert.q + 1,
            invariants.len()
        )));
    }
    if independent >= invariants.len() {
        return Err(ContactError::Invalid(
            "independent choice out of range".into(),
        ));
    }
    if cert.resolvents.is_empty() {
        return Err(ContactError::Invalid(
            "certificate carries no resolvent samples".into(),
        ));
    }
    let mut worst: f64 = 0.0;
    for r in &cert.resolvents {
        let grads = gradients(invariants, &r.point)?;
        worst = worst.max(annihilation(&grads, &r.basis));
        let dec = numerical_rank(&grads, &RankPolicy::default(), "resolvent invariants")
            .map_err(DistError::from)?;
        if dec.rank < invariants.len() {
            return Err(ContactError::Rejected {
                reason: "resolvent invariants are functionally dependent".into(),
                residual: 0.0,
            });
        }
    }
    if worst > ANNIHILATION_TOL {
        return Err(ContactError::NotResolventInvariants { residual: worst });
    }
    let x = invariants[independent].clone();
    let z0: Vec<Expr> = invariants
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != independent)
        .map(|(_, e)| e.clone())
        .collect();
    let map = ContactMap::new(dist, cert.k, x, z0);
    map.total_derivative(&dist.basepoint, 0)?;
    Ok(map)
}

/// Contact map for `q = 1` from a first integral `x` of `ch V^(k−1)` and an invariant `z0` of `Π^k`.
pub fn goursat_q1(
    dist: &Distribution,
    cert: &GoursatCertificate,
    x: &Expr,
    z0: &Expr,
) -> Result<ContactMap, ContactError> {
    check_uniform(cert)?;
    if cert.q != 1 {
        return Err(ContactError::WrongQ(cert.q));
    }
    let k = cert.k;
    let policy = RankPolicy::default();
    let map = ContactMap::new(dist, k, x.clone(), vec![z0.clone()]);
    for f in &cert.flag.points {
        let p = &f.point;
        let grads = gradients(&[x.clone(), z0.clone()], p)?;
        let dec = numerical_rank(&grads, &policy, "dx ∧ dz0").map_err(DistError::from)?;
        if dec.rank < 2 {
            return Err(ContactError::Rejected {
                reason: "dx ∧ dz0 = 0".into(),
                residual: 0.0,
            });
        }
        let ch = f.levels[k - 1].cauchy_values();
        let r = annihilation(&grads[..1], &ch);
        if r > ANNIHILATION_TOL {
            return Err(ContactError::Rejected {
                reason: format!("x is not an invariant of ch V^({})", k - 1),
                residual: r,
            });
        }
        let pi = pi_bundle(&map, f, &policy)?;
        let r = annihilation(&grads[1..], &pi);
        if r > ANNIHILATION_TOL {
            return Err(ContactError::Rejected {
                reason: format!("z0 is not an invariant of Π^{k}"),
                residual: r,
            });
        }
    }
    Ok(map)
}

/// Values of `Π^k` at the flag's point: `Π^1 = ch V^(1)`, `Π^{l+1} = Π^l + [Z, Π^l]`.
fn pi_bundle(
    map: &ContactMap,
    flag: &crate::distribution::FlagAtPoint,
    policy: &RankPolicy,
) -> Result<Vec<Vec<f64>>, ContactError> {
    let k = map.k;
    let mut pi = flag.cauchy_field_jets(1, policy)?;
    let order = pi.first().map_or(0, |f| f[0].order());
    if order + 1 < k {
        return Err(JetError::InsufficientOrder {
            needed: k - 1,
            available: order,
        }
        .into());
    }
    let z = map.total_derivative(&flag.point, order)?;
    for l in 1..k {
        let lower = order - l;
        let mut next: Vec<FieldJet> = Vec::new();
        let mut vals: Vec<Vec<f64>> = Vec::new();
        let mut candidates: Vec<FieldJet> = pi
            .iter()
            .map(|f| f.iter().map(|c| c.truncate(lower)).collect())
            .collect::<Result<_, _>>()?;
        for f in &pi {
            candidates.push(bracket_jets(&z, f)?);
        }
        for c in candidates {
            let v = values(&c);
            let mut trial = vals.clone();
            trial.push(v);
            let dec =
                numerical_rank(&trial, policy, &format!("Π^{}", l + 1)).map_err(DistError::from)?;
            if dec.rank == trial.len() {
                vals = trial;
                next.push(c);
            }
        }
        pi = next;
    }
    Ok(pi.iter().map(|f| values(f)).collect())
}

/// Membership of pushed-forward generators in the canonical contact distribution at one point.
#[derive(Debug, Clone, Serialize)]
pub struct PushforwardPoint {
    pub point: Vec<f64>,
    pub image: Vec<f64>,
    pub residuals: Vec<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PushforwardReport {
    pub tolerance: f64,
    pub max_residual: f64,
    pub pass: bool,
    pub points: Vec<PushforwardPoint>,
}

/// Canonical contact frame `{∂x + Σ z^j_{m+1} ∂z^j_m, ∂z^j_k}` at contact coordinates `z`.
pub fn canonical_frame(k: usize, q: usize, z: &[f64]) -> Vec<Vec<f64>> {
    let d = 1 + q * (k + 1);
    let mut drift = vec![0.0; d];
    drift[0] = 1.0;
    for m in 0..k {
        for j in 0..q {
            drift[1 + m * q + j] = z[1 + (m + 1) * q + j];
        }
    }
    let mut out = vec![drift];
    for j in 0..q {
        let mut v = vec![0.0; d];
        v[1 + k * q + j] = 1.0;
        out.push(v);
    }
    out
}

pub fn verify_pushforward(
    map: &ContactMap,
    dist: &Distribution,
    points: &[Vec<f64>],
) -> PushforwardReport {
    const TOL: f64 = 1e-8;
    let mut out = Vec::with_capacity(points.len());
    let mut worst: f64 = 0.0;
    for p in points {
        let res = (|| -> Result<PushforwardPoint, ContactError> {
            let cv = map.eval_with_jacobian(p)?;
            let frame = canonical_frame(map.k, map.q, &cv.value);
            let mut residuals = Vec::new();
            for g in &dist.generators {
                let v = g.value_at(p)?;
                let w = &cv.jacobian * DVector::from_column_slice(&v);
                residuals.push(span_residual(&frame, w.as_slice(), 1e-300));
            }
            let pass = residuals.iter().all(|r| *r <= TOL);
            Ok(PushforwardPoint {
                point: p.clone(),
                image: cv.value,
                residuals,
                pass,
            })
        })();
        let entry = res.unwrap_or_else(|_| PushforwardPoint {
            point: p.clone(),
            image: Vec::new(),
            residuals: vec![f64::INFINITY],
            pass: false,
        });
        worst = entry.residuals.iter().cloned().fold(worst, f64::max);
        out.push(entry);
    }
    PushforwardReport {
        tolerance: TOL,
        max_residual: worst,
        pass: out.iter().all(|p| p.pass),
        points: out,
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct NewtonOptions {
    pub max_iterations: usize,
    pub damping_floor: f64,
    /// Stop when `‖φ(p) − target‖∞ ≤ tol_rel · max(1, ‖target‖∞)`.
    pub tol_rel: f64,
    /// Number of continuation stages tried when Newton fails from the guess.
    pub homotopy_stages: usize,
    /// Take minimum-norm steps through rank-deficient Jacobians instead of failing.
    pub least_squares: bool,
}

const MAX_CONDITION: f64 = 1e12;

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            max_iterations: 50,
            damping_floor: 2f64.powi(-20),
            tol_rel: 1e-12,
            homotopy_stages: 8,
            least_squares: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Inversion {
    pub point: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub homotopy: bool,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Residual as `(‖·‖∞, ‖·‖₂)`; the line search uses the Euclidean norm.
fn residual_of(map: &ContactMap, p: &[f64], target: &[f64]) -> Result<(f64, f64), ContactError> {
    let v = map.eval(p)?;
    let r: Vec<f64> = v.iter().zip(target).map(|(a, b)| a - b).collect();
    let two = r.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !two.is_finite() {
        return Err(ContactError::Dist(DistError::Invalid(
            "non-finite map value".into(),
        )));
    }
    Ok((inf_norm(&r), two))
}

fn newton(
    map: &ContactMap,
    target: &[f64],
    guess: &[f64],
    opts: &NewtonOptions,
) -> Result<Inversion, ContactError> {
    let tol = opts.tol_rel * inf_norm(target).max(1.0);
    let mut p = guess.to_vec();
    let mut cause = None;
    let (mut res, mut merit) = residual_of(map, &p, target)?;
    for it in 0..=opts.max_iterations {
        if res <= tol {
            return Ok(Inversion {
                point: p,
                iterations: it,
                residual: res,
                homotopy: false,
            });
        }
        if it == opts.max_iterations {
            break;
        }
        let cv = map.eval_with_jacobian(&p)?;
        let r = DVector::from_iterator(
            target.len(),
            cv.value.iter().zip(target).map(|(a, b)| a - b),
        );
        let svd = cv.jacobian.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        let condition = if smin > 0.0 {
            smax / smin
        } else {
            f64::INFINITY
        };
        if !opts.least_squares && !(condition < MAX_CONDITION) {
            return Err(ContactError::SingularJacobian { condition });
        }
        let step = match svd.solve(&-r, smax / MAX_CONDITION) {
            Ok(s) if s.iter().all(|x| x.is_finite()) => s,
            _ => return Err(ContactError::SingularJacobian { condition }),
        };
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = p
                .iter()
                .zip(step.iter())
                .map(|(a, s)| a + lambda * s)
                .collect();
            match residual_of(map, &trial, target) {
                Ok((tr, tm)) if tm < merit => {
                    p = trial;
                    res = tr;
                    merit = tm;
                    break;
                }
                Ok(_) => {}
                Err(e) => cause = Some(e.to_string()),
            }
            lambda *= 0.5;
            if lambda < opts.damping_floor {
                return Err(ContactError::NoConvergence {
                    iterations: it,
                    residual: res,
                    cause,
                });
            }
        }
    }
    Err(ContactError::NoConvergence {
        iterations: opts.max_iterations,
        residual: res,
        cause,
    })
}

/// Solve `φ(p) = target` by damped Newton from `guess`, falling back to continuation in the target.
pub fn invert(
    map: &ContactMap,
    target: &[f64],
    guess: &[f64],
    opts: &NewtonOptions,
) -> Result<Inversion, ContactError> {
    if target.len() != map.out_dim() || guess.len() != map.dist.dim() {
        return Err(ContactError::Invalid(format!(
            "target has {} entries and guess {}, map is {} → {}",
            target.len(),
            guess.len(),
            map.dist.dim(),
            map.out_dim()
        )));
    }
    if target.iter().any(|v| !v.is_finite()) {
        return Err(ContactError::Invalid("target is not finite".into()));
    }
    let first = match newton(map, target, guess, opts) {
        Ok(r) => return Ok(r),
        Err(e @ ContactError::NoConvergence { .. })
        | Err(e @ ContactError::SingularJacobian { .. }) => e,
        Err(e) => return Err(e),
    };
    if opts.homotopy_stages == 0 {
        return Err(first);
    }
    let start = match map.eval(guess) {
        Ok(v) => v,
        Err(_) => return Err(first),
    };
    let mut p = guess.to_vec();
    let mut total = 0;
    for s in 1..=opts.homotopy_stages {
        let t = s as f64 / opts.homotopy_stages as f64;
        let mid: Vec<f64> = start
            .iter()
            .zip(target)
            .map(|(a, b)| a + t * (b - a))
            .collect();
        match newton(map, &mid, &p, opts) {
            Ok(r) => {
                total += r.iterations;
                p = r.point;
            }
            Err(_) => return Err(first),
        }
    }
    let (res, _) = residual_of(map, &p, target)?;
    Ok(Inversion {
        point: p,
        iterations: total,
        residual: res,
        homotopy: true,
    })
}
