//! Vector-field distributions and their derived-flag geometry.
//!
//! Fields are evaluated as jets at a point. A bracket consumes one jet order,
//! so every structure built from iterated brackets is available exactly, to
//! the order that remains.

mod flag;
mod weber;

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exprdsl::{self, EvalError, Expr, ParseError};
use crate::jets::{JetError, JetScalar};
use crate::rank::RankError;

pub use flag::{
    derived_flag, flag_at_point, FlagAtPoint, FlagConfig, FlagLevel, FlagReport, LevelAtPoint, Word,
};
pub use weber::{
    check_integrability, recognize, resolvent, singular_membership, singular_structure,
    GoursatCertificate, HypothesisCheck, Integrability, ResolventAtPoint, SingularStructure,
};

/// Jet of a vector field at a point: one jet per coordinate component.
pub type FieldJet = Vec<JetScalar>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Rank(#[from] RankError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("generators dependent at basepoint: rank {rank} of {count}")]
    DependentGenerators { rank: usize, count: usize },
    #[error("non-regular: {what} differs across sample points ({values:?})")]
    NonRegular { what: String, values: Vec<usize> },
    #[error("no degree-one hyperplane: {0}")]
    NoDegreeOneHyperplane(String),
    #[error("invalid distribution: {0}")]
    Invalid(String),
}

impl DistError {
    /// True for failures caused by numerics near a decision threshold rather than by bad input.
    pub fn is_indeterminate(&self) -> bool {
        matches!(
            self,
            DistError::Rank(_) | DistError::NonRegular { .. } | DistError::NoDegreeOneHyperplane(_)
        )
    }
}

/// A family of fields computed together, e.g. the dual of a coframe.
pub trait FieldProvider: Send + Sync {
    fn dim(&self) -> usize;
    fn labels(&self) -> Vec<String>;
    /// Every provided field at `point`, to jet order `order`.
    fn eval(&self, point: &[f64], order: usize) -> Result<Vec<FieldJet>, DistError>;
}

#[derive(Clone)]
pub enum VectorField {
    /// Components in the coordinate basis.
    Components(Vec<Expr>),
    /// The coordinate field `∂/∂x_i`.
    Coordinate(usize),
    /// Member `index` of a provider's family.
    Provided {
        provider: Arc<dyn FieldProvider>,
        index: usize,
    },
    /// `Σ f_k X_k` with expression coefficients.
    Sum(Vec<(Expr, VectorField)>),
    Bracket(Box<VectorField>, Box<VectorField>),
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VectorField::Components(c) => {
                let parts: Vec<String> = c.iter().map(|e| e.to_string()).collect();
                write!(f, "Components({parts:?})")
            }
            VectorField::Coordinate(i) => write!(f, "Coordinate({i})"),
            VectorField::Provided { provider, index } => {
                write!(f, "Provided({})", provider.labels()[*index])
            }
            VectorField::Sum(terms) => {
                f.write_str("Sum(")?;
                for (i, (c, x)) in terms.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" + ")?;
                    }
                    write!(f, "({c})*{x:?}")?;
                }
                f.write_str(")")
            }
            VectorField::Bracket(a, b) => write!(f, "[{a:?}, {b:?}]"),
        }
    }
}

/// Caches coordinate jets and provider results for evaluations at one point.
pub struct EvalContext<'a> {
    point: &'a [f64],
    coords: HashMap<usize, Arc<Vec<JetScalar>>>,
    provided: HashMap<(usize, usize), Arc<Vec<FieldJet>>>,
}

impl<'a> EvalContext<'a> {
    pub fn new(point: &'a [f64]) -> Self {
        EvalContext {
            point,
            coords: HashMap::new(),
            provided: HashMap::new(),
        }
    }

    pub fn point(&self) -> &[f64] {
        self.point
    }

    pub fn coords(&mut self, order: usize) -> Result<Arc<Vec<JetScalar>>, DistError> {
        if let Some(c) = self.coords.get(&order) {
            return Ok(c.clone());
        }
        let c = Arc::new(JetScalar::seed_all(self.point, order)?);
        self.coords.insert(order, c.clone());
        Ok(c)
    }

    fn provided(
        &mut self,
        provider: &Arc<dyn FieldProvider>,
        order: usize,
    ) -> Result<Arc<Vec<FieldJet>>, DistError> {
        let key = (Arc::as_ptr(provider) as *const () as usize, order);
        if let Some(v) = self.provided.get(&key) {
            return Ok(v.clone());
        }
        let v = Arc::new(provider.eval(self.point, order)?);
        self.provided.insert(key, v.clone());
        Ok(v)
    }

    /// Evaluate a scalar expression over the chart coordinates.
    pub fn scalar(&mut self, e: &Expr, order: usize) -> Result<JetScalar, DistError> {
        let c = self.coords(order)?;
        let proto = JetScalar::constant(self.point.len(), order, 0.0)?;
        Ok(e.eval_jet_like(&c, &proto)?)
    }
}

impl VectorField {
    pub fn components(exprs: Vec<Expr>) -> Self {
        VectorField::Components(exprs)
    }

    /// Lazy Lie bracket `[self, other]`.
    pub fn bracket(&self, other: &VectorField) -> VectorField {
        VectorField::Bracket(Box::new(self.clone()), Box::new(other.clone()))
    }

    pub fn eval(&self, ctx: &mut EvalContext<'_>, order: usize) -> Result<FieldJet, DistError> {
        let d = ctx.point.len();
        match self {
            VectorField::Components(c) => {
                if c.len() != d {
                    return Err(DistError::Invalid(format!(
                        "field has {} components, chart has {d}",
                        c.len()
                    )));
                }
                c.iter().map(|e| ctx.scalar(e, order)).collect()
            }
            VectorField::Coordinate(i) => {
                if *i >= d {
                    return Err(DistError::Invalid(format!(
                        "coordinate field {i} out of range"
                    )));
                }
                let zero = JetScalar::constant(d, order, 0.0)?;
                let mut out = vec![zero.clone(); d];
                out[*i] = zero.constant_like(1.0);
                Ok(out)
            }
            VectorField::Provided { provider, index } => {
                if provider.dim() != d {
                    return Err(DistError::Invalid("provider dimension mismatch".into()));
                }
                let all = ctx.provided(provider, order)?;
                all.get(*index)
                    .cloned()
                    .ok_or_else(|| DistError::Invalid(format!("provider has no field {index}")))
            }
            VectorField::Sum(terms) => {
                let mut acc = vec![JetScalar::constant(d, order, 0.0)?; d];
                for (coef, field) in terms {
                    let f = ctx.scalar(coef, order)?;
                    let x = field.eval(ctx, order)?;
                    for (a, xi) in acc.iter_mut().zip(&x) {
                        *a = &*a + &(&f * xi);
                    }
                }
                Ok(acc)
            }
            VectorField::Bracket(a, b) => {
                let x = a.eval(ctx, order + 1)?;
                let y = b.eval(ctx, order + 1)?;
                bracket_jets(&x, &y)
            }
        }
    }

    /// Component expressions in a `dim`-dimensional chart, when the field is built from
    /// components, coordinate fields and expression-weighted sums of those.
    pub fn to_components(&self, dim: usize) -> Option<Vec<Expr>> {
        match self {
            VectorField::Components(c) => (c.len() == dim).then(|| c.clone()),
            VectorField::Coordinate(i) => (*i < dim).then(|| {
                (0..dim)
                    .map(|j| Expr::Num(if j == *i { 1.0 } else { 0.0 }))
                    .collect()
            }),
            VectorField::Sum(terms) => {
                let mut acc = vec![Expr::Num(0.0); dim];
                for (coef, field) in terms {
                    let comps = field.to_components(dim)?;
                    for (a, c) in acc.iter_mut().zip(comps) {
                        let prev = std::mem::replace(a, Expr::Num(0.0));
                        *a = exprdsl::add(prev, exprdsl::mul(coef.clone(), c));
                    }
                }
                Some(acc)
            }
            VectorField::Provided { .. } | VectorField::Bracket(..) => None,
        }
    }

    /// Value of the field at a point.
    pub fn value_at(&self, point: &[f64]) -> Result<Vec<f64>, DistError> {
        let mut ctx = EvalContext::new(point);
        Ok(self.eval(&mut ctx, 0)?.iter().map(|j| j.value()).collect())
    }
}

fn is_zero(j: &JetScalar) -> bool {
    j.max_abs() == 0.0
}

/// `X(f) = Σ X^j ∂_j f`, one order below the inputs.
pub fn apply_field(x: &[JetScalar], f: &JetScalar) -> Result<JetScalar, DistError> {
    let order = x
        .iter()
        .map(|j| j.order())
        .min()
        .unwrap_or(0)
        .min(f.order());
    if order == 0 {
        return Err(JetError::InsufficientOrder {
            needed: 1,
            available: 0,
        }
        .into());
    }
    let f = f.truncate(order)?;
    let mut acc = JetScalar::constant(f.dim(), order - 1, 0.0)?;
    for (j, xj) in x.iter().enumerate() {
        if is_zero(xj) {
            continue;
        }
        let df = f.partial(j)?;
        if is_zero(&df) {
            continue;
        }
        acc = &acc + &(&xj.truncate(order - 1)? * &df);
    }
    Ok(acc)
}

/// Lie bracket of two field jets, one order below the lower input.
pub fn bracket_jets(x: &[JetScalar], y: &[JetScalar]) -> Result<FieldJet, DistError> {
    let d = x.len();
    if y.len() != d {
        return Err(DistError::Invalid(
            "bracket of fields with different dimension".into(),
        ));
    }
    let order = x
        .iter()
        .chain(y.iter())
        .map(|j| j.order())
        .min()
        .unwrap_or(0);
    if order == 0 {
        return Err(JetError::InsufficientOrder {
            needed: 1,
            available: 0,
        }
        .into());
    }
    let xs: Vec<JetScalar> = x
        .iter()
        .map(|j| j.truncate(order))
        .collect::<Result<_, _>>()?;
    let ys: Vec<JetScalar> = y
        .iter()
        .map(|j| j.truncate(order))
        .collect::<Result<_, _>>()?;
    let xl: Vec<JetScalar> = xs
        .iter()
        .map(|j| j.truncate(order - 1))
        .collect::<Result<_, _>>()?;
    let yl: Vec<JetScalar> = ys
        .iter()
        .map(|j| j.truncate(order - 1))
        .collect::<Result<_, _>>()?;
    let zero = JetScalar::constant(xs[0].dim(), order - 1, 0.0)?;
    let mut out = vec![zero; d];
    for (i, o) in out.iter_mut().enumerate() {
        let yi_zero = is_zero(&ys[i]);
        let xi_zero = is_zero(&xs[i]);
        for j in 0..d {
            if !yi_zero && !is_zero(&xl[j]) {
                let dy = ys[i].partial(j)?;
                if !is_zero(&dy) {
                    *o = &*o + &(&xl[j] * &dy);
                }
            }
            if !xi_zero && !is_zero(&yl[j]) {
                let dx = xs[i].partial(j)?;
                if !is_zero(&dx) {
                    *o = &*o - &(&yl[j] * &dx);
                }
            }
        }
    }
    Ok(out)
}

/// Linear combination `Σ c_k F_k` of field jets with jet coefficients, at the lowest common order.
pub fn combine_fields(coeffs: &[JetScalar], fields: &[FieldJet]) -> Result<FieldJet, DistError> {
    let order = coeffs
        .iter()
        .map(|c| c.order())
        .chain(fields.iter().flat_map(|f| f.iter().map(|j| j.order())))
        .min()
        .unwrap_or(0);
    let d = fields.first().map_or(0, |f| f.len());
    let dim = coeffs
        .first()
        .map(|c| c.dim())
        .ok_or_else(|| DistError::Invalid("empty combination".into()))?;
    let mut acc = vec![JetScalar::constant(dim, order, 0.0)?; d];
    for (c, f) in coeffs.iter().zip(fields) {
        if is_zero(c) {
            continue;
        }
        let c = c.truncate(order)?;
        for (a, fi) in acc.iter_mut().zip(f) {
            if !is_zero(fi) {
                *a = &*a + &(&c * &fi.truncate(order)?);
            }
        }
    }
    Ok(acc)
}

/// Point values of a field jet.
pub fn values(f: &[JetScalar]) -> Vec<f64> {
    f.iter().map(|j| j.value()).collect()
}

/// JSON form of a distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionDoc {
    pub chart: Vec<String>,
    pub generators: Vec<Vec<String>>,
    pub basepoint: Vec<f64>,
    #[serde(default)]
    pub labels: Vec<String>,
}

/// A chart with generator fields and a basepoint. The first generator is the drift.
#[derive(Clone, Debug)]
pub struct Distribution {
    pub coords: Vec<String>,
    pub generators: Vec<VectorField>,
    pub labels: Vec<String>,
    pub basepoint: Vec<f64>,
}

impl Distribution {
    pub fn new(
        coords: Vec<String>,
        generators: Vec<VectorField>,
        labels: Vec<String>,
        basepoint: Vec<f64>,
    ) -> Result<Self, DistError> {
        let d = Distribution {
            coords,
            generators,
            labels,
            basepoint,
        };
        d.validate()?;
        Ok(d)
    }

    fn validate(&self) -> Result<(), DistError> {
        let dim = self.coords.len();
        if dim == 0 {
            return Err(DistError::Invalid("empty chart".into()));
        }
        for (i, a) in self.coords.iter().enumerate() {
            if self.coords[..i].contains(a) {
                return Err(DistError::Invalid(format!("duplicate coordinate `{a}`")));
            }
        }
        if self.basepoint.len() != dim {
            return Err(DistError::Invalid(format!(
                "basepoint has {} entries, chart has {dim}",
                self.basepoint.len()
            )));
        }
        if self.basepoint.iter().any(|v| !v.is_finite()) {
            return Err(DistError::Invalid("basepoint is not finite".into()));
        }
        if self.generators.is_empty() {
            return Err(DistError::Invalid("no generators".into()));
        }
        if self.labels.len() != self.generators.len() {
            return Err(DistError::Invalid(format!(
                "{} labels for {} generators",
                self.labels.len(),
                self.generators.len()
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn rank(&self) -> usize {
        self.generators.len()
    }

    pub fn coord_refs(&self) -> Vec<&str> {
        self.coords.iter().map(|s| s.as_str()).collect()
    }

    /// Parse a scalar expression over this chart.
    pub fn parse_scalar(&self, text: &str) -> Result<Expr, ParseError> {
        exprdsl::parse(text, &self.coord_refs())
    }

    pub fn from_doc(doc: &DistributionDoc) -> Result<Self, DistError> {
        let vars: Vec<&str> = doc.chart.iter().map(|s| s.as_str()).collect();
        let mut generators = Vec::with_capacity(doc.generators.len());
        for (g, comps) in doc.generators.iter().enumerate() {
            if comps.len() != vars.len() {
                return Err(DistError::Invalid(format!(
                    "generator {g} has {} components, chart has {}",
                    comps.len(),
                    vars.len()
                )));
            }
            generators.push(VectorField::Components(exprdsl::parse_all(comps, &vars)?));
        }
        let labels = if doc.labels.is_empty() {
            (1..=generators.len()).map(|i| format!("X{i}")).collect()
        } else {
            doc.labels.clone()
        };
        Distribution::new(doc.chart.clone(), generators, labels, doc.basepoint.clone())
    }

    pub fn from_json(text: &str) -> Result<Self, DistError> {
        let doc: DistributionDoc = serde_json::from_str(text)
            .map_err(|e| DistError::Invalid(format!("distribution JSON: {e}")))?;
        Self::from_doc(&doc)
    }

    /// JSON form; `None` when a generator has no closed component form (provided or bracket fields).
    pub fn to_doc(&self) -> Option<DistributionDoc> {
        let mut generators = Vec::new();
        for g in &self.generators {
            let comps = g.to_components(self.dim())?;
            generators.push(comps.iter().map(|e| e.to_string()).collect());
        }
        Some(DistributionDoc {
            chart: self.coords.clone(),
            generators,
            basepoint: self.basepoint.clone(),
            labels: self.labels.clone(),
        })
    }

    /// Generator jets at `point`.
    pub fn eval_generators(
        &self,
        ctx: &mut EvalContext<'_>,
        order: usize,
    ) -> Result<Vec<FieldJet>, DistError> {
        self.generators.iter().map(|g| g.eval(ctx, order)).collect()
    }

    /// Same distribution with a different basepoint.
    pub fn with_basepoint(&self, p: Vec<f64>) -> Result<Self, DistError> {
        Distribution::new(
            self.coords.clone(),
            self.generators.clone(),
            self.labels.clone(),
            p,
        )
    }
}

/// Basepoint plus `count` seeded perturbations, each coordinate moved by up to `rel·max(|p_i|, 1)`.
pub fn sample_points(base: &[f64], count: usize, rel: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![base.to_vec()];
    for _ in 0..count {
        out.push(
            base.iter()
                .map(|&p| p + rel * p.abs().max(1.0) * rng.gen_range(-1.0..1.0))
                .collect(),
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(c: &[&str], vars: &[&str]) -> VectorField {
        VectorField::Components(exprdsl::parse_all(c, vars).unwrap())
    }

    #[test]
    fn textbook_brackets() {
        let v = ["x", "y"];
        let dx = field(&["1", "0"], &v);
        let xdy = field(&["0", "x"], &v);
        let dy = field(&["0", "1"], &v);
        let p = [0.3, -1.2];
        let b = dx.bracket(&xdy).value_at(&p).unwrap();
        assert_eq!(b, vec![0.0, 1.0]);
        let b = dx.bracket(&dy).value_at(&p).unwrap();
        assert_eq!(b, vec![0.0, 0.0]);
    }

    #[test]
    fn bracket_antisymmetry_is_exact() {
        let v = ["x", "y", "z"];
        let a = field(&["y*z", "sin(x)", "1"], &v);
        let b = field(&["x^2", "exp(z)", "x*y"], &v);
        let p = [0.4, 0.1, -0.3];
        let ab = a.bracket(&b).value_at(&p).unwrap();
        let ba = b.bracket(&a).value_at(&p).unwrap();
        for (u, w) in ab.iter().zip(&ba) {
            assert_eq!(u + w, 0.0);
        }
    }

    #[test]
    fn apply_field_is_directional_derivative() {
        let p = [1.0, 2.0];
        let mut ctx = EvalContext::new(&p);
        let x = field(&["y", "1"], &["x", "y"]).eval(&mut ctx, 3).unwrap();
        let f = ctx
            .scalar(&exprdsl::parse("x*y", &["x", "y"]).unwrap(), 3)
            .unwrap();
        let xf = apply_field(&x, &f).unwrap();
        // y*y + x = 5
        assert!((xf.value() - 5.0).abs() < 1e-15);
    }

    #[test]
    fn json_round_trip() {
        let doc = DistributionDoc {
            chart: vec!["x".into(), "y".into(), "z".into()],
            generators: vec![
                vec!["1".into(), "0".into(), "0".into()],
                vec!["0".into(), "1".into(), "x".into()],
            ],
            basepoint: vec![0.1, 0.2, 0.3],
            labels: vec!["A".into(), "B".into()],
        };
        let d = Distribution::from_doc(&doc).unwrap();
        assert_eq!(d.to_doc().unwrap(), doc);
        let bad = DistributionDoc {
            basepoint: vec![0.0],
            ..doc.clone()
        };
        assert!(Distribution::from_doc(&bad).is_err());
    }

    #[test]
    fn samples_are_seeded() {
        let a = sample_points(&[1.0, -3.0], 4, 1e-2, 7);
        let b = sample_points(&[1.0, -3.0], 4, 1e-2, 7);
        assert_eq!(a, b);
        assert_eq!(a.len(), 5);
        for p in &a[1..] {
            assert!((p[1] + 3.0).abs() <= 0.03);
        }
    }
}
