//! Singular sub-bundle, resolvent and Goursat recognition.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::flag::jet_kernel;
use super::{
    bracket_jets, combine_fields, derived_flag, values, DistError, EvalContext, FieldJet,
    FlagAtPoint, FlagConfig, FlagReport, VectorField,
};
use crate::jets::{JetError, JetScalar};
use crate::rank::{kernel, numerical_rank, span_residual, RankPolicy};

const DEGREE_SAMPLES: usize = 3;

/// Polar-matrix data of a level and its degree-one hyperplane.
#[derive(Debug, Clone, Serialize)]
pub struct SingularStructure {
    pub level: usize,
    /// Frame indices of the representatives completing the Cauchy bundle.
    pub reps: Vec<usize>,
    pub generic_degree: usize,
    /// The linear form cutting out the singular directions, over `reps`.
    pub alpha: Vec<f64>,
    /// Basis of the singular bundle as coefficients over the level frame.
    pub bundle: Vec<Vec<f64>>,
    /// Polar-matrix rank at each bundle basis vector and at a random combination.
    pub degree_profile: Vec<usize>,
}

impl SingularStructure {
    /// Tangent vectors of the bundle at the point of `f`.
    pub fn values(&self, f: &FlagAtPoint) -> Vec<Vec<f64>> {
        let lvl = &f.levels[self.level];
        self.bundle
            .iter()
            .map(|c| {
                let mut v = vec![0.0; f.point.len()];
                for (ca, fv) in c.iter().zip(&lvl.values) {
                    for (vi, x) in v.iter_mut().zip(fv) {
                        *vi += ca * x;
                    }
                }
                v
            })
            .collect()
    }
}

/// How far `expected` is from spanning the singular bundle modulo the Cauchy bundle of its level.
///
/// Both inclusions are measured, so a match needs `span(expected) + ch = 𝔅̂ + ch`.
pub fn singular_membership(
    f: &FlagAtPoint,
    sing: &SingularStructure,
    expected: &[Vec<f64>],
) -> f64 {
    let ch = f.levels[sing.level].cauchy_values();
    let found: Vec<Vec<f64>> = sing
        .values(f)
        .into_iter()
        .chain(ch.iter().cloned())
        .collect();
    let wanted: Vec<Vec<f64>> = expected.iter().cloned().chain(ch).collect();
    let forward = expected
        .iter()
        .map(|e| span_residual(&found, e, f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    sing.values(f)
        .iter()
        .map(|b| span_residual(&wanted, b, f64::MIN_POSITIVE))
        .fold(forward, f64::max)
}

/// Two-index antisymmetric polar data `a[j][c][b]` restricted to `reps`.
fn polar_data(f: &FlagAtPoint, level: usize, reps: &[usize]) -> Vec<Vec<Vec<f64>>> {
    let mu = &f.levels[level].mu;
    let q = f.levels[level].complement.len();
    (0..q)
        .map(|j| {
            reps.iter()
                .map(|&c| reps.iter().map(|&b| mu[c][b][j]).collect())
                .collect()
        })
        .collect()
}

fn polar_matrix(a: &[Vec<Vec<f64>>], dir: &[f64]) -> Vec<Vec<f64>> {
    // columns b, rows j
    let s = dir.len();
    (0..s)
        .map(|b| {
            a.iter()
                .map(|aj| (0..s).map(|c| dir[c] * aj[c][b]).sum())
                .collect()
        })
        .collect()
}

/// Frame indices that complete the Cauchy span to the whole level.
fn complement_reps(
    f: &FlagAtPoint,
    level: usize,
    policy: &RankPolicy,
) -> Result<Vec<usize>, DistError> {
    let lvl = &f.levels[level];
    let mut span = lvl.cauchy_values();
    let mut reps = Vec::new();
    for (a, v) in lvl.values.iter().enumerate() {
        let mut trial = span.clone();
        trial.push(v.clone());
        let r = numerical_rank(&trial, policy, "resolvent representatives")?;
        if r.rank == trial.len() {
            span = trial;
            reps.push(a);
        }
    }
    Ok(reps)
}

/// Symmetric matrices of the 2×2 minors of the polar matrix, as quadratic forms in the direction.
///
/// With `u = a[j][·][b]`, the minor `(u₁·x)(v₂·x) − (u₂·x)(v₁·x)` has matrix
/// `½(u₁v₂ᵀ + v₂u₁ᵀ − u₂v₁ᵀ − v₁u₂ᵀ)`; `sym(p, q, r, s)` must return `½(pq + rs)`.
fn minor_forms<T>(
    a: &[Vec<Vec<T>>],
    s: usize,
    sym: impl Fn(&T, &T, &T, &T) -> T,
    sub: impl Fn(T, T) -> T,
) -> Vec<Vec<Vec<T>>> {
    let q = a.len();
    let mut out = Vec::new();
    for j1 in 0..q {
        for j2 in j1 + 1..q {
            for b1 in 0..s {
                for b2 in b1 + 1..s {
                    let m: Vec<Vec<T>> = (0..s)
                        .map(|c| {
                            (0..s)
                                .map(|e| {
                                    let p = sym(
                                        &a[j1][c][b1],
                                        &a[j2][e][b2],
                                        &a[j1][e][b1],
                                        &a[j2][c][b2],
                                    );
                                    let n = sym(
                                        &a[j1][c][b2],
                                        &a[j2][e][b1],
                                        &a[j1][e][b2],
                                        &a[j2][c][b1],
                                    );
                                    sub(p, n)
                                })
                                .collect()
                        })
                        .collect();
                    out.push(m);
                }
            }
        }
    }
    out
}

fn sym_f64(u1: &f64, v2: &f64, u1e: &f64, v2c: &f64) -> f64 {
    0.5 * (u1 * v2 + u1e * v2c)
}

fn sym_jet(u1: &JetScalar, v2: &JetScalar, u1e: &JetScalar, v2c: &JetScalar) -> JetScalar {
    (&(u1 * v2) + &(u1e * v2c)).scale(0.5)
}

fn max_abs(m: &[Vec<f64>]) -> f64 {
    m.iter().flatten().fold(0.0, |a, b| a.max(b.abs()))
}

/// Degree-one hyperplane of the level-`level` polar matrix by the common-linear-factor method.
pub fn singular_structure(
    f: &FlagAtPoint,
    level: usize,
    policy: &RankPolicy,
    seed: u64,
) -> Result<SingularStructure, DistError> {
    let lvl = f
        .levels
        .get(level)
        .ok_or_else(|| DistError::Invalid(format!("no level {level}")))?;
    if lvl.pairs.is_empty() {
        return Err(DistError::NoDegreeOneHyperplane(format!(
            "level {level} has no brackets"
        )));
    }
    let reps = complement_reps(f, level, policy)?;
    let s = reps.len();
    let a = polar_data(f, level, &reps);
    if a.len() < 2 || s < 3 {
        return Err(DistError::NoDegreeOneHyperplane(format!(
            "quotient rank {s} over {} normal directions: need q ≥ 2",
            a.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut generic_degree = 0;
    for _ in 0..DEGREE_SAMPLES {
        let dir: Vec<f64> = (0..s).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = numerical_rank(&polar_matrix(&a, &dir), policy, "generic polar degree")?;
        generic_degree = generic_degree.max(r.rank);
    }
    let forms = minor_forms(&a, s, sym_f64, |p, n| p - n);
    let scale = forms.iter().map(|m| max_abs(m)).fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(DistError::NoDegreeOneHyperplane(
            "all 2×2 minors vanish".into(),
        ));
    }
    let mut orth = Vec::new();
    for m in &forms {
        if max_abs(m) <= 1e-9 * scale {
            continue;
        }
        let (ker, dec) = kernel(m, policy, "minor form")?;
        if dec.rank > 2 {
            return Err(DistError::NoDegreeOneHyperplane(format!(
                "a minor form has rank {}",
                dec.rank
            )));
        }
        orth.extend(ker);
    }
    // α ⟂ every kernel vector
    let cols: Vec<Vec<f64>> = (0..s)
        .map(|c| orth.iter().map(|z| z[c]).collect())
        .collect();
    let (alpha_ker, _) = kernel(&cols, policy, "common linear factor")?;
    if alpha_ker.len() != 1 {
        return Err(DistError::NoDegreeOneHyperplane(format!(
            "{} candidate common factors",
            alpha_ker.len()
        )));
    }
    let mut alpha = alpha_ker.into_iter().next().unwrap_or_default();
    let an = alpha.iter().map(|x| x * x).sum::<f64>().sqrt();
    alpha.iter_mut().for_each(|x| *x /= an);
    let (bh, _) = kernel(
        &alpha.iter().map(|x| vec![*x]).collect::<Vec<_>>(),
        policy,
        "singular bundle",
    )?;
    let mut checks = bh.clone();
    let weights: Vec<f64> = bh.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
    let combo: Vec<f64> = (0..s)
        .map(|c| bh.iter().zip(&weights).map(|(b, w)| b[c] * w).sum())
        .collect();
    checks.push(combo);
    let mut degree_profile = Vec::new();
    for b in &checks {
        let r = numerical_rank(&polar_matrix(&a, b), policy, "degree on singular bundle")?;
        if r.rank > 1 {
            return Err(DistError::NoDegreeOneHyperplane(format!(
                "polar matrix has rank {} on ker α",
                r.rank
            )));
        }
        degree_profile.push(r.rank);
    }
    let amax = a.iter().map(|m| max_abs(m)).fold(0.0, f64::max);
    for b1 in &bh {
        for b2 in &bh {
            for aj in &a {
                let v: f64 = (0..s)
                    .map(|c| (0..s).map(|e| b1[c] * b2[e] * aj[c][e]).sum::<f64>())
                    .sum();
                if v.abs() > 1e-8 * amax.max(f64::MIN_POSITIVE) {
                    return Err(DistError::NoDegreeOneHyperplane(format!(
                        "structure tensor does not vanish on the singular bundle ({v:.3e})"
                    )));
                }
            }
        }
    }
    let m = lvl.dim();
    let bundle = bh
        .iter()
        .map(|b| {
            let mut v = vec![0.0; m];
            for (c, &r) in reps.iter().enumerate() {
                v[r] = b[c];
            }
            v
        })
        .collect();
    Ok(SingularStructure {
        level,
        reps,
        generic_degree,
        alpha,
        bundle,
        degree_profile,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Integrability {
    pub integrable: bool,
    pub rank: usize,
    pub max_residual: f64,
}

/// Pointwise Frobenius test for field jets of order ≥ 1.
pub fn integrability_of(
    fields: &[FieldJet],
    policy: &RankPolicy,
) -> Result<Integrability, DistError> {
    let vals: Vec<Vec<f64>> = fields.iter().map(|f| values(f)).collect();
    let rank = numerical_rank(&vals, policy, "integrability span")?.rank;
    let scale = vals
        .iter()
        .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let mut worst: f64 = 0.0;
    for a in 0..fields.len() {
        for b in a + 1..fields.len() {
            let br = values(&bracket_jets(&fields[a], &fields[b])?);
            worst = worst.max(span_residual(&vals, &br, scale));
        }
    }
    Ok(Integrability {
        integrable: worst <= 1e-8,
        rank,
        max_residual: worst,
    })
}

/// Frobenius test for arbitrary fields at a point.
pub fn check_integrability(
    fields: &[VectorField],
    point: &[f64],
    policy: &RankPolicy,
) -> Result<Integrability, DistError> {
    let mut ctx = EvalContext::new(point);
    let jets: Vec<FieldJet> = fields
        .iter()
        .map(|f| f.eval(&mut ctx, 1))
        .collect::<Result<_, _>>()?;
    integrability_of(&jets, policy)
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolventAtPoint {
    pub point: Vec<f64>,
    /// Resolvent basis values: Cauchy fields first, then the singular bundle.
    pub basis: Vec<Vec<f64>>,
    pub expected_rank: usize,
    pub integrability: Integrability,
    #[serde(skip)]
    pub fields: Vec<FieldJet>,
}

/// Resolvent bundle of level `level`: Cauchy fields plus the singular bundle, as jets.
pub fn resolvent(
    f: &FlagAtPoint,
    level: usize,
    sing: &SingularStructure,
    policy: &RankPolicy,
) -> Result<ResolventAtPoint, DistError> {
    let lvl = &f.levels[level];
    let order =
        f.order
            .checked_sub(level + 1)
            .filter(|o| *o >= 1)
            .ok_or(JetError::InsufficientOrder {
                needed: level + 2,
                available: f.order,
            })?;
    let reps = &sing.reps;
    let s = reps.len();
    let mu = f.mu_jets(level)?;
    let q = lvl.complement.len();
    let a: Vec<Vec<Vec<JetScalar>>> = (0..q)
        .map(|j| {
            reps.iter()
                .map(|&c| reps.iter().map(|&b| mu[c][b][j].clone()).collect())
                .collect()
        })
        .collect();
    let forms = minor_forms(&a, s, sym_jet, |p, n| &p - &n);
    let scale = forms
        .iter()
        .flat_map(|m| m.iter().flatten())
        .fold(0.0f64, |acc, x| acc.max(x.value().abs()));
    let mut orth: Vec<Vec<JetScalar>> = Vec::new();
    for m in &forms {
        let vals: Vec<Vec<f64>> = m
            .iter()
            .map(|r| r.iter().map(|x| x.value()).collect())
            .collect();
        if max_abs(&vals) <= 1e-9 * scale {
            continue;
        }
        let rank = numerical_rank(&vals, policy, "minor form")?.rank;
        orth.extend(jet_kernel(m, s, rank, policy)?);
    }
    let alpha = jet_kernel(&orth, s, s - 1, policy)?;
    let alpha = alpha
        .into_iter()
        .next()
        .ok_or_else(|| DistError::NoDegreeOneHyperplane("no jet common factor".into()))?;
    let bh = jet_kernel(&[alpha], s, 1, policy)?;
    let frame: Vec<FieldJet> = reps
        .iter()
        .map(|&r| lvl.jets[r].iter().map(|c| c.truncate(order)).collect())
        .collect::<Result<_, _>>()?;
    let mut fields = f.cauchy_field_jets(level, policy)?;
    for b in &bh {
        fields.push(combine_fields(b, &frame)?);
    }
    let integrability = integrability_of(&fields, policy)?;
    Ok(ResolventAtPoint {
        point: f.point.clone(),
        basis: fields.iter().map(|x| values(x)).collect(),
        expected_rank: lvl.cauchy_dim() + sing.bundle.len(),
        integrability,
        fields,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl HypothesisCheck {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        HypothesisCheck {
            name: name.into(),
            passed,
            detail,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GoursatCertificate {
    pub uniform: bool,
    pub k: usize,
    pub q: usize,
    pub signature: Vec<usize>,
    pub derived_type: Vec<[usize; 2]>,
    pub hypothesis_checks: Vec<HypothesisCheck>,
    pub generic_degree: Option<usize>,
    /// Singular bundle at the basepoint, as coefficients over the level `k−1` frame.
    pub singular_bundle: Vec<Vec<f64>>,
    /// Words of the level `k−1` frame the coefficients refer to.
    pub frame_words: Vec<String>,
    /// Resolvent basis values at the basepoint.
    pub resolvent_basis: Vec<Vec<f64>>,
    pub integrability_residual: Option<f64>,
    pub flag: FlagReport,
    #[serde(skip)]
    pub singular: Vec<SingularStructure>,
    #[serde(skip)]
    pub resolvents: Vec<ResolventAtPoint>,
}

impl GoursatCertificate {
    pub fn check(&self, name: &str) -> Option<&HypothesisCheck> {
        self.hypothesis_checks.iter().find(|c| c.name == name)
    }
}

/// Evaluate the uniform Goursat hypotheses at every sample point.
pub fn recognize(
    dist: &super::Distribution,
    cfg: &FlagConfig,
) -> Result<GoursatCertificate, DistError> {
    let flag = derived_flag(dist, cfg)?;
    let k = flag.derived_length;
    let dims = flag.dims();
    let chd: Vec<usize> = flag.derived_type.iter().map(|t| t[1]).collect();
    let mut checks = Vec::new();
    let mut cert = GoursatCertificate {
        uniform: false,
        k,
        q: 0,
        signature: flag.signature.clone(),
        derived_type: flag.derived_type.clone(),
        hypothesis_checks: Vec::new(),
        generic_degree: None,
        singular_bundle: Vec::new(),
        frame_words: Vec::new(),
        resolvent_basis: Vec::new(),
        integrability_residual: None,
        flag: flag.clone(),
        singular: Vec::new(),
        resolvents: Vec::new(),
    };
    if k == 0 {
        checks.push(HypothesisCheck::new(
            "a",
            false,
            format!(
                "hypothesis-(a)-vacuous: the distribution is integrable (derived length 0, rank {} in dimension {})",
                dims[0],
                dist.dim()
            ),
        ));
        cert.hypothesis_checks = checks;
        return Ok(cert);
    }
    let q = dims[k] - dims[k - 1];
    cert.q = q;
    checks.push(HypothesisCheck::new(
        "a",
        flag.reaches_tangent_bundle,
        format!("dim V^({k}) = {} of {}", dims[k], dist.dim()),
    ));
    let growth_ok = dims[0] == q + 1 && dims.windows(2).all(|w| w[1] - w[0] == q);
    checks.push(HypothesisCheck::new(
        "b",
        growth_ok,
        format!("dims {dims:?}, rank {} against q+1 = {}", dims[0], q + 1),
    ));
    if q == 1 {
        checks.push(HypothesisCheck::new(
            "rank-two-goursat",
            dims[0] == 2 && growth_ok && flag.reaches_tangent_bundle,
            "rank 2, growth 1 per level, V^(∞) = TM".into(),
        ));
    } else {
        let incl = flag.signature[..k - 1].iter().all(|&r| r == 0);
        let chdims_ok = (0..k).all(|j| chd[j] == j * q);
        checks.push(HypothesisCheck::new(
            "c",
            incl && chdims_ok,
            format!(
                "Cauchy dims {:?}, expected multiples of {q}; inclusions {}",
                &chd[..k],
                if incl { "hold" } else { "fail" }
            ),
        ));
        let level = k - 1;
        let mut d_ok = true;
        let mut detail = String::new();
        let mut worst: f64 = 0.0;
        for (n, pf) in flag.points.iter().enumerate() {
            let res = singular_structure(pf, level, &cfg.policy, cfg.seed.wrapping_add(n as u64))
                .and_then(|s| resolvent(pf, level, &s, &cfg.policy).map(|r| (s, r)));
            match res {
                Ok((s, r)) => {
                    worst = worst.max(r.integrability.max_residual);
                    if !r.integrability.integrable || r.integrability.rank != r.expected_rank {
                        d_ok = false;
                        detail = format!(
                            "resolvent not integrable at sample {n}: residual {:.3e}, rank {} (expected {})",
                            r.integrability.max_residual, r.integrability.rank, r.expected_rank
                        );
                    }
                    if n == 0 {
                        cert.generic_degree = Some(s.generic_degree);
                        cert.singular_bundle = s.bundle.clone();
                        cert.resolvent_basis = r.basis.clone();
                    }
                    cert.singular.push(s);
                    cert.resolvents.push(r);
                }
                Err(e) => {
                    d_ok = false;
                    detail = format!("sample {n}: {e}");
                    break;
                }
            }
        }
        if d_ok {
            detail = format!(
                "integrable Weber structure at {} points, max residual {worst:.3e}",
                flag.points.len()
            );
            cert.integrability_residual = Some(worst);
        }
        checks.push(HypothesisCheck::new("d", d_ok, detail));
        cert.frame_words = flag.levels[level].basis.clone();
    }
    cert.uniform = checks.iter().all(|c| c.passed);
    cert.hypothesis_checks = checks;
    Ok(cert)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cartan::{build_riemannian_bundle, MetricSpec};
    use crate::distribution::{derived_flag, FlagConfig};
    use crate::fixtures;

    #[test]
    fn space_singular_bundle_is_v5_v6() {
        let d = fixtures::equiaffine_space();
        let flag = derived_flag(&d, &FlagConfig::default()).unwrap();
        let fr = fixtures::equiaffine_space_frame();
        for (n, pf) in flag.points.iter().enumerate() {
            let s = singular_structure(pf, 4, &RankPolicy::default(), n as u64).unwrap();
            assert_eq!(s.generic_degree, 2);
            assert_eq!(s.bundle.len(), 2);
            let want: Vec<Vec<f64>> = [4, 5]
                .iter()
                .map(|&i| fr[i].value_at(&pf.point).unwrap())
                .collect();
            let r = singular_membership(pf, &s, &want);
            assert!(r < 1e-8, "residual {r:e}");
            let wrong = vec![want[0].clone(), fr[6].value_at(&pf.point).unwrap()];
            assert!(singular_membership(pf, &s, &wrong) > 1e-3);
        }
    }

    #[test]
    fn h3_singular_bundle_and_resolvent() {
        let b = build_riemannian_bundle(&MetricSpec::h3()).unwrap();
        let flag = derived_flag(&b.distribution, &FlagConfig::default()).unwrap();
        let pf = flag.basepoint_flag();
        let s = singular_structure(pf, 2, &RankPolicy::default(), 1).unwrap();
        let want: Vec<Vec<f64>> = [(1, 2), (1, 3)]
            .iter()
            .map(|&(i, j)| b.pi_field(i, j).value_at(&pf.point).unwrap())
            .collect();
        assert!(singular_membership(pf, &s, &want) < 1e-8);
        let r = resolvent(pf, 2, &s, &RankPolicy::default()).unwrap();
        assert!(r.integrability.integrable);
        assert_eq!(r.integrability.rank, r.expected_rank);
    }

    #[test]
    fn plane_has_no_weber_structure() {
        let d = fixtures::equiaffine_plane();
        let flag = derived_flag(&d, &FlagConfig::default()).unwrap();
        let e = singular_structure(flag.basepoint_flag(), 2, &RankPolicy::default(), 0);
        assert!(matches!(e, Err(DistError::NoDegreeOneHyperplane(_))));
    }

    #[test]
    fn integrability_detects_heisenberg() {
        let vars = ["x", "y", "z"];
        let a = fixtures::sparse_field(&vars, &[("x", "1")]);
        let b = fixtures::sparse_field(&vars, &[("y", "1"), ("z", "x")]);
        let p = [0.3, 0.1, -0.2];
        let i = check_integrability(&[a.clone(), b], &p, &RankPolicy::default()).unwrap();
        assert!(!i.integrable);
        let c = fixtures::sparse_field(&vars, &[("y", "1")]);
        let i = check_integrability(&[a, c], &p, &RankPolicy::default()).unwrap();
        assert!(i.integrable && i.rank == 2);
    }
}
