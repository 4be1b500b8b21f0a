use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{
    bracket_jets, combine_fields, sample_points, values, DistError, Distribution, EvalContext,
    FieldJet, VectorField,
};
use crate::jets::{jet_solve, JetError, JetMatrix, JetScalar};
use crate::rank::{intersection_dim, kernel, numerical_rank, RankDecision, RankPolicy};

/// Formal iterated bracket over generator indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Word {
    Gen(usize),
    Br(Box<Word>, Box<Word>),
}

impl Word {
    pub fn depth(&self) -> usize {
        match self {
            Word::Gen(_) => 0,
            Word::Br(a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    pub fn render(&self, labels: &[String]) -> String {
        match self {
            Word::Gen(i) => labels
                .get(*i)
                .cloned()
                .unwrap_or_else(|| format!("X{}", i + 1)),
            Word::Br(a, b) => format!("[{},{}]", a.render(labels), b.render(labels)),
        }
    }

    pub fn to_field(&self, gens: &[VectorField]) -> VectorField {
        match self {
            Word::Gen(i) => gens[*i].clone(),
            Word::Br(a, b) => a.to_field(gens).bracket(&b.to_field(gens)),
        }
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Word::Gen(i) => write!(f, "X{}", i + 1),
            Word::Br(a, b) => write!(f, "[{a},{b}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagConfig {
    pub policy: RankPolicy,
    /// Fixed jet order; `None` escalates automatically.
    pub jet_order: Option<usize>,
    pub start_order: usize,
    pub max_order: usize,
    /// Perturbed points in addition to the basepoint.
    pub samples: usize,
    pub perturbation: f64,
    pub seed: u64,
}

impl Default for FlagConfig {
    fn default() -> Self {
        FlagConfig {
            policy: RankPolicy::default(),
            jet_order: None,
            start_order: 3,
            max_order: 16,
            samples: 4,
            perturbation: 1e-2,
            seed: 0x5eed_f1a6,
        }
    }
}

/// One level of the flag at one point.
#[derive(Debug, Clone)]
pub struct LevelAtPoint {
    pub words: Vec<Word>,
    /// Frame jets at order `K − level`.
    pub jets: Vec<FieldJet>,
    pub values: Vec<Vec<f64>>,
    /// Coordinate indices completing the frame to a basis.
    pub complement: Vec<usize>,
    /// Brackets of frame pairs `(a, b)`, `a < b`, at order `K − level − 1`. Empty at the top level.
    pub pairs: Vec<((usize, usize), FieldJet)>,
    /// `mu[a][b][j]`: component of `[F_a, F_b]` along the `j`-th complement coordinate.
    pub mu: Vec<Vec<Vec<f64>>>,
    /// Cauchy basis as coefficient vectors over the frame.
    pub cauchy: Vec<Vec<f64>>,
}

impl LevelAtPoint {
    pub fn dim(&self) -> usize {
        self.jets.len()
    }

    pub fn cauchy_dim(&self) -> usize {
        self.cauchy.len()
    }

    /// Cauchy vectors at the point.
    pub fn cauchy_values(&self) -> Vec<Vec<f64>> {
        self.cauchy
            .iter()
            .map(|c| {
                let d = self.values[0].len();
                let mut v = vec![0.0; d];
                for (ca, f) in c.iter().zip(&self.values) {
                    for (vi, fi) in v.iter_mut().zip(f) {
                        *vi += ca * fi;
                    }
                }
                v
            })
            .collect()
    }

    fn pair(&self, a: usize, b: usize) -> Option<&FieldJet> {
        self.pairs
            .iter()
            .find(|(p, _)| *p == (a, b))
            .map(|(_, f)| f)
    }
}

/// The derived flag computed at a single point.
#[derive(Debug, Clone)]
pub struct FlagAtPoint {
    pub point: Vec<f64>,
    pub order: usize,
    pub levels: Vec<LevelAtPoint>,
    /// Index of the last level: `V^(k) = V^(k+1)`.
    pub k: usize,
    pub audit: Vec<RankDecision>,
}

impl FlagAtPoint {
    pub fn dims(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.dim()).collect()
    }

    pub fn cauchy_dims(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.cauchy_dim()).collect()
    }

    /// Structure coefficients of level `i` as jets at order `K − i − 1`: `mu[(a,b)][j]`.
    pub fn mu_jets(&self, i: usize) -> Result<Vec<Vec<Vec<JetScalar>>>, DistError> {
        let lvl = &self.levels[i];
        let m = lvl.dim();
        let d = self.point.len();
        let order = self
            .order
            .checked_sub(i + 1)
            .ok_or(JetError::InsufficientOrder {
                needed: i + 1,
                available: self.order,
            })?;
        let proto = JetScalar::constant(d, order, 0.0)?;
        let mut a: JetMatrix = vec![Vec::with_capacity(d); d];
        for f in &lvl.jets {
            for (row, c) in a.iter_mut().zip(f) {
                row.push(c.truncate(order)?);
            }
        }
        for &e in &lvl.complement {
            for (r, row) in a.iter_mut().enumerate() {
                row.push(proto.constant_like(if r == e { 1.0 } else { 0.0 }));
            }
        }
        let npairs = lvl.pairs.len();
        let mut b: JetMatrix = vec![Vec::with_capacity(npairs); d];
        for (_, f) in &lvl.pairs {
            for (row, c) in b.iter_mut().zip(f) {
                row.push(c.clone());
            }
        }
        let x = jet_solve(&a, &b)?;
        let q = lvl.complement.len();
        let mut mu = vec![vec![vec![proto.clone(); q]; m]; m];
        for (col, ((pa, pb), _)) in lvl.pairs.iter().enumerate() {
            for j in 0..q {
                let v = x[m + j][col].clone();
                mu[*pb][*pa][j] = -&v;
                mu[*pa][*pb][j] = v;
            }
        }
        Ok(mu)
    }

    /// Cauchy fields of level `i` as jets at order `K − i − 1`.
    pub fn cauchy_field_jets(
        &self,
        i: usize,
        policy: &RankPolicy,
    ) -> Result<Vec<FieldJet>, DistError> {
        let lvl = &self.levels[i];
        let m = lvl.dim();
        if lvl.pairs.is_empty() {
            let order = self.order.saturating_sub(i + 1);
            return lvl
                .jets
                .iter()
                .map(|f| {
                    f.iter()
                        .map(|c| c.truncate(order))
                        .collect::<Result<FieldJet, _>>()
                })
                .collect::<Result<_, _>>()
                .map_err(Into::into);
        }
        let mu = self.mu_jets(i)?;
        let q = lvl.complement.len();
        // rows (b, j), columns a
        let mut rows: Vec<Vec<JetScalar>> = Vec::with_capacity(m * q);
        for b in 0..m {
            for j in 0..q {
                rows.push((0..m).map(|a| mu[a][b][j].clone()).collect());
            }
        }
        let rank = m - lvl.cauchy_dim();
        let ker = jet_kernel(&rows, m, rank, policy)?;
        let frame: Vec<FieldJet> = lvl
            .jets
            .iter()
            .map(|f| f.iter().map(|c| c.truncate(self.order - i - 1)).collect())
            .collect::<Result<_, _>>()?;
        ker.iter().map(|c| combine_fields(c, &frame)).collect()
    }
}

/// Kernel of a jet matrix of known rank, via pivots chosen at the point.
///
/// Returns one vector per free column, normalised to 1 in that column.
pub fn jet_kernel(
    rows: &[Vec<JetScalar>],
    ncols: usize,
    rank: usize,
    policy: &RankPolicy,
) -> Result<Vec<Vec<JetScalar>>, DistError> {
    let nrows = rows.len();
    let proto = rows
        .first()
        .and_then(|r| r.first())
        .ok_or_else(|| DistError::Invalid("empty kernel matrix".into()))?
        .clone();
    let mut vals = DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j].value());
    let scale = vals.amax();
    let mut prow = Vec::new();
    let mut pcol = Vec::new();
    for _ in 0..rank {
        let mut best = (0.0, 0, 0);
        for i in 0..nrows {
            if prow.contains(&i) {
                continue;
            }
            for j in 0..ncols {
                if pcol.contains(&j) {
                    continue;
                }
                if vals[(i, j)].abs() > best.0 {
                    best = (vals[(i, j)].abs(), i, j);
                }
            }
        }
        if !(best.0 > policy.tol_rel * scale) {
            return Err(DistError::Invalid(
                "kernel pivot vanished below the decided rank".into(),
            ));
        }
        let (_, pi, pj) = best;
        let piv = vals[(pi, pj)];
        for i in 0..nrows {
            if i != pi {
                let f = vals[(i, pj)] / piv;
                for j in 0..ncols {
                    vals[(i, j)] -= f * vals[(pi, j)];
                }
            }
        }
        prow.push(pi);
        pcol.push(pj);
    }
    let free: Vec<usize> = (0..ncols).filter(|j| !pcol.contains(j)).collect();
    if free.is_empty() {
        return Ok(Vec::new());
    }
    let a: JetMatrix = prow
        .iter()
        .map(|&i| pcol.iter().map(|&j| rows[i][j].clone()).collect())
        .collect();
    let b: JetMatrix = prow
        .iter()
        .map(|&i| free.iter().map(|&f| rows[i][f].clone()).collect())
        .collect();
    let x = if rank > 0 {
        jet_solve(&a, &b)?
    } else {
        Vec::new()
    };
    let mut out = Vec::with_capacity(free.len());
    for (fi, &f) in free.iter().enumerate() {
        let mut v = vec![proto.zero_like(); ncols];
        v[f] = proto.constant_like(1.0);
        for (pi, &c) in pcol.iter().enumerate() {
            v[c] = -&x[pi][fi];
        }
        out.push(v);
    }
    // rows outside the pivots must be annihilated too
    for row in rows {
        let r: f64 = out
            .iter()
            .map(|v| {
                row.iter()
                    .zip(v)
                    .map(|(a, b)| a.value() * b.value())
                    .sum::<f64>()
                    .abs()
            })
            .fold(0.0, f64::max);
        let s = row.iter().map(|a| a.value().abs()).fold(0.0, f64::max);
        if r > 1e-6 * s.max(scale) {
            return Err(DistError::Invalid(format!(
                "kernel of decided rank {rank} leaves residual {r:.3e}"
            )));
        }
    }
    Ok(out)
}

/// Coordinate indices completing `frame` to a basis, picked by largest residual.
pub fn complement_coords(frame: &[Vec<f64>], d: usize) -> Vec<usize> {
    let mut q: Vec<DVector<f64>> = Vec::new();
    let orth = |q: &Vec<DVector<f64>>, v: &DVector<f64>| {
        let mut r = v.clone();
        for _ in 0..2 {
            for u in q {
                let c = u.dot(&r);
                r -= u * c;
            }
        }
        r
    };
    for f in frame {
        let r = orth(&q, &DVector::from_column_slice(f));
        let n = r.norm();
        if n > 1e-12 {
            q.push(r / n);
        }
    }
    let mut picked = Vec::new();
    while q.len() < d {
        let mut best = (-1.0, 0, DVector::zeros(d));
        for j in 0..d {
            if picked.contains(&j) {
                continue;
            }
            let r = orth(
                &q,
                &DVector::from_fn(d, |i, _| if i == j { 1.0 } else { 0.0 }),
            );
            let n = r.norm();
            if n > best.0 {
                best = (n, j, r);
            }
        }
        picked.push(best.1);
        q.push(best.2.clone() / best.0);
    }
    picked.sort_unstable();
    picked
}

/// Structure coefficients of a frame: `mu[a][b][j]` from bracket values.
fn structure_values(
    frame: &[Vec<f64>],
    complement: &[usize],
    pairs: &[((usize, usize), FieldJet)],
) -> Result<Vec<Vec<Vec<f64>>>, DistError> {
    let m = frame.len();
    let d = frame[0].len();
    let q = complement.len();
    let a = DMatrix::from_fn(d, d, |i, j| {
        if j < m {
            frame[j][i]
        } else if complement[j - m] == i {
            1.0
        } else {
            0.0
        }
    });
    let lu = a.lu();
    let mut mu = vec![vec![vec![0.0; q]; m]; m];
    for ((pa, pb), f) in pairs {
        let b = DVector::from_vec(values(f));
        let x = lu.solve(&b).ok_or(JetError::SingularEvaluation {
            op: "frame with complement",
        })?;
        for j in 0..q {
            mu[*pa][*pb][j] = x[m + j];
            mu[*pb][*pa][j] = -x[m + j];
        }
    }
    Ok(mu)
}

fn cauchy_from_mu(
    mu: &[Vec<Vec<f64>>],
    policy: &RankPolicy,
    context: &str,
) -> Result<(Vec<Vec<f64>>, RankDecision), DistError> {
    let m = mu.len();
    let q = mu.first().and_then(|r| r.first()).map_or(0, |v| v.len());
    let cols: Vec<Vec<f64>> = (0..m)
        .map(|a| {
            let mut c = Vec::with_capacity(m * q);
            for b in 0..m {
                c.extend_from_slice(&mu[a][b]);
            }
            c
        })
        .collect();
    if q == 0 {
        let eye = (0..m)
            .map(|a| (0..m).map(|b| if a == b { 1.0 } else { 0.0 }).collect())
            .collect();
        return Ok((
            eye,
            RankDecision {
                context: context.into(),
                rank: 0,
                gap: f64::INFINITY,
            },
        ));
    }
    Ok(kernel(&cols, policy, context)?)
}

/// Derived flag at one point with jets of order `order`.
///
/// `complements` fixes the complement coordinates per level (as chosen at the basepoint).
pub fn flag_at_point(
    dist: &Distribution,
    point: &[f64],
    order: usize,
    policy: &RankPolicy,
    complements: Option<&[Vec<usize>]>,
) -> Result<FlagAtPoint, DistError> {
    let d = dist.dim();
    let mut ctx = EvalContext::new(point);
    let gens = dist.eval_generators(&mut ctx, order)?;
    let gvals: Vec<Vec<f64>> = gens.iter().map(|g| values(g)).collect();
    let mut audit = Vec::new();
    let r0 = numerical_rank(&gvals, policy, "generators")?;
    if r0.rank < gens.len() {
        return Err(DistError::DependentGenerators {
            rank: r0.rank,
            count: gens.len(),
        });
    }
    audit.push(r0);
    let mut words: Vec<Word> = (0..gens.len()).map(Word::Gen).collect();
    let mut jets = gens;
    let mut vals = gvals;
    let mut levels: Vec<LevelAtPoint> = Vec::new();
    loop {
        let i = levels.len();
        let complement = match complements.and_then(|c| c.get(i)) {
            Some(c) => c.clone(),
            None => complement_coords(&vals, d),
        };
        if complement.len() + vals.len() != d {
            return Err(DistError::NonRegular {
                what: format!("dim V^({i})"),
                values: vec![d - complement.len(), vals.len()],
            });
        }
        if jets.len() == d {
            levels.push(LevelAtPoint {
                cauchy: (0..d)
                    .map(|a| (0..d).map(|b| if a == b { 1.0 } else { 0.0 }).collect())
                    .collect(),
                words,
                jets,
                values: vals,
                complement,
                pairs: Vec::new(),
                mu: Vec::new(),
            });
            break;
        }
        if order <= i {
            return Err(JetError::InsufficientOrder {
                needed: i + 1,
                available: order,
            }
            .into());
        }
        let m = jets.len();
        let mut pairs = Vec::with_capacity(m * (m - 1) / 2);
        for a in 0..m {
            for b in a + 1..m {
                pairs.push(((a, b), bracket_jets(&jets[a], &jets[b])?));
            }
        }
        let mu = structure_values(&vals, &complement, &pairs)?;
        let (cauchy, dec) = cauchy_from_mu(&mu, policy, &format!("Cauchy bundle of V^({i})"))?;
        audit.push(dec);

        let mut cand: Vec<(usize, usize, usize)> = pairs
            .iter()
            .enumerate()
            .map(|(n, ((a, b), _))| (1 + words[*a].depth().max(words[*b].depth()), n, 0))
            .collect();
        cand.sort();
        let mut next_vals = vals.clone();
        let mut accepted = Vec::new();
        for (_, n, _) in cand {
            if next_vals.len() == d {
                break;
            }
            let v = values(&pairs[n].1);
            let mut trial = next_vals.clone();
            trial.push(v.clone());
            let dec = numerical_rank(
                &trial,
                policy,
                &format!("V^({}) candidate {}", i + 1, {
                    let ((a, b), _) = pairs[n];
                    Word::Br(Box::new(words[a].clone()), Box::new(words[b].clone()))
                }),
            )?;
            if dec.rank == trial.len() {
                next_vals = trial;
                accepted.push(n);
            }
            audit.push(dec);
        }
        let stabilized = accepted.is_empty();
        let next_order = order - i - 1;
        let mut next_words = words.clone();
        let mut next_jets: Vec<FieldJet> = jets
            .iter()
            .map(|f| f.iter().map(|c| c.truncate(next_order)).collect())
            .collect::<Result<_, _>>()?;
        for &n in &accepted {
            let ((a, b), _) = pairs[n];
            next_words.push(Word::Br(
                Box::new(words[a].clone()),
                Box::new(words[b].clone()),
            ));
            next_jets.push(pairs[n].1.clone());
        }
        levels.push(LevelAtPoint {
            words,
            jets,
            values: vals,
            complement,
            pairs,
            mu,
            cauchy,
        });
        if stabilized {
            break;
        }
        words = next_words;
        jets = next_jets;
        vals = next_vals;
    }
    let k = levels.len() - 1;
    Ok(FlagAtPoint {
        point: point.to_vec(),
        order,
        levels,
        k,
        audit,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagLevel {
    pub level: usize,
    pub basis: Vec<String>,
    pub dim: usize,
    pub cauchy_dim: usize,
    pub cauchy_basis: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FlagReport {
    pub levels: Vec<FlagLevel>,
    pub derived_type: Vec<[usize; 2]>,
    pub derived_length: usize,
    pub signature: Vec<usize>,
    pub reaches_tangent_bundle: bool,
    pub regular: bool,
    pub jet_order: usize,
    pub sample_points: Vec<Vec<f64>>,
    pub tolerance_audit: Vec<RankDecision>,
    #[serde(skip)]
    pub points: Vec<FlagAtPoint>,
}

impl FlagReport {
    pub fn dims(&self) -> Vec<usize> {
        self.derived_type.iter().map(|t| t[0]).collect()
    }

    pub fn basepoint_flag(&self) -> &FlagAtPoint {
        &self.points[0]
    }

    /// Smallest singular-value gap across all audited decisions.
    pub fn min_gap(&self) -> f64 {
        self.tolerance_audit
            .iter()
            .map(|d| d.gap)
            .fold(f64::INFINITY, f64::min)
    }
}

fn signature_of(
    f: &FlagAtPoint,
    policy: &RankPolicy,
) -> Result<(Vec<usize>, Vec<RankDecision>), DistError> {
    let mut sig = Vec::new();
    let mut audit = Vec::new();
    let k = f.k;
    for j in 1..=k {
        if j < k {
            let ch = f.levels[j].cauchy_values();
            let (dim, decs) = intersection_dim(
                &ch,
                &f.levels[j - 1].values,
                policy,
                &format!("ch V^({j}) ∩ V^({})", j - 1),
            )?;
            audit.extend(decs);
            sig.push(f.levels[j].cauchy_dim() - dim);
        } else {
            sig.push(f.levels[k].dim() - f.levels[k - 1].dim());
        }
    }
    Ok((sig, audit))
}

fn run_with_escalation(
    dist: &Distribution,
    cfg: &FlagConfig,
    min_extra: usize,
) -> Result<FlagAtPoint, DistError> {
    let mut order = cfg.jet_order.unwrap_or(cfg.start_order).max(1);
    loop {
        match flag_at_point(dist, &dist.basepoint, order, &cfg.policy, None) {
            Ok(f) => {
                if cfg.jet_order.is_none() && order < f.k + min_extra {
                    order = f.k + min_extra;
                    continue;
                }
                return Ok(f);
            }
            Err(DistError::Jet(JetError::InsufficientOrder { .. }))
                if cfg.jet_order.is_none() && order < cfg.max_order =>
            {
                order += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Derived flag at the basepoint, checked for regularity at seeded perturbations.
///
/// Without a fixed jet order the order escalates until the flag closes and is then
/// raised to `k + 1`, which leaves one order for brackets of level-`k−1` structures.
pub fn derived_flag(dist: &Distribution, cfg: &FlagConfig) -> Result<FlagReport, DistError> {
    let base = run_with_escalation(dist, cfg, 1)?;
    let complements: Vec<Vec<usize>> = base.levels.iter().map(|l| l.complement.clone()).collect();
    let pts = sample_points(&dist.basepoint, cfg.samples, cfg.perturbation, cfg.seed);
    let mut audit = base.audit.clone();
    let (signature, sa) = signature_of(&base, &cfg.policy)?;
    audit.extend(sa);
    let mut points = vec![base];
    for p in &pts[1..] {
        let f = flag_at_point(dist, p, points[0].order, &cfg.policy, Some(&complements))?;
        let (sig, sa) = signature_of(&f, &cfg.policy)?;
        audit.extend(f.audit.iter().cloned());
        audit.extend(sa);
        for (what, a, b) in [
            ("derived dims", points[0].dims(), f.dims()),
            ("Cauchy dims", points[0].cauchy_dims(), f.cauchy_dims()),
            ("signature", signature.clone(), sig),
        ] {
            if a != b {
                return Err(DistError::NonRegular {
                    what: what.into(),
                    values: a.into_iter().chain(b).collect(),
                });
            }
        }
        points.push(f);
    }
    let base = &points[0];
    let labels = &dist.labels;
    let levels = base
        .levels
        .iter()
        .enumerate()
        .map(|(i, l)| FlagLevel {
            level: i,
            basis: l.words.iter().map(|w| w.render(labels)).collect(),
            dim: l.dim(),
            cauchy_dim: l.cauchy_dim(),
            cauchy_basis: l.cauchy.clone(),
        })
        .collect();
    let derived_type = base
        .levels
        .iter()
        .map(|l| [l.dim(), l.cauchy_dim()])
        .collect();
    Ok(FlagReport {
        levels,
        derived_type,
        derived_length: base.k,
        signature,
        reaches_tangent_bundle: base.levels[base.k].dim() == dist.dim(),
        regular: true,
        jet_order: base.order,
        sample_points: pts,
        tolerance_audit: audit,
        points,
    })
}

impl LevelAtPoint {
    /// Bracket jet of frame fields `a` and `b` (antisymmetric), if computed.
    pub fn bracket(&self, a: usize, b: usize) -> Option<FieldJet> {
        if a < b {
            self.pair(a, b).cloned()
        } else if b < a {
            self.pair(b, a).map(|f| f.iter().map(|c| -c).collect())
        } else {
            self.pairs
                .first()
                .map(|(_, f)| f.iter().map(|c| c.zero_like()).collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprdsl;

    fn dist(chart: &[&str], gens: &[&[&str]], base: &[f64]) -> Distribution {
        let gens: Vec<VectorField> = gens
            .iter()
            .map(|g| VectorField::Components(exprdsl::parse_all(g, chart).unwrap()))
            .collect();
        let labels = (0..gens.len()).map(|i| format!("X{}", i + 1)).collect();
        Distribution::new(
            chart.iter().map(|s| s.to_string()).collect(),
            gens,
            labels,
            base.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn engel_flag() {
        // contact system on J^2(R,R): x, y, p, q
        let d = dist(
            &["x", "y", "p", "q"],
            &[&["1", "p", "q", "0"], &["0", "0", "0", "1"]],
            &[0.1, 0.2, 0.3, 0.4],
        );
        let r = derived_flag(&d, &FlagConfig::default()).unwrap();
        assert_eq!(r.derived_type, vec![[2, 0], [3, 1], [4, 4]]);
        assert_eq!(r.signature, vec![0, 1]);
        assert!(r.min_gap() >= 1e3);
    }

    #[test]
    fn integrable_plane_field() {
        let d = dist(
            &["x", "y", "z"],
            &[&["1", "0", "0"], &["0", "1", "0"]],
            &[0.0, 0.0, 0.0],
        );
        let r = derived_flag(&d, &FlagConfig::default()).unwrap();
        assert_eq!(r.derived_type, vec![[2, 2]]);
        assert_eq!(r.derived_length, 0);
        assert!(!r.reaches_tangent_bundle);
    }

    #[test]
    fn dependent_generators_are_rejected() {
        let d = dist(&["x", "y"], &[&["1", "0"], &["2", "0"]], &[0.0, 0.0]);
        assert!(matches!(
            derived_flag(&d, &FlagConfig::default()),
            Err(DistError::DependentGenerators { rank: 1, count: 2 })
        ));
    }

    #[test]
    fn jet_kernel_matches_value_kernel() {
        let p = [0.3, -0.2];
        let xs = JetScalar::seed_all(&p, 2).unwrap();
        // rows [x, y, x+y] and [2x, 2y, 2x+2y]: rank 1
        let r1 = vec![xs[0].clone(), xs[1].clone(), &xs[0] + &xs[1]];
        let r2: Vec<JetScalar> = r1.iter().map(|c| c.scale(2.0)).collect();
        let k = jet_kernel(&[r1.clone(), r2], 3, 1, &RankPolicy::default()).unwrap();
        assert_eq!(k.len(), 2);
        for v in &k {
            let s = r1
                .iter()
                .zip(v)
                .fold(xs[0].zero_like(), |acc, (a, b)| &acc + &(a * b));
            assert!(s.max_abs() < 1e-12);
        }
    }

    #[test]
    fn words_render_with_labels() {
        let w = Word::Br(
            Box::new(Word::Gen(0)),
            Box::new(Word::Br(Box::new(Word::Gen(0)), Box::new(Word::Gen(1)))),
        );
        assert_eq!(w.render(&["X".into(), "Y".into()]), "[X,[X,Y]]");
        assert_eq!(w.depth(), 2);
    }
}
