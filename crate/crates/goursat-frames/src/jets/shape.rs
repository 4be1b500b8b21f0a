//! Monomial layout shared by every jet of a given `(dim, order)`.
//!
//! Monomials are stored in graded order: all degree-0 terms, then degree 1,
//! and so on, with a fixed ordering inside each degree. Because the layout of
//! degrees `0..=k` does not depend on the truncation order, truncating a jet is
//! a prefix copy.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

use super::JetError;

/// Default ceiling on the number of coefficients a single jet may carry.
///
/// Flag computations keep a few thousand jets alive at once, so this also bounds memory:
/// at 10⁵ coefficients the 36-dimensional n = 6 bundle peaks below 1 GB and stops with
/// a budget error at order 5, where 2·10⁶ ran out of memory.
pub const DEFAULT_JET_BUDGET: usize = 100_000;

static JET_BUDGET: AtomicUsize = AtomicUsize::new(DEFAULT_JET_BUDGET);

/// Change the coefficient ceiling applied when new jet shapes are created.
pub fn set_jet_budget(max_coefficients: usize) {
    JET_BUDGET.store(max_coefficients, Ordering::Relaxed);
}

/// Current coefficient ceiling.
pub fn jet_budget() -> usize {
    JET_BUDGET.load(Ordering::Relaxed)
}

/// Number of monomials in `dim` variables with total degree at most `order`.
pub fn monomial_count(dim: usize, order: usize) -> usize {
    // C(dim + order, order), computed without overflow for the sizes we allow.
    let mut acc: u128 = 1;
    for i in 1..=order as u128 {
        acc = acc * (dim as u128 + i) / i;
        if acc > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    acc as usize
}

pub(crate) struct MulTable {
    row_off: Vec<usize>,
    entries: Vec<u32>,
}

pub(crate) struct Shape {
    pub dim: usize,
    pub order: usize,
    /// `upto[k]` is the number of monomials of degree `<= k`.
    pub upto: Vec<usize>,
    pub degree: Vec<u8>,
    exps: Vec<u8>,
    /// `inc[v][i]` is the index of monomial `i` times `x_v`, or `u32::MAX` at top degree.
    inc: Vec<Vec<u32>>,
    /// Index of a lower monomial `p` and variable `v` with `mono(i) = mono(p) * x_v`.
    parent: Vec<(u32, u16)>,
    lookup: HashMap<Vec<u8>, usize>,
    mul: OnceLock<MulTable>,
}

type ShapeCache = Mutex<HashMap<(usize, usize), Arc<Shape>>>;

fn cache() -> &'static ShapeCache {
    static CACHE: OnceLock<ShapeCache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl Shape {
    pub fn get(dim: usize, order: usize) -> Result<Arc<Shape>, JetError> {
        let key = (dim, order);
        if let Some(s) = cache().lock().expect("shape cache poisoned").get(&key) {
            return Ok(s.clone());
        }
        let len = monomial_count(dim, order);
        let budget = jet_budget();
        if len > budget || order > 250 || dim > u16::MAX as usize {
            return Err(JetError::Budget {
                dim,
                order,
                coefficients: len,
                budget,
            });
        }
        let shape = Arc::new(Shape::build(dim, order));
        let mut guard = cache().lock().expect("shape cache poisoned");
        Ok(guard.entry(key).or_insert(shape).clone())
    }

    fn build(dim: usize, order: usize) -> Shape {
        let mut monos: Vec<Vec<u8>> = Vec::new();
        let mut upto = Vec::with_capacity(order + 1);
        for deg in 0..=order {
            let mut cur = vec![0u8; dim];
            push_degree(&mut monos, &mut cur, 0, deg);
            upto.push(monos.len());
        }
        let len = monos.len();
        let mut lookup = HashMap::with_capacity(len);
        for (i, m) in monos.iter().enumerate() {
            lookup.insert(m.clone(), i);
        }
        let degree: Vec<u8> = monos
            .iter()
            .map(|m| m.iter().map(|&e| e as u32).sum::<u32>() as u8)
            .collect();
        let mut inc = vec![vec![u32::MAX; len]; dim];
        for (i, m) in monos.iter().enumerate() {
            if (degree[i] as usize) < order {
                let mut up = m.clone();
                for (v, row) in inc.iter_mut().enumerate() {
                    up[v] += 1;
                    row[i] = lookup[&up] as u32;
                    up[v] -= 1;
                }
            }
        }
        let mut parent = vec![(0u32, 0u16); len];
        for (i, m) in monos.iter().enumerate().skip(1) {
            let v = m.iter().position(|&e| e > 0).expect("nonconstant monomial");
            let mut down = m.clone();
            down[v] -= 1;
            parent[i] = (lookup[&down] as u32, v as u16);
        }
        let exps = monos.concat();
        Shape {
            dim,
            order,
            upto,
            degree,
            exps,
            inc,
            parent,
            lookup,
            mul: OnceLock::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.degree.len()
    }

    pub fn exponents(&self, i: usize) -> &[u8] {
        &self.exps[i * self.dim..(i + 1) * self.dim]
    }

    pub fn index_of(&self, exps: &[u8]) -> Option<usize> {
        self.lookup.get(exps).copied()
    }

    pub fn inc(&self, v: usize, i: usize) -> u32 {
        self.inc[v][i]
    }

    pub fn parent(&self, i: usize) -> (usize, usize) {
        let (p, v) = self.parent[i];
        (p as usize, v as usize)
    }

    /// Count of monomials whose degree does not exceed `k`.
    pub fn count_upto(&self, k: usize) -> usize {
        self.upto[k.min(self.order)]
    }

    pub(crate) fn mul_table(&self) -> (&[usize], &[u32]) {
        let t = self.mul.get_or_init(|| self.build_mul());
        (&t.row_off, &t.entries)
    }

    fn build_mul(&self) -> MulTable {
        let len = self.len();
        let mut row_off = Vec::with_capacity(len + 1);
        let mut total = 0usize;
        for i in 0..len {
            row_off.push(total);
            total += self.upto[self.order - self.degree[i] as usize];
        }
        row_off.push(total);
        let mut entries = vec![0u32; total];
        // Row 0 is the identity; each further row is its parent's row shifted by one variable.
        for j in 0..self.upto[self.order] {
            entries[j] = j as u32;
        }
        for i in 1..len {
            let (p, v) = self.parent(i);
            let width = self.upto[self.order - self.degree[i] as usize];
            let (head, tail) = entries.split_at_mut(row_off[i]);
            let prow = &head[row_off[p]..];
            for j in 0..width {
                tail[j] = self.inc[v][prow[j] as usize];
            }
        }
        MulTable { row_off, entries }
    }
}

fn push_degree(out: &mut Vec<Vec<u8>>, cur: &mut [u8], var: usize, remaining: usize) {
    if var + 1 == cur.len() {
        cur[var] = remaining as u8;
        out.push(cur.to_vec());
        cur[var] = 0;
        return;
    }
    if cur.is_empty() {
        if remaining == 0 {
            out.push(Vec::new());
        }
        return;
    }
    for e in (0..=remaining).rev() {
        cur[var] = e as u8;
        push_degree(out, cur, var + 1, remaining - e);
    }
    cur[var] = 0;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_match_binomials() {
        assert_eq!(monomial_count(3, 2), 10);
        assert_eq!(monomial_count(1, 5), 6);
        assert_eq!(monomial_count(0, 4), 1);
        let s = Shape::get(3, 2).unwrap();
        assert_eq!(s.len(), 10);
        assert_eq!(s.upto, vec![1, 4, 10]);
    }

    #[test]
    fn lower_orders_are_prefixes() {
        let hi = Shape::get(4, 4).unwrap();
        let lo = Shape::get(4, 2).unwrap();
        for i in 0..lo.len() {
            assert_eq!(hi.exponents(i), lo.exponents(i));
        }
    }

    #[test]
    fn mul_table_adds_exponents() {
        let s = Shape::get(3, 3).unwrap();
        let (off, ent) = s.mul_table();
        for i in 0..s.len() {
            let width = s.count_upto(s.order - s.degree[i] as usize);
            for j in 0..width {
                let k = ent[off[i] + j] as usize;
                let sum: Vec<u8> = s
                    .exponents(i)
                    .iter()
                    .zip(s.exponents(j))
                    .map(|(a, b)| a + b)
                    .collect();
                assert_eq!(s.exponents(k), &sum[..]);
            }
        }
    }

    #[test]
    fn budget_is_enforced() {
        let err = Shape::get(60, 12).err().unwrap();
        assert!(matches!(err, JetError::Budget { .. }));
    }
}
