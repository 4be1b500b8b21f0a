//! Ready-made geometries with their expected flag data.

use crate::distribution::{Distribution, VectorField};
use crate::exprdsl;

mod registry;
mod verify;

pub use registry::{
    euclidean4_test_curves, geodesic_semicircles, get_fixture, h3_test_curves, Expected, Fixture,
    FixtureError, FixtureKind, DEFAULT_SET, EXPENSIVE_SET,
};
pub use verify::{
    lie_table_residual, verify_fixture, verify_fixture_with, CheckEntry, FixtureReport,
    VerifyConfig,
};

fn chart(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Field `Σ coef ∂_var` over `vars`, from `(var, coefficient)` pairs.
pub(crate) fn sparse_field(vars: &[&str], terms: &[(&str, &str)]) -> VectorField {
    let comps: Vec<String> = vars
        .iter()
        .map(|v| {
            let parts: Vec<&str> = terms
                .iter()
                .filter(|(w, _)| w == v)
                .map(|(_, c)| *c)
                .collect();
            if parts.is_empty() {
                "0".to_string()
            } else {
                parts
                    .iter()
                    .map(|p| format!("({p})"))
                    .collect::<Vec<_>>()
                    .join("+")
            }
        })
        .collect();
    VectorField::Components(exprdsl::parse_all(&comps, vars).expect("fixture expressions parse"))
}

pub const EQUIAFFINE_PLANE_CHART: [&str; 6] = ["x", "y", "a", "b", "c", "kappa"];

/// `{a∂x + c∂y + b∂a + κa∂b + (1+bc)/a ∂c, ∂κ}` on the reduced equi-affine plane system.
pub fn equiaffine_plane() -> Distribution {
    let v = &EQUIAFFINE_PLANE_CHART;
    let drift = sparse_field(
        v,
        &[
            ("x", "a"),
            ("y", "c"),
            ("a", "b"),
            ("b", "kappa*a"),
            ("c", "(1+b*c)/a"),
        ],
    );
    let top = sparse_field(v, &[("kappa", "1")]);
    Distribution::new(
        chart(v),
        vec![drift, top],
        vec!["X".into(), "d_kappa".into()],
        vec![0.1, 0.2, 1.1, 0.3, -0.2, 0.5],
    )
    .expect("valid fixture")
}

pub const EQUIAFFINE_SPACE_CHART: [&str; 13] = [
    "x", "y", "z", "a1", "a2", "a3", "a4", "a5", "a6", "a7", "a8", "kappa1", "kappa2",
];

/// The unit-determinant completion `a9`.
pub const A9: &str = "(1-a2*a6*a7+a1*a6*a8-a3*a4*a8+a3*a5*a7)/(a1*a5-a4*a2)";

/// The thirteen fields `v1 … v13` of the equi-affine space chart.
pub fn equiaffine_space_frame() -> Vec<VectorField> {
    let v = &EQUIAFFINE_SPACE_CHART;
    let a9 = A9;
    let f = |t: &[(&str, &str)]| sparse_field(v, t);
    vec![
        f(&[("x", "a1"), ("y", "a4"), ("z", "a7")]),
        f(&[("x", "a2"), ("y", "a5"), ("z", "a8")]),
        f(&[("x", "a3"), ("y", "a6"), ("z", a9)]),
        f(&[
            ("a1", "a1"),
            ("a3", "-a3"),
            ("a4", "a4"),
            ("a6", "-a6"),
            ("a7", "a7"),
        ]),
        f(&[("a1", "a2"), ("a4", "a5"), ("a7", "a8")]),
        f(&[("a1", "a3"), ("a4", "a6"), ("a7", a9)]),
        f(&[("a2", "a1"), ("a5", "a4"), ("a8", "a7")]),
        f(&[
            ("a2", "a2"),
            ("a3", "-a3"),
            ("a5", "a5"),
            ("a6", "-a6"),
            ("a8", "a8"),
        ]),
        f(&[("a2", "a3"), ("a5", "a6"), ("a8", a9)]),
        f(&[("a3", "a1"), ("a6", "a4")]),
        f(&[("a3", "a2"), ("a6", "a5")]),
        f(&[("kappa1", "1")]),
        f(&[("kappa2", "1")]),
    ]
}

/// `{v1 + v5 + v9 + κ1(v7 + 3v11) + κ2 v10, ∂κ1, ∂κ2}`.
pub fn equiaffine_space() -> Distribution {
    let v = &EQUIAFFINE_SPACE_CHART;
    let fr = equiaffine_space_frame();
    let one = || exprdsl::parse("1", v).expect("constant");
    let e = |s: &str| exprdsl::parse(s, v).expect("fixture expression");
    let drift = VectorField::Sum(vec![
        (one(), fr[0].clone()),
        (one(), fr[4].clone()),
        (one(), fr[8].clone()),
        (e("kappa1"), fr[6].clone()),
        (e("3*kappa1"), fr[10].clone()),
        (e("kappa2"), fr[9].clone()),
    ]);
    Distribution::new(
        chart(v),
        vec![drift, fr[11].clone(), fr[12].clone()],
        vec!["X".into(), "v12".into(), "v13".into()],
        vec![
            0.1, 0.2, -0.3, 1.1, 0.2, -0.1, 0.3, 0.9, 0.25, -0.2, 0.15, 0.4, -0.3,
        ],
    )
    .expect("valid fixture")
}

/// The contact system on `J^k(R, R^q)` in coordinates `x, z^j_m` (`m ≤ k`, grouped by order).
pub fn canonical_contact(k: usize, q: usize) -> Distribution {
    let mut names = vec!["x".to_string()];
    for m in 0..=k {
        for j in 1..=q {
            names.push(format!("z{j}_{m}"));
        }
    }
    let vars: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    let mut drift: Vec<(&str, String)> = vec![("x", "1".into())];
    for m in 0..k {
        for j in 0..q {
            drift.push((vars[1 + m * q + j], vars[1 + (m + 1) * q + j].to_string()));
        }
    }
    let drift_terms: Vec<(&str, &str)> = drift.iter().map(|(a, b)| (*a, b.as_str())).collect();
    let mut gens = vec![sparse_field(&vars, &drift_terms)];
    let mut labels = vec!["D".to_string()];
    for j in 0..q {
        let top = vars[1 + k * q + j];
        gens.push(sparse_field(&vars, &[(top, "1")]));
        labels.push(format!("d_{top}"));
    }
    let base: Vec<f64> = (0..names.len())
        .map(|i| 0.1 * (i as f64 + 1.0) * if i % 2 == 0 { 1.0 } else { -1.0 })
        .collect();
    Distribution::new(names, gens, labels, base).expect("valid fixture")
}

/// `[v_i, v_j]` for the eleven group fields `v1 … v11`, row `i`, column `j`.
pub const LIE_TABLE: [[&str; 11]; 11] = [
    ["0", "0", "0", "-v1", "-v2", "-v3", "0", "0", "0", "0", "0"],
    ["0", "0", "0", "0", "0", "0", "-v1", "-v2", "-v3", "0", "0"],
    ["0", "0", "0", "v3", "0", "0", "0", "v3", "0", "-v1", "-v2"],
    [
        "v1", "0", "-v3", "0", "-v5", "-2v6", "v7", "0", "-v9", "2v10", "v11",
    ],
    [
        "v2", "0", "0", "v5", "0", "0", "v8-v4", "-v5", "-v6", "v11", "0",
    ],
    [
        "v3", "0", "0", "2v6", "0", "0", "v9", "v6", "0", "-v4", "-v5",
    ],
    [
        "0", "v1", "0", "-v7", "v4-v8", "-v9", "0", "v7", "0", "0", "v10",
    ],
    [
        "0", "v2", "-v3", "0", "v5", "-v6", "-v7", "0", "-2v9", "v10", "2v11",
    ],
    [
        "0", "v3", "0", "v9", "v6", "0", "0", "2v9", "0", "-v7", "-v8",
    ],
    [
        "0", "0", "v1", "-2v10", "-v11", "v4", "0", "-v10", "v7", "0", "0",
    ],
    [
        "0", "0", "v2", "-v11", "0", "v5", "-v10", "-2v11", "v8", "0", "0",
    ],
];

/// `"v8-v4"` → `[(1, 7), (-1, 3)]` (coefficient, 0-based field index).
pub(crate) fn table_entry(s: &str) -> Vec<(f64, usize)> {
    if s == "0" {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut rest = s;
    while !rest.is_empty() {
        let sign = if rest.starts_with('-') { -1.0 } else { 1.0 };
        rest = rest.trim_start_matches(['-', '+']);
        let v = rest.find('v').unwrap();
        let coef: f64 = if v == 0 {
            1.0
        } else {
            rest[..v].parse().unwrap()
        };
        let end = rest[v + 1..]
            .find(['-', '+'])
            .map_or(rest.len(), |e| e + v + 1);
        let idx: usize = rest[v + 1..end].parse().unwrap();
        out.push((sign * coef, idx - 1));
        rest = &rest[end..];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::{derived_flag, recognize, FlagConfig};

    #[test]
    fn space_frame_is_a_frame() {
        let d = equiaffine_space();
        let vals: Vec<Vec<f64>> = equiaffine_space_frame()
            .iter()
            .map(|f| f.value_at(&d.basepoint).unwrap())
            .collect();
        let r = crate::rank::numerical_rank(&vals, &Default::default(), "frame").unwrap();
        assert_eq!(r.rank, 13);
    }

    #[test]
    fn space_exports_and_reloads() {
        let d = equiaffine_space();
        let doc = d.to_doc().expect("sum of component fields flattens");
        let back = Distribution::from_doc(&doc).unwrap();
        let p = &d.basepoint;
        for (a, b) in d.generators.iter().zip(&back.generators) {
            let (u, v) = (a.value_at(p).unwrap(), b.value_at(p).unwrap());
            for (x, y) in u.iter().zip(&v) {
                assert!((x - y).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn plane_derived_type() {
        let r = derived_flag(&equiaffine_plane(), &FlagConfig::default()).unwrap();
        assert_eq!(r.derived_type, vec![[2, 0], [3, 1], [4, 2], [5, 3], [6, 6]]);
    }

    #[test]
    fn contact_model_is_uniform() {
        let c = recognize(&canonical_contact(3, 2), &FlagConfig::default()).unwrap();
        assert_eq!(c.derived_type, vec![[3, 0], [5, 2], [7, 4], [9, 9]]);
        assert_eq!(c.signature, vec![0, 0, 2]);
        assert!(c.uniform, "{:?}", c.hypothesis_checks);
    }

    #[test]
    fn space_is_uniform() {
        let c = recognize(&equiaffine_space(), &FlagConfig::default()).unwrap();
        assert_eq!(
            c.derived_type,
            vec![[3, 0], [5, 2], [7, 4], [9, 6], [11, 8], [13, 13]]
        );
        assert_eq!(c.signature, vec![0, 0, 0, 0, 2]);
        assert!(c.uniform, "{:?}", c.hypothesis_checks);
    }

    #[test]
    fn space_frame_satisfies_lie_table() {
        let fr = equiaffine_space_frame();
        let d = equiaffine_space();
        for p in crate::distribution::sample_points(&d.basepoint, 2, 0.05, 11) {
            let vals: Vec<Vec<f64>> = fr.iter().map(|f| f.value_at(&p).unwrap()).collect();
            for (i, row) in LIE_TABLE.iter().enumerate() {
                for (j, entry) in row.iter().enumerate() {
                    let br = fr[i].bracket(&fr[j]).value_at(&p).unwrap();
                    let mut expect = vec![0.0; 13];
                    for (c, k) in table_entry(entry) {
                        for (e, v) in expect.iter_mut().zip(&vals[k]) {
                            *e += c * v;
                        }
                    }
                    for (a, b) in br.iter().zip(&expect) {
                        assert!((a - b).abs() < 1e-10, "[v{},v{}]", i + 1, j + 1);
                    }
                }
            }
        }
    }
}
