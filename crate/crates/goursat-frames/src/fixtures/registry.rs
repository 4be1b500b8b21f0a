use serde::Serialize;
use thiserror::Error;

use crate::cartan::{build_riemannian_bundle, CartanError, MetricSpec, RiemannianBundle};
use crate::distribution::{Distribution, VectorField};
use crate::invariants::{ClosedFormMetric, CurveSpec};

/// Fixtures run by `verify --all`.
pub const DEFAULT_SET: [&str; 8] = [
    "equiaffine-plane",
    "equiaffine-space",
    "h3-curves",
    "constant-curvature:-1",
    "constant-curvature:0.5",
    "constant-curvature:2",
    "euclidean-3",
    "euclidean-4",
];

/// Registered but only run on request.
pub const EXPENSIVE_SET: [&str; 1] = ["euclidean-6"];

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("unknown fixture `{name}` (known: {known})")]
    Unknown { name: String, known: String },
    #[error(transparent)]
    Cartan(#[from] CartanError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FixtureKind {
    EquiaffinePlane,
    EquiaffineSpace,
    Riemannian {
        n: usize,
        /// Reference formulas available for this metric, if any.
        #[serde(skip)]
        closed_form: Option<ClosedFormMetric>,
    },
}

/// What running the pipeline on a fixture should reproduce.
#[derive(Debug, Clone, Serialize)]
pub struct Expected {
    pub derived_type: Vec<[usize; 2]>,
    pub signature: Vec<usize>,
    pub k: usize,
    pub q: usize,
    /// Labels of fields spanning the singular bundle modulo Cauchy characteristics.
    pub singular_bundle: Vec<String>,
    pub sectional_curvature: Option<f64>,
}

#[derive(Clone)]
pub struct Fixture {
    pub name: String,
    pub summary: String,
    pub kind: FixtureKind,
    pub distribution: Distribution,
    pub bundle: Option<RiemannianBundle>,
    pub expected: Expected,
    /// The fields behind `expected.singular_bundle`.
    pub singular_fields: Vec<VectorField>,
    pub expensive: bool,
}

impl Fixture {
    pub fn metric(&self) -> Option<&MetricSpec> {
        self.bundle.as_ref().map(|b| b.metric())
    }

    pub fn basepoint(&self) -> &[f64] {
        &self.distribution.basepoint
    }
}

fn known() -> String {
    DEFAULT_SET
        .iter()
        .chain(EXPENSIVE_SET.iter())
        .copied()
        .chain(["constant-curvature:<lambda>"])
        .collect::<Vec<_>>()
        .join(", ")
}

fn unknown(name: &str) -> FixtureError {
    FixtureError::Unknown {
        name: name.to_string(),
        known: known(),
    }
}

/// Derived type `[[n,0],[2n−1,n−1],…,[n²,n²]]` of the curve bundle over an `n`-manifold.
fn riemannian_expected(n: usize, sectional: Option<f64>) -> Expected {
    let q = n - 1;
    let mut derived_type: Vec<[usize; 2]> = (0..n).map(|i| [n + i * q, i * q]).collect();
    derived_type.push([n * n, n * n]);
    let mut signature = vec![0; n];
    signature[n - 1] = q;
    Expected {
        derived_type,
        signature,
        k: n,
        q,
        singular_bundle: (2..=n).map(|j| format!("d_pi1_{j}")).collect(),
        sectional_curvature: sectional,
    }
}

fn riemannian(
    name: &str,
    summary: String,
    metric: MetricSpec,
    sectional: Option<f64>,
    closed_form: Option<ClosedFormMetric>,
) -> Result<Fixture, FixtureError> {
    let n = metric.dim();
    let bundle = build_riemannian_bundle(&metric)?;
    let singular_fields = (2..=n).map(|j| bundle.pi_field(1, j)).collect();
    Ok(Fixture {
        name: name.to_string(),
        summary,
        kind: FixtureKind::Riemannian { n, closed_form },
        distribution: bundle.distribution.clone(),
        expected: riemannian_expected(n, sectional),
        bundle: Some(bundle),
        singular_fields,
        expensive: n > 4,
    })
}

/// Look up a registered fixture. `constant-curvature` alone means `λ = 2`.
pub fn get_fixture(name: &str) -> Result<Fixture, FixtureError> {
    match name {
        "equiaffine-plane" => Ok(Fixture {
            name: name.into(),
            summary: "reduced equi-affine plane curve system, a Goursat bundle with q = 1".into(),
            kind: FixtureKind::EquiaffinePlane,
            distribution: super::equiaffine_plane(),
            bundle: None,
            expected: Expected {
                derived_type: vec![[2, 0], [3, 1], [4, 2], [5, 3], [6, 6]],
                signature: vec![0, 0, 0, 1],
                k: 4,
                q: 1,
                singular_bundle: Vec::new(),
                sectional_curvature: None,
            },
            singular_fields: Vec::new(),
            expensive: false,
        }),
        "equiaffine-space" => {
            let fr = super::equiaffine_space_frame();
            Ok(Fixture {
                name: name.into(),
                summary: "equi-affine space curves on SL(3)⋉R³ with two fiber invariants".into(),
                kind: FixtureKind::EquiaffineSpace,
                distribution: super::equiaffine_space(),
                bundle: None,
                expected: Expected {
                    derived_type: vec![[3, 0], [5, 2], [7, 4], [9, 6], [11, 8], [13, 13]],
                    signature: vec![0, 0, 0, 0, 2],
                    k: 5,
                    q: 2,
                    singular_bundle: vec!["v5".into(), "v6".into()],
                    sectional_curvature: None,
                },
                singular_fields: vec![fr[4].clone(), fr[5].clone()],
                expensive: false,
            })
        }
        "h3-curves" => riemannian(
            name,
            "Frenet bundle over hyperbolic space (upper half-space model)".into(),
            MetricSpec::h3(),
            Some(-1.0),
            Some(ClosedFormMetric::H3),
        ),
        "euclidean-3" | "euclidean-4" | "euclidean-6" => {
            let n: usize = name["euclidean-".len()..].parse().expect("digit suffix");
            riemannian(
                name,
                format!("Frenet bundle over Euclidean {n}-space"),
                MetricSpec::euclidean(n)?,
                Some(0.0),
                None,
            )
        }
        _ => {
            let rest = name
                .strip_prefix("constant-curvature")
                .ok_or_else(|| unknown(name))?;
            let lambda = match rest {
                "" => 2.0,
                _ => rest
                    .strip_prefix(':')
                    .and_then(|l| l.parse::<f64>().ok())
                    .filter(|l| l.is_finite())
                    .ok_or_else(|| unknown(name))?,
            };
            riemannian(
                &format!("constant-curvature:{lambda}"),
                format!("Frenet bundle over the conformally flat metric of curvature {lambda}"),
                MetricSpec::constant_curvature(lambda)?,
                Some(lambda),
                (lambda != 0.0).then_some(ClosedFormMetric::Lambda(lambda)),
            )
        }
    }
}

fn curves(list: &[(&[&str], [f64; 2])]) -> Vec<CurveSpec> {
    list.iter()
        .map(|(c, d)| CurveSpec::new("t", c, *d).expect("test curve parses"))
        .collect()
}

/// Five generic curves in `z > 0` inside the ball `|x| < 2`, graphs over `y`.
///
/// They serve every n = 3 metric: the `λ = −1` chart needs `|x|² < 4`.
pub fn h3_test_curves() -> Vec<CurveSpec> {
    curves(&[
        (&["t^2", "t", "1+t/2"], [-0.4, 0.4]),
        (&["sin(t)", "t", "1.2+t^2/3"], [-0.4, 0.4]),
        (&["t^3/3+t/2", "t", "exp(t/4)"], [-0.4, 0.4]),
        (&["0.3*cos(2*t)", "t", "1+0.2*sin(3*t)"], [-0.4, 0.4]),
        (&["t^2-t^3", "t", "1.5-t/3+t^2"], [-0.4, 0.4]),
    ])
}

/// Vertical semicircles `(C₁, y, √(C₂² − y²))`, geodesics of the upper half-space.
pub fn geodesic_semicircles() -> Vec<CurveSpec> {
    curves(&[
        (&["0.4", "t", "sqrt(2.25-t^2)"], [-1.2, 1.2]),
        (&["-0.7", "t", "sqrt(1-t^2)"], [-0.7, 0.7]),
        (&["1.3", "t", "sqrt(4-t^2)"], [-1.4, 1.4]),
    ])
}

/// Curves in R⁴ whose first four derivatives are independent.
pub fn euclidean4_test_curves() -> Vec<CurveSpec> {
    curves(&[
        (&["t", "t^2", "t^3", "t^4"], [-0.5, 0.5]),
        (&["t", "t^2/2", "t^3/6", "t^4/24+t"], [0.0, 0.6]),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_resolve() {
        for n in DEFAULT_SET.iter().chain(EXPENSIVE_SET.iter()) {
            let f = get_fixture(n).unwrap();
            assert_eq!(&f.name, n);
        }
        assert_eq!(
            get_fixture("constant-curvature").unwrap().name,
            "constant-curvature:2"
        );
        assert!(matches!(
            get_fixture("nope"),
            Err(FixtureError::Unknown { .. })
        ));
        assert!(get_fixture("constant-curvature:x").is_err());
        assert!(get_fixture("constant-curvature:inf").is_err());
    }

    #[test]
    fn expected_riemannian_types() {
        assert_eq!(
            riemannian_expected(3, None).derived_type,
            vec![[3, 0], [5, 2], [7, 4], [9, 9]]
        );
        assert_eq!(
            riemannian_expected(6, None).derived_type,
            vec![
                [6, 0],
                [11, 5],
                [16, 10],
                [21, 15],
                [26, 20],
                [31, 25],
                [36, 36]
            ]
        );
        assert_eq!(riemannian_expected(4, None).signature, vec![0, 0, 0, 3]);
    }

    #[test]
    fn plane_basepoint_is_the_documented_one() {
        let f = get_fixture("equiaffine-plane").unwrap();
        assert_eq!(f.basepoint(), &[0.1, 0.2, 1.1, 0.3, -0.2, 0.5]);
        assert_eq!(f.distribution.rank(), 2);
    }

    #[test]
    fn test_curves_stay_in_every_chart() {
        for c in h3_test_curves() {
            for t in c.sample_params(10) {
                let p = c.at(t).unwrap();
                assert!(p[2] > 0.0);
                assert!(p.iter().map(|x| x * x).sum::<f64>() < 4.0);
            }
        }
    }
}
