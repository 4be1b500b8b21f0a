//! The n = 6 Frenet bundle: 36 variables, far beyond the default jet budget.

use goursat_frames::distribution::{recognize, DistError, FlagConfig};
use goursat_frames::fixtures::{get_fixture, verify_fixture};
use goursat_frames::jets::{monomial_count, set_jet_budget, JetError};

#[test]
#[ignore = "needs jets of 36 variables to order 7, about 3.2e7 coefficients per scalar; run with --ignored on a large machine"]
fn euclidean_6_recognition() {
    set_jet_budget(usize::MAX);
    let report = verify_fixture("euclidean-6").unwrap();
    assert!(report.passed, "{:#?}", report.checks);
}

#[test]
fn euclidean_6_stops_at_the_budget() {
    let fx = get_fixture("euclidean-6").unwrap();
    assert!(fx.expensive);
    assert_eq!(fx.distribution.dim(), 36);
    assert!(monomial_count(36, 7) > 30_000_000);
    let e = recognize(&fx.distribution, &FlagConfig::default()).unwrap_err();
    assert!(matches!(e, DistError::Jet(JetError::Budget { .. })), "{e}");
}
