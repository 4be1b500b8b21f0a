//! Jet-level recognition of Goursat bundles and construction of contact
//! coordinates, with the differential invariants of curves that follow from
//! them.
//!
//! The crate is organised bottom-up:
//!
//! * [`jets`]: truncated multivariate Taylor arithmetic,
//! * [`exprdsl`]: the textual expression language evaluated on jets,
//! * [`distribution`]: vector-field distributions, derived flags, Cauchy
//!   bundles, singular sub-bundles and recognition certificates,
//! * [`cartan`]: orthonormal coframes, connection forms and the Riemannian
//!   curve bundle,
//! * [`contact`]: contact maps, push-forward checks and Newton inversion,
//! * [`invariants`]: curvature/torsion via the contact map, a Frenet oracle and
//!   reference closed forms,
//! * [`fixtures`]: ready-made geometries with their expected facts.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod cartan;
pub mod contact;
pub mod distribution;
pub mod exprdsl;
pub mod fixtures;
pub mod invariants;
pub mod jets;
pub mod rank;
