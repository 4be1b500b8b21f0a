use goursat_frames::cartan::CartanError;
use goursat_frames::contact::ContactError;
use goursat_frames::distribution::DistError;
use goursat_frames::exprdsl::{EvalError, ParseError};
use goursat_frames::fixtures::FixtureError;
use goursat_frames::invariants::InvariantError;
use goursat_frames::jets::JetError;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_INVALID: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, unreadable or malformed documents, unsupported requests.
    #[error("{0}")]
    Invalid(String),
    /// Rank decisions near threshold, failed inversions, failed expectations.
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => EXIT_INVALID,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        CliError::Invalid(msg.into())
    }
}

fn jet_is_numerical(e: &JetError) -> bool {
    matches!(
        e,
        JetError::InsufficientOrder { .. } | JetError::Budget { .. }
    )
}

impl From<DistError> for CliError {
    fn from(e: DistError) -> Self {
        let numerical =
            e.is_indeterminate() || matches!(&e, DistError::Jet(j) if jet_is_numerical(j));
        if numerical {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Invalid(e.to_string())
        }
    }
}

impl From<CartanError> for CliError {
    fn from(e: CartanError) -> Self {
        match e {
            CartanError::Dist(d) => d.into(),
            CartanError::Jet(j) if jet_is_numerical(&j) => CliError::Numerical(j.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<ContactError> for CliError {
    fn from(e: ContactError) -> Self {
        match e {
            ContactError::Dist(d) => d.into(),
            ContactError::NoConvergence { .. } | ContactError::SingularJacobian { .. } => {
                CliError::Numerical(e.to_string())
            }
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<InvariantError> for CliError {
    fn from(e: InvariantError) -> Self {
        match e {
            InvariantError::Dist(d) => d.into(),
            InvariantError::Cartan(c) => c.into(),
            InvariantError::Contact(c) => c.into(),
            InvariantError::Jet(j) if jet_is_numerical(&j) => CliError::Numerical(j.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<FixtureError> for CliError {
    fn from(e: FixtureError) -> Self {
        match e {
            FixtureError::Cartan(c) => c.into(),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<ParseError> for CliError {
    fn from(e: ParseError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Invalid(e.to_string())
    }
}
