use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
///
/// Conditions that the analysis can live with (a sweep passing close to an
/// exceptional point, an ambiguous tracking step) are reported as flags on the
/// returned values instead of through this type.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("matrix is not square or has mismatched dimensions ({0})")]
    Dimension(String),

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("(omega*I - H) is singular at omega = {omega} GHz")]
    SingularAtResonance { omega: f64 },

    #[error("circulator block (omega_bar*I - D) is singular at omega_bar = {omega_bar} GHz")]
    SingularBlock { omega_bar: f64 },

    #[error("QR iteration did not converge after {iterations} sweeps")]
    EigenNonConvergence { iterations: usize },

    #[error("left/right eigenvalue pairing failed: nearest conjugate is {distance:e} GHz away")]
    EigenPairing { distance: f64 },

    #[error("division by negligible quantity ({what}: {value:e})")]
    DivisionByNegligible { what: &'static str, value: f64 },

    #[error("off-diagonal coupling below 1e-15 GHz; similarity transform undefined")]
    DegenerateCoupling,

    #[error("frequency {omega} GHz lies on the resonance pole at {omega_0} GHz")]
    OnResonancePole { omega: f64, omega_0: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature failed to converge ({0})")]
    QuadratureNonConvergence(String),

    #[error("anisotropy profile undefined for K = 0")]
    DegenerateAnisotropy,

    #[error("fit did not converge: {0}")]
    FitNonConvergence(String),

    #[error("fitted modes collapsed onto one frequency ({0} GHz)")]
    ModeCollapse(f64),

    #[error("parameter `{0}` has no influence on the objective")]
    UnidentifiableParameter(String),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
