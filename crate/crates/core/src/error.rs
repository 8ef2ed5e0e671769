use num_complex::Complex64;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure category, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Malformed or inconsistent input.
    Input,
    /// The system does not have the property the operation needs.
    Verdict,
    /// A numerical routine did not deliver a trustworthy result.
    Numerical,
}

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("matrix is not symmetric (deviation {deviation:.3e})")]
    Asymmetric { deviation: f64 },
    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },
    #[error("eigenvalue iteration did not converge")]
    NoConvergence,
    #[error("Lyapunov operator is singular (eigenvalue pair sum {pair_sum:.3e})")]
    SingularLyapunov { pair_sum: f64 },
    #[error("matrix is singular: {0}")]
    Singular(String),
    #[error("spectrum is not purely imaginary (eigenvalue {eigenvalue})")]
    NotPurelyImaginary { eigenvalue: Complex64 },
    #[error("eigenvalue {eigenvalue} is defective")]
    Defective { eigenvalue: Complex64 },
    #[error("evaluation point is within tolerance of the pole {pole}")]
    PoleProximity { pole: Complex64 },
    #[error("algebraic loop is ill-posed: I - D1*D2 is singular")]
    IllPosed,
    #[error("simulation diverged at t = {time}")]
    Divergence { time: f64 },
    #[error("rank condition violated: {0}")]
    RankDeficient(String),
    #[error("no output transformation yields relative degrees <= 2: {0}")]
    NoRdLeqTwo(String),
    #[error("system is not controllable")]
    NotControllable,
    #[error("system is not minimal (controllable: {controllable}, observable: {observable})")]
    NotMinimal { controllable: bool, observable: bool },
    #[error("system has a transmission zero at the origin")]
    ZeroAtOrigin,
    #[error("zero dynamics are not Lyapunov stable (eigenvalue {witness})")]
    NotWeaklyMinimumPhase { witness: Complex64 },
    #[error("zero dynamics are not asymptotically stable (eigenvalue {witness})")]
    NotMinimumPhase { witness: Complex64 },
    #[error("relative degree vector is not {{1,...,1}} (p2 = {p2})")]
    RelativeDegreeNotOne { p2: usize },
    #[error("unsupported block shape: {0}")]
    UnsupportedShape(String),
    #[error("no admissible free parameters after {attempts} attempts (unobservable eigenvalue {witness})")]
    RetryExhausted { attempts: usize, witness: Complex64 },
    #[error("pole {pole} lies in the region forbidden for this class")]
    PoleInForbiddenRegion { pole: Complex64 },
    #[error("frequency grid is empty after pole exclusion")]
    EmptyGrid,
    #[error("{0} is not a simple pole")]
    NonSimplePole(Complex64),
    #[error("gain set and transforms come from different frames")]
    FrameMismatch,
    #[error("constructed certificate failed verification: {0}")]
    CertificateFailed(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            NotSquare { .. } | Dimension(_) | NonFinite | InvalidArgument(_) | Asymmetric { .. }
            | FrameMismatch | RankDeficient(_) => ErrorKind::Input,
            NoRdLeqTwo(_)
            | NotControllable
            | NotMinimal { .. }
            | ZeroAtOrigin
            | NotWeaklyMinimumPhase { .. }
            | NotMinimumPhase { .. }
            | RelativeDegreeNotOne { .. }
            | UnsupportedShape(_)
            | PoleInForbiddenRegion { .. }
            | NonSimplePole(_)
            | NotPurelyImaginary { .. }
            | Defective { .. }
            | NotPositiveDefinite { .. } => ErrorKind::Verdict,
            NoConvergence
            | SingularLyapunov { .. }
            | Singular(_)
            | PoleProximity { .. }
            | IllPosed
            | Divergence { .. }
            | RetryExhausted { .. }
            | EmptyGrid
            | CertificateFailed(_) => ErrorKind::Numerical,
        }
    }
}
