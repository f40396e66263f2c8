use thiserror::Error;

/// Every failure the library can report. Variants carry enough context to
/// reproduce the failure from the logged inputs.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point is not on the null quadric (residual {residual:e} > {tol:e})")]
    NotOnQuadric { residual: f64, tol: f64 },
    #[error("zero vector: no spinor, frame or fiber exists over it")]
    ZeroBase,
    #[error("sample count {0} must be a power of two and at least 64")]
    InvalidSampleCount(usize),
    #[error("spinor lift is ambiguous at sample {index}: consecutive samples too far apart")]
    UndersampledLoop { index: usize },
    #[error("loop is not an immersion: |h'| = {min_speed:e} at x = {x}")]
    NotImmersion { min_speed: f64, x: f64 },
    #[error("conformal pair residual {residual:e} exceeds {tol:e}")]
    InvalidPair { residual: f64, tol: f64 },
    #[error("invalid segment [{start}, {end}]")]
    InvalidSegment { start: f64, end: f64 },
    #[error("segment [{start}, {end}] contains too few samples")]
    EmptySegment { start: f64, end: f64 },
    #[error("segments overlap: {0}")]
    SegmentOverlap(String),
    #[error("delta {0} is out of range")]
    InvalidDelta(f64),
    #[error("no root found: {0}")]
    RootNotFound(String),
    #[error("no immersion path found after {attempts} perturbation attempts; best min |h_t'| = {min_speed:e}")]
    PerturbationFailed { attempts: usize, min_speed: f64 },
    #[error("curve is flat on the requested segment")]
    FlatOnSegment,
    #[error("nonflatness lost at t = {t}")]
    NonflatViolated { t: f64 },
    #[error("continuation stalled at t = {t}: {reason}")]
    ContinuationStalled { t: f64, reason: String },
    #[error("loop is degenerate (rank < 2) on the spray segment of curve {curve}")]
    DegenerateLoop { curve: usize },
    #[error("third component vanishes on curve {curve}")]
    ThirdComponentVanishes { curve: usize },
    #[error("spray is not dominating: smallest singular value {sigma_min:e} at t = {t}")]
    DominationFailed { t: f64, sigma_min: f64 },
    #[error("control vector left the ball of radius {radius} at t = {t}")]
    LeftDomain { t: f64, radius: f64 },
    #[error("period targets inconsistent with the anchor: residual {0:e}")]
    InconsistentTargets(f64),
    #[error("Gauss map has a zero or pole at z = ({re}, {im})")]
    GaussMapVanishes { re: f64, im: f64 },
    #[error("denominator f1 - i f2 vanishes at z = ({re}, {im})")]
    DegenerateDenominator { re: f64, im: f64 },
    #[error("real period {0:e} is nonzero")]
    RealPeriodNonzero(f64),
    #[error("integration path leaves the domain")]
    PathOutsideDomain,
    #[error("unknown catalog entry '{0}'")]
    UnknownName(String),
    #[error("invalid circular domain: {0}")]
    InvalidDomain(String),
    #[error("curves {0} and {1} have no clearance")]
    NoClearance(usize, usize),
    #[error("spin parity of curve {curve} does not match the sign-twisted factor")]
    ParityMismatch { curve: usize },
    #[error("extension at t = {t} vanishes at z = ({re}, {im})")]
    VanishingOnDomain { t: f64, re: f64, im: f64 },
    #[error("approximation budget exceeded: error {error:e} at degree {degree}")]
    ApproximationBudgetExceeded { error: f64, degree: usize },
    #[error("input immersion is flat")]
    FlatInput,
    #[error("no band found for end {end} on bracket [{t0}, {t1}]")]
    NoBandFound { end: usize, t0: f64, t1: f64 },
    #[error("band too thin for N = {n}: 2/N >= R - r")]
    BandTooThin { n: usize },
    #[error("Gauss map too small on bands: {0:e}")]
    GaussMapTooSmall(f64),
    #[error("estimate {name} fails: {value:e} <= {bound:e}")]
    EstimateNotMet { name: String, value: f64, bound: f64 },
    #[error("metric graph is disconnected: no boundary node reachable")]
    DisconnectedGraph,
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
