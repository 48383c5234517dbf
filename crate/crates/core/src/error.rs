use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("chain must have at least {min} sites, got {got}")]
    InvalidSize { min: usize, got: usize },

    #[error("chain parameters must be finite: {0}")]
    NonFinite(&'static str),

    #[error("operation requires gamma = 0 (particle-conserving case), got gamma = {0}; use the Bogoliubov-de Gennes form instead")]
    AnisotropyUnsupported(f64),

    #[error("interface convention violated: requires J_1 = 0 and B_1 = 0 (got J_1 = {j1}, B_1 = {b1})")]
    InterfaceConvention { j1: f64, b1: f64 },

    #[error("many-body construction limited to {max} sites, got {got}")]
    ResourceGuard { max: usize, got: usize },

    #[error("mode index {index} out of range 2..={max}")]
    ModeIndex { index: usize, max: usize },

    #[error("logical qubit index {index} out of range 1..={max}")]
    LogicalIndex { index: usize, max: usize },

    #[error("drive amplitude must be positive, got {0}")]
    NonPositiveAmplitude(f64),

    #[error("pulse would be unphysically long: required duration {required:.3e} exceeds {limit:.3e} (overlap {alpha:.3e})")]
    PulseTooLong {
        required: f64,
        limit: f64,
        alpha: f64,
    },

    #[error("zero-duration pulse requested ({0})")]
    ZeroDuration(&'static str),

    #[error("pair gap for qubit {qubit} collides with pairs {collisions:?} within tolerance; drive frequency ambiguous")]
    AmbiguousGap {
        qubit: usize,
        collisions: Vec<(usize, usize)>,
    },

    #[error("tone at frequency {frequency} does not match a unique spectral gap; nearest gaps: {nearest:?}")]
    OffResonant {
        frequency: f64,
        nearest: Vec<(usize, f64)>,
    },

    #[error("operator {operator} is incompatible with tier {tier}: {reason}")]
    TierIncompatible {
        operator: &'static str,
        tier: &'static str,
        reason: &'static str,
    },

    #[error("states differ in tier or basis ({a} vs {b})")]
    TierMismatch { a: String, b: String },

    #[error("vanishing control matrix element between eigenstates {x} and {y}; field undefined")]
    VanishingMatrixElement { x: usize, y: usize },

    #[error("schedule timing infeasible: {0}")]
    ScheduleTiming(String),

    #[error("validity window violated: B*max_alpha = {product:.3e} not small against min gap {min_gap:.3e}; predicted error {predicted:.3e}")]
    ValidityWindow {
        product: f64,
        min_gap: f64,
        predicted: f64,
    },

    #[error("{file}:{line}: parse error in field `{field}`: {message}")]
    Parse {
        file: String,
        line: usize,
        field: String,
        message: String,
    },

    #[error("fit rejected: {0}")]
    FitRejected(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
