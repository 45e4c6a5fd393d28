use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("point outside the action domain: |I|_inf = {norm} >= r = {radius}")]
    OutsideDomain { norm: f64, radius: f64 },

    #[error("Hermitian symmetry broken: imaginary residue {residue:e} exceeds {tolerance:e}")]
    BrokenSymmetry { residue: f64, tolerance: f64 },

    #[error("resonant mode {k:?}: |omega.k| = {divisor:e} below threshold {threshold:e}")]
    Resonance {
        k: Vec<i32>,
        divisor: f64,
        threshold: f64,
    },

    #[error("the zero mode has no small divisor")]
    ZeroMode,

    #[error("mode {k:?} lies beyond the verification cutoff K = {cutoff}")]
    ModeBeyondCutoff { k: Vec<i32>, cutoff: u32 },

    #[error("homological equation requires a zero-mean right-hand side")]
    NonZeroAverage,

    #[error("Lie series tail is not decreasing (last term {last:e} >= previous {previous:e})")]
    StepSize { last: f64, previous: f64 },

    #[error("Hamiltonian is not of the form omega.I + O(|I|^2): {0}")]
    NotTorusForm(String),

    #[error("expected an angle-free series, found mode {0:?}")]
    AngleDependent(Vec<i32>),

    #[error("rank of V_m is not stationary up to m_cap = {m_cap} (rank {rank})")]
    InconclusiveOrder { m_cap: u32, rank: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("smallness threshold violated: nu = {0} >= 1")]
    NuTooLarge(f64),

    #[error("divisor floor violated: {0}")]
    DivisorFloor(String),

    #[error("implicit step did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed trajectory file: {0}")]
    Trajectory(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics (resonances, budgets, convergence) as
    /// opposed to malformed input or configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Resonance { .. }
                | Error::StepSize { .. }
                | Error::InconclusiveOrder { .. }
                | Error::Degenerate(_)
                | Error::Hypothesis(_)
                | Error::NuTooLarge(_)
                | Error::DivisorFloor(_)
                | Error::NoConvergence { .. }
                | Error::OutsideDomain { .. }
                | Error::BrokenSymmetry { .. }
                | Error::ModeBeyondCutoff { .. }
                | Error::NonZeroAverage
        )
    }
}
