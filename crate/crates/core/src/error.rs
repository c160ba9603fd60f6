use thiserror::Error;

/// Errors produced by parsing, counting, solving, and combining.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed M2 input. `line` is 1-based.
    #[error("M2 parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Corpora that must be sentence-aligned are not.
    #[error("corpora misaligned: {0}")]
    Alignment(String),

    /// A caller violated an operation precondition (overlapping edits,
    /// unsorted input, out-of-bounds span).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Matrix shapes or label sets do not agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// The exhaustive search space exceeds the configured cap.
    #[error(
        "enumeration cap exceeded: {systems}^{types} = {space} assignments > cap {cap}; \
         use the dinkelbach backend"
    )]
    EnumerationCap {
        systems: usize,
        types: usize,
        space: u128,
        cap: u64,
    },

    /// The Dinkelbach iteration did not converge within the configured
    /// iteration budget.
    #[error("solver did not converge after {iterations} iterations (last lambda = {last_lambda})")]
    NonConvergence { iterations: usize, last_lambda: f64 },

    /// An edit carries an error type absent from the selection matrix and
    /// the policy demands a hard failure.
    #[error("unknown error type {error_type:?} in sentence {sentence} of system {system:?}")]
    UnknownErrorType {
        error_type: String,
        sentence: usize,
        system: String,
    },

    /// A system label required by the selection matrix has no matching
    /// input, or an input label is ambiguous.
    #[error("system label error: {0}")]
    UnknownSystem(String),

    /// Invalid configuration value.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Malformed JSON artifact (selection or count matrix).
    #[error("artifact error: {0}")]
    Artifact(String),
}
