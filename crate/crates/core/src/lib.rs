//! System combination for grammatical error correction.
//!
//! Multiple GEC systems differ in which error types they correct well. This
//! crate learns, from a training corpus in M2 format, a binary selection
//! matrix that assigns exactly one system to each error type by exactly
//! maximizing the F_alpha score of the combined counts, then applies that
//! matrix to new system outputs to produce combined corrected sentences.
//!
//! The pipeline:
//!
//! 1. [`m2`] parses hypothesis and reference edits from M2 files.
//! 2. [`counting`] matches hypothesis edits against references and builds the
//!    per-system, per-type TP/FP/FN [`CountMatrix`].
//! 3. [`solver`] maximizes F_alpha over all one-system-per-type selections,
//!    either by exhaustive enumeration or by the Dinkelbach parametric
//!    method (both exact).
//! 4. [`combiner`] keeps the selected edits at inference time, resolves
//!    span conflicts, and emits corrected sentences.
//! 5. [`evaluation`] scores any hypothesis against references and runs the
//!    per-sentence split-half analysis.

pub mod combiner;
pub mod counting;
pub mod error;
pub mod evaluation;
pub mod m2;
pub mod solver;

pub use combiner::{combine_corpus, CandidateEdit, CombineOutput, ConflictMode, ConflictPolicy};
pub use counting::{build_count_matrix, AnnotatorPolicy, CountMatrix, ErrorTypeIndex};
pub use error::Error;
pub use evaluation::{evaluate, split_half_analysis, AnalysisReport, EvalReport};
pub use m2::{apply_edits, parse_m2, serialize_m2, CorpusEdits, Edit, SentenceAnnotation};
pub use solver::{solve, Backend, SelectionMatrix, SolveResult, SolverConfig};

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
