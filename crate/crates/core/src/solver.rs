//! Exact maximization of F_alpha over binary one-system-per-type selections.
//!
//! The problem: given per-system, per-type counts, choose x[i][j] in {0,1}
//! with exactly one selected system per type column so that
//!
//! ```text
//! F_alpha(X) = (1+a^2)*TP_sum / ((1+a^2)*TP_sum + FP_sum + a^2*FN_sum)
//! ```
//!
//! is maximal, where the sums are taken over the selected cells. This is a
//! linear-fractional 0-1 program. Two exact backends are provided:
//!
//! * `exhaustive` enumerates all `M^N` feasible selections (the reference
//!   oracle, capped by `enumeration_cap`);
//! * `dinkelbach` iterates `lambda <- A(x)/B(x)` and solves the parametric
//!   problem `max_x A(x) - lambda*B(x)`, which decomposes into independent
//!   per-column argmaxes because both the objective and the partition
//!   constraint are separable by column. Each iteration is O(M*N) and the
//!   iterate value strictly increases, so termination is finite and the
//!   final value is the global optimum.
//!
//! When `alpha` is a small rational (the usual 0.5 gives alpha^2 = 1/4) all
//! comparisons run in exact integer arithmetic, so results carry no
//! floating-point ambiguity; other alphas fall back to f64 scoring with the
//! configured tolerance.

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::counting::{counts_for_selection, CountMatrix, ErrorTypeIndex};
use crate::error::Error;
use crate::evaluation::f_beta_from_counts;
use crate::Result;

/// Binary selection of one system per error type.
///
/// Stored as one chosen system index per type column, which makes the
/// one-per-column constraint and binarity structural.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionMatrix {
    system_ids: Vec<String>,
    type_index: ErrorTypeIndex,
    /// `assignment[j]` is the selected row for type column `j`.
    assignment: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct SelectionDto {
    system_ids: Vec<String>,
    types: Vec<String>,
    assignment: BTreeMap<String, String>,
}

impl SelectionMatrix {
    /// Reserved system label meaning "correct nothing of this type". Only
    /// produced when a solver runs with `allow_abstain`.
    pub const ABSTAIN_LABEL: &'static str = "<none>";

    pub fn from_assignment(
        system_ids: Vec<String>,
        type_index: ErrorTypeIndex,
        assignment: Vec<usize>,
    ) -> Result<Self> {
        if system_ids.is_empty() {
            return Err(Error::Dimension("selection needs at least one system".into()));
        }
        if assignment.len() != type_index.len() {
            return Err(Error::Dimension(format!(
                "assignment covers {} types but the index has {}",
                assignment.len(),
                type_index.len()
            )));
        }
        if let Some(&bad) = assignment.iter().find(|&&i| i >= system_ids.len()) {
            return Err(Error::Dimension(format!(
                "assignment references system {bad} but only {} exist",
                system_ids.len()
            )));
        }
        Ok(SelectionMatrix {
            system_ids,
            type_index,
            assignment,
        })
    }

    /// The selection assigning every type to `system`.
    pub fn single_system(
        system_ids: Vec<String>,
        type_index: ErrorTypeIndex,
        system: usize,
    ) -> Result<Self> {
        let types = type_index.len();
        Self::from_assignment(system_ids, type_index, vec![system; types])
    }

    pub fn system_ids(&self) -> &[String] {
        &self.system_ids
    }

    pub fn type_index(&self) -> &ErrorTypeIndex {
        &self.type_index
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Chosen system label per type column, in type order.
    pub fn assigned_labels(&self) -> impl Iterator<Item = &str> {
        self.assignment.iter().map(|&i| self.system_ids[i].as_str())
    }

    /// Chosen system label for an error type, if the type is covered.
    pub fn label_for(&self, error_type: &str) -> Option<&str> {
        let j = self.type_index.index_of(error_type)?;
        Some(self.system_ids[self.assignment[j]].as_str())
    }

    /// The full binary grid, row per system, column per type.
    pub fn to_grid(&self) -> Vec<Vec<u8>> {
        let mut grid = vec![vec![0u8; self.assignment.len()]; self.system_ids.len()];
        for (j, &i) in self.assignment.iter().enumerate() {
            grid[i][j] = 1;
        }
        grid
    }

    /// Portable JSON keyed by type and system label, independent of the
    /// order inputs are listed in later runs.
    pub fn to_json(&self) -> String {
        let dto = SelectionDto {
            system_ids: self.system_ids.clone(),
            types: self.type_index.types().to_vec(),
            assignment: self
                .type_index
                .types()
                .iter()
                .cloned()
                .zip(self.assigned_labels().map(str::to_string))
                .collect(),
        };
        serde_json::to_string_pretty(&dto).expect("selection serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let dto: SelectionDto =
            serde_json::from_str(text).map_err(|e| Error::Artifact(e.to_string()))?;
        let type_index = ErrorTypeIndex::new(dto.types.iter().cloned());
        if type_index.types() != dto.types.as_slice() {
            return Err(Error::Artifact("selection types must be sorted and unique".into()));
        }
        let row_of: BTreeMap<&str, usize> = dto
            .system_ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        if row_of.len() != dto.system_ids.len() {
            return Err(Error::Artifact("selection system ids must be unique".into()));
        }
        let mut assignment = Vec::with_capacity(type_index.len());
        for ty in type_index.types() {
            let label = dto.assignment.get(ty).ok_or_else(|| {
                Error::Artifact(format!("selection assigns no system to type {ty:?}"))
            })?;
            let &row = row_of.get(label.as_str()).ok_or_else(|| {
                Error::Artifact(format!(
                    "selection assigns {ty:?} to unknown system {label:?}"
                ))
            })?;
            assignment.push(row);
        }
        if dto.assignment.len() != type_index.len() {
            return Err(Error::Artifact(
                "selection assignment covers types outside the index".into(),
            ));
        }
        Self::from_assignment(dto.system_ids, type_index, assignment)
    }

    /// TSV of per-type choices with the chosen system's counts.
    pub fn to_tsv(&self, counts: &CountMatrix) -> Result<String> {
        if counts.type_index().types() != self.type_index.types() {
            return Err(Error::Dimension(
                "selection and count matrix cover different error types".into(),
            ));
        }
        let mut out = String::from("type\tchosen_system\ttp\tfp\tfn\n");
        for (j, ty) in self.type_index.types().iter().enumerate() {
            let label = &self.system_ids[self.assignment[j]];
            let row = counts.system_ids().iter().position(|s| s == label);
            match row {
                Some(i) => {
                    out.push_str(&format!(
                        "{ty}\t{label}\t{}\t{}\t{}\n",
                        counts.tp(i, j),
                        counts.fp(i, j),
                        counts.fn_(i, j)
                    ));
                }
                None => out.push_str(&format!("{ty}\t{label}\t0\t0\t0\n")),
            }
        }
        Ok(out)
    }
}

/// Solver backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// Full enumeration of the `M^N` feasible selections.
    Exhaustive,
    /// Dinkelbach parametric iteration; exact and fast at realistic sizes.
    Dinkelbach,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Backend::Exhaustive => f.write_str("exhaustive"),
            Backend::Dinkelbach => f.write_str("dinkelbach"),
        }
    }
}

/// Deterministic tie handling for the per-column argmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    #[default]
    LowestSystemIndex,
}

/// Solver configuration.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// F-score weight; 0.5 weights precision twice as much as recall.
    pub alpha: f64,
    pub backend: Backend,
    /// Termination threshold for the parametric value on the float path.
    /// With rational `alpha` the solver compares exact integers and the
    /// tolerance is not consulted.
    pub dinkelbach_tolerance: f64,
    pub max_iterations: usize,
    /// Largest `M^N` the exhaustive backend will enumerate.
    pub enumeration_cap: u64,
    /// Adds a virtual zero-count system, letting the solver leave an error
    /// type uncorrected. Off by default: the base model assigns a real
    /// system to every type.
    pub allow_abstain: bool,
    pub tie_break: TieBreak,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            alpha: 0.5,
            backend: Backend::Dinkelbach,
            dinkelbach_tolerance: 1e-12,
            max_iterations: 64,
            enumeration_cap: 10_000_000,
            allow_abstain: false,
            tie_break: TieBreak::LowestSystemIndex,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::Config(format!("alpha must be finite and >= 0, got {}", self.alpha)));
        }
        if !self.dinkelbach_tolerance.is_finite() || self.dinkelbach_tolerance < 0.0 {
            return Err(Error::Config("dinkelbach_tolerance must be finite and >= 0".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be positive".into()));
        }
        if self.enumeration_cap == 0 {
            return Err(Error::Config("enumeration_cap must be positive".into()));
        }
        Ok(())
    }
}

/// A solved selection with its exact training objective.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub selection: SelectionMatrix,
    /// `f_beta_from_counts` of the selected sums; in [0, 1].
    pub objective: f64,
    /// Inner problems solved (dinkelbach) or assignments enumerated
    /// (exhaustive).
    pub iterations: usize,
    pub backend_used: Backend,
    /// True when the counts were all zero and the trivial selection was
    /// returned.
    pub degenerate: bool,
    /// The nondecreasing lambda sequence (dinkelbach only).
    pub lambda_trace: Vec<f64>,
}

/// Evaluates the F_alpha objective of a feasible selection against counts.
pub fn f_alpha_objective(counts: &CountMatrix, x: &SelectionMatrix, alpha: f64) -> Result<f64> {
    let (tp, fp, fn_) = counts_for_selection(counts, x)?;
    Ok(f_beta_from_counts(tp, fp, fn_, alpha))
}

/// `alpha^2` as an exact small rational, when `alpha` is one.
///
/// Returns `(num, den)` with `alpha^2 == num/den`. Only denominators up to
/// 64 are probed; anything else uses the float path.
fn rational_alpha_squared(alpha: f64) -> Option<(u64, u64)> {
    if !alpha.is_finite() || !(0.0..=64.0).contains(&alpha) {
        return None;
    }
    for den in 1..=64u64 {
        let num = (alpha * den as f64).round();
        if (0.0..=64.0).contains(&num) && num / den as f64 == alpha {
            let num = num as u64;
            return Some((num * num, den * den));
        }
    }
    None
}

/// Per-cell numerator and denominator contributions.
///
/// With `alpha^2 = num/den`, scaling by `den` makes both integral:
/// `a = (den+num)*tp` and `b = a + den*fp + num*fn`; the scale cancels in
/// every ratio. The float variant stores the unscaled values.
enum Tables {
    Exact { a: Vec<Vec<u128>>, b: Vec<Vec<u128>> },
    Float { a: Vec<Vec<f64>>, b: Vec<Vec<f64>> },
}

impl Tables {
    fn build(counts: &CountMatrix, alpha: f64) -> Tables {
        if let Some((num, den)) = rational_alpha_squared(alpha) {
            let (num, den) = (num as u128, den as u128);
            let mut a = vec![vec![0u128; counts.types()]; counts.systems()];
            let mut b = vec![vec![0u128; counts.types()]; counts.systems()];
            let mut total_b: u128 = 0;
            for i in 0..counts.systems() {
                for j in 0..counts.types() {
                    a[i][j] = (den + num) * counts.tp(i, j) as u128;
                    b[i][j] = a[i][j] + den * counts.fp(i, j) as u128 + num * counts.fn_(i, j) as u128;
                    total_b += b[i][j];
                }
            }
            // Exact comparisons multiply two sums of b; stay well inside u128.
            if total_b < (1u128 << 63) {
                return Tables::Exact { a, b };
            }
        }
        let a2 = alpha * alpha;
        let mut a = vec![vec![0f64; counts.types()]; counts.systems()];
        let mut b = vec![vec![0f64; counts.types()]; counts.systems()];
        for i in 0..counts.systems() {
            for j in 0..counts.types() {
                a[i][j] = (1.0 + a2) * counts.tp(i, j) as f64;
                b[i][j] = a[i][j] + counts.fp(i, j) as f64 + a2 * counts.fn_(i, j) as f64;
            }
        }
        Tables::Float { a, b }
    }
}

/// Augments counts with the virtual abstain row when configured.
fn prepare_counts<'a>(counts: &'a CountMatrix, config: &SolverConfig) -> Result<Cow<'a, CountMatrix>> {
    if !config.allow_abstain {
        return Ok(Cow::Borrowed(counts));
    }
    if counts
        .system_ids()
        .iter()
        .any(|s| s == SelectionMatrix::ABSTAIN_LABEL)
    {
        return Err(Error::Config(format!(
            "system label {:?} is reserved for the abstain option",
            SelectionMatrix::ABSTAIN_LABEL
        )));
    }
    let mut system_ids = counts.system_ids().to_vec();
    system_ids.push(SelectionMatrix::ABSTAIN_LABEL.to_string());
    let types = counts.types();
    let grid = |get: &dyn Fn(usize, usize) -> u64| -> Vec<Vec<u64>> {
        let mut g: Vec<Vec<u64>> = (0..counts.systems())
            .map(|i| (0..types).map(|j| get(i, j)).collect())
            .collect();
        g.push(vec![0; types]);
        g
    };
    Ok(Cow::Owned(CountMatrix::from_grids(
        system_ids,
        counts.type_index().clone(),
        grid(&|i, j| counts.tp(i, j)),
        grid(&|i, j| counts.fp(i, j)),
        grid(&|i, j| counts.fn_(i, j)),
    )?))
}

fn degenerate_result(counts: &CountMatrix, backend: Backend) -> Result<SolveResult> {
    let selection = SelectionMatrix::single_system(
        counts.system_ids().to_vec(),
        counts.type_index().clone(),
        0,
    )?;
    Ok(SolveResult {
        selection,
        objective: 0.0,
        iterations: 0,
        backend_used: backend,
        degenerate: true,
        lambda_trace: Vec::new(),
    })
}

fn finish(
    counts: &CountMatrix,
    assignment: Vec<usize>,
    alpha: f64,
    iterations: usize,
    backend: Backend,
    lambda_trace: Vec<f64>,
) -> Result<SolveResult> {
    let selection = SelectionMatrix::from_assignment(
        counts.system_ids().to_vec(),
        counts.type_index().clone(),
        assignment,
    )?;
    let objective = f_alpha_objective(counts, &selection, alpha)?;
    Ok(SolveResult {
        selection,
        objective,
        iterations,
        backend_used: backend,
        degenerate: false,
        lambda_trace,
    })
}

/// `A/B > C/D` on nonnegative values, with an empty denominator scoring 0.
fn ratio_gt_u128(a: (u128, u128), c: (u128, u128)) -> bool {
    let (an, ad) = if a.1 == 0 { (0, 1) } else { a };
    let (cn, cd) = if c.1 == 0 { (0, 1) } else { c };
    an * cd > cn * ad
}

fn ratio_gt_f64(a: (f64, f64), c: (f64, f64)) -> bool {
    let av = if a.1 == 0.0 { 0.0 } else { a.0 / a.1 };
    let cv = if c.1 == 0.0 { 0.0 } else { c.0 / c.1 };
    av > cv
}

/// Full enumeration of all `M^N` assignments in lexicographic order,
/// keeping the first-seen optimum so ties resolve to the lexicographically
/// smallest assignment vector.
pub fn solve_exhaustive(counts: &CountMatrix, config: &SolverConfig) -> Result<SolveResult> {
    config.validate()?;
    let counts = prepare_counts(counts, config)?;
    if counts.is_all_zero() {
        return degenerate_result(&counts, Backend::Exhaustive);
    }
    let systems = counts.systems();
    let types = counts.types();
    let space = (systems as u128).checked_pow(types as u32).unwrap_or(u128::MAX);
    if space > config.enumeration_cap as u128 {
        return Err(Error::EnumerationCap {
            systems,
            types,
            space,
            cap: config.enumeration_cap,
        });
    }

    let tables = Tables::build(&counts, config.alpha);
    let mut assignment = vec![0usize; types];
    let mut best_assignment = assignment.clone();
    let mut enumerated = 0usize;

    match &tables {
        Tables::Exact { a, b } => {
            let value = |asg: &[usize]| -> (u128, u128) {
                asg.iter()
                    .enumerate()
                    .fold((0, 0), |(va, vb), (j, &i)| (va + a[i][j], vb + b[i][j]))
            };
            let mut best = value(&assignment);
            enumerated += 1;
            while advance(&mut assignment, systems) {
                enumerated += 1;
                let v = value(&assignment);
                if ratio_gt_u128(v, best) {
                    best = v;
                    best_assignment = assignment.clone();
                }
            }
        }
        Tables::Float { a, b } => {
            let value = |asg: &[usize]| -> (f64, f64) {
                asg.iter()
                    .enumerate()
                    .fold((0.0, 0.0), |(va, vb), (j, &i)| (va + a[i][j], vb + b[i][j]))
            };
            let mut best = value(&assignment);
            enumerated += 1;
            while advance(&mut assignment, systems) {
                enumerated += 1;
                let v = value(&assignment);
                if ratio_gt_f64(v, best) {
                    best = v;
                    best_assignment = assignment.clone();
                }
            }
        }
    }
    finish(
        &counts,
        best_assignment,
        config.alpha,
        enumerated,
        Backend::Exhaustive,
        Vec::new(),
    )
}

/// Advances the assignment odometer in lexicographic order (last column
/// fastest). Returns false after the final assignment.
fn advance(assignment: &mut [usize], systems: usize) -> bool {
    for slot in assignment.iter_mut().rev() {
        *slot += 1;
        if *slot < systems {
            return true;
        }
        *slot = 0;
    }
    false
}

/// Dinkelbach parametric iteration; see the module docs.
///
/// Starts from the best single-system selection (a feasible lower bound),
/// so lambda is meaningful from the first inner problem on. Per-column
/// argmax ties go to the lowest system index.
pub fn solve_dinkelbach(counts: &CountMatrix, config: &SolverConfig) -> Result<SolveResult> {
    config.validate()?;
    let counts = prepare_counts(counts, config)?;
    if counts.is_all_zero() {
        return degenerate_result(&counts, Backend::Dinkelbach);
    }
    let tables = Tables::build(&counts, config.alpha);
    let (assignment, iterations, trace) = match &tables {
        Tables::Exact { a, b } => dinkelbach_exact(a, b, config)?,
        Tables::Float { a, b } => dinkelbach_float(a, b, config)?,
    };
    finish(
        &counts,
        assignment,
        config.alpha,
        iterations,
        Backend::Dinkelbach,
        trace,
    )
}

fn dinkelbach_exact(
    a: &[Vec<u128>],
    b: &[Vec<u128>],
    config: &SolverConfig,
) -> Result<(Vec<usize>, usize, Vec<f64>)> {
    let systems = a.len();
    let types = a[0].len();
    let row_value = |i: usize| -> (u128, u128) {
        (0..types).fold((0, 0), |(va, vb), j| (va + a[i][j], vb + b[i][j]))
    };
    // Best single-system start; ascending scan keeps the lowest index on ties.
    let mut x_row = 0usize;
    let mut value = row_value(0);
    for i in 1..systems {
        let v = row_value(i);
        if ratio_gt_u128(v, value) {
            value = v;
            x_row = i;
        }
    }
    let mut x = vec![x_row; types];
    let mut lambda = if value.1 == 0 { (0, 1) } else { value };
    let mut trace = vec![lambda.0 as f64 / lambda.1 as f64];

    for iteration in 1..=config.max_iterations {
        let (p, q) = lambda;
        let mut h: i128 = 0;
        let mut next = vec![0usize; types];
        for j in 0..types {
            let mut best_score = q as i128 * a[0][j] as i128 - p as i128 * b[0][j] as i128;
            let mut best_row = 0usize;
            for (i, (ai, bi)) in a.iter().zip(b).enumerate().skip(1) {
                let score = q as i128 * ai[j] as i128 - p as i128 * bi[j] as i128;
                if score > best_score {
                    best_score = score;
                    best_row = i;
                }
            }
            next[j] = best_row;
            h += best_score;
        }
        debug_assert!(h >= 0, "the current iterate already achieves 0");
        if h == 0 {
            // No selection improves on lambda: x is optimal.
            return Ok((x, iteration, trace));
        }
        let value = next
            .iter()
            .enumerate()
            .fold((0u128, 0u128), |(va, vb), (j, &i)| (va + a[i][j], vb + b[i][j]));
        x = next;
        lambda = value; // h > 0 implies value.1 > 0
        trace.push(lambda.0 as f64 / lambda.1 as f64);
    }
    Err(Error::NonConvergence {
        iterations: config.max_iterations,
        last_lambda: lambda.0 as f64 / lambda.1 as f64,
    })
}

fn dinkelbach_float(
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    config: &SolverConfig,
) -> Result<(Vec<usize>, usize, Vec<f64>)> {
    let systems = a.len();
    let types = a[0].len();
    let row_value = |i: usize| -> (f64, f64) {
        (0..types).fold((0.0, 0.0), |(va, vb), j| (va + a[i][j], vb + b[i][j]))
    };
    let mut x_row = 0usize;
    let mut value = row_value(0);
    for i in 1..systems {
        let v = row_value(i);
        if ratio_gt_f64(v, value) {
            value = v;
            x_row = i;
        }
    }
    let mut x = vec![x_row; types];
    let mut lambda = if value.1 == 0.0 { 0.0 } else { value.0 / value.1 };
    let mut trace = vec![lambda];

    for iteration in 1..=config.max_iterations {
        let mut h = 0.0f64;
        let mut next = vec![0usize; types];
        for j in 0..types {
            let mut best_score = a[0][j] - lambda * b[0][j];
            let mut best_row = 0usize;
            for (i, (ai, bi)) in a.iter().zip(b).enumerate().skip(1) {
                let score = ai[j] - lambda * bi[j];
                if score > best_score {
                    best_score = score;
                    best_row = i;
                }
            }
            next[j] = best_row;
            h += best_score;
        }
        if h <= config.dinkelbach_tolerance {
            return Ok((x, iteration, trace));
        }
        let value = next
            .iter()
            .enumerate()
            .fold((0.0f64, 0.0f64), |(va, vb), (j, &i)| (va + a[i][j], vb + b[i][j]));
        let new_lambda = if value.1 == 0.0 { 0.0 } else { value.0 / value.1 };
        if new_lambda <= lambda {
            // Float plateau: no strict progress is possible.
            return Ok((x, iteration, trace));
        }
        x = next;
        lambda = new_lambda;
        trace.push(lambda);
    }
    Err(Error::NonConvergence {
        iterations: config.max_iterations,
        last_lambda: lambda,
    })
}

/// Dispatches on the configured backend. An exhaustive request whose search
/// space exceeds the enumeration cap falls back to dinkelbach, which
/// reaches the same optimum.
pub fn solve(counts: &CountMatrix, config: &SolverConfig) -> Result<SolveResult> {
    config.validate()?;
    match config.backend {
        Backend::Exhaustive => {
            let systems = counts.systems() + config.allow_abstain as usize;
            let space = (systems as u128)
                .checked_pow(counts.types() as u32)
                .unwrap_or(u128::MAX);
            if space > config.enumeration_cap as u128 {
                log::info!(
                    "search space {space} exceeds cap {}; falling back to dinkelbach",
                    config.enumeration_cap
                );
                solve_dinkelbach(counts, config)
            } else {
                solve_exhaustive(counts, config)
            }
        }
        Backend::Dinkelbach => solve_dinkelbach(counts, config),
    }
}
