//! Edit matching and TP/FP/FN accumulation.
//!
//! A hypothesis edit scores a true positive when some reference edit has the
//! same span and replacement; the pair is attributed to the reference edit's
//! error type. Unmatched hypothesis edits are false positives under their
//! own type; unmatched reference edits are false negatives under theirs.
//! Summing over a training corpus per system and per type yields the
//! [`CountMatrix`] the solver optimizes over.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::evaluation::sentence_f;
use crate::m2::{CorpusEdits, Edit, SentenceAnnotation};
use crate::solver::SelectionMatrix;
use crate::Result;

/// Deterministic mapping between error-type strings and column indices.
///
/// Types are unique and sorted lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorTypeIndex {
    types: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl ErrorTypeIndex {
    pub fn new(types: impl IntoIterator<Item = String>) -> Self {
        let set: BTreeSet<String> = types.into_iter().collect();
        let types: Vec<String> = set.into_iter().collect();
        let lookup = types
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        ErrorTypeIndex { types, lookup }
    }

    /// Every error type occurring in any edit of the given corpora.
    pub fn from_corpora<'a>(corpora: impl IntoIterator<Item = &'a CorpusEdits>) -> Self {
        Self::new(
            corpora
                .into_iter()
                .flat_map(|c| &c.sentences)
                .flat_map(|s| s.edits())
                .map(|e| e.error_type.clone()),
        )
    }

    pub fn types(&self) -> &[String] {
        &self.types
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn index_of(&self, error_type: &str) -> Option<usize> {
        self.lookup.get(error_type).copied()
    }
}

/// Which reference annotator the counts are accumulated against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AnnotatorPolicy {
    /// Per sentence and system, score against the annotator maximizing that
    /// system's sentence-level F (ties to the lowest annotator id). This is
    /// the convention of the standard edit-level scorer.
    #[default]
    Best,
    /// Always score against one annotator; sentences where that annotator is
    /// absent count as annotated with no edits.
    Fixed(u32),
}

/// Outcome of matching one hypothesis edit list against one reference list.
#[derive(Debug, Clone)]
pub struct MatchResult<'a> {
    /// `(hypothesis, reference)` pairs with equal span and replacement.
    pub matched: Vec<(&'a Edit, &'a Edit)>,
    pub unmatched_hyp: Vec<&'a Edit>,
    pub unmatched_ref: Vec<&'a Edit>,
}

impl MatchResult<'_> {
    pub fn tp(&self) -> u64 {
        self.matched.len() as u64
    }

    pub fn fp(&self) -> u64 {
        self.unmatched_hyp.len() as u64
    }

    pub fn fn_(&self) -> u64 {
        self.unmatched_ref.len() as u64
    }
}

fn match_edit_refs<'a>(hypothesis: &[&'a Edit], reference: &[&'a Edit]) -> MatchResult<'a> {
    // Spans within a list are non-overlapping, so (span, replacement) keys
    // are unique per side and matching is a plain key intersection.
    let mut by_key: HashMap<(usize, usize, &[String]), &'a Edit> = reference
        .iter()
        .map(|e| (e.correction_key(), *e))
        .collect();
    let mut matched = Vec::new();
    let mut unmatched_hyp = Vec::new();
    for hyp in hypothesis {
        match by_key.remove(&hyp.correction_key()) {
            Some(re) => matched.push((*hyp, re)),
            None => unmatched_hyp.push(*hyp),
        }
    }
    let mut unmatched_ref: Vec<&Edit> = by_key.into_values().collect();
    unmatched_ref.sort_unstable();
    MatchResult {
        matched,
        unmatched_hyp,
        unmatched_ref,
    }
}

/// Matches hypothesis edits against reference edits one-to-one.
///
/// Two edits match when `(start, end, replacement)` are all equal; the error
/// type does not need to agree, and a matched pair is attributed to the
/// reference edit's type.
pub fn match_edits<'a>(hypothesis: &'a [Edit], reference: &'a [Edit]) -> MatchResult<'a> {
    let hyp: Vec<&Edit> = hypothesis.iter().collect();
    let reference: Vec<&Edit> = reference.iter().collect();
    match_edit_refs(&hyp, &reference)
}

/// Matches a hypothesis sentence against a reference sentence under the
/// given annotator policy, returning the chosen annotator id and the match.
pub(crate) fn match_sentence<'a>(
    hypothesis: &'a SentenceAnnotation,
    reference: &'a SentenceAnnotation,
    alpha: f64,
    policy: AnnotatorPolicy,
) -> (u32, MatchResult<'a>) {
    let hyp: Vec<&Edit> = hypothesis.edits().iter().collect();
    match policy {
        AnnotatorPolicy::Fixed(id) => {
            let refs = reference.annotator_edits(id);
            (id, match_edit_refs(&hyp, &refs))
        }
        AnnotatorPolicy::Best => {
            let mut best: Option<(u32, f64, MatchResult)> = None;
            for &annotator in reference.annotators() {
                let refs = reference.annotator_edits(annotator);
                let result = match_edit_refs(&hyp, &refs);
                let f = sentence_f(result.tp(), result.fp(), result.fn_(), alpha);
                // Ascending annotator order plus strict comparison breaks
                // ties toward the lowest id.
                if best.as_ref().is_none_or(|(_, best_f, _)| f > *best_f) {
                    best = Some((annotator, f, result));
                }
            }
            let (annotator, _, result) =
                best.expect("a sentence always registers at least one annotator");
            (annotator, result)
        }
    }
}

/// Per-system, per-error-type true/false positive and false negative counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountMatrix {
    system_ids: Vec<String>,
    type_index: ErrorTypeIndex,
    tp: Vec<Vec<u64>>,
    fp: Vec<Vec<u64>>,
    fn_: Vec<Vec<u64>>,
}

#[derive(Serialize, Deserialize)]
struct CountMatrixDto {
    system_ids: Vec<String>,
    types: Vec<String>,
    tp: Vec<Vec<u64>>,
    fp: Vec<Vec<u64>>,
    #[serde(rename = "fn")]
    fn_: Vec<Vec<u64>>,
}

impl CountMatrix {
    /// Builds a matrix from explicit grids. Grids are indexed `[system][type]`.
    pub fn from_grids(
        system_ids: Vec<String>,
        type_index: ErrorTypeIndex,
        tp: Vec<Vec<u64>>,
        fp: Vec<Vec<u64>>,
        fn_: Vec<Vec<u64>>,
    ) -> Result<Self> {
        let systems = system_ids.len();
        let types = type_index.len();
        if systems == 0 || types == 0 {
            return Err(Error::Dimension(
                "a count matrix needs at least one system and one error type".into(),
            ));
        }
        for grid in [&tp, &fp, &fn_] {
            if grid.len() != systems || grid.iter().any(|row| row.len() != types) {
                return Err(Error::Dimension(format!(
                    "count grids must all be {systems}x{types}"
                )));
            }
        }
        Ok(CountMatrix {
            system_ids,
            type_index,
            tp,
            fp,
            fn_,
        })
    }

    pub fn system_ids(&self) -> &[String] {
        &self.system_ids
    }

    pub fn type_index(&self) -> &ErrorTypeIndex {
        &self.type_index
    }

    /// Number of systems (rows).
    pub fn systems(&self) -> usize {
        self.system_ids.len()
    }

    /// Number of error types (columns).
    pub fn types(&self) -> usize {
        self.type_index.len()
    }

    pub fn tp(&self, system: usize, ty: usize) -> u64 {
        self.tp[system][ty]
    }

    pub fn fp(&self, system: usize, ty: usize) -> u64 {
        self.fp[system][ty]
    }

    pub fn fn_(&self, system: usize, ty: usize) -> u64 {
        self.fn_[system][ty]
    }

    /// Row totals `(tp, fp, fn)` for one system across all types.
    pub fn row_totals(&self, system: usize) -> (u64, u64, u64) {
        (
            self.tp[system].iter().sum(),
            self.fp[system].iter().sum(),
            self.fn_[system].iter().sum(),
        )
    }

    pub fn is_all_zero(&self) -> bool {
        [&self.tp, &self.fp, &self.fn_]
            .iter()
            .all(|g| g.iter().flatten().all(|&v| v == 0))
    }

    /// Stable JSON form `{system_ids, types, tp, fp, fn}`.
    pub fn to_json(&self) -> String {
        let dto = CountMatrixDto {
            system_ids: self.system_ids.clone(),
            types: self.type_index.types().to_vec(),
            tp: self.tp.clone(),
            fp: self.fp.clone(),
            fn_: self.fn_.clone(),
        };
        serde_json::to_string_pretty(&dto).expect("count matrix serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let dto: CountMatrixDto =
            serde_json::from_str(text).map_err(|e| Error::Artifact(e.to_string()))?;
        let type_index = ErrorTypeIndex::new(dto.types.iter().cloned());
        if type_index.types() != dto.types.as_slice() {
            return Err(Error::Artifact(
                "count matrix types must be sorted and unique".into(),
            ));
        }
        Self::from_grids(dto.system_ids, type_index, dto.tp, dto.fp, dto.fn_)
    }

    /// Human-readable TSV, one row per `(system, type)`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("system\ttype\ttp\tfp\tfn\n");
        for (i, system) in self.system_ids.iter().enumerate() {
            for (j, ty) in self.type_index.types().iter().enumerate() {
                out.push_str(&format!(
                    "{system}\t{ty}\t{}\t{}\t{}\n",
                    self.tp[i][j], self.fp[i][j], self.fn_[i][j]
                ));
            }
        }
        out
    }
}

/// Accumulates the count matrix for `hypotheses` against `reference`.
///
/// All corpora must be aligned. The type index is the union of types seen in
/// any hypothesis or reference edit. With multiple reference annotators the
/// per-sentence annotator choice follows `policy`.
pub fn build_count_matrix(
    hypotheses: &[CorpusEdits],
    reference: &CorpusEdits,
    alpha: f64,
    policy: AnnotatorPolicy,
) -> Result<CountMatrix> {
    if hypotheses.is_empty() {
        return Err(Error::Dimension("no hypothesis corpora given".into()));
    }
    for hyp in hypotheses {
        hyp.check_aligned(reference)?;
    }
    let type_index =
        ErrorTypeIndex::from_corpora(hypotheses.iter().chain(std::iter::once(reference)));
    if type_index.is_empty() {
        return Err(Error::Dimension(
            "no edits in any hypothesis or reference; nothing to count".into(),
        ));
    }
    let systems = hypotheses.len();
    let types = type_index.len();
    let mut tp = vec![vec![0u64; types]; systems];
    let mut fp = vec![vec![0u64; types]; systems];
    let mut fn_ = vec![vec![0u64; types]; systems];

    for (i, hyp) in hypotheses.iter().enumerate() {
        for (hyp_sent, ref_sent) in hyp.sentences.iter().zip(&reference.sentences) {
            let (_, result) = match_sentence(hyp_sent, ref_sent, alpha, policy);
            for (_, ref_edit) in &result.matched {
                let j = type_index.index_of(&ref_edit.error_type).expect("indexed");
                tp[i][j] += 1;
            }
            for hyp_edit in &result.unmatched_hyp {
                let j = type_index.index_of(&hyp_edit.error_type).expect("indexed");
                fp[i][j] += 1;
            }
            for ref_edit in &result.unmatched_ref {
                let j = type_index.index_of(&ref_edit.error_type).expect("indexed");
                fn_[i][j] += 1;
            }
        }
    }
    CountMatrix::from_grids(
        hypotheses.iter().map(|h| h.system_id.clone()).collect(),
        type_index,
        tp,
        fp,
        fn_,
    )
}

/// Sums the counts selected by `x`: `TP_sum = sum_ij tp[i][j] * x[i][j]`,
/// likewise for FP and FN.
///
/// Systems are resolved by label so a selection over augmented or reordered
/// system ids still sums correctly; the reserved abstain label contributes
/// nothing. Type columns must agree exactly.
pub fn counts_for_selection(
    counts: &CountMatrix,
    x: &SelectionMatrix,
) -> Result<(u64, u64, u64)> {
    if x.type_index().types() != counts.type_index().types() {
        return Err(Error::Dimension(
            "selection and count matrix cover different error types".into(),
        ));
    }
    let row_of: HashMap<&str, usize> = counts
        .system_ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (j, label) in x.assigned_labels().enumerate() {
        if label == SelectionMatrix::ABSTAIN_LABEL {
            continue;
        }
        let &i = row_of.get(label).ok_or_else(|| {
            Error::Dimension(format!("selection references unknown system {label:?}"))
        })?;
        tp += counts.tp[i][j];
        fp += counts.fp[i][j];
        fn_ += counts.fn_[i][j];
    }
    Ok((tp, fp, fn_))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::m2::parse_m2;
    use proptest::prelude::*;

    fn edit(start: usize, end: usize, ty: &str, repl: &str) -> Edit {
        Edit::new(start, end, ty, repl, 0)
    }

    #[test]
    fn match_identical_edit() {
        let hyp = [edit(1, 2, "R:VERB:SVA", "is")];
        let reference = [edit(1, 2, "R:VERB:SVA", "is")];
        let m = match_edits(&hyp, &reference);
        assert_eq!((m.tp(), m.fp(), m.fn_()), (1, 0, 0));
    }

    #[test]
    fn match_empty_hypothesis() {
        let reference = [edit(1, 2, "R:VERB:SVA", "is")];
        let m = match_edits(&[], &reference);
        assert_eq!((m.tp(), m.fp(), m.fn_()), (0, 0, 1));
    }

    #[test]
    fn match_mixed_pairings() {
        // Hand enumeration: (1,2,"was") matches nothing (replacement differs),
        // (3,4,"a") matches exactly; the ref (1,2,"is") goes unmatched.
        let hyp = [edit(1, 2, "R:VERB:SVA", "was"), edit(3, 4, "R:DET", "a")];
        let reference = [edit(1, 2, "R:VERB:SVA", "is"), edit(3, 4, "R:DET", "a")];
        let m = match_edits(&hyp, &reference);
        assert_eq!((m.tp(), m.fp(), m.fn_()), (1, 1, 1));
    }

    #[test]
    fn match_is_type_insensitive_but_attributes_reference_type() {
        let hyp = [edit(1, 2, "R:OTHER", "is")];
        let reference = [edit(1, 2, "R:VERB:SVA", "is")];
        let m = match_edits(&hyp, &reference);
        assert_eq!(m.tp(), 1);
        assert_eq!(m.matched[0].1.error_type, "R:VERB:SVA");
    }

    const REF: &str = "\
S This are bad .
A 1 2|||R:VERB:SVA|||is|||REQUIRED|||-NONE-|||0

S I has a apple .
A 1 2|||R:VERB:SVA|||have|||REQUIRED|||-NONE-|||0
A 2 3|||R:DET|||an|||REQUIRED|||-NONE-|||0

S She like turtles very much .
A 1 2|||R:VERB:SVA|||likes|||REQUIRED|||-NONE-|||0
";

    const SYS_A: &str = "\
S This are bad .
A 1 2|||R:VERB:SVA|||is|||REQUIRED|||-NONE-|||0

S I has a apple .
A 1 2|||R:VERB:SVA|||have|||REQUIRED|||-NONE-|||0
A 3 4|||R:NOUN|||apples|||REQUIRED|||-NONE-|||0

S She like turtles very much .
A 1 2|||R:VERB:SVA|||likes|||REQUIRED|||-NONE-|||0
";

    const SYS_B: &str = "\
S This are bad .
A -1 -1|||noop|||-NONE-|||REQUIRED|||-NONE-|||0

S I has a apple .
A 2 3|||R:DET|||an|||REQUIRED|||-NONE-|||0

S She like turtles very much .
A 1 2|||R:VERB:SVA|||liked|||REQUIRED|||-NONE-|||0
";

    fn fixture() -> (Vec<CorpusEdits>, CorpusEdits) {
        let a = parse_m2(SYS_A, "sys_a").unwrap();
        let b = parse_m2(SYS_B, "sys_b").unwrap();
        let reference = parse_m2(REF, "ref").unwrap();
        (vec![a, b], reference)
    }

    #[test]
    fn perfect_system_has_tp_only() {
        let reference = parse_m2(REF, "ref").unwrap();
        let mut hyp = reference.clone();
        hyp.system_id = "copy".into();
        let counts = build_count_matrix(&[hyp], &reference, 0.5, AnnotatorPolicy::Best).unwrap();
        let sva = counts.type_index().index_of("R:VERB:SVA").unwrap();
        let det = counts.type_index().index_of("R:DET").unwrap();
        assert_eq!(counts.tp(0, sva), 3);
        assert_eq!(counts.tp(0, det), 1);
        assert_eq!(counts.row_totals(0), (4, 0, 0));
    }

    #[test]
    fn do_nothing_system_has_fn_only() {
        let reference = parse_m2(REF, "ref").unwrap();
        let empty = parse_m2(
            "S This are bad .\n\nS I has a apple .\n\nS She like turtles very much .\n",
            "empty",
        )
        .unwrap();
        let counts = build_count_matrix(&[empty], &reference, 0.5, AnnotatorPolicy::Best).unwrap();
        let sva = counts.type_index().index_of("R:VERB:SVA").unwrap();
        let det = counts.type_index().index_of("R:DET").unwrap();
        assert_eq!(counts.row_totals(0), (0, 0, 4));
        assert_eq!(counts.fn_(0, sva), 3);
        assert_eq!(counts.fn_(0, det), 1);
    }

    #[test]
    fn fixture_matrix_matches_hand_tally() {
        // Frozen per-sentence tally:
        //   sys_a: TP 3x SVA; FP 1x R:NOUN; FN 1x R:DET
        //   sys_b: TP 1x R:DET; FP 1x SVA (liked != likes); FN 3x SVA
        let (hyps, reference) = fixture();
        let counts = build_count_matrix(&hyps, &reference, 0.5, AnnotatorPolicy::Best).unwrap();
        assert_eq!(counts.type_index().types(), ["R:DET", "R:NOUN", "R:VERB:SVA"]);
        let (det, noun, sva) = (0, 1, 2);
        assert_eq!(
            [counts.tp(0, det), counts.tp(0, noun), counts.tp(0, sva)],
            [0, 0, 3]
        );
        assert_eq!(
            [counts.fp(0, det), counts.fp(0, noun), counts.fp(0, sva)],
            [0, 1, 0]
        );
        assert_eq!(
            [counts.fn_(0, det), counts.fn_(0, noun), counts.fn_(0, sva)],
            [1, 0, 0]
        );
        assert_eq!(
            [counts.tp(1, det), counts.tp(1, noun), counts.tp(1, sva)],
            [1, 0, 0]
        );
        assert_eq!(
            [counts.fp(1, det), counts.fp(1, noun), counts.fp(1, sva)],
            [0, 0, 1]
        );
        assert_eq!(
            [counts.fn_(1, det), counts.fn_(1, noun), counts.fn_(1, sva)],
            [0, 0, 3]
        );
    }

    #[test]
    fn conservation_tp_plus_fn_covers_reference_edits() {
        let (hyps, reference) = fixture();
        let counts = build_count_matrix(&hyps, &reference, 0.5, AnnotatorPolicy::Best).unwrap();
        // Single-annotator reference: tp + fn per type equals the reference
        // count of that type for every system.
        let mut per_type = vec![0u64; counts.types()];
        for sent in &reference.sentences {
            for e in sent.edits() {
                per_type[counts.type_index().index_of(&e.error_type).unwrap()] += 1;
            }
        }
        for i in 0..counts.systems() {
            for (j, &expected) in per_type.iter().enumerate() {
                assert_eq!(counts.tp(i, j) + counts.fn_(i, j), expected, "system {i} type {j}");
            }
        }
    }

    #[test]
    fn permuting_hypotheses_permutes_rows() {
        let (hyps, reference) = fixture();
        let fwd = build_count_matrix(&hyps, &reference, 0.5, AnnotatorPolicy::Best).unwrap();
        let rev: Vec<CorpusEdits> = hyps.iter().rev().cloned().collect();
        let bwd = build_count_matrix(&rev, &reference, 0.5, AnnotatorPolicy::Best).unwrap();
        for j in 0..fwd.types() {
            assert_eq!(fwd.tp(0, j), bwd.tp(1, j));
            assert_eq!(fwd.fp(1, j), bwd.fp(0, j));
            assert_eq!(fwd.fn_(0, j), bwd.fn_(1, j));
        }
    }

    #[test]
    fn best_annotator_prefers_higher_sentence_f() {
        let reference = parse_m2(
            "S He go to school .\nA 1 2|||R:VERB:SVA|||goes|||REQUIRED|||-NONE-|||0\nA 1 2|||R:VERB:TENSE|||went|||REQUIRED|||-NONE-|||1\n",
            "ref",
        )
        .unwrap();
        let hyp = parse_m2(
            "S He go to school .\nA 1 2|||R:VERB:TENSE|||went|||REQUIRED|||-NONE-|||0\n",
            "hyp",
        )
        .unwrap();
        let counts = build_count_matrix(&[hyp], &reference, 0.5, AnnotatorPolicy::Best).unwrap();
        // Annotator 1 matches the hypothesis exactly; annotator 0 would give
        // one FP and one FN.
        assert_eq!(counts.row_totals(0), (1, 0, 0));
        let tense = counts.type_index().index_of("R:VERB:TENSE").unwrap();
        assert_eq!(counts.tp(0, tense), 1);
    }

    #[test]
    fn best_annotator_prefers_noop_for_empty_hypothesis() {
        // A do-nothing hypothesis scores perfectly against the annotator who
        // proposed nothing, so no FN accumulates regardless of id order.
        let reference = parse_m2(
            "S It is day .\nA 2 3|||R:NOUN|||morning|||REQUIRED|||-NONE-|||0\nA -1 -1|||noop|||-NONE-|||REQUIRED|||-NONE-|||1\n",
            "ref",
        )
        .unwrap();
        let hyp = parse_m2("S It is day .\n", "hyp").unwrap();
        let counts = build_count_matrix(&[hyp], &reference, 0.5, AnnotatorPolicy::Best);
        // The only edit type in play comes from annotator 0.
        let counts = counts.unwrap();
        assert_eq!(counts.row_totals(0), (0, 0, 0));
    }

    #[test]
    fn fixed_annotator_policy_uses_that_annotator() {
        let reference = parse_m2(
            "S It is day .\nA 2 3|||R:NOUN|||morning|||REQUIRED|||-NONE-|||0\nA -1 -1|||noop|||-NONE-|||REQUIRED|||-NONE-|||1\n",
            "ref",
        )
        .unwrap();
        let hyp = parse_m2("S It is day .\n", "hyp").unwrap();
        let counts =
            build_count_matrix(&[hyp], &reference, 0.5, AnnotatorPolicy::Fixed(0)).unwrap();
        assert_eq!(counts.row_totals(0), (0, 0, 1));
    }

    #[test]
    fn alignment_errors_name_the_sentence() {
        let reference = parse_m2("S a b .\n\nS c d .\n", "ref").unwrap();
        let short = parse_m2("S a b .\n", "short").unwrap();
        assert!(matches!(
            build_count_matrix(&[short], &reference, 0.5, AnnotatorPolicy::Best),
            Err(Error::Alignment(_))
        ));
        let skewed = parse_m2("S a b .\n\nS c X .\n", "skewed").unwrap();
        let err =
            build_count_matrix(&[skewed], &reference, 0.5, AnnotatorPolicy::Best).unwrap_err();
        match err {
            Error::Alignment(msg) => assert!(msg.contains("sentence 1"), "{msg}"),
            other => panic!("expected alignment error, got {other:?}"),
        }
    }

    #[test]
    fn selection_sums_row_for_single_system_selection() {
        let (hyps, reference) = fixture();
        let counts = build_count_matrix(&hyps, &reference, 0.5, AnnotatorPolicy::Best).unwrap();
        let sel = SelectionMatrix::single_system(
            counts.system_ids().to_vec(),
            counts.type_index().clone(),
            0,
        )
        .unwrap();
        assert_eq!(counts_for_selection(&counts, &sel).unwrap(), counts.row_totals(0));
    }

    #[test]
    fn json_round_trip_is_stable() {
        let (hyps, reference) = fixture();
        let counts = build_count_matrix(&hyps, &reference, 0.5, AnnotatorPolicy::Best).unwrap();
        let json = counts.to_json();
        let back = CountMatrix::from_json(&json).unwrap();
        assert_eq!(counts, back);
        assert!(counts.to_tsv().contains("sys_a\tR:VERB:SVA\t3\t0\t0"));
    }

    proptest! {
        #[test]
        fn prop_counts_for_selection_equals_double_loop(
            tp in proptest::collection::vec(proptest::collection::vec(0u64..20, 5), 3),
            fp in proptest::collection::vec(proptest::collection::vec(0u64..20, 5), 3),
            fn_ in proptest::collection::vec(proptest::collection::vec(0u64..20, 5), 3),
            assignment in proptest::collection::vec(0usize..3, 5),
        ) {
            let type_index = ErrorTypeIndex::new((0..5).map(|j| format!("T:{j}")));
            let systems = vec!["s0".to_string(), "s1".to_string(), "s2".to_string()];
            let counts = CountMatrix::from_grids(
                systems.clone(), type_index.clone(), tp.clone(), fp.clone(), fn_.clone(),
            ).unwrap();
            let sel = SelectionMatrix::from_assignment(systems, type_index, assignment.clone())
                .unwrap();
            let got = counts_for_selection(&counts, &sel).unwrap();
            let mut want = (0u64, 0u64, 0u64);
            for (j, &i) in assignment.iter().enumerate() {
                want.0 += tp[i][j];
                want.1 += fp[i][j];
                want.2 += fn_[i][j];
            }
            prop_assert_eq!(got, want);
        }
    }
}
