//! Edit-level scoring (P, R, F_alpha) and the per-sentence split-half
//! analysis.
//!
//! Precision and recall use the standard edit-scorer conventions: an empty
//! denominator counts as perfect (0/0 = 1.0). A sentence with no hypothesis
//! and no reference edits therefore scores F = 1, which matters when
//! choosing the best reference annotator and when classifying sentences.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::counting::{match_sentence, AnnotatorPolicy};
use crate::m2::CorpusEdits;
use crate::Result;

/// `tp / (tp + fp)`, with the empty case counting as 1.0.
pub fn precision(tp: u64, fp: u64) -> f64 {
    if tp + fp == 0 {
        1.0
    } else {
        tp as f64 / (tp + fp) as f64
    }
}

/// `tp / (tp + fn)`, with the empty case counting as 1.0.
pub fn recall(tp: u64, fn_: u64) -> f64 {
    if tp + fn_ == 0 {
        1.0
    } else {
        tp as f64 / (tp + fn_) as f64
    }
}

/// F_alpha from precision and recall:
/// `(1 + alpha^2) * p * r / (alpha^2 * p + r)`, 0 when the denominator is 0.
pub fn f_beta_from_pr(p: f64, r: f64, alpha: f64) -> f64 {
    let a2 = alpha * alpha;
    let den = a2 * p + r;
    if den == 0.0 {
        0.0
    } else {
        (1.0 + a2) * p * r / den
    }
}

/// F_alpha directly from counts:
/// `(1 + alpha^2) * tp / ((1 + alpha^2) * tp + fp + alpha^2 * fn)`.
///
/// All-zero counts yield 0 by convention; this is the solver's objective
/// form. Note [`sentence_f`] scores the all-zero case as 1 instead.
pub fn f_beta_from_counts(tp: u64, fp: u64, fn_: u64, alpha: f64) -> f64 {
    let a2 = alpha * alpha;
    let num = (1.0 + a2) * tp as f64;
    let den = num + fp as f64 + a2 * fn_ as f64;
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Sentence-level F via the P/R conventions: a sentence with no edits on
/// either side is perfect (F = 1).
pub fn sentence_f(tp: u64, fp: u64, fn_: u64, alpha: f64) -> f64 {
    f_beta_from_pr(precision(tp, fp), recall(tp, fn_), alpha)
}

/// Counts plus the derived P/R/F for one slice of the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreTriple {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f_alpha: f64,
}

impl ScoreTriple {
    fn from_counts(tp: u64, fp: u64, fn_: u64, alpha: f64) -> Self {
        ScoreTriple {
            tp,
            fp,
            fn_,
            precision: precision(tp, fp),
            recall: recall(tp, fn_),
            f_alpha: sentence_f(tp, fp, fn_, alpha),
        }
    }
}

/// Per-sentence counts and F.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SentenceScore {
    pub sentence: usize,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub f_alpha: f64,
}

/// Scoring report at corpus, per-type, and per-sentence granularity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub alpha: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f_alpha: f64,
    pub per_type: BTreeMap<String, ScoreTriple>,
    pub per_sentence: Vec<SentenceScore>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Fixed-width table in the conventional scorer layout.
    pub fn to_text_table(&self, per_type: bool) -> String {
        let mut out = String::new();
        let header = format!("{:>8} {:>8} {:>8} {:>8} {:>8} {:>8}", "TP", "FP", "FN", "Prec", "Rec", "F");
        if per_type && !self.per_type.is_empty() {
            let width = self.per_type.keys().map(|t| t.len()).max().unwrap_or(4).max(4);
            let _ = writeln!(out, "{:<width$} {header}", "type");
            for (ty, s) in &self.per_type {
                let _ = writeln!(
                    out,
                    "{:<width$} {:>8} {:>8} {:>8} {:>8.4} {:>8.4} {:>8.4}",
                    ty, s.tp, s.fp, s.fn_, s.precision, s.recall, s.f_alpha
                );
            }
            out.push('\n');
        }
        let _ = writeln!(out, "{header}");
        let _ = writeln!(
            out,
            "{:>8} {:>8} {:>8} {:>8.4} {:>8.4} {:>8.4}",
            self.tp, self.fp, self.fn_, self.precision, self.recall, self.f_alpha
        );
        out
    }
}

/// Scores `hypothesis` against `reference` at edit level.
///
/// Matching and the per-sentence annotator choice follow the same
/// conventions as count-matrix construction, so the corpus totals here equal
/// the corresponding single-system count-matrix row.
pub fn evaluate(
    hypothesis: &CorpusEdits,
    reference: &CorpusEdits,
    alpha: f64,
    policy: AnnotatorPolicy,
) -> Result<EvalReport> {
    hypothesis.check_aligned(reference)?;
    let mut totals = (0u64, 0u64, 0u64);
    let mut per_type_counts: BTreeMap<String, (u64, u64, u64)> = BTreeMap::new();
    let mut per_sentence = Vec::with_capacity(hypothesis.len());
    for (idx, (hyp_sent, ref_sent)) in hypothesis
        .sentences
        .iter()
        .zip(&reference.sentences)
        .enumerate()
    {
        let (_, result) = match_sentence(hyp_sent, ref_sent, alpha, policy);
        let (tp, fp, fn_) = (result.tp(), result.fp(), result.fn_());
        for (_, ref_edit) in &result.matched {
            per_type_counts.entry(ref_edit.error_type.clone()).or_default().0 += 1;
        }
        for hyp_edit in &result.unmatched_hyp {
            per_type_counts.entry(hyp_edit.error_type.clone()).or_default().1 += 1;
        }
        for ref_edit in &result.unmatched_ref {
            per_type_counts.entry(ref_edit.error_type.clone()).or_default().2 += 1;
        }
        totals.0 += tp;
        totals.1 += fp;
        totals.2 += fn_;
        per_sentence.push(SentenceScore {
            sentence: idx,
            tp,
            fp,
            fn_,
            f_alpha: sentence_f(tp, fp, fn_, alpha),
        });
    }
    let (tp, fp, fn_) = totals;
    Ok(EvalReport {
        alpha,
        tp,
        fp,
        fn_,
        precision: precision(tp, fp),
        recall: recall(tp, fn_),
        f_alpha: sentence_f(tp, fp, fn_, alpha),
        per_type: per_type_counts
            .into_iter()
            .map(|(ty, (tp, fp, fn_))| (ty, ScoreTriple::from_counts(tp, fp, fn_, alpha)))
            .collect(),
        per_sentence,
    })
}

/// Aggregate F over a sentence subset for the two component systems and the
/// combined system, micro (pooled counts) and macro (mean of sentence F).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsetAggregate {
    pub sentences: usize,
    pub micro_f_combined: f64,
    pub micro_f_system_a: f64,
    pub micro_f_system_b: f64,
    pub macro_f_combined: f64,
    pub macro_f_system_a: f64,
    pub macro_f_system_b: f64,
}

/// Outcome of the per-sentence comparison of two component systems with
/// their combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub alpha: f64,
    pub total_sentences: usize,
    /// Sentences where the two systems' F are identical.
    pub class_same: usize,
    /// Sentences where they differ.
    pub class_diff: usize,
    /// Same-score sentences where the combination ties or beats the shared F.
    pub improved_or_equal_in_same: usize,
    /// Different-score sentences where the combination beats the two
    /// systems' mean F.
    pub improved_in_diff: usize,
    /// Aggregates over the qualifying same-score sentences.
    pub same_class_aggregate: SubsetAggregate,
    /// Aggregates over the qualifying different-score sentences.
    pub diff_class_aggregate: SubsetAggregate,
}

impl AnalysisReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "sentences analyzed: {}", self.total_sentences);
        let _ = writeln!(
            out,
            "identical system F: {} sentences; combination ties or beats on {}",
            self.class_same, self.improved_or_equal_in_same
        );
        let _ = writeln!(
            out,
            "different system F: {} sentences; combination beats the mean on {}",
            self.class_diff, self.improved_in_diff
        );
        for (label, agg) in [
            ("same-score subset", &self.same_class_aggregate),
            ("diff-score subset", &self.diff_class_aggregate),
        ] {
            let _ = writeln!(
                out,
                "{label} ({} sentences): micro F combined {:.4} vs A {:.4} / B {:.4}; \
                 macro F combined {:.4} vs A {:.4} / B {:.4}",
                agg.sentences,
                agg.micro_f_combined,
                agg.micro_f_system_a,
                agg.micro_f_system_b,
                agg.macro_f_combined,
                agg.macro_f_system_a,
                agg.macro_f_system_b
            );
        }
        out
    }
}

#[derive(Default)]
struct SubsetAccumulator {
    sentences: usize,
    counts: [(u64, u64, u64); 3],
    f_sums: [f64; 3],
}

impl SubsetAccumulator {
    fn add(&mut self, scores: [&SentenceScore; 3]) {
        self.sentences += 1;
        for (slot, s) in scores.iter().enumerate() {
            self.counts[slot].0 += s.tp;
            self.counts[slot].1 += s.fp;
            self.counts[slot].2 += s.fn_;
            self.f_sums[slot] += s.f_alpha;
        }
    }

    fn finish(self, alpha: f64) -> SubsetAggregate {
        // An empty subset reports zeros rather than the 0/0 = 1 convention.
        let micro = |slot: usize| {
            if self.sentences == 0 {
                return 0.0;
            }
            let (tp, fp, fn_) = self.counts[slot];
            sentence_f(tp, fp, fn_, alpha)
        };
        let macro_ = |slot: usize| {
            if self.sentences == 0 {
                0.0
            } else {
                self.f_sums[slot] / self.sentences as f64
            }
        };
        SubsetAggregate {
            sentences: self.sentences,
            micro_f_combined: micro(0),
            micro_f_system_a: micro(1),
            micro_f_system_b: micro(2),
            macro_f_combined: macro_(0),
            macro_f_system_a: macro_(1),
            macro_f_system_b: macro_(2),
        }
    }
}

/// Classifies each test sentence by whether the two component systems score
/// identically, then measures how often (and by how much) the combined
/// system ties or improves within each class.
///
/// Within the same-score class the qualifying subset is "combined ties or
/// beats the shared F"; within the different-score class it is "combined
/// beats the mean of the two systems' F".
pub fn split_half_analysis(
    system_a: &CorpusEdits,
    system_b: &CorpusEdits,
    reference: &CorpusEdits,
    combined: &CorpusEdits,
    alpha: f64,
    policy: AnnotatorPolicy,
) -> Result<AnalysisReport> {
    let report_a = evaluate(system_a, reference, alpha, policy)?;
    let report_b = evaluate(system_b, reference, alpha, policy)?;
    let report_c = evaluate(combined, reference, alpha, policy)?;

    let mut class_same = 0;
    let mut class_diff = 0;
    let mut improved_or_equal_in_same = 0;
    let mut improved_in_diff = 0;
    let mut same_acc = SubsetAccumulator::default();
    let mut diff_acc = SubsetAccumulator::default();

    for ((a, b), c) in report_a
        .per_sentence
        .iter()
        .zip(&report_b.per_sentence)
        .zip(&report_c.per_sentence)
    {
        if a.f_alpha == b.f_alpha {
            class_same += 1;
            if c.f_alpha >= a.f_alpha {
                improved_or_equal_in_same += 1;
                same_acc.add([c, a, b]);
            }
        } else {
            class_diff += 1;
            if c.f_alpha > (a.f_alpha + b.f_alpha) / 2.0 {
                improved_in_diff += 1;
                diff_acc.add([c, a, b]);
            }
        }
    }
    Ok(AnalysisReport {
        alpha,
        total_sentences: report_a.per_sentence.len(),
        class_same,
        class_diff,
        improved_or_equal_in_same,
        improved_in_diff,
        same_class_aggregate: same_acc.finish(alpha),
        diff_class_aggregate: diff_acc.finish(alpha),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counting::{build_count_matrix, AnnotatorPolicy};
    use crate::m2::parse_m2;
    use proptest::prelude::*;

    #[test]
    fn f_from_pr_reproduces_published_scores() {
        // Single-system rows of the BEA 2019 leaderboard snapshot used as
        // fixtures: percent-scale P/R must give back the percent-scale F.
        for (p, r, f) in [(72.28, 60.12, 69.47), (78.20, 57.90, 73.08), (75.19, 51.91, 69.00)] {
            let got = 100.0 * f_beta_from_pr(p / 100.0, r / 100.0, 0.5);
            assert!((got - f).abs() <= 0.0101, "({p}, {r}) gave {got}, want {f}");
        }
    }

    #[test]
    fn f_conventions() {
        assert_eq!(f_beta_from_pr(1.0, 1.0, 0.5), 1.0);
        assert_eq!(f_beta_from_pr(0.0, 0.0, 0.5), 0.0);
        assert_eq!(f_beta_from_counts(0, 3, 4, 0.5), 0.0);
        assert_eq!(f_beta_from_counts(0, 0, 0, 0.5), 0.0);
        // Sentence-level convention: nothing to correct, nothing proposed.
        assert_eq!(sentence_f(0, 0, 0, 0.5), 1.0);
        assert_eq!(f_beta_from_counts(3, 0, 0, 0.5), 1.0);
        // Frozen: f(3, 1, 2) = 3.75 / 5.25.
        assert!((f_beta_from_counts(3, 1, 2, 0.5) - 3.75 / 5.25).abs() < 1e-15);
    }

    const REF: &str = "\
S This are bad .
A 1 2|||R:VERB:SVA|||is|||REQUIRED|||-NONE-|||0

S I has a apple .
A 1 2|||R:VERB:SVA|||have|||REQUIRED|||-NONE-|||0
A 2 3|||R:DET|||an|||REQUIRED|||-NONE-|||0
";

    #[test]
    fn self_evaluation_is_perfect() {
        let reference = parse_m2(REF, "ref").unwrap();
        let report = evaluate(&reference, &reference, 0.5, AnnotatorPolicy::Best).unwrap();
        assert_eq!((report.precision, report.recall, report.f_alpha), (1.0, 1.0, 1.0));
        assert_eq!((report.tp, report.fp, report.fn_), (3, 0, 0));
    }

    #[test]
    fn do_nothing_hypothesis_scores_zero_f() {
        let reference = parse_m2(REF, "ref").unwrap();
        let empty = parse_m2("S This are bad .\n\nS I has a apple .\n", "empty").unwrap();
        let report = evaluate(&empty, &reference, 0.5, AnnotatorPolicy::Best).unwrap();
        assert_eq!(report.precision, 1.0); // 0/0 convention
        assert_eq!(report.recall, 0.0);
        assert_eq!(report.f_alpha, 0.0);
    }

    #[test]
    fn corpus_counts_equal_single_system_count_matrix_row() {
        let reference = parse_m2(REF, "ref").unwrap();
        let hyp = parse_m2(
            "S This are bad .\nA 1 2|||R:VERB:SVA|||is|||REQUIRED|||-NONE-|||0\n\nS I has a apple .\nA 2 3|||R:OTHER|||the|||REQUIRED|||-NONE-|||0\n",
            "hyp",
        )
        .unwrap();
        let report = evaluate(&hyp, &reference, 0.5, AnnotatorPolicy::Best).unwrap();
        let counts =
            build_count_matrix(&[hyp], &reference, 0.5, AnnotatorPolicy::Best).unwrap();
        assert_eq!((report.tp, report.fp, report.fn_), counts.row_totals(0));
    }

    #[test]
    fn totals_are_consistent_across_granularities() {
        let reference = parse_m2(REF, "ref").unwrap();
        let hyp = parse_m2(
            "S This are bad .\nA 1 2|||R:VERB:SVA|||was|||REQUIRED|||-NONE-|||0\n\nS I has a apple .\nA 1 2|||R:VERB:SVA|||have|||REQUIRED|||-NONE-|||0\n",
            "hyp",
        )
        .unwrap();
        let report = evaluate(&hyp, &reference, 0.5, AnnotatorPolicy::Best).unwrap();
        let type_tp: u64 = report.per_type.values().map(|s| s.tp).sum();
        let sent_tp: u64 = report.per_sentence.iter().map(|s| s.tp).sum();
        assert_eq!(report.tp, type_tp);
        assert_eq!(report.tp, sent_tp);
        let type_fn: u64 = report.per_type.values().map(|s| s.fn_).sum();
        assert_eq!(report.fn_, type_fn);
        for s in &report.per_sentence {
            assert!((0.0..=1.0).contains(&s.f_alpha));
        }
    }

    #[test]
    fn identical_systems_classify_as_all_same() {
        let reference = parse_m2(REF, "ref").unwrap();
        let report = split_half_analysis(
            &reference, &reference, &reference, &reference, 0.5, AnnotatorPolicy::Best,
        )
        .unwrap();
        assert_eq!(report.class_same, 2);
        assert_eq!(report.class_diff, 0);
        assert_eq!(report.improved_or_equal_in_same, 2);
        assert_eq!(report.same_class_aggregate.micro_f_combined, 1.0);
        assert_eq!(
            report.same_class_aggregate.micro_f_combined,
            report.same_class_aggregate.micro_f_system_a
        );
    }

    #[test]
    fn two_sentence_toy_classification() {
        // Sentence 1: a matches the reference, b does not -> different F.
        // Sentence 2: both propose nothing -> same F.
        let reference = parse_m2(REF, "ref").unwrap();
        let a = parse_m2(
            "S This are bad .\nA 1 2|||R:VERB:SVA|||is|||REQUIRED|||-NONE-|||0\n\nS I has a apple .\n",
            "a",
        )
        .unwrap();
        let b = parse_m2("S This are bad .\n\nS I has a apple .\n", "b").unwrap();
        let report =
            split_half_analysis(&a, &b, &reference, &a, 0.5, AnnotatorPolicy::Best).unwrap();
        assert_eq!(report.class_same, 1);
        assert_eq!(report.class_diff, 1);
        // Combined == a: beats b's 0 on sentence 1, ties the shared 0 on 2.
        assert_eq!(report.improved_in_diff, 1);
        assert_eq!(report.improved_or_equal_in_same, 1);
    }

    proptest! {
        /// The P/R form and the counts form of F agree on any counts that
        /// realize a well-defined (p, r).
        #[test]
        fn prop_pr_and_count_forms_agree(tp in 0u64..40, fp in 0u64..40, fn_ in 0u64..40, alpha in 0.0f64..2.0) {
            prop_assume!(tp + fp + fn_ > 0);
            let via_pr = f_beta_from_pr(precision(tp, fp), recall(tp, fn_), alpha);
            let via_counts = f_beta_from_counts(tp, fp, fn_, alpha);
            prop_assert!((via_pr - via_counts).abs() < 1e-12,
                "({tp},{fp},{fn_}) pr={via_pr} counts={via_counts}");
        }
    }
}
