//! Inference-time combination: keep each hypothesis edit whose (system,
//! type) pair is selected, resolve cross-system span conflicts, and emit
//! combined corrected sentences.
//!
//! A single system is used per error type, but two systems can still see an
//! error at the same location under different types; those candidate edits
//! conflict. Candidates are grouped into conflict clusters (transitive
//! closure of the pairwise conflict predicate) and exactly one edit per
//! cluster survives. Identical edits proposed by several selected systems
//! merge before conflict detection: agreement is not a conflict.

use std::collections::{HashMap, HashSet};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::m2::{apply_edits, CorpusEdits, Edit, SentenceAnnotation};
use crate::solver::SelectionMatrix;
use crate::Result;

pub use crate::m2::edits_conflict;

/// A selected edit together with the hypothesis it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateEdit {
    pub edit: Edit,
    /// Index into the hypothesis list passed to [`select_candidates`].
    pub source_system: usize,
}

/// How to resolve a conflict cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConflictMode {
    /// Keep one edit chosen uniformly at random by the seeded generator.
    Random,
    /// Keep the edit with the lowest source-system index, then lowest start.
    LowestSystemIndex,
    /// Drop every edit of a conflicted cluster.
    SkipAll,
}

/// Conflict handling for one combination run. Identical inputs, policy, and
/// seed produce identical outputs; the generator is split per sentence
/// index, so parallel and serial runs agree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictPolicy {
    pub mode: ConflictMode,
    pub seed: u64,
}

impl Default for ConflictPolicy {
    fn default() -> Self {
        ConflictPolicy {
            mode: ConflictMode::Random,
            seed: 0,
        }
    }
}

/// What to do with an edit whose error type the selection has never seen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnknownTypePolicy {
    /// Drop the edit and log it (the type was absent from training, so no
    /// system was ever selected for it).
    #[default]
    Drop,
    /// Fail the run.
    Error,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream seed for one sentence.
fn sentence_seed(seed: u64, sentence: usize) -> u64 {
    splitmix64(seed ^ splitmix64(sentence as u64))
}

/// Keeps exactly the edits whose (system, type) cell is selected.
///
/// Systems are resolved by label: each hypothesis corpus label is looked up
/// in the selection's system ids, so file order does not matter. A label
/// the selection assigns types to must be present among the hypotheses;
/// hypotheses unknown to the selection only log a warning since none of
/// their edits can survive.
pub fn select_candidates(
    hypotheses: &[CorpusEdits],
    selection: &SelectionMatrix,
    unknown_types: UnknownTypePolicy,
) -> Result<Vec<Vec<CandidateEdit>>> {
    select_candidates_impl(hypotheses, selection, unknown_types).map(|(c, _)| c)
}

fn select_candidates_impl(
    hypotheses: &[CorpusEdits],
    selection: &SelectionMatrix,
    unknown_types: UnknownTypePolicy,
) -> Result<(Vec<Vec<CandidateEdit>>, u64)> {
    if hypotheses.is_empty() {
        return Err(Error::Dimension("no hypothesis corpora given".into()));
    }
    for hyp in &hypotheses[1..] {
        hypotheses[0].check_aligned(hyp)?;
    }
    let mut hyp_of_label: HashMap<&str, usize> = HashMap::new();
    for (i, hyp) in hypotheses.iter().enumerate() {
        if hyp.system_id == SelectionMatrix::ABSTAIN_LABEL {
            return Err(Error::UnknownSystem(format!(
                "input system label {:?} is reserved",
                hyp.system_id
            )));
        }
        if hyp_of_label.insert(hyp.system_id.as_str(), i).is_some() {
            return Err(Error::UnknownSystem(format!(
                "duplicate input system label {:?}",
                hyp.system_id
            )));
        }
        if !selection.system_ids().iter().any(|s| s == &hyp.system_id) {
            log::warn!(
                "system {:?} is not part of the selection matrix; none of its edits can be kept",
                hyp.system_id
            );
        }
    }
    // Per type column: which hypothesis (if any) supplies the edits.
    let mut chosen_hyp: Vec<Option<usize>> = Vec::with_capacity(selection.type_index().len());
    for (j, label) in selection.assigned_labels().enumerate() {
        if label == SelectionMatrix::ABSTAIN_LABEL {
            chosen_hyp.push(None);
            continue;
        }
        match hyp_of_label.get(label) {
            Some(&i) => chosen_hyp.push(Some(i)),
            None => {
                return Err(Error::UnknownSystem(format!(
                    "selection assigns type {:?} to system {label:?} but no input carries that label",
                    selection.type_index().types()[j]
                )))
            }
        }
    }

    let sentences = hypotheses[0].len();
    let mut candidates: Vec<Vec<CandidateEdit>> = vec![Vec::new(); sentences];
    let mut unknown_dropped = 0u64;
    for (i, hyp) in hypotheses.iter().enumerate() {
        for (s, sentence) in hyp.sentences.iter().enumerate() {
            for edit in sentence.edits() {
                let Some(j) = selection.type_index().index_of(&edit.error_type) else {
                    match unknown_types {
                        UnknownTypePolicy::Drop => {
                            log::warn!(
                                "dropping edit of unknown type {:?} (sentence {s}, system {:?})",
                                edit.error_type,
                                hyp.system_id
                            );
                            unknown_dropped += 1;
                            continue;
                        }
                        UnknownTypePolicy::Error => {
                            return Err(Error::UnknownErrorType {
                                error_type: edit.error_type.clone(),
                                sentence: s,
                                system: hyp.system_id.clone(),
                            })
                        }
                    }
                };
                if chosen_hyp[j] == Some(i) {
                    candidates[s].push(CandidateEdit {
                        edit: edit.clone(),
                        source_system: i,
                    });
                }
            }
        }
    }
    Ok((candidates, unknown_dropped))
}

#[derive(Debug, Default, Clone, Copy)]
struct ResolveStats {
    duplicates_merged: u64,
    conflict_clusters: u64,
    edits_dropped: u64,
}

/// Resolves conflicts among one sentence's candidates; see the module docs.
///
/// The result is sorted by span and pairwise non-conflicting. `sentence`
/// selects the per-sentence random stream of `policy.seed`.
pub fn resolve_conflicts(
    candidates: &[CandidateEdit],
    policy: &ConflictPolicy,
    sentence: usize,
) -> Vec<Edit> {
    resolve_with_stats(candidates, policy, sentence).0
}

fn resolve_with_stats(
    candidates: &[CandidateEdit],
    policy: &ConflictPolicy,
    sentence: usize,
) -> (Vec<Edit>, ResolveStats) {
    let mut stats = ResolveStats::default();

    // Merge identical corrections; the lowest source system survives as the
    // representative (candidates arrive in ascending system order).
    let mut seen = HashSet::new();
    let mut merged: Vec<&CandidateEdit> = Vec::with_capacity(candidates.len());
    for candidate in candidates {
        let e = &candidate.edit;
        if seen.insert((e.start, e.end, e.error_type.clone(), e.replacement.clone())) {
            merged.push(candidate);
        } else {
            stats.duplicates_merged += 1;
        }
    }
    // Deterministic base order regardless of input arrangement.
    merged.sort_by_key(|c| {
        (
            c.edit.start,
            c.edit.end,
            c.edit.error_type.clone(),
            c.edit.replacement.clone(),
            c.source_system,
        )
    });

    // Conflict clusters via transitive closure over the pairwise predicate.
    let mut cluster_of: Vec<usize> = (0..merged.len()).collect();
    fn root(cluster_of: &mut [usize], mut i: usize) -> usize {
        while cluster_of[i] != i {
            cluster_of[i] = cluster_of[cluster_of[i]];
            i = cluster_of[i];
        }
        i
    }
    for i in 0..merged.len() {
        for j in i + 1..merged.len() {
            if edits_conflict(&merged[i].edit, &merged[j].edit) {
                let (ri, rj) = (root(&mut cluster_of, i), root(&mut cluster_of, j));
                if ri != rj {
                    cluster_of[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut clusters: Vec<Vec<&CandidateEdit>> = Vec::new();
    let mut cluster_index: HashMap<usize, usize> = HashMap::new();
    for (i, candidate) in merged.iter().enumerate() {
        let r = root(&mut cluster_of, i);
        let slot = *cluster_index.entry(r).or_insert_with(|| {
            clusters.push(Vec::new());
            clusters.len() - 1
        });
        clusters[slot].push(*candidate);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(sentence_seed(policy.seed, sentence));
    let mut kept: Vec<Edit> = Vec::with_capacity(clusters.len());
    for members in &clusters {
        if members.len() == 1 {
            kept.push(members[0].edit.clone());
            continue;
        }
        stats.conflict_clusters += 1;
        let survivor = match policy.mode {
            ConflictMode::Random => Some(members[rng.gen_range(0..members.len())]),
            ConflictMode::LowestSystemIndex => members
                .iter()
                .min_by_key(|c| (c.source_system, c.edit.start, c.edit.end))
                .copied(),
            ConflictMode::SkipAll => None,
        };
        match survivor {
            Some(c) => {
                stats.edits_dropped += members.len() as u64 - 1;
                kept.push(c.edit.clone());
            }
            None => stats.edits_dropped += members.len() as u64,
        }
    }
    for edit in &mut kept {
        edit.annotator_id = 0;
    }
    kept.sort_unstable_by_key(|e| (e.start, e.end, e.error_type.clone(), e.replacement.clone()));
    (kept, stats)
}

/// Bookkeeping for one combination run (reported in the run manifest).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CombineStats {
    pub sentences: usize,
    pub candidate_edits: u64,
    pub duplicates_merged: u64,
    pub conflict_clusters: u64,
    pub edits_dropped_in_conflicts: u64,
    pub unknown_type_edits_dropped: u64,
    pub kept_edits: u64,
}

/// A combined corpus plus its corrected sentences.
#[derive(Debug, Clone)]
pub struct CombineOutput {
    /// The retained edits as an M2 corpus (system id `"combined"`).
    pub combined: CorpusEdits,
    /// Corrected token sequences, one per sentence.
    pub corrected: Vec<Vec<String>>,
    pub stats: CombineStats,
}

impl CombineOutput {
    /// One space-joined corrected sentence per line, trailing newline.
    pub fn corrected_text(&self) -> String {
        let mut out = String::new();
        for tokens in &self.corrected {
            out.push_str(&tokens.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Runs selection, conflict resolution, and application per sentence.
pub fn combine_corpus(
    hypotheses: &[CorpusEdits],
    selection: &SelectionMatrix,
    policy: &ConflictPolicy,
    unknown_types: UnknownTypePolicy,
) -> Result<CombineOutput> {
    let (candidates, unknown_dropped) =
        select_candidates_impl(hypotheses, selection, unknown_types)?;
    let mut stats = CombineStats {
        sentences: hypotheses[0].len(),
        unknown_type_edits_dropped: unknown_dropped,
        ..CombineStats::default()
    };
    let mut sentences = Vec::with_capacity(candidates.len());
    let mut corrected = Vec::with_capacity(candidates.len());
    for (s, sentence_candidates) in candidates.iter().enumerate() {
        stats.candidate_edits += sentence_candidates.len() as u64;
        let (kept, resolve_stats) = resolve_with_stats(sentence_candidates, policy, s);
        stats.duplicates_merged += resolve_stats.duplicates_merged;
        stats.conflict_clusters += resolve_stats.conflict_clusters;
        stats.edits_dropped_in_conflicts += resolve_stats.edits_dropped;
        stats.kept_edits += kept.len() as u64;
        let tokens = hypotheses[0].sentences[s].source_tokens();
        corrected.push(apply_edits(tokens, &kept)?);
        sentences.push(SentenceAnnotation::new(tokens.to_vec(), kept)?);
    }
    Ok(CombineOutput {
        combined: CorpusEdits::new("combined", sentences),
        corrected,
        stats,
    })
}
