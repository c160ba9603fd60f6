//! The M2 annotation format: tokenized source sentences plus typed span
//! edits, as produced by ERRANT and the GEC shared tasks.
//!
//! A file is a sequence of blocks separated by blank lines. Each block has
//! one `S` line (the tokenized source sentence) followed by zero or more `A`
//! lines:
//!
//! ```text
//! S This are bad .
//! A 1 2|||R:VERB:SVA|||is|||REQUIRED|||-NONE-|||0
//! ```
//!
//! An annotator that proposes no edits is recorded with a `noop` line
//! (`A -1 -1|||noop|||-NONE-|||REQUIRED|||-NONE-|||0`). Tokens are the
//! whitespace-delimited strings of the `S` line; no re-tokenization is ever
//! performed.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::Error;
use crate::Result;

/// Fixed fourth field of an `A` line.
const FIELD_REQUIRED: &str = "REQUIRED";
/// Fixed fifth field of an `A` line, and the placeholder replacement.
const FIELD_NONE: &str = "-NONE-";
/// Error type of the no-edit marker line.
const NOOP_TYPE: &str = "noop";

/// A typed span correction against a tokenized source sentence.
///
/// `start`/`end` are 0-based token indices with `end` exclusive;
/// `start == end` denotes an insertion before token `start`. An empty
/// `replacement` deletes the span.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edit {
    pub start: usize,
    pub end: usize,
    pub error_type: String,
    pub replacement: Vec<String>,
    /// Annotator the edit belongs to. Hypothesis files use 0; references
    /// may carry several annotators.
    pub annotator_id: u32,
}

impl Edit {
    pub fn new(
        start: usize,
        end: usize,
        error_type: impl Into<String>,
        replacement: &str,
        annotator_id: u32,
    ) -> Self {
        Edit {
            start,
            end,
            error_type: error_type.into(),
            replacement: split_replacement(replacement),
            annotator_id,
        }
    }

    /// True for `start == end` edits, which insert before token `start`.
    pub fn is_insertion(&self) -> bool {
        self.start == self.end
    }

    /// The key under which edits match during scoring: span and corrected
    /// tokens, irrespective of error type and annotator.
    pub fn correction_key(&self) -> (usize, usize, &[String]) {
        (self.start, self.end, &self.replacement)
    }

    /// Span, type, and replacement — two edits with equal identity are the
    /// same correction proposed twice and deduplicate rather than conflict.
    fn identity(&self) -> (usize, usize, &str, &[String]) {
        (self.start, self.end, &self.error_type, &self.replacement)
    }
}

/// True when two edits of the same sentence cannot both be applied.
///
/// Conflicts are: overlapping spans; two insertions at the same point; an
/// insertion point strictly inside the other edit's span. Identical edits
/// (same span, type, and replacement) deduplicate rather than conflict.
pub fn edits_conflict(a: &Edit, b: &Edit) -> bool {
    if a.identity() == b.identity() {
        return false;
    }
    if a.start.max(b.start) < a.end.min(b.end) {
        return true;
    }
    if a.is_insertion() && b.is_insertion() && a.start == b.start {
        return true;
    }
    let inside = |ins: &Edit, span: &Edit| {
        ins.is_insertion() && span.start < ins.start && ins.start < span.end
    };
    inside(a, b) || inside(b, a)
}

/// One M2 block: a tokenized sentence and its edits.
///
/// Immutable after construction. Edits are normalized to be sorted by
/// `(start, end, type, replacement)` per annotator, with exact duplicates
/// within an annotator removed, and are pairwise non-conflicting per
/// annotator. `annotators` records every annotator id seen in the block,
/// including ids registered only through a `noop` line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceAnnotation {
    source_tokens: Vec<String>,
    edits: Vec<Edit>,
    annotators: BTreeSet<u32>,
}

impl SentenceAnnotation {
    /// Builds a sentence annotation, normalizing and validating the edits.
    /// A sentence with no edits registers annotator 0.
    pub fn new(source_tokens: Vec<String>, edits: Vec<Edit>) -> Result<Self> {
        let annotators: BTreeSet<u32> = edits.iter().map(|e| e.annotator_id).collect();
        Self::with_annotators(source_tokens, edits, annotators)
    }

    /// As [`SentenceAnnotation::new`], but also registers annotators that
    /// contributed no edits (parsed from `noop` lines).
    pub fn with_annotators(
        source_tokens: Vec<String>,
        mut edits: Vec<Edit>,
        mut annotators: BTreeSet<u32>,
    ) -> Result<Self> {
        annotators.extend(edits.iter().map(|e| e.annotator_id));
        if annotators.is_empty() {
            annotators.insert(0);
        }
        let n = source_tokens.len();
        for edit in &edits {
            validate_span(edit, n)?;
        }
        edits.sort_unstable_by(|a, b| {
            (a.annotator_id, a.start, a.end, &a.error_type, &a.replacement).cmp(&(
                b.annotator_id,
                b.start,
                b.end,
                &b.error_type,
                &b.replacement,
            ))
        });
        edits.dedup();
        // Per-sentence edit counts are small; a pairwise pass is enough.
        for (i, a) in edits.iter().enumerate() {
            for b in &edits[i + 1..] {
                if a.annotator_id == b.annotator_id && edits_conflict(a, b) {
                    return Err(Error::Contract(format!(
                        "annotator {} has conflicting edits {}..{} and {}..{}",
                        a.annotator_id, a.start, a.end, b.start, b.end
                    )));
                }
            }
        }
        Ok(SentenceAnnotation {
            source_tokens,
            edits,
            annotators,
        })
    }

    pub fn source_tokens(&self) -> &[String] {
        &self.source_tokens
    }

    /// All edits of the block, every annotator, in normalized order.
    pub fn edits(&self) -> &[Edit] {
        &self.edits
    }

    /// Annotator ids present in the block, ascending.
    pub fn annotators(&self) -> &BTreeSet<u32> {
        &self.annotators
    }

    /// Edits of one annotator, in normalized order. An annotator known only
    /// from a `noop` line yields an empty list.
    pub fn annotator_edits(&self, annotator_id: u32) -> Vec<&Edit> {
        self.edits
            .iter()
            .filter(|e| e.annotator_id == annotator_id)
            .collect()
    }
}

/// Per-sentence edit sets for one system (or the reference) over a corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEdits {
    pub system_id: String,
    pub sentences: Vec<SentenceAnnotation>,
}

impl CorpusEdits {
    pub fn new(system_id: impl Into<String>, sentences: Vec<SentenceAnnotation>) -> Self {
        CorpusEdits {
            system_id: system_id.into(),
            sentences,
        }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Checks that `other` covers the same sentences in the same order.
    pub fn check_aligned(&self, other: &CorpusEdits) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::Alignment(format!(
                "{:?} has {} sentences but {:?} has {}",
                self.system_id,
                self.len(),
                other.system_id,
                other.len()
            )));
        }
        for (idx, (a, b)) in self.sentences.iter().zip(&other.sentences).enumerate() {
            if a.source_tokens != b.source_tokens {
                return Err(Error::Alignment(format!(
                    "source tokens differ at sentence {} between {:?} and {:?}",
                    idx, self.system_id, other.system_id
                )));
            }
        }
        Ok(())
    }

    /// A copy of the sub-corpus `range` (used by the split-half protocol).
    pub fn slice(&self, range: std::ops::Range<usize>) -> CorpusEdits {
        CorpusEdits {
            system_id: self.system_id.clone(),
            sentences: self.sentences[range].to_vec(),
        }
    }
}

fn validate_span(edit: &Edit, token_count: usize) -> Result<()> {
    if edit.start > edit.end || edit.end > token_count {
        return Err(Error::Contract(format!(
            "edit span {}..{} is invalid for a sentence of {} tokens",
            edit.start, edit.end, token_count
        )));
    }
    if edit.error_type.is_empty() {
        return Err(Error::Contract("edit has an empty error type".into()));
    }
    Ok(())
}

/// Splits a replacement field into tokens. `-NONE-` and the empty string
/// both denote a deletion and normalize to no tokens.
fn split_replacement(field: &str) -> Vec<String> {
    if field == FIELD_NONE {
        return Vec::new();
    }
    field
        .split(' ')
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Parses M2 text into a corpus labeled `system_id`.
///
/// Input is validated strictly: an `A` line must have exactly six
/// `|||`-separated fields, an integer span within the sentence, and a
/// nonempty type. The `noop` type requires the span `-1 -1` and registers
/// its annotator without producing an edit. A block with no `A` lines
/// normalizes to the single annotator 0 with no edits.
pub fn parse_m2(text: &str, system_id: impl Into<String>) -> Result<CorpusEdits> {
    struct Block {
        line: usize,
        tokens: Vec<String>,
        edits: Vec<Edit>,
        noop_annotators: BTreeSet<u32>,
    }

    let mut sentences = Vec::new();
    let mut block: Option<Block> = None;

    let flush = |block: Option<Block>, sentences: &mut Vec<SentenceAnnotation>| -> Result<()> {
        if let Some(b) = block {
            for edit in &b.edits {
                if b.noop_annotators.contains(&edit.annotator_id) {
                    return Err(parse_error(
                        b.line,
                        format!(
                            "annotator {} has both a noop line and edits",
                            edit.annotator_id
                        ),
                    ));
                }
            }
            let sent = SentenceAnnotation::with_annotators(b.tokens, b.edits, b.noop_annotators)
                .map_err(|e| parse_error(b.line, e.to_string()))?;
            sentences.push(sent);
        }
        Ok(())
    };

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            flush(block.take(), &mut sentences)?;
            continue;
        }
        if line == "S" || line.starts_with("S ") {
            if block.is_some() {
                return Err(parse_error(
                    lineno,
                    "S line without a blank line after the previous block",
                ));
            }
            let tokens = line[1..]
                .split_whitespace()
                .map(str::to_string)
                .collect::<Vec<_>>();
            block = Some(Block {
                line: lineno,
                tokens,
                edits: Vec::new(),
                noop_annotators: BTreeSet::new(),
            });
        } else if let Some(rest) = line.strip_prefix("A ") {
            let block = block
                .as_mut()
                .ok_or_else(|| parse_error(lineno, "A line before any S line"))?;
            let fields: Vec<&str> = rest.split("|||").collect();
            if fields.len() != 6 {
                return Err(parse_error(
                    lineno,
                    format!("expected 6 |||-separated fields, found {}", fields.len()),
                ));
            }
            let span: Vec<&str> = fields[0].split_whitespace().collect();
            if span.len() != 2 {
                return Err(parse_error(lineno, "span must be two integers"));
            }
            let start: i64 = span[0]
                .parse()
                .map_err(|_| parse_error(lineno, format!("non-integer span start {:?}", span[0])))?;
            let end: i64 = span[1]
                .parse()
                .map_err(|_| parse_error(lineno, format!("non-integer span end {:?}", span[1])))?;
            let error_type = fields[1];
            let annotator: u32 = fields[5].trim().parse().map_err(|_| {
                parse_error(lineno, format!("non-integer annotator id {:?}", fields[5]))
            })?;
            if error_type == NOOP_TYPE {
                if start != -1 || end != -1 {
                    return Err(parse_error(lineno, "noop requires the span -1 -1"));
                }
                if !fields[2].is_empty() && fields[2] != FIELD_NONE {
                    return Err(parse_error(lineno, "noop must not carry a replacement"));
                }
                block.noop_annotators.insert(annotator);
                continue;
            }
            if error_type.is_empty() {
                return Err(parse_error(lineno, "empty error type"));
            }
            if start < 0 || end < 0 {
                return Err(parse_error(lineno, "negative span on a non-noop edit"));
            }
            let (start, end) = (start as usize, end as usize);
            if start > end {
                return Err(parse_error(
                    lineno,
                    format!("span end {} precedes start {}", end, start),
                ));
            }
            if end > block.tokens.len() {
                return Err(parse_error(
                    lineno,
                    format!(
                        "span {}..{} exceeds the sentence length {}",
                        start,
                        end,
                        block.tokens.len()
                    ),
                ));
            }
            block.edits.push(Edit::new(
                start,
                end,
                error_type,
                fields[2],
                annotator,
            ));
        } else {
            return Err(parse_error(
                lineno,
                format!("line is neither blank nor an S/A line: {:?}", line),
            ));
        }
    }
    flush(block.take(), &mut sentences)?;
    Ok(CorpusEdits::new(system_id, sentences))
}

/// Serializes a corpus to canonical M2 text.
///
/// Blocks are separated by one blank line; annotators are emitted in
/// ascending id order with edits sorted by span; annotators with no edits
/// get a `noop` line; deletions serialize with an empty replacement field.
/// The output ends with a trailing newline unless the corpus is empty.
/// `parse_m2(serialize_m2(c)) == c` for every valid corpus.
pub fn serialize_m2(corpus: &CorpusEdits) -> String {
    let mut blocks = Vec::with_capacity(corpus.sentences.len());
    for sentence in &corpus.sentences {
        let mut block = String::new();
        if sentence.source_tokens.is_empty() {
            block.push('S');
        } else {
            block.push_str("S ");
            block.push_str(&sentence.source_tokens.join(" "));
        }
        for &annotator in &sentence.annotators {
            let edits = sentence.annotator_edits(annotator);
            if edits.is_empty() {
                let _ = write!(
                    block,
                    "\nA -1 -1|||{}|||{}|||{}|||{}|||{}",
                    NOOP_TYPE, FIELD_NONE, FIELD_REQUIRED, FIELD_NONE, annotator
                );
            } else {
                for edit in edits {
                    let _ = write!(
                        block,
                        "\nA {} {}|||{}|||{}|||{}|||{}|||{}",
                        edit.start,
                        edit.end,
                        edit.error_type,
                        edit.replacement.join(" "),
                        FIELD_REQUIRED,
                        FIELD_NONE,
                        edit.annotator_id
                    );
                }
            }
        }
        blocks.push(block);
    }
    if blocks.is_empty() {
        String::new()
    } else {
        blocks.join("\n\n") + "\n"
    }
}

/// Applies non-overlapping edits to a token sequence.
///
/// Edits must be sorted by `(start, end)` and pairwise non-conflicting;
/// they are spliced right to left so earlier spans keep their indices.
/// Duplicate edits are rejected: applying the same insertion twice would
/// insert twice.
pub fn apply_edits(source_tokens: &[String], edits: &[Edit]) -> Result<Vec<String>> {
    for edit in edits {
        validate_span(edit, source_tokens.len())?;
    }
    for pair in edits.windows(2) {
        if (pair[0].start, pair[0].end) > (pair[1].start, pair[1].end) {
            return Err(Error::Contract(format!(
                "edits not sorted: {}..{} after {}..{}",
                pair[1].start, pair[1].end, pair[0].start, pair[0].end
            )));
        }
    }
    for (i, a) in edits.iter().enumerate() {
        for b in &edits[i + 1..] {
            if edits_conflict(a, b) || a.identity() == b.identity() {
                return Err(Error::Contract(format!(
                    "edits {}..{} and {}..{} cannot both be applied",
                    a.start, a.end, b.start, b.end
                )));
            }
        }
    }
    let mut tokens = source_tokens.to_vec();
    for edit in edits.iter().rev() {
        tokens.splice(edit.start..edit.end, edit.replacement.iter().cloned());
    }
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn parses_single_substitution() {
        let corpus =
            parse_m2("S This are bad .\nA 1 2|||R:VERB:SVA|||is|||REQUIRED|||-NONE-|||0\n", "sys")
                .unwrap();
        assert_eq!(corpus.len(), 1);
        let sent = &corpus.sentences[0];
        assert_eq!(sent.source_tokens(), toks("This are bad ."));
        assert_eq!(sent.edits(), &[Edit::new(1, 2, "R:VERB:SVA", "is", 0)]);
    }

    #[test]
    fn parses_noop_as_empty_edit_list() {
        let corpus =
            parse_m2("S A sentence .\nA -1 -1|||noop|||-NONE-|||REQUIRED|||-NONE-|||0\n", "sys")
                .unwrap();
        assert_eq!(corpus.len(), 1);
        assert!(corpus.sentences[0].edits().is_empty());
        assert!(corpus.sentences[0].annotators().contains(&0));
    }

    #[test]
    fn tolerates_repeated_blank_lines_and_crlf() {
        let corpus = parse_m2("S a .\r\n\r\n\r\n\r\nS b .\r\n", "sys").unwrap();
        assert_eq!(corpus.len(), 2);
        assert_eq!(corpus.sentences[1].source_tokens(), toks("b ."));
    }

    #[test]
    fn parses_insertion_at_point() {
        let corpus =
            parse_m2("S X .\nA 0 0|||M:DET|||The|||REQUIRED|||-NONE-|||0\n", "sys").unwrap();
        let edit = &corpus.sentences[0].edits()[0];
        assert_eq!((edit.start, edit.end), (0, 0));
        assert!(edit.is_insertion());
        assert_eq!(edit.replacement, toks("The"));
    }

    #[test]
    fn normalizes_none_replacement_to_deletion() {
        let corpus =
            parse_m2("S a the cat .\nA 1 2|||U:DET|||-NONE-|||REQUIRED|||-NONE-|||0\n", "sys")
                .unwrap();
        assert!(corpus.sentences[0].edits()[0].replacement.is_empty());
        let empty =
            parse_m2("S a the cat .\nA 1 2|||U:DET||||||REQUIRED|||-NONE-|||0\n", "sys").unwrap();
        assert_eq!(corpus.sentences[0].edits(), empty.sentences[0].edits());
    }

    #[test]
    fn splits_multi_token_replacement() {
        let corpus =
            parse_m2("S go fast .\nA 1 2|||R:ADV|||very fast|||REQUIRED|||-NONE-|||0\n", "sys")
                .unwrap();
        assert_eq!(corpus.sentences[0].edits()[0].replacement, toks("very fast"));
    }

    #[test]
    fn rejects_malformed_a_lines() {
        let cases = [
            ("S a b .\nA 1 2|||R:X|||y|||REQUIRED|||-NONE-\n", "5 fields"),
            (
                "S a b .\nA 1 2|||R:X|||y|||REQUIRED|||-NONE-|||0|||extra\n",
                "7 fields",
            ),
            ("S a b .\nA one 2|||R:X|||y|||REQUIRED|||-NONE-|||0\n", "non-integer start"),
            ("S a b .\nA 2 1|||R:X|||y|||REQUIRED|||-NONE-|||0\n", "end < start"),
            ("S a b .\nA 1 9|||R:X|||y|||REQUIRED|||-NONE-|||0\n", "span exceeds length"),
            ("S a b .\nA -1 -1|||R:X|||y|||REQUIRED|||-NONE-|||0\n", "negative non-noop"),
            ("S a b .\nA 1 2||||||y|||REQUIRED|||-NONE-|||0\n", "empty type"),
            ("S a b .\nA 0 0|||noop|||-NONE-|||REQUIRED|||-NONE-|||0\n", "noop span"),
            ("Z a b .\n", "unknown line kind"),
            ("A 1 2|||R:X|||y|||REQUIRED|||-NONE-|||0\n", "A before S"),
        ];
        for (text, what) in cases {
            let err = parse_m2(text, "sys").unwrap_err();
            assert!(
                matches!(err, Error::Parse { .. }),
                "{what}: expected parse error, got {err:?}"
            );
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse_m2(
            "S ok .\nA -1 -1|||noop|||-NONE-|||REQUIRED|||-NONE-|||0\n\nS bad .\nA 9 9|||M:X|||y|||REQUIRED|||-NONE-|||0\n",
            "sys",
        )
        .unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 5),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_overlapping_edits_within_annotator() {
        let err = parse_m2(
            "S a b c d .\nA 0 2|||R:X|||y|||REQUIRED|||-NONE-|||0\nA 1 3|||R:Y|||z|||REQUIRED|||-NONE-|||0\n",
            "sys",
        )
        .unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
        // The same spans are fine when they belong to different annotators.
        parse_m2(
            "S a b c d .\nA 0 2|||R:X|||y|||REQUIRED|||-NONE-|||0\nA 1 3|||R:Y|||z|||REQUIRED|||-NONE-|||1\n",
            "sys",
        )
        .unwrap();
    }

    #[test]
    fn rejects_noop_mixed_with_edits_for_same_annotator() {
        let err = parse_m2(
            "S a b .\nA -1 -1|||noop|||-NONE-|||REQUIRED|||-NONE-|||0\nA 0 1|||R:X|||y|||REQUIRED|||-NONE-|||0\n",
            "sys",
        )
        .unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn multi_annotator_blocks_keep_noop_annotators() {
        let text = "S a b .\nA 0 1|||R:X|||y|||REQUIRED|||-NONE-|||0\nA -1 -1|||noop|||-NONE-|||REQUIRED|||-NONE-|||1\n";
        let corpus = parse_m2(text, "ref").unwrap();
        let sent = &corpus.sentences[0];
        assert_eq!(sent.annotators().iter().copied().collect::<Vec<_>>(), vec![0, 1]);
        assert!(sent.annotator_edits(1).is_empty());
        assert_eq!(sent.annotator_edits(0).len(), 1);
    }

    #[test]
    fn serializes_empty_corpus_to_empty_stream() {
        assert_eq!(serialize_m2(&CorpusEdits::new("sys", vec![])), "");
    }

    #[test]
    fn empty_sentence_round_trips() {
        let corpus = CorpusEdits::new(
            "sys",
            vec![SentenceAnnotation::new(vec![], vec![]).unwrap()],
        );
        let text = serialize_m2(&corpus);
        assert!(text.starts_with("S\n"));
        assert_eq!(parse_m2(&text, "sys").unwrap(), corpus);
    }

    #[test]
    fn serializes_no_edit_sentence_as_noop_block() {
        let corpus = CorpusEdits::new(
            "sys",
            vec![SentenceAnnotation::new(toks("A sentence ."), vec![]).unwrap()],
        );
        assert_eq!(
            serialize_m2(&corpus),
            "S A sentence .\nA -1 -1|||noop|||-NONE-|||REQUIRED|||-NONE-|||0\n"
        );
    }

    #[test]
    fn round_trip_normalizes_then_stabilizes() {
        // Non-canonical input: -NONE- deletion, unsorted edits.
        let text = "S a the the cat .\nA 2 3|||U:DET|||-NONE-|||REQUIRED|||-NONE-|||0\nA 0 1|||R:DET|||The|||REQUIRED|||-NONE-|||0\n\nS fine .\n";
        let first = parse_m2(text, "sys").unwrap();
        let canonical = serialize_m2(&first);
        let second = parse_m2(&canonical, "sys").unwrap();
        assert_eq!(first, second);
        assert_eq!(serialize_m2(&second), canonical);
    }

    #[test]
    fn apply_single_substitution() {
        let out = apply_edits(&toks("This are bad ."), &[Edit::new(1, 2, "R:VERB:SVA", "is", 0)])
            .unwrap();
        assert_eq!(out, toks("This is bad ."));
    }

    #[test]
    fn apply_empty_edit_list_is_identity() {
        let tokens = toks("left alone .");
        assert_eq!(apply_edits(&tokens, &[]).unwrap(), tokens);
    }

    #[test]
    fn apply_insertion_and_deletion() {
        // Frozen from the left-to-right offset oracle: insert "The" at 0,
        // delete token 1 of the original.
        let out = apply_edits(
            &toks("X ."),
            &[Edit::new(0, 0, "M:DET", "The", 0), Edit::new(1, 2, "U:NOUN", "", 0)],
        )
        .unwrap();
        assert_eq!(out, toks("The X"));
    }

    #[test]
    fn apply_rejects_overlap_and_disorder() {
        let tokens = toks("a b c d .");
        let overlap = [Edit::new(0, 2, "R:X", "y", 0), Edit::new(1, 3, "R:Y", "z", 0)];
        assert!(matches!(apply_edits(&tokens, &overlap), Err(Error::Contract(_))));
        let unsorted = [Edit::new(2, 3, "R:X", "y", 0), Edit::new(0, 1, "R:Y", "z", 0)];
        assert!(matches!(apply_edits(&tokens, &unsorted), Err(Error::Contract(_))));
        let duplicate = [Edit::new(1, 1, "M:X", "y", 0), Edit::new(1, 1, "M:X", "y", 0)];
        assert!(matches!(apply_edits(&tokens, &duplicate), Err(Error::Contract(_))));
        let out_of_bounds = [Edit::new(4, 9, "R:X", "y", 0)];
        assert!(matches!(apply_edits(&tokens, &out_of_bounds), Err(Error::Contract(_))));
    }

    #[test]
    fn conflict_predicate_cases() {
        let span = |s, e| Edit::new(s, e, "R:X", "y", 0);
        assert!(edits_conflict(&span(1, 3), &span(2, 4)));
        assert!(!edits_conflict(&span(1, 2), &span(2, 3)));
        // Same-point insertions with different replacements conflict.
        assert!(edits_conflict(
            &Edit::new(2, 2, "M:X", "a", 0),
            &Edit::new(2, 2, "M:X", "b", 0)
        ));
        // Identical edits deduplicate rather than conflict.
        assert!(!edits_conflict(&span(1, 3), &span(1, 3)));
        // Insertion strictly inside a span conflicts; at its edges it does not.
        assert!(edits_conflict(&Edit::new(2, 2, "M:X", "a", 0), &span(1, 3)));
        assert!(!edits_conflict(&Edit::new(1, 1, "M:X", "a", 0), &span(1, 3)));
        assert!(!edits_conflict(&Edit::new(3, 3, "M:X", "a", 0), &span(1, 3)));
    }

    /// Independent left-to-right applier tracking a cumulative offset.
    fn apply_left_to_right(source: &[String], edits: &[Edit]) -> Vec<String> {
        let mut tokens = source.to_vec();
        let mut offset: isize = 0;
        for edit in edits {
            let at = (edit.start as isize + offset) as usize;
            let removed = edit.end - edit.start;
            tokens.splice(at..at + removed, edit.replacement.iter().cloned());
            offset += edit.replacement.len() as isize - removed as isize;
        }
        tokens
    }

    /// Builds a valid sorted non-conflicting edit list from generated raw
    /// parts, laying spans out left to right.
    fn layout_edits(token_count: usize, parts: &[(usize, usize, Vec<String>)]) -> Vec<Edit> {
        let mut edits = Vec::new();
        let mut cursor = 0usize;
        let mut last_insertion_at = None;
        for (gap, len, replacement) in parts {
            let start = cursor + gap;
            if start > token_count {
                break;
            }
            let end = (start + len).min(token_count);
            if end == start {
                // Clamping can turn a span into an insertion; never place two
                // insertions at the same point.
                if last_insertion_at == Some(start) {
                    continue;
                }
                last_insertion_at = Some(start);
            }
            edits.push(Edit {
                start,
                end,
                error_type: "R:GEN".into(),
                replacement: replacement.clone(),
                annotator_id: 0,
            });
            cursor = end;
        }
        edits
    }

    proptest! {
        #[test]
        fn prop_two_appliers_agree(
            tokens in proptest::collection::vec("[a-z]{1,6}", 0..14),
            parts in proptest::collection::vec(
                (0usize..3, 0usize..3, proptest::collection::vec("[a-z]{1,4}", 0..3)),
                0..6
            ),
        ) {
            let edits = layout_edits(tokens.len(), &parts);
            let spliced = apply_edits(&tokens, &edits).unwrap();
            let tracked = apply_left_to_right(&tokens, &edits);
            prop_assert_eq!(&spliced, &tracked);
            // Length bookkeeping: removed spans out, replacement tokens in.
            let removed: usize = edits.iter().map(|e| e.end - e.start).sum();
            let added: usize = edits.iter().map(|e| e.replacement.len()).sum();
            prop_assert_eq!(spliced.len(), tokens.len() - removed + added);
        }

        /// The parser returns an error on junk; it must never panic.
        #[test]
        fn prop_parse_never_panics(
            lines in proptest::collection::vec(
                prop_oneof![
                    Just("".to_string()),
                    "[SAZ][ a-z0-9|.-]{0,30}",
                    "A -?[0-9]{1,3} -?[0-9]{1,3}\\|\\|\\|[a-zR:|.-]{0,12}\\|\\|\\|[a-z -]{0,8}\\|\\|\\|REQUIRED\\|\\|\\|-NONE-\\|\\|\\|[0-9]{1,2}",
                ],
                0..12
            ),
        ) {
            let _ = parse_m2(&lines.join("\n"), "sys");
        }

        #[test]
        fn prop_parse_serialize_round_trip(
            sentences in proptest::collection::vec(
                (
                    proptest::collection::vec("[a-z]{1,6}", 1..10),
                    proptest::collection::vec(
                        (0usize..3, 0usize..3, proptest::collection::vec("[a-z]{1,4}", 0..3)),
                        0..4
                    ),
                    0u32..3,
                ),
                0..6
            ),
        ) {
            let sents = sentences
                .iter()
                .map(|(tokens, parts, annotator)| {
                    let mut edits = layout_edits(tokens.len(), parts);
                    for e in &mut edits {
                        e.annotator_id = *annotator;
                    }
                    SentenceAnnotation::new(tokens.clone(), edits).unwrap()
                })
                .collect::<Vec<_>>();
            let corpus = CorpusEdits::new("sys", sents);
            let text = serialize_m2(&corpus);
            let reparsed = parse_m2(&text, "sys").unwrap();
            prop_assert_eq!(&corpus, &reparsed);
            prop_assert_eq!(serialize_m2(&reparsed), text);
        }
    }
}
