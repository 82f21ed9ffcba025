//! Keyword matching over N-best lists and CTC confidence scoring of the
//! matches.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::decoder::NBestEntry;
use crate::error::{Error, Result};
use crate::logmath::log_add;
use crate::phonetics::{parse_syllable, phrase_distance, CostTable, Syllable};
use crate::posteriorgram::{ctc_min_frames, Posteriorgram, TokenSpan};
use crate::units::{syllabify, tokenize_chars, Lexicon, UnitSet, BLANK_ID};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Keyword {
    pub id: String,
    pub text: String,
    pub char_units: Vec<u32>,
    pub syll_units: Vec<u32>,
}

impl Keyword {
    pub fn new(id: impl Into<String>, text: &str, chars: &UnitSet, lexicon: &Lexicon, sylls: &UnitSet) -> Result<Self> {
        let id = id.into();
        let char_units = tokenize_chars(text, chars)?;
        if char_units.is_empty() {
            return Err(Error::InvalidKeyword(format!("keyword {id:?} is empty")));
        }
        let syll_units = syllabify(text, lexicon, sylls)?;
        Ok(Keyword {
            id,
            text: text.chars().filter(|c| !c.is_whitespace()).collect(),
            char_units,
            syll_units,
        })
    }
}

/// Parses `kw_id<TAB>keyword_text` lines.
pub fn parse_keywords(text: &str, chars: &UnitSet, lexicon: &Lexicon, sylls: &UnitSet) -> Result<Vec<Keyword>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, kw) = line
            .split_once('\t')
            .ok_or_else(|| Error::BadFormat(format!("keyword line {}: missing tab", n + 1)))?;
        out.push(Keyword::new(id, kw.trim(), chars, lexicon, sylls)?);
    }
    Ok(out)
}

pub fn load_keywords(path: impl AsRef<Path>, chars: &UnitSet, lexicon: &Lexicon, sylls: &UnitSet) -> Result<Vec<Keyword>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_keywords(&text, chars, lexicon, sylls)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Char,
    Syllable,
    Fuzzy,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Char => "char",
            Stage::Syllable => "syllable",
            Stage::Fuzzy => "fuzzy",
        })
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "char" => Ok(Stage::Char),
            "syllable" => Ok(Stage::Syllable),
            "fuzzy" => Ok(Stage::Fuzzy),
            other => Err(Error::BadFormat(format!("unknown stage {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub utt_id: String,
    pub kw_id: String,
    pub stage: Stage,
    pub start_frame: usize,
    pub end_frame: usize,
    pub start_s: f64,
    pub end_s: f64,
    pub raw_log_s: f64,
    pub norm_score: f64,
    /// 1-based rank of the hypothesis the match came from.
    pub hyp_rank: usize,
    pub decision: bool,
}

impl Hit {
    pub fn to_tsv(&self) -> String {
        format!(
            "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}",
            self.utt_id,
            self.kw_id,
            self.start_s,
            self.end_s,
            self.norm_score,
            u8::from(self.decision),
            self.stage
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSet {
    pub char: bool,
    pub syllable: bool,
    pub fuzzy: bool,
}

impl Default for StageSet {
    fn default() -> Self {
        StageSet {
            char: true,
            syllable: true,
            fuzzy: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KwsConfig {
    pub fuzzy_threshold: f64,
    /// Decision threshold on the normalized score.
    pub decision_threshold: f64,
    /// Frames added on each side of a match before scoring.
    pub window_pad: usize,
    pub stages: StageSet,
    /// When off, the decision uses the raw log score.
    pub length_norm: bool,
}

impl Default for KwsConfig {
    fn default() -> Self {
        KwsConfig {
            fuzzy_threshold: 0.5,
            decision_threshold: -5.0,
            window_pad: 5,
            stages: StageSet::default(),
            length_norm: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Match {
    pub hyp_rank: usize,
    /// Token range `[start, end)` inside the hypothesis.
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FuzzyMatch {
    pub hyp_rank: usize,
    pub start: usize,
    pub end: usize,
    pub distance: f64,
}

/// Every contiguous occurrence of `units` in every hypothesis.
pub fn match_exact(nbest: &[NBestEntry], units: &[u32]) -> Vec<Match> {
    if units.is_empty() {
        return Vec::new();
    }
    let mut out = Vec::new();
    for (i, h) in nbest.iter().enumerate() {
        for (start, w) in h.tokens.windows(units.len()).enumerate() {
            if w == units {
                out.push(Match {
                    hyp_rank: i + 1,
                    start,
                    end: start + units.len(),
                });
            }
        }
    }
    out
}

/// Pronunciations of character units, resolved once.
#[derive(Debug, Clone)]
pub struct Pronouncer {
    // character unit id -> parsed primary syllable
    by_char: Vec<Option<Syllable>>,
}

impl Pronouncer {
    pub fn new(chars: &UnitSet, lexicon: &Lexicon) -> Self {
        let by_char = chars
            .units()
            .iter()
            .map(|c| lexicon.primary(c).and_then(|s| parse_syllable(s).ok()))
            .collect();
        Pronouncer { by_char }
    }

    pub fn syllables(&self, chars: &[u32]) -> Option<Vec<Syllable>> {
        chars
            .iter()
            .map(|&c| self.by_char.get(c as usize).cloned().flatten())
            .collect()
    }
}

/// Windows of `|kw|` tokens whose pronunciation lies strictly within
/// `threshold` of the keyword's. Exact character matches are left to
/// [`match_exact`].
pub fn match_fuzzy(
    nbest: &[NBestEntry],
    kw: &Keyword,
    pron: &Pronouncer,
    costs: &CostTable,
    threshold: f64,
) -> Vec<FuzzyMatch> {
    let width = kw.char_units.len();
    let Some(target) = pron.syllables(&kw.char_units) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for (i, h) in nbest.iter().enumerate() {
        for (start, w) in h.tokens.windows(width).enumerate() {
            if w == kw.char_units.as_slice() {
                continue;
            }
            let Some(sylls) = pron.syllables(w) else {
                continue;
            };
            let distance = phrase_distance(&sylls, &target, costs);
            if distance < threshold {
                out.push(FuzzyMatch {
                    hyp_rank: i + 1,
                    start,
                    end: start + width,
                    distance,
                });
            }
        }
    }
    out
}

/// Natural log of the total probability of all paths through frames
/// `[ws, we)` that collapse to exactly `units`.
pub fn score_ctc(pg: &Posteriorgram, units: &[u32], window: (usize, usize)) -> Result<f64> {
    let (ws, we) = window;
    if ws > we || we > pg.frames() {
        return Err(Error::Config(format!(
            "window [{ws}, {we}) outside {} frames",
            pg.frames()
        )));
    }
    let frames = we - ws;
    let needed = ctc_min_frames(units);
    if frames < needed || frames == 0 {
        return Err(Error::AlignmentInfeasible {
            needed: needed.max(1),
            available: frames,
        });
    }
    let states = 2 * units.len() + 1;
    let label = |s: usize| if s.is_multiple_of(2) { BLANK_ID } else { units[s / 2] };
    let mut alpha = vec![f64::NEG_INFINITY; states];
    let mut next = vec![f64::NEG_INFINITY; states];
    alpha[0] = pg.at(ws, BLANK_ID);
    if states > 1 {
        alpha[1] = pg.at(ws, label(1));
    }
    for t in ws + 1..we {
        for s in 0..states {
            let mut acc = alpha[s];
            if s >= 1 {
                acc = log_add(acc, alpha[s - 1]);
            }
            if s >= 2 && s % 2 == 1 && label(s) != label(s - 2) {
                acc = log_add(acc, alpha[s - 2]);
            }
            next[s] = if acc == f64::NEG_INFINITY {
                acc
            } else {
                acc + pg.at(t, label(s))
            };
        }
        std::mem::swap(&mut alpha, &mut next);
    }
    let end = if states > 1 {
        log_add(alpha[states - 1], alpha[states - 2])
    } else {
        alpha[0]
    };
    if end == f64::NEG_INFINITY {
        return Err(Error::AlignmentInfeasible {
            needed,
            available: frames,
        });
    }
    Ok(end)
}

/// Frame window around matched tokens, padded by `pad` and clamped to
/// `[0, frames]`.
pub fn locate_window(spans: &[TokenSpan], start: usize, end: usize, pad: usize, frames: usize) -> (usize, usize) {
    let ws = spans[start].start_frame.saturating_sub(pad);
    let we = (spans[end - 1].end_frame + pad).min(frames);
    (ws, we)
}

/// Per-unit log score.
pub fn normalize(raw_log_s: f64, length: usize) -> f64 {
    raw_log_s / length.max(1) as f64
}

fn overlaps(a: &Hit, b: &Hit) -> bool {
    a.start_frame.max(b.start_frame) < a.end_frame.min(b.end_frame)
}

/// Collapses overlapping hits of the same keyword in the same utterance to
/// the best-scoring one; disjoint occurrences all survive.
pub fn merge_stages(hits: Vec<Hit>) -> Vec<Hit> {
    let mut groups: BTreeMap<(String, String), Vec<Hit>> = BTreeMap::new();
    for h in hits {
        groups.entry((h.utt_id.clone(), h.kw_id.clone())).or_default().push(h);
    }
    let mut out = Vec::new();
    for (_, mut group) in groups {
        group.sort_by(|a, b| {
            b.norm_score
                .total_cmp(&a.norm_score)
                .then(a.stage.cmp(&b.stage))
                .then(a.start_frame.cmp(&b.start_frame))
                .then(a.hyp_rank.cmp(&b.hyp_rank))
        });
        let mut kept: Vec<Hit> = Vec::new();
        for h in group {
            if !kept.iter().any(|k| overlaps(k, &h)) {
                kept.push(h);
            }
        }
        kept.sort_by(|a, b| a.start_frame.cmp(&b.start_frame).then(a.end_frame.cmp(&b.end_frame)));
        out.extend(kept);
    }
    out
}

/// Everything detection needs about one utterance.
#[derive(Debug, Clone, Copy)]
pub struct Utterance<'a> {
    pub pg_char: &'a Posteriorgram,
    pub pg_syll: Option<&'a Posteriorgram>,
    pub nbest_char: &'a [NBestEntry],
    pub nbest_syll: &'a [NBestEntry],
}

#[allow(clippy::too_many_arguments)]
fn scored_hit(
    pg: &Posteriorgram,
    hyp: &NBestEntry,
    units: &[u32],
    m: (usize, usize, usize),
    stage: Stage,
    kw: &Keyword,
    cfg: &KwsConfig,
) -> Option<Hit> {
    let (rank, start, end) = m;
    if hyp.spans.len() != hyp.tokens.len() || end > hyp.spans.len() {
        return None;
    }
    let window = locate_window(&hyp.spans, start, end, cfg.window_pad, pg.frames());
    // a window too short for the keyword is not a candidate
    let raw = score_ctc(pg, units, window).ok()?;
    let norm = if cfg.length_norm { normalize(raw, units.len()) } else { raw };
    let (sf, ef) = (hyp.spans[start].start_frame, hyp.spans[end - 1].end_frame);
    Some(Hit {
        utt_id: pg.utt_id().to_string(),
        kw_id: kw.id.clone(),
        stage,
        start_frame: sf,
        end_frame: ef,
        start_s: sf as f64 * pg.frame_period_s(),
        end_s: ef as f64 * pg.frame_period_s(),
        raw_log_s: raw,
        norm_score: norm,
        hyp_rank: rank,
        decision: norm >= cfg.decision_threshold,
    })
}

/// Runs every enabled matching stage, scores each candidate on its own
/// stage's posteriorgram, merges across stages and applies the decision
/// threshold.
pub fn detect(
    utt: &Utterance<'_>,
    keywords: &[Keyword],
    pron: &Pronouncer,
    costs: &CostTable,
    cfg: &KwsConfig,
) -> Result<Vec<Hit>> {
    if !(0.0..=1.0).contains(&cfg.fuzzy_threshold) {
        return Err(Error::Config(format!(
            "fuzzy threshold {} outside [0, 1]",
            cfg.fuzzy_threshold
        )));
    }
    let mut hits = Vec::new();
    for kw in keywords {
        if cfg.stages.char {
            for m in match_exact(utt.nbest_char, &kw.char_units) {
                let hyp = &utt.nbest_char[m.hyp_rank - 1];
                hits.extend(scored_hit(utt.pg_char, hyp, &kw.char_units, (m.hyp_rank, m.start, m.end), Stage::Char, kw, cfg));
            }
        }
        if cfg.stages.syllable {
            if let Some(pg) = utt.pg_syll {
                for m in match_exact(utt.nbest_syll, &kw.syll_units) {
                    let hyp = &utt.nbest_syll[m.hyp_rank - 1];
                    hits.extend(scored_hit(pg, hyp, &kw.syll_units, (m.hyp_rank, m.start, m.end), Stage::Syllable, kw, cfg));
                }
            }
        }
        if cfg.stages.fuzzy {
            for m in match_fuzzy(utt.nbest_char, kw, pron, costs, cfg.fuzzy_threshold) {
                let hyp = &utt.nbest_char[m.hyp_rank - 1];
                hits.extend(scored_hit(utt.pg_char, hyp, &kw.char_units, (m.hyp_rank, m.start, m.end), Stage::Fuzzy, kw, cfg));
            }
        }
    }
    Ok(merge_stages(hits))
}

/// Reads hit TSV lines back into hits; frame fields are not stored and
/// come back as zero.
pub fn parse_hits(text: &str) -> Result<Vec<Hit>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |why: &str| Error::BadFormat(format!("hit line {}: {why}", n + 1));
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 7 {
            return Err(bad("expected 7 fields"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
        let norm_score = num(f[4])?;
        out.push(Hit {
            utt_id: f[0].to_string(),
            kw_id: f[1].to_string(),
            start_s: num(f[2])?,
            end_s: num(f[3])?,
            norm_score,
            raw_log_s: norm_score,
            decision: match f[5] {
                "1" => true,
                "0" => false,
                _ => return Err(bad("decision must be 0 or 1")),
            },
            stage: f[6].parse()?,
            start_frame: 0,
            end_frame: 0,
            hyp_rank: 0,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posteriorgram::align_viterbi;
    use crate::units::UnitKind;

    fn entry(tokens: &[u32]) -> NBestEntry {
        NBestEntry {
            text: String::new(),
            tokens: tokens.to_vec(),
            score_am: 0.0,
            score_lm: 0.0,
            score_bias: 0.0,
            score_total: 0.0,
            spans: Vec::new(),
        }
    }

    fn hit(stage: Stage, start: usize, end: usize, score: f64) -> Hit {
        Hit {
            utt_id: "u".into(),
            kw_id: "k".into(),
            stage,
            start_frame: start,
            end_frame: end,
            start_s: 0.0,
            end_s: 0.0,
            raw_log_s: score,
            norm_score: score,
            hyp_rank: 1,
            decision: true,
        }
    }

    #[test]
    fn exact_match_finds_substrings() {
        let nb = [entry(&[9, 1, 2, 8])];
        assert_eq!(match_exact(&nb, &[1, 2]), vec![Match { hyp_rank: 1, start: 1, end: 3 }]);
        assert!(match_exact(&nb, &[2, 1]).is_empty());
        let nb = [entry(&[1, 2]), entry(&[3]), entry(&[5, 1, 2])];
        let ranks: Vec<usize> = match_exact(&nb, &[1, 2]).iter().map(|m| m.hyp_rank).collect();
        assert_eq!(ranks, vec![1, 3]);
    }

    #[test]
    fn micro_example_score() {
        let pg = Posteriorgram::from_probs("u", "s", &[vec![0.6, 0.4], vec![0.5, 0.5]]).unwrap();
        let s = score_ctc(&pg, &[1], (0, 2)).unwrap();
        assert!((s - 0.7f64.ln()).abs() < 1e-7);
    }

    #[test]
    fn short_window_is_infeasible() {
        let pg = Posteriorgram::from_probs("u", "s", &[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert!(matches!(score_ctc(&pg, &[1, 1], (0, 2)), Err(Error::AlignmentInfeasible { .. })));
        assert!(matches!(score_ctc(&pg, &[1], (1, 1)), Err(Error::AlignmentInfeasible { .. })));
    }

    #[test]
    fn normalize_divides_by_length() {
        assert_eq!(normalize(-6.0, 3), -2.0);
        assert_eq!(normalize(-1.25, 1), -1.25);
        assert_eq!(normalize(-2.0 * 4.0, 4), normalize(-2.0 * 2.0, 2));
    }

    #[test]
    fn window_padding_and_clamping() {
        let set = UnitSet::new("s", UnitKind::Character, ["a", "b"]).unwrap();
        let cfg = crate::posteriorgram::SynthConfig { frames_per_token: 3, blank_gap: 2, ..Default::default() };
        let pg = crate::posteriorgram::synth_generate(&[1, 2], &set, &cfg).unwrap();
        let spans = align_viterbi(&pg, &[1, 2]).unwrap().spans;
        assert_eq!(locate_window(&spans, 0, 2, 0, pg.frames()), (2, 8));
        assert_eq!(locate_window(&spans, 1, 2, 1, pg.frames()), (4, 9));
        assert_eq!(locate_window(&spans, 0, 2, 100, pg.frames()), (0, 10));
    }

    #[test]
    fn merge_keeps_best_of_overlaps() {
        let merged = merge_stages(vec![hit(Stage::Char, 0, 10, -1.5), hit(Stage::Syllable, 2, 12, -1.2)]);
        assert_eq!(merged.len(), 1);
        assert_eq!(merged[0].stage, Stage::Syllable);

        let merged = merge_stages(vec![hit(Stage::Char, 0, 5, -1.0), hit(Stage::Char, 5, 9, -2.0)]);
        assert_eq!(merged.len(), 2);

        let one = vec![hit(Stage::Fuzzy, 1, 4, -3.0)];
        assert_eq!(merge_stages(one.clone()), one);
    }

    #[test]
    fn hit_tsv_round_trip() {
        let mut h = hit(Stage::Fuzzy, 3, 9, -1.234_567_8);
        h.start_s = 0.12;
        h.end_s = 0.36;
        let line = h.to_tsv();
        assert_eq!(line, "u\tk\t0.120000\t0.360000\t-1.234568\t1\tfuzzy");
        let back = parse_hits(&line).unwrap();
        assert_eq!(back[0].stage, Stage::Fuzzy);
        assert!((back[0].norm_score + 1.234568).abs() < 1e-9);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_hit() -> impl Strategy<Value = Hit> {
            (0usize..3, 0usize..2, 0usize..30, 1usize..8, -8.0f64..0.0).prop_map(|(st, kw, s, len, sc)| {
                let mut h = hit([Stage::Char, Stage::Syllable, Stage::Fuzzy][st], s, s + len, sc);
                h.kw_id = format!("k{kw}");
                h
            })
        }

        proptest! {
            #[test]
            fn merge_is_idempotent(hits in prop::collection::vec(arb_hit(), 0..12)) {
                let once = merge_stages(hits);
                prop_assert_eq!(merge_stages(once.clone()), once);
            }

            #[test]
            fn raising_threshold_never_adds_decisions(hits in prop::collection::vec(arb_hit(), 0..12),
                                                      lo in -8.0f64..0.0, d in 0.0f64..4.0) {
                let count = |th: f64| hits.iter().filter(|h| h.norm_score >= th).count();
                prop_assert!(count(lo + d) <= count(lo));
            }

            #[test]
            fn scaling_preserves_equal_length_ranking(raw in prop::collection::vec(-20.0f64..0.0, 2..8),
                                                      c in 0.1f64..10.0, len in 1usize..6) {
                let order = |xs: &[f64]| {
                    let mut idx: Vec<usize> = (0..xs.len()).collect();
                    idx.sort_by(|&a, &b| xs[b].total_cmp(&xs[a]).then(a.cmp(&b)));
                    idx
                };
                let base: Vec<f64> = raw.iter().map(|&r| normalize(r, len)).collect();
                let scaled: Vec<f64> = raw.iter().map(|&r| normalize(c * r, len)).collect();
                prop_assert_eq!(order(&base), order(&scaled));
            }
        }
    }
}
