use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use super::{KeywordTrie, UnitLm, TRIE_ROOT};
use crate::error::{Error, Result};
use crate::lm::LmState;
use crate::logmath::{log_add, LN_10};
use crate::posteriorgram::{align_viterbi, Posteriorgram, TokenSpan};
use crate::units::{UnitSet, BLANK_ID};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamConfig {
    pub beam_size: usize,
    pub nbest: usize,
    pub lm_weight: f64,
    /// New-unit extensions below this natural-log posterior are skipped.
    pub token_min_logp: f64,
    pub bias_enabled: bool,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            beam_size: 10,
            nbest: 10,
            lm_weight: 0.3,
            token_min_logp: -12.0,
            bias_enabled: true,
        }
    }
}

/// Search state for one prefix.
#[derive(Debug, Clone)]
pub struct Hypothesis {
    pub prefix: Vec<u32>,
    pub logp_blank: f64,
    pub logp_nonblank: f64,
    pub lm_state: LmState,
    pub lm_log10: f64,
    pub bias_bonus: f64,
    pub trie_state: u32,
    awarded: SmallVec<[u32; 4]>,
}

impl Hypothesis {
    fn root(lm: Option<&UnitLm<'_>>) -> Self {
        Hypothesis {
            prefix: Vec::new(),
            logp_blank: 0.0,
            logp_nonblank: f64::NEG_INFINITY,
            lm_state: lm.map(UnitLm::begin_state).unwrap_or_default(),
            lm_log10: 0.0,
            bias_bonus: 0.0,
            trie_state: TRIE_ROOT,
            awarded: SmallVec::new(),
        }
    }

    pub fn logp_total(&self) -> f64 {
        log_add(self.logp_blank, self.logp_nonblank)
    }

    fn score(&self, lm_scale: f64) -> f64 {
        self.logp_total() + lm_scale * self.lm_log10 + self.bias_bonus
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NBestEntry {
    pub text: String,
    pub tokens: Vec<u32>,
    /// Natural-log CTC prefix probability.
    pub score_am: f64,
    /// log10 LM probability.
    pub score_lm: f64,
    pub score_bias: f64,
    pub score_total: f64,
    #[serde(with = "span_triples")]
    pub spans: Vec<TokenSpan>,
}

/// One utterance's N-best list, serialized as one JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NBestList {
    pub utt_id: String,
    pub hyps: Vec<NBestEntry>,
}

mod span_triples {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::posteriorgram::TokenSpan;

    pub fn serialize<S: Serializer>(spans: &[TokenSpan], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(spans.iter().map(|sp| [sp.start_frame, sp.end_frame, sp.peak_frame]))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<TokenSpan>, D::Error> {
        let raw: Vec<[usize; 3]> = Vec::deserialize(d)?;
        Ok(raw
            .into_iter()
            .map(|[start_frame, end_frame, peak_frame]| TokenSpan {
                token: 0,
                start_frame,
                end_frame,
                peak_frame,
                peak_logp: 0.0,
            })
            .collect())
    }
}

impl NBestList {
    /// Restores the span token ids, which the JSON form leaves out.
    pub fn fill_span_tokens(&mut self) {
        for h in &mut self.hyps {
            for (sp, &tok) in h.spans.iter_mut().zip(&h.tokens) {
                sp.token = tok;
            }
        }
    }
}

#[derive(Clone, Copy)]
struct Score(f64);

impl PartialEq for Score {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Score {}

impl PartialOrd for Score {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Score {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Tracks the `capacity` best lower-bound scores seen this frame; the
/// smallest of them bounds the score needed to survive pruning.
struct Threshold {
    heap: BinaryHeap<Reverse<Score>>,
    capacity: usize,
}

impl Threshold {
    fn new(capacity: usize) -> Self {
        Threshold {
            heap: BinaryHeap::new(),
            capacity,
        }
    }

    fn offer(&mut self, score: f64) {
        if self.heap.len() < self.capacity {
            self.heap.push(Reverse(Score(score)));
        } else if let Some(mut top) = self.heap.peek_mut() {
            if score > top.0 .0 {
                *top = Reverse(Score(score));
            }
        }
    }

    fn value(&self) -> f64 {
        if self.heap.len() < self.capacity {
            f64::NEG_INFINITY
        } else {
            self.heap.peek().map_or(f64::NEG_INFINITY, |r| r.0 .0)
        }
    }
}

/// Decodes `pg` into at most `cfg.nbest` hypotheses ordered by total score
/// (ties by token ids).
///
/// Scores are natural-log throughout: `total = am + lm_weight * ln(10) *
/// lm_log10 + bias`. The bias term participates in pruning, and each trie
/// chunk is awarded at most once per hypothesis.
pub fn prefix_beam_search(
    pg: &Posteriorgram,
    units: &UnitSet,
    lm: Option<&UnitLm<'_>>,
    trie: Option<&KeywordTrie>,
    cfg: &BeamConfig,
) -> Result<Vec<NBestEntry>> {
    pg.check_units(units)?;
    if let Some(lm) = lm {
        if lm.unit_set_id() != units.id() {
            return Err(Error::UnitSetMismatch {
                expected: units.id().to_string(),
                found: lm.unit_set_id().to_string(),
            });
        }
    }
    if cfg.beam_size == 0 {
        return Err(Error::Config("beam_size must be at least 1".into()));
    }
    let trie = if cfg.bias_enabled { trie } else { None };
    let lm_scale = if lm.is_some() { cfg.lm_weight * LN_10 } else { 0.0 };
    // LM log10 scores are <= 0, so a non-negative weight keeps the bound valid
    let can_prune = lm_scale >= 0.0;
    let vocab = pg.vocab();

    let mut beam = vec![Hypothesis::root(lm)];
    let mut units_by_logp: Vec<(f32, u32)> = Vec::with_capacity(vocab);

    for t in 0..pg.frames() {
        let row = pg.row(t);
        let p_blank = row[BLANK_ID as usize] as f64;
        let mut next: Vec<Hypothesis> = Vec::with_capacity(beam.len() * 2);
        let mut index: FxHashMap<Vec<u32>, usize> = FxHashMap::default();
        let mut threshold = Threshold::new(cfg.beam_size);

        // blank and repeat keep the prefix
        for h in &beam {
            let mut n = h.clone();
            n.logp_blank = h.logp_total() + p_blank;
            n.logp_nonblank = match h.prefix.last() {
                Some(&last) => h.logp_nonblank + row[last as usize] as f64,
                None => f64::NEG_INFINITY,
            };
            threshold.offer(n.score(lm_scale));
            index.insert(n.prefix.clone(), next.len());
            next.push(n);
        }

        // prefixes already in the beam that extend another beam prefix by one unit
        let mut children: Vec<SmallVec<[u32; 4]>> = vec![SmallVec::new(); beam.len()];
        {
            let by_prefix: FxHashMap<&[u32], usize> =
                beam.iter().enumerate().map(|(i, h)| (h.prefix.as_slice(), i)).collect();
            for h in &beam {
                if let Some((&last, parent)) = h.prefix.split_last() {
                    if let Some(&p) = by_prefix.get(parent) {
                        children[p].push(last);
                    }
                }
            }
        }

        // score ceiling of any extension of `h`, before the unit's own
        // posterior and keyword bonus
        let bound_base = |h: &Hypothesis| {
            let lm_ceiling = lm.map_or(0.0, |lm| lm.max_log10_prob(&h.lm_state));
            h.logp_total() + lm_scale * (h.lm_log10 + lm_ceiling) + h.bias_bonus
        };
        let bases: Vec<f64> = beam.iter().map(bound_base).collect();
        let cutoff = if can_prune {
            let best_base = bases.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (threshold.value() - best_base).max(cfg.token_min_logp)
        } else {
            cfg.token_min_logp
        };
        units_by_logp.clear();
        units_by_logp.extend(
            row.iter()
                .enumerate()
                .skip(1)
                .filter(|(_, &v)| v as f64 >= cutoff)
                .map(|(u, &v)| (v, u as u32)),
        );
        units_by_logp.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

        for (hi, h) in beam.iter().enumerate() {
            let last = h.prefix.last().copied();
            // merges into surviving prefixes are never pruned
            for &u in &children[hi] {
                let p = row[u as usize] as f64;
                if p < cfg.token_min_logp {
                    continue;
                }
                let mass = if Some(u) == last { h.logp_blank + p } else { h.logp_total() + p };
                let mut key = h.prefix.clone();
                key.push(u);
                let target = &mut next[index[&key]];
                target.logp_nonblank = log_add(target.logp_nonblank, mass);
            }

            let base = bases[hi];
            let bonus_units = trie.map_or(&[][..], |t| t.bonus_units(h.trie_state));
            let mut try_extend = |u: u32, p: f64, threshold: &mut Threshold| {
                if children[hi].contains(&u) {
                    return;
                }
                let mass = if Some(u) == last { h.logp_blank + p } else { h.logp_total() + p };
                if mass == f64::NEG_INFINITY {
                    return;
                }
                let step = Step::new(h, u, lm, trie);
                let score = mass + lm_scale * step.lm_log10 + step.bias_bonus;
                if can_prune && score < threshold.value() {
                    return;
                }
                threshold.offer(score);
                let n = step.into_hypothesis(h, u, mass);
                index.insert(n.prefix.clone(), next.len());
                next.push(n);
            };
            // units that may complete a keyword chunk carry their own bound
            for &(u, bonus) in bonus_units {
                let p = row[u as usize] as f64;
                if p < cfg.token_min_logp || (can_prune && base + p + bonus < threshold.value()) {
                    continue;
                }
                try_extend(u, p, &mut threshold);
            }
            for &(p, u) in &units_by_logp {
                let p = p as f64;
                if can_prune && base + p < threshold.value() {
                    break;
                }
                if bonus_units.binary_search_by_key(&u, |e| e.0).is_ok() {
                    continue;
                }
                try_extend(u, p, &mut threshold);
            }
        }

        let mut order: Vec<(f64, usize)> = next.iter().enumerate().map(|(i, h)| (h.score(lm_scale), i)).collect();
        order.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| next[a.1].prefix.cmp(&next[b.1].prefix)));
        order.truncate(cfg.beam_size);
        let mut slots: Vec<Option<Hypothesis>> = next.into_iter().map(Some).collect();
        beam = order.iter().filter_map(|&(_, i)| slots[i].take()).collect();
    }

    let mut out = Vec::with_capacity(cfg.nbest.min(beam.len()));
    for h in beam.into_iter().take(cfg.nbest) {
        let spans = align_viterbi(pg, &h.prefix)?.spans;
        let score_am = if pg.frames() == 0 { 0.0 } else { h.logp_total() };
        let score_lm = if lm.is_some() { h.lm_log10 } else { 0.0 };
        out.push(NBestEntry {
            text: units.render(&h.prefix),
            score_am,
            score_lm,
            score_bias: h.bias_bonus,
            score_total: score_am + lm_scale * score_lm + h.bias_bonus,
            tokens: h.prefix,
            spans,
        });
    }
    Ok(out)
}

/// LM and trie outcome of appending one unit, computed before committing
/// to a new hypothesis.
struct Step {
    lm_log10: f64,
    lm_state: Option<LmState>,
    bias_bonus: f64,
    trie_state: u32,
    newly_awarded: SmallVec<[u32; 2]>,
}

impl Step {
    fn new(h: &Hypothesis, unit: u32, lm: Option<&UnitLm<'_>>, trie: Option<&KeywordTrie>) -> Self {
        let (lm_log10, lm_state) = match lm {
            Some(lm) => {
                let (p, s) = lm.score_token(&h.lm_state, unit);
                (h.lm_log10 + p, Some(s))
            }
            None => (0.0, None),
        };
        let mut bias_bonus = h.bias_bonus;
        let mut newly_awarded = SmallVec::new();
        let trie_state = match trie {
            Some(trie) => {
                let node = trie.step(h.trie_state, unit);
                for &c in trie.completed(node) {
                    if !h.awarded.contains(&c) && !newly_awarded.contains(&c) {
                        newly_awarded.push(c);
                        bias_bonus += trie.chunk(c).weight;
                    }
                }
                node
            }
            None => TRIE_ROOT,
        };
        Step {
            lm_log10,
            lm_state,
            bias_bonus,
            trie_state,
            newly_awarded,
        }
    }

    fn into_hypothesis(self, h: &Hypothesis, unit: u32, mass: f64) -> Hypothesis {
        let mut prefix = Vec::with_capacity(h.prefix.len() + 1);
        prefix.extend_from_slice(&h.prefix);
        prefix.push(unit);
        let mut awarded = h.awarded.clone();
        awarded.extend(self.newly_awarded);
        Hypothesis {
            prefix,
            logp_blank: f64::NEG_INFINITY,
            logp_nonblank: mass,
            lm_state: self.lm_state.unwrap_or_else(|| h.lm_state.clone()),
            lm_log10: self.lm_log10,
            bias_bonus: self.bias_bonus,
            trie_state: self.trie_state,
            awarded,
        }
    }
}
