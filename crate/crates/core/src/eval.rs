//! Occurrence-level scoring of hit lists: alignment against references,
//! precision/recall/F1 and ATWV.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kws::Hit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefOccurrence {
    pub utt_id: String,
    pub kw_id: String,
    pub start_s: f64,
    pub end_s: f64,
}

impl RefOccurrence {
    pub fn to_tsv(&self) -> String {
        format!("{}\t{}\t{:.6}\t{:.6}", self.utt_id, self.kw_id, self.start_s, self.end_s)
    }
}

pub fn parse_refs(text: &str) -> Result<Vec<RefOccurrence>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |why: &str| Error::BadFormat(format!("reference line {}: {why}", n + 1));
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(bad("expected 4 fields"));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad("bad time"));
        let (start_s, end_s) = (num(f[2])?, num(f[3])?);
        if start_s >= end_s {
            return Err(bad("start must precede end"));
        }
        out.push(RefOccurrence {
            utt_id: f[0].to_string(),
            kw_id: f[1].to_string(),
            start_s,
            end_s,
        });
    }
    Ok(out)
}

pub fn load_refs(path: impl AsRef<Path>) -> Result<Vec<RefOccurrence>> {
    let path = path.as_ref();
    parse_refs(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "fraction")]
pub enum OverlapRule {
    /// The hit's midpoint lies inside the reference span.
    Midpoint,
    /// The overlap covers at least this fraction of the reference.
    MinOverlap(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub atwv_beta: f64,
    pub total_speech_s: f64,
    pub overlap: OverlapRule,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            atwv_beta: 999.9,
            total_speech_s: 3600.0,
            overlap: OverlapRule::Midpoint,
        }
    }
}

impl OverlapRule {
    fn matches(&self, hit: &Hit, r: &RefOccurrence) -> bool {
        match *self {
            OverlapRule::Midpoint => {
                let mid = 0.5 * (hit.start_s + hit.end_s);
                r.start_s <= mid && mid <= r.end_s
            }
            OverlapRule::MinOverlap(frac) => {
                let ov = hit.end_s.min(r.end_s) - hit.start_s.max(r.start_s);
                ov > 0.0 && ov >= frac * (r.end_s - r.start_s)
            }
        }
    }
}

/// Indices into the hit and reference slices given to [`align_hits`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HitAlignment {
    pub true_positives: Vec<(usize, usize)>,
    pub false_alarms: Vec<usize>,
    pub misses: Vec<usize>,
}

/// One-to-one greedy matching within each (utterance, keyword), hits taken
/// in descending score order. Hits with a false decision are ignored.
pub fn align_hits(hits: &[Hit], refs: &[RefOccurrence], cfg: &EvalConfig) -> HitAlignment {
    type Key<'a> = (&'a str, &'a str);
    let mut ref_groups: BTreeMap<Key<'_>, Vec<usize>> = BTreeMap::new();
    for (i, r) in refs.iter().enumerate() {
        ref_groups.entry((&r.utt_id, &r.kw_id)).or_default().push(i);
    }
    let mut hit_groups: BTreeMap<Key<'_>, Vec<usize>> = BTreeMap::new();
    for (i, h) in hits.iter().enumerate().filter(|(_, h)| h.decision) {
        hit_groups.entry((&h.utt_id, &h.kw_id)).or_default().push(i);
    }
    let keys: BTreeSet<Key<'_>> = ref_groups.keys().chain(hit_groups.keys()).copied().collect();
    let mut out = HitAlignment::default();
    for key in keys {
        let mut group_refs = ref_groups.remove(&key).unwrap_or_default();
        group_refs.sort_by(|&a, &b| {
            refs[a]
                .start_s
                .total_cmp(&refs[b].start_s)
                .then(refs[a].end_s.total_cmp(&refs[b].end_s))
        });
        let mut group_hits = hit_groups.remove(&key).unwrap_or_default();
        group_hits.sort_by(|&a, &b| {
            hits[b]
                .norm_score
                .total_cmp(&hits[a].norm_score)
                .then(hits[a].start_s.total_cmp(&hits[b].start_s))
                .then(hits[a].end_s.total_cmp(&hits[b].end_s))
        });
        let mut used = vec![false; group_refs.len()];
        for h in group_hits {
            let found = group_refs
                .iter()
                .enumerate()
                .find(|&(j, &r)| !used[j] && cfg.overlap.matches(&hits[h], &refs[r]));
            match found {
                Some((j, &r)) => {
                    used[j] = true;
                    out.true_positives.push((h, r));
                }
                None => out.false_alarms.push(h),
            }
        }
        out.misses
            .extend(group_refs.iter().zip(&used).filter(|(_, u)| !**u).map(|(&r, _)| r));
    }
    out.true_positives.sort_unstable();
    out.false_alarms.sort_unstable();
    out.misses.sort_unstable();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn f1(tp: usize, fp: usize, fn_: usize) -> Prf {
    let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Prf {
        precision,
        recall,
        f1,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeywordStats {
    pub kw_id: String,
    pub n_true: usize,
    pub n_correct: usize,
    pub n_false_alarm: usize,
    /// None for keywords without references, which ATWV leaves out.
    pub twv: Option<f64>,
}

pub fn keyword_stats(hits: &[Hit], refs: &[RefOccurrence], al: &HitAlignment) -> Vec<KeywordStats> {
    let mut map: BTreeMap<&str, (usize, usize, usize)> = BTreeMap::new();
    for r in refs {
        map.entry(&r.kw_id).or_default().0 += 1;
    }
    for &(h, _) in &al.true_positives {
        map.entry(&hits[h].kw_id).or_default().1 += 1;
    }
    for &h in &al.false_alarms {
        map.entry(&hits[h].kw_id).or_default().2 += 1;
    }
    map.into_iter()
        .map(|(kw, (n_true, n_correct, n_false_alarm))| KeywordStats {
            kw_id: kw.to_string(),
            n_true,
            n_correct,
            n_false_alarm,
            twv: None,
        })
        .collect()
}

/// Term-weighted value of one keyword: `1 - P_miss - beta * P_fa`, with
/// `P_fa = N_fa / (total_speech_s - N_true)`.
pub fn twv(stats: &KeywordStats, cfg: &EvalConfig) -> Option<f64> {
    if stats.n_true == 0 {
        return None;
    }
    let p_miss = (stats.n_true - stats.n_correct) as f64 / stats.n_true as f64;
    let p_fa = stats.n_false_alarm as f64 / (cfg.total_speech_s - stats.n_true as f64);
    Some(1.0 - p_miss - cfg.atwv_beta * p_fa)
}

/// Mean TWV over keywords that have at least one reference.
pub fn atwv(stats: &[KeywordStats], cfg: &EvalConfig) -> Result<f64> {
    if cfg.atwv_beta.is_nan() || cfg.atwv_beta <= 0.0 {
        return Err(Error::Config(format!("atwv_beta {} must be positive", cfg.atwv_beta)));
    }
    let max_true = stats.iter().map(|s| s.n_true).max().unwrap_or(0);
    if cfg.total_speech_s.is_nan() || cfg.total_speech_s <= max_true as f64 {
        return Err(Error::Config(format!(
            "total_speech_s {} must exceed the largest keyword count {max_true}",
            cfg.total_speech_s
        )));
    }
    let values: Vec<f64> = stats.iter().filter_map(|s| twv(s, cfg)).collect();
    if values.is_empty() {
        return Err(Error::NoScorableKeywords);
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub f1: f64,
    pub atwv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub atwv: f64,
    pub n_true: usize,
    pub n_correct: usize,
    pub n_false_alarm: usize,
    /// False alarms on keywords without references; not part of ATWV.
    pub unscored_false_alarms: usize,
    pub keywords: Vec<KeywordStats>,
    pub sweep: Vec<SweepPoint>,
}

pub const SWEEP_POINTS: usize = 50;

fn summarize(hits: &[Hit], refs: &[RefOccurrence], cfg: &EvalConfig) -> Result<(Prf, f64, Vec<KeywordStats>, HitAlignment)> {
    let al = align_hits(hits, refs, cfg);
    let prf = f1(al.true_positives.len(), al.false_alarms.len(), al.misses.len());
    let mut stats = keyword_stats(hits, refs, &al);
    for s in &mut stats {
        s.twv = twv(s, cfg);
    }
    let value = atwv(&stats, cfg)?;
    Ok((prf, value, stats, al))
}

/// Scores decision-true hits and sweeps the decision threshold over the
/// range of hit scores.
pub fn evaluate(hits: &[Hit], refs: &[RefOccurrence], cfg: &EvalConfig) -> Result<EvalReport> {
    let (prf, value, stats, al) = summarize(hits, refs, cfg)?;
    let unscored_false_alarms = stats.iter().filter(|s| s.n_true == 0).map(|s| s.n_false_alarm).sum();

    let mut sweep = Vec::new();
    let (lo, hi) = hits.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), h| {
        (lo.min(h.norm_score), hi.max(h.norm_score))
    });
    if lo.is_finite() {
        let mut rethresholded = hits.to_vec();
        for i in 0..SWEEP_POINTS {
            let threshold = lo + (hi - lo) * i as f64 / (SWEEP_POINTS - 1) as f64;
            for (h, orig) in rethresholded.iter_mut().zip(hits) {
                h.decision = orig.norm_score >= threshold;
            }
            let (p, a, _, _) = summarize(&rethresholded, refs, cfg)?;
            sweep.push(SweepPoint {
                threshold,
                f1: p.f1,
                atwv: a,
            });
        }
    }
    Ok(EvalReport {
        precision: prf.precision,
        recall: prf.recall,
        f1: prf.f1,
        atwv: value,
        n_true: refs.len(),
        n_correct: al.true_positives.len(),
        n_false_alarm: al.false_alarms.len(),
        unscored_false_alarms,
        keywords: stats,
        sweep,
    })
}
