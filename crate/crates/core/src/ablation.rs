//! Ablation ladders: the same corpus run through progressively richer
//! system configurations, one report row per step.

use std::collections::hash_map::Entry;
use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::Serialize;

use crate::config::PipelineConfig;
use crate::decoder::UnitLm;
use crate::error::Result;
use crate::eval::{evaluate, EvalConfig, EvalReport};
use crate::kws::{KwsConfig, StageSet};
use crate::pipeline::{decode_all, detect_all, total_speech_s, DecodeMode, Decoded, Decoders, Resources, SynthUtt};

/// One system configuration of a ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub name: String,
    pub mode: DecodeMode,
    pub nbest: usize,
    pub kws: KwsConfig,
}

fn stages(char: bool, syllable: bool, fuzzy: bool) -> StageSet {
    StageSet { char, syllable, fuzzy }
}

/// Greedy, +LM, +length-norm, +N-best, +bias, +fuzzy, +syllable.
pub fn method_ladder(cfg: &PipelineConfig) -> Vec<Step> {
    let base = cfg.kws_config();
    let nbest = cfg.beam.nbest;
    let kws = |length_norm, s| KwsConfig {
        length_norm,
        stages: s,
        ..base.clone()
    };
    let beam = |bias| DecodeMode {
        greedy: false,
        lm: true,
        bias,
    };
    vec![
        Step {
            name: "greedy".into(),
            mode: DecodeMode {
                greedy: true,
                lm: false,
                bias: false,
            },
            nbest: 1,
            kws: kws(false, stages(true, false, false)),
        },
        Step {
            name: "+LM".into(),
            mode: beam(false),
            nbest: 1,
            kws: kws(false, stages(true, false, false)),
        },
        Step {
            name: "+length-norm".into(),
            mode: beam(false),
            nbest: 1,
            kws: kws(true, stages(true, false, false)),
        },
        Step {
            name: "+N-best".into(),
            mode: beam(false),
            nbest,
            kws: kws(true, stages(true, false, false)),
        },
        Step {
            name: "+bias".into(),
            mode: beam(true),
            nbest,
            kws: kws(true, stages(true, false, false)),
        },
        Step {
            name: "+fuzzy".into(),
            mode: beam(true),
            nbest,
            kws: kws(true, stages(true, false, true)),
        },
        Step {
            name: "+syllable".into(),
            mode: beam(true),
            nbest,
            kws: kws(true, stages(true, true, true)),
        },
    ]
}

/// Char-only top-1, +N-best, +bias, +syllable, +fuzzy.
pub fn stage_ladder(cfg: &PipelineConfig) -> Vec<Step> {
    let base = cfg.kws_config();
    let nbest = cfg.beam.nbest;
    let kws = |s| KwsConfig {
        length_norm: true,
        stages: s,
        ..base.clone()
    };
    let beam = |bias| DecodeMode {
        greedy: false,
        lm: true,
        bias,
    };
    vec![
        Step {
            name: "char-only".into(),
            mode: beam(false),
            nbest: 1,
            kws: kws(stages(true, false, false)),
        },
        Step {
            name: "+N-best".into(),
            mode: beam(false),
            nbest,
            kws: kws(stages(true, false, false)),
        },
        Step {
            name: "+bias".into(),
            mode: beam(true),
            nbest,
            kws: kws(stages(true, false, false)),
        },
        Step {
            name: "+syllable".into(),
            mode: beam(true),
            nbest,
            kws: kws(stages(true, true, false)),
        },
        Step {
            name: "+fuzzy".into(),
            mode: beam(true),
            nbest,
            kws: kws(stages(true, true, true)),
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub atwv: f64,
    pub n_correct: usize,
    pub n_false_alarm: usize,
    /// Recall over keywords in the bottom LM-score quartile.
    pub rare_recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationReport {
    pub n_utterances: usize,
    pub n_keywords: usize,
    pub n_references: usize,
    pub rare_keywords: Vec<String>,
    pub rows: Vec<Row>,
}

impl AblationReport {
    pub fn row(&self, name: &str) -> Option<&Row> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Tab-separated table, one line per step.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("method\tprecision\trecall\tF1\tATWV\trare_recall\tcorrect\tfalse_alarms\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{}\t{}",
                r.name, r.precision, r.recall, r.f1, r.atwv, r.rare_recall, r.n_correct, r.n_false_alarm
            );
        }
        out
    }
}

/// Keyword ids in the bottom quartile of character-LM score (at least one).
pub fn rare_keywords(res: &Resources) -> Vec<String> {
    let Some(lm) = res.char_lm.as_ref() else {
        return Vec::new();
    };
    let ulm = UnitLm::new(lm, &res.chars);
    let mut scored: Vec<(f64, &str)> = res
        .keywords
        .iter()
        .map(|k| (ulm.score_sequence(&k.char_units, false), k.id.as_str()))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
    let n = scored.len().div_ceil(4);
    let mut ids: Vec<String> = scored[..n].iter().map(|(_, id)| id.to_string()).collect();
    ids.sort();
    ids
}

fn subset_recall(report: &EvalReport, ids: &BTreeSet<&str>) -> f64 {
    let (mut correct, mut total) = (0, 0);
    for k in report.keywords.iter().filter(|k| ids.contains(k.kw_id.as_str())) {
        correct += k.n_correct;
        total += k.n_true;
    }
    if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    }
}

/// Runs every step on the same utterances. Decoding is shared between steps
/// that differ only in matching.
pub fn run_ladder(res: &Resources, utts: &[SynthUtt], steps: &[Step], cfg: &PipelineConfig) -> Result<AblationReport> {
    let refs: Vec<_> = utts.iter().flat_map(|u| u.refs.iter().cloned()).collect();
    let eval_cfg: EvalConfig = cfg.eval_config(total_speech_s(utts));
    let rare = rare_keywords(res);
    let rare_set: BTreeSet<&str> = rare.iter().map(String::as_str).collect();
    let with_syllables = steps.iter().any(|s| s.kws.stages.syllable);
    let mut cache: HashMap<(bool, bool, bool), Vec<Decoded>> = HashMap::new();
    let mut rows = Vec::with_capacity(steps.len());
    for step in steps {
        let key = (step.mode.greedy, step.mode.lm, step.mode.bias);
        let decoded = match cache.entry(key) {
            Entry::Occupied(e) => e.into_mut(),
            Entry::Vacant(e) => {
                let decoders = Decoders::new(res, step.mode, cfg.beam_config(), &cfg.bias_config())?;
                e.insert(decode_all(&decoders, utts, with_syllables)?)
            }
        };
        let hits = detect_all(res, utts, decoded, step.nbest, &step.kws)?;
        let report = evaluate(&hits, &refs, &eval_cfg)?;
        rows.push(Row {
            name: step.name.clone(),
            precision: report.precision,
            recall: report.recall,
            f1: report.f1,
            atwv: report.atwv,
            n_correct: report.n_correct,
            n_false_alarm: report.n_false_alarm,
            rare_recall: subset_recall(&report, &rare_set),
        });
    }
    Ok(AblationReport {
        n_utterances: utts.len(),
        n_keywords: res.keywords.len(),
        n_references: refs.len(),
        rare_keywords: rare,
        rows,
    })
}
