//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails. Pass criterion names (e.g. `acc5`) as
//! arguments to run a subset.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use common::*;
use rand::Rng;

use kws_core::ablation::{run_ladder, stage_ladder};
use kws_core::config::PipelineConfig;
use kws_core::corpus::{generate_world, world_pipeline_config, World, WorldConfig};
use kws_core::decoder::{build_bias_trie, prefix_beam_search, BeamConfig, BiasConfig, NBestEntry, UnitLm};
use kws_core::eval::{evaluate, EvalConfig, OverlapRule, RefOccurrence};
use kws_core::kws::{score_ctc, Hit, Stage};
use kws_core::lm::{train, train_tokens, NGramLm};
use kws_core::phonetics::parse_syllable;
use kws_core::pipeline::{decode_all, detect_all, synthesize, synthesize_one, DecodeMode, Decoders, Resources, SynthUtt};
use kws_core::posteriorgram::{synth_generate, Posteriorgram, SynthConfig};
use kws_core::units::{UnitKind, UnitSet};

type Check = fn() -> String;

fn toy_units(vocab: usize) -> UnitSet {
    let names = ["a", "b", "c", "d", "e"];
    UnitSet::new("t", UnitKind::Character, names[..vocab - 1].iter().copied()).unwrap()
}

fn exhaustive() -> BeamConfig {
    BeamConfig {
        beam_size: usize::MAX,
        nbest: usize::MAX,
        lm_weight: 0.0,
        token_min_logp: f64::NEG_INFINITY,
        bias_enabled: false,
    }
}

fn acc1_brute_force() -> String {
    let start = Instant::now();
    let mut r = rng(101);
    let mut instances = 0;
    for frames in 1..=5 {
        for vocab in 2..=3 {
            let set = toy_units(vocab);
            for _ in 0..60 {
                let pg = random_pg(&mut r, frames, vocab, "t");
                let oracle = label_probs(&pg, 0, frames);
                let nb = prefix_beam_search(&pg, &set, None, None, &exhaustive()).unwrap();
                assert_eq!(nb.len(), oracle.len());
                for e in &nb {
                    assert!(rel_close(e.score_am, oracle[&e.tokens].ln(), 1e-9), "{:?}", e.tokens);
                }
                let best = oracle.iter().max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(a.0))).unwrap();
                assert_eq!(&nb[0].tokens, best.0);
                instances += 1;
            }
        }
    }
    assert!(instances >= 500);

    let mut windows = 0;
    for frames in 1..=6 {
        for vocab in 2..=4 {
            let pg = random_pg(&mut r, frames, vocab, "t");
            let mut keywords: Vec<Vec<u32>> = Vec::new();
            for len in 1..=3usize {
                let mut kw = vec![1u32; len];
                loop {
                    keywords.push(kw.clone());
                    let Some(i) = kw.iter().rposition(|&u| (u as usize) < vocab - 1) else {
                        break;
                    };
                    kw[i] += 1;
                    kw[i + 1..].fill(1);
                }
            }
            for ws in 0..frames {
                for we in ws + 1..=frames {
                    let oracle = label_probs(&pg, ws, we);
                    for kw in &keywords {
                        match oracle.get(kw) {
                            Some(p) => {
                                let s = score_ctc(&pg, kw, (ws, we)).unwrap();
                                assert!(rel_close(s, p.ln(), 1e-9), "{kw:?} in [{ws},{we})");
                            }
                            None => assert!(score_ctc(&pg, kw, (ws, we)).map_or(true, |s| s == f64::NEG_INFINITY)),
                        }
                        windows += 1;
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(60), "{elapsed:?}");
    format!("{instances} decode instances, {windows} keyword/window scores, {:.1}s", elapsed.as_secs_f64())
}

fn acc2_micro_example() -> String {
    let set = toy_units(2);
    let pg = Posteriorgram::from_probs("u", "t", &[vec![0.6, 0.4], vec![0.5, 0.5]]).unwrap();
    // paths: (-,-)=.30 (-,a)=.30 (a,-)=.20 (a,a)=.20
    let oracle_a = 0.3 + 0.2 + 0.2;
    let oracle_empty = 0.6 * 0.5;
    let nb = prefix_beam_search(&pg, &set, None, None, &exhaustive()).unwrap();
    let p = |tokens: &[u32]| nb.iter().find(|e| e.tokens == tokens).map(|e| e.score_am.exp());
    let (pa, pe) = (p(&[1]).unwrap(), p(&[]).unwrap());
    assert!((pa - oracle_a).abs() < 1e-7 && (pe - oracle_empty).abs() < 1e-7);
    assert!(p(&[1, 1]).is_none());
    format!("P(a)={pa:.6} P()={pe:.6} P(aa)=0")
}

fn context_mass(lm: &NGramLm, ctx: &[u32]) -> f64 {
    (0..lm.vocab().len() as u32)
        .filter(|&w| w != lm.bos_id())
        .map(|w| 10f64.powf(lm.log10_prob(ctx, w)))
        .sum()
}

fn acc3_lm() -> String {
    let lm = train(["a b", "a c"], 2, 0.0).unwrap();
    let id = |t: &str| lm.token_id(t);
    // counts: <s> a ×2, a b, a c, b </s>, c </s>; unigram tokens a a b c </s> </s>
    let expected = [
        (vec![id("<s>")], id("a"), 1.0f64),
        (vec![id("a")], id("b"), 0.5),
        (vec![id("a")], id("c"), 0.5),
        (vec![id("b")], id("</s>"), 1.0),
        (vec![id("c")], id("</s>"), 1.0),
        (vec![], id("a"), 2.0 / 6.0),
        (vec![], id("b"), 1.0 / 6.0),
        (vec![], id("</s>"), 2.0 / 6.0),
    ];
    for (ctx, w, p) in &expected {
        assert!((lm.log10_prob(ctx, *w) - p.log10()).abs() < 1e-12, "{ctx:?} {w}");
    }

    let mut r = rng(103);
    let mut contexts = 0;
    let mut drift: f64 = 0.0;
    for _ in 0..40 {
        let order = r.gen_range(1..=3);
        let lines: Vec<Vec<String>> = (0..r.gen_range(1..8))
            .map(|_| (0..r.gen_range(0..7)).map(|_| ["a", "b", "c", "d"][r.gen_range(0..4)].to_string()).collect())
            .collect();
        let lm = train_tokens(lines, order, 0.75).unwrap();
        let v = lm.vocab().len() as u32;
        let mut ctxs: Vec<Vec<u32>> = vec![vec![]];
        for _ in 1..order {
            let longer: Vec<Vec<u32>> = ctxs
                .iter()
                .filter(|c| c.len() == ctxs.last().unwrap().len())
                .flat_map(|c| (0..v).map(move |w| [c.as_slice(), &[w]].concat()))
                .collect();
            ctxs.extend(longer);
        }
        for ctx in ctxs.iter().filter(|c| c.last() != Some(&lm.eos_id())) {
            let m = context_mass(&lm, ctx);
            assert!((m - 1.0).abs() < 1e-6, "context {ctx:?} mass {m}");
            contexts += 1;
        }
        let back = NGramLm::from_arpa(&lm.to_arpa()).unwrap();
        for _ in 0..10 {
            let probe: Vec<&str> = (0..r.gen_range(0..6)).map(|_| ["a", "b", "c", "d", "e"][r.gen_range(0..5)]).collect();
            drift = drift.max((lm.score_words(&probe, true) - back.score_words(&probe, true)).abs());
        }
    }
    assert!(drift < 1e-9);
    format!("MLE bigram exact, {contexts} contexts sum to 1, ARPA drift {drift:.1e}")
}

fn full_mode() -> DecodeMode {
    DecodeMode {
        greedy: false,
        lm: true,
        bias: true,
    }
}

fn default_world() -> World {
    generate_world(&WorldConfig::default()).unwrap()
}

fn acc4_noiseless() -> String {
    let start = Instant::now();
    let world = default_world();
    let mut cfg = world_pipeline_config();
    cfg.synth.noise = 0.0;
    cfg.synth.swap_prob = 0.0;
    cfg.synth.syllable_swap_prob = 0.0;
    let res = Resources::from_world(&world, &cfg).unwrap();
    let (utts, failed) = synthesize(&res, &cfg, &world.transcripts);
    assert!(failed.is_empty());
    assert_eq!((utts.len(), res.keywords.len()), (200, 50));
    let decoders = Decoders::new(&res, full_mode(), cfg.beam_config(), &cfg.bias_config()).unwrap();
    let decoded = decode_all(&decoders, &utts, true).unwrap();
    let hits = detect_all(&res, &utts, &decoded, cfg.beam.nbest, &cfg.kws_config()).unwrap();
    let refs: Vec<RefOccurrence> = utts.iter().flat_map(|u| u.refs.clone()).collect();
    let total: f64 = utts.iter().map(|u| u.pg_char.duration_s()).sum();
    let report = evaluate(&hits, &refs, &cfg.eval_config(total)).unwrap();
    let elapsed = start.elapsed();
    assert_eq!(report.f1, 1.0, "F1 {}", report.f1);
    assert_eq!(report.atwv, 1.0, "ATWV {}", report.atwv);
    assert!(elapsed < Duration::from_secs(120), "{elapsed:?}");
    format!(
        "200 utterances, 50 keywords, {} references: F1={} ATWV={} at θ={}, {:.1}s",
        refs.len(),
        report.f1,
        report.atwv,
        cfg.kws.decision_threshold,
        elapsed.as_secs_f64()
    )
}

// Measured on the default world (seed 7) with run seed 0 and frozen as
// regression floors: recall per stage-ladder row, and rare-keyword recall
// without and with biasing.
const STAGE_RECALL_FLOOR: [f64; 5] = [0.6215, 0.6853, 0.7171, 0.9801, 0.9801];
const RARE_UNBIASED_FLOOR: f64 = 0.6164;
const RARE_BIASED_FLOOR: f64 = 0.6849;

fn acc5_ablation() -> String {
    let world = default_world();
    let cfg = world_pipeline_config();
    assert_eq!((cfg.synth.noise, cfg.bias.alpha, cfg.bias.beta), (0.3, 1.0, 4.0));
    let res = Resources::from_world(&world, &cfg).unwrap();
    let (utts, failed) = synthesize(&res, &cfg, &world.transcripts);
    assert!(failed.is_empty());
    let report = run_ladder(&res, &utts, &stage_ladder(&cfg), &cfg).unwrap();
    let recalls: Vec<f64> = report.rows.iter().map(|r| r.recall).collect();
    for pair in recalls.windows(2) {
        assert!(pair[1] >= pair[0], "recall decreased: {recalls:?}");
    }
    for (r, floor) in recalls.iter().zip(STAGE_RECALL_FLOOR) {
        assert!(*r >= floor - 1e-4, "recall {r:.4} below frozen {floor}");
    }
    let unbiased = report.row("+N-best").unwrap().rare_recall;
    let biased = report.row("+bias").unwrap().rare_recall;
    assert!(unbiased >= RARE_UNBIASED_FLOOR - 1e-4 && biased >= RARE_BIASED_FLOOR - 1e-4);
    let gain = biased - unbiased;
    assert!(gain >= 0.05, "rare-keyword gain {gain:.4}");
    let shown: Vec<String> = report.rows.iter().map(|r| format!("{} {:.4}", r.name, r.recall)).collect();
    format!(
        "recall {}; rare recall {unbiased:.4} -> {biased:.4} (+{:.2} points, {} rare keywords)",
        shown.join(", "),
        gain * 100.0,
        report.rare_keywords.len()
    )
}

fn contains(hay: &[u32], needle: &[u32]) -> bool {
    hay.windows(needle.len()).any(|w| w == needle)
}

fn ranks(nb: &[NBestEntry]) -> BTreeMap<Vec<u32>, usize> {
    nb.iter().enumerate().map(|(i, e)| (e.tokens.clone(), i)).collect()
}

fn acc6_bias_monotone() -> String {
    let mut r = rng(106);
    let mut checked = 0;
    for _ in 0..100 {
        let frames = r.gen_range(1..=5);
        let vocab = r.gen_range(2..=4);
        let set = toy_units(vocab);
        let pg = random_pg(&mut r, frames, vocab, "t");
        let chunk: Vec<u32> = (0..r.gen_range(1..=2)).map(|_| r.gen_range(1..vocab as u32)).collect();
        let bias = BiasConfig {
            alpha: 0.0,
            beta: r.gen_range(0.1..10.0),
            chunk_len: 4,
        };
        let trie = build_bias_trie(std::slice::from_ref(&chunk), None, &bias).unwrap();
        let plain = prefix_beam_search(&pg, &set, None, None, &exhaustive()).unwrap();
        let biased_cfg = BeamConfig {
            bias_enabled: true,
            ..exhaustive()
        };
        let biased = prefix_beam_search(&pg, &set, None, Some(&trie), &biased_cfg).unwrap();
        let (before, after) = (ranks(&plain), ranks(&biased));
        for (tokens, rank) in &before {
            if contains(tokens, &chunk) {
                assert!(after[tokens] <= *rank, "{tokens:?} fell from {rank} to {}", after[tokens]);
                checked += 1;
            }
        }
    }
    format!("100 instances, {checked} biased hypotheses never rank lower")
}

fn hit(utt: &str, kw: &str, start_s: f64, end_s: f64) -> Hit {
    Hit {
        utt_id: utt.into(),
        kw_id: kw.into(),
        stage: Stage::Char,
        start_frame: 0,
        end_frame: 0,
        start_s,
        end_s,
        raw_log_s: -1.0,
        norm_score: -0.5,
        hyp_rank: 1,
        decision: true,
    }
}

fn reference(utt: &str, kw: &str, start_s: f64, end_s: f64) -> RefOccurrence {
    RefOccurrence {
        utt_id: utt.into(),
        kw_id: kw.into(),
        start_s,
        end_s,
    }
}

fn twv_oracle(n_true: f64, n_correct: f64, n_fa: f64, beta: f64, total: f64) -> f64 {
    1.0 - (n_true - n_correct) / n_true - beta * n_fa / (total - n_true)
}

fn acc7_metrics() -> String {
    let refs = vec![
        reference("u1", "kw1", 1.0, 2.0),
        reference("u2", "kw1", 1.0, 2.0),
        reference("u1", "kw2", 5.0, 6.0),
    ];
    let hits = vec![hit("u1", "kw1", 1.2, 1.8), hit("u1", "kw2", 5.2, 5.8), hit("u2", "kw2", 8.0, 9.0)];
    let at = |beta: f64| {
        let cfg = EvalConfig {
            atwv_beta: beta,
            total_speech_s: 100.0,
            overlap: OverlapRule::Midpoint,
        };
        let report = evaluate(&hits, &refs, &cfg).unwrap();
        let twv = |kw: &str| report.keywords.iter().find(|k| k.kw_id == kw).unwrap().twv.unwrap();
        (twv("kw1"), twv("kw2"), report.atwv)
    };
    let (t1, t2, a) = at(999.9);
    let (o1, o2) = (twv_oracle(2.0, 1.0, 0.0, 999.9, 100.0), twv_oracle(1.0, 1.0, 1.0, 999.9, 100.0));
    assert!((t1 - 0.5).abs() < 1e-4 && (t1 - o1).abs() < 1e-12);
    assert!((t2 - o2).abs() < 1e-4 && (a - 0.5 * (o1 + o2)).abs() < 1e-4);
    // the printed -9.1009 / -4.3005 correspond to beta = 1000
    let (_, t2_1000, a_1000) = at(1000.0);

    let cfg = EvalConfig {
        total_speech_s: 100.0,
        ..EvalConfig::default()
    };
    let perfect = vec![hit("u1", "kw1", 1.2, 1.8), hit("u2", "kw1", 1.2, 1.8), hit("u1", "kw2", 5.2, 5.8)];
    assert_eq!(evaluate(&perfect, &refs, &cfg).unwrap().atwv, 1.0);
    assert_eq!(evaluate(&[], &refs, &cfg).unwrap().atwv, 0.0);
    format!(
        "β=999.9: TWV1={t1:.4} TWV2={t2:.4} ATWV={a:.4} (formula); β=1000: TWV2={t2_1000:.4} ATWV={a_1000:.4}; \
         perfect=1, all-miss=0"
    )
}

/// Same world with only two-character keywords.
fn fuzzy_world() -> World {
    generate_world(&WorldConfig {
        keyword_len: (2, 2),
        n_utterances: 120,
        ..WorldConfig::default()
    })
    .unwrap()
}

/// Replaces one keyword character with a character whose primary syllable
/// differs only in tone. Returns the new text.
fn tone_variant(world: &World, text: &str, keyword: &str) -> Option<String> {
    let mut by_pron: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    for ch in world.chars.units().iter().skip(1) {
        if let Some(p) = world.lexicon.primary(ch) {
            by_pron.entry(p.to_string()).or_default().push(ch);
        }
    }
    let at = text.find(keyword)?;
    for (i, ch) in keyword.chars().enumerate() {
        let syl = parse_syllable(world.lexicon.primary(&ch.to_string())?).ok()?;
        for tone in (1..=4).filter(|&t| t != syl.tone) {
            let pron = format!("{}{}{}", syl.initial, syl.final_, tone);
            let Some(&alt) = by_pron.get(&pron).and_then(|v| v.first()) else {
                continue;
            };
            let mut kw: Vec<String> = keyword.chars().map(String::from).collect();
            kw[i] = alt.to_string();
            return Some(format!("{}{}{}", &text[..at], kw.concat(), &text[at + keyword.len()..]));
        }
    }
    None
}

/// Per-utterance recovery of the planted keyword by fuzzy hits at `threshold`.
fn fuzzy_recall(res: &Resources, cfg: &PipelineConfig, suite: &[(SynthUtt, RefOccurrence)], threshold: f64) -> usize {
    let utts: Vec<SynthUtt> = suite.iter().map(|(u, _)| u.clone()).collect();
    let decoders = Decoders::new(res, full_mode(), cfg.beam_config(), &cfg.bias_config()).unwrap();
    let decoded = decode_all(&decoders, &utts, false).unwrap();
    let mut kws = cfg.kws_config();
    kws.fuzzy_threshold = threshold;
    kws.stages.char = false;
    kws.stages.syllable = false;
    kws.stages.fuzzy = true;
    let hits = detect_all(res, &utts, &decoded, cfg.beam.nbest, &kws).unwrap();
    suite
        .iter()
        .filter(|(_, r)| {
            hits.iter().any(|h| {
                let mid = 0.5 * (h.start_s + h.end_s);
                h.utt_id == r.utt_id && h.kw_id == r.kw_id && h.stage == Stage::Fuzzy && r.start_s <= mid && mid <= r.end_s
            })
        })
        .count()
}

fn acc8_fuzzy() -> String {
    let world = fuzzy_world();
    let mut cfg = world_pipeline_config();
    cfg.synth.noise = 0.0;
    cfg.synth.swap_prob = 0.0;
    cfg.synth.syllable_swap_prob = 0.0;
    let res = Resources::from_world(&world, &cfg).unwrap();
    let pron = res.pronouncer();
    let mut suite = Vec::new();
    for (utt_id, text) in &world.transcripts {
        let Some(kw) = res.keywords.iter().find(|k| text.contains(&k.text)) else {
            continue;
        };
        let Some(variant) = tone_variant(&world, text, &kw.text) else {
            continue;
        };
        let original = synthesize_one(&res, &cfg, utt_id, text).unwrap();
        let spoken = synthesize_one(&res, &cfg, utt_id, &variant).unwrap();
        // the substitution must keep the frame layout so the reference span carries over
        if spoken.pg_char.frames() != original.pg_char.frames() || !spoken.refs.is_empty() {
            continue;
        }
        let r = original.refs.iter().find(|r| r.kw_id == kw.id).unwrap().clone();
        let kw_syl = pron.syllables(&kw.char_units).unwrap();
        let var_ids = kws_core::units::tokenize_chars(&variant, &res.chars).unwrap();
        let var_syl = pron.syllables(&var_ids).unwrap();
        let d = (0..=var_syl.len() - kw_syl.len())
            .map(|i| kws_core::phonetics::phrase_distance(&kw_syl, &var_syl[i..i + kw_syl.len()], &res.costs))
            .fold(f64::INFINITY, f64::min);
        assert!((d - 0.2 / 2.0).abs() < 1e-12, "variant distance {d}");
        suite.push((spoken, r));
        if suite.len() == 50 {
            break;
        }
    }
    assert_eq!(suite.len(), 50, "could not build 50 tone variants");
    let found = fuzzy_recall(&res, &cfg, &suite, 0.5);
    let leaked = fuzzy_recall(&res, &cfg, &suite, 0.1);
    assert_eq!(found, 50, "recovered {found}/50 at 0.5");
    assert_eq!(leaked, 0, "accepted {leaked}/50 at 0.1");
    format!("50 tone variants at distance 0.1: {found}/50 recovered at 0.5, {leaked}/50 at 0.1")
}

fn acc9_perf() -> String {
    let v = 6000;
    let names: Vec<String> = (0..v - 1).map(|i| format!("u{i}")).collect();
    let set = UnitSet::new("big", UnitKind::Syllable, names.iter().map(String::as_str)).unwrap();
    let mut r = rng(109);
    let sentences: Vec<Vec<&str>> = (0..5000)
        .map(|_| (0..20).map(|_| names[r.gen_range(0..names.len())].as_str()).collect())
        .collect();
    let lm = train_tokens(sentences, 4, 0.75).unwrap();
    let ulm = UnitLm::new(&lm, &set);
    let keywords: Vec<Vec<u32>> = (0..100).map(|_| (0..3).map(|_| r.gen_range(1..v as u32)).collect()).collect();
    let trie = build_bias_trie(&keywords, Some(&ulm), &BiasConfig::default()).unwrap();
    let transcript: Vec<u32> = (0..160).map(|_| r.gen_range(1..v as u32)).collect();
    let synth = SynthConfig {
        noise: 0.3,
        frames_per_token: 6,
        blank_gap: 20,
        seed: 3,
        ..SynthConfig::default()
    };
    let pg = synth_generate(&transcript, &set, &synth).unwrap();
    assert_eq!(pg.frames(), 1000);
    let cfg = BeamConfig::default();
    assert_eq!(cfg.beam_size, 10);
    let start = Instant::now();
    let nb = prefix_beam_search(&pg, &set, Some(&ulm), Some(&trie), &cfg).unwrap();
    let elapsed = start.elapsed();
    assert!(!nb.is_empty() && nb.len() <= cfg.nbest);
    assert!(elapsed < Duration::from_secs(2), "{elapsed:?}");
    format!(
        "1000 frames, V=6000, beam 10, 4-gram LM, 100 biased keywords: {:.3}s",
        elapsed.as_secs_f64()
    )
}

fn kws_cli(args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_kws")).args(args).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn acc10_determinism() -> String {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w");
    let ws = w.to_str().unwrap();
    kws_cli(&["gen-corpus", "--out", ws]);
    let cfg = w.join("config.toml");
    let cfg = cfg.to_str().unwrap();
    kws_cli(&["lm-train", "--config", cfg, "--corpus", &format!("{ws}/lm_corpus.txt")]);
    let tr = format!("{ws}/transcripts.tsv");
    let run = |jobs: &str| kws_cli(&["ablate", "--config", cfg, "--transcripts", &tr, "--seed", "5", "--jobs", jobs, "--json"]);
    let a = run("0");
    let b = run("0");
    let c = run("1");
    assert!(a == b && a == c, "reports differ");
    format!("two ablate runs (plus a single-thread run) byte-identical, {} bytes", a.len())
}

fn main() -> ExitCode {
    let criteria: [(&str, &str, Check); 10] = [
        ("acc1", "CTC brute-force equivalence", acc1_brute_force),
        ("acc2", "worked micro-example", acc2_micro_example),
        ("acc3", "LM correctness", acc3_lm),
        ("acc4", "noiseless end-to-end", acc4_noiseless),
        ("acc5", "ablation ladder", acc5_ablation),
        ("acc6", "bias monotonicity", acc6_bias_monotone),
        ("acc7", "metric golden cases", acc7_metrics),
        ("acc8", "fuzzy matching", acc8_fuzzy),
        ("acc9", "performance floor", acc9_perf),
        ("acc10", "determinism", acc10_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (key, name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == key) {
            continue;
        }
        match catch_unwind(AssertUnwindSafe(check)) {
            Ok(detail) => println!("{} PASS {name}: {detail}", key.to_uppercase()),
            Err(e) => {
                failed += 1;
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                println!("{} FAIL {name}: {msg}", key.to_uppercase());
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
