use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn kws(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kws"))
        .args(args)
        .output()
        .expect("spawn kws")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small world with trained LMs.
fn world(dir: &Path) -> String {
    let w = dir.join("w");
    ok(&kws(&["gen-corpus", "--out", s(&w), "--utterances", "12", "--keywords", "6"]));
    let cfg = w.join("config.toml");
    ok(&kws(&["lm-train", "--config", s(&cfg), "--corpus", s(&w.join("lm_corpus.txt"))]));
    assert!(w.join("char.arpa").exists() && w.join("syllable.arpa").exists());
    s(&cfg).to_string()
}

#[test]
fn full_pipeline_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = world(tmp.path());
    let w = tmp.path().join("w");
    let pg = tmp.path().join("pg");
    let nb = tmp.path().join("nb");
    let hits = tmp.path().join("hits.tsv");
    let report = tmp.path().join("report.json");

    ok(&kws(&["synth", "--config", &cfg, "--transcripts", s(&w.join("transcripts.tsv")), "--out", s(&pg)]));
    assert!(pg.join("utt0001.char.pgram").exists());
    assert!(pg.join("utt0001.syllable.pgram").exists());
    let refs = fs::read_to_string(pg.join("refs.tsv")).unwrap();
    assert!(refs.lines().count() >= 12);

    ok(&kws(&["decode", "--config", &cfg, "--pgrams", s(&pg), "--out", s(&nb)]));
    let nbest = fs::read_to_string(nb.join("char.nbest.jsonl")).unwrap();
    assert_eq!(nbest.lines().count(), 12);
    let first: serde_json::Value = serde_json::from_str(nbest.lines().next().unwrap()).unwrap();
    assert_eq!(first["utt_id"], "utt0001");

    ok(&kws(&["kws", "--config", &cfg, "--pgrams", s(&pg), "--nbest", s(&nb), "--out", s(&hits)]));
    assert!(!fs::read_to_string(&hits).unwrap().is_empty());

    ok(&kws(&[
        "eval", "--config", &cfg, "--hits", s(&hits), "--refs", s(&pg.join("refs.tsv")), "--pgrams", s(&pg), "--out",
        s(&report),
    ]));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let recall = r["recall"].as_f64().unwrap();
    assert!(recall > 0.5, "recall {recall}");
}

#[test]
fn ablate_is_deterministic_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = world(tmp.path());
    let tr = tmp.path().join("w/transcripts.tsv");
    let run = |jobs: &str| {
        let out = kws(&["ablate", "--config", &cfg, "--transcripts", s(&tr), "--jobs", jobs]);
        ok(&out);
        out.stdout
    };
    let a = run("1");
    let b = run("4");
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("method\t"));
    assert_eq!(text.lines().count(), 8);
}

#[test]
fn seed_flag_changes_synthesis() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = world(tmp.path());
    let tr = tmp.path().join("w/transcripts.tsv");
    let synth = |seed: &str, out: &str| {
        let dir = tmp.path().join(out);
        ok(&kws(&["synth", "--config", &cfg, "--seed", seed, "--transcripts", s(&tr), "--out", s(&dir)]));
        fs::read(dir.join("utt0001.char.pgram")).unwrap()
    };
    assert_eq!(synth("3", "a"), synth("3", "b"));
    assert_ne!(synth("3", "c"), synth("4", "d"));
}

#[test]
fn oov_utterances_are_skipped_with_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = world(tmp.path());
    let w = tmp.path().join("w");
    let good = fs::read_to_string(w.join("transcripts.tsv")).unwrap();
    let first = good.lines().next().unwrap();
    let tr = tmp.path().join("t.tsv");
    fs::write(&tr, format!("{first}\nbad01\tzzz\n")).unwrap();
    let pg = tmp.path().join("pg");
    let out = kws(&["synth", "--config", &cfg, "--transcripts", s(&tr), "--out", s(&pg)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad01"));
    assert!(pg.join("utt0001.char.pgram").exists());
    assert!(!pg.join("bad01.char.pgram").exists());
}

#[test]
fn empty_transcripts_give_empty_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = world(tmp.path());
    let tr = tmp.path().join("t.tsv");
    fs::write(&tr, "").unwrap();
    let pg = tmp.path().join("pg");
    ok(&kws(&["synth", "--config", &cfg, "--transcripts", s(&tr), "--out", s(&pg)]));
    assert_eq!(fs::read_to_string(pg.join("refs.tsv")).unwrap(), "");
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(kws(&["decode"]).status.code(), Some(2));
    assert_eq!(kws(&["no-such-command"]).status.code(), Some(2));

    let tmp = tempfile::tempdir().unwrap();
    let cfg = world(tmp.path());
    let pg = tmp.path().join("pg");
    let tr = tmp.path().join("w/transcripts.tsv");
    let bad_key = kws(&["synth", "--config", &cfg, "--set", "beam.no_such=1", "--transcripts", s(&tr), "--out", s(&pg)]);
    assert_eq!(bad_key.status.code(), Some(2));

    let cfg_text = fs::read_to_string(&cfg).unwrap();
    let no_lex: String = cfg_text.lines().filter(|l| !l.starts_with("lexicon")).map(|l| format!("{l}\n")).collect();
    let no_lex_path = tmp.path().join("w/no_lex.toml");
    fs::write(&no_lex_path, no_lex).unwrap();
    let out = kws(&["synth", "--config", s(&no_lex_path), "--transcripts", s(&tr), "--out", s(&pg)]);
    assert_eq!(out.status.code(), Some(2));
}
