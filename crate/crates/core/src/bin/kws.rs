use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use kws_core::ablation::{method_ladder, run_ladder, stage_ladder};
use kws_core::config::PipelineConfig;
use kws_core::corpus::{files, generate_world, load_transcripts, world_pipeline_config, write_world, WorldConfig};
use kws_core::decoder::NBestList;
use kws_core::eval::{evaluate, load_refs};
use kws_core::kws::parse_hits;
use kws_core::lm::write_arpa;
use kws_core::pipeline::{
    decode_all, detect_all, synthesize, total_speech_s, train_lms, with_jobs, DecodeMode, Decoded, Decoders, Resources,
    SynthUtt,
};
use kws_core::posteriorgram::{read_pgram, write_pgram};
use kws_core::{Error, Result};

#[derive(Parser)]
#[command(name = "kws", version, about = "Keyword spotting over CTC posteriorgrams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override a config value, e.g. `--set beam.beam_size=20`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Seed for every random choice; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

impl Common {
    fn load(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::load(&self.config, &self.overrides)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Ladder {
    /// greedy, +LM, +length-norm, +N-best, +bias, +fuzzy, +syllable
    Methods,
    /// char-only, +N-best, +bias, +syllable, +fuzzy
    Stages,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic world (inventories, lexicon, keywords, LM corpus,
    /// transcripts) and a config pointing at it.
    GenCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        utterances: usize,
        #[arg(long, default_value_t = 50)]
        keywords: usize,
    },
    /// Train character and syllable n-gram LMs on a text corpus.
    LmTrain {
        #[command(flatten)]
        common: Common,
        /// One sentence per line.
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Synthesize character and syllable posteriorgrams plus references.
    Synth {
        #[command(flatten)]
        common: Common,
        /// `utt_id<TAB>text` lines.
        #[arg(long)]
        transcripts: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode posteriorgrams into N-best JSON lines.
    Decode {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        pgrams: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Detect keywords from posteriorgrams and their N-best lists.
    Kws {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        pgrams: PathBuf,
        #[arg(long)]
        nbest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a hit list against references.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        hits: PathBuf,
        #[arg(long)]
        refs: PathBuf,
        /// Measure speech duration from these posteriorgrams instead of the config.
        #[arg(long)]
        pgrams: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an ablation ladder end to end on transcripts.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        transcripts: PathBuf,
        #[arg(long, value_enum, default_value = "methods")]
        ladder: Ladder,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Emit JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
}

const CHAR_SUFFIX: &str = ".char.pgram";
const SYLL_SUFFIX: &str = ".syllable.pgram";
const CHAR_NBEST: &str = "char.nbest.jsonl";
const SYLL_NBEST: &str = "syllable.nbest.jsonl";
const REFS: &str = "refs.tsv";

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_file(path, text),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

/// Posteriorgram pairs in a directory, ordered by utterance id.
fn read_pgram_dir(dir: &Path) -> Result<Vec<SynthUtt>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut ids = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if let Some(id) = entry.file_name().to_str().and_then(|n| n.strip_suffix(CHAR_SUFFIX)) {
            ids.push(id.to_string());
        }
    }
    ids.sort();
    ids.into_iter()
        .map(|id| {
            Ok(SynthUtt {
                pg_char: read_pgram(dir.join(format!("{id}{CHAR_SUFFIX}")))?,
                pg_syll: read_pgram(dir.join(format!("{id}{SYLL_SUFFIX}")))?,
                utt_id: id,
                refs: Vec::new(),
            })
        })
        .collect()
}

fn nbest_lines(decoded: &[Decoded], char: bool) -> Result<String> {
    let mut out = String::new();
    for d in decoded {
        let list = NBestList {
            utt_id: d.utt_id.clone(),
            hyps: if char { d.char.clone() } else { d.syll.clone() },
        };
        out.push_str(&serde_json::to_string(&list).map_err(|e| Error::BadFormat(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

fn read_nbest(path: &Path) -> Result<Vec<NBestList>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(n, line)| {
            let mut list: NBestList = serde_json::from_str(line)
                .map_err(|e| Error::BadFormat(format!("{} line {}: {e}", path.display(), n + 1)))?;
            list.fill_span_tokens();
            Ok(list)
        })
        .collect()
}

fn mode(cfg: &PipelineConfig) -> DecodeMode {
    DecodeMode {
        greedy: false,
        lm: true,
        bias: cfg.beam.bias_enabled,
    }
}

fn gen_corpus(out: &Path, seed: u64, utterances: usize, keywords: usize) -> Result<()> {
    let world = generate_world(&WorldConfig {
        seed,
        n_utterances: utterances,
        n_keywords: keywords,
        ..WorldConfig::default()
    })?;
    write_world(&world, out)?;
    write_file(&out.join(files::CONFIG), &world_pipeline_config().to_toml())
}

fn lm_train(cfg: &PipelineConfig, corpus: &Path) -> Result<()> {
    let p = &cfg.paths;
    let out = |slot: &Option<PathBuf>, name: &str| {
        slot.clone().ok_or_else(|| Error::Config(format!("config has no paths.{name}")))
    };
    let (char_out, syll_out) = (out(&p.char_lm, "char_lm")?, out(&p.syllable_lm, "syllable_lm")?);
    // the LMs are what is being built, so they need not exist yet
    let mut base = cfg.clone();
    base.paths.char_lm = None;
    base.paths.syllable_lm = None;
    let res = Resources::load(&base)?;
    let text = fs::read_to_string(corpus).map_err(|e| Error::io(corpus, e))?;
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let (char_lm, syll_lm) = train_lms(&lines, &res.chars, &res.lexicon, &res.sylls, cfg)?;
    write_arpa(&char_lm, char_out)?;
    write_arpa(&syll_lm, syll_out)
}

/// Returns the number of utterances that could not be synthesized.
fn synth(cfg: &PipelineConfig, transcripts: &Path, out: &Path) -> Result<usize> {
    let res = Resources::load(cfg)?;
    let list = load_transcripts(transcripts)?;
    let (utts, failed) = synthesize(&res, cfg, &list);
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut refs = String::new();
    for u in &utts {
        write_pgram(&u.pg_char, out.join(format!("{}{CHAR_SUFFIX}", u.utt_id)))?;
        write_pgram(&u.pg_syll, out.join(format!("{}{SYLL_SUFFIX}", u.utt_id)))?;
        for r in &u.refs {
            refs.push_str(&r.to_tsv());
            refs.push('\n');
        }
    }
    write_file(&out.join(REFS), &refs)?;
    for (id, e) in &failed {
        eprintln!("skipped {id}: {e}");
    }
    Ok(failed.len())
}

fn decode(cfg: &PipelineConfig, pgrams: &Path, out: &Path) -> Result<()> {
    let res = Resources::load(cfg)?;
    let utts = read_pgram_dir(pgrams)?;
    let decoders = Decoders::new(&res, mode(cfg), cfg.beam_config(), &cfg.bias_config())?;
    let decoded = decode_all(&decoders, &utts, true)?;
    write_file(&out.join(CHAR_NBEST), &nbest_lines(&decoded, true)?)?;
    write_file(&out.join(SYLL_NBEST), &nbest_lines(&decoded, false)?)
}

fn kws(cfg: &PipelineConfig, pgrams: &Path, nbest: &Path, out: &Path) -> Result<()> {
    let res = Resources::load(cfg)?;
    let utts = read_pgram_dir(pgrams)?;
    let chars = read_nbest(&nbest.join(CHAR_NBEST))?;
    let sylls = read_nbest(&nbest.join(SYLL_NBEST))?;
    let mut decoded = Vec::with_capacity(utts.len());
    for u in &utts {
        let find = |lists: &[NBestList]| {
            lists
                .iter()
                .find(|l| l.utt_id == u.utt_id)
                .map(|l| l.hyps.clone())
                .ok_or_else(|| Error::BadFormat(format!("no N-best list for {}", u.utt_id)))
        };
        decoded.push(Decoded {
            utt_id: u.utt_id.clone(),
            char: find(&chars)?,
            syll: find(&sylls)?,
        });
    }
    let hits = detect_all(&res, &utts, &decoded, cfg.beam.nbest, &cfg.kws_config())?;
    let text: String = hits.iter().map(|h| format!("{}\n", h.to_tsv())).collect();
    write_file(out, &text)
}

fn eval(cfg: &PipelineConfig, hits: &Path, refs: &Path, pgrams: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let text = fs::read_to_string(hits).map_err(|e| Error::io(hits, e))?;
    let hits = parse_hits(&text)?;
    let refs = load_refs(refs)?;
    let measured = match pgrams {
        Some(dir) => total_speech_s(&read_pgram_dir(dir)?),
        None => cfg
            .eval
            .total_speech_s
            .ok_or_else(|| Error::Config("set eval.total_speech_s or pass --pgrams".into()))?,
    };
    let report = evaluate(&hits, &refs, &cfg.eval_config(measured))?;
    let mut json = serde_json::to_string_pretty(&report).map_err(|e| Error::BadFormat(e.to_string()))?;
    json.push('\n');
    emit(out, &json)
}

fn ablate(cfg: &PipelineConfig, transcripts: &Path, ladder: Ladder, out: Option<&Path>, json: bool) -> Result<usize> {
    let res = Resources::load(cfg)?;
    let list = load_transcripts(transcripts)?;
    let (utts, failed) = synthesize(&res, cfg, &list);
    for (id, e) in &failed {
        eprintln!("skipped {id}: {e}");
    }
    let steps = match ladder {
        Ladder::Methods => method_ladder(cfg),
        Ladder::Stages => stage_ladder(cfg),
    };
    let report = run_ladder(&res, &utts, &steps, cfg)?;
    let text = if json {
        let mut s = serde_json::to_string_pretty(&report).map_err(|e| Error::BadFormat(e.to_string()))?;
        s.push('\n');
        s
    } else {
        report.to_tsv()
    };
    emit(out, &text)?;
    Ok(failed.len())
}

fn run(cli: Cli) -> Result<usize> {
    let jobs = match &cli.command {
        Command::GenCorpus { .. } => 0,
        Command::LmTrain { common, .. }
        | Command::Synth { common, .. }
        | Command::Decode { common, .. }
        | Command::Kws { common, .. }
        | Command::Eval { common, .. }
        | Command::Ablate { common, .. } => common.jobs,
    };
    with_jobs(jobs, move || match cli.command {
        Command::GenCorpus {
            out,
            seed,
            utterances,
            keywords,
        } => gen_corpus(&out, seed, utterances, keywords).map(|_| 0),
        Command::LmTrain { common, corpus } => lm_train(&common.load()?, &corpus).map(|_| 0),
        Command::Synth {
            common,
            transcripts,
            out,
        } => synth(&common.load()?, &transcripts, &out),
        Command::Decode { common, pgrams, out } => decode(&common.load()?, &pgrams, &out).map(|_| 0),
        Command::Kws {
            common,
            pgrams,
            nbest,
            out,
        } => kws(&common.load()?, &pgrams, &nbest, &out).map(|_| 0),
        Command::Eval {
            common,
            hits,
            refs,
            pgrams,
            out,
        } => eval(&common.load()?, &hits, &refs, pgrams.as_deref(), out.as_deref()).map(|_| 0),
        Command::Ablate {
            common,
            transcripts,
            ladder,
            out,
            json,
        } => ablate(&common.load()?, &transcripts, ladder, out.as_deref(), json),
    })?
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(skipped) => {
            eprintln!("kws: {skipped} utterance(s) skipped");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("kws: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
