//! Utterance-level plumbing shared by the command-line tools: loading the
//! artifacts a config names, synthesizing posteriorgrams from transcripts,
//! decoding both unit streams and running detection.

use std::path::Path;

use rayon::prelude::*;

use crate::config::PipelineConfig;
use crate::corpus::{reference_spans, World};
use crate::decoder::{build_bias_trie, prefix_beam_search, BeamConfig, BiasConfig, KeywordTrie, NBestEntry, UnitLm};
use crate::error::{Error, Result};
use crate::eval::RefOccurrence;
use crate::kws::{detect, Hit, Keyword, KwsConfig, Pronouncer, Utterance};
use crate::lm::{read_arpa, train, train_tokens, NGramLm};
use crate::phonetics::CostTable;
use crate::posteriorgram::{align_viterbi, greedy_path, synth_generate_parallel, ConfusionTable, Posteriorgram};
use crate::units::{load_unit_set, syllabify_ids, tokenize_chars, Lexicon, UnitKind, UnitSet};

/// Everything loaded once and shared read-only across utterances.
#[derive(Debug, Clone)]
pub struct Resources {
    pub chars: UnitSet,
    pub sylls: UnitSet,
    pub lexicon: Lexicon,
    pub keywords: Vec<Keyword>,
    pub costs: CostTable,
    pub char_lm: Option<NGramLm>,
    pub syll_lm: Option<NGramLm>,
    pub char_confusion: Option<ConfusionTable>,
    pub syll_confusion: Option<ConfusionTable>,
}

fn required<'a>(slot: &'a Option<std::path::PathBuf>, name: &str) -> Result<&'a Path> {
    slot.as_deref()
        .ok_or_else(|| Error::Config(format!("config has no paths.{name}")))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

impl Resources {
    /// Loads what `cfg.paths` names. Unit sets and the lexicon are
    /// required; LMs, keywords, costs and confusion tables are optional.
    pub fn load(cfg: &PipelineConfig) -> Result<Self> {
        let p = &cfg.paths;
        let chars = load_unit_set(required(&p.char_units, "char_units")?, UnitKind::Character)?;
        let sylls = load_unit_set(required(&p.syllable_units, "syllable_units")?, UnitKind::Syllable)?;
        let lexicon = Lexicon::load(required(&p.lexicon, "lexicon")?, &chars, &sylls)?;
        let keywords = match &p.keywords {
            Some(path) => crate::kws::load_keywords(path, &chars, &lexicon, &sylls)?,
            None => Vec::new(),
        };
        let costs = match &p.costs {
            Some(path) => CostTable::load(path)?,
            None => CostTable::default(),
        };
        let char_lm = p.char_lm.as_deref().map(read_arpa).transpose()?;
        let syll_lm = p.syllable_lm.as_deref().map(read_arpa).transpose()?;
        let char_confusion = p
            .char_confusion
            .as_deref()
            .map(|path| ConfusionTable::parse(&read(path)?, &chars))
            .transpose()?;
        let syll_confusion = p
            .syllable_confusion
            .as_deref()
            .map(|path| ConfusionTable::parse(&read(path)?, &sylls))
            .transpose()?;
        Ok(Resources {
            chars,
            sylls,
            lexicon,
            keywords,
            costs,
            char_lm,
            syll_lm,
            char_confusion,
            syll_confusion,
        })
    }

    /// Builds resources straight from a generated world, training both LMs
    /// on its LM corpus.
    pub fn from_world(world: &World, cfg: &PipelineConfig) -> Result<Self> {
        let keywords = world
            .keywords
            .iter()
            .map(|(id, text)| Keyword::new(id.clone(), text, &world.chars, &world.lexicon, &world.sylls))
            .collect::<Result<Vec<_>>>()?;
        let (char_lm, syll_lm) = train_lms(&world.lm_corpus, &world.chars, &world.lexicon, &world.sylls, cfg)?;
        Ok(Resources {
            chars: world.chars.clone(),
            sylls: world.sylls.clone(),
            lexicon: world.lexicon.clone(),
            keywords,
            costs: CostTable::default(),
            char_lm: Some(char_lm),
            syll_lm: Some(syll_lm),
            char_confusion: Some(world.char_confusion.clone()),
            syll_confusion: Some(world.syll_confusion.clone()),
        })
    }

    pub fn pronouncer(&self) -> Pronouncer {
        Pronouncer::new(&self.chars, &self.lexicon)
    }
}

/// Trains a character LM on the sentences and a syllable LM on their
/// primary pronunciations. Sentences with unknown characters are skipped
/// for the syllable model.
pub fn train_lms<S: AsRef<str>>(
    sentences: &[S],
    chars: &UnitSet,
    lexicon: &Lexicon,
    sylls: &UnitSet,
    cfg: &PipelineConfig,
) -> Result<(NGramLm, NGramLm)> {
    let char_lm = train(sentences.iter().map(AsRef::as_ref), cfg.lm.order, cfg.lm.discount)?;
    let syll_sentences: Vec<Vec<&str>> = sentences
        .iter()
        .filter_map(|s| {
            let ids = tokenize_chars(s.as_ref(), chars).ok()?;
            let syl = syllabify_ids(&ids, chars, lexicon, sylls).ok()?;
            Some(syl.iter().map(|&u| sylls.unit(u)).collect())
        })
        .collect();
    let syll_lm = train_tokens(syll_sentences, cfg.lm.order, cfg.lm.discount)?;
    Ok((char_lm, syll_lm))
}

/// One synthesized utterance: both posteriorgrams and its references.
#[derive(Debug, Clone)]
pub struct SynthUtt {
    pub utt_id: String,
    pub pg_char: Posteriorgram,
    pub pg_syll: Posteriorgram,
    pub refs: Vec<RefOccurrence>,
}

/// Stable per-utterance seed (FNV-1a of the id mixed with the run seed).
pub fn utterance_seed(run_seed: u64, utt_id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in utt_id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h ^ run_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn synthesize_one(res: &Resources, cfg: &PipelineConfig, utt_id: &str, text: &str) -> Result<SynthUtt> {
    let chars = tokenize_chars(text, &res.chars)?;
    let sylls = syllabify_ids(&chars, &res.chars, &res.lexicon, &res.sylls)?;
    let (mut c_cfg, mut s_cfg) = cfg.synth_configs(utterance_seed(cfg.seed, utt_id));
    c_cfg.confusion = res.char_confusion.clone();
    s_cfg.confusion = res.syll_confusion.clone();
    let (c, s) = synth_generate_parallel(utt_id, (&chars, &res.chars, &c_cfg), (&sylls, &res.sylls, &s_cfg))?;
    let refs = reference_spans(utt_id, &chars, &res.keywords, &c.token_frames, cfg.synth.frame_period_s);
    Ok(SynthUtt {
        utt_id: utt_id.to_string(),
        pg_char: c.pg,
        pg_syll: s.pg,
        refs,
    })
}

/// Synthesizes every transcript; utterances that fail (for example on an
/// unknown character) are returned separately with their error.
pub fn synthesize(
    res: &Resources,
    cfg: &PipelineConfig,
    transcripts: &[(String, String)],
) -> (Vec<SynthUtt>, Vec<(String, Error)>) {
    let results: Vec<(String, Result<SynthUtt>)> = transcripts
        .par_iter()
        .map(|(id, text)| (id.clone(), synthesize_one(res, cfg, id, text)))
        .collect();
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (id, r) in results {
        match r {
            Ok(u) => ok.push(u),
            Err(e) => failed.push((id, e)),
        }
    }
    ok.sort_by(|a, b| a.utt_id.cmp(&b.utt_id));
    (ok, failed)
}

/// Frame-wise argmax decoding as a single hypothesis.
pub fn greedy_entry(pg: &Posteriorgram, units: &UnitSet) -> Result<NBestEntry> {
    pg.check_units(units)?;
    let tokens = greedy_path(pg).tokens;
    let al = align_viterbi(pg, &tokens)?;
    Ok(NBestEntry {
        text: units.render(&tokens),
        tokens,
        score_am: al.score,
        score_lm: 0.0,
        score_bias: 0.0,
        score_total: al.score,
        spans: al.spans,
    })
}

/// How one unit stream is decoded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeMode {
    pub greedy: bool,
    pub lm: bool,
    pub bias: bool,
}

/// Per-stream decoder: LM view, keyword trie and beam settings.
pub struct StreamDecoder<'a> {
    units: &'a UnitSet,
    lm: Option<UnitLm<'a>>,
    trie: Option<KeywordTrie>,
    beam: BeamConfig,
    greedy: bool,
}

impl<'a> StreamDecoder<'a> {
    pub fn new(
        units: &'a UnitSet,
        lm: Option<&'a NGramLm>,
        keywords: &[Vec<u32>],
        mode: DecodeMode,
        beam: BeamConfig,
        bias: &BiasConfig,
    ) -> Result<Self> {
        let lm = lm.filter(|_| mode.lm).map(|lm| UnitLm::new(lm, units));
        let trie = if mode.bias && !keywords.is_empty() {
            Some(build_bias_trie(keywords, lm.as_ref(), bias)?)
        } else {
            None
        };
        Ok(StreamDecoder {
            units,
            lm,
            trie,
            beam: BeamConfig {
                bias_enabled: mode.bias,
                ..beam
            },
            greedy: mode.greedy,
        })
    }

    pub fn decode(&self, pg: &Posteriorgram) -> Result<Vec<NBestEntry>> {
        if self.greedy {
            return Ok(vec![greedy_entry(pg, self.units)?]);
        }
        prefix_beam_search(pg, self.units, self.lm.as_ref(), self.trie.as_ref(), &self.beam)
    }
}

/// Decoders for both streams built from one mode.
pub struct Decoders<'a> {
    pub char: StreamDecoder<'a>,
    pub syll: StreamDecoder<'a>,
}

impl<'a> Decoders<'a> {
    pub fn new(res: &'a Resources, mode: DecodeMode, beam: BeamConfig, bias: &BiasConfig) -> Result<Self> {
        let char_kw: Vec<Vec<u32>> = res.keywords.iter().map(|k| k.char_units.clone()).collect();
        let syll_kw: Vec<Vec<u32>> = res.keywords.iter().map(|k| k.syll_units.clone()).collect();
        Ok(Decoders {
            char: StreamDecoder::new(&res.chars, res.char_lm.as_ref(), &char_kw, mode, beam, bias)?,
            syll: StreamDecoder::new(&res.sylls, res.syll_lm.as_ref(), &syll_kw, mode, beam, bias)?,
        })
    }
}

/// N-best lists of one utterance for both streams.
#[derive(Debug, Clone)]
pub struct Decoded {
    pub utt_id: String,
    pub char: Vec<NBestEntry>,
    pub syll: Vec<NBestEntry>,
}

/// Decodes every utterance; the syllable stream is skipped when
/// `with_syllables` is false.
pub fn decode_all(decoders: &Decoders<'_>, utts: &[SynthUtt], with_syllables: bool) -> Result<Vec<Decoded>> {
    utts.par_iter()
        .map(|u| {
            Ok(Decoded {
                utt_id: u.utt_id.clone(),
                char: decoders.char.decode(&u.pg_char)?,
                syll: if with_syllables {
                    decoders.syll.decode(&u.pg_syll)?
                } else {
                    Vec::new()
                },
            })
        })
        .collect()
}

/// Runs detection per utterance, keeping only the top `nbest` entries of
/// each list. Hits come back ordered by utterance id.
pub fn detect_all(
    res: &Resources,
    utts: &[SynthUtt],
    decoded: &[Decoded],
    nbest: usize,
    cfg: &KwsConfig,
) -> Result<Vec<Hit>> {
    if utts.len() != decoded.len() {
        return Err(Error::Config("decoded lists do not match utterances".into()));
    }
    let pron = res.pronouncer();
    let per_utt: Vec<Vec<Hit>> = utts
        .par_iter()
        .zip(decoded)
        .map(|(u, d)| {
            if u.utt_id != d.utt_id {
                return Err(Error::Config(format!("decoded list for {} paired with {}", d.utt_id, u.utt_id)));
            }
            let utt = Utterance {
                pg_char: &u.pg_char,
                pg_syll: Some(&u.pg_syll),
                nbest_char: &d.char[..d.char.len().min(nbest)],
                nbest_syll: &d.syll[..d.syll.len().min(nbest)],
            };
            detect(&utt, &res.keywords, &pron, &res.costs, cfg)
        })
        .collect::<Result<_>>()?;
    let mut hits: Vec<Hit> = per_utt.into_iter().flatten().collect();
    hits.sort_by(|a, b| {
        a.utt_id
            .cmp(&b.utt_id)
            .then(a.start_frame.cmp(&b.start_frame))
            .then(a.kw_id.cmp(&b.kw_id))
    });
    Ok(hits)
}

/// Seconds of speech across utterances.
pub fn total_speech_s(utts: &[SynthUtt]) -> f64 {
    utts.iter().map(|u| u.pg_char.duration_s()).sum()
}

/// Runs `f` on a pool with `jobs` threads (0 = rayon's default).
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}
