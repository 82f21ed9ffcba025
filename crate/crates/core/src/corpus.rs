//! A small synthetic Mandarin-like world: character and syllable
//! inventories, a lexicon with homophones and polyphones, confusion tables
//! built from tone and retroflex/dental neighbours, a keyword list with a
//! spread of LM frequencies, an LM training corpus and test transcripts.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::eval::RefOccurrence;
use crate::kws::Keyword;
use crate::phonetics::{parse_syllable, Syllable};
use crate::posteriorgram::ConfusionTable;
use crate::units::{Lexicon, UnitKind, UnitSet};

const INITIALS: [&str; 12] = ["zh", "z", "ch", "c", "sh", "s", "b", "d", "g", "l", "m", "n"];
const FINALS: [&str; 8] = ["a", "an", "ang", "ong", "u", "ao", "en", "i"];
const FIRST_CHAR: u32 = 0x4E00;

#[derive(Debug, Clone)]
pub struct WorldConfig {
    pub seed: u64,
    pub n_chars: usize,
    /// Fraction of characters given a second pronunciation.
    pub polyphone_rate: f64,
    pub n_keywords: usize,
    pub keyword_len: (usize, usize),
    pub n_lm_sentences: usize,
    /// Largest number of times a keyword is planted in the LM corpus.
    pub max_keyword_lm_count: usize,
    pub n_utterances: usize,
    pub filler_len: (usize, usize),
    /// Probability that a test utterance carries a second keyword.
    pub second_keyword_rate: f64,
    /// Confusion partners kept per character.
    pub char_partners: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            seed: 7,
            n_chars: 600,
            polyphone_rate: 0.05,
            n_keywords: 50,
            keyword_len: (2, 4),
            n_lm_sentences: 3000,
            max_keyword_lm_count: 40,
            n_utterances: 200,
            filler_len: (3, 8),
            second_keyword_rate: 0.3,
            char_partners: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct World {
    pub chars: UnitSet,
    pub sylls: UnitSet,
    pub lexicon: Lexicon,
    pub char_confusion: ConfusionTable,
    pub syll_confusion: ConfusionTable,
    /// `(kw_id, text)`
    pub keywords: Vec<(String, String)>,
    pub lm_corpus: Vec<String>,
    /// `(utt_id, text)`
    pub transcripts: Vec<(String, String)>,
}

fn syllable_inventory() -> Vec<String> {
    let mut out = Vec::new();
    for i in INITIALS {
        for f in FINALS {
            for tone in 1..=4 {
                out.push(format!("{i}{f}{tone}"));
            }
        }
    }
    out
}

fn initial_partner(initial: &str) -> Option<&'static str> {
    Some(match initial {
        "zh" => "z",
        "z" => "zh",
        "ch" => "c",
        "c" => "ch",
        "sh" => "s",
        "s" => "sh",
        _ => return None,
    })
}

/// Tone variants and the retroflex/dental counterpart of a syllable.
fn syllable_neighbours(s: &Syllable) -> Vec<String> {
    let mut out: Vec<String> = (1..=4)
        .filter(|&t| t != s.tone)
        .map(|t| format!("{}{}{t}", s.initial, s.final_))
        .collect();
    if let Some(p) = initial_partner(&s.initial) {
        out.push(format!("{p}{}{}", s.final_, s.tone));
    }
    out
}

struct Sampler {
    chars: Vec<String>,
    zipf: WeightedIndex<f64>,
}

impl Sampler {
    fn new(chars: &[String], rng: &mut ChaCha8Rng) -> Self {
        let mut ranked = chars.to_vec();
        ranked.shuffle(rng);
        let weights: Vec<f64> = (0..ranked.len()).map(|r| 1.0 / (r + 1) as f64).collect();
        Sampler {
            chars: ranked,
            zipf: WeightedIndex::new(weights).expect("non-empty weights"),
        }
    }

    fn filler(&self, len: usize, rng: &mut ChaCha8Rng) -> String {
        (0..len).map(|_| self.chars[self.zipf.sample(rng)].as_str()).collect()
    }
}

pub fn generate_world(cfg: &WorldConfig) -> Result<World> {
    if cfg.n_chars == 0 || cfg.n_keywords == 0 || cfg.keyword_len.0 == 0 || cfg.keyword_len.0 > cfg.keyword_len.1 {
        return Err(Error::Config("world needs characters, keywords and a keyword length range".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let syll_names = syllable_inventory();
    let sylls = UnitSet::new("syllables", UnitKind::Syllable, syll_names.iter().map(String::as_str))?;

    let char_names: Vec<String> = (0..cfg.n_chars as u32)
        .map(|i| char::from_u32(FIRST_CHAR + i).expect("CJK block").to_string())
        .collect();
    let chars = UnitSet::new("chars", UnitKind::Character, char_names.iter().map(String::as_str))?;

    let mut lexicon = Lexicon::new();
    let mut primary: Vec<String> = Vec::with_capacity(cfg.n_chars);
    for ch in &char_names {
        let p = syll_names.choose(&mut rng).expect("inventory").clone();
        let mut prons = vec![p.clone()];
        if rng.gen::<f64>() < cfg.polyphone_rate {
            let other = syll_names.choose(&mut rng).expect("inventory");
            if *other != p {
                prons.push(other.clone());
            }
        }
        lexicon.insert(ch.clone(), prons);
        primary.push(p);
    }

    let mut syll_confusion = ConfusionTable::new();
    for name in &syll_names {
        let s = parse_syllable(name)?;
        let id = sylls.get(name).expect("own inventory");
        for n in syllable_neighbours(&s) {
            syll_confusion.add(id, sylls.get(&n).expect("closed inventory"), 1.0);
        }
    }

    let mut by_syllable: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, p) in primary.iter().enumerate() {
        by_syllable.entry(p.as_str()).or_default().push(i);
    }
    let mut char_confusion = ConfusionTable::new();
    for (i, ch) in char_names.iter().enumerate() {
        let own = parse_syllable(&primary[i])?;
        let mut homophones: Vec<usize> = by_syllable[primary[i].as_str()].iter().copied().filter(|&j| j != i).collect();
        let mut near: Vec<usize> = syllable_neighbours(&own)
            .iter()
            .filter_map(|n| by_syllable.get(n.as_str()))
            .flatten()
            .copied()
            .collect();
        homophones.shuffle(&mut rng);
        near.shuffle(&mut rng);
        let id = chars.get(ch).expect("own inventory");
        for j in homophones.into_iter().take(1).chain(near).take(cfg.char_partners) {
            char_confusion.add(id, chars.get(&char_names[j]).expect("own inventory"), 1.0);
        }
    }

    let sampler = Sampler::new(&char_names, &mut rng);
    let mut keyword_texts: BTreeSet<String> = BTreeSet::new();
    let mut keywords = Vec::new();
    while keywords.len() < cfg.n_keywords {
        let len = rng.gen_range(cfg.keyword_len.0..=cfg.keyword_len.1);
        let text: String = (0..len).map(|_| char_names.choose(&mut rng).expect("chars").as_str()).collect();
        if keyword_texts.insert(text.clone()) {
            keywords.push((format!("KW{:03}", keywords.len() + 1), text));
        }
    }

    let mut lm_corpus: Vec<String> = (0..cfg.n_lm_sentences)
        .map(|_| {
            let len = rng.gen_range(cfg.filler_len.0..=cfg.filler_len.1 * 2);
            sampler.filler(len, &mut rng)
        })
        .collect();
    for (_, text) in &keywords {
        // cubic spread: most keywords rare in the LM, a few frequent
        let u: f64 = rng.gen();
        let count = (cfg.max_keyword_lm_count as f64 * u * u * u).round() as usize;
        for _ in 0..count {
            if lm_corpus.is_empty() {
                break;
            }
            let k = rng.gen_range(0..lm_corpus.len());
            let sentence: Vec<char> = lm_corpus[k].chars().collect();
            let at = rng.gen_range(0..=sentence.len());
            let mut out: String = sentence[..at].iter().collect();
            out.push_str(text);
            out.extend(&sentence[at..]);
            lm_corpus[k] = out;
        }
    }

    let probe = Probe::new(&keywords, &chars, &lexicon, &sylls)?;
    let mut transcripts = Vec::with_capacity(cfg.n_utterances);
    for u in 0..cfg.n_utterances {
        let mut planted = vec![u % keywords.len()];
        if rng.gen::<f64>() < cfg.second_keyword_rate {
            planted.push(rng.gen_range(0..keywords.len()));
        }
        // resample filler until no keyword pronunciation appears without
        // its characters, so the references are the only true hits
        let text = loop {
            let mut text = sampler.filler(rng.gen_range(cfg.filler_len.0..=cfg.filler_len.1), &mut rng);
            for &k in &planted {
                text.push_str(&keywords[k].1);
                let len = rng.gen_range(cfg.filler_len.0..=cfg.filler_len.1);
                text.push_str(&sampler.filler(len, &mut rng));
            }
            if probe.clean(&text)? {
                break text;
            }
        };
        transcripts.push((format!("utt{:04}", u + 1), text));
    }

    Ok(World {
        chars,
        sylls,
        lexicon,
        char_confusion,
        syll_confusion,
        keywords,
        lm_corpus,
        transcripts,
    })
}

struct Probe<'a> {
    keywords: Vec<Keyword>,
    chars: &'a UnitSet,
    lexicon: &'a Lexicon,
    sylls: &'a UnitSet,
}

impl<'a> Probe<'a> {
    fn new(list: &[(String, String)], chars: &'a UnitSet, lexicon: &'a Lexicon, sylls: &'a UnitSet) -> Result<Self> {
        let keywords = list
            .iter()
            .map(|(id, text)| Keyword::new(id.clone(), text, chars, lexicon, sylls))
            .collect::<Result<_>>()?;
        Ok(Probe {
            keywords,
            chars,
            lexicon,
            sylls,
        })
    }

    fn clean(&self, text: &str) -> Result<bool> {
        let c = crate::units::tokenize_chars(text, self.chars)?;
        let s = crate::units::syllabify_ids(&c, self.chars, self.lexicon, self.sylls)?;
        Ok(self.keywords.iter().all(|kw| {
            let n = kw.char_units.len();
            (0..c.len().saturating_sub(n - 1)).all(|i| s[i..i + n] != kw.syll_units[..] || c[i..i + n] == kw.char_units[..])
        }))
    }
}

/// Every occurrence of every keyword in a tokenized transcript, timed by
/// the frames each token occupies.
pub fn reference_spans(
    utt_id: &str,
    chars: &[u32],
    keywords: &[Keyword],
    token_frames: &[(usize, usize)],
    frame_period_s: f64,
) -> Vec<RefOccurrence> {
    let mut out = Vec::new();
    for kw in keywords {
        let n = kw.char_units.len();
        for (i, w) in chars.windows(n).enumerate() {
            if w == kw.char_units.as_slice() {
                out.push(RefOccurrence {
                    utt_id: utt_id.to_string(),
                    kw_id: kw.id.clone(),
                    start_s: token_frames[i].0 as f64 * frame_period_s,
                    end_s: token_frames[i + n - 1].1 as f64 * frame_period_s,
                });
            }
        }
    }
    out
}

/// File names used by [`write_world`] and [`load_world`].
pub mod files {
    pub const CHARS: &str = "chars.txt";
    pub const SYLLS: &str = "syllables.txt";
    pub const LEXICON: &str = "lexicon.tsv";
    pub const CHAR_CONFUSION: &str = "char_confusion.tsv";
    pub const SYLL_CONFUSION: &str = "syllable_confusion.tsv";
    pub const KEYWORDS: &str = "keywords.tsv";
    pub const LM_CORPUS: &str = "lm_corpus.txt";
    pub const TRANSCRIPTS: &str = "transcripts.tsv";
    pub const COSTS: &str = "costs.toml";
    pub const CHAR_LM: &str = "char.arpa";
    pub const SYLL_LM: &str = "syllable.arpa";
    pub const CONFIG: &str = "config.toml";
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Config for a world written by [`write_world`], with paths relative to
/// its directory. The LMs are expected at `char.arpa` and `syllable.arpa`.
pub fn world_pipeline_config() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    let p = &mut cfg.paths;
    p.char_units = Some(files::CHARS.into());
    p.syllable_units = Some(files::SYLLS.into());
    p.lexicon = Some(files::LEXICON.into());
    p.keywords = Some(files::KEYWORDS.into());
    p.costs = Some(files::COSTS.into());
    p.char_confusion = Some(files::CHAR_CONFUSION.into());
    p.syllable_confusion = Some(files::SYLL_CONFUSION.into());
    p.char_lm = Some(files::CHAR_LM.into());
    p.syllable_lm = Some(files::SYLL_LM.into());
    // token frames are packed back to back, so any padding pulls
    // neighbouring tokens into the scoring window
    cfg.kws.window_pad = 0;
    cfg.synth.noise = 0.3;
    cfg.synth.swap_prob = 0.15;
    cfg.synth.syllable_swap_prob = 0.05;
    cfg
}

pub fn write_world(world: &World, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join(files::CHARS), &world.chars.to_text())?;
    write(&dir.join(files::SYLLS), &world.sylls.to_text())?;
    write(&dir.join(files::LEXICON), &world.lexicon.to_text())?;
    write(&dir.join(files::CHAR_CONFUSION), &world.char_confusion.to_text(&world.chars))?;
    write(&dir.join(files::SYLL_CONFUSION), &world.syll_confusion.to_text(&world.sylls))?;
    let tsv = |rows: &[(String, String)]| rows.iter().map(|(a, b)| format!("{a}\t{b}\n")).collect::<String>();
    write(&dir.join(files::KEYWORDS), &tsv(&world.keywords))?;
    write(&dir.join(files::TRANSCRIPTS), &tsv(&world.transcripts))?;
    let mut lm = world.lm_corpus.join("\n");
    lm.push('\n');
    write(&dir.join(files::LM_CORPUS), &lm)?;
    write(&dir.join(files::COSTS), DEFAULT_COSTS)?;
    Ok(())
}

pub const DEFAULT_COSTS: &str = r#"[initial_groups]
"zh z" = 0.5
"ch c" = 0.5
"sh s" = 0.5
"n l" = 0.5
"f h" = 0.5

[final_groups]
"in ing" = 0.5
"en eng" = 0.5
"an ang" = 0.5

[costs]
tone = 0.2
substitution = 1.0
insertion = 1.0
deletion = 1.0
"#;

/// Reads `utt_id<TAB>text` lines. Blank lines are skipped.
pub fn parse_transcripts(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let (id, body) = line
            .split_once('\t')
            .ok_or_else(|| Error::BadFormat(format!("transcript line {}: missing tab", n + 1)))?;
        out.push((id.to_string(), body.to_string()));
    }
    Ok(out)
}

pub fn load_transcripts(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let path = path.as_ref();
    parse_transcripts(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}
