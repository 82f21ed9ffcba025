//! Posteriorgrams: storage, the binary and JSON file formats, greedy and
//! Viterbi alignment, and the synthetic generator that stands in for an
//! acoustic model.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logmath::{log_sum_exp, LOG_ZERO};
use crate::units::{UnitSet, BLANK_ID};

pub const MAGIC: &[u8; 4] = b"BKWS";
pub const FORMAT_VERSION: u16 = 1;
pub const DEFAULT_FRAME_PERIOD_S: f64 = 0.04;

const ROW_TOLERANCE: f64 = 1e-3;
const MAX_ENTRY: f64 = 1e-6;

/// A T×V matrix of natural-log posteriors, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PgramJson", into = "PgramJson")]
pub struct Posteriorgram {
    utt_id: String,
    unit_set_id: String,
    frame_period_s: f64,
    frames: usize,
    vocab: usize,
    logp: Vec<f32>,
}

impl Posteriorgram {
    pub fn new(
        utt_id: impl Into<String>,
        unit_set_id: impl Into<String>,
        frame_period_s: f64,
        vocab: usize,
        logp: Vec<f32>,
    ) -> Result<Self> {
        if vocab == 0 {
            return Err(Error::BadFormat("posteriorgram has no units".into()));
        }
        if !logp.len().is_multiple_of(vocab) {
            return Err(Error::BadFormat(format!(
                "{} values is not a whole number of {vocab}-unit rows",
                logp.len()
            )));
        }
        let pg = Posteriorgram {
            utt_id: utt_id.into(),
            unit_set_id: unit_set_id.into(),
            frame_period_s,
            frames: logp.len() / vocab,
            vocab,
            logp,
        };
        pg.validate()?;
        Ok(pg)
    }

    /// Builds from linear-domain probability rows, for tests and fixtures.
    pub fn from_probs(
        utt_id: impl Into<String>,
        unit_set_id: impl Into<String>,
        rows: &[Vec<f64>],
    ) -> Result<Self> {
        let vocab = rows.first().map_or(1, Vec::len);
        let mut logp = Vec::with_capacity(rows.len() * vocab);
        for row in rows {
            if row.len() != vocab {
                return Err(Error::BadFormat("ragged probability rows".into()));
            }
            logp.extend(row.iter().map(|&p| floor_ln(p) as f32));
        }
        Posteriorgram::new(utt_id, unit_set_id, DEFAULT_FRAME_PERIOD_S, vocab, logp)
    }

    fn validate(&self) -> Result<()> {
        if !(self.frame_period_s.is_finite() && self.frame_period_s > 0.0) {
            return Err(Error::BadFormat(format!(
                "frame period {} is not positive",
                self.frame_period_s
            )));
        }
        for t in 0..self.frames {
            let row = self.row(t);
            if let Some(v) = row.iter().find(|v| !v.is_finite() || **v as f64 > MAX_ENTRY) {
                return Err(Error::BadFormat(format!("frame {t}: invalid log posterior {v}")));
            }
            let lse = log_sum_exp(row.iter().map(|&v| v as f64));
            if lse.abs() > ROW_TOLERANCE {
                return Err(Error::BadFormat(format!(
                    "frame {t}: posteriors sum to {:.6}, not 1",
                    lse.exp()
                )));
            }
        }
        Ok(())
    }

    pub fn utt_id(&self) -> &str {
        &self.utt_id
    }

    pub fn unit_set_id(&self) -> &str {
        &self.unit_set_id
    }

    pub fn frame_period_s(&self) -> f64 {
        self.frame_period_s
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.logp[t * self.vocab..(t + 1) * self.vocab]
    }

    #[inline]
    pub fn at(&self, t: usize, unit: u32) -> f64 {
        self.logp[t * self.vocab + unit as usize] as f64
    }

    pub fn values(&self) -> &[f32] {
        &self.logp
    }

    pub fn duration_s(&self) -> f64 {
        self.frames as f64 * self.frame_period_s
    }

    /// Fails unless this posteriorgram was produced over `set`.
    pub fn check_units(&self, set: &UnitSet) -> Result<()> {
        if self.unit_set_id != set.id() || self.vocab != set.len() {
            return Err(Error::UnitSetMismatch {
                expected: format!("{} ({} units)", set.id(), set.len()),
                found: format!("{} ({} units)", self.unit_set_id, self.vocab),
            });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + self.logp.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        for s in [&self.utt_id, &self.unit_set_id] {
            out.extend_from_slice(&(s.len() as u16).to_le_bytes());
            out.extend_from_slice(s.as_bytes());
        }
        out.extend_from_slice(&self.frame_period_s.to_le_bytes());
        out.extend_from_slice(&(self.frames as u32).to_le_bytes());
        out.extend_from_slice(&(self.vocab as u32).to_le_bytes());
        for v in &self.logp {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::BadFormat("bad magic".into()));
        }
        let version = u16::from_le_bytes(r.array()?);
        if version != FORMAT_VERSION {
            return Err(Error::BadFormat(format!("unsupported version {version}")));
        }
        let utt_id = r.string()?;
        let unit_set_id = r.string()?;
        let frame_period_s = f64::from_le_bytes(r.array()?);
        let frames = u32::from_le_bytes(r.array()?) as usize;
        let vocab = u32::from_le_bytes(r.array()?) as usize;
        let count = frames
            .checked_mul(vocab)
            .ok_or_else(|| Error::BadFormat("matrix size overflows".into()))?;
        let body = r.take(count.checked_mul(4).ok_or_else(|| Error::BadFormat("matrix size overflows".into()))?)?;
        if r.pos != bytes.len() {
            return Err(Error::BadFormat(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let logp = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Posteriorgram::new(utt_id, unit_set_id, frame_period_s, vocab, logp)
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::BadFormat("truncated file".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut out = [0u8; N];
        out.copy_from_slice(self.take(N)?);
        Ok(out)
    }

    fn string(&mut self) -> Result<String> {
        let len = u16::from_le_bytes(self.array()?) as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| Error::BadFormat("invalid UTF-8 string".into()))
    }
}

#[derive(Serialize, Deserialize)]
struct PgramJson {
    utt_id: String,
    unit_set_id: String,
    frame_period_s: f64,
    logp: Vec<Vec<f32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vocab: Option<usize>,
}

impl TryFrom<PgramJson> for Posteriorgram {
    type Error = Error;

    fn try_from(j: PgramJson) -> Result<Self> {
        let vocab = j.vocab.or_else(|| j.logp.first().map(Vec::len)).unwrap_or(1);
        if j.logp.iter().any(|r| r.len() != vocab) {
            return Err(Error::BadFormat("ragged logp rows".into()));
        }
        Posteriorgram::new(j.utt_id, j.unit_set_id, j.frame_period_s, vocab, j.logp.concat())
    }
}

impl From<Posteriorgram> for PgramJson {
    fn from(pg: Posteriorgram) -> Self {
        let logp = if pg.frames == 0 {
            Vec::new()
        } else {
            pg.logp.chunks(pg.vocab).map(<[f32]>::to_vec).collect()
        };
        PgramJson {
            utt_id: pg.utt_id,
            unit_set_id: pg.unit_set_id,
            frame_period_s: pg.frame_period_s,
            logp,
            vocab: Some(pg.vocab),
        }
    }
}

pub fn write_pgram(pg: &Posteriorgram, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, pg.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn write_pgram_json(pg: &Posteriorgram, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string(pg).map_err(|e| Error::BadFormat(e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads either format; files starting with the magic are binary,
/// anything else is parsed as the JSON mirror.
pub fn read_pgram(path: impl AsRef<Path>) -> Result<Posteriorgram> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(MAGIC) || !bytes.iter().find(|b| !b.is_ascii_whitespace()).is_some_and(|&b| b == b'{') {
        Posteriorgram::from_bytes(&bytes)
    } else {
        serde_json::from_slice(&bytes).map_err(|e| Error::BadFormat(e.to_string()))
    }
}

pub(crate) fn floor_ln(p: f64) -> f64 {
    if p > 0.0 {
        p.ln().max(LOG_ZERO)
    } else {
        LOG_ZERO
    }
}

/// Weighted confusion partners per unit id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfusionTable {
    partners: HashMap<u32, Vec<(u32, f64)>>,
}

impl ConfusionTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, unit: u32, partner: u32, weight: f64) {
        if unit != partner && weight > 0.0 {
            self.partners.entry(unit).or_default().push((partner, weight));
        }
    }

    pub fn partners(&self, unit: u32) -> &[(u32, f64)] {
        self.partners.get(&unit).map_or(&[], Vec::as_slice)
    }

    pub fn is_empty(&self) -> bool {
        self.partners.is_empty()
    }

    /// Parses `unit<TAB>partner:weight partner:weight ...` lines.
    pub fn parse(text: &str, set: &UnitSet) -> Result<Self> {
        let mut table = ConfusionTable::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |why: &str| Error::BadFormat(format!("confusion line {}: {why}", n + 1));
            let (unit, rest) = line.split_once('\t').ok_or_else(|| bad("missing tab"))?;
            let unit = set.get(unit).ok_or_else(|| bad("unknown unit"))?;
            for item in rest.split_whitespace() {
                let (p, w) = item.rsplit_once(':').ok_or_else(|| bad("expected partner:weight"))?;
                let p = set.get(p).ok_or_else(|| bad("unknown partner"))?;
                let w: f64 = w.parse().map_err(|_| bad("bad weight"))?;
                table.add(unit, p, w);
            }
        }
        Ok(table)
    }

    pub fn to_text(&self, set: &UnitSet) -> String {
        let mut keys: Vec<_> = self.partners.keys().copied().collect();
        keys.sort_unstable();
        let mut out = String::new();
        for k in keys {
            out.push_str(set.unit(k));
            out.push('\t');
            let items: Vec<String> = self.partners[&k]
                .iter()
                .map(|(p, w)| format!("{}:{w}", set.unit(*p)))
                .collect();
            out.push_str(&items.join(" "));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub frames_per_token: usize,
    pub blank_gap: usize,
    /// Posterior mass moved off the target unit in every frame.
    pub noise: f64,
    pub confusion: Option<ConfusionTable>,
    /// Per-token probability that a confusion partner is rendered in place
    /// of the spoken unit.
    pub swap_prob: f64,
    pub frame_period_s: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            frames_per_token: 4,
            blank_gap: 2,
            noise: 0.0,
            confusion: None,
            swap_prob: 0.0,
            frame_period_s: DEFAULT_FRAME_PERIOD_S,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn check(&self) -> Result<()> {
        if self.frames_per_token == 0 {
            return Err(Error::Config("frames_per_token must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.noise) {
            return Err(Error::Config(format!("noise {} outside [0, 1)", self.noise)));
        }
        if !(0.0..=1.0).contains(&self.swap_prob) {
            return Err(Error::Config(format!("swap_prob {} outside [0, 1]", self.swap_prob)));
        }
        Ok(())
    }
}

/// A generated posteriorgram plus the frames each transcript token occupies.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub pg: Posteriorgram,
    /// `[start, end)` frames of every transcript token.
    pub token_frames: Vec<(usize, usize)>,
    /// Unit actually rendered for each token (differs from the transcript
    /// where a swap happened).
    pub rendered: Vec<u32>,
}

pub fn synth_generate(transcript: &[u32], set: &UnitSet, cfg: &SynthConfig) -> Result<Posteriorgram> {
    synth_generate_detailed("synth", transcript, set, cfg).map(|o| o.pg)
}

/// Lays out `blank_gap` blank frames, `frames_per_token` frames per token
/// (with one separating blank between identical neighbours, which CTC needs
/// to keep them apart), then `blank_gap` trailing blanks.
pub fn synth_generate_detailed(
    utt_id: &str,
    transcript: &[u32],
    set: &UnitSet,
    cfg: &SynthConfig,
) -> Result<SynthOutput> {
    cfg.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let rendered = render(transcript, set, cfg, &mut rng)?;
    let separators: Vec<bool> = (0..rendered.len()).map(|i| i > 0 && rendered[i - 1] == rendered[i]).collect();
    let (targets, token_frames) = layout(&rendered, &separators, cfg);
    let pg = emit(utt_id, set, cfg, cfg.frame_period_s, &mut rng, &targets)?;
    Ok(SynthOutput {
        pg,
        token_frames,
        rendered,
    })
}

/// Generates two posteriorgrams of the same utterance over parallel unit
/// streams (characters and their syllables) that share one frame layout,
/// so token `i` occupies the same frames in both. A separating blank goes
/// wherever either stream repeats a unit. Layout fields come from `cfg_a`.
pub fn synth_generate_parallel(
    utt_id: &str,
    a: (&[u32], &UnitSet, &SynthConfig),
    b: (&[u32], &UnitSet, &SynthConfig),
) -> Result<(SynthOutput, SynthOutput)> {
    let (tr_a, set_a, cfg_a) = a;
    let (tr_b, set_b, cfg_b) = b;
    cfg_a.check()?;
    cfg_b.check()?;
    if tr_a.len() != tr_b.len() {
        return Err(Error::InvalidTranscript(format!(
            "parallel streams differ in length: {} vs {}",
            tr_a.len(),
            tr_b.len()
        )));
    }
    let mut rng_a = ChaCha8Rng::seed_from_u64(cfg_a.seed);
    let mut rng_b = ChaCha8Rng::seed_from_u64(cfg_b.seed);
    let ren_a = render(tr_a, set_a, cfg_a, &mut rng_a)?;
    let ren_b = render(tr_b, set_b, cfg_b, &mut rng_b)?;
    let separators: Vec<bool> = (0..ren_a.len())
        .map(|i| i > 0 && (ren_a[i - 1] == ren_a[i] || ren_b[i - 1] == ren_b[i]))
        .collect();
    let (targets_a, token_frames) = layout(&ren_a, &separators, cfg_a);
    let (targets_b, _) = layout(&ren_b, &separators, cfg_a);
    let pg_a = emit(utt_id, set_a, cfg_a, cfg_a.frame_period_s, &mut rng_a, &targets_a)?;
    let pg_b = emit(utt_id, set_b, cfg_b, cfg_a.frame_period_s, &mut rng_b, &targets_b)?;
    Ok((
        SynthOutput {
            pg: pg_a,
            token_frames: token_frames.clone(),
            rendered: ren_a,
        },
        SynthOutput {
            pg: pg_b,
            token_frames,
            rendered: ren_b,
        },
    ))
}

fn render(transcript: &[u32], set: &UnitSet, cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Vec<u32>> {
    if let Some(pos) = transcript.iter().position(|&u| u == BLANK_ID) {
        return Err(Error::InvalidTranscript(format!("blank at position {pos}")));
    }
    if let Some(&u) = transcript.iter().find(|&&u| !set.contains_id(u)) {
        return Err(Error::InvalidTranscript(format!("unit id {u} not in {}", set.id())));
    }
    let empty = ConfusionTable::new();
    let table = cfg.confusion.as_ref().unwrap_or(&empty);
    Ok(transcript
        .iter()
        .map(|&u| {
            if cfg.swap_prob > 0.0 && rng.gen::<f64>() < cfg.swap_prob {
                pick_partner(u, table, set.len(), rng)
            } else {
                u
            }
        })
        .collect())
}

fn layout(rendered: &[u32], separators: &[bool], cfg: &SynthConfig) -> (Vec<u32>, Vec<(usize, usize)>) {
    let mut targets = vec![BLANK_ID; cfg.blank_gap];
    let mut token_frames = Vec::with_capacity(rendered.len());
    for (&u, &sep) in rendered.iter().zip(separators) {
        if sep {
            targets.push(BLANK_ID);
        }
        let start = targets.len();
        targets.extend(std::iter::repeat_n(u, cfg.frames_per_token));
        token_frames.push((start, targets.len()));
    }
    targets.extend(std::iter::repeat_n(BLANK_ID, cfg.blank_gap));
    (targets, token_frames)
}

fn emit(
    utt_id: &str,
    set: &UnitSet,
    cfg: &SynthConfig,
    frame_period_s: f64,
    rng: &mut ChaCha8Rng,
    targets: &[u32],
) -> Result<Posteriorgram> {
    let empty = ConfusionTable::new();
    let table = cfg.confusion.as_ref().unwrap_or(&empty);
    let vocab = set.len();
    let mut logp = Vec::with_capacity(targets.len() * vocab);
    let mut probs = vec![0.0f64; vocab];
    for &target in targets {
        frame_distribution(target, cfg.noise, table, rng, &mut probs);
        logp.extend(probs.iter().map(|&p| floor_ln(p) as f32));
    }
    Posteriorgram::new(utt_id, set.id(), frame_period_s, vocab, logp)
}

fn pick_partner(unit: u32, table: &ConfusionTable, vocab: usize, rng: &mut ChaCha8Rng) -> u32 {
    let partners = table.partners(unit);
    if partners.is_empty() {
        if vocab <= 2 {
            return unit;
        }
        // uniform over non-blank units other than `unit`
        let mut p = rng.gen_range(1..vocab as u32 - 1);
        if p >= unit {
            p += 1;
        }
        return p;
    }
    let total: f64 = partners.iter().map(|(_, w)| w).sum();
    let mut x = rng.gen::<f64>() * total;
    for &(p, w) in partners {
        if x < w {
            return p;
        }
        x -= w;
    }
    partners[partners.len() - 1].0
}

fn frame_distribution(target: u32, noise: f64, table: &ConfusionTable, rng: &mut ChaCha8Rng, probs: &mut [f64]) {
    probs.fill(0.0);
    probs[target as usize] = 1.0 - noise;
    if noise == 0.0 || probs.len() < 2 {
        probs[target as usize] = 1.0;
        return;
    }
    let partners = table.partners(target);
    if partners.is_empty() {
        let mut total = 0.0;
        for (u, p) in probs.iter_mut().enumerate() {
            if u != target as usize {
                *p = rng.gen_range(0.5..1.5);
                total += *p;
            }
        }
        let scale = noise / total;
        for (u, p) in probs.iter_mut().enumerate() {
            if u != target as usize {
                *p *= scale;
            }
        }
    } else {
        let jittered: Vec<f64> = partners.iter().map(|(_, w)| w * rng.gen_range(0.5..1.5)).collect();
        let total: f64 = jittered.iter().sum();
        for (&(p, _), w) in partners.iter().zip(&jittered) {
            probs[p as usize] += noise * w / total;
        }
    }
}

/// Frame-wise argmax and its CTC collapse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GreedyPath {
    pub tokens: Vec<u32>,
    pub frames: Vec<u32>,
    /// Frame at which each collapsed token starts.
    pub token_starts: Vec<usize>,
}

pub fn greedy_path(pg: &Posteriorgram) -> GreedyPath {
    let frames: Vec<u32> = (0..pg.frames())
        .map(|t| {
            let row = pg.row(t);
            let mut best = 0;
            for (u, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = u;
                }
            }
            best as u32
        })
        .collect();
    let (tokens, token_starts) = ctc_collapse(&frames);
    GreedyPath {
        tokens,
        frames,
        token_starts,
    }
}

/// Removes repeats, then blanks.
pub fn ctc_collapse(path: &[u32]) -> (Vec<u32>, Vec<usize>) {
    let mut tokens = Vec::new();
    let mut starts = Vec::new();
    let mut prev = BLANK_ID;
    for (t, &u) in path.iter().enumerate() {
        if u != BLANK_ID && u != prev {
            tokens.push(u);
            starts.push(t);
        }
        prev = u;
    }
    (tokens, starts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenSpan {
    pub token: u32,
    pub start_frame: usize,
    pub end_frame: usize,
    pub peak_frame: usize,
    pub peak_logp: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub spans: Vec<TokenSpan>,
    /// Log probability of the best path.
    pub score: f64,
}

/// Minimum frames a CTC path needs to emit `tokens`.
pub fn ctc_min_frames(tokens: &[u32]) -> usize {
    tokens.len() + tokens.windows(2).filter(|w| w[0] == w[1]).count()
}

/// Best single CTC path for `tokens` over all frames of `pg`.
pub fn align_viterbi(pg: &Posteriorgram, tokens: &[u32]) -> Result<Alignment> {
    let frames = pg.frames();
    let needed = ctc_min_frames(tokens);
    if frames < needed {
        return Err(Error::AlignmentInfeasible {
            needed,
            available: frames,
        });
    }
    if frames == 0 {
        return Ok(Alignment {
            spans: Vec::new(),
            score: 0.0,
        });
    }
    let states = 2 * tokens.len() + 1;
    let label = |s: usize| if s.is_multiple_of(2) { BLANK_ID } else { tokens[s / 2] };
    const NEG: f64 = f64::NEG_INFINITY;

    let mut prev = vec![NEG; states];
    let mut cur = vec![NEG; states];
    // 0 = stay, 1 = from s-1, 2 = from s-2
    let mut back = vec![0u8; frames * states];
    prev[0] = pg.at(0, BLANK_ID);
    if states > 1 {
        prev[1] = pg.at(0, label(1));
    }
    for t in 1..frames {
        for s in 0..states {
            let mut best = prev[s];
            let mut from = 0u8;
            if s >= 1 && prev[s - 1] > best {
                best = prev[s - 1];
                from = 1;
            }
            if s >= 2 && s % 2 == 1 && label(s) != label(s - 2) && prev[s - 2] > best {
                best = prev[s - 2];
                from = 2;
            }
            cur[s] = if best == NEG { NEG } else { best + pg.at(t, label(s)) };
            back[t * states + s] = from;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let mut s = states - 1;
    if states > 1 && prev[states - 2] > prev[states - 1] {
        s = states - 2;
    }
    let score = prev[s];
    if score == NEG {
        return Err(Error::AlignmentInfeasible {
            needed,
            available: frames,
        });
    }

    let mut path = vec![0usize; frames];
    for t in (0..frames).rev() {
        path[t] = s;
        match back[t * states + s] {
            1 => s -= 1,
            2 => s -= 2,
            _ => {}
        }
    }

    let mut spans: Vec<TokenSpan> = Vec::with_capacity(tokens.len());
    for (t, &s) in path.iter().enumerate() {
        if s % 2 == 0 {
            continue;
        }
        let k = s / 2;
        let v = pg.at(t, tokens[k]) as f32;
        match spans.get_mut(k) {
            Some(span) => {
                span.end_frame = t + 1;
                if v > span.peak_logp {
                    span.peak_logp = v;
                    span.peak_frame = t;
                }
            }
            None => spans.push(TokenSpan {
                token: tokens[k],
                start_frame: t,
                end_frame: t + 1,
                peak_frame: t,
                peak_logp: v,
            }),
        }
    }
    Ok(Alignment { spans, score })
}
