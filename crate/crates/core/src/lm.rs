//! Backoff n-gram language model: training with interpolated absolute
//! discounting, ARPA import/export and incremental scoring.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rustc_hash::FxHashMap;
use smallvec::SmallVec;

use crate::error::{Error, Result};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

/// log10 value standing in for probability zero, as ARPA tools do.
pub const LOG10_ZERO: f64 = -99.0;

const UNK_ID: u32 = 0;
const BOS_ID: u32 = 1;
const EOS_ID: u32 = 2;
const ROOT: u32 = 0;

const NO_NODE: u32 = u32::MAX;

/// The last `order - 1` tokens of a prefix.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct LmState {
    history: SmallVec<[u32; 4]>,
    // node of each suffix `history[i..]`, or NO_NODE when not stored
    ctx: SmallVec<[u32; 4]>,
}

impl LmState {
    pub fn tokens(&self) -> &[u32] {
        &self.history
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    prob: f64,
    backoff: f64,
    order: u8,
}

#[derive(Debug, Clone)]
pub struct NGramLm {
    order: usize,
    vocab: Vec<String>,
    index: HashMap<String, u32>,
    nodes: Vec<Node>,
    // (parent node, token) -> child node; node 0 is the empty context
    children: FxHashMap<(u32, u32), u32>,
    // highest log10 probability among each node's children
    max_child: Vec<f64>,
}

impl NGramLm {
    fn empty(order: usize) -> Self {
        let mut lm = NGramLm {
            order,
            vocab: Vec::new(),
            index: HashMap::new(),
            nodes: vec![Node {
                prob: 0.0,
                backoff: 0.0,
                order: 0,
            }],
            children: FxHashMap::default(),
            max_child: vec![f64::NEG_INFINITY],
        };
        for tok in [UNK, BOS, EOS] {
            lm.intern(tok);
        }
        lm
    }

    fn intern(&mut self, tok: &str) -> u32 {
        if let Some(&id) = self.index.get(tok) {
            return id;
        }
        let id = self.vocab.len() as u32;
        self.vocab.push(tok.to_string());
        self.index.insert(tok.to_string(), id);
        id
    }

    fn insert(&mut self, ngram: &[u32], prob: f64, backoff: f64) -> Result<u32> {
        let (last, ctx) = ngram.split_last().expect("non-empty n-gram");
        let parent = self
            .find(ctx)
            .ok_or_else(|| Error::BadFormat(format!("n-gram {:?} has no stored prefix", self.render(ngram))))?;
        let id = self.nodes.len() as u32;
        self.nodes.push(Node {
            prob,
            backoff,
            order: ngram.len() as u8,
        });
        if self.children.insert((parent, *last), id).is_some() {
            return Err(Error::BadFormat(format!("duplicate n-gram {:?}", self.render(ngram))));
        }
        self.max_child.push(f64::NEG_INFINITY);
        let best = &mut self.max_child[parent as usize];
        *best = best.max(prob);
        Ok(id)
    }

    fn find(&self, ngram: &[u32]) -> Option<u32> {
        let mut node = ROOT;
        for &tok in ngram {
            node = *self.children.get(&(node, tok))?;
        }
        Some(node)
    }

    fn render(&self, ngram: &[u32]) -> String {
        ngram
            .iter()
            .map(|&t| self.vocab[t as usize].as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    /// Vocabulary id of `tok`, with unknown tokens mapped to `<unk>`.
    pub fn token_id(&self, tok: &str) -> u32 {
        self.index.get(tok).copied().unwrap_or(UNK_ID)
    }

    pub fn unk_id(&self) -> u32 {
        UNK_ID
    }

    pub fn bos_id(&self) -> u32 {
        BOS_ID
    }

    pub fn eos_id(&self) -> u32 {
        EOS_ID
    }

    /// Number of stored n-grams per order, index 0 = unigrams.
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.order];
        for node in &self.nodes[1..] {
            counts[node.order as usize - 1] += 1;
        }
        counts
    }

    /// State after `<s>`.
    pub fn begin_state(&self) -> LmState {
        self.advance(&LmState::default(), BOS_ID)
    }

    pub fn empty_state(&self) -> LmState {
        LmState::default()
    }

    fn advance(&self, state: &LmState, token: u32) -> LmState {
        let keep = self.order.saturating_sub(1);
        let mut history: SmallVec<[u32; 4]> = state.history.clone();
        history.push(token);
        let drop = history.len().saturating_sub(keep);
        history.drain(..drop);
        // history[i..] extends the old suffix starting at old index i + drop
        let old = &state.ctx;
        let ctx = (0..history.len())
            .map(|i| {
                let parent = if i + drop < old.len() { old[i + drop] } else { ROOT };
                if parent == NO_NODE {
                    return NO_NODE;
                }
                self.children.get(&(parent, token)).copied().unwrap_or(NO_NODE)
            })
            .collect();
        LmState { history, ctx }
    }

    fn state_prob(&self, state: &LmState, token: u32) -> f64 {
        let token = if (token as usize) < self.vocab.len() { token } else { UNK_ID };
        let mut backoff = 0.0;
        for &node in state.ctx.iter().chain(std::iter::once(&ROOT)) {
            if node == NO_NODE {
                continue;
            }
            if let Some(&child) = self.children.get(&(node, token)) {
                return backoff + self.nodes[child as usize].prob;
            }
            backoff += self.nodes[node as usize].backoff;
        }
        backoff + LOG10_ZERO
    }

    /// Upper bound on `log10 P(token | state)` over every token.
    pub fn max_log10_prob(&self, state: &LmState) -> f64 {
        let mut bound = self.max_child[ROOT as usize].max(LOG10_ZERO);
        for &node in state.ctx.iter().rev() {
            if node != NO_NODE {
                let n = node as usize;
                bound = self.max_child[n].max(self.nodes[n].backoff + bound);
            }
        }
        bound
    }

    /// log10 P(token | state) by the backoff recursion.
    pub fn log10_prob(&self, context: &[u32], token: u32) -> f64 {
        let token = if (token as usize) < self.vocab.len() { token } else { UNK_ID };
        let mut backoff = 0.0;
        for start in 0..=context.len() {
            if let Some(node) = self.find(&context[start..]) {
                if let Some(&child) = self.children.get(&(node, token)) {
                    return backoff + self.nodes[child as usize].prob;
                }
                backoff += self.nodes[node as usize].backoff;
            }
        }
        // tokens without a unigram entry only arise from hand-written models
        backoff + LOG10_ZERO
    }

    pub fn score_token(&self, state: &LmState, token: u32) -> (f64, LmState) {
        (self.state_prob(state, token), self.advance(state, token))
    }

    /// Total log10 probability. Without boundaries scoring starts from the
    /// empty context and `</s>` is not scored.
    pub fn score_sequence(&self, tokens: &[u32], with_boundaries: bool) -> f64 {
        let mut state = if with_boundaries { self.begin_state() } else { self.empty_state() };
        let mut total = 0.0;
        for &tok in tokens {
            let (p, next) = self.score_token(&state, tok);
            total += p;
            state = next;
        }
        if with_boundaries {
            total += self.score_token(&state, EOS_ID).0;
        }
        total
    }

    pub fn score_words<S: AsRef<str>>(&self, tokens: &[S], with_boundaries: bool) -> f64 {
        let ids: Vec<u32> = tokens.iter().map(|t| self.token_id(t.as_ref())).collect();
        self.score_sequence(&ids, with_boundaries)
    }

    pub fn to_arpa(&self) -> String {
        let mut by_order: Vec<Vec<(String, Node)>> = vec![Vec::new(); self.order];
        let mut stack: Vec<(u32, Vec<u32>)> = vec![(ROOT, Vec::new())];
        let mut kids: FxHashMap<u32, Vec<(u32, u32)>> = FxHashMap::default();
        for (&(parent, tok), &child) in &self.children {
            kids.entry(parent).or_default().push((tok, child));
        }
        while let Some((node, ngram)) = stack.pop() {
            for &(tok, child) in kids.get(&node).map_or(&[][..], Vec::as_slice) {
                let mut g = ngram.clone();
                g.push(tok);
                let n = self.nodes[child as usize];
                by_order[n.order as usize - 1].push((self.render(&g), n));
                stack.push((child, g));
            }
        }
        let mut out = String::from("\n\\data\\\n");
        for (k, grams) in by_order.iter().enumerate() {
            let _ = writeln!(out, "ngram {}={}", k + 1, grams.len());
        }
        for (k, grams) in by_order.iter_mut().enumerate() {
            grams.sort_by(|a, b| a.0.cmp(&b.0));
            let _ = write!(out, "\n\\{}-grams:\n", k + 1);
            for (words, n) in grams.iter() {
                if k + 1 < self.order && n.backoff != 0.0 {
                    let _ = writeln!(out, "{}\t{}\t{}", n.prob, words, n.backoff);
                } else {
                    let _ = writeln!(out, "{}\t{}", n.prob, words);
                }
            }
        }
        out.push_str("\n\\end\\\n");
        out
    }

    pub fn from_arpa(text: &str) -> Result<Self> {
        let bad = |line: usize, why: String| Error::BadFormat(format!("ARPA line {line}: {why}"));
        let mut lines = text.lines().enumerate().map(|(n, l)| (n + 1, l.trim()));
        let mut declared: Vec<usize> = Vec::new();
        let mut in_data = false;
        for (n, line) in lines.by_ref() {
            if line == "\\data\\" {
                in_data = true;
                continue;
            }
            if !in_data {
                continue;
            }
            if line.is_empty() {
                if !declared.is_empty() {
                    break;
                }
                continue;
            }
            let rest = line
                .strip_prefix("ngram ")
                .ok_or_else(|| bad(n, format!("expected 'ngram N=count', found {line:?}")))?;
            let (k, c) = rest.split_once('=').ok_or_else(|| bad(n, "missing '='".into()))?;
            let k: usize = k.trim().parse().map_err(|_| bad(n, "bad order".into()))?;
            let c: usize = c.trim().parse().map_err(|_| bad(n, "bad count".into()))?;
            if k != declared.len() + 1 {
                return Err(bad(n, format!("order {k} out of sequence")));
            }
            declared.push(c);
        }
        if declared.is_empty() {
            return Err(Error::BadFormat("missing \\data\\ section".into()));
        }
        let order = declared.len();
        let mut lm = NGramLm::empty(order);
        let mut current = 0usize;
        let mut seen = vec![0usize; order];
        let mut ended = false;
        let mut have_unigram = [false; 3];
        for (n, line) in lines {
            if line.is_empty() {
                continue;
            }
            if line == "\\end\\" {
                ended = true;
                break;
            }
            if let Some(k) = line.strip_prefix('\\').and_then(|l| l.strip_suffix("-grams:")) {
                let k: usize = k.parse().map_err(|_| bad(n, format!("bad section {line:?}")))?;
                if k != current + 1 || k > order {
                    return Err(bad(n, format!("unexpected section {line:?}")));
                }
                current = k;
                continue;
            }
            if current == 0 {
                return Err(bad(n, "entry outside an n-gram section".into()));
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != current + 1 && fields.len() != current + 2 {
                return Err(bad(n, format!("expected {} words", current)));
            }
            let parse = |s: &str| -> Result<f64> {
                let v: f64 = s.parse().map_err(|_| bad(n, format!("bad number {s:?}")))?;
                Ok(if v.is_finite() { v.max(LOG10_ZERO) } else { LOG10_ZERO })
            };
            let prob = parse(fields[0])?;
            let backoff = if fields.len() == current + 2 { parse(fields[current + 1])? } else { 0.0 };
            let ids: Vec<u32> = fields[1..=current].iter().map(|w| lm.intern(w)).collect();
            if current == 1 && (ids[0] as usize) < 3 {
                have_unigram[ids[0] as usize] = true;
            }
            lm.insert(&ids, prob, backoff).map_err(|e| bad(n, e.to_string()))?;
            seen[current - 1] += 1;
        }
        if !ended {
            return Err(Error::BadFormat("missing \\end\\".into()));
        }
        if seen != declared {
            return Err(Error::BadFormat(format!(
                "declared n-gram counts {declared:?} but found {seen:?}"
            )));
        }
        // special tokens without entries become unscorable zero-probability unigrams
        for (id, present) in have_unigram.iter().enumerate() {
            if !present {
                lm.insert(&[id as u32], LOG10_ZERO, 0.0)?;
            }
        }
        Ok(lm)
    }
}

pub fn write_arpa(lm: &NGramLm, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, lm.to_arpa()).map_err(|e| Error::io(path, e))
}

pub fn read_arpa(path: impl AsRef<Path>) -> Result<NGramLm> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    NGramLm::from_arpa(&text)
}

/// Trains on text lines, one character per token, whitespace dropped.
pub fn train<I, S>(corpus: I, order: usize, discount: f64) -> Result<NGramLm>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let sentences = corpus.into_iter().map(|line| {
        line.as_ref()
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(String::from)
            .collect::<Vec<_>>()
    });
    train_tokens(sentences, order, discount)
}

fn log10_floor(p: f64) -> f64 {
    if p > 0.0 {
        p.log10().max(LOG10_ZERO)
    } else {
        LOG10_ZERO
    }
}

/// Trains on pre-tokenized sentences with interpolated absolute
/// discounting:
/// `P(w|c) = max(n(c,w) - D, 0) / n(c) + D * N1+(c.) / n(c) * P(w|c')`,
/// bottoming out in a uniform distribution over the seen vocabulary plus
/// `<unk>`. Each sentence is wrapped in `<s>` ... `</s>`.
pub fn train_tokens<I, S>(sentences: I, order: usize, discount: f64) -> Result<NGramLm>
where
    I: IntoIterator<Item = Vec<S>>,
    S: AsRef<str>,
{
    if order == 0 {
        return Err(Error::Config("LM order must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&discount) {
        return Err(Error::Config(format!("discount {discount} outside [0, 1)")));
    }
    let sentences: Vec<Vec<String>> = sentences
        .into_iter()
        .map(|s| s.iter().map(|t| t.as_ref().to_string()).collect())
        .collect();
    if sentences.is_empty() {
        return Err(Error::EmptyCorpus);
    }

    let mut lm = NGramLm::empty(order);
    let mut types: Vec<&str> = sentences.iter().flatten().map(String::as_str).collect();
    types.sort_unstable();
    types.dedup();
    for t in types {
        lm.intern(t);
    }

    // counts[k-1]: k-gram -> count
    let mut counts: Vec<BTreeMap<Vec<u32>, u64>> = vec![BTreeMap::new(); order];
    for sent in &sentences {
        let mut padded = Vec::with_capacity(sent.len() + 2);
        padded.push(BOS_ID);
        padded.extend(sent.iter().map(|t| lm.index[t]));
        padded.push(EOS_ID);
        for k in 1..=order {
            for gram in padded.windows(k) {
                if k == 1 && gram[0] == BOS_ID {
                    continue;
                }
                *counts[k - 1].entry(gram.to_vec()).or_insert(0) += 1;
            }
        }
    }

    // unigrams, interpolated with uniform over seen types plus <unk>
    let total: u64 = counts[0].values().sum();
    let seen_types = counts[0].len();
    let unk_seen = counts[0].contains_key(&vec![UNK_ID]);
    let uniform = 1.0 / (seen_types + usize::from(!unk_seen)) as f64;
    let mass = discount * seen_types as f64 / total as f64;
    for (gram, &c) in &counts[0] {
        let p = (c as f64 - discount).max(0.0) / total as f64 + mass * uniform;
        lm.insert(gram, log10_floor(p), 0.0)?;
    }
    if !unk_seen {
        lm.insert(&[UNK_ID], log10_floor(mass * uniform), 0.0)?;
    }
    lm.insert(&[BOS_ID], LOG10_ZERO, 0.0)?;

    for k in 2..=order {
        // context -> (total count, distinct followers)
        let mut contexts: BTreeMap<&[u32], (u64, u64)> = BTreeMap::new();
        for (gram, &c) in &counts[k - 1] {
            let e = contexts.entry(&gram[..k - 1]).or_insert((0, 0));
            e.0 += c;
            e.1 += 1;
        }
        let mut entries = Vec::with_capacity(counts[k - 1].len());
        for (gram, &c) in &counts[k - 1] {
            let (ctx_total, followers) = contexts[&gram[..k - 1]];
            let gamma = discount * followers as f64 / ctx_total as f64;
            let lower = 10f64.powf(lm.log10_prob(&gram[1..k - 1], gram[k - 1]));
            let p = (c as f64 - discount).max(0.0) / ctx_total as f64 + gamma * lower;
            entries.push((gram.clone(), log10_floor(p)));
        }
        // the backoff weight of a context is exactly its interpolation mass
        for (ctx, &(ctx_total, followers)) in &contexts {
            let gamma = discount * followers as f64 / ctx_total as f64;
            let node = lm.find(ctx).expect("context counted at lower order");
            lm.nodes[node as usize].backoff = log10_floor(gamma);
        }
        for (gram, p) in entries {
            lm.insert(&gram, p, 0.0)?;
        }
    }
    Ok(lm)
}
