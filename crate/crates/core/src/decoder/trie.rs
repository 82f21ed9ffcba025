use std::collections::VecDeque;

use rustc_hash::FxHashMap;

use super::UnitLm;
use crate::error::{Error, Result};
use crate::units::BLANK_ID;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasConfig {
    pub alpha: f64,
    pub beta: f64,
    /// Keywords longer than this are split into chunks of at most this many
    /// units before weighting.
    pub chunk_len: usize,
}

impl Default for BiasConfig {
    fn default() -> Self {
        BiasConfig {
            alpha: 1.0,
            beta: 4.0,
            chunk_len: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub units: Vec<u32>,
    pub weight: f64,
}

/// Aho-Corasick automaton over unit ids whose accept states carry bias
/// weights.
#[derive(Debug, Clone)]
pub struct KeywordTrie {
    goto: FxHashMap<(u32, u32), u32>,
    fail: Vec<u32>,
    // chunks ending at each node, following the failure chain
    outputs: Vec<Vec<u32>>,
    chunks: Vec<Chunk>,
    // per node: units whose transition completes a positively weighted
    // chunk, with the summed positive weight
    bonus_units: Vec<Vec<(u32, f64)>>,
    max_step_bonus: f64,
}

pub const TRIE_ROOT: u32 = 0;

/// Splits into consecutive pieces of `chunk_len` units; the last piece
/// holds the remainder.
pub fn segment(keyword: &[u32], chunk_len: usize) -> Vec<&[u32]> {
    keyword.chunks(chunk_len.max(1)).collect()
}

/// Inserts every keyword chunk with weight `-alpha * LM(chunk) + beta`,
/// where LM is the chunk's log10 probability scored from an empty context.
pub fn build_bias_trie(keywords: &[Vec<u32>], lm: Option<&UnitLm<'_>>, cfg: &BiasConfig) -> Result<KeywordTrie> {
    if cfg.chunk_len == 0 {
        return Err(Error::Config("chunk_len must be at least 1".into()));
    }
    let mut trie = KeywordTrie {
        goto: FxHashMap::default(),
        fail: vec![TRIE_ROOT],
        outputs: vec![Vec::new()],
        chunks: Vec::new(),
        bonus_units: Vec::new(),
        max_step_bonus: 0.0,
    };
    for (k, kw) in keywords.iter().enumerate() {
        if kw.is_empty() {
            return Err(Error::InvalidKeyword(format!("keyword {k} is empty")));
        }
        if kw.contains(&BLANK_ID) {
            return Err(Error::InvalidKeyword(format!("keyword {k} contains the blank unit")));
        }
        for piece in segment(kw, cfg.chunk_len) {
            let lm_score = lm.map_or(0.0, |lm| lm.score_sequence(piece, false));
            let weight = -cfg.alpha * lm_score + cfg.beta;
            if !weight.is_finite() {
                return Err(Error::InvalidKeyword(format!("keyword {k} has a non-finite bias weight")));
            }
            trie.insert(piece, weight);
        }
    }
    trie.link();
    Ok(trie)
}

impl KeywordTrie {
    fn insert(&mut self, units: &[u32], weight: f64) {
        let mut node = TRIE_ROOT;
        for &u in units {
            node = match self.goto.get(&(node, u)) {
                Some(&n) => n,
                None => {
                    let n = self.fail.len() as u32;
                    self.fail.push(TRIE_ROOT);
                    self.outputs.push(Vec::new());
                    self.goto.insert((node, u), n);
                    n
                }
            };
        }
        // identical chunks from different keywords share one entry
        if self.outputs[node as usize]
            .iter()
            .any(|&c| self.chunks[c as usize].units == units)
        {
            return;
        }
        self.outputs[node as usize].push(self.chunks.len() as u32);
        self.chunks.push(Chunk {
            units: units.to_vec(),
            weight,
        });
    }

    fn link(&mut self) {
        let mut children: Vec<Vec<(u32, u32)>> = vec![Vec::new(); self.fail.len()];
        for (&(parent, u), &child) in &self.goto {
            children[parent as usize].push((u, child));
        }
        for c in &mut children {
            c.sort_unstable();
        }
        let mut queue = VecDeque::new();
        for &(_, child) in &children[TRIE_ROOT as usize] {
            self.fail[child as usize] = TRIE_ROOT;
            queue.push_back(child);
        }
        while let Some(node) = queue.pop_front() {
            for &(u, child) in &children[node as usize] {
                let mut f = self.fail[node as usize];
                let target = loop {
                    if let Some(&n) = self.goto.get(&(f, u)) {
                        break n;
                    }
                    if f == TRIE_ROOT {
                        break TRIE_ROOT;
                    }
                    f = self.fail[f as usize];
                };
                self.fail[child as usize] = target;
                let inherited = self.outputs[target as usize].clone();
                self.outputs[child as usize].extend(inherited);
                queue.push_back(child);
            }
        }
        let positive = |outs: &[u32]| outs.iter().map(|&c| self.chunks[c as usize].weight.max(0.0)).sum::<f64>();
        let mut bonus_units = Vec::with_capacity(self.fail.len());
        for node in 0..self.fail.len() as u32 {
            let mut units: Vec<u32> = Vec::new();
            let mut f = node;
            loop {
                units.extend(children[f as usize].iter().map(|&(u, _)| u));
                if f == TRIE_ROOT {
                    break;
                }
                f = self.fail[f as usize];
            }
            units.sort_unstable();
            units.dedup();
            let list: Vec<(u32, f64)> = units
                .into_iter()
                .map(|u| (u, positive(&self.outputs[self.step(node, u) as usize])))
                .filter(|&(_, b)| b > 0.0)
                .collect();
            bonus_units.push(list);
        }
        self.bonus_units = bonus_units;
        self.max_step_bonus = self
            .outputs
            .iter()
            .map(|outs| outs.iter().map(|&c| self.chunks[c as usize].weight.max(0.0)).sum::<f64>())
            .fold(0.0, f64::max);
    }

    /// Automaton transition on one unit.
    pub fn step(&self, mut node: u32, unit: u32) -> u32 {
        loop {
            if let Some(&n) = self.goto.get(&(node, unit)) {
                return n;
            }
            if node == TRIE_ROOT {
                return TRIE_ROOT;
            }
            node = self.fail[node as usize];
        }
    }

    /// Chunk ids that end at `node`.
    pub fn completed(&self, node: u32) -> &[u32] {
        &self.outputs[node as usize]
    }

    pub fn chunk(&self, id: u32) -> &Chunk {
        &self.chunks[id as usize]
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn num_nodes(&self) -> usize {
        self.fail.len()
    }

    pub fn failure(&self, node: u32) -> u32 {
        self.fail[node as usize]
    }

    /// Units whose transition from `node` completes a chunk of positive
    /// weight, sorted by unit, with an upper bound on the bonus awarded.
    /// Every other unit awards nothing positive.
    pub fn bonus_units(&self, node: u32) -> &[(u32, f64)] {
        &self.bonus_units[node as usize]
    }

    /// Upper bound on the bonus a single transition can award.
    pub fn max_step_bonus(&self) -> f64 {
        self.max_step_bonus
    }
}
