//! CTC prefix beam search with n-gram shallow fusion and keyword biasing.

mod search;
mod trie;

pub use search::{prefix_beam_search, BeamConfig, Hypothesis, NBestEntry, NBestList};
pub use trie::{build_bias_trie, segment, BiasConfig, Chunk, KeywordTrie, TRIE_ROOT};

use crate::lm::{LmState, NGramLm};
use crate::units::UnitSet;

/// An n-gram model addressed by the unit ids of one inventory.
#[derive(Debug, Clone)]
pub struct UnitLm<'a> {
    lm: &'a NGramLm,
    map: Vec<u32>,
    unit_set_id: String,
}

impl<'a> UnitLm<'a> {
    pub fn new(lm: &'a NGramLm, units: &UnitSet) -> Self {
        let map = units.units().iter().map(|u| lm.token_id(u)).collect();
        UnitLm {
            lm,
            map,
            unit_set_id: units.id().to_string(),
        }
    }

    pub fn lm(&self) -> &NGramLm {
        self.lm
    }

    pub fn unit_set_id(&self) -> &str {
        &self.unit_set_id
    }

    pub fn begin_state(&self) -> LmState {
        self.lm.begin_state()
    }

    #[inline]
    pub fn score_token(&self, state: &LmState, unit: u32) -> (f64, LmState) {
        let tok = self.map.get(unit as usize).copied().unwrap_or(self.lm.unk_id());
        self.lm.score_token(state, tok)
    }

    /// Upper bound on the log10 probability of any unit after `state`.
    pub fn max_log10_prob(&self, state: &LmState) -> f64 {
        self.lm.max_log10_prob(state)
    }

    pub fn score_sequence(&self, units: &[u32], with_boundaries: bool) -> f64 {
        let ids: Vec<u32> = units
            .iter()
            .map(|&u| self.map.get(u as usize).copied().unwrap_or(self.lm.unk_id()))
            .collect();
        self.lm.score_sequence(&ids, with_boundaries)
    }
}
