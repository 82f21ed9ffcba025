//! Keyword spotting over CTC posteriorgrams.
//!
//! The pipeline runs in two halves. The recognition half turns a
//! [`Posteriorgram`](posteriorgram::Posteriorgram) into N-best hypotheses with
//! a CTC prefix beam search that fuses an n-gram language model and awards
//! keyword-biasing bonuses from an Aho-Corasick trie. The detection half
//! searches those hypotheses for keywords (exact character matches, exact
//! syllable matches and pinyin-distance fuzzy matches), scores every candidate
//! with the CTC forward algorithm on its own time window and length-normalizes
//! the result. [`eval`] turns hit lists into F1 and ATWV.
//!
//! No acoustic model ships with the crate. [`posteriorgram::synth_generate`]
//! produces controlled posteriorgrams from transcripts, and the binary/JSON
//! readers accept posteriorgrams produced elsewhere.

pub mod ablation;
pub mod config;
pub mod corpus;
pub mod decoder;
pub mod error;
pub mod eval;
pub mod kws;
pub mod lm;
pub mod logmath;
pub mod phonetics;
pub mod pipeline;
pub mod posteriorgram;
pub mod units;

pub use error::{Error, Result};
