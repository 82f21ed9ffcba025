//! Pipeline configuration: one TOML file with a section per component.
//! Relative paths resolve against the file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::decoder::{BeamConfig, BiasConfig};
use crate::error::{Error, Result};
use crate::eval::{EvalConfig, OverlapRule};
use crate::kws::{KwsConfig, Stage, StageSet};
use crate::posteriorgram::SynthConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub char_units: Option<PathBuf>,
    pub syllable_units: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub char_lm: Option<PathBuf>,
    pub syllable_lm: Option<PathBuf>,
    pub keywords: Option<PathBuf>,
    pub costs: Option<PathBuf>,
    pub char_confusion: Option<PathBuf>,
    pub syllable_confusion: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeamSection {
    pub beam_size: usize,
    pub nbest: usize,
    pub lm_weight: f64,
    pub token_min_logp: f64,
    pub bias_enabled: bool,
}

impl Default for BeamSection {
    fn default() -> Self {
        let b = BeamConfig::default();
        BeamSection {
            beam_size: b.beam_size,
            nbest: b.nbest,
            lm_weight: b.lm_weight,
            token_min_logp: b.token_min_logp,
            bias_enabled: b.bias_enabled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiasSection {
    pub alpha: f64,
    pub beta: f64,
    pub chunk_len: usize,
}

impl Default for BiasSection {
    fn default() -> Self {
        let b = BiasConfig::default();
        BiasSection {
            alpha: b.alpha,
            beta: b.beta,
            chunk_len: b.chunk_len,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KwsSection {
    pub fuzzy_threshold: f64,
    pub decision_threshold: f64,
    pub window_pad: usize,
    pub stages: Vec<String>,
    pub length_norm: bool,
}

impl Default for KwsSection {
    fn default() -> Self {
        let k = KwsConfig::default();
        KwsSection {
            fuzzy_threshold: k.fuzzy_threshold,
            decision_threshold: k.decision_threshold,
            window_pad: k.window_pad,
            stages: vec!["char".into(), "syllable".into(), "fuzzy".into()],
            length_norm: k.length_norm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub atwv_beta: f64,
    /// Seconds of speech for ATWV; taken from the posteriorgrams when unset.
    pub total_speech_s: Option<f64>,
    /// `"midpoint"` or a minimum fraction of the reference that must overlap.
    pub overlap: String,
    pub min_overlap: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            atwv_beta: EvalConfig::default().atwv_beta,
            total_speech_s: None,
            overlap: "midpoint".into(),
            min_overlap: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub frames_per_token: usize,
    pub blank_gap: usize,
    pub noise: f64,
    pub swap_prob: f64,
    pub syllable_swap_prob: f64,
    pub frame_period_s: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        let s = SynthConfig::default();
        SynthSection {
            frames_per_token: s.frames_per_token,
            blank_gap: s.blank_gap,
            noise: s.noise,
            swap_prob: s.swap_prob,
            syllable_swap_prob: s.swap_prob,
            frame_period_s: s.frame_period_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmSection {
    pub order: usize,
    pub discount: f64,
}

impl Default for LmSection {
    fn default() -> Self {
        LmSection {
            order: 4,
            discount: 0.75,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: Paths,
    pub beam: BeamSection,
    pub bias: BiasSection,
    pub kws: KwsSection,
    pub eval: EvalSection,
    pub synth: SynthSection,
    pub lm: LmSection,
}

fn parse_value(raw: &str) -> toml::Value {
    // bare words that are not TOML literals are taken as strings
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

impl PipelineConfig {
    /// Parses `text`, applies `section.key=value` overrides and resolves
    /// relative paths against `base`.
    pub fn parse(text: &str, overrides: &[String], base: Option<&Path>) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {item:?} is not key=value")))?;
            let mut parts: Vec<&str> = key.trim().split('.').collect();
            let leaf = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| Error::Config(format!("override {item:?} has no key")))?;
            let mut slot = &mut table;
            for p in parts {
                slot = slot
                    .entry(p)
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                    .as_table_mut()
                    .ok_or_else(|| Error::Config(format!("override {item:?}: {p} is not a section")))?;
            }
            slot.insert(leaf.to_string(), parse_value(raw.trim()));
        }
        let mut cfg: PipelineConfig = table.try_into().map_err(|e| Error::Config(format!("config: {e}")))?;
        if let Some(base) = base {
            cfg.resolve(base);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        PipelineConfig::parse(&text, overrides, path.parent())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is plain data")
    }

    fn resolve(&mut self, base: &Path) {
        let p = &mut self.paths;
        for path in [
            &mut p.char_units,
            &mut p.syllable_units,
            &mut p.lexicon,
            &mut p.char_lm,
            &mut p.syllable_lm,
            &mut p.keywords,
            &mut p.costs,
            &mut p.char_confusion,
            &mut p.syllable_confusion,
        ]
        .into_iter()
        .flatten()
        {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }

    fn validate(&self) -> Result<()> {
        self.stages()?;
        self.overlap()?;
        if self.beam.beam_size == 0 || self.beam.nbest == 0 {
            return Err(Error::Config("beam_size and nbest must be at least 1".into()));
        }
        if self.bias.chunk_len == 0 {
            return Err(Error::Config("chunk_len must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.kws.fuzzy_threshold) {
            return Err(Error::Config("fuzzy_threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }

    fn stages(&self) -> Result<StageSet> {
        let mut set = StageSet {
            char: false,
            syllable: false,
            fuzzy: false,
        };
        for s in &self.kws.stages {
            match s.parse::<Stage>().map_err(|_| Error::Config(format!("unknown stage {s:?}")))? {
                Stage::Char => set.char = true,
                Stage::Syllable => set.syllable = true,
                Stage::Fuzzy => set.fuzzy = true,
            }
        }
        Ok(set)
    }

    fn overlap(&self) -> Result<OverlapRule> {
        match self.eval.overlap.as_str() {
            "midpoint" => Ok(OverlapRule::Midpoint),
            "min_overlap" => Ok(OverlapRule::MinOverlap(self.eval.min_overlap)),
            other => Err(Error::Config(format!("unknown overlap rule {other:?}"))),
        }
    }

    pub fn beam_config(&self) -> BeamConfig {
        BeamConfig {
            beam_size: self.beam.beam_size,
            nbest: self.beam.nbest,
            lm_weight: self.beam.lm_weight,
            token_min_logp: self.beam.token_min_logp,
            bias_enabled: self.beam.bias_enabled,
        }
    }

    pub fn bias_config(&self) -> BiasConfig {
        BiasConfig {
            alpha: self.bias.alpha,
            beta: self.bias.beta,
            chunk_len: self.bias.chunk_len,
        }
    }

    pub fn kws_config(&self) -> KwsConfig {
        KwsConfig {
            fuzzy_threshold: self.kws.fuzzy_threshold,
            decision_threshold: self.kws.decision_threshold,
            window_pad: self.kws.window_pad,
            stages: self.stages().expect("validated"),
            length_norm: self.kws.length_norm,
        }
    }

    /// `total_speech_s` falls back to `measured` when the file leaves it unset.
    pub fn eval_config(&self, measured: f64) -> EvalConfig {
        EvalConfig {
            atwv_beta: self.eval.atwv_beta,
            total_speech_s: self.eval.total_speech_s.unwrap_or(measured),
            overlap: self.overlap().expect("validated"),
        }
    }

    /// Synthesis settings for the character and syllable streams; the
    /// syllable stream gets its own seed and swap rate.
    pub fn synth_configs(&self, utt_seed: u64) -> (SynthConfig, SynthConfig) {
        let s = &self.synth;
        let base = SynthConfig {
            frames_per_token: s.frames_per_token,
            blank_gap: s.blank_gap,
            noise: s.noise,
            confusion: None,
            swap_prob: s.swap_prob,
            frame_period_s: s.frame_period_s,
            seed: utt_seed,
        };
        let syll = SynthConfig {
            swap_prob: s.syllable_swap_prob,
            seed: utt_seed ^ 0x9E37_79B9_7F4A_7C15,
            ..base.clone()
        };
        (base, syll)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = PipelineConfig::parse("", &[], None).unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        assert_eq!(cfg.beam_config(), BeamConfig::default());
        assert_eq!(cfg.bias_config(), BiasConfig::default());
        assert_eq!(cfg.kws_config(), KwsConfig::default());
    }

    #[test]
    fn overrides_apply() {
        let text = "[beam]\nbeam_size = 4\n";
        let sets = vec![
            "beam.beam_size=20".to_string(),
            "kws.stages=[\"char\"]".to_string(),
            "eval.overlap=min_overlap".to_string(),
            "seed=3".to_string(),
        ];
        let cfg = PipelineConfig::parse(text, &sets, None).unwrap();
        assert_eq!(cfg.beam.beam_size, 20);
        assert_eq!(cfg.seed, 3);
        assert!(!cfg.kws_config().stages.fuzzy);
        assert_eq!(cfg.eval_config(1.0).overlap, OverlapRule::MinOverlap(0.5));
    }

    #[test]
    fn relative_paths_resolve_against_base() {
        let cfg = PipelineConfig::parse("[paths]\nlexicon = \"lex.tsv\"\nkeywords = \"/abs/kw.tsv\"\n", &[], Some(Path::new("/data"))).unwrap();
        assert_eq!(cfg.paths.lexicon.unwrap(), PathBuf::from("/data/lex.tsv"));
        assert_eq!(cfg.paths.keywords.unwrap(), PathBuf::from("/abs/kw.tsv"));
    }

    #[test]
    fn bad_config_is_rejected() {
        for text in [
            "[beam]\nbogus = 1\n",
            "[kws]\nstages = [\"phoneme\"]\n",
            "[kws]\nfuzzy_threshold = 2.0\n",
            "[beam]\nbeam_size = 0\n",
            "[eval]\noverlap = \"iou\"\n",
        ] {
            assert!(matches!(PipelineConfig::parse(text, &[], None), Err(Error::Config(_))), "{text}");
        }
        assert!(PipelineConfig::parse("", &["nokey".into()], None).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = PipelineConfig::parse("seed = 9\n[synth]\nnoise = 0.3\n", &[], None).unwrap();
        assert_eq!(PipelineConfig::parse(&cfg.to_toml(), &[], None).unwrap(), cfg);
    }
}
