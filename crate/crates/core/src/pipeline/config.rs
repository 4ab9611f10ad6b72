//! Run configuration, read from TOML.
//!
//! Relative paths resolve against the directory holding the config file, so
//! a run directory can be moved or copied without edits.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::corpus::{normalize_language, Track};
use crate::inference::VoteConfig;
use crate::mutation::{default_reps, MutationDistribution, PRINTED_MUTATION_PROBS};
use crate::pairgen::PairGenConfig;
use crate::prefloss::{PrefConfig, PrefMethod};
use crate::scorer::{TrainConfig, DEFAULT_FEATURE_DIM};
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sp,
    Crc,
    Dpo,
    Simpo,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Sp => "sp",
            Method::Crc => "crc",
            Method::Dpo => "dpo",
            Method::Simpo => "simpo",
        }
    }

    pub fn preference(self) -> Option<PrefMethod> {
        match self {
            Method::Dpo => Some(PrefMethod::Dpo),
            Method::Simpo => Some(PrefMethod::Simpo),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sp" => Ok(Method::Sp),
            "crc" => Ok(Method::Crc),
            "dpo" => Ok(Method::Dpo),
            "simpo" => Ok(Method::Simpo),
            other => Err(format!("unknown method `{other}` (expected sp, crc, dpo or simpo)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub track: Track,
    #[serde(default = "default_language")]
    pub language: String,
    pub method: Method,
    #[serde(default)]
    pub seed: u64,
    pub train_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_path: Option<PathBuf>,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    /// SP checkpoint that DPO/SimPO start from (and DPO keeps as reference).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sft_checkpoint: Option<PathBuf>,
}

fn default_language() -> String {
    "eng".into()
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairGenSection {
    /// Defaults to 3000 (Track A) or 6000 (Track B).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cap_per_label: Option<usize>,
    /// Fraction of the SP set trained alongside CRC (1.0 = all of it).
    pub sp_mix_ratio: f64,
}

impl Default for PairGenSection {
    fn default() -> Self {
        Self {
            cap_per_label: None,
            sp_mix_ratio: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MutationSection {
    /// Defaults to 5 (Track A) or 15 (Track B).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<[f64; 5]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScorerSection {
    pub feature_dim: usize,
    /// Probability of corrupting each SP output at evaluation.
    pub fault_rate: f64,
}

impl Default for ScorerSection {
    fn default() -> Self {
        Self {
            feature_dim: DEFAULT_FEATURE_DIM,
            fault_rate: 0.0,
        }
    }
}

/// Preference-tuning overrides; unset optimizer fields fall back to `[train]`
/// and unset β / learning rate to the method defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrefSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    pub gamma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
}

impl Default for PrefSection {
    fn default() -> Self {
        Self {
            beta: None,
            gamma: PrefConfig::SIMPO_GAMMA,
            learning_rate: None,
            epochs: None,
            batch_size: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VoteSection {
    /// Defaults to 3 (Track A) or 7 (Track B).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

pub const TOY_FEATURE_DIM: usize = 4096;
pub const TOY_SFT_LR: f64 = 0.2;
pub const TOY_DPO_LR: f64 = 1e-3;
pub const TOY_SIMPO_LR: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    #[serde(default)]
    pub pairgen: PairGenSection,
    #[serde(default)]
    pub mutation: MutationSection,
    #[serde(default)]
    pub scorer: ScorerSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub pref: PrefSection,
    #[serde(default)]
    pub vote: VoteSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let mut c: RunConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        c.run.language = normalize_language(&c.run.language);
        Ok(c)
    }

    /// Settings sized for the synthetic toy corpus. The default learning
    /// rates barely move a small scorer in a few hundred steps.
    /// Paths are relative: `train.csv`, `test.csv`, `out/`.
    pub fn toy(track: Track, method: Method, seed: u64) -> Self {
        let mut train = TrainConfig::sft();
        train.learning_rate = TOY_SFT_LR;
        train.batch_size = 4;
        let (pref_lr, pref_batch) = match method {
            Method::Simpo => (Some(TOY_SIMPO_LR), Some(32)),
            Method::Dpo => (Some(TOY_DPO_LR), Some(32)),
            _ => (None, None),
        };
        Self {
            run: RunSection {
                track,
                language: "eng".into(),
                method,
                seed,
                train_path: "train.csv".into(),
                eval_path: Some("test.csv".into()),
                out_dir: "out".into(),
                sft_checkpoint: method.preference().map(|_| PathBuf::from("out/sp.ckpt")),
            },
            pairgen: PairGenSection {
                cap_per_label: (method == Method::Crc).then_some(400),
                sp_mix_ratio: 1.0,
            },
            mutation: MutationSection::default(),
            scorer: ScorerSection {
                feature_dim: TOY_FEATURE_DIM,
                fault_rate: 0.0,
            },
            train,
            pref: PrefSection {
                learning_rate: pref_lr,
                batch_size: pref_batch,
                ..PrefSection::default()
            },
            vote: VoteSection::default(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.run.method.preference().is_some() && self.run.sft_checkpoint.is_none() {
            return bad(format!("method {} requires run.sft_checkpoint", self.run.method));
        }
        if self.scorer.feature_dim < 2 {
            return bad("scorer.feature_dim must be at least 2".into());
        }
        if !(0.0..=1.0).contains(&self.scorer.fault_rate) {
            return bad("scorer.fault_rate must lie in [0, 1]".into());
        }
        if !(self.pairgen.sp_mix_ratio.is_finite() && self.pairgen.sp_mix_ratio >= 0.0) {
            return bad("pairgen.sp_mix_ratio must be non-negative".into());
        }
        if self.pairgen.cap_per_label == Some(0) {
            return bad("pairgen.cap_per_label must be positive".into());
        }
        if self.mutation.reps == Some(0) {
            return bad("mutation.reps must be positive".into());
        }
        if self.vote.n == Some(0) {
            return bad("vote.n must be positive".into());
        }
        self.mutation_distribution()?;
        self.sft_config()
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        if let Some(m) = self.run.method.preference() {
            self.pref_config(m)
                .validate()
                .map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn track(&self) -> Track {
        self.run.track
    }

    pub fn pairgen_config(&self) -> PairGenConfig {
        let mut c = PairGenConfig::for_track(self.track(), derive_seed(self.run.seed, &["pairgen"]));
        if let Some(cap) = self.pairgen.cap_per_label {
            c.cap_per_label = cap;
        }
        c
    }

    pub fn mutation_reps(&self) -> usize {
        self.mutation.reps.unwrap_or_else(|| default_reps(self.track()))
    }

    pub fn mutation_distribution(&self) -> Result<MutationDistribution, PipelineError> {
        MutationDistribution::new(self.mutation.probabilities.unwrap_or(PRINTED_MUTATION_PROBS))
            .map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn mutation_seed(&self) -> u64 {
        derive_seed(self.run.seed, &["mutation"])
    }

    pub fn sft_config(&self) -> TrainConfig {
        TrainConfig {
            seed: derive_seed(self.run.seed, &["train"]),
            ..self.train.clone()
        }
    }

    pub fn pref_config(&self, method: PrefMethod) -> PrefConfig {
        let defaults = PrefConfig::for_method(method);
        let p = &self.pref;
        PrefConfig {
            beta: p.beta.unwrap_or(defaults.beta),
            gamma: p.gamma,
            train: TrainConfig {
                learning_rate: p.learning_rate.unwrap_or(defaults.train.learning_rate),
                epochs: p.epochs.unwrap_or(self.train.epochs),
                batch_size: p.batch_size.unwrap_or(self.train.batch_size),
                seed: derive_seed(self.run.seed, &["pref"]),
                ..self.train.clone()
            },
        }
    }

    pub fn vote_config(&self) -> VoteConfig {
        let mut v = VoteConfig::for_track(self.track(), derive_seed(self.run.seed, &["vote"]));
        if let Some(n) = self.vote.n {
            v.n = n;
        }
        v
    }

    pub fn fault_seed(&self) -> u64 {
        derive_seed(self.run.seed, &["fault"])
    }
}

/// A config together with the directory its relative paths resolve against.
#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub config: RunConfig,
    pub base: PathBuf,
}

impl Run {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config = RunConfig::from_toml(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { config, base })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.config.run.out_dir)
    }

    pub fn out_file(&self, name: &str) -> PathBuf {
        self.out_dir().join(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[run]
track = "A"
method = "sp"
train_path = "train.csv"
"#;

    #[test]
    fn defaults_follow_track() {
        let c = RunConfig::from_toml(MINIMAL).unwrap();
        c.validate().unwrap();
        assert_eq!(c.pairgen_config().cap_per_label, 3000);
        assert_eq!(c.mutation_reps(), 5);
        assert_eq!(c.vote_config().n, 3);
        assert_eq!(c.sft_config().learning_rate, 4e-4);
        assert_eq!(c.sft_config().batch_size, 128);
        assert_eq!(c.run.language, "eng");

        let b = RunConfig::from_toml(&MINIMAL.replace("\"A\"", "\"B\"")).unwrap();
        assert_eq!(b.pairgen_config().cap_per_label, 6000);
        assert_eq!(b.mutation_reps(), 15);
        assert_eq!(b.vote_config().n, 7);
    }

    #[test]
    fn preference_defaults_and_overrides() {
        let c = RunConfig::from_toml(&MINIMAL.replace("\"sp\"", "\"dpo\"")).unwrap();
        assert!(matches!(c.validate(), Err(PipelineError::Config(_))));
        let d = c.pref_config(PrefMethod::Dpo);
        assert_eq!((d.beta, d.train.learning_rate), (0.1, 5e-6));
        let s = c.pref_config(PrefMethod::Simpo);
        assert_eq!((s.beta, s.gamma, s.train.learning_rate), (2.0, 0.5, 1e-6));

        let text = format!(
            "{MINIMAL}sft_checkpoint = \"sp.ckpt\"\n[pref]\nbeta = 0.3\nlearning_rate = 0.01\nbatch_size = 4\n"
        )
        .replace("\"sp\"", "\"dpo\"");
        let c = RunConfig::from_toml(&text).unwrap();
        c.validate().unwrap();
        let d = c.pref_config(PrefMethod::Dpo);
        assert_eq!((d.beta, d.train.learning_rate, d.train.batch_size), (0.3, 0.01, 4));
        assert_eq!(d.train.epochs, 3);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(RunConfig::from_toml("[run]\ntrack = \"C\"\nmethod = \"sp\"\ntrain_path = \"x\"").is_err());
        assert!(RunConfig::from_toml(&format!("{MINIMAL}bogus = 1\n")).is_err());
        let c = RunConfig::from_toml(&format!("{MINIMAL}[vote]\nn = 0\n")).unwrap();
        assert!(c.validate().is_err());
        let c = RunConfig::from_toml(&format!("{MINIMAL}[train]\nbatch_size = 0\n")).unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let c = RunConfig::from_toml(&format!("{MINIMAL}[train]\nlearning_rate = 0.5\n")).unwrap();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert_eq!(c.train.batch_size, 128);
    }

    #[test]
    fn toy_configs_validate() {
        for track in [Track::A, Track::B] {
            for m in [Method::Sp, Method::Crc, Method::Dpo, Method::Simpo] {
                let c = RunConfig::toy(track, m, 1);
                c.validate().unwrap();
                assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
            }
        }
    }

    #[test]
    fn seeds_are_derived_per_stage() {
        let c = RunConfig::from_toml(MINIMAL).unwrap();
        let seeds = [
            c.pairgen_config().seed,
            c.mutation_seed(),
            c.sft_config().seed,
            c.vote_config().seed,
            c.fault_seed(),
        ];
        let unique: std::collections::BTreeSet<_> = seeds.iter().collect();
        assert_eq!(unique.len(), seeds.len());
    }
}
