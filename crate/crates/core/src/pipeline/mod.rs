//! Batch stages: prepare → train → eval.
//!
//! Every stage reads the same [`RunConfig`] and embeds it verbatim in the
//! artifacts it writes. Output names inside `run.out_dir`:
//!
//! | stage   | files                                                        |
//! |---------|--------------------------------------------------------------|
//! | prepare | `sp.jsonl`, `crc.jsonl` (crc), `pref.jsonl` (dpo, simpo)     |
//! | train   | `<method>.ckpt`, `<method>_loss.csv` or `<method>_curve.csv`; crc also writes `crc_sp.ckpt` |
//! | eval    | `<method>_predictions.jsonl`, `<method>_report.json`, `<method>_report.txt` |

pub mod artifact;
pub mod config;

use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use artifact::{ArtifactHeader, SCHEMA_VERSION};
pub use config::{Method, Run, RunConfig};

use crate::corpus::{load_dataset, CorpusError, Dataset, Track};
use crate::inference::{crc_infer, sp_infer, InferenceError, PredictionRecord};
use crate::metrics::{
    error_breakdown, format_breakdown, format_table, parse_failure_rate, track_report, ErrorBreakdown, FailureRate,
    MetricError, MetricReport,
};
use crate::mutation::{build_preference_dataset, MutationError, PreferencePair};
use crate::pairgen::{build_crc_training_set, PairGenError};
use crate::prefloss::{train_preference, PrefExample, PrefStep};
use crate::scorer::checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
use crate::scorer::{train, Example, FaultInjector, ScorerError, SlotScorer, StepLog};
use crate::templates::{render_sp, PromptInstance, PromptTask};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Data(_) => 3,
            PipelineError::Numeric(_) => 4,
        }
    }
}

impl From<ScorerError> for PipelineError {
    fn from(e: ScorerError) -> Self {
        match e {
            ScorerError::NonFiniteLoss { .. } => PipelineError::Numeric(e.to_string()),
            ScorerError::InvalidConfig(_) => PipelineError::Config(e.to_string()),
            _ => PipelineError::Data(e.to_string()),
        }
    }
}

impl From<InferenceError> for PipelineError {
    fn from(e: InferenceError) -> Self {
        match e {
            InferenceError::Scorer(s) => s.into(),
            InferenceError::ZeroVotes => PipelineError::Config(e.to_string()),
            _ => PipelineError::Data(e.to_string()),
        }
    }
}

macro_rules! data_error {
    ($($t:ty),*) => {$(
        impl From<$t> for PipelineError {
            fn from(e: $t) -> Self {
                PipelineError::Data(e.to_string())
            }
        }
    )*};
}

data_error!(CorpusError, PairGenError, MutationError, MetricError, CheckpointError);

pub const SP_INSTANCES: &str = "sp.jsonl";
pub const CRC_INSTANCES: &str = "crc.jsonl";
pub const PREF_PAIRS: &str = "pref.jsonl";

const KIND_SP: &str = "sp_instances";
const KIND_CRC: &str = "crc_instances";
const KIND_PREF: &str = "preference_pairs";
const KIND_PREDICTIONS: &str = "predictions";
pub const KIND_LOSS: &str = "loss_curve";
pub const KIND_PREF_CURVE: &str = "preference_curve";

impl Run {
    fn config_value(&self) -> serde_json::Value {
        serde_json::to_value(&self.config).expect("config serializes")
    }

    fn header(&self, kind: &str) -> ArtifactHeader {
        ArtifactHeader::new(kind, self.config_value())
    }

    fn load_split(&self, path: &Path) -> Result<Dataset, PipelineError> {
        let c = &self.config.run;
        Ok(load_dataset(self.resolve(path), c.track, &c.language)?)
    }

    fn train_set(&self) -> Result<Dataset, PipelineError> {
        self.load_split(&self.config.run.train_path.clone())
    }

    fn require(&self, name: &str) -> Result<PathBuf, PipelineError> {
        let p = self.out_file(name);
        if !p.exists() {
            return Err(PipelineError::Data(format!(
                "missing artifact {}; run the earlier stage first",
                p.display()
            )));
        }
        Ok(p)
    }

    fn checkpoint_meta(&self, extra: serde_json::Value) -> serde_json::Value {
        serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "kind": "checkpoint",
            "config": self.config_value(),
            "train": extra,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PrepareSummary {
    pub sp_instances: usize,
    pub crc_instances: Option<usize>,
    pub preference_pairs: Option<usize>,
}

pub fn cmd_prepare(run: &Run) -> Result<PrepareSummary, PipelineError> {
    let cfg = &run.config;
    cfg.validate()?;
    let data = run.train_set()?;
    std::fs::create_dir_all(run.out_dir()).map_err(|e| PipelineError::Data(e.to_string()))?;

    let sp: Vec<PromptInstance> = data.samples.iter().map(render_sp).collect();
    artifact::write_jsonl(&run.out_file(SP_INSTANCES), &run.header(KIND_SP), &sp)?;
    let mut summary = PrepareSummary {
        sp_instances: sp.len(),
        crc_instances: None,
        preference_pairs: None,
    };
    match cfg.run.method {
        Method::Sp => {}
        Method::Crc => {
            let crc = build_crc_training_set(&data, &cfg.pairgen_config())?;
            artifact::write_jsonl(&run.out_file(CRC_INSTANCES), &run.header(KIND_CRC), &crc)?;
            summary.crc_instances = Some(crc.len());
        }
        Method::Dpo | Method::Simpo => {
            let pairs = build_preference_dataset(
                &data.samples,
                data.track,
                cfg.mutation_reps(),
                &cfg.mutation_distribution()?,
                cfg.mutation_seed(),
            )?;
            artifact::write_jsonl(&run.out_file(PREF_PAIRS), &run.header(KIND_PREF), &pairs)?;
            summary.preference_pairs = Some(pairs.len());
        }
    }
    info!("prepared {summary:?}");
    Ok(summary)
}

/// One row of an SFT loss log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub head: String,
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
}

fn loss_rows(head: &str, steps: &[StepLog]) -> Vec<LossRow> {
    steps
        .iter()
        .map(|s| LossRow {
            head: head.to_string(),
            step: s.step,
            loss: s.loss,
            lr: s.lr,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub checkpoints: Vec<PathBuf>,
    /// Mean training NLL (SFT) or final mean preference loss.
    pub final_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_margin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_margin: Option<f64>,
}

fn examples(model: &SlotScorer, instances: &[PromptInstance]) -> Result<Vec<Example>, PipelineError> {
    Ok(instances
        .iter()
        .map(|i| Example::from_instance(model, i))
        .collect::<Result<_, _>>()?)
}

/// First `round(ratio · n)` items, cycling when the ratio exceeds 1.
fn mix<T: Clone>(items: &[T], ratio: f64) -> Vec<T> {
    let want = (ratio * items.len() as f64).round() as usize;
    items
        .iter()
        .cycle()
        .take(if items.is_empty() { 0 } else { want })
        .cloned()
        .collect()
}

pub fn cmd_train(run: &Run) -> Result<TrainSummary, PipelineError> {
    let cfg = &run.config;
    cfg.validate()?;
    let track = cfg.track();
    let dim = cfg.scorer.feature_dim;
    let method = cfg.run.method;
    let ckpt = run.out_file(&format!("{method}.ckpt"));

    if let Some(pref_method) = method.preference() {
        let sft_path = run.resolve(cfg.run.sft_checkpoint.as_ref().expect("validated"));
        if !sft_path.exists() {
            return Err(PipelineError::Data(format!(
                "SFT checkpoint {} does not exist",
                sft_path.display()
            )));
        }
        let (policy, _) = load_checkpoint(&sft_path)?;
        if policy.task() != PromptTask::sp(track) {
            return Err(PipelineError::Data(format!(
                "SFT checkpoint holds a {} scorer, expected {}",
                policy.task(),
                PromptTask::sp(track)
            )));
        }
        let (_, pairs): (_, Vec<PreferencePair>) = artifact::read_jsonl(&run.require(PREF_PAIRS)?, KIND_PREF)?;
        let prepared: Vec<PrefExample> = pairs
            .iter()
            .map(|p| PrefExample::from_pair(&policy, p))
            .collect::<Result<_, _>>()?;
        let pref_cfg = cfg.pref_config(pref_method);
        let (tuned, report) = train_preference(&policy, &prepared, pref_method, &pref_cfg)?;
        let last = *report.curve.last().expect("step 0 is always logged");
        save_checkpoint(
            &ckpt,
            &tuned,
            &run.checkpoint_meta(serde_json::json!({
                "final_loss": last.loss,
                "initial_margin": report.initial_margin(),
                "final_margin": report.final_margin(),
                "beta": pref_cfg.beta,
                "gamma": pref_cfg.gamma,
            })),
        )?;
        artifact::write_csv(
            &run.out_file(&format!("{method}_curve.csv")),
            &run.header(KIND_PREF_CURVE),
            &report.curve,
        )?;
        info!(
            "{method}: margin {:.4} -> {:.4}",
            report.initial_margin(),
            report.final_margin()
        );
        return Ok(TrainSummary {
            checkpoints: vec![ckpt],
            final_loss: last.loss,
            initial_margin: Some(report.initial_margin()),
            final_margin: Some(report.final_margin()),
        });
    }

    let data = run.train_set()?;
    let (_, sp_instances): (_, Vec<PromptInstance>) = artifact::read_jsonl(&run.require(SP_INSTANCES)?, KIND_SP)?;
    let train_cfg = cfg.sft_config();
    let mut sp_model = SlotScorer::sp(track, &data.label_set, dim);
    let mut rows = Vec::new();
    let mut checkpoints = Vec::new();

    let final_loss = match method {
        Method::Sp => {
            let data = examples(&sp_model, &sp_instances)?;
            let report = train(&mut sp_model, &data, &train_cfg)?;
            save_checkpoint(
                &ckpt,
                &sp_model,
                &run.checkpoint_meta(serde_json::json!({"final_loss": report.final_loss})),
            )?;
            checkpoints.push(ckpt);
            rows.extend(loss_rows("sp", &report.steps));
            report.final_loss
        }
        Method::Crc => {
            let (_, crc_instances): (_, Vec<PromptInstance>) =
                artifact::read_jsonl(&run.require(CRC_INSTANCES)?, KIND_CRC)?;
            let mut crc_model = SlotScorer::crc(track, dim);
            let data = examples(&crc_model, &crc_instances)?;
            let report = train(&mut crc_model, &data, &train_cfg)?;
            save_checkpoint(
                &ckpt,
                &crc_model,
                &run.checkpoint_meta(serde_json::json!({"final_loss": report.final_loss})),
            )?;
            checkpoints.push(ckpt);
            rows.extend(loss_rows("crc", &report.steps));

            let mixed = mix(&sp_instances, cfg.pairgen.sp_mix_ratio);
            if !mixed.is_empty() {
                let data = examples(&sp_model, &mixed)?;
                let sp_report = train(&mut sp_model, &data, &train_cfg)?;
                let sp_ckpt = run.out_file("crc_sp.ckpt");
                save_checkpoint(
                    &sp_ckpt,
                    &sp_model,
                    &run.checkpoint_meta(serde_json::json!({"final_loss": sp_report.final_loss})),
                )?;
                checkpoints.push(sp_ckpt);
                rows.extend(loss_rows("sp", &sp_report.steps));
            }
            report.final_loss
        }
        Method::Dpo | Method::Simpo => unreachable!("handled above"),
    };
    artifact::write_csv(
        &run.out_file(&format!("{method}_loss.csv")),
        &run.header(KIND_LOSS),
        &rows,
    )?;
    info!("{method}: final training loss {final_loss:.5}");
    Ok(TrainSummary {
        checkpoints,
        final_loss,
        initial_margin: None,
        final_margin: None,
    })
}

/// English test-set scores reported for the 8B-parameter systems, kept as
/// context next to toy results. Not an acceptance target.
pub fn reference_scores(track: Track, method: Method) -> Option<(f64, f64)> {
    Some(match (track, method) {
        (Track::A, Method::Sp) => (0.828, 0.808),
        (Track::A, Method::Crc) => (0.819, 0.802),
        (Track::A, Method::Dpo) => (0.827, 0.806),
        (Track::A, Method::Simpo) => (0.748, 0.741),
        (Track::B, Method::Sp) => (0.845, 0.823),
        (Track::B, Method::Crc) => (0.828, 0.805),
        (Track::B, Method::Dpo) => (0.846, 0.824),
        (Track::B, Method::Simpo) => (0.770, 0.741),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub kind: String,
    pub config: serde_json::Value,
    pub method: Method,
    pub metrics: MetricReport,
    pub parse_failures: FailureRate,
    pub errors: ErrorBreakdown,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<serde_json::Value>,
}

pub fn cmd_eval(run: &Run) -> Result<EvalReport, PipelineError> {
    let cfg = &run.config;
    cfg.validate()?;
    let method = cfg.run.method;
    let eval_path = cfg
        .run
        .eval_path
        .clone()
        .ok_or_else(|| PipelineError::Config("run.eval_path is required for eval".into()))?;
    let eval = run.load_split(&eval_path)?;
    let (model, _) = load_checkpoint(run.require(&format!("{method}.ckpt"))?)?;

    let (preds, records): (Vec<_>, Vec<_>) = if method == Method::Crc {
        let train_set = run.train_set()?;
        let out = crc_infer(
            &model,
            &eval.samples,
            &train_set.samples,
            &eval.label_set,
            &cfg.vote_config(),
        )?;
        out.iter()
            .map(|p| (p.prediction.clone(), PredictionRecord::from_crc(p)))
            .unzip()
    } else {
        let mut preds = sp_infer(&model, &eval.samples)?;
        if cfg.scorer.fault_rate > 0.0 {
            let mut inj = FaultInjector::new(cfg.scorer.fault_rate, cfg.fault_seed());
            let label_set = crate::corpus::LabelSet::new(&cfg.run.language, model.emotions())?;
            preds = preds
                .into_iter()
                .map(|p| inj.apply(p, &label_set, cfg.track()))
                .collect();
        }
        let records = preds
            .iter()
            .map(|p| PredictionRecord::from_sp(p, method.name()))
            .collect();
        (preds.clone(), records)
    };
    artifact::write_jsonl(
        &run.out_file(&format!("{method}_predictions.jsonl")),
        &run.header(KIND_PREDICTIONS),
        &records,
    )?;

    let metrics = track_report(cfg.track(), &preds, &eval.samples)?;
    let report = EvalReport {
        schema_version: SCHEMA_VERSION,
        kind: "report".into(),
        config: run.config_value(),
        method,
        parse_failures: parse_failure_rate(&preds),
        errors: error_breakdown(&preds, &eval.samples, cfg.track())?,
        reference: (cfg.run.language == "eng")
            .then(|| reference_scores(cfg.track(), method))
            .flatten()
            .map(|(macro_, micro)| {
                serde_json::json!({"paper_macro": macro_, "paper_micro": micro, "scale": "8B LLM, English test set"})
            }),
        metrics,
    };
    artifact::write_json(&run.out_file(&format!("{method}_report.json")), &report)?;
    let text = format!(
        "{}\nparse failures: {}/{}\n{}",
        format_table(&[(&method.name().to_uppercase(), &report.metrics)]),
        report.parse_failures.malformed,
        report.parse_failures.total,
        format_breakdown(&report.errors)
    );
    std::fs::write(run.out_file(&format!("{method}_report.txt")), text)
        .map_err(|e| PipelineError::Data(e.to_string()))?;
    info!(
        "{method}: paper_macro {:.4}, paper_micro {:.4}",
        report.metrics.paper_macro, report.metrics.paper_micro
    );
    Ok(report)
}

/// Reads a predictions artifact back.
pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>, PipelineError> {
    Ok(artifact::read_jsonl(path, KIND_PREDICTIONS)?.1)
}

/// Reads a preference curve back.
pub fn read_pref_curve(path: &Path) -> Result<Vec<PrefStep>, PipelineError> {
    Ok(artifact::read_csv(path, KIND_PREF_CURVE)?.1)
}
