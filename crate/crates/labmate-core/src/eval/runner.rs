//! End-to-end evaluation: prompt → backend → parse → score, per
//! (scenario, backend, variant) cell, aggregated over stratified folds.
//!
//! The mock backend needs no training phase, so folds differ only in test
//! membership; transport and parse failures are tallied per cell and
//! scored as incorrect rather than aborting the run.

use std::io::BufRead;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::perception::{
    distance_matrix, read_dataset, IngestOptions, Scenario, Scene, TruthLabels,
};
use crate::reasoning::{
    build_prompt, query_backend, BackendConfig, PromptVariant, ReasoningError,
};
use crate::rules::{JudgmentSource, RuleConfig, SceneJudgment};
use crate::seeding;

use super::{aggregate_folds, joint_accuracy, kfold_split, EvalError, FoldStats};

/// A labelled scene ready for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub scene: Scene,
    pub truth: TruthLabels,
    pub scenario: Scenario,
}

impl DatasetRecord {
    pub fn from_scene(index: usize, scene: Scene) -> Result<DatasetRecord, EvalError> {
        let truth = scene.truth.ok_or_else(|| EvalError::MissingTruth {
            index,
            scene_id: scene.scene_id.clone(),
        })?;
        let scenario = scene.scenario;
        Ok(DatasetRecord { scene, truth, scenario })
    }

    /// Stratum key: scenario crossed with the truth class.
    fn stratum(&self) -> String {
        let class = match (self.truth.obstruction, self.truth.interaction) {
            (true, true) => "obstruct_interact",
            (true, false) => "obstruct_only",
            _ => "neither",
        };
        format!("{}/{}", self.scenario, class)
    }
}

/// Read a JSONL dataset file into evaluation records.
pub fn load_dataset(path: &Path, opts: &IngestOptions) -> Result<Vec<DatasetRecord>, EvalError> {
    let file = std::fs::File::open(path)?;
    let scenes = read_dataset(std::io::BufReader::new(file), opts)?;
    scenes
        .into_iter()
        .enumerate()
        .map(|(i, s)| DatasetRecord::from_scene(i, s))
        .collect()
}

/// Read records from an in-memory reader (tests, pipes).
pub fn load_dataset_reader<R: BufRead>(
    reader: R,
    opts: &IngestOptions,
) -> Result<Vec<DatasetRecord>, EvalError> {
    let scenes = read_dataset(reader, opts)?;
    scenes
        .into_iter()
        .enumerate()
        .map(|(i, s)| DatasetRecord::from_scene(i, s))
        .collect()
}

/// One (scenario, backend, variant) result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub scenario: Scenario,
    pub backend: String,
    pub variant: PromptVariant,
    pub n_records: usize,
    #[serde(flatten)]
    pub stats: FoldStats,
    /// Fraction of test records whose backend output failed to parse (or
    /// whose transport failed); these are scored as incorrect.
    pub parse_failure_rate: f64,
    /// Fraction of parsed predictions claiming interaction without
    /// obstruction.
    pub inconsistent_prediction_rate: f64,
}

/// Signed rounded-mean difference between two cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDelta {
    pub scenario: Scenario,
    pub kind: String,
    pub minuend: String,
    pub subtrahend: String,
    pub delta: i64,
}

/// Versioned evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub seed: u64,
    pub folds: usize,
    pub cells: Vec<EvalCell>,
    pub deltas: Vec<ReportDelta>,
}

impl EvalReport {
    pub const SCHEMA_VERSION: u32 = 1;

    pub fn cell(
        &self,
        scenario: Scenario,
        backend: &str,
        variant: PromptVariant,
    ) -> Option<&EvalCell> {
        self.cells
            .iter()
            .find(|c| c.scenario == scenario && c.backend == backend && c.variant == variant)
    }
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub folds: usize,
    pub seed: u64,
    /// Worker threads; `None` uses the global default (logical cores).
    pub jobs: Option<usize>,
}

impl Default for EvalOptions {
    fn default() -> EvalOptions {
        EvalOptions { folds: 5, seed: 0, jobs: None }
    }
}

struct RecordOutcome {
    judgment: Option<SceneJudgment>,
    failed: bool,
    inconsistent: bool,
}

fn judge_record(
    record: &DatasetRecord,
    backend: &BackendConfig,
    variant: PromptVariant,
    rules: &RuleConfig,
) -> RecordOutcome {
    let report = distance_matrix(&record.scene);
    let response = build_prompt(&record.scene, &report, variant, rules)
        .and_then(|bundle| query_backend(&bundle, &record.scene, backend, rules));
    match response {
        Ok(resp) => {
            let judgment = resp.to_judgment(JudgmentSource::Mock);
            let inconsistent = !judgment.consistent;
            RecordOutcome { judgment: Some(judgment), failed: false, inconsistent }
        }
        Err(ReasoningError::EmptyScene) => {
            // an empty scene cannot be judged; scored as a failure
            RecordOutcome { judgment: None, failed: true, inconsistent: false }
        }
        Err(_) => RecordOutcome { judgment: None, failed: true, inconsistent: false },
    }
}

fn eval_cell(
    records: &[DatasetRecord],
    indices: &[usize],
    scenario: Scenario,
    backend: &BackendConfig,
    variant: PromptVariant,
    rules: &RuleConfig,
    opts: &EvalOptions,
) -> Result<EvalCell, EvalError> {
    let strata: Vec<String> = indices.iter().map(|&i| records[i].stratum()).collect();
    let split = kfold_split(
        indices.len(),
        opts.folds,
        seeding::mix_seed(opts.seed, &format!("eval/{scenario}")),
        &strata,
    )?;

    let mut fold_accs = Vec::with_capacity(opts.folds);
    let mut failures = 0usize;
    let mut inconsistents = 0usize;
    let mut parsed_total = 0usize;

    for fold in 0..opts.folds {
        let test: Vec<usize> = split.test_indices(fold).iter().map(|&j| indices[j]).collect();
        let outcomes: Vec<RecordOutcome> = test
            .par_iter()
            .map(|&i| judge_record(&records[i], backend, variant, rules))
            .collect();
        let preds: Vec<Option<SceneJudgment>> =
            outcomes.iter().map(|o| o.judgment.clone()).collect();
        let truths: Vec<(bool, bool)> = test
            .iter()
            .map(|&i| (records[i].truth.obstruction, records[i].truth.interaction))
            .collect();
        failures += outcomes.iter().filter(|o| o.failed).count();
        inconsistents += outcomes.iter().filter(|o| o.inconsistent).count();
        parsed_total += outcomes.iter().filter(|o| !o.failed).count();
        fold_accs.push(joint_accuracy(&preds, &truths)?);
    }

    let stats = aggregate_folds(&fold_accs)?;
    let n_records = indices.len();
    Ok(EvalCell {
        scenario,
        backend: backend.label(),
        variant,
        n_records,
        stats,
        parse_failure_rate: failures as f64 / n_records as f64,
        inconsistent_prediction_rate: if parsed_total == 0 {
            0.0
        } else {
            inconsistents as f64 / parsed_total as f64
        },
    })
}

fn report_deltas(cells: &[EvalCell]) -> Vec<ReportDelta> {
    let mut deltas = Vec::new();
    let scenarios: Vec<Scenario> = {
        let mut v: Vec<Scenario> = cells.iter().map(|c| c.scenario).collect();
        v.dedup();
        v.sort();
        v.dedup();
        v
    };
    let backends: Vec<String> = {
        let mut v = Vec::new();
        for c in cells {
            if !v.contains(&c.backend) {
                v.push(c.backend.clone());
            }
        }
        v
    };

    for s in &scenarios {
        // depth ablation per backend
        for b in &backends {
            let vision = cells.iter().find(|c| {
                c.scenario == *s && &c.backend == b && c.variant == PromptVariant::VisionOnly
            });
            let depth = cells.iter().find(|c| {
                c.scenario == *s && &c.backend == b && c.variant == PromptVariant::VisionPlusDepth
            });
            if let (Some(v), Some(d)) = (vision, depth) {
                deltas.push(ReportDelta {
                    scenario: *s,
                    kind: "depth_effect".to_string(),
                    minuend: format!("{b}/{}", PromptVariant::VisionPlusDepth),
                    subtrahend: format!("{b}/{}", PromptVariant::VisionOnly),
                    delta: d.stats.mean_rounded - v.stats.mean_rounded,
                });
            }
        }
        // backend-vs-first-backend per variant
        if backends.len() > 1 {
            let base = &backends[0];
            for other in &backends[1..] {
                for variant in [PromptVariant::VisionOnly, PromptVariant::VisionPlusDepth] {
                    let lhs = cells.iter().find(|c| {
                        c.scenario == *s && &c.backend == other && c.variant == variant
                    });
                    let rhs = cells.iter().find(|c| {
                        c.scenario == *s && &c.backend == base && c.variant == variant
                    });
                    if let (Some(l), Some(r)) = (lhs, rhs) {
                        deltas.push(ReportDelta {
                            scenario: *s,
                            kind: "backend_gain".to_string(),
                            minuend: format!("{other}/{variant}"),
                            subtrahend: format!("{base}/{variant}"),
                            delta: l.stats.mean_rounded - r.stats.mean_rounded,
                        });
                    }
                }
            }
        }
    }
    deltas
}

/// Evaluate every (scenario, backend, variant) cell of the dataset.
pub fn run_eval(
    records: &[DatasetRecord],
    backends: &[BackendConfig],
    variants: &[PromptVariant],
    rules: &RuleConfig,
    opts: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    let mut scenarios: Vec<Scenario> = records.iter().map(|r| r.scenario).collect();
    scenarios.sort();
    scenarios.dedup();

    let run = |opts: &EvalOptions| -> Result<Vec<EvalCell>, EvalError> {
        let mut cells = Vec::new();
        for scenario in &scenarios {
            let indices: Vec<usize> = records
                .iter()
                .enumerate()
                .filter(|(_, r)| r.scenario == *scenario)
                .map(|(i, _)| i)
                .collect();
            for backend in backends {
                for variant in variants {
                    cells.push(eval_cell(
                        records, &indices, *scenario, backend, *variant, rules, opts,
                    )?);
                }
            }
        }
        Ok(cells)
    };

    let cells = match opts.jobs {
        Some(jobs) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs.max(1))
                .build()
                .map_err(|e| EvalError::Io(std::io::Error::other(e)))?;
            pool.install(|| run(opts))?
        }
        None => run(opts)?,
    };

    let deltas = report_deltas(&cells);
    Ok(EvalReport {
        schema_version: EvalReport::SCHEMA_VERSION,
        seed: opts.seed,
        folds: opts.folds,
        cells,
        deltas,
    })
}
