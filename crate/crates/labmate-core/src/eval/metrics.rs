//! Joint-label accuracy, fold aggregation and delta arithmetic.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::perception::Scenario;
use crate::reasoning::PromptVariant;
use crate::rules::SceneJudgment;

use super::{EvalError, ModelKind};

/// Joint-label accuracy in percent: a record counts as correct only when
/// both the obstruction and interaction labels match the truth. `None`
/// predictions (parse or transport failures) count as incorrect.
pub fn joint_accuracy(
    preds: &[Option<SceneJudgment>],
    truths: &[(bool, bool)],
) -> Result<f64, EvalError> {
    if preds.is_empty() || truths.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if preds.len() != truths.len() {
        return Err(EvalError::LengthMismatch { preds: preds.len(), truths: truths.len() });
    }
    let correct = preds
        .iter()
        .zip(truths.iter())
        .filter(|(p, t)| p.as_ref().is_some_and(|j| j.labels() == **t))
        .count();
    Ok(100.0 * correct as f64 / preds.len() as f64)
}

fn round_half_away(x: f64) -> i64 {
    x.round() as i64
}

/// Mean and spread over the fold accuracies. The spread is the sample
/// standard deviation (n-1 denominator); the sample variance is carried
/// alongside so either reading of "mean and variance" is recoverable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldStats {
    pub folds: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    pub variance: f64,
    /// Rounded half-away-from-zero, as reported in summary tables.
    pub mean_rounded: i64,
    pub sd_rounded: i64,
}

pub fn aggregate_folds(accs: &[f64]) -> Result<FoldStats, EvalError> {
    if accs.len() < 2 {
        return Err(EvalError::TooFewFolds { n: accs.len() });
    }
    let n = accs.len() as f64;
    let mean = accs.iter().sum::<f64>() / n;
    let variance = accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = variance.sqrt();
    Ok(FoldStats {
        folds: accs.to_vec(),
        mean,
        sd,
        variance,
        mean_rounded: round_half_away(mean),
        sd_rounded: round_half_away(sd),
    })
}

/// One row of a model-performance table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCell {
    pub scenario: Scenario,
    pub variant: PromptVariant,
    pub model: ModelKind,
    pub mean: f64,
    #[serde(default)]
    pub spread: f64,
}

/// Signed percentage-point deltas derived from a cell table.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Deltas {
    /// fine-tuned minus base, vision prompt, per scenario.
    pub fine_tune_gain: BTreeMap<Scenario, i64>,
    /// (vision+depth) minus (vision), fine-tuned model, per scenario.
    pub depth_effect: BTreeMap<Scenario, i64>,
}

/// Compute the fine-tuning and depth-ablation deltas from a cell table.
/// Both operands of a delta must be present for every scenario that
/// appears in the table.
pub fn delta_table(cells: &[AccuracyCell]) -> Result<Deltas, EvalError> {
    let mut by_key: BTreeMap<(Scenario, PromptVariant, ModelKind), f64> = BTreeMap::new();
    let mut scenarios: Vec<Scenario> = Vec::new();
    for cell in cells {
        by_key.insert((cell.scenario, cell.variant, cell.model), cell.mean);
        if !scenarios.contains(&cell.scenario) {
            scenarios.push(cell.scenario);
        }
    }

    let lookup = |s: Scenario, v: PromptVariant, m: ModelKind, name: &str| {
        by_key.get(&(s, v, m)).copied().ok_or_else(|| EvalError::MissingCell {
            scenario: s,
            cell: name.to_string(),
        })
    };

    let mut deltas = Deltas::default();
    for s in scenarios {
        let base = lookup(s, PromptVariant::VisionOnly, ModelKind::Base, "vision/base")?;
        let tuned =
            lookup(s, PromptVariant::VisionOnly, ModelKind::FineTuned, "vision/fine_tuned")?;
        let tuned_depth = lookup(
            s,
            PromptVariant::VisionPlusDepth,
            ModelKind::FineTuned,
            "vision+depth/fine_tuned",
        )?;
        deltas.fine_tune_gain.insert(s, round_half_away(tuned - base));
        deltas.depth_effect.insert(s, round_half_away(tuned_depth - tuned));
    }
    Ok(deltas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::JudgmentSource;

    fn judgment(o: bool, i: bool) -> Option<SceneJudgment> {
        Some(SceneJudgment::new(o, i, String::new(), JudgmentSource::Mock))
    }

    #[test]
    fn accuracy_requires_both_labels() {
        // 9 of 10 fully matching, one with a single flipped label
        let mut preds: Vec<Option<SceneJudgment>> = (0..9).map(|_| judgment(true, true)).collect();
        preds.push(judgment(true, false));
        let truths = vec![(true, true); 10];
        assert_eq!(joint_accuracy(&preds, &truths).unwrap(), 90.0);
    }

    #[test]
    fn one_flipped_label_scores_zero_for_that_record() {
        let preds = vec![judgment(true, false)];
        let truths = vec![(true, true)];
        assert_eq!(joint_accuracy(&preds, &truths).unwrap(), 0.0);
    }

    #[test]
    fn parse_failures_count_as_wrong() {
        let preds = vec![judgment(true, true), None];
        let truths = vec![(true, true), (true, true)];
        assert_eq!(joint_accuracy(&preds, &truths).unwrap(), 50.0);
    }

    #[test]
    fn empty_and_mismatched_inputs_error() {
        assert!(matches!(joint_accuracy(&[], &[]), Err(EvalError::EmptyInput)));
        let preds = vec![judgment(true, true)];
        assert!(matches!(
            joint_accuracy(&preds, &[(true, true), (false, false)]),
            Err(EvalError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn aggregate_matches_hand_arithmetic() {
        // sample sd of {90,92,94,96,98} is sqrt(10) = 3.16..., rounds to 3
        let stats = aggregate_folds(&[90.0, 92.0, 94.0, 96.0, 98.0]).unwrap();
        assert_eq!(stats.mean, 94.0);
        assert_eq!(stats.mean_rounded, 94);
        assert!((stats.variance - 10.0).abs() < 1e-12);
        assert_eq!(stats.sd_rounded, 3);
    }

    #[test]
    fn constant_folds_have_zero_spread() {
        let stats = aggregate_folds(&[88.0; 5]).unwrap();
        assert_eq!(stats.mean_rounded, 88);
        assert_eq!(stats.sd_rounded, 0);
        assert_eq!(stats.variance, 0.0);
    }

    #[test]
    fn single_fold_is_rejected() {
        assert!(matches!(aggregate_folds(&[20.0]), Err(EvalError::TooFewFolds { n: 1 })));
    }

    fn cell(s: Scenario, v: PromptVariant, m: ModelKind, mean: f64) -> AccuracyCell {
        AccuracyCell { scenario: s, variant: v, model: m, mean, spread: 0.0 }
    }

    #[test]
    fn published_table_deltas() {
        use ModelKind::*;
        use PromptVariant::*;
        let cells = vec![
            cell(Scenario::S1, VisionOnly, Base, 29.0),
            cell(Scenario::S1, VisionOnly, FineTuned, 88.0),
            cell(Scenario::S1, VisionPlusDepth, FineTuned, 70.0),
            cell(Scenario::S2, VisionOnly, Base, 20.0),
            cell(Scenario::S2, VisionOnly, FineTuned, 94.0),
            cell(Scenario::S2, VisionPlusDepth, FineTuned, 94.0),
            cell(Scenario::S3, VisionOnly, Base, 43.0),
            cell(Scenario::S3, VisionOnly, FineTuned, 90.0),
            cell(Scenario::S3, VisionPlusDepth, FineTuned, 82.0),
        ];
        let d = delta_table(&cells).unwrap();
        assert_eq!(d.fine_tune_gain[&Scenario::S1], 59);
        assert_eq!(d.fine_tune_gain[&Scenario::S2], 74);
        assert_eq!(d.fine_tune_gain[&Scenario::S3], 47);
        assert_eq!(d.depth_effect[&Scenario::S1], -18);
        assert_eq!(d.depth_effect[&Scenario::S2], 0);
        assert_eq!(d.depth_effect[&Scenario::S3], -8);
    }

    #[test]
    fn equal_cells_give_zero_delta() {
        use ModelKind::*;
        use PromptVariant::*;
        let cells = vec![
            cell(Scenario::S1, VisionOnly, Base, 50.0),
            cell(Scenario::S1, VisionOnly, FineTuned, 50.0),
            cell(Scenario::S1, VisionPlusDepth, FineTuned, 50.0),
        ];
        let d = delta_table(&cells).unwrap();
        assert_eq!(d.fine_tune_gain[&Scenario::S1], 0);
        assert_eq!(d.depth_effect[&Scenario::S1], 0);
    }

    #[test]
    fn missing_cell_is_reported() {
        use ModelKind::*;
        use PromptVariant::*;
        let cells = vec![
            cell(Scenario::S1, VisionOnly, Base, 29.0),
            cell(Scenario::S1, VisionOnly, FineTuned, 88.0),
        ];
        let err = delta_table(&cells).unwrap_err();
        assert!(matches!(err, EvalError::MissingCell { scenario: Scenario::S1, .. }));
    }

    proptest::proptest! {
        #[test]
        fn accuracy_is_bounded_and_exact_at_the_top(
            rows in proptest::collection::vec(
                (proptest::bool::ANY, proptest::bool::ANY, proptest::bool::ANY,
                 proptest::bool::ANY, proptest::bool::ANY),
                1..60,
            )
        ) {
            let preds: Vec<Option<SceneJudgment>> = rows
                .iter()
                .map(|&(o, i, _, _, missing)| {
                    if missing { None } else { judgment(o, i) }
                })
                .collect();
            let truths: Vec<(bool, bool)> =
                rows.iter().map(|&(_, _, to, ti, _)| (to, ti)).collect();
            let acc = joint_accuracy(&preds, &truths).unwrap();
            proptest::prop_assert!((0.0..=100.0).contains(&acc));
            let all_match = preds.iter().zip(truths.iter())
                .all(|(p, t)| p.as_ref().is_some_and(|j| j.labels() == *t));
            proptest::prop_assert_eq!(acc == 100.0, all_match);
        }
    }
}
