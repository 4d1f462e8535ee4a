//! Threshold rule engine: the geometric ground-truth oracle for
//! (obstruction, interaction) labels and the three-class scene taxonomy.
//!
//! Interaction: some human is closer than `t_interact_m` to a piece of
//! equipment. Obstruction: interaction, or some human lies within
//! `corridor_halfwidth_m` of the segment from the robot origin to its goal.
//! A human at the equipment necessarily blocks access to it, so interaction
//! implies obstruction and the (no-obstruction, interaction) combination
//! can never be produced.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::perception::{distance_matrix, Position3, Scene};

/// Distance thresholds, meters. All comparisons are strict (`<`), so a
/// distance exactly equal to a threshold does not trigger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleConfig {
    /// Human–equipment distance below which the human counts as interacting.
    pub t_interact_m: f64,
    /// Half-width of the obstruction corridor around the robot→goal segment.
    pub corridor_halfwidth_m: f64,
    /// Fallback human–robot distance threshold used when a scene has no
    /// goal. `None` disables the fallback (goal-less scenes then error).
    pub t_obstruct_m: Option<f64>,
}

impl Default for RuleConfig {
    fn default() -> RuleConfig {
        RuleConfig { t_interact_m: 0.8, corridor_halfwidth_m: 0.6, t_obstruct_m: Some(1.2) }
    }
}

impl RuleConfig {
    pub fn validate(&self) -> Result<(), RuleError> {
        let mut named = vec![("t_interact_m", self.t_interact_m),
                             ("corridor_halfwidth_m", self.corridor_halfwidth_m)];
        if let Some(t) = self.t_obstruct_m {
            named.push(("t_obstruct_m", t));
        }
        for (name, v) in named {
            if !v.is_finite() || v <= 0.0 {
                return Err(RuleError::Config {
                    detail: format!("{name} must be a positive finite number, got {v}"),
                });
            }
        }
        Ok(())
    }

    /// Parse a `key = value` config table. Unknown keys are errors, missing
    /// keys take the documented defaults.
    pub fn from_toml_str(s: &str) -> Result<RuleConfig, RuleError> {
        let cfg: RuleConfig =
            toml::from_str(s).map_err(|e| RuleError::Config { detail: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<RuleConfig, RuleError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RuleError::Config { detail: format!("{}: {e}", path.display()) })?;
        RuleConfig::from_toml_str(&text)
    }
}

/// Where a judgment came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgmentSource {
    Oracle,
    Mock,
    Live,
}

/// The (obstruction, interaction) pair plus the interaction message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneJudgment {
    pub obstruction: bool,
    pub interaction: bool,
    pub message: String,
    pub source: JudgmentSource,
    /// False exactly when the judgment claims interaction without
    /// obstruction, the physically impossible combination. Inconsistent
    /// predictions are preserved and flagged, never repaired.
    pub consistent: bool,
}

impl SceneJudgment {
    pub fn new(
        obstruction: bool,
        interaction: bool,
        message: String,
        source: JudgmentSource,
    ) -> SceneJudgment {
        SceneJudgment {
            obstruction,
            interaction,
            message,
            source,
            consistent: !(interaction && !obstruction),
        }
    }

    pub fn labels(&self) -> (bool, bool) {
        (self.obstruction, self.interaction)
    }
}

/// The three valid scene classes. The fourth combination (interacting
/// without obstructing) is excluded as physically impossible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioClass {
    ObstructInteract,
    Neither,
    ObstructOnly,
}

impl ScenarioClass {
    pub const ALL: [ScenarioClass; 3] =
        [ScenarioClass::ObstructInteract, ScenarioClass::Neither, ScenarioClass::ObstructOnly];

    /// The (obstruction, interaction) pair this class stands for.
    pub fn labels(&self) -> (bool, bool) {
        match self {
            ScenarioClass::ObstructInteract => (true, true),
            ScenarioClass::Neither => (false, false),
            ScenarioClass::ObstructOnly => (true, false),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioClass::ObstructInteract => "obstruct_interact",
            ScenarioClass::Neither => "neither",
            ScenarioClass::ObstructOnly => "obstruct_only",
        }
    }
}

impl fmt::Display for ScenarioClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("scene has no goal and no fallback obstruction threshold is configured")]
    NoGoal,
    #[error("inconsistent labels: interaction without obstruction is an excluded class")]
    InconsistentLabels,
    #[error("rule config: {detail}")]
    Config { detail: String },
}

/// Euclidean distance from `p` to the closed segment `[a, b]`.
/// `a == b` degenerates to point distance.
pub fn point_segment_distance(p: &Position3, a: &Position3, b: &Position3) -> f64 {
    let ab = b.sub(a);
    let denom = ab.dot(&ab);
    let t = if denom > 0.0 { (p.sub(a).dot(&ab) / denom).clamp(0.0, 1.0) } else { 0.0 };
    let foot = a.add(&ab.scale(t));
    p.distance(&foot)
}

/// Apply the threshold rules to a scene. This is the ground-truth oracle:
/// it never speaks (empty message) and never emits the excluded class.
pub fn classify_scene(scene: &Scene, cfg: &RuleConfig) -> Result<SceneJudgment, RuleError> {
    cfg.validate()?;
    if scene.goal.is_none() && cfg.t_obstruct_m.is_none() {
        return Err(RuleError::NoGoal);
    }

    let report = distance_matrix(scene);
    let interaction = report.human_equipment_m.values().any(|&d| d < cfg.t_interact_m);

    let corridor_hit = match &scene.goal {
        Some(goal) => scene.humans().any(|h| {
            point_segment_distance(&h.position, &Position3::ORIGIN, goal)
                < cfg.corridor_halfwidth_m
        }),
        None => {
            let t = cfg.t_obstruct_m.expect("checked above");
            report.human_robot_m.values().any(|&d| d < t)
        }
    };

    let obstruction = interaction || corridor_hit;
    Ok(SceneJudgment::new(obstruction, interaction, String::new(), JudgmentSource::Oracle))
}

/// Map a judgment onto the three-class taxonomy.
pub fn to_class(judgment: &SceneJudgment) -> Result<ScenarioClass, RuleError> {
    match (judgment.obstruction, judgment.interaction) {
        (true, true) => Ok(ScenarioClass::ObstructInteract),
        (false, false) => Ok(ScenarioClass::Neither),
        (true, false) => Ok(ScenarioClass::ObstructOnly),
        (false, true) => Err(RuleError::InconsistentLabels),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::{ClassLabel, Scenario, SceneObject};
    use proptest::prelude::*;

    fn scene(objects: Vec<(ClassLabel, u32, f64, f64)>, goal: Option<(f64, f64)>) -> Scene {
        Scene {
            scene_id: "t".into(),
            scenario: Scenario::Unknown,
            objects: objects
                .into_iter()
                .map(|(label, id, x, y)| SceneObject {
                    label,
                    instance_id: id,
                    position: Position3::new(x, y, 0.0),
                })
                .collect(),
            goal: goal.map(|(x, y)| Position3::new(x, y, 0.0)),
            image_ref: None,
            truth: None,
            warnings: Vec::new(),
        }
    }

    #[test]
    fn human_at_fumehood_obstructs_and_interacts() {
        // 0.4 m from the fumehood with t_interact 0.8
        let s = scene(
            vec![(ClassLabel::Fumehood, 0, 3.0, 0.0), (ClassLabel::HumanChemist, 0, 3.0, 0.4)],
            Some((3.0, 0.0)),
        );
        let j = classify_scene(&s, &RuleConfig::default()).unwrap();
        assert_eq!(j.labels(), (true, true));
        assert!(j.consistent);
        assert_eq!(j.source, JudgmentSource::Oracle);
        assert!(j.message.is_empty());
    }

    #[test]
    fn far_field_human_is_neither() {
        let s = scene(
            vec![(ClassLabel::Fumehood, 0, 6.0, 0.0), (ClassLabel::HumanChemist, 0, 1.0, 2.5)],
            Some((6.0, 0.0)),
        );
        let j = classify_scene(&s, &RuleConfig::default()).unwrap();
        assert_eq!(j.labels(), (false, false));
    }

    #[test]
    fn on_corridor_far_from_equipment_is_obstruct_only() {
        // Human 0.3 m off the robot→goal segment, 2 m from all equipment.
        // Point-to-segment hand check: segment (0,0)→(4,0), human (2, 0.3),
        // perpendicular foot (2,0), distance 0.3 < 0.6.
        let s = scene(
            vec![(ClassLabel::Fumehood, 0, 2.0, 2.3), (ClassLabel::HumanChemist, 0, 2.0, 0.3)],
            Some((4.0, 0.0)),
        );
        let j = classify_scene(&s, &RuleConfig::default()).unwrap();
        assert_eq!(j.labels(), (true, false));
        assert_eq!(to_class(&j).unwrap(), ScenarioClass::ObstructOnly);
    }

    #[test]
    fn goalless_scene_uses_fallback_threshold() {
        let s = scene(vec![(ClassLabel::HumanChemist, 0, 1.0, 0.0)], None);
        let j = classify_scene(&s, &RuleConfig::default()).unwrap();
        assert_eq!(j.labels(), (true, false)); // 1.0 < t_obstruct_m = 1.2

        let cfg = RuleConfig { t_obstruct_m: None, ..RuleConfig::default() };
        assert!(matches!(classify_scene(&s, &cfg), Err(RuleError::NoGoal)));
    }

    #[test]
    fn class_mapping() {
        let j = |o, i| SceneJudgment::new(o, i, String::new(), JudgmentSource::Oracle);
        assert_eq!(to_class(&j(true, true)).unwrap(), ScenarioClass::ObstructInteract);
        assert_eq!(to_class(&j(false, false)).unwrap(), ScenarioClass::Neither);
        assert_eq!(to_class(&j(true, false)).unwrap(), ScenarioClass::ObstructOnly);
        assert!(matches!(to_class(&j(false, true)), Err(RuleError::InconsistentLabels)));
    }

    #[test]
    fn class_bijection_round_trips() {
        for class in ScenarioClass::ALL {
            let (o, i) = class.labels();
            let j = SceneJudgment::new(o, i, String::new(), JudgmentSource::Oracle);
            assert_eq!(to_class(&j).unwrap(), class);
        }
    }

    #[test]
    fn point_segment_basics() {
        let p = |x, y| Position3::new(x, y, 0.0);
        // perpendicular foot inside the segment
        assert_eq!(point_segment_distance(&p(0.0, 1.0), &p(-1.0, 0.0), &p(1.0, 0.0)), 1.0);
        // clamps to the near endpoint
        assert_eq!(point_segment_distance(&p(2.0, 0.0), &p(0.0, 0.0), &p(1.0, 0.0)), 1.0);
        // degenerate segment
        assert_eq!(point_segment_distance(&p(3.0, 4.0), &p(0.0, 0.0), &p(0.0, 0.0)), 5.0);
    }

    #[test]
    fn threshold_boundary_is_exclusive() {
        // set each threshold to the exact observed distance: the strict
        // comparison must not fire at equality
        let s = scene(
            vec![(ClassLabel::Fumehood, 0, 4.0, 3.0), (ClassLabel::HumanChemist, 0, 4.0, 2.2)],
            Some((8.0, -2.0)),
        );
        let he = s.objects[1].position.distance(&s.objects[0].position);
        let cfg = RuleConfig { t_interact_m: he, ..RuleConfig::default() };
        let j = classify_scene(&s, &cfg).unwrap();
        assert!(!j.interaction, "distance equal to threshold must not interact");
        let below = RuleConfig { t_interact_m: he + 1e-9, ..RuleConfig::default() };
        assert!(classify_scene(&s, &below).unwrap().interaction);

        let s2 = scene(vec![(ClassLabel::HumanChemist, 0, 2.0, 0.6)], Some((4.0, 0.0)));
        let d = point_segment_distance(
            &s2.objects[0].position,
            &Position3::ORIGIN,
            s2.goal.as_ref().unwrap(),
        );
        let cfg2 = RuleConfig { corridor_halfwidth_m: d, ..RuleConfig::default() };
        let j2 = classify_scene(&s2, &cfg2).unwrap();
        assert!(!j2.obstruction, "distance equal to corridor half-width must not obstruct");
        let wider = RuleConfig { corridor_halfwidth_m: d + 1e-9, ..RuleConfig::default() };
        assert!(classify_scene(&s2, &wider).unwrap().obstruction);
    }

    #[test]
    fn config_from_key_value_table() {
        let cfg = RuleConfig::from_toml_str("t_interact_m = 1.0\n").unwrap();
        assert_eq!(cfg.t_interact_m, 1.0);
        assert_eq!(cfg.corridor_halfwidth_m, 0.6);
        assert!(RuleConfig::from_toml_str("mystery_knob = 1.0\n").is_err());
        assert!(RuleConfig::from_toml_str("t_interact_m = -2.0\n").is_err());
    }

    fn arb_scene() -> impl Strategy<Value = Scene> {
        (
            proptest::collection::vec(
                (0usize..3, -6.0f64..6.0, -6.0f64..6.0),
                0..6,
            ),
            proptest::option::of((-6.0f64..6.0, -6.0f64..6.0)),
        )
            .prop_map(|(objs, goal)| {
                let mut counts = [0u32; 3];
                scene(
                    objs.into_iter()
                        .map(|(li, x, y)| {
                            let label = ClassLabel::ALL[li];
                            let id = counts[li];
                            counts[li] += 1;
                            (label, id, x, y)
                        })
                        .collect(),
                    goal,
                )
            })
    }

    proptest! {
        #[test]
        fn oracle_never_emits_fourth_class(s in arb_scene(),
                                           ti in 0.1f64..3.0,
                                           ch in 0.1f64..3.0) {
            let cfg = RuleConfig { t_interact_m: ti, corridor_halfwidth_m: ch,
                                   t_obstruct_m: Some(1.2) };
            let j = classify_scene(&s, &cfg).unwrap();
            prop_assert!(j.consistent);
            prop_assert!(!(j.interaction && !j.obstruction));
            prop_assert!(to_class(&j).is_ok());
        }

        #[test]
        fn thresholds_are_monotone(s in arb_scene(),
                                   ti in 0.1f64..2.0, dti in 0.0f64..2.0,
                                   ch in 0.1f64..2.0, dch in 0.0f64..2.0) {
            let small = RuleConfig { t_interact_m: ti, corridor_halfwidth_m: ch,
                                     t_obstruct_m: Some(1.2) };
            let large = RuleConfig { t_interact_m: ti + dti, corridor_halfwidth_m: ch + dch,
                                     t_obstruct_m: Some(1.2) };
            let js = classify_scene(&s, &small).unwrap();
            let jl = classify_scene(&s, &large).unwrap();
            // enlarging thresholds can only switch labels false -> true
            prop_assert!(!js.interaction || jl.interaction);
            prop_assert!(!js.obstruction || jl.obstruction);
        }

        #[test]
        fn segment_distance_matches_dense_sampling(
            p in ([-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0]),
            a in ([-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0]),
            b in ([-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0]),
        ) {
            let p = Position3::new(p[0], p[1], p[2]);
            let a = Position3::new(a[0], a[1], a[2]);
            let b = Position3::new(b[0], b[1], b[2]);
            let fast = point_segment_distance(&p, &a, &b);
            // sampling oracle at 1e-4 resolution of the parameter
            let mut best = f64::INFINITY;
            let steps = 10_000u32;
            for i in 0..=steps {
                let t = f64::from(i) / f64::from(steps);
                let q = a.add(&b.sub(&a).scale(t));
                best = best.min(p.distance(&q));
            }
            prop_assert!((fast - best).abs() < 1e-3);
            prop_assert!(fast <= best + 1e-12); // true minimum can't exceed a sampled one
        }
    }
}
