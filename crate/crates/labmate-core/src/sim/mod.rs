//! Seeded scenario generation and discrete-event episodes.
//!
//! Scenes for the three interaction scenarios are placed geometrically so
//! that the noise-free rule oracle reproduces the requested class, truth
//! labels are frozen before sensor noise is applied, and everything is
//! deterministic per (seed, scenario, index).

mod episode;
mod generate;

pub use episode::{compare_policies, run_episode, EpisodeConfig, PolicyComparison};
pub use generate::{generate_dataset, generate_scene, generate_scene_of_class};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::perception::Scenario;
use crate::reasoning::ReasoningError;
use crate::rules::{RuleError, ScenarioClass};

/// Sensor-noise knobs applied to emitted positions (never to truth).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    /// Per-axis position jitter std-dev, meters.
    pub pos_sigma_m: f64,
    /// Radial (along the robot→object ray) depth noise std-dev, meters.
    pub depth_sigma_m: f64,
    /// Probability that a detection is missing entirely.
    pub dropout_p: f64,
}

impl Default for NoiseModel {
    fn default() -> NoiseModel {
        NoiseModel { pos_sigma_m: 0.0, depth_sigma_m: 0.0, dropout_p: 0.0 }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.pos_sigma_m < 0.0 || self.depth_sigma_m < 0.0 || !self.pos_sigma_m.is_finite()
            || !self.depth_sigma_m.is_finite()
        {
            return Err(SimError::InvalidSpec {
                detail: "noise sigmas must be non-negative and finite".into(),
            });
        }
        if !(0.0..=1.0).contains(&self.dropout_p) {
            return Err(SimError::InvalidSpec {
                detail: format!("dropout_p must lie in [0, 1], got {}", self.dropout_p),
            });
        }
        Ok(())
    }
}

/// Lab floor plan: the robot sits at the origin on one short wall, x grows
/// into the room, y spans the width symmetrically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoomBounds {
    pub length_m: f64,
    pub width_m: f64,
}

impl Default for RoomBounds {
    fn default() -> RoomBounds {
        RoomBounds { length_m: 8.0, width_m: 6.0 }
    }
}

impl RoomBounds {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        (0.0..=self.length_m).contains(&x) && y.abs() <= self.width_m / 2.0
    }
}

/// What to generate: scenario flavour, volume, seed, class mixture and the
/// episode occupancy used by the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub count: usize,
    pub seed: u64,
    pub noise: NoiseModel,
    /// How long a busy human stays at the equipment in episodes, seconds.
    pub occupancy_s: u64,
    /// Probabilities over [obstruct_interact, neither, obstruct_only].
    pub class_mix: [f64; 3],
    pub room: RoomBounds,
}

impl Default for ScenarioSpec {
    fn default() -> ScenarioSpec {
        ScenarioSpec {
            scenario: Scenario::S1,
            count: 1,
            seed: 0,
            noise: NoiseModel::default(),
            occupancy_s: 60,
            class_mix: [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            room: RoomBounds::default(),
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.scenario == Scenario::Unknown {
            return Err(SimError::InvalidSpec {
                detail: "scenario must be s1, s2 or s3".into(),
            });
        }
        if self.count == 0 {
            return Err(SimError::InvalidSpec { detail: "count must be at least 1".into() });
        }
        self.noise.validate()?;
        let sum: f64 = self.class_mix.iter().sum();
        if self.class_mix.iter().any(|p| *p < 0.0 || !p.is_finite())
            || (sum - 1.0).abs() > 1e-9
        {
            return Err(SimError::InvalidSpec {
                detail: format!("class_mix must be non-negative and sum to 1, got {sum}"),
            });
        }
        if self.room.length_m < 4.0 || self.room.width_m < 2.0 {
            return Err(SimError::InvalidSpec {
                detail: "room must be at least 4 m long and 2 m wide".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario spec: {detail}")]
    InvalidSpec { detail: String },
    #[error("could not place a {class} scene for {scenario} within {tries} attempts; \
             thresholds may be infeasible for the room bounds")]
    InfeasiblePlacement { scenario: Scenario, class: ScenarioClass, tries: u32 },
    #[error("episode exceeded {ticks} ticks without arriving")]
    TickLimit { ticks: u64 },
    #[error("backend error at tick {tick_s}: {source}")]
    Backend {
        tick_s: u64,
        #[source]
        source: ReasoningError,
    },
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error(transparent)]
    Decision(#[from] crate::decision::DecisionError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
