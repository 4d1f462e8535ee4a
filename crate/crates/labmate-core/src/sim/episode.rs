//! Discrete-event episodes at 1 Hz: the robot approaches its goal, judges
//! the scene through the configured backend, steps the decision FSM, talks
//! to the human, and the trace accounts idle and reallocated seconds.
//!
//! World model per episode: the scene's truth labels decide whether the
//! path is physically blocked; a blocking human departs after
//! `occupancy_s`. The passive baseline only ever sees the LiDAR-style
//! truth obstruction; the proactive policy sees the backend judgment at
//! the first tick, with a close-range LiDAR fallback if a false negative
//! lets it drive up to the safety stop.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decision::{
    interpret_reply, step_fsm, Action, DecisionEvent, DialogueLine, EpisodeTrace, Policy,
    ReplyIntent, RobotState, Speaker, TraceStep,
};
use crate::perception::{Scene, TruthLabels};
use crate::reasoning::{build_prompt, query_backend, BackendConfig, PromptVariant};
use crate::rules::{classify_scene, JudgmentSource, RuleConfig, SceneJudgment};

use super::{generate_scene, ScenarioSpec, SimError};

const TICK_LIMIT: u64 = 100_000;
/// The robot halts this far short of a blocking human.
const SAFETY_GAP_M: f64 = 0.5;

/// Timing and dialogue knobs for episode runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    pub rules: RuleConfig,
    /// Seconds the robot waits for a reply before giving up on dialogue.
    pub timeout_s: u64,
    /// Seconds after a wait request before the robot reallocates to other
    /// work.
    pub reallocation_delay_s: u64,
    pub speed_mps: f64,
    /// Scripted replies consumed in order; when exhausted (or empty) the
    /// human answers honestly according to the scene truth.
    pub replies: Vec<String>,
}

impl Default for EpisodeConfig {
    fn default() -> EpisodeConfig {
        EpisodeConfig {
            rules: RuleConfig::default(),
            timeout_s: 30,
            reallocation_delay_s: 5,
            speed_mps: 1.0,
            replies: Vec::new(),
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.speed_mps.is_finite() && self.speed_mps > 0.0) {
            return Err(SimError::InvalidSpec {
                detail: "speed_mps must be positive".to_string(),
            });
        }
        self.rules.validate()?;
        Ok(())
    }
}

/// Paired-policy summary over matched seeded episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyComparison {
    pub episodes: usize,
    pub mean_idle_proactive_s: f64,
    pub mean_idle_passive_s: f64,
    pub mean_reallocated_proactive_s: f64,
    /// Mean of (passive idle - proactive idle) over matched pairs.
    pub mean_saved_s: f64,
    /// Sample standard deviation of the paired differences.
    pub saved_sd_s: f64,
    pub min_saved_s: f64,
    pub max_saved_s: f64,
}

struct EpisodeWorld {
    truth: TruthLabels,
    blocked: bool,
    depart_t: u64,
    goal_dist: f64,
    block_dist: f64,
    human_present: bool,
}

impl EpisodeWorld {
    fn from_scene(scene: &Scene, ep: &EpisodeConfig, spec: &ScenarioSpec) -> Result<Self, SimError> {
        let goal = scene.goal.ok_or_else(|| SimError::InvalidSpec {
            detail: format!("scene {} has no goal; episodes need one", scene.scene_id),
        })?;
        let truth = match scene.truth {
            Some(t) => t,
            None => {
                let j = classify_scene(scene, &ep.rules)?;
                TruthLabels { obstruction: j.obstruction, interaction: j.interaction }
            }
        };
        let goal_dist = goal.norm();
        // Where a blocking human forces a halt: the projection of the
        // nearest human onto the route, minus the safety gap.
        let block_dist = if truth.obstruction {
            let dir = if goal_dist > 1e-9 { goal.scale(1.0 / goal_dist) } else { goal };
            scene
                .humans()
                .map(|h| h.position.dot(&dir).clamp(0.0, goal_dist))
                .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |m| m.min(d))))
                .map(|d| (d - SAFETY_GAP_M).max(0.0))
                .unwrap_or((goal_dist - 1.0).max(0.0))
        } else {
            goal_dist
        };
        Ok(EpisodeWorld {
            truth,
            blocked: truth.obstruction,
            depart_t: spec.occupancy_s,
            goal_dist,
            block_dist,
            human_present: scene.humans().next().is_some(),
        })
    }

    /// What the human at the scene honestly answers when queried.
    fn honest_reply(&self) -> &'static str {
        if self.truth.obstruction && self.truth.interaction {
            "Yes, please wait a moment."
        } else {
            "No, go ahead."
        }
    }
}

struct Runner<'a> {
    policy: Policy,
    ep: &'a EpisodeConfig,
    world: EpisodeWorld,
    state: RobotState,
    trace: EpisodeTrace,
    timer: Option<(u64, DecisionEvent)>,
    traveled: f64,
    visual_done: bool,
    lidar_done: bool,
    reasks: u32,
    replies_used: usize,
    arrived_at: Option<u64>,
}

impl Runner<'_> {
    fn deliver(&mut self, t: u64, event: DecisionEvent) -> Result<(), SimError> {
        let previous = self.state;
        let (next, actions) = step_fsm(self.state, &event, self.policy)?;
        if let DecisionEvent::HumanReply(text) = &event {
            self.trace.dialogue.push(DialogueLine { speaker: Speaker::Human, text: text.clone() });
        }
        self.trace.transitions.push(TraceStep { t_s: t, state: next, event });
        self.state = next;

        for action in actions {
            match action {
                Action::EmitMessage(text) => {
                    self.trace.dialogue.push(DialogueLine { speaker: Speaker::Robot, text });
                }
                Action::ProceedAtReducedSpeed => {
                    // clearance granted: the human steps aside or waves the
                    // robot through, so the physical block is lifted
                    self.world.blocked = false;
                }
            }
        }

        // timers follow state entry/exit
        if next != previous {
            match next {
                RobotState::Querying => {
                    self.timer = Some((t + self.ep.timeout_s, DecisionEvent::Timeout));
                }
                RobotState::WaitingOnHuman => {
                    self.timer =
                        Some((t + self.ep.reallocation_delay_s, DecisionEvent::Timeout));
                }
                _ => self.timer = None,
            }
            if next == RobotState::Arrived {
                self.arrived_at = Some(t);
            }
        }
        Ok(())
    }

    /// A waiting robot with a physically clear path sees PathClear at once.
    fn normalize(&mut self, t: u64) -> Result<(), SimError> {
        while !self.world.blocked
            && matches!(
                self.state,
                RobotState::WaitingOnHuman | RobotState::Reallocated | RobotState::PassiveWaiting
            )
        {
            self.deliver(t, DecisionEvent::PathClear)?;
        }
        Ok(())
    }

    fn next_reply(&mut self) -> Option<String> {
        if self.replies_used < self.ep.replies.len() {
            let r = self.ep.replies[self.replies_used].clone();
            self.replies_used += 1;
            return Some(r);
        }
        if self.world.human_present {
            return Some(self.world.honest_reply().to_string());
        }
        None
    }
}

/// Run one episode for the scene at `index` of the spec.
pub fn run_episode(
    spec: &ScenarioSpec,
    ep: &EpisodeConfig,
    policy: Policy,
    backend: &BackendConfig,
    index: usize,
) -> Result<EpisodeTrace, SimError> {
    ep.validate()?;
    let scene = generate_scene(spec, &ep.rules, index)?;
    run_episode_on_scene(&scene, spec, ep, policy, backend)
}

/// Run one episode on an explicit scene.
pub fn run_episode_on_scene(
    scene: &Scene,
    spec: &ScenarioSpec,
    ep: &EpisodeConfig,
    policy: Policy,
    backend: &BackendConfig,
) -> Result<EpisodeTrace, SimError> {
    ep.validate()?;
    let world = EpisodeWorld::from_scene(scene, ep, spec)?;
    let mut runner = Runner {
        policy,
        ep,
        world,
        state: RobotState::Navigating,
        trace: EpisodeTrace::default(),
        timer: None,
        traveled: 0.0,
        visual_done: false,
        lidar_done: false,
        reasks: 0,
        replies_used: 0,
        arrived_at: None,
    };

    let mut t: u64 = 0;
    loop {
        if t > TICK_LIMIT {
            return Err(SimError::TickLimit { ticks: TICK_LIMIT });
        }

        // 1. world: the blocking human departs once the occupancy elapses
        if runner.world.blocked && runner.world.truth.obstruction && t >= runner.world.depart_t {
            runner.world.blocked = false;
        }
        runner.normalize(t)?;

        // 2. timers (query timeout / reallocation delay)
        if let Some((due, ev)) = runner.timer.clone() {
            if t >= due {
                runner.timer = None;
                runner.deliver(t, ev)?;
                runner.normalize(t)?;
            }
        }

        // 3. perception
        match policy {
            Policy::Passive => {
                // LiDAR-style: sees only the physical obstruction, once
                if !runner.visual_done {
                    runner.visual_done = true;
                    let j = SceneJudgment::new(
                        runner.world.truth.obstruction,
                        false,
                        String::new(),
                        JudgmentSource::Oracle,
                    );
                    runner.deliver(t, DecisionEvent::Judgment(j))?;
                }
            }
            Policy::Proactive => {
                if !runner.visual_done && runner.state == RobotState::Navigating {
                    runner.visual_done = true;
                    let report = crate::perception::distance_matrix(scene);
                    let response = build_prompt(
                        scene,
                        &report,
                        PromptVariant::VisionPlusDepth,
                        &ep.rules,
                    )
                    .and_then(|bundle| query_backend(&bundle, scene, backend, &ep.rules))
                    .map_err(|source| SimError::Backend { tick_s: t, source })?;
                    let j = response.to_judgment(JudgmentSource::Mock);
                    runner.deliver(t, DecisionEvent::Judgment(j))?;
                }
                // close-range LiDAR fallback: a false negative drives the
                // robot to the safety stop, where the obstruction is
                // undeniable and a query is raised from ground truth
                if !runner.lidar_done
                    && runner.world.blocked
                    && matches!(runner.state, RobotState::Navigating | RobotState::Proceeding)
                    && runner.traveled >= runner.world.block_dist - 1e-9
                {
                    runner.lidar_done = true;
                    let j = SceneJudgment::new(
                        true,
                        runner.world.truth.interaction,
                        String::new(),
                        JudgmentSource::Oracle,
                    );
                    runner.deliver(t, DecisionEvent::Judgment(j))?;
                }
            }
        }
        runner.normalize(t)?;

        // 4. dialogue: zero-latency replies while a query is open
        while runner.state == RobotState::Querying {
            let Some(reply) = runner.next_reply() else { break };
            if interpret_reply(&reply) == ReplyIntent::Unclear && runner.reasks >= 1 {
                // a second unclear answer after the one allowed re-ask:
                // give up on dialogue and fall back to timeout semantics
                runner
                    .trace
                    .dialogue
                    .push(DialogueLine { speaker: Speaker::Human, text: reply });
                runner.timer = None;
                runner.deliver(t, DecisionEvent::Timeout)?;
                break;
            }
            if interpret_reply(&reply) == ReplyIntent::Unclear {
                runner.reasks += 1;
            }
            runner.deliver(t, DecisionEvent::HumanReply(reply))?;
        }
        runner.normalize(t)?;

        // 5. motion and arrival
        if matches!(runner.state, RobotState::Navigating | RobotState::Proceeding) {
            let limit = if runner.world.blocked {
                runner.world.block_dist
            } else {
                runner.world.goal_dist
            };
            runner.traveled = (runner.traveled + ep.speed_mps).min(limit);
            if !runner.world.blocked && runner.traveled >= runner.world.goal_dist - 1e-9 {
                runner.deliver(t, DecisionEvent::GoalReached)?;
            }
        }

        if runner.state == RobotState::Arrived {
            break;
        }

        // 6. accounting for the second [t, t+1)
        if runner.state.is_idle() {
            runner.trace.idle_s += 1;
        } else if runner.state == RobotState::Reallocated {
            runner.trace.reallocated_s += 1;
        }
        t += 1;
    }

    runner.trace.duration_s = runner.arrived_at.unwrap_or(t);
    Ok(runner.trace)
}

/// Run matched seeded pairs (same scene, both policies) and summarise.
pub fn compare_policies(
    spec: &ScenarioSpec,
    ep: &EpisodeConfig,
    backend: &BackendConfig,
    episodes: usize,
) -> Result<PolicyComparison, SimError> {
    if episodes == 0 {
        return Err(SimError::InvalidSpec { detail: "episodes must be at least 1".into() });
    }
    let mut gen_spec = spec.clone();
    gen_spec.count = episodes;
    gen_spec.validate()?;

    let results: Result<Vec<(u64, u64, u64)>, SimError> = (0..episodes)
        .into_par_iter()
        .map(|i| {
            let scene = generate_scene(&gen_spec, &ep.rules, i)?;
            let pro = run_episode_on_scene(&scene, &gen_spec, ep, Policy::Proactive, backend)?;
            let pas = run_episode_on_scene(&scene, &gen_spec, ep, Policy::Passive, backend)?;
            Ok((pro.idle_s, pas.idle_s, pro.reallocated_s))
        })
        .collect();
    let results = results?;

    let n = episodes as f64;
    let saved: Vec<f64> =
        results.iter().map(|(pro, pas, _)| *pas as f64 - *pro as f64).collect();
    let mean_saved = saved.iter().sum::<f64>() / n;
    let saved_sd = if episodes > 1 {
        (saved.iter().map(|s| (s - mean_saved).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };

    Ok(PolicyComparison {
        episodes,
        mean_idle_proactive_s: results.iter().map(|r| r.0 as f64).sum::<f64>() / n,
        mean_idle_passive_s: results.iter().map(|r| r.1 as f64).sum::<f64>() / n,
        mean_reallocated_proactive_s: results.iter().map(|r| r.2 as f64).sum::<f64>() / n,
        mean_saved_s: mean_saved,
        saved_sd_s: saved_sd,
        min_saved_s: saved.iter().cloned().fold(f64::INFINITY, f64::min),
        max_saved_s: saved.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    })
}
