//! The robot-side decision state machine.
//!
//! Judgments, human replies and world events drive a small closed
//! transition table. The proactive policy asks the human and reallocates
//! during waits; the passive policy models the status-quo behaviour of
//! silently waiting until the path clears.
//!
//! A judgment claiming obstruction (or, conservatively, an inconsistent
//! one claiming interaction alone) never transitions directly into
//! `Proceeding` under either policy.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::perception::ClassLabel;
use crate::rules::SceneJudgment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobotState {
    Navigating,
    Querying,
    WaitingOnHuman,
    Reallocated,
    PassiveWaiting,
    Proceeding,
    Arrived,
}

impl RobotState {
    pub const ALL: [RobotState; 7] = [
        RobotState::Navigating,
        RobotState::Querying,
        RobotState::WaitingOnHuman,
        RobotState::Reallocated,
        RobotState::PassiveWaiting,
        RobotState::Proceeding,
        RobotState::Arrived,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RobotState::Navigating => "navigating",
            RobotState::Querying => "querying",
            RobotState::WaitingOnHuman => "waiting_on_human",
            RobotState::Reallocated => "reallocated",
            RobotState::PassiveWaiting => "passive_waiting",
            RobotState::Proceeding => "proceeding",
            RobotState::Arrived => "arrived",
        }
    }

    /// States whose dwell time counts as idle.
    pub fn is_idle(&self) -> bool {
        matches!(self, RobotState::WaitingOnHuman | RobotState::PassiveWaiting)
    }
}

impl fmt::Display for RobotState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Proactive,
    Passive,
}

impl Policy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Policy::Proactive => "proactive",
            Policy::Passive => "passive",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Events delivered to the state machine.
///
/// `Timeout` doubles as both timer expiries the runner schedules: the
/// unanswered-query timeout while `Querying` and the reallocation delay
/// while `WaitingOnHuman`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionEvent {
    Judgment(SceneJudgment),
    HumanReply(String),
    Timeout,
    PathClear,
    GoalReached,
}

impl DecisionEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            DecisionEvent::Judgment(_) => "judgment",
            DecisionEvent::HumanReply(_) => "human_reply",
            DecisionEvent::Timeout => "timeout",
            DecisionEvent::PathClear => "path_clear",
            DecisionEvent::GoalReached => "goal_reached",
        }
    }
}

/// Side effects requested by a transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    /// Say this to the human over the text channel.
    EmitMessage(String),
    /// Passage was granted with the human still nearby: move, but slowly.
    ProceedAtReducedSpeed,
}

/// What a human reply means for the pending question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplyIntent {
    WaitRequested,
    ProceedGranted,
    Unclear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    Robot,
    Human,
}

/// One logged FSM transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub t_s: u64,
    pub state: RobotState,
    pub event: DecisionEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueLine {
    pub speaker: Speaker,
    pub text: String,
}

/// Time-stepped record of one episode under one policy.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub transitions: Vec<TraceStep>,
    /// Seconds spent in `WaitingOnHuman` or `PassiveWaiting`.
    pub idle_s: u64,
    /// Seconds spent in `Reallocated` (robot productive elsewhere).
    pub reallocated_s: u64,
    pub dialogue: Vec<DialogueLine>,
    /// Total episode duration in seconds (time of arrival).
    pub duration_s: u64,
}

#[derive(Debug, Error)]
pub enum DecisionError {
    #[error("undefined transition: state `{state}` cannot accept `{event}` under {policy}")]
    UndefinedTransition { state: RobotState, event: &'static str, policy: Policy },
    #[error("no message is needed when the path is not obstructed")]
    NoMessageNeeded,
}

/// Fixed re-ask line used after an unclear reply.
pub const REASK_MESSAGE: &str = "Sorry, I did not catch that. Should I wait until you are done?";

/// The robot's opening line for a given (obstruction, interaction) pair.
/// Requires obstruction; a clear path needs no message.
pub fn compose_message(
    obstruction: bool,
    interaction: bool,
    equipment: ClassLabel,
) -> Result<String, DecisionError> {
    if !obstruction {
        return Err(DecisionError::NoMessageNeeded);
    }
    if interaction {
        Ok(format!("You seem to be using the {}. Shall I wait until you are done?", equipment))
    } else {
        Ok(format!("Excuse me — may I pass to reach the {}?", equipment))
    }
}

/// Keyword classification of a human reply against a small lexicon.
/// Wait cues win over proceed cues; a bare yes/no is read as the answer to
/// "shall I wait?". Anything else is `Unclear`.
pub fn interpret_reply(text: &str) -> ReplyIntent {
    let lower = text.to_lowercase();
    let normalized: String = lower
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    let tokens: Vec<&str> = normalized.split_whitespace().collect();
    let has_word = |w: &str| tokens.contains(&w);
    let has_phrase = |a: &str, b: &str| tokens.windows(2).any(|w| w[0] == a && w[1] == b);

    let wait = has_word("wait") || has_word("moment") || has_word("busy") || has_word("minute")
        || has_phrase("hold", "on") || has_phrase("not", "yet") || has_phrase("one", "sec");
    if wait {
        return ReplyIntent::WaitRequested;
    }

    let proceed = has_phrase("go", "ahead") || has_word("proceed") || has_word("pass")
        || has_phrase("carry", "on") || has_phrase("come", "through") || has_word("clear")
        || has_phrase("feel", "free") || has_phrase("all", "yours");
    if proceed {
        return ReplyIntent::ProceedGranted;
    }

    match (has_word("yes") || has_word("yeah") || has_word("sure"), has_word("no")) {
        (true, false) => ReplyIntent::WaitRequested,
        (false, true) => ReplyIntent::ProceedGranted,
        _ => ReplyIntent::Unclear,
    }
}

/// A judgment blocks when it claims obstruction, or (conservatively) when
/// it is the inconsistent interaction-without-obstruction prediction.
fn judgment_blocks(j: &SceneJudgment) -> bool {
    j.obstruction || j.interaction
}

fn query_message(j: &SceneJudgment) -> String {
    if !j.message.is_empty() {
        return j.message.clone();
    }
    // Oracle and LiDAR-style judgments carry no text; fall back to the
    // standard templates with the flagship equipment.
    let interaction = j.interaction;
    compose_message(true, interaction, ClassLabel::Fumehood)
        .unwrap_or_else(|_| REASK_MESSAGE.to_string())
}

/// One step of the transition table.
///
/// Deterministic in its inputs; every pair outside the table yields
/// `UndefinedTransition`.
pub fn step_fsm(
    state: RobotState,
    event: &DecisionEvent,
    policy: Policy,
) -> Result<(RobotState, Vec<Action>), DecisionError> {
    use DecisionEvent as E;
    use RobotState as S;

    let undefined = || {
        Err(DecisionError::UndefinedTransition { state, event: event.kind(), policy })
    };

    match policy {
        Policy::Proactive => match (state, event) {
            (S::Navigating | S::Proceeding, E::Judgment(j)) => {
                if judgment_blocks(j) {
                    Ok((S::Querying, vec![Action::EmitMessage(query_message(j))]))
                } else {
                    Ok((S::Proceeding, vec![]))
                }
            }
            (S::Navigating | S::Proceeding, E::GoalReached) => Ok((S::Arrived, vec![])),
            (S::Navigating, E::PathClear) => Ok((S::Navigating, vec![])),
            (S::Proceeding, E::PathClear) => Ok((S::Proceeding, vec![])),

            (S::Querying, E::HumanReply(text)) => match interpret_reply(text) {
                ReplyIntent::WaitRequested => Ok((S::WaitingOnHuman, vec![])),
                ReplyIntent::ProceedGranted => {
                    Ok((S::Proceeding, vec![Action::ProceedAtReducedSpeed]))
                }
                ReplyIntent::Unclear => {
                    Ok((S::Querying, vec![Action::EmitMessage(REASK_MESSAGE.to_string())]))
                }
            },
            (S::Querying, E::Timeout) => Ok((S::PassiveWaiting, vec![])),
            (S::Querying, E::PathClear) => Ok((S::Navigating, vec![])),
            (S::Querying, E::Judgment(_)) => Ok((S::Querying, vec![])),

            (S::WaitingOnHuman, E::Timeout) => Ok((S::Reallocated, vec![])),
            (S::WaitingOnHuman, E::PathClear) => Ok((S::Navigating, vec![])),
            (S::WaitingOnHuman, E::Judgment(_)) => Ok((S::WaitingOnHuman, vec![])),

            (S::Reallocated, E::PathClear) => Ok((S::Navigating, vec![])),
            (S::Reallocated, E::Judgment(_)) => Ok((S::Reallocated, vec![])),

            (S::PassiveWaiting, E::PathClear) => Ok((S::Navigating, vec![])),
            (S::PassiveWaiting, E::Judgment(_)) => Ok((S::PassiveWaiting, vec![])),

            _ => undefined(),
        },
        Policy::Passive => match (state, event) {
            (S::Navigating | S::Proceeding, E::Judgment(j)) => {
                if judgment_blocks(j) {
                    // no dialogue: silently wait for the path to clear
                    Ok((S::PassiveWaiting, vec![]))
                } else {
                    Ok((S::Proceeding, vec![]))
                }
            }
            (S::Navigating | S::Proceeding, E::GoalReached) => Ok((S::Arrived, vec![])),
            (S::Navigating, E::PathClear) => Ok((S::Navigating, vec![])),
            (S::Proceeding, E::PathClear) => Ok((S::Proceeding, vec![])),
            (S::PassiveWaiting, E::PathClear) => Ok((S::Navigating, vec![])),
            (S::PassiveWaiting, E::Judgment(_)) => Ok((S::PassiveWaiting, vec![])),
            _ => undefined(),
        },
    }
}
