//! labmate-core: decision pipeline for a mobile robot sharing a lab with
//! human chemists.
//!
//! The crate is organised as a pipeline:
//!
//! - [`perception`] ingests labelled detections, lifts them to 3D in the
//!   robot frame and computes the pairwise distance matrix.
//! - [`rules`] is the geometric ground-truth oracle producing
//!   (obstruction, interaction) labels from distance thresholds.
//! - [`reasoning`] builds the standardised scene prompt, talks to a
//!   language-model backend (HTTP or deterministic mock) and parses the
//!   structured `Obstruction/Interaction/Message` response.
//! - [`decision`] is the robot-side state machine that turns judgments
//!   into proceed / query / wait behaviour and accounts idle time.
//! - [`sim`] generates seeded scenes for the three lab scenarios and runs
//!   discrete-event episodes comparing proactive vs passive policies.
//! - [`eval`] is the k-fold evaluation harness with joint-label accuracy,
//!   mean/spread aggregation and delta tables.

pub mod decision;
pub mod eval;
pub mod perception;
pub mod reasoning;
pub mod rules;
pub mod seeding;
pub mod sim;
