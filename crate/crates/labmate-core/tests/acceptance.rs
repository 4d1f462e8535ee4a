//! Acceptance suite: one test per shipped guarantee, each printing a
//! PASS line with its measured numbers (visible with `--nocapture`).
//!
//! Run with: `cargo test -p labmate-core --test acceptance`

use std::time::Instant;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use labmate_core::decision::{step_fsm, DecisionEvent, Policy, RobotState};
use labmate_core::eval::{
    aggregate_folds, delta_table, joint_accuracy, kfold_split, AccuracyCell,
};
use labmate_core::perception::{
    back_project, distance_matrix, BBox, CameraIntrinsics, ClassLabel, Detection, EntityId,
    PerceptionError, Position3, RigidTransform, Scenario, Scene, SceneObject,
};
use labmate_core::reasoning::{mock_judgment, parse_response, BackendConfig};
use labmate_core::rules::{JudgmentSource, RuleConfig, SceneJudgment};
use labmate_core::sim::{
    compare_policies, generate_scene, run_episode, EpisodeConfig, ScenarioSpec,
};

fn scene_of(objects: Vec<SceneObject>, goal: Position3) -> Scene {
    Scene {
        scene_id: "acceptance".into(),
        scenario: Scenario::Unknown,
        objects,
        goal: Some(goal),
        image_ref: None,
        truth: None,
        warnings: Vec::new(),
    }
}

/// Criterion 1: the distance matrix matches an independent brute-force
/// pairwise loop bitwise on 1,000 seeded scenes of up to 8 objects.
#[test]
fn criterion_01_distance_matrix_matches_brute_force_bitwise() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xD157);
    let mut pairs_checked = 0usize;

    for _ in 0..1_000 {
        let n = rng.random_range(0..=8usize);
        let mut objects = Vec::with_capacity(n);
        let mut counts = [0u32; 3];
        for _ in 0..n {
            let li = rng.random_range(0..3usize);
            let label = ClassLabel::ALL[li];
            let instance_id = counts[li];
            counts[li] += 1;
            objects.push(SceneObject {
                label,
                instance_id,
                position: Position3::new(
                    rng.random_range(-6.0..6.0),
                    rng.random_range(-6.0..6.0),
                    rng.random_range(-1.0..2.0),
                ),
            });
        }
        let scene = scene_of(objects, Position3::new(4.0, 0.0, 0.0));
        let report = distance_matrix(&scene);

        // independent oracle: explicit double loop over entities
        let mut entities: Vec<(EntityId, Position3)> = scene
            .objects
            .iter()
            .map(|o| (EntityId::Object { label: o.label, instance_id: o.instance_id }, o.position))
            .collect();
        entities.push((EntityId::Robot, Position3::new(0.0, 0.0, 0.0)));
        let mut expected_pairs = 0usize;
        for i in 0..entities.len() {
            for j in 0..entities.len() {
                if i == j {
                    assert_eq!(report.get(entities[i].0, entities[j].0), None);
                    continue;
                }
                let (pa, pb) = (entities[i].1, entities[j].1);
                let dx = pa.x - pb.x;
                let dy = pa.y - pb.y;
                let dz = pa.z - pb.z;
                let expected = (dx * dx + dy * dy + dz * dz).sqrt();
                let got = report.get(entities[i].0, entities[j].0).unwrap();
                assert_eq!(got.to_bits(), expected.to_bits(), "pair {i},{j} differs");
                if i < j {
                    expected_pairs += 1;
                }
                pairs_checked += 1;
            }
        }
        assert_eq!(report.len(), expected_pairs);
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}, budget 1 s");
    println!(
        "criterion 01 distance-matrix oracle equivalence: PASS \
         ({pairs_checked} pairs bitwise-equal in {elapsed:?})"
    );
}

fn rotation_from_axis_angle(axis: [f64; 3], angle: f64) -> [[f64; 3]; 3] {
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let (x, y, z) = (axis[0] / n, axis[1] / n, axis[2] / n);
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ]
}

/// Criterion 2: 10,000 random points survive project -> back_project
/// within 1e-9 m; the principal-point and degenerate-depth cases behave.
#[test]
fn criterion_02_pinhole_round_trip() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xCA11);
    let mut worst = 0.0f64;

    for _ in 0..10_000 {
        let cam = CameraIntrinsics {
            fx: rng.random_range(200.0..1200.0),
            fy: rng.random_range(200.0..1200.0),
            cx: rng.random_range(100.0..900.0),
            cy: rng.random_range(100.0..900.0),
            extrinsic: RigidTransform {
                rotation: rotation_from_axis_angle(
                    [
                        rng.random_range(0.1..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    ],
                    rng.random_range(-1.5..1.5),
                ),
                translation: [
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-1.0..1.0),
                ],
            },
        };
        let cam_pt = Position3::new(
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(0.2..8.0),
        );
        let robot_pt = cam.extrinsic.apply(&cam_pt);

        // independent projector (the inverse path, written out here)
        let u = cam.fx * cam_pt.x / cam_pt.z + cam.cx;
        let v = cam.fy * cam_pt.y / cam_pt.z + cam.cy;
        let det = Detection {
            label: ClassLabel::HumanChemist,
            instance_id: 0,
            bbox: BBox { u_min: u - 3.0, v_min: v - 3.0, u_max: u + 3.0, v_max: v + 3.0 },
            depth_m: Some(cam_pt.z),
            confidence: 1.0,
        };
        let recovered = back_project(&det, &cam).unwrap();
        worst = worst.max(recovered.distance(&robot_pt));
    }
    assert!(worst < 1e-9, "worst round-trip error {worst}");

    // principal-point ray
    let cam = CameraIntrinsics {
        fx: 600.0,
        fy: 600.0,
        cx: 320.0,
        cy: 240.0,
        extrinsic: RigidTransform::identity(),
    };
    let det = |depth: Option<f64>| Detection {
        label: ClassLabel::Fumehood,
        instance_id: 0,
        bbox: BBox { u_min: 310.0, v_min: 230.0, u_max: 330.0, v_max: 250.0 },
        depth_m: depth,
        confidence: 1.0,
    };
    let p = back_project(&det(Some(1.5)), &cam).unwrap();
    assert_eq!((p.x, p.y, p.z), (0.0, 0.0, 1.5));
    for bad in [Some(0.0), Some(-1.0), Some(f64::NAN), None] {
        assert!(matches!(
            back_project(&det(bad), &cam),
            Err(PerceptionError::DegenerateDepth { .. })
        ));
    }

    let elapsed = start.elapsed();
    println!(
        "criterion 02 pinhole round-trip: PASS (10,000 points, worst error {worst:.3e} m, \
         {elapsed:?})"
    );
}

/// Criterion 3: 10,000 generated scenes contain zero
/// (obstruction=false, interaction=true) truth labels.
#[test]
fn criterion_03_taxonomy_excludes_fourth_class() {
    let start = Instant::now();
    let rules = RuleConfig::default();
    let mut checked = 0usize;
    for (scenario, seed) in [(Scenario::S1, 101u64), (Scenario::S2, 202), (Scenario::S3, 303)] {
        let spec = ScenarioSpec {
            scenario,
            count: 3_334,
            seed,
            ..ScenarioSpec::default()
        };
        for index in 0..spec.count {
            let scene = generate_scene(&spec, &rules, index).unwrap();
            let truth = scene.truth.expect("generated scenes carry truth");
            assert!(
                !(truth.interaction && !truth.obstruction),
                "{}: fourth class emitted",
                scene.scene_id
            );
            // label fidelity: the stored truth is exactly what the oracle
            // says about the emitted (noise-free) scene
            let oracle = labmate_core::rules::classify_scene(&scene, &rules).unwrap();
            assert_eq!(
                oracle.labels(),
                (truth.obstruction, truth.interaction),
                "{}: stored truth diverges from the oracle",
                scene.scene_id
            );
            checked += 1;
        }
    }
    assert!(checked >= 10_000);
    let elapsed = start.elapsed();
    println!(
        "criterion 03 taxonomy exclusion: PASS ({checked} scenes, zero fourth-class labels, \
         oracle-faithful truth, {elapsed:?})"
    );
}

/// Criterion 4: the published twelve-cell table reproduces the improvement
/// and ablation deltas exactly.
#[test]
fn criterion_04_delta_arithmetic_reproduction() {
    let text = std::fs::read_to_string(
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/table1.json"),
    )
    .expect("fixtures/table1.json");
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    let cells: Vec<AccuracyCell> =
        serde_json::from_value(value["cells"].clone()).expect("cell table");

    let deltas = delta_table(&cells).unwrap();
    assert_eq!(deltas.fine_tune_gain[&Scenario::S1], 59);
    assert_eq!(deltas.fine_tune_gain[&Scenario::S2], 74);
    assert_eq!(deltas.fine_tune_gain[&Scenario::S3], 47);
    assert_eq!(deltas.depth_effect[&Scenario::S1], -18);
    assert_eq!(deltas.depth_effect[&Scenario::S2], 0);
    assert_eq!(deltas.depth_effect[&Scenario::S3], -8);
    println!(
        "criterion 04 delta arithmetic: PASS (gains +59/+74/+47, depth deltas -18/0/-8)"
    );
}

/// Criterion 5: mock fidelity. Epsilon 0.1 lands within 81 +/- 2 percent
/// joint accuracy over 6,000 scenes; epsilon 0 scores exactly 100.
#[test]
fn criterion_05_mock_statistical_fidelity() {
    let start = Instant::now();
    let rules = RuleConfig::default();
    let spec = ScenarioSpec {
        scenario: Scenario::S1,
        count: 6_000,
        seed: 555,
        ..ScenarioSpec::default()
    };

    let scenes: Vec<Scene> =
        (0..spec.count).map(|i| generate_scene(&spec, &rules, i).unwrap()).collect();
    let truths: Vec<(bool, bool)> = scenes
        .iter()
        .map(|s| {
            let t = s.truth.unwrap();
            (t.obstruction, t.interaction)
        })
        .collect();

    let run = |epsilon: f64| -> f64 {
        let backend = BackendConfig { epsilon, seed: 9, ..BackendConfig::default() };
        let preds: Vec<Option<SceneJudgment>> = scenes
            .iter()
            .map(|scene| {
                let resp = mock_judgment(scene, &backend, &rules).unwrap();
                Some(SceneJudgment::new(
                    resp.obstruction,
                    resp.interaction,
                    resp.message,
                    JudgmentSource::Mock,
                ))
            })
            .collect();
        joint_accuracy(&preds, &truths).unwrap()
    };

    let exact = run(0.0);
    assert_eq!(exact, 100.0, "noiseless mock must reproduce the oracle exactly");
    let noisy = run(0.1);
    assert!(
        (noisy - 81.0).abs() <= 2.0,
        "epsilon 0.1 gave {noisy:.2}%, expected 81 +/- 2"
    );

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}, budget 30 s");
    println!(
        "criterion 05 mock fidelity: PASS (eps=0 -> 100.00%, eps=0.1 -> {noisy:.2}% over 6,000 \
         scenes, {elapsed:?})"
    );
}

/// Criterion 6: cross-validation partitions for n in {10, 3270}, k=5.
#[test]
fn criterion_06_cross_validation_partition() {
    for n in [10usize, 3_270] {
        let strata: Vec<String> = (0..n)
            .map(|i| format!("s{}/{}", i % 3, ["oi", "ne", "oo"][(i / 3) % 3]))
            .collect();
        let a = kfold_split(n, 5, 77, &strata).unwrap();
        let b = kfold_split(n, 5, 77, &strata).unwrap();
        assert_eq!(a, b, "same seed must reproduce the same split");

        let mut seen = vec![0usize; n];
        for fold in 0..5 {
            for i in a.test_indices(fold) {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1), "every index in exactly one test fold");
        let sizes = a.fold_sizes();
        let (min, max) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        assert!(max - min <= 1, "fold sizes {sizes:?}");
    }
    println!("criterion 06 cross-validation partition: PASS (n=10 and n=3270, k=5)");
}

/// Criterion 7: joint-label accuracy scores 100(n-m)/n when exactly one of
/// two labels is wrong on m of n records.
#[test]
fn criterion_07_joint_label_metric() {
    for (n, m) in [(10usize, 1usize), (10, 3), (4, 1), (8, 8), (5, 0)] {
        let truths: Vec<(bool, bool)> = (0..n).map(|_| (true, true)).collect();
        let preds: Vec<Option<SceneJudgment>> = (0..n)
            .map(|i| {
                let wrong = i < m;
                // exactly one label off on the wrong records
                Some(SceneJudgment::new(true, !wrong, String::new(), JudgmentSource::Mock))
            })
            .collect();
        let acc = joint_accuracy(&preds, &truths).unwrap();
        let expected = 100.0 * (n - m) as f64 / n as f64;
        assert_eq!(acc, expected, "n={n} m={m}");
    }
    // the mean/spread aggregation the cells rely on, hand-checked
    let stats = aggregate_folds(&[90.0, 92.0, 94.0, 96.0, 98.0]).unwrap();
    assert_eq!((stats.mean_rounded, stats.sd_rounded), (94, 3));
    println!("criterion 07 joint-label metric: PASS (100(n-m)/n for all constructed batches)");
}

/// Criterion 8: 100,000 random byte strings never crash the parser, and
/// every mock-emitted response round-trips exactly.
#[test]
fn criterion_08_parser_totality_fuzz() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xF022);
    let mut parsed_ok = 0usize;
    for _ in 0..100_000 {
        let len = rng.random_range(0..200usize);
        let bytes: Vec<u8> = (0..len).map(|_| rng.random()).collect();
        let text = String::from_utf8_lossy(&bytes);
        if parse_response(&text).is_ok() {
            parsed_ok += 1;
        }
    }

    // mock round-trip across scene classes and noise levels
    let rules = RuleConfig::default();
    let spec = ScenarioSpec {
        scenario: Scenario::S3,
        count: 500,
        seed: 88,
        ..ScenarioSpec::default()
    };
    for eps in [0.0, 0.25, 1.0] {
        let backend = BackendConfig { epsilon: eps, seed: 12, ..BackendConfig::default() };
        for index in 0..spec.count {
            let scene = generate_scene(&spec, &rules, index).unwrap();
            let resp = mock_judgment(&scene, &backend, &rules).unwrap();
            let reparsed = parse_response(&resp.raw).unwrap();
            assert_eq!(
                (reparsed.obstruction, reparsed.interaction, reparsed.message),
                (resp.obstruction, resp.interaction, resp.message),
                "mock response failed to round-trip: {:?}",
                resp.raw
            );
        }
    }

    let elapsed = start.elapsed();
    println!(
        "criterion 08 parser totality: PASS (100,000 fuzz inputs, {parsed_ok} incidental \
         parses, 1,500 mock round-trips, {elapsed:?})"
    );
}

/// Criterion 9: proactive idle never exceeds passive idle across 1,000
/// matched episodes at each epsilon in {0, 0.1, 0.5}; the noiseless
/// flagship setup saves exactly 55 s on average.
#[test]
fn criterion_09_policy_dominance() {
    let start = Instant::now();
    let ep = EpisodeConfig::default();

    for (eps, seed) in [(0.0, 1u64), (0.1, 2), (0.5, 3)] {
        let spec = ScenarioSpec {
            scenario: Scenario::S1,
            count: 1_000,
            seed,
            occupancy_s: 60,
            ..ScenarioSpec::default()
        };
        let backend = BackendConfig { epsilon: eps, seed, ..BackendConfig::default() };
        for index in 0..spec.count {
            let pro = run_episode(&spec, &ep, Policy::Proactive, &backend, index).unwrap();
            let pas = run_episode(&spec, &ep, Policy::Passive, &backend, index).unwrap();
            assert!(
                pro.idle_s <= pas.idle_s,
                "eps={eps} episode {index}: proactive idle {} > passive idle {}",
                pro.idle_s,
                pas.idle_s
            );
        }
    }

    // exact arithmetic for the flagship scenario
    let spec = ScenarioSpec {
        scenario: Scenario::S1,
        count: 1_000,
        seed: 4,
        occupancy_s: 60,
        class_mix: [1.0, 0.0, 0.0],
        ..ScenarioSpec::default()
    };
    let summary =
        compare_policies(&spec, &ep, &BackendConfig::default(), 1_000).unwrap();
    assert_eq!(summary.mean_saved_s, 55.0);
    assert_eq!(summary.saved_sd_s, 0.0);
    assert_eq!(summary.mean_idle_passive_s, 60.0);
    assert_eq!(summary.mean_idle_proactive_s, 5.0);

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}, budget 60 s");
    println!(
        "criterion 09 policy dominance: PASS (3,000 matched pairs dominated; exact saving \
         55 s at eps=0, {elapsed:?})"
    );
}

/// Criterion 10: the FSM transition table is closed over every reachable
/// (state, event, policy) triple, and no obstruction judgment transitions
/// directly into Proceeding.
#[test]
fn criterion_10_fsm_table_closure() {
    fn judgment(o: bool, i: bool) -> DecisionEvent {
        DecisionEvent::Judgment(SceneJudgment::new(o, i, String::new(), JudgmentSource::Mock))
    }

    // events the episode runner can deliver per state
    fn deliverable(state: RobotState, policy: Policy) -> Vec<DecisionEvent> {
        let all_judgments = || {
            [(true, true), (true, false), (false, false), (false, true)]
                .into_iter()
                .map(|(o, i)| judgment(o, i))
        };
        match (policy, state) {
            (_, RobotState::Navigating | RobotState::Proceeding) => all_judgments()
                .chain([DecisionEvent::PathClear, DecisionEvent::GoalReached])
                .collect(),
            (Policy::Proactive, RobotState::Querying) => all_judgments()
                .chain([
                    DecisionEvent::HumanReply("yes, please wait a moment.".into()),
                    DecisionEvent::HumanReply("no, go ahead".into()),
                    DecisionEvent::HumanReply("???".into()),
                    DecisionEvent::Timeout,
                    DecisionEvent::PathClear,
                ])
                .collect(),
            (Policy::Proactive, RobotState::WaitingOnHuman) => all_judgments()
                .chain([DecisionEvent::Timeout, DecisionEvent::PathClear])
                .collect(),
            (Policy::Proactive, RobotState::Reallocated) | (_, RobotState::PassiveWaiting) => {
                all_judgments().chain([DecisionEvent::PathClear]).collect()
            }
            _ => vec![],
        }
    }

    let mut transitions_checked = 0usize;
    for policy in [Policy::Proactive, Policy::Passive] {
        let mut frontier = vec![RobotState::Navigating];
        let mut reached = std::collections::BTreeSet::new();
        reached.insert(RobotState::Navigating.as_str());
        while let Some(state) = frontier.pop() {
            for event in deliverable(state, policy) {
                let (next, _) = step_fsm(state, &event, policy).unwrap_or_else(|e| {
                    panic!("undefined reachable transition under {policy}: {e}")
                });
                if let DecisionEvent::Judgment(j) = &event {
                    if j.obstruction || j.interaction {
                        assert_ne!(
                            next,
                            RobotState::Proceeding,
                            "{policy}: blocking judgment in {state} proceeded directly"
                        );
                    }
                }
                transitions_checked += 1;
                if reached.insert(next.as_str()) {
                    frontier.push(next);
                }
            }
        }
        // the passive policy must never reach the dialogue states
        if policy == Policy::Passive {
            assert!(!reached.contains(RobotState::Querying.as_str()));
            assert!(!reached.contains(RobotState::WaitingOnHuman.as_str()));
            assert!(!reached.contains(RobotState::Reallocated.as_str()));
        }
    }

    // pairs outside the table surface the typed error rather than a panic
    assert!(step_fsm(
        RobotState::Arrived,
        &DecisionEvent::PathClear,
        Policy::Proactive
    )
    .is_err());
    assert!(step_fsm(
        RobotState::Navigating,
        &DecisionEvent::HumanReply("hello".into()),
        Policy::Passive
    )
    .is_err());

    println!(
        "criterion 10 fsm closure: PASS ({transitions_checked} reachable transitions defined, \
         safety preserved)"
    );
}
