//! Seeded scene generator for the three interaction scenarios.
//!
//! Placement targets a requested class with a safety margin around every
//! threshold, the truth labels are then recomputed with the noise-free
//! rule oracle (never assumed), and only afterwards is sensor noise
//! applied to the emitted positions.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::perception::{
    scene_to_record, ClassLabel, Position3, Scenario, Scene, SceneObject, TruthLabels,
};
use crate::rules::{classify_scene, point_segment_distance, RuleConfig, ScenarioClass};
use crate::seeding;

use super::{ScenarioSpec, SimError};

/// Clearance kept between any placement and the threshold it must not
/// cross, so 1e-6 coordinate rounding and float noise can never flip a
/// label.
const MARGIN_M: f64 = 0.25;
const MAX_TRIES: u32 = 1_000;

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

fn rounded(p: &Position3) -> Position3 {
    Position3::new(round6(p.x), round6(p.y), round6(p.z))
}

/// Largest-remainder allocation of `count` records over the class mix.
fn class_quotas(count: usize, mix: [f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = mix.iter().map(|p| p * count as f64).collect();
    let mut quotas = [0usize; 3];
    let mut assigned = 0usize;
    for (i, e) in exact.iter().enumerate() {
        quotas[i] = e.floor() as usize;
        assigned += quotas[i];
    }
    let mut order: Vec<usize> = (0..3).collect();
    // largest fractional remainder first, ties broken by class order
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    let mut i = 0;
    while assigned < count {
        quotas[order[i % 3]] += 1;
        assigned += 1;
        i += 1;
    }
    quotas
}

/// Deterministic per-index class schedule: quota copies of each class,
/// shuffled with a generator derived from the spec seed.
fn class_schedule(spec: &ScenarioSpec) -> Vec<ScenarioClass> {
    let quotas = class_quotas(spec.count, spec.class_mix);
    let mut schedule = Vec::with_capacity(spec.count);
    for (class, &q) in ScenarioClass::ALL.iter().zip(quotas.iter()) {
        schedule.extend(std::iter::repeat_n(*class, q));
    }
    let mut rng =
        seeding::rng_for(spec.seed, &format!("class-schedule/{}", spec.scenario));
    // Fisher-Yates with an explicit loop keeps the draw count stable.
    for i in (1..schedule.len()).rev() {
        let j = rng.random_range(0..=i);
        schedule.swap(i, j);
    }
    schedule
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

struct Placer<'a> {
    spec: &'a ScenarioSpec,
    rules: &'a RuleConfig,
    rng: ChaCha8Rng,
}

impl Placer<'_> {
    fn in_room(&self, p: &Position3) -> bool {
        self.spec.room.contains(p.x, p.y)
    }

    /// A point within `radius` of `center`, inside the room.
    fn near(&mut self, center: &Position3, r_min: f64, r_max: f64) -> Option<Position3> {
        for _ in 0..MAX_TRIES {
            let r = uniform(&mut self.rng, r_min, r_max);
            let theta = uniform(&mut self.rng, 0.0, std::f64::consts::TAU);
            let p = Position3::new(center.x + r * theta.cos(), center.y + r * theta.sin(), 0.0);
            if self.in_room(&p) {
                return Some(p);
            }
        }
        None
    }

    /// A point on the robot→goal corridor, strictly inside its half-width,
    /// at least `t_interact + margin` away from every equipment position.
    fn on_corridor(&mut self, goal: &Position3, equipment: &[Position3]) -> Option<Position3> {
        let len = goal.norm();
        let t_int = self.rules.t_interact_m;
        let hw = self.rules.corridor_halfwidth_m;
        let dir = goal.scale(1.0 / len);
        let perp = Position3::new(-dir.y, dir.x, 0.0);
        let s_max = len - (t_int + MARGIN_M);
        if s_max <= 0.6 {
            return None;
        }
        for _ in 0..MAX_TRIES {
            let s = uniform(&mut self.rng, 0.6, s_max);
            let d = uniform(&mut self.rng, -(hw - 0.05).max(0.01), (hw - 0.05).max(0.01));
            let p = dir.scale(s).add(&perp.scale(d));
            let clear = equipment.iter().all(|e| p.distance(e) > t_int + MARGIN_M);
            if self.in_room(&p) && clear && hw - d.abs() > 0.02 {
                return Some(p);
            }
        }
        None
    }

    /// A point clear of the corridor and of all equipment.
    fn in_free_space(
        &mut self,
        goal: &Position3,
        equipment: &[Position3],
        others: &[Position3],
    ) -> Option<Position3> {
        let t_int = self.rules.t_interact_m;
        let hw = self.rules.corridor_halfwidth_m;
        for _ in 0..MAX_TRIES {
            let x = uniform(&mut self.rng, 0.3, self.spec.room.length_m - 0.3);
            let y_half = self.spec.room.width_m / 2.0 - 0.3;
            let y = uniform(&mut self.rng, -y_half, y_half);
            let p = Position3::new(x, y, 0.0);
            let off_corridor =
                point_segment_distance(&p, &Position3::ORIGIN, goal) > hw + MARGIN_M;
            let off_equipment = equipment.iter().all(|e| p.distance(e) > t_int + MARGIN_M);
            let off_others = others.iter().all(|o| p.distance(o) > 0.4);
            let off_robot = p.norm() > 0.8;
            if off_corridor && off_equipment && off_others && off_robot {
                return Some(p);
            }
        }
        None
    }

    fn std_normal(&mut self) -> f64 {
        <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut self.rng)
    }
}

struct Layout {
    goal: Position3,
    equipment: Vec<(ClassLabel, Position3)>,
    humans: Vec<Position3>,
}

fn place_scene(
    placer: &mut Placer,
    scenario: Scenario,
    class: ScenarioClass,
) -> Option<Layout> {
    let spec = placer.spec;
    let t_int = placer.rules.t_interact_m;
    let room = spec.room;

    // Equipment first. The fumehood sits deep in the room; S2/S3 put the
    // goal elsewhere so path obstruction is distinct from equipment use.
    let fumehood = Position3::new(
        uniform(&mut placer.rng, room.length_m * 0.5, room.length_m - 0.5),
        uniform(&mut placer.rng, -(room.width_m / 2.0 - 0.6), room.width_m / 2.0 - 0.6),
        0.0,
    );
    let mut equipment = vec![(ClassLabel::Fumehood, fumehood)];

    let goal = match scenario {
        Scenario::S1 => fumehood,
        _ => {
            // an off-equipment target at least 2 m from the fumehood
            let mut g = None;
            for _ in 0..MAX_TRIES {
                let cand = Position3::new(
                    uniform(&mut placer.rng, room.length_m * 0.6, room.length_m - 0.4),
                    uniform(&mut placer.rng, -(room.width_m / 2.0 - 0.5), room.width_m / 2.0 - 0.5),
                    0.0,
                );
                if cand.distance(&fumehood) > t_int + 2.0 * MARGIN_M + 1.0 {
                    g = Some(cand);
                    break;
                }
            }
            g?
        }
    };

    // S3 always carries a second piece of equipment; S1/S2 half the time.
    let want_instrument = scenario == Scenario::S3 || placer.rng.random::<f64>() < 0.5;
    if want_instrument {
        let eq_positions: Vec<Position3> = equipment.iter().map(|(_, p)| *p).collect();
        if let Some(p) = placer.in_free_space(&goal, &eq_positions, &[]) {
            equipment.push((ClassLabel::Instrument, p));
        }
    }
    let eq_positions: Vec<Position3> = equipment.iter().map(|(_, p)| *p).collect();

    let n_humans = match scenario {
        Scenario::S3 => 2 + usize::from(placer.rng.random::<f64>() < 0.5),
        _ => 1,
    };

    let mut humans: Vec<Position3> = Vec::with_capacity(n_humans);

    // the first human realises the requested class
    let first = match class {
        ScenarioClass::ObstructInteract => {
            // close enough to some equipment to interact; interaction
            // implies obstruction under the oracle
            let target = if scenario == Scenario::S1 || equipment.len() == 1 {
                equipment[0].1
            } else {
                let pick = placer.rng.random_range(0..equipment.len());
                equipment[pick].1
            };
            placer.near(&target, 0.15, (t_int - MARGIN_M).max(0.16))?
        }
        ScenarioClass::ObstructOnly => placer.on_corridor(&goal, &eq_positions)?,
        ScenarioClass::Neither => placer.in_free_space(&goal, &eq_positions, &[])?,
    };
    humans.push(first);

    // remaining humans (S3) must not override the requested class
    for _ in 1..n_humans {
        let p = match class {
            // anything non-interacting keeps (T,T) and (T,F) intact, and
            // for Neither it must stay off the corridor too
            ScenarioClass::ObstructInteract => {
                // free to do anything except collide
                let roll: f64 = placer.rng.random();
                if roll < 0.4 {
                    placer.on_corridor(&goal, &eq_positions).or_else(|| {
                        placer.in_free_space(&goal, &eq_positions, &humans)
                    })?
                } else {
                    placer.in_free_space(&goal, &eq_positions, &humans)?
                }
            }
            ScenarioClass::ObstructOnly => {
                let roll: f64 = placer.rng.random();
                if roll < 0.5 {
                    placer.on_corridor(&goal, &eq_positions).or_else(|| {
                        placer.in_free_space(&goal, &eq_positions, &humans)
                    })?
                } else {
                    placer.in_free_space(&goal, &eq_positions, &humans)?
                }
            }
            ScenarioClass::Neither => placer.in_free_space(&goal, &eq_positions, &humans)?,
        };
        humans.push(p);
    }

    Some(Layout { goal, equipment, humans })
}

fn layout_to_scene(scene_id: String, scenario: Scenario, layout: &Layout) -> Scene {
    let mut objects = Vec::with_capacity(layout.equipment.len() + layout.humans.len());
    let mut instrument_count = 0u32;
    for (label, p) in &layout.equipment {
        let instance_id = match label {
            ClassLabel::Instrument => {
                instrument_count += 1;
                instrument_count - 1
            }
            _ => 0,
        };
        objects.push(SceneObject { label: *label, instance_id, position: *p });
    }
    for (i, p) in layout.humans.iter().enumerate() {
        objects.push(SceneObject {
            label: ClassLabel::HumanChemist,
            instance_id: i as u32,
            position: *p,
        });
    }
    Scene {
        scene_id,
        scenario,
        objects,
        goal: Some(layout.goal),
        image_ref: None,
        truth: None,
        warnings: Vec::new(),
    }
}

/// Generate the scene at `index` with an explicit target class.
///
/// Deterministic per (seed, scenario, index): the same triple always
/// produces a byte-identical record.
pub fn generate_scene_of_class(
    spec: &ScenarioSpec,
    rules: &RuleConfig,
    index: usize,
    class: ScenarioClass,
) -> Result<Scene, SimError> {
    spec.validate()?;
    rules.validate()?;
    if spec.room.length_m < rules.t_interact_m + 2.0 * MARGIN_M + 1.5 {
        return Err(SimError::InfeasiblePlacement {
            scenario: spec.scenario,
            class,
            tries: 0,
        });
    }

    let rng = seeding::rng_for_indexed(
        spec.seed,
        &format!("scene/{}", spec.scenario),
        index as u64,
    );
    let mut placer = Placer { spec, rules, rng };

    let mut attempts = 0u32;
    let mut scene = loop {
        attempts += 1;
        if attempts > MAX_TRIES {
            return Err(SimError::InfeasiblePlacement {
                scenario: spec.scenario,
                class,
                tries: attempts - 1,
            });
        }
        if let Some(layout) = place_scene(&mut placer, spec.scenario, class) {
            let scene_id = format!("{}-{:016x}-{:06}", spec.scenario, spec.seed, index);
            let candidate = layout_to_scene(scene_id, spec.scenario, &layout);
            // truth always comes from the oracle; placement only aims
            let judgment = classify_scene(&candidate, rules)?;
            if judgment.labels() == class.labels() {
                break candidate;
            }
        }
    };

    let truth = classify_scene(&scene, rules)?;
    scene.truth =
        Some(TruthLabels { obstruction: truth.obstruction, interaction: truth.interaction });

    // sensor noise on emitted positions, after truth is frozen
    let noise = spec.noise;
    let mut noisy_objects = Vec::with_capacity(scene.objects.len());
    for obj in scene.objects.drain(..) {
        let dropped = placer.rng.random::<f64>() < noise.dropout_p;
        let jitter = Position3::new(
            placer.std_normal() * noise.pos_sigma_m,
            placer.std_normal() * noise.pos_sigma_m,
            placer.std_normal() * noise.pos_sigma_m,
        );
        let radial = placer.std_normal() * noise.depth_sigma_m;
        if dropped {
            continue;
        }
        let mut p = obj.position.add(&jitter);
        let range = obj.position.norm();
        if range > 1e-9 {
            p = p.add(&obj.position.scale(radial / range));
        }
        noisy_objects.push(SceneObject { position: rounded(&p), ..obj });
    }
    scene.objects = noisy_objects;
    scene.goal = scene.goal.map(|g| rounded(&g));
    Ok(scene)
}

/// Generate the scene at `index`, drawing its class from the spec's
/// deterministic class schedule.
pub fn generate_scene(
    spec: &ScenarioSpec,
    rules: &RuleConfig,
    index: usize,
) -> Result<Scene, SimError> {
    spec.validate()?;
    if index >= spec.count {
        return Err(SimError::InvalidSpec {
            detail: format!("index {index} out of range for count {}", spec.count),
        });
    }
    let schedule = class_schedule(spec);
    generate_scene_of_class(spec, rules, index, schedule[index])
}

/// Stream the whole dataset as JSONL. Returns the number of records
/// written; class counts follow the largest-remainder allocation of
/// `count × class_mix`.
pub fn generate_dataset(
    spec: &ScenarioSpec,
    rules: &RuleConfig,
    out: &mut dyn Write,
) -> Result<usize, SimError> {
    spec.validate()?;
    let schedule = class_schedule(spec);
    let mut written = 0usize;
    for (index, class) in schedule.iter().enumerate() {
        let scene = generate_scene_of_class(spec, rules, index, *class)?;
        let record = scene_to_record(&scene);
        serde_json::to_writer(&mut *out, &record)
            .map_err(|e| SimError::Io(std::io::Error::other(e)))?;
        out.write_all(b"\n")?;
        written += 1;
    }
    Ok(written)
}
