//! Scene ingestion, 3D localisation and the pairwise distance matrix.
//!
//! Detections arrive either pre-localised (robot-frame positions) or raw
//! (pixel bounding box + depth at the box centre), in which case they are
//! back-projected through the camera intrinsics and mapped into the robot
//! frame. The robot itself sits at the frame origin.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

/// Closed set of object classes the detector reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassLabel {
    HumanChemist,
    Instrument,
    Fumehood,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 3] = [
        ClassLabel::HumanChemist,
        ClassLabel::Instrument,
        ClassLabel::Fumehood,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ClassLabel::HumanChemist => "human_chemist",
            ClassLabel::Instrument => "instrument",
            ClassLabel::Fumehood => "fumehood",
        }
    }

    pub fn parse(s: &str) -> Option<ClassLabel> {
        match s {
            "human_chemist" => Some(ClassLabel::HumanChemist),
            "instrument" => Some(ClassLabel::Instrument),
            "fumehood" => Some(ClassLabel::Fumehood),
            _ => None,
        }
    }

    /// Instruments and fumehoods count as equipment; humans do not.
    pub fn is_equipment(&self) -> bool {
        matches!(self, ClassLabel::Instrument | ClassLabel::Fumehood)
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which of the three collection scenarios a scene belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    S1,
    S2,
    S3,
    Unknown,
}

impl Scenario {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::S1 => "s1",
            Scenario::S2 => "s2",
            Scenario::S3 => "s3",
            Scenario::Unknown => "unknown",
        }
    }

    pub fn parse(s: &str) -> Option<Scenario> {
        match s {
            "s1" => Some(Scenario::S1),
            "s2" => Some(Scenario::S2),
            "s3" => Some(Scenario::S3),
            _ => None,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A point in meters, robot frame unless stated otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 3]", try_from = "[f64; 3]")]
pub struct Position3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position3 {
    pub const ORIGIN: Position3 = Position3 { x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Position3 {
        Position3 { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn sub(&self, other: &Position3) -> Position3 {
        Position3::new(self.x - other.x, self.y - other.y, self.z - other.z)
    }

    pub fn add(&self, other: &Position3) -> Position3 {
        Position3::new(self.x + other.x, self.y + other.y, self.z + other.z)
    }

    pub fn scale(&self, s: f64) -> Position3 {
        Position3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn dot(&self, other: &Position3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Euclidean distance. This exact expression is the distance used
    /// everywhere in the crate; tests compare against it bitwise.
    pub fn distance(&self, other: &Position3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

impl From<Position3> for [f64; 3] {
    fn from(p: Position3) -> [f64; 3] {
        [p.x, p.y, p.z]
    }
}

impl TryFrom<[f64; 3]> for Position3 {
    type Error = String;

    fn try_from(a: [f64; 3]) -> Result<Position3, String> {
        let p = Position3::new(a[0], a[1], a[2]);
        if p.is_finite() {
            Ok(p)
        } else {
            Err("position components must be finite".to_string())
        }
    }
}

/// Rigid camera-to-robot transform: `p_robot = R * p_cam + t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl RigidTransform {
    pub fn identity() -> RigidTransform {
        RigidTransform {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0, 0.0, 0.0],
        }
    }

    pub fn apply(&self, p: &Position3) -> Position3 {
        let r = &self.rotation;
        let t = &self.translation;
        Position3::new(
            r[0][0] * p.x + r[0][1] * p.y + r[0][2] * p.z + t[0],
            r[1][0] * p.x + r[1][1] * p.y + r[1][2] * p.z + t[1],
            r[2][0] * p.x + r[2][1] * p.y + r[2][2] * p.z + t[2],
        )
    }

    /// Inverse map `p_cam = R^T * (p_robot - t)`; valid because R is orthonormal.
    pub fn apply_inverse(&self, p: &Position3) -> Position3 {
        let r = &self.rotation;
        let t = &self.translation;
        let q = Position3::new(p.x - t[0], p.y - t[1], p.z - t[2]);
        Position3::new(
            r[0][0] * q.x + r[1][0] * q.y + r[2][0] * q.z,
            r[0][1] * q.x + r[1][1] * q.y + r[2][1] * q.z,
            r[0][2] * q.x + r[1][2] * q.y + r[2][2] * q.z,
        )
    }

    /// R must be orthonormal within 1e-9 and proper (det > 0).
    pub fn validate(&self) -> Result<(), PerceptionError> {
        let r = &self.rotation;
        for row in r {
            for v in row {
                if !v.is_finite() {
                    return Err(PerceptionError::Value { field: "extrinsic.rotation".into() });
                }
            }
        }
        for v in &self.translation {
            if !v.is_finite() {
                return Err(PerceptionError::Value { field: "extrinsic.translation".into() });
            }
        }
        // R^T R == I within 1e-9
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                if (dot - expect).abs() > 1e-9 {
                    return Err(PerceptionError::Schema {
                        field: "extrinsic.rotation".into(),
                        detail: "rotation is not orthonormal within 1e-9".into(),
                    });
                }
            }
        }
        let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
            - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
        if det <= 0.0 {
            return Err(PerceptionError::Schema {
                field: "extrinsic.rotation".into(),
                detail: "rotation must be proper (det > 0)".into(),
            });
        }
        Ok(())
    }
}

/// Pinhole intrinsics plus the camera-to-robot extrinsic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default = "RigidTransform::identity")]
    pub extrinsic: RigidTransform,
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<(), PerceptionError> {
        for (name, v) in [("fx", self.fx), ("fy", self.fy), ("cx", self.cx), ("cy", self.cy)] {
            if !v.is_finite() {
                return Err(PerceptionError::Value { field: format!("intrinsics.{name}") });
            }
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(PerceptionError::Schema {
                field: "intrinsics".into(),
                detail: "focal lengths must be positive".into(),
            });
        }
        self.extrinsic.validate()
    }
}

/// Pixel-space bounding box, (u_min, v_min) top-left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 4]", try_from = "[f64; 4]")]
pub struct BBox {
    pub u_min: f64,
    pub v_min: f64,
    pub u_max: f64,
    pub v_max: f64,
}

impl BBox {
    pub fn center(&self) -> (f64, f64) {
        ((self.u_min + self.u_max) / 2.0, (self.v_min + self.v_max) / 2.0)
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> [f64; 4] {
        [b.u_min, b.v_min, b.u_max, b.v_max]
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = String;

    fn try_from(a: [f64; 4]) -> Result<BBox, String> {
        if a.iter().any(|v| !v.is_finite()) {
            return Err("bbox coordinates must be finite".to_string());
        }
        if a[0] >= a[2] || a[1] >= a[3] {
            return Err("bbox must satisfy u_min < u_max and v_min < v_max".to_string());
        }
        Ok(BBox { u_min: a[0], v_min: a[1], u_max: a[2], v_max: a[3] })
    }
}

/// One raw detector output prior to 3D localisation.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub label: ClassLabel,
    pub instance_id: u32,
    pub bbox: BBox,
    /// Depth at the bbox centre. `None` when the depth sensor had no reading.
    pub depth_m: Option<f64>,
    pub confidence: f64,
}

/// A localised object in the robot frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub label: ClassLabel,
    pub instance_id: u32,
    pub position: Position3,
}

/// Ground-truth (obstruction, interaction) pair carried by dataset records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthLabels {
    pub obstruction: bool,
    pub interaction: bool,
}

/// One timestamped perception snapshot: the unit everything downstream
/// consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub scene_id: String,
    pub scenario: Scenario,
    pub objects: Vec<SceneObject>,
    /// Robot navigation target; absent only in hand-written records.
    pub goal: Option<Position3>,
    pub image_ref: Option<String>,
    pub truth: Option<TruthLabels>,
    /// Non-fatal ingest notes (excluded detections, ignored keys).
    pub warnings: Vec<String>,
}

impl Scene {
    pub fn humans(&self) -> impl Iterator<Item = &SceneObject> {
        self.objects.iter().filter(|o| o.label == ClassLabel::HumanChemist)
    }

    pub fn equipment(&self) -> impl Iterator<Item = &SceneObject> {
        self.objects.iter().filter(|o| o.label.is_equipment())
    }
}

/// Identifies a row/column of the distance matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EntityId {
    Object { label: ClassLabel, instance_id: u32 },
    /// The robot, fixed at the frame origin.
    Robot,
}

impl EntityId {
    pub fn display_name(&self) -> String {
        match self {
            EntityId::Object { label, instance_id } => format!("{}[{}]", label, instance_id),
            EntityId::Robot => "robot".to_string(),
        }
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.display_name())
    }
}

/// All pairwise distances among scene objects plus the robot origin, with
/// the two task-relevant extracts pulled out per human instance.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DistanceReport {
    /// Canonical storage: key.0 < key.1 in `EntityId` order, stored once.
    entries: BTreeMap<(EntityId, EntityId), f64>,
    /// Per human instance: min distance to any instrument/fumehood.
    pub human_equipment_m: BTreeMap<u32, f64>,
    /// Per human instance: distance to the robot origin.
    pub human_robot_m: BTreeMap<u32, f64>,
}

impl DistanceReport {
    /// Distance between two entities, queried in either order. `None` for
    /// identical entities (d_ii is deliberately absent) and unknown pairs.
    pub fn get(&self, a: EntityId, b: EntityId) -> Option<f64> {
        if a == b {
            return None;
        }
        let key = if a < b { (a, b) } else { (b, a) };
        self.entries.get(&key).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (EntityId, EntityId, f64)> + '_ {
        self.entries.iter().map(|(&(a, b), &d)| (a, b, d))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum PerceptionError {
    #[error("schema error in field `{field}`: {detail}")]
    Schema { field: String, detail: String },
    #[error("non-finite number in field `{field}`")]
    Value { field: String },
    #[error("degenerate depth: {detail}")]
    DegenerateDepth { detail: String },
    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<PerceptionError>,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Controls how `ingest_scene` treats keys outside the record schema.
#[derive(Debug, Clone, Copy, Default)]
pub struct IngestOptions {
    /// Reject unknown keys instead of recording a warning.
    pub strict: bool,
}

impl IngestOptions {
    pub fn strict() -> IngestOptions {
        IngestOptions { strict: true }
    }
}

/// Lift a raw detection into the robot frame.
///
/// The depth sample is read at the bbox centre `(u, v)`; the camera-frame
/// point is `((u-cx)·z/fx, (v-cy)·z/fy, z)`, then mapped through the
/// extrinsic.
pub fn back_project(det: &Detection, cam: &CameraIntrinsics) -> Result<Position3, PerceptionError> {
    cam.validate()?;
    let z = det.depth_m.ok_or_else(|| PerceptionError::DegenerateDepth {
        detail: format!("{}[{}] has no depth reading", det.label, det.instance_id),
    })?;
    if !z.is_finite() || z <= 0.0 {
        return Err(PerceptionError::DegenerateDepth {
            detail: format!("{}[{}] depth {} is not positive", det.label, det.instance_id, z),
        });
    }
    let (u, v) = det.bbox.center();
    let cam_point = Position3::new((u - cam.cx) * z / cam.fx, (v - cam.cy) * z / cam.fy, z);
    Ok(cam.extrinsic.apply(&cam_point))
}

/// Pairwise distances among all scene objects and the robot origin.
///
/// An empty scene yields a report containing no pairs (the robot alone has
/// nothing to measure against).
pub fn distance_matrix(scene: &Scene) -> DistanceReport {
    let mut entities: Vec<(EntityId, Position3)> = scene
        .objects
        .iter()
        .map(|o| (EntityId::Object { label: o.label, instance_id: o.instance_id }, o.position))
        .collect();
    entities.push((EntityId::Robot, Position3::ORIGIN));

    let mut report = DistanceReport::default();
    for i in 0..entities.len() {
        for j in (i + 1)..entities.len() {
            let (a, pa) = entities[i];
            let (b, pb) = entities[j];
            let key = if a < b { (a, b) } else { (b, a) };
            report.entries.insert(key, pa.distance(&pb));
        }
    }

    for human in scene.humans() {
        let hid = human.instance_id;
        report.human_robot_m.insert(hid, human.position.distance(&Position3::ORIGIN));
        let min_eq = scene
            .equipment()
            .map(|e| human.position.distance(&e.position))
            .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |m| m.min(d))));
        if let Some(d) = min_eq {
            report.human_equipment_m.insert(hid, d);
        }
    }
    report
}

// ── record schema ────────────────────────────────────────────────────────

const SCENE_KEYS: &[&str] =
    &["scene_id", "scenario", "goal", "objects", "intrinsics", "truth", "image_ref"];
const OBJECT_KEYS: &[&str] =
    &["label", "instance_id", "position", "bbox", "depth_m", "confidence"];
const INTRINSICS_KEYS: &[&str] = &["fx", "fy", "cx", "cy", "extrinsic"];
const TRUTH_KEYS: &[&str] = &["obstruction", "interaction"];

struct RecordCx<'a> {
    opts: &'a IngestOptions,
    warnings: Vec<String>,
}

impl RecordCx<'_> {
    fn check_keys(
        &mut self,
        map: &Map<String, Value>,
        known: &[&str],
        ctx: &str,
    ) -> Result<(), PerceptionError> {
        for key in map.keys() {
            if !known.contains(&key.as_str()) {
                if self.opts.strict {
                    return Err(PerceptionError::Schema {
                        field: format!("{ctx}{key}"),
                        detail: "unknown key".into(),
                    });
                }
                self.warnings.push(format!("ignored unknown key `{ctx}{key}`"));
            }
        }
        Ok(())
    }
}

fn as_object<'v>(v: &'v Value, field: &str) -> Result<&'v Map<String, Value>, PerceptionError> {
    v.as_object().ok_or_else(|| PerceptionError::Schema {
        field: field.to_string(),
        detail: "expected a JSON object".into(),
    })
}

fn get_str<'v>(map: &'v Map<String, Value>, field: &str) -> Result<&'v str, PerceptionError> {
    map.get(field)
        .and_then(Value::as_str)
        .ok_or_else(|| PerceptionError::Schema {
            field: field.to_string(),
            detail: "expected a string".into(),
        })
}

fn get_finite(map: &Map<String, Value>, field: &str) -> Result<f64, PerceptionError> {
    let v = map.get(field).ok_or_else(|| PerceptionError::Schema {
        field: field.to_string(),
        detail: "missing required key".into(),
    })?;
    let x = v.as_f64().ok_or_else(|| PerceptionError::Schema {
        field: field.to_string(),
        detail: "expected a number".into(),
    })?;
    if !x.is_finite() {
        return Err(PerceptionError::Value { field: field.to_string() });
    }
    Ok(x)
}

fn get_vec3(map: &Map<String, Value>, field: &str) -> Result<Position3, PerceptionError> {
    let arr = map
        .get(field)
        .and_then(Value::as_array)
        .ok_or_else(|| PerceptionError::Schema {
            field: field.to_string(),
            detail: "expected an array [x, y, z]".into(),
        })?;
    if arr.len() != 3 {
        return Err(PerceptionError::Schema {
            field: field.to_string(),
            detail: format!("expected 3 components, got {}", arr.len()),
        });
    }
    let mut out = [0.0; 3];
    for (i, v) in arr.iter().enumerate() {
        let x = v.as_f64().ok_or_else(|| PerceptionError::Schema {
            field: format!("{field}[{i}]"),
            detail: "expected a number".into(),
        })?;
        if !x.is_finite() {
            return Err(PerceptionError::Value { field: format!("{field}[{i}]") });
        }
        out[i] = x;
    }
    Ok(Position3::new(out[0], out[1], out[2]))
}

fn parse_intrinsics(v: &Value, cx: &mut RecordCx) -> Result<CameraIntrinsics, PerceptionError> {
    let map = as_object(v, "intrinsics")?;
    cx.check_keys(map, INTRINSICS_KEYS, "intrinsics.")?;
    let extrinsic = match map.get("extrinsic") {
        None => RigidTransform::identity(),
        Some(e) => serde_json::from_value::<RigidTransform>(e.clone()).map_err(|err| {
            PerceptionError::Schema {
                field: "intrinsics.extrinsic".into(),
                detail: err.to_string(),
            }
        })?,
    };
    let cam = CameraIntrinsics {
        fx: get_finite(map, "fx")?,
        fy: get_finite(map, "fy")?,
        cx: get_finite(map, "cx")?,
        cy: get_finite(map, "cy")?,
        extrinsic,
    };
    cam.validate()?;
    Ok(cam)
}

/// Parse and validate one scene record (a single JSON object, typically one
/// JSONL line). See the README for the schema.
pub fn ingest_scene(record: &str, opts: &IngestOptions) -> Result<Scene, PerceptionError> {
    let value: Value = serde_json::from_str(record).map_err(|e| PerceptionError::Schema {
        field: "<record>".into(),
        detail: format!("invalid JSON: {e}"),
    })?;
    ingest_scene_value(&value, opts)
}

/// Same as [`ingest_scene`] but over an already parsed JSON value.
pub fn ingest_scene_value(value: &Value, opts: &IngestOptions) -> Result<Scene, PerceptionError> {
    let mut cx = RecordCx { opts, warnings: Vec::new() };
    let map = as_object(value, "<record>")?;
    cx.check_keys(map, SCENE_KEYS, "")?;

    let scene_id = get_str(map, "scene_id")?.to_string();
    if scene_id.is_empty() {
        return Err(PerceptionError::Schema {
            field: "scene_id".into(),
            detail: "must be non-empty".into(),
        });
    }

    let scenario = match map.get("scenario") {
        None => Scenario::Unknown,
        Some(v) => {
            let s = v.as_str().ok_or_else(|| PerceptionError::Schema {
                field: "scenario".into(),
                detail: "expected a string".into(),
            })?;
            Scenario::parse(s).ok_or_else(|| PerceptionError::Schema {
                field: "scenario".into(),
                detail: format!("unknown scenario `{s}` (expected s1, s2 or s3)"),
            })?
        }
    };

    let goal = match map.get("goal") {
        None => None,
        Some(_) => Some(get_vec3(map, "goal")?),
    };

    let intrinsics = match map.get("intrinsics") {
        None => None,
        Some(v) => Some(parse_intrinsics(v, &mut cx)?),
    };

    let truth = match map.get("truth") {
        None => None,
        Some(v) => {
            let tmap = as_object(v, "truth")?;
            cx.check_keys(tmap, TRUTH_KEYS, "truth.")?;
            let get_bool = |field: &str| -> Result<bool, PerceptionError> {
                tmap.get(field).and_then(Value::as_bool).ok_or_else(|| PerceptionError::Schema {
                    field: format!("truth.{field}"),
                    detail: "expected a boolean".into(),
                })
            };
            let t = TruthLabels {
                obstruction: get_bool("obstruction")?,
                interaction: get_bool("interaction")?,
            };
            if t.interaction && !t.obstruction {
                return Err(PerceptionError::Schema {
                    field: "truth".into(),
                    detail: "interaction without obstruction is an excluded class".into(),
                });
            }
            Some(t)
        }
    };

    let image_ref = match map.get("image_ref") {
        None => None,
        Some(v) => Some(
            v.as_str()
                .ok_or_else(|| PerceptionError::Schema {
                    field: "image_ref".into(),
                    detail: "expected a string".into(),
                })?
                .to_string(),
        ),
    };

    let objects_val = map
        .get("objects")
        .and_then(Value::as_array)
        .ok_or_else(|| PerceptionError::Schema {
            field: "objects".into(),
            detail: "expected an array".into(),
        })?;

    let mut objects: Vec<SceneObject> = Vec::with_capacity(objects_val.len());
    let mut seen: BTreeSet<(ClassLabel, u32)> = BTreeSet::new();
    let mut next_ordinal: BTreeMap<ClassLabel, u32> = BTreeMap::new();

    for (i, ov) in objects_val.iter().enumerate() {
        let field = format!("objects[{i}]");
        let omap = as_object(ov, &field)?;
        cx.check_keys(omap, OBJECT_KEYS, &format!("{field}."))?;

        let label_str = get_str(omap, "label").map_err(|_| PerceptionError::Schema {
            field: format!("{field}.label"),
            detail: "expected a string".into(),
        })?;
        let label = ClassLabel::parse(label_str).ok_or_else(|| PerceptionError::Schema {
            field: format!("{field}.label"),
            detail: format!("unknown label `{label_str}`"),
        })?;

        let instance_id = match omap.get("instance_id") {
            None => {
                let n = next_ordinal.entry(label).or_insert(0);
                let mut id = *n;
                while seen.contains(&(label, id)) {
                    id += 1;
                }
                *n = id + 1;
                id
            }
            Some(v) => v
                .as_u64()
                .and_then(|n| u32::try_from(n).ok())
                .ok_or_else(|| PerceptionError::Schema {
                    field: format!("{field}.instance_id"),
                    detail: "expected a small non-negative integer".into(),
                })?,
        };
        if !seen.insert((label, instance_id)) {
            return Err(PerceptionError::Schema {
                field: format!("{field}.instance_id"),
                detail: format!("duplicate object {label}[{instance_id}]"),
            });
        }

        let has_position = omap.contains_key("position");
        let has_bbox = omap.contains_key("bbox");
        if has_position && has_bbox {
            return Err(PerceptionError::Schema {
                field: field.clone(),
                detail: "give either `position` or `bbox`+`depth_m`, not both".into(),
            });
        }

        let position = if has_position {
            get_vec3(omap, "position").map_err(|e| match e {
                PerceptionError::Schema { field: f, detail } => PerceptionError::Schema {
                    field: format!("{field}.{f}"),
                    detail,
                },
                PerceptionError::Value { field: f } => {
                    PerceptionError::Value { field: format!("{field}.{f}") }
                }
                other => other,
            })?
        } else if has_bbox {
            let cam = intrinsics.as_ref().ok_or_else(|| PerceptionError::Schema {
                field: "intrinsics".into(),
                detail: format!("{field} carries a bbox but the record has no intrinsics"),
            })?;
            let bbox_arr: [f64; 4] = serde_json::from_value(omap["bbox"].clone()).map_err(|e| {
                PerceptionError::Schema { field: format!("{field}.bbox"), detail: e.to_string() }
            })?;
            let bbox = BBox::try_from(bbox_arr).map_err(|detail| PerceptionError::Schema {
                field: format!("{field}.bbox"),
                detail,
            })?;
            let depth_m = match omap.get("depth_m") {
                None | Some(Value::Null) => None,
                Some(v) => {
                    let d = v.as_f64().ok_or_else(|| PerceptionError::Schema {
                        field: format!("{field}.depth_m"),
                        detail: "expected a number or null".into(),
                    })?;
                    if !d.is_finite() {
                        return Err(PerceptionError::Value { field: format!("{field}.depth_m") });
                    }
                    Some(d)
                }
            };
            let confidence = match omap.get("confidence") {
                None => 1.0,
                Some(v) => {
                    let c = v.as_f64().ok_or_else(|| PerceptionError::Schema {
                        field: format!("{field}.confidence"),
                        detail: "expected a number".into(),
                    })?;
                    if !c.is_finite() {
                        return Err(PerceptionError::Value {
                            field: format!("{field}.confidence"),
                        });
                    }
                    if !(0.0..=1.0).contains(&c) {
                        return Err(PerceptionError::Schema {
                            field: format!("{field}.confidence"),
                            detail: "must lie in [0, 1]".into(),
                        });
                    }
                    c
                }
            };
            let det = Detection { label, instance_id, bbox, depth_m, confidence };
            match back_project(&det, cam) {
                Ok(p) => p,
                Err(PerceptionError::DegenerateDepth { detail }) => {
                    // Excluded from the scene (and so from the distance
                    // matrix), surfaced via warnings rather than dropped.
                    cx.warnings.push(format!("object {label}[{instance_id}] excluded: {detail}"));
                    seen.remove(&(label, instance_id));
                    continue;
                }
                Err(e) => return Err(e),
            }
        } else {
            return Err(PerceptionError::Schema {
                field,
                detail: "object needs either `position` or `bbox`+`depth_m`".into(),
            });
        };

        if !position.is_finite() {
            return Err(PerceptionError::Value { field: format!("{field}.position") });
        }
        objects.push(SceneObject { label, instance_id, position });
    }

    Ok(Scene { scene_id, scenario, objects, goal, image_ref, truth, warnings: cx.warnings })
}

/// Serialise a scene back into the record schema (pre-localised form).
pub fn scene_to_record(scene: &Scene) -> Value {
    let mut map = Map::new();
    map.insert("scene_id".into(), Value::String(scene.scene_id.clone()));
    if scene.scenario != Scenario::Unknown {
        map.insert("scenario".into(), Value::String(scene.scenario.as_str().into()));
    }
    if let Some(goal) = &scene.goal {
        map.insert("goal".into(), serde_json::json!([goal.x, goal.y, goal.z]));
    }
    let objects: Vec<Value> = scene
        .objects
        .iter()
        .map(|o| {
            serde_json::json!({
                "label": o.label.as_str(),
                "instance_id": o.instance_id,
                "position": [o.position.x, o.position.y, o.position.z],
            })
        })
        .collect();
    map.insert("objects".into(), Value::Array(objects));
    if let Some(t) = &scene.truth {
        map.insert(
            "truth".into(),
            serde_json::json!({"obstruction": t.obstruction, "interaction": t.interaction}),
        );
    }
    if let Some(r) = &scene.image_ref {
        map.insert("image_ref".into(), Value::String(r.clone()));
    }
    Value::Object(map)
}

/// Read a JSONL dataset, reporting the 1-based line of the first bad record.
pub fn read_dataset<R: BufRead>(
    reader: R,
    opts: &IngestOptions,
) -> Result<Vec<Scene>, PerceptionError> {
    let mut scenes = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let scene = ingest_scene(&line, opts)
            .map_err(|e| PerceptionError::AtLine { line: idx + 1, source: Box::new(e) })?;
        scenes.push(scene);
    }
    Ok(scenes)
}
