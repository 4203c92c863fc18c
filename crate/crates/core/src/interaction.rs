//! Interaction techniques: touch-plane derivation and translation, drawn-vector
//! rotation, ray-cast selection and the 2D pointer mapping.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::geom::{to_euler, PlaneBasis, UnitQuat, Vec3};
use crate::wire::ScaleConfig;

/// Where the device is worn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MountMode {
    /// Lens faces forward from the fingertip; plane needs a +90 deg pitch.
    Fingertip,
    #[default]
    Fingerpad,
    Ring,
}

impl MountMode {
    pub const ALL: [MountMode; 3] = [MountMode::Fingertip, MountMode::Fingerpad, MountMode::Ring];

    pub fn name(self) -> &'static str {
        match self {
            MountMode::Fingertip => "fingertip",
            MountMode::Fingerpad => "fingerpad",
            MountMode::Ring => "ring",
        }
    }
}

impl fmt::Display for MountMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MountMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        MountMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config("mount", "mount must be one of fingertip,fingerpad,ring"))
    }
}

/// Fixed pre-rotation applied to fingertip orientations.
pub fn fingertip_compensation() -> UnitQuat {
    UnitQuat::from_axis_angle(Vec3::Y, 90.0).expect("unit axis")
}

pub fn derive_plane(q: UnitQuat, mode: MountMode) -> PlaneBasis {
    derive_plane_at(q, mode, Vec3::ZERO)
}

pub fn derive_plane_at(q: UnitQuat, mode: MountMode, origin: Vec3) -> PlaneBasis {
    let q = match mode {
        MountMode::Fingertip => q * fingertip_compensation(),
        MountMode::Fingerpad | MountMode::Ring => q,
    };
    PlaneBasis::from_quat(q, origin)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointerState {
    /// Relative position, mm; origin at session start.
    pub position: Vec3,
    pub plane: PlaneBasis,
    /// Finger pointing direction, unit.
    pub forward: Vec3,
}

impl Default for PointerState {
    fn default() -> Self {
        Self {
            position: Vec3::ZERO,
            plane: PlaneBasis::default(),
            forward: Vec3::X,
        }
    }
}

impl PointerState {
    pub fn with_orientation(mut self, q: UnitQuat, mode: MountMode) -> Self {
        self.plane = derive_plane_at(q, mode, self.position);
        self.forward = q.x_axis();
        self
    }
}

/// Moves the pointer by an optical delta along the current plane axes.
pub fn project_delta(p: &PointerState, dx: i32, dy: i32, scale: &ScaleConfig) -> PointerState {
    let k = scale.mm_per_count();
    let step = p.plane.u * (f64::from(dx) * k) + p.plane.v * (f64::from(dy) * k);
    let mut out = *p;
    out.position += step;
    out.plane.origin = out.position;
    out
}

/// Per-frame translation driver. Each delta is projected on the plane at the
/// midpoint between the previous and current orientation, so a curved
/// surface traced at constant speed is followed to second order.
#[derive(Debug, Clone)]
pub struct Translator {
    mode: MountMode,
    scale: ScaleConfig,
    state: PointerState,
    last_q: Option<UnitQuat>,
}

impl Translator {
    pub fn new(mode: MountMode, scale: ScaleConfig) -> Self {
        Self {
            mode,
            scale,
            state: PointerState::default(),
            last_q: None,
        }
    }

    pub fn state(&self) -> &PointerState {
        &self.state
    }

    pub fn step(&mut self, q: UnitQuat, dx: i16, dy: i16) -> &PointerState {
        let mid = match self.last_q {
            Some(prev) => prev.slerp(q, 0.5),
            None => q,
        };
        let moved = project_delta(
            &self.state.with_orientation(mid, self.mode),
            i32::from(dx),
            i32::from(dy),
            &self.scale,
        );
        self.state = moved.with_orientation(q, self.mode);
        self.last_q = Some(q);
        &self.state
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationConfig {
    pub gain_deg_per_mm: f64,
    pub dead_zone_mm: f64,
}

impl Default for RotationConfig {
    fn default() -> Self {
        Self {
            gain_deg_per_mm: 1.0,
            dead_zone_mm: 1.0,
        }
    }
}

impl RotationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gain_deg_per_mm.is_finite() && self.gain_deg_per_mm > 0.0) {
            return Err(Error::config("gain_deg_per_mm", "must be > 0"));
        }
        if !(self.dead_zone_mm.is_finite() && self.dead_zone_mm >= 0.0) {
            return Err(Error::config("dead_zone_mm", "must be >= 0"));
        }
        Ok(())
    }
}

/// In-plane vector drawn since contact began, kept in plane coordinates so
/// it stays exactly in whichever plane it is expressed against.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StrokeAccumulator {
    pub u_mm: f64,
    pub v_mm: f64,
}

impl StrokeAccumulator {
    pub fn add_counts(&mut self, dx: i16, dy: i16, scale: &ScaleConfig) {
        let k = scale.mm_per_count();
        self.u_mm += f64::from(dx) * k;
        self.v_mm += f64::from(dy) * k;
    }

    pub fn add_mm(&mut self, du: f64, dv: f64) {
        self.u_mm += du;
        self.v_mm += dv;
    }

    pub fn length(&self) -> f64 {
        self.u_mm.hypot(self.v_mm)
    }

    pub fn in_plane_vector(&self, plane: &PlaneBasis) -> Vec3 {
        plane.u * self.u_mm + plane.v * self.v_mm
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rotation {
    /// Unit axis in the touch plane, perpendicular to the stroke.
    pub axis: Vec3,
    /// Right-handed angle about `axis`, degrees, >= 0.
    pub angle_deg: f64,
}

impl Rotation {
    pub fn to_quat(&self) -> UnitQuat {
        UnitQuat::from_axis_angle(self.axis, self.angle_deg).expect("axis is unit")
    }
}

/// Rotation produced by a drawn stroke, or `None` inside the dead-zone.
pub fn end_stroke_rotation(
    stroke: &StrokeAccumulator,
    plane: &PlaneBasis,
    cfg: &RotationConfig,
) -> Option<Rotation> {
    let len = stroke.length();
    if !(len > cfg.dead_zone_mm) || len == 0.0 {
        return None;
    }
    let d = stroke.in_plane_vector(plane) / len;
    let axis = plane.n.cross(d).normalized()?;
    Some(Rotation {
        axis,
        angle_deg: cfg.gain_deg_per_mm * len,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Sphere { center: Vec3, radius: f64 },
    Aabb { min: Vec3, max: Vec3 },
}

impl Shape {
    /// Smallest non-negative ray parameter at which the ray is inside the
    /// shape, for a unit `dir`.
    pub fn ray_hit(&self, origin: Vec3, dir: Vec3) -> Option<f64> {
        match *self {
            Shape::Sphere { center, radius } => {
                let oc = origin - center;
                let b = dir.dot(oc);
                let c = oc.dot(oc) - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                let t_far = -b + s;
                if t_far < 0.0 {
                    return None;
                }
                Some((-b - s).max(0.0))
            }
            Shape::Aabb { min, max } => {
                let (o, d) = (origin.to_array(), dir.to_array());
                let (lo, hi) = (min.to_array(), max.to_array());
                let mut t_in = f64::NEG_INFINITY;
                let mut t_out = f64::INFINITY;
                for i in 0..3 {
                    if d[i].abs() < 1e-15 {
                        if o[i] < lo[i] || o[i] > hi[i] {
                            return None;
                        }
                        continue;
                    }
                    let a = (lo[i] - o[i]) / d[i];
                    let b = (hi[i] - o[i]) / d[i];
                    t_in = t_in.max(a.min(b));
                    t_out = t_out.min(a.max(b));
                }
                if t_out < t_in || t_out < 0.0 {
                    return None;
                }
                Some(t_in.max(0.0))
            }
        }
    }

    /// Signed distance, negative inside.
    pub fn sdf(&self, p: Vec3) -> f64 {
        match *self {
            Shape::Sphere { center, radius } => (p - center).norm() - radius,
            Shape::Aabb { min, max } => {
                let c = (min + max) * 0.5;
                let h = (max - min) * 0.5;
                let d = p - c;
                let q = Vec3::new(d.x.abs() - h.x, d.y.abs() - h.y, d.z.abs() - h.z);
                let outside = Vec3::new(q.x.max(0.0), q.y.max(0.0), q.z.max(0.0)).norm();
                outside + q.x.max(q.y).max(q.z).min(0.0)
            }
        }
    }

    pub fn contains(&self, p: Vec3) -> bool {
        self.sdf(p) <= 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub id: String,
    pub shape: Shape,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scene {
    pub objects: Vec<SceneObject>,
}

fn id_string<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<String, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Id {
        Int(i64),
        Float(f64),
        Text(String),
    }
    Ok(match Id::deserialize(d)? {
        Id::Int(i) => i.to_string(),
        Id::Float(f) => f.to_string(),
        Id::Text(s) => s,
    })
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawSphere {
    c: [f64; 3],
    r: f64,
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawBox {
    min: [f64; 3],
    max: [f64; 3],
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawObject {
    #[serde(deserialize_with = "id_string")]
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sphere: Option<RawSphere>,
    #[serde(rename = "box", default, skip_serializing_if = "Option::is_none")]
    aabb: Option<RawBox>,
}

impl Scene {
    pub fn new(objects: Vec<SceneObject>) -> Result<Self> {
        let s = Self { objects };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for o in &self.objects {
            match o.shape {
                Shape::Sphere { center, radius } => {
                    if !(center.is_finite() && radius.is_finite() && radius > 0.0) {
                        return Err(Error::config("scene", format!("object {}: radius must be > 0", o.id)));
                    }
                }
                Shape::Aabb { min, max } => {
                    if !(min.is_finite() && max.is_finite() && min.x < max.x && min.y < max.y && min.z < max.z) {
                        return Err(Error::config("scene", format!("object {}: box needs min < max", o.id)));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: Vec<RawObject> = serde_json::from_str(text)?;
        let objects = raw
            .into_iter()
            .map(|r| {
                let shape = match (r.sphere, r.aabb) {
                    (Some(s), None) => Shape::Sphere {
                        center: Vec3::from_array(s.c),
                        radius: s.r,
                    },
                    (None, Some(b)) => Shape::Aabb {
                        min: Vec3::from_array(b.min),
                        max: Vec3::from_array(b.max),
                    },
                    _ => {
                        return Err(Error::config(
                            "scene",
                            format!("object {}: needs exactly one of sphere, box", r.id),
                        ))
                    }
                };
                Ok(SceneObject { id: r.id, shape })
            })
            .collect::<Result<Vec<_>>>()?;
        Scene::new(objects)
    }

    pub fn to_json(&self) -> String {
        let raw: Vec<RawObject> = self
            .objects
            .iter()
            .map(|o| match o.shape {
                Shape::Sphere { center, radius } => RawObject {
                    id: o.id.clone(),
                    sphere: Some(RawSphere {
                        c: center.to_array(),
                        r: radius,
                    }),
                    aabb: None,
                },
                Shape::Aabb { min, max } => RawObject {
                    id: o.id.clone(),
                    sphere: None,
                    aabb: Some(RawBox {
                        min: min.to_array(),
                        max: max.to_array(),
                    }),
                },
            })
            .collect();
        serde_json::to_string(&raw).expect("plain data serializes")
    }
}

/// Id of the object hit first by the finger ray from `origin`. Ties go to
/// the earlier object in the scene.
pub fn raycast_select(origin: Vec3, q: UnitQuat, scene: &Scene) -> Option<&str> {
    let dir = q.x_axis();
    let mut best: Option<(f64, &str)> = None;
    for o in &scene.objects {
        if let Some(t) = o.shape.ray_hit(origin, dir) {
            if best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, o.id.as_str()));
            }
        }
    }
    best.map(|(_, id)| id)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pointer2dConfig {
    /// Normalized screen units per degree.
    pub gain_x: f64,
    pub gain_y: f64,
}

impl Default for Pointer2dConfig {
    fn default() -> Self {
        Self {
            gain_x: 1.0 / 60.0,
            gain_y: 1.0 / 60.0,
        }
    }
}

/// Screen position for the current orientation, relative to the orientation
/// captured when 2D pointing started. Yaw and pitch are differenced and yaw
/// is wrapped to (-180, 180].
pub fn map_pointer_2d(q: UnitQuat, reference: UnitQuat, gains: &Pointer2dConfig) -> Result<(f64, f64)> {
    if !(gains.gain_x > 0.0 && gains.gain_y > 0.0 && gains.gain_x.is_finite() && gains.gain_y.is_finite()) {
        return Err(Error::config("gain", "pointer gains must be > 0"));
    }
    let e = to_euler(q);
    let r = to_euler(reference);
    let mut yaw = e.yaw - r.yaw;
    if yaw > 180.0 {
        yaw -= 360.0;
    } else if yaw <= -180.0 {
        yaw += 360.0;
    }
    let pitch = e.pitch - r.pitch;
    Ok((
        (0.5 + yaw * gains.gain_x).clamp(0.0, 1.0),
        (0.5 + pitch * gains.gain_y).clamp(0.0, 1.0),
    ))
}
