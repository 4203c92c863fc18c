//! Ground-truth trajectories for the accuracy experiment and the sensor
//! streams a device would report while tracing them.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::GRAVITY_WORLD;
use crate::geom::{UnitQuat, Vec3};
use crate::gestures::{GestureConfig, GestureKind};
use crate::texture::{distance_to_squal, Texture, TextureModel};
use crate::traj::PoseSample;
use crate::wire::{ScaleConfig, SensorFrame, SQUAL_MAX};

pub const SIZES_MM: [u32; 4] = [12, 21, 42, 84];
pub const REPS: u32 = 5;
const DEFAULT_HARD_IRON_GAUSS: Vec3 = Vec3::new(0.006, 0.006, 0.006);
const DEFAULT_GRADIENT_GAUSS_PER_MM: [[f64; 3]; 3] = [
    [0.6e-4, -0.8e-4, 0.3e-4],
    [0.9e-4, 0.2e-4, -0.5e-4],
    [-0.4e-4, 0.7e-4, 0.5e-4],
];
const MAX_TRIAL_S: f64 = 600.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Hline,
    Vline,
    Diag,
    Triangle,
    Square,
    Circle,
    /// Circle wrapped around a vertical cylinder; not part of the grid.
    Cylinder,
}

impl Shape {
    pub const GRID: [Shape; 6] = [
        Shape::Hline,
        Shape::Vline,
        Shape::Diag,
        Shape::Triangle,
        Shape::Square,
        Shape::Circle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Shape::Hline => "hline",
            Shape::Vline => "vline",
            Shape::Diag => "diag",
            Shape::Triangle => "triangle",
            Shape::Square => "square",
            Shape::Circle => "circle",
            Shape::Cylinder => "cylinder",
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Shape {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Shape::GRID
            .into_iter()
            .chain([Shape::Cylinder])
            .find(|x| x.name() == s)
            .ok_or_else(|| {
                Error::config(
                    "shape",
                    "shape must be one of hline,vline,diag,triangle,square,circle,cylinder",
                )
            })
    }
}

pub fn parse_size(s: &str) -> Result<u32> {
    s.trim()
        .parse::<u32>()
        .ok()
        .filter(|v| SIZES_MM.contains(v))
        .ok_or_else(|| Error::config("size", "size must be one of 12,21,42,84"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub texture: Texture,
    pub size_mm: u32,
    pub shape: Shape,
    pub rep: u32,
    pub tilt_deg: f64,
    pub seed: u64,
    pub rate_hz: f64,
    pub speed_mm_s: f64,
    /// Stationary time before and after drawing, ms.
    pub dwell_ms: u32,
}

impl TrialSpec {
    pub fn new(texture: Texture, size_mm: u32, shape: Shape, rep: u32, tilt_deg: f64, seed: u64) -> Self {
        Self {
            texture,
            size_mm,
            shape,
            rep,
            tilt_deg,
            seed,
            rate_hz: 50.0,
            speed_mm_s: 30.0,
            dwell_ms: 600,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !SIZES_MM.contains(&self.size_mm) {
            return Err(Error::config("size", "size must be one of 12,21,42,84"));
        }
        if !(1..=REPS).contains(&self.rep) {
            return Err(Error::config("rep", "rep must be in 1..=5"));
        }
        if !(0.0..=90.0).contains(&self.tilt_deg) {
            return Err(Error::config("tilt", "tilt must lie in [0, 90] degrees"));
        }
        if !(self.rate_hz.is_finite() && self.rate_hz > 0.0 && self.rate_hz <= 1000.0) {
            return Err(Error::config("rate_hz", "rate must lie in (0, 1000] Hz"));
        }
        if !(self.speed_mm_s.is_finite() && self.speed_mm_s > 0.0) {
            return Err(Error::config("speed_mm_s", "speed must be > 0"));
        }
        let size = f64::from(self.size_mm);
        let total_s = 2.0 * f64::from(self.dwell_ms) / 1000.0
            + Path::for_shape(self.shape, size).length() / self.speed_mm_s;
        if total_s > MAX_TRIAL_S {
            return Err(Error::config("speed_mm_s", "trial would exceed 600 s"));
        }
        Ok(())
    }

    /// `{texture}_{size}_{shape}_r{rep}`
    pub fn name(&self) -> String {
        format!("{}_{}_{}_r{}", self.texture, self.size_mm, self.shape, self.rep)
    }

    pub fn dt_ms(&self) -> u32 {
        ((1000.0 / self.rate_hz).round() as u32).max(1)
    }

    /// Attitude of the drawing plane: pitched by the tilt about world Y.
    pub fn plane_attitude(&self) -> UnitQuat {
        UnitQuat::from_axis_angle(Vec3::Y, self.tilt_deg).expect("unit axis")
    }
}

/// Closed or open path in plane coordinates, starting at the origin.
#[derive(Debug, Clone, PartialEq)]
enum Path {
    Polyline(Vec<(f64, f64)>),
    Circle { radius: f64 },
}

impl Path {
    fn for_shape(shape: Shape, size: f64) -> Path {
        let h = size * 3f64.sqrt() / 2.0;
        let d = size / 2f64.sqrt();
        match shape {
            Shape::Hline => Path::Polyline(vec![(0.0, 0.0), (size, 0.0)]),
            Shape::Vline => Path::Polyline(vec![(0.0, 0.0), (0.0, size)]),
            Shape::Diag => Path::Polyline(vec![(0.0, 0.0), (d, d)]),
            Shape::Triangle => Path::Polyline(vec![(0.0, 0.0), (size, 0.0), (size / 2.0, h), (0.0, 0.0)]),
            Shape::Square => Path::Polyline(vec![
                (0.0, 0.0),
                (size, 0.0),
                (size, size),
                (0.0, size),
                (0.0, 0.0),
            ]),
            Shape::Circle | Shape::Cylinder => Path::Circle { radius: size / 2.0 },
        }
    }

    fn length(&self) -> f64 {
        match self {
            Path::Polyline(p) => p
                .windows(2)
                .map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1))
                .sum(),
            Path::Circle { radius } => 2.0 * std::f64::consts::PI * radius,
        }
    }

    fn point_at(&self, s: f64) -> (f64, f64) {
        match self {
            Path::Polyline(p) => {
                let mut left = s;
                for w in p.windows(2) {
                    let seg = (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1);
                    if left <= seg {
                        let f = if seg > 0.0 { left / seg } else { 0.0 };
                        return (w[0].0 + f * (w[1].0 - w[0].0), w[0].1 + f * (w[1].1 - w[0].1));
                    }
                    left -= seg;
                }
                *p.last().expect("non-empty polyline")
            }
            Path::Circle { radius } => {
                let phi = s / radius;
                (radius * phi.sin(), radius - radius * phi.cos())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthSample {
    pub t_ms: u32,
    pub position: Vec3,
    pub orientation: UnitQuat,
    /// Whether the lens is on the surface.
    #[serde(default = "default_true")]
    pub contact: bool,
}

fn default_true() -> bool {
    true
}

impl GroundTruthSample {
    pub fn pose(&self) -> PoseSample {
        PoseSample {
            t_ms: self.t_ms,
            position: self.position,
            orientation: self.orientation,
        }
    }
}

pub fn poses(truth: &[GroundTruthSample]) -> Vec<PoseSample> {
    truth.iter().map(GroundTruthSample::pose).collect()
}

/// Duration of the drawing phase alone, seconds.
pub fn drawing_duration_s(spec: &TrialSpec) -> f64 {
    Path::for_shape(spec.shape, f64::from(spec.size_mm)).length() / spec.speed_mm_s
}

fn cylinder_pose(radius: f64, s: f64) -> (Vec3, UnitQuat) {
    let phi = s / radius;
    let (sp, cp) = phi.sin_cos();
    let position = Vec3::new(radius * (cp - 1.0), radius * sp, 0.0);
    let (u, v, n) = (Vec3::new(-sp, cp, 0.0), Vec3::Z, Vec3::new(cp, sp, 0.0));
    let m = [[u.x, v.x, n.x], [u.y, v.y, n.y], [u.z, v.z, n.z]];
    (position, UnitQuat::from_matrix(m).expect("orthonormal"))
}

/// Constant-speed trace of the shape, with a stationary dwell at each end.
/// Flat shapes lie in the tilted plane; the cylinder shape runs once around
/// a vertical cylinder of diameter `size_mm` with the plane tangent to it.
pub fn gen_trajectory(spec: &TrialSpec) -> Result<Vec<GroundTruthSample>> {
    spec.validate()?;
    let size = f64::from(spec.size_mm);
    let path = Path::for_shape(spec.shape, size);
    let length = path.length();
    let dt_ms = spec.dt_ms();
    let dwell = f64::from(spec.dwell_ms);
    let total_ms = 2.0 * dwell + 1000.0 * length / spec.speed_mm_s;
    let n = (total_ms / f64::from(dt_ms)).ceil() as u32;
    let plane = spec.plane_attitude();
    let (u, v) = (plane.x_axis(), plane.y_axis());

    let out = (0..=n)
        .map(|k| {
            let t_ms = k * dt_ms;
            let s = ((f64::from(t_ms) - dwell) * spec.speed_mm_s / 1000.0).clamp(0.0, length);
            let (position, orientation) = if spec.shape == Shape::Cylinder {
                cylinder_pose(size / 2.0, s)
            } else {
                let (a, b) = path.point_at(s);
                (u * a + v * b, plane)
            };
            GroundTruthSample {
                t_ms,
                position,
                orientation,
                contact: true,
            }
        })
        .collect();
    Ok(out)
}

/// Marks samples with `from_ms <= t_ms < to_ms` as lifted off the surface.
pub fn insert_lift(truth: &mut [GroundTruthSample], from_ms: u32, to_ms: u32) {
    for s in truth.iter_mut().filter(|s| (from_ms..to_ms).contains(&s.t_ms)) {
        s.contact = false;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Multiplier on the texture's optical slip sigma.
    pub slip_scale: f64,
    /// White gyro noise per sample, deg/s.
    pub gyro_sigma_dps: f64,
    /// Per-trial constant gyro bias drawn at start-up, deg/s per axis.
    pub gyro_bias_sigma_dps: f64,
    pub accel_sigma_g: f64,
    pub mag_sigma_gauss: f64,
    /// Constant body-frame magnetometer offset of the device (uncalibrated
    /// hard iron), gauss.
    pub mag_hard_iron_gauss: Vec3,
    /// Linear distortion of the ambient field around the trial start point
    /// (desk furniture, monitor). Row i is the gradient of world field
    /// component i, gauss per mm of displacement.
    pub mag_gradient_gauss_per_mm: [[f64; 3]; 3],
}

impl NoiseModel {
    pub fn zero() -> Self {
        Self {
            slip_scale: 0.0,
            gyro_sigma_dps: 0.0,
            gyro_bias_sigma_dps: 0.0,
            accel_sigma_g: 0.0,
            mag_sigma_gauss: 0.0,
            mag_hard_iron_gauss: Vec3::ZERO,
            mag_gradient_gauss_per_mm: [[0.0; 3]; 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("slip_scale", self.slip_scale),
            ("gyro_sigma_dps", self.gyro_sigma_dps),
            ("gyro_bias_sigma_dps", self.gyro_bias_sigma_dps),
            ("accel_sigma_g", self.accel_sigma_g),
            ("mag_sigma_gauss", self.mag_sigma_gauss),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(name, "must be >= 0"));
            }
        }
        if self.mag_gradient_gauss_per_mm.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::config("mag_gradient_gauss_per_mm", "must be finite"));
        }
        if !self.mag_hard_iron_gauss.is_finite() {
            return Err(Error::config("mag_hard_iron_gauss", "must be finite"));
        }
        Ok(())
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            slip_scale: 1.0,
            gyro_sigma_dps: 0.2,
            gyro_bias_sigma_dps: 0.0,
            accel_sigma_g: 0.02,
            mag_sigma_gauss: 0.005,
            mag_hard_iron_gauss: DEFAULT_HARD_IRON_GAUSS,
            mag_gradient_gauss_per_mm: DEFAULT_GRADIENT_GAUSS_PER_MM,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoisePreset {
    Zero,
    #[default]
    Default,
}

impl NoisePreset {
    pub fn model(self) -> NoiseModel {
        match self {
            NoisePreset::Zero => NoiseModel::zero(),
            NoisePreset::Default => NoiseModel::default(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NoisePreset::Zero => "zero",
            NoisePreset::Default => "default",
        }
    }
}

impl FromStr for NoisePreset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(NoisePreset::Zero),
            "default" => Ok(NoisePreset::Default),
            _ => Err(Error::config("noise", "noise must be one of zero,default")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub noise: NoiseModel,
    pub scale: ScaleConfig,
    /// Earth field in world coordinates, gauss.
    pub mag_field: Vec3,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            noise: NoiseModel::default(),
            scale: ScaleConfig::default(),
            mag_field: Vec3::new(0.2, 0.0, -0.4),
        }
    }
}

impl SynthConfig {
    pub fn with_noise(noise: NoiseModel) -> Self {
        Self {
            noise,
            ..Self::default()
        }
    }
}

fn gauss<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

fn gauss3<R: Rng>(rng: &mut R, sigma: f64) -> Vec3 {
    let (a, b, c) = (gauss(rng), gauss(rng), gauss(rng));
    Vec3::new(a, b, c) * sigma
}

fn to_lsb(v: Vec3, lsb: f64) -> [i16; 3] {
    v.to_array()
        .map(|c| (c / lsb).round().clamp(f64::from(i16::MIN), f64::from(i16::MAX)) as i16)
}

/// Sensor frames for a ground-truth sequence, one per sample.
///
/// Displacement between consecutive samples is expressed in the plane at the
/// midpoint orientation and converted to counts through a carry accumulator,
/// so quantized counts sum to the true path. Every random draw happens
/// whatever the noise levels, so the stream of draws depends only on the
/// trace length.
pub fn synthesize_sensors<R: Rng>(
    truth: &[GroundTruthSample],
    texture: &TextureModel,
    cfg: &SynthConfig,
    rng: &mut R,
) -> Result<Vec<SensorFrame>> {
    texture.validate()?;
    cfg.noise.validate()?;
    cfg.scale.validate()?;
    let noise = cfg.noise;
    let mpc = cfg.scale.mm_per_count();
    let slip = texture.slip_sigma_counts * noise.slip_scale;
    let bias = gauss3(rng, noise.gyro_bias_sigma_dps);
    let gradient = noise.mag_gradient_gauss_per_mm.map(Vec3::from_array);
    let origin = truth.first().map_or(Vec3::ZERO, |s| s.position);
    let mut carry = (0.0_f64, 0.0_f64);
    let mut out = Vec::with_capacity(truth.len());

    for (k, s) in truth.iter().enumerate() {
        if !(s.position.is_finite()) {
            return Err(Error::DegenerateVector);
        }
        let mut frame = SensorFrame {
            timestamp_ms: s.t_ms,
            ..Default::default()
        };
        let slip_draw = (gauss(rng), gauss(rng));
        let dropout_draw: f64 = rng.random();
        let squal_draw = gauss(rng);
        let lift_draw: f64 = rng.random();
        let mut rate = Vec3::ZERO;

        if k > 0 {
            let prev = &truth[k - 1];
            if s.t_ms < prev.t_ms {
                return Err(Error::OutOfOrder {
                    previous: prev.t_ms,
                    current: s.t_ms,
                });
            }
            let step = s.position - prev.position;
            let mid = prev.orientation.slerp(s.orientation, 0.5);
            let offset = step.dot(mid.z_axis());
            if offset.abs() > 1e-6 {
                return Err(Error::OffPlane { index: k, offset });
            }
            let dt = f64::from(s.t_ms - prev.t_ms) / 1000.0;
            if dt > 0.0 {
                rate = (prev.orientation.conjugate() * s.orientation).to_rotation_vector() * (180.0 / std::f64::consts::PI / dt);
            }
            if s.contact {
                carry.0 += step.dot(mid.x_axis()) / mpc;
                carry.1 += step.dot(mid.y_axis()) / mpc;
                if step.norm() > 0.0 {
                    carry.0 += slip * slip_draw.0;
                    carry.1 += slip * slip_draw.1;
                }
                let dropped = step.norm() > 0.0 && dropout_draw < texture.dropout_prob;
                if !dropped {
                    let dx = carry.0.round().clamp(f64::from(i16::MIN), f64::from(i16::MAX));
                    let dy = carry.1.round().clamp(f64::from(i16::MIN), f64::from(i16::MAX));
                    carry.0 -= dx;
                    carry.1 -= dy;
                    frame.dx = dx as i16;
                    frame.dy = dy as i16;
                }
            }
        }

        frame.squal = if s.contact {
            (texture.squal_mean + texture.squal_jitter * squal_draw)
                .round()
                .clamp(50.0, 90.0) as u8
        } else {
            // lifted well past the tracking limit
            let d = 4.75 + 1.25 * lift_draw;
            distance_to_squal(d, texture)?.floor() as u8
        };

        let body_g = s.orientation.conjugate().rotate_vector(GRAVITY_WORLD);
        let r = s.position - origin;
        let field = cfg.mag_field + Vec3::new(gradient[0].dot(r), gradient[1].dot(r), gradient[2].dot(r));
        let body_m = s.orientation.conjugate().rotate_vector(field);
        let gyro = rate + bias + gauss3(rng, noise.gyro_sigma_dps);
        let accel = body_g + gauss3(rng, noise.accel_sigma_g);
        let mag = body_m + noise.mag_hard_iron_gauss + gauss3(rng, noise.mag_sigma_gauss);
        frame.gyro_raw = to_lsb(gyro, cfg.scale.gyro_dps_per_lsb);
        frame.accel_raw = to_lsb(accel, cfg.scale.accel_g_per_lsb);
        frame.mag_raw = to_lsb(mag, cfg.scale.mag_gauss_per_lsb);
        out.push(frame);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrial {
    pub spec: TrialSpec,
    pub truth: Vec<GroundTruthSample>,
    pub frames: Vec<SensorFrame>,
}

pub fn simulate_trial(spec: &TrialSpec, synth: &SynthConfig) -> Result<SimTrial> {
    let truth = gen_trajectory(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let frames = synthesize_sensors(&truth, &spec.texture.model(), synth, &mut rng)?;
    Ok(SimTrial {
        spec: *spec,
        truth,
        frames,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignManifest {
    pub seed: u64,
    pub noise: NoisePreset,
    pub trials: Vec<TrialSpec>,
}

/// The full texture x size x shape x repetition grid. One tilt is drawn per
/// (texture, shape, repetition) and shared by the four sizes, so size
/// comparisons are paired; every trial then gets its own noise seed. All
/// draws come from one generator seeded with `seed`.
pub fn campaign_specs(seed: u64) -> Vec<TrialSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_texture = Shape::GRID.len() * REPS as usize;
    let tilts: Vec<f64> = (0..Texture::ALL.len() * per_texture)
        .map(|_| rng.random_range(0.0..=90.0))
        .collect();
    let mut out = Vec::with_capacity(360);
    for (ti, texture) in Texture::ALL.into_iter().enumerate() {
        for size in SIZES_MM {
            for (si, shape) in Shape::GRID.into_iter().enumerate() {
                for rep in 1..=REPS {
                    let tilt = tilts[ti * per_texture + si * REPS as usize + (rep - 1) as usize];
                    out.push(TrialSpec::new(texture, size, shape, rep, tilt, rng.next_u64()));
                }
            }
        }
    }
    out
}

/// The grid cell's spec from the campaign drawn with `seed`, so a single
/// trial and the same cell of a campaign are identical.
pub fn single_trial_spec(texture: Texture, size_mm: u32, shape: Shape, rep: u32, seed: u64) -> Result<TrialSpec> {
    if shape == Shape::Cylinder {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = TrialSpec::new(texture, size_mm, shape, rep, 0.0, rng.next_u64());
        spec.validate()?;
        return Ok(spec);
    }
    let probe = TrialSpec::new(texture, size_mm, shape, rep, 0.0, 0);
    probe.validate()?;
    Ok(campaign_specs(seed)
        .into_iter()
        .find(|s| s.texture == texture && s.size_mm == size_mm && s.shape == shape && s.rep == rep)
        .expect("validated cell is in the grid"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GestureScript {
    Tap,
    Doubletap,
    Press,
    MovingTapReject,
}

impl GestureScript {
    pub const ALL: [GestureScript; 4] = [
        GestureScript::Tap,
        GestureScript::Doubletap,
        GestureScript::Press,
        GestureScript::MovingTapReject,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GestureScript::Tap => "tap",
            GestureScript::Doubletap => "doubletap",
            GestureScript::Press => "press",
            GestureScript::MovingTapReject => "moving-tap-reject",
        }
    }

    /// Event kinds the detector must emit for this script, in order.
    pub fn expected(self) -> Vec<GestureKind> {
        use GestureKind::*;
        match self {
            GestureScript::Tap => vec![ContactBegin, ContactEnd, Tap],
            GestureScript::Doubletap => vec![ContactBegin, ContactEnd, ContactBegin, ContactEnd, DoubleTap],
            GestureScript::Press => vec![ContactBegin, PressBegin, PressEnd, ContactEnd],
            GestureScript::MovingTapReject => vec![ContactBegin, ContactEnd],
        }
    }
}

impl fmt::Display for GestureScript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GestureScript {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        GestureScript::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| Error::config("kind", "kind must be one of tap,doubletap,press,moving-tap-reject"))
    }
}

const SCRIPT_DT_MS: u32 = 20;

/// A level, stationary device frame with the default sensor scales.
pub fn resting_frame(t_ms: u32) -> SensorFrame {
    SensorFrame {
        timestamp_ms: t_ms,
        accel_raw: [0, 0, -16384],
        mag_raw: [220, 0, -440],
        ..Default::default()
    }
}

fn round_to_frame(ms: u32) -> u32 {
    ((ms + SCRIPT_DT_MS / 2) / SCRIPT_DT_MS).max(1) * SCRIPT_DT_MS
}

/// Onset, release and per-frame `(t_ms, dx, dy)` moves of one scripted contact.
type ContactSegment = (u32, u32, Vec<(u32, i16, i16)>);

/// 50 Hz frame sequence that `cfg` must classify as the given gesture.
pub fn script_gesture_trace(kind: GestureScript, cfg: &GestureConfig) -> Vec<SensorFrame> {
    let hi = cfg.tap_squal.max(cfg.press_squal).saturating_add(5).min(SQUAL_MAX);
    // taps stay comfortably inside both the tap window and the press hold
    let tap_len = round_to_frame(cfg.tap_window_ms.min(cfg.press_hold_ms) / 2);
    let step = i16::try_from(cfg.tap_move_limit_counts.min(5)).unwrap_or(5);
    let lead = 3 * SCRIPT_DT_MS;
    let tail = cfg.doubletap_window_ms + 10 * SCRIPT_DT_MS;

    let mut contacts: Vec<ContactSegment> = Vec::new();
    match kind {
        GestureScript::Tap => {
            contacts.push((lead, lead + tap_len, vec![(lead + SCRIPT_DT_MS, 1, 0)]));
        }
        GestureScript::Doubletap => {
            // onsets about 350 ms apart, never beyond the pairing window
            let gap = (cfg.doubletap_window_ms.min(350) / SCRIPT_DT_MS * SCRIPT_DT_MS)
                .max(tap_len + 2 * SCRIPT_DT_MS);
            let off = i16::try_from(cfg.doubletap_offset_counts.min(10)).unwrap_or(10);
            let half = (off / 2, off - off / 2);
            let second = lead + gap;
            contacts.push((
                lead,
                lead + tap_len,
                vec![(lead + tap_len - SCRIPT_DT_MS, half.0.min(step), 2.min(step))],
            ));
            contacts.push((
                second,
                second + tap_len,
                vec![(second, half.1.min(step), 2.min(step))],
            ));
        }
        GestureScript::Press => {
            let hold = cfg.press_hold_ms + 100;
            let drift = (0..hold).step_by(4 * SCRIPT_DT_MS as usize).map(|t| (t, 1, 0)).collect();
            contacts.push((0, round_to_frame(hold), drift));
        }
        GestureScript::MovingTapReject => {
            let len = round_to_frame(cfg.tap_window_ms.min(cfg.press_hold_ms).saturating_sub(60).max(60));
            let frames = (len / SCRIPT_DT_MS).max(1);
            let total = (cfg.tap_move_limit_counts * 4).max(20);
            let per = i16::try_from(total.div_ceil(frames)).unwrap_or(i16::MAX);
            let moves = (0..frames).map(|i| (lead + i * SCRIPT_DT_MS, per, 0)).collect();
            contacts.push((lead, lead + len, moves));
        }
    }

    let end = contacts.last().map_or(0, |c| c.1) + tail;
    (0..=end / SCRIPT_DT_MS)
        .map(|i| {
            let t = i * SCRIPT_DT_MS;
            let mut f = resting_frame(t);
            for (on, off, moves) in &contacts {
                if (*on..*off).contains(&t) {
                    f.squal = hi;
                }
                if let Some(&(_, dx, dy)) = moves.iter().find(|m| m.0 == t) {
                    f.dx = dx;
                    f.dy = dy;
                }
            }
            f
        })
        .collect()
}

/// Random SQUAL/motion stream exercising every detector path: idle, taps,
/// presses, moving contacts, threshold flutter and repeated timestamps.
pub fn random_gesture_trace(seed: u64, n_frames: usize) -> Vec<SensorFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_frames);
    let mut t: u32 = rng.random_range(0..1000);
    while out.len() < n_frames {
        let (len, base, jitter, motion): (usize, u8, u8, i16) = match rng.random_range(0..5) {
            0 => (rng.random_range(1..40), 0, 4, 0),
            1 => (rng.random_range(2..12), 45, 10, 1),
            2 => (rng.random_range(12..40), 50, 15, 1),
            3 => (rng.random_range(3..20), 40, 20, 6),
            _ => (rng.random_range(1..10), 8, 6, 2),
        };
        for _ in 0..len {
            let mut f = resting_frame(t);
            f.squal = base
                .saturating_add(rng.random_range(0..=jitter))
                .saturating_sub(jitter / 2)
                .min(SQUAL_MAX);
            if motion > 0 {
                f.dx = rng.random_range(-motion..=motion);
                f.dy = rng.random_range(-motion..=motion);
            }
            out.push(f);
            t += match rng.random_range(0..20) {
                0 => 0,
                1 => rng.random_range(21..400),
                _ => SCRIPT_DT_MS,
            };
            if out.len() == n_frames {
                break;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gestures::detect;
    use crate::geom::angle_between;

    fn zero_trial(shape: Shape, size: u32, tilt: f64) -> SimTrial {
        let mut spec = TrialSpec::new(Texture::Mousepad, size, shape, 1, tilt, 3);
        spec.dwell_ms = 0;
        simulate_trial(&spec, &SynthConfig::with_noise(NoiseModel::zero())).unwrap()
    }

    #[test]
    fn circle_duration_and_count() {
        let mut spec = TrialSpec::new(Texture::Wood, 42, Shape::Circle, 1, 0.0, 1);
        spec.dwell_ms = 0;
        let d = drawing_duration_s(&spec);
        assert!((d - std::f64::consts::PI * 42.0 / 30.0).abs() < 1e-12);
        let truth = gen_trajectory(&spec).unwrap();
        assert_eq!(truth.len(), 221);
        let closing = (truth.last().unwrap().position - truth[0].position).norm();
        assert!(closing < 1e-9);
    }

    #[test]
    fn flat_hline_is_horizontal() {
        let spec = TrialSpec::new(Texture::Jeans, 12, Shape::Hline, 2, 0.0, 9);
        let truth = gen_trajectory(&spec).unwrap();
        let end = truth.last().unwrap().position;
        assert!((end - Vec3::new(12.0, 0.0, 0.0)).norm() < 1e-12);
        assert!(truth.iter().all(|s| s.position.z == 0.0));
        for w in truth.windows(2) {
            assert!((w[1].position - w[0].position).norm() <= 30.0 * 0.02 * 1.5);
        }
    }

    #[test]
    fn tilted_plane_normal_angle() {
        let spec = TrialSpec::new(Texture::Jeans, 21, Shape::Square, 1, 35.0, 9);
        let n = spec.plane_attitude().z_axis();
        assert!((angle_between(n, Vec3::Z).unwrap() - 35.0).abs() < 1e-9);
    }

    #[test]
    fn straight_line_count_sum() {
        // 10 mm along u on a level plane
        let truth: Vec<_> = (0..=50)
            .map(|k| GroundTruthSample {
                t_ms: k * 20,
                position: Vec3::new(10.0 * f64::from(k) / 50.0, 0.0, 0.0),
                orientation: UnitQuat::IDENTITY,
                contact: true,
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let frames = synthesize_sensors(
            &truth,
            &Texture::Mousepad.model(),
            &SynthConfig::with_noise(NoiseModel::zero()),
            &mut rng,
        )
        .unwrap();
        let sx: i64 = frames.iter().map(|f| i64::from(f.dx)).sum();
        let sy: i64 = frames.iter().map(|f| i64::from(f.dy)).sum();
        assert_eq!((sx, sy), ((10.0_f64 / 0.0635).round() as i64, 0));
    }

    #[test]
    fn static_zero_noise_sensors() {
        // the lead-in dwell is stationary
        let spec = TrialSpec::new(Texture::Wood, 12, Shape::Hline, 1, 20.0, 5);
        let t = simulate_trial(&spec, &SynthConfig::with_noise(NoiseModel::zero())).unwrap();
        let g = spec.plane_attitude().conjugate().rotate_vector(GRAVITY_WORLD);
        let expect = to_lsb(g, 1.0 / 16384.0);
        for f in t.frames.iter().take(30) {
            assert_eq!((f.dx, f.dy), (0, 0));
            assert_eq!(f.gyro_raw, [0, 0, 0]);
            assert_eq!(f.accel_raw, expect);
        }
    }

    #[test]
    fn lift_squal_below_five() {
        let spec = TrialSpec::new(Texture::Mousepad, 42, Shape::Hline, 1, 0.0, 11);
        let mut truth = gen_trajectory(&spec).unwrap();
        insert_lift(&mut truth, 800, 1200);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let frames =
            synthesize_sensors(&truth, &spec.texture.model(), &SynthConfig::default(), &mut rng).unwrap();
        for (s, f) in truth.iter().zip(&frames) {
            if s.contact {
                assert!((50..=90).contains(&f.squal));
            } else {
                assert!(f.squal < 5);
                assert_eq!((f.dx, f.dy), (0, 0));
            }
        }
    }

    #[test]
    fn off_plane_truth_rejected() {
        let mut truth = gen_trajectory(&TrialSpec::new(Texture::Wood, 12, Shape::Hline, 1, 0.0, 1)).unwrap();
        truth[40].position.z += 0.01;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = synthesize_sensors(&truth, &Texture::Wood.model(), &SynthConfig::default(), &mut rng);
        assert!(matches!(err, Err(Error::OffPlane { index: 40, .. })));
    }

    #[test]
    fn cylinder_path_is_tangent() {
        let t = zero_trial(Shape::Cylinder, 42, 0.0);
        let sx: i64 = t.frames.iter().map(|f| i64::from(f.dx)).sum();
        let sy: i64 = t.frames.iter().map(|f| i64::from(f.dy)).sum();
        // arc length, not chord: pi * 42 mm
        assert!((sx as f64 * 0.0635 - std::f64::consts::PI * 42.0).abs() < 0.5, "{sx}");
        assert_eq!(sy, 0);
    }

    #[test]
    fn campaign_grid_and_determinism() {
        let a = campaign_specs(42);
        assert_eq!(a.len(), 360);
        assert_eq!(a, campaign_specs(42));
        assert_ne!(a, campaign_specs(43));
        assert!(a.iter().all(|s| (0.0..=90.0).contains(&s.tilt_deg)));
        let mut names: Vec<_> = a.iter().map(TrialSpec::name).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 360);
        let total: usize = a
            .iter()
            .map(|s| gen_trajectory(s).unwrap().len())
            .sum();
        assert!((65_000..=80_000).contains(&total), "{total}");
    }

    #[test]
    fn scripted_gestures_classify() {
        let cfg = GestureConfig::default();
        for kind in GestureScript::ALL {
            let frames = script_gesture_trace(kind, &cfg);
            let ev = detect(&frames, cfg).unwrap();
            let kinds: Vec<_> = ev.iter().map(|e| e.kind).collect();
            assert_eq!(kinds, kind.expected(), "{kind}");
        }
    }

    #[test]
    fn parse_selectors() {
        assert_eq!(parse_size("42").unwrap(), 42);
        let e = parse_size("13").unwrap_err();
        assert!(e.to_string().contains("size must be one of 12,21,42,84"));
        assert_eq!("circle".parse::<Shape>().unwrap(), Shape::Circle);
        assert_eq!("zero".parse::<NoisePreset>().unwrap(), NoisePreset::Zero);
    }
}
