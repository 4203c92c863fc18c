//! Host-side replay: frames -> physical units -> orientation filter ->
//! gestures -> pointer, plus the per-trial simulate-and-replay loop used by
//! campaigns.

use serde::{Deserialize, Serialize};

use crate::config::KvMap;
use crate::error::{Error, Result};
use crate::eval::{evaluate, TrialResult};
use crate::filter::{FilterConfig, FilterDiagnostics, OrientationFilter};
use crate::geom::UnitQuat;
use crate::gestures::{GestureConfig, GestureDetector, GestureEvent, GestureKind};
use crate::interaction::{end_stroke_rotation, MountMode, Rotation, RotationConfig, StrokeAccumulator, Translator};
use crate::sim::{poses, simulate_trial, SimTrial, SynthConfig, TrialSpec};
use crate::traj::PoseSample;
use crate::wire::{apply_scales, decode_trace, encode_trace, DecodeDiagnostics, ScaleConfig, SensorFrame};

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayConfig {
    pub scale: ScaleConfig,
    pub filter: FilterConfig,
    pub gestures: GestureConfig,
    pub rotation: RotationConfig,
    pub mount: MountMode,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            scale: ScaleConfig::default(),
            filter: FilterConfig::default(),
            gestures: GestureConfig::default(),
            rotation: RotationConfig::default(),
            mount: MountMode::Fingerpad,
        }
    }
}

fn apply_scale_kv(c: &mut ScaleConfig, kv: &KvMap) -> Result<()> {
    for (key, e) in kv.iter() {
        match key {
            "counts_per_inch" => c.counts_per_inch = e.f64()?,
            "accel_g_per_lsb" => c.accel_g_per_lsb = e.f64()?,
            "gyro_dps_per_lsb" => c.gyro_dps_per_lsb = e.f64()?,
            "mag_gauss_per_lsb" => c.mag_gauss_per_lsb = e.f64()?,
            _ => return Err(e.unknown_key()),
        }
    }
    c.validate()
}

fn apply_rotation_kv(c: &mut RotationConfig, kv: &KvMap) -> Result<()> {
    for (key, e) in kv.iter() {
        match key {
            "gain_deg_per_mm" => c.gain_deg_per_mm = e.f64()?,
            "dead_zone_mm" => c.dead_zone_mm = e.f64()?,
            _ => return Err(e.unknown_key()),
        }
    }
    c.validate()
}

impl ReplayConfig {
    /// Applies `section.key=value` entries, where the section is one of
    /// `filter`, `gesture`, `scale`, `rotation`. Gesture entries may carry a
    /// texture scope (`gesture.jeans.tap_squal`), which is honored when
    /// `texture` matches.
    pub fn apply_sections(&mut self, kv: &KvMap, texture: Option<&str>) -> Result<()> {
        if let Some((k, e)) = kv.unscoped().iter().next() {
            return Err(Error::Parse {
                line: e.line,
                message: format!("{k}: expected section.key (filter, gesture, scale, rotation)"),
            });
        }
        for scope in kv.scopes() {
            let sub = kv.scoped(&scope);
            match scope.as_str() {
                "filter" => self.filter.apply_kv(&sub)?,
                "scale" => apply_scale_kv(&mut self.scale, &sub)?,
                "rotation" => apply_rotation_kv(&mut self.rotation, &sub)?,
                "gesture" => {
                    let mut base = self.gestures;
                    base.apply_kv(&sub.unscoped())?;
                    let mut chosen = base;
                    for t in sub.scopes() {
                        let mut c = base;
                        c.apply_kv(&sub.scoped(&t))?;
                        if texture == Some(t.as_str()) {
                            chosen = c;
                        }
                    }
                    self.gestures = chosen;
                }
                other => {
                    return Err(Error::config(
                        "section",
                        format!("unknown section {other:?}; expected filter, gesture, scale or rotation"),
                    ))
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrokeRotation {
    pub t_ms: u32,
    pub rotation: Rotation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutput {
    /// One row per frame.
    pub pointer: Vec<PoseSample>,
    pub events: Vec<GestureEvent>,
    pub rotations: Vec<StrokeRotation>,
    pub filter: FilterDiagnostics,
}

/// Streaming replay state for one device.
#[derive(Debug, Clone)]
pub struct Replayer {
    cfg: ReplayConfig,
    filter: OrientationFilter,
    gestures: GestureDetector,
    translator: Translator,
    stroke: Option<StrokeAccumulator>,
    out: ReplayOutput,
}

impl Replayer {
    pub fn new(cfg: ReplayConfig) -> Result<Self> {
        cfg.scale.validate()?;
        cfg.rotation.validate()?;
        Ok(Self {
            filter: OrientationFilter::new(cfg.filter.clone())?,
            gestures: GestureDetector::new(cfg.gestures)?,
            translator: Translator::new(cfg.mount, cfg.scale),
            stroke: None,
            out: ReplayOutput {
                pointer: Vec::new(),
                events: Vec::new(),
                rotations: Vec::new(),
                filter: FilterDiagnostics::default(),
            },
            cfg,
        })
    }

    pub fn step(&mut self, frame: &SensorFrame) -> Result<()> {
        let sample = apply_scales(frame, &self.cfg.scale);
        let est = self.filter.process(&sample)?;
        let events = self.gestures.step(frame)?;
        let q: UnitQuat = est.q;
        let state = *self.translator.step(q, frame.dx, frame.dy);
        for e in &events {
            match e.kind {
                GestureKind::ContactBegin => {
                    let mut s = StrokeAccumulator::default();
                    s.add_counts(frame.dx, frame.dy, &self.cfg.scale);
                    self.stroke = Some(s);
                }
                GestureKind::ContactEnd => {
                    if let Some(s) = self.stroke.take() {
                        if let Some(rotation) = end_stroke_rotation(&s, &state.plane, &self.cfg.rotation) {
                            self.out.rotations.push(StrokeRotation { t_ms: e.t_ms, rotation });
                        }
                    }
                }
                _ => {}
            }
        }
        let begun_now = events.iter().any(|e| e.kind == GestureKind::ContactBegin);
        if let (Some(s), false) = (self.stroke.as_mut(), begun_now) {
            s.add_counts(frame.dx, frame.dy, &self.cfg.scale);
        }
        self.out.events.extend(events);
        self.out.pointer.push(PoseSample {
            t_ms: frame.timestamp_ms,
            position: state.position,
            orientation: q,
        });
        Ok(())
    }

    pub fn finish(mut self) -> ReplayOutput {
        let tail = self.gestures.finish();
        self.out.events.extend(tail);
        self.out.filter = self.filter.diagnostics();
        self.out
    }
}

pub fn replay(frames: &[SensorFrame], cfg: &ReplayConfig) -> Result<ReplayOutput> {
    let mut r = Replayer::new(cfg.clone())?;
    for f in frames {
        r.step(f)?;
    }
    Ok(r.finish())
}

/// Decodes a `.3dt` byte stream and replays it. Corruption is reported in
/// the diagnostics rather than failing the replay.
pub fn replay_bytes(bytes: &[u8], cfg: &ReplayConfig) -> Result<(ReplayOutput, DecodeDiagnostics)> {
    let (frames, diag) = decode_trace(bytes);
    Ok((replay(&frames, cfg)?, diag))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRun {
    pub trial: SimTrial,
    pub replay: ReplayOutput,
    pub result: TrialResult,
}

/// Simulates one trial, passes it through the wire encoding and replays it
/// against its ground truth.
pub fn run_trial(spec: &TrialSpec, synth: &SynthConfig, cfg: &ReplayConfig) -> Result<TrialRun> {
    let trial = simulate_trial(spec, synth)?;
    let bytes = encode_trace(&trial.frames)?;
    let (frames, diag) = decode_trace(&bytes);
    debug_assert!(diag.is_clean());
    let mut cfg = cfg.clone();
    cfg.scale = synth.scale;
    let replay = replay(&frames, &cfg)?;
    let metrics = evaluate(&replay.pointer, &poses(&trial.truth))?;
    Ok(TrialRun {
        result: TrialResult {
            spec: *spec,
            metrics,
        },
        trial,
        replay,
    })
}

pub fn run_trials(specs: &[TrialSpec], synth: &SynthConfig, cfg: &ReplayConfig) -> Result<Vec<TrialResult>> {
    specs
        .iter()
        .map(|s| run_trial(s, synth, cfg).map(|r| r.result))
        .collect()
}
