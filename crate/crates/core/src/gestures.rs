//! Contact, tap, double-tap and press detection from SQUAL and optical deltas.
//!
//! A contact episode runs from the first frame with `squal >= contact_squal`
//! to the first frame that drops below it. An episode is a tap when it peaks
//! at or above `tap_squal`, lasts at most `tap_window_ms`, moves at most
//! `tap_move_limit_counts` on each axis (sum of absolute deltas) and never
//! became a press. A tap is held back for `doubletap_window_ms` so that a
//! second tap starting inside the window can be paired into a double-tap.
//! A press fires once `squal >= press_squal` has been sustained for
//! `press_hold_ms`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::KvMap;
use crate::error::{Error, Result};
use crate::wire::{SensorFrame, SQUAL_MAX};

/// Smallest double-tap window the detector accepts, ms.
pub const DOUBLETAP_MIN_WINDOW_MS: u32 = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GestureConfig {
    pub contact_squal: u8,
    pub tap_squal: u8,
    pub tap_window_ms: u32,
    pub tap_move_limit_counts: u32,
    pub doubletap_window_ms: u32,
    pub doubletap_offset_counts: u32,
    pub press_squal: u8,
    pub press_hold_ms: u32,
}

impl Default for GestureConfig {
    fn default() -> Self {
        Self {
            contact_squal: 10,
            tap_squal: 40,
            tap_window_ms: 300,
            tap_move_limit_counts: 5,
            doubletap_window_ms: 500,
            doubletap_offset_counts: 15,
            press_squal: 40,
            press_hold_ms: 300,
        }
    }
}

fn squal_entry(e: &crate::config::KvEntry) -> Result<u8> {
    let v = e.u32()?;
    u8::try_from(v).map_err(|_| Error::Parse {
        line: e.line,
        message: format!("{}: SQUAL {v} out of range", e.key),
    })
}

impl GestureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0 < self.contact_squal
            && self.contact_squal <= self.tap_squal
            && self.tap_squal <= SQUAL_MAX)
        {
            return Err(Error::config(
                "contact_squal",
                "need 0 < contact_squal <= tap_squal <= 169",
            ));
        }
        if !(self.contact_squal <= self.press_squal && self.press_squal <= SQUAL_MAX) {
            return Err(Error::config(
                "press_squal",
                "need contact_squal <= press_squal <= 169",
            ));
        }
        for (name, v) in [
            ("tap_window_ms", self.tap_window_ms),
            ("press_hold_ms", self.press_hold_ms),
        ] {
            if v == 0 {
                return Err(Error::config(name, "must be > 0"));
            }
        }
        if self.doubletap_window_ms < DOUBLETAP_MIN_WINDOW_MS {
            return Err(Error::config(
                "doubletap_window_ms",
                format!("must be >= {DOUBLETAP_MIN_WINDOW_MS}"),
            ));
        }
        Ok(())
    }

    pub fn apply_kv(&mut self, kv: &KvMap) -> Result<()> {
        for (key, e) in kv.iter() {
            match key {
                "contact_squal" => self.contact_squal = squal_entry(e)?,
                "tap_squal" => self.tap_squal = squal_entry(e)?,
                "press_squal" => self.press_squal = squal_entry(e)?,
                "tap_window_ms" => self.tap_window_ms = e.u32()?,
                "tap_move_limit_counts" => self.tap_move_limit_counts = e.u32()?,
                "doubletap_window_ms" => self.doubletap_window_ms = e.u32()?,
                "doubletap_offset_counts" => self.doubletap_offset_counts = e.u32()?,
                "press_hold_ms" => self.press_hold_ms = e.u32()?,
                _ => return Err(e.unknown_key()),
            }
        }
        self.validate()
    }
}

/// Threshold profiles keyed by texture name. Unscoped keys set the default
/// profile; `jeans.tap_squal=35` style keys override it for one texture.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GestureProfiles {
    pub default: GestureConfig,
    pub by_texture: BTreeMap<String, GestureConfig>,
}

impl GestureProfiles {
    pub fn from_kv(kv: &KvMap) -> Result<Self> {
        let mut default = GestureConfig::default();
        default.apply_kv(&kv.unscoped())?;
        let mut by_texture = BTreeMap::new();
        for scope in kv.scopes() {
            let mut cfg = default;
            cfg.apply_kv(&kv.scoped(&scope))?;
            by_texture.insert(scope, cfg);
        }
        Ok(Self {
            default,
            by_texture,
        })
    }

    pub fn from_kv_text(text: &str) -> Result<Self> {
        Self::from_kv(&KvMap::parse(text)?)
    }

    pub fn for_texture(&self, texture: &str) -> GestureConfig {
        self.by_texture.get(texture).copied().unwrap_or(self.default)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GestureKind {
    ContactBegin,
    ContactEnd,
    Tap,
    DoubleTap,
    PressBegin,
    PressEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GestureEvent {
    pub t_ms: u32,
    pub kind: GestureKind,
    /// Accumulated optical position at the event, counts.
    pub x: i64,
    pub y: i64,
}

impl GestureEvent {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("plain struct serializes")
    }
}

pub fn events_to_jsonl(events: &[GestureEvent]) -> String {
    events
        .iter()
        .map(|e| e.to_json_line() + "\n")
        .collect()
}

pub fn events_from_jsonl(text: &str) -> Result<Vec<GestureEvent>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Episode {
    t_on: u32,
    pos_on: (i64, i64),
    peak: u8,
    move_x: u64,
    move_y: u64,
    pressed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct PendingTap {
    t_on: u32,
    pos: (i64, i64),
}

/// Streaming detector state; one per device stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GestureDetector {
    cfg: GestureConfig,
    last_t: Option<u32>,
    pos: (i64, i64),
    episode: Option<Episode>,
    pending: Option<PendingTap>,
    press_since: Option<u32>,
    pressing: bool,
}

impl GestureDetector {
    pub fn new(cfg: GestureConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            last_t: None,
            pos: (0, 0),
            episode: None,
            pending: None,
            press_since: None,
            pressing: false,
        })
    }

    pub fn config(&self) -> &GestureConfig {
        &self.cfg
    }

    pub fn position(&self) -> (i64, i64) {
        self.pos
    }

    fn event(&self, t_ms: u32, kind: GestureKind) -> GestureEvent {
        GestureEvent {
            t_ms,
            kind,
            x: self.pos.0,
            y: self.pos.1,
        }
    }

    fn flush_lapsed(&mut self, t: u32, out: &mut Vec<GestureEvent>) {
        let Some(p) = self.pending else { return };
        let window = self.cfg.doubletap_window_ms;
        let lapsed = t - p.t_on > window;
        // a contact that started inside the window may still complete the pair
        let candidate_open = self
            .episode
            .is_some_and(|ep| ep.t_on - p.t_on <= window);
        if lapsed && !candidate_open {
            out.push(self.event(t, GestureKind::Tap));
            self.pending = None;
        }
    }

    /// Consumes one frame and returns the events it completes.
    pub fn step(&mut self, frame: &SensorFrame) -> Result<Vec<GestureEvent>> {
        let t = frame.timestamp_ms;
        if let Some(prev) = self.last_t {
            if t < prev {
                return Err(Error::OutOfOrder {
                    previous: prev,
                    current: t,
                });
            }
        }
        self.last_t = Some(t);
        self.pos.0 += i64::from(frame.dx);
        self.pos.1 += i64::from(frame.dy);
        let (adx, ady) = (
            u64::from(frame.dx.unsigned_abs()),
            u64::from(frame.dy.unsigned_abs()),
        );

        let mut out = Vec::new();
        self.flush_lapsed(t, &mut out);

        let cfg = self.cfg;
        let touching = frame.squal >= cfg.contact_squal;

        match self.episode.as_mut() {
            None if touching => {
                self.episode = Some(Episode {
                    t_on: t,
                    pos_on: self.pos,
                    peak: frame.squal,
                    move_x: adx,
                    move_y: ady,
                    pressed: false,
                });
                out.push(self.event(t, GestureKind::ContactBegin));
            }
            Some(ep) => {
                ep.peak = ep.peak.max(frame.squal);
                ep.move_x += adx;
                ep.move_y += ady;
            }
            None => {}
        }

        if frame.squal >= cfg.press_squal {
            let since = *self.press_since.get_or_insert(t);
            if !self.pressing && t - since >= cfg.press_hold_ms {
                self.pressing = true;
                if let Some(ep) = self.episode.as_mut() {
                    ep.pressed = true;
                }
                out.push(self.event(t, GestureKind::PressBegin));
            }
        } else {
            self.press_since = None;
            if self.pressing {
                self.pressing = false;
                out.push(self.event(t, GestureKind::PressEnd));
            }
        }

        if !touching {
            if let Some(ep) = self.episode.take() {
                out.push(self.event(t, GestureKind::ContactEnd));
                let is_tap = !ep.pressed
                    && ep.peak >= cfg.tap_squal
                    && t - ep.t_on <= cfg.tap_window_ms
                    && ep.move_x <= u64::from(cfg.tap_move_limit_counts)
                    && ep.move_y <= u64::from(cfg.tap_move_limit_counts);
                if is_tap {
                    self.register_tap(t, ep, &mut out);
                }
            }
        }

        self.flush_lapsed(t, &mut out);
        Ok(out)
    }

    fn register_tap(&mut self, t: u32, ep: Episode, out: &mut Vec<GestureEvent>) {
        let cfg = self.cfg;
        if let Some(p) = self.pending.take() {
            let within = ep.t_on - p.t_on <= cfg.doubletap_window_ms;
            let off = u64::from(cfg.doubletap_offset_counts);
            let near = (ep.pos_on.0 - p.pos.0).unsigned_abs() <= off
                && (ep.pos_on.1 - p.pos.1).unsigned_abs() <= off;
            if within && near {
                out.push(self.event(t, GestureKind::DoubleTap));
                return;
            }
            out.push(self.event(t, GestureKind::Tap));
        }
        self.pending = Some(PendingTap {
            t_on: ep.t_on,
            pos: ep.pos_on,
        });
    }

    /// Ends the stream, releasing a tap still waiting for its partner.
    pub fn finish(&mut self) -> Vec<GestureEvent> {
        match (self.pending.take(), self.last_t) {
            (Some(_), Some(t)) => vec![self.event(t, GestureKind::Tap)],
            _ => Vec::new(),
        }
    }
}

/// Runs a whole frame sequence through a fresh detector, including the
/// end-of-stream flush.
pub fn detect(frames: &[SensorFrame], cfg: GestureConfig) -> Result<Vec<GestureEvent>> {
    let mut det = GestureDetector::new(cfg)?;
    let mut out = Vec::new();
    for f in frames {
        out.extend(det.step(f)?);
    }
    out.extend(det.finish());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use GestureKind::*;

    /// 50 Hz frames from `(t_ms, squal, dx, dy)` breakpoints; values hold
    /// until the next breakpoint, deltas apply only on the breakpoint frame.
    fn frames(until: u32, points: &[(u32, u8, i16, i16)]) -> Vec<SensorFrame> {
        let mut out = Vec::new();
        let mut squal = 0;
        let mut t = 0;
        while t <= until {
            let mut f = SensorFrame {
                timestamp_ms: t,
                ..Default::default()
            };
            if let Some(&(_, s, dx, dy)) = points.iter().find(|p| p.0 == t) {
                squal = s;
                f.dx = dx;
                f.dy = dy;
            }
            f.squal = squal;
            out.push(f);
            t += 10;
        }
        out
    }

    fn kinds(ev: &[GestureEvent]) -> Vec<GestureKind> {
        ev.iter().map(|e| e.kind).collect()
    }

    #[test]
    fn single_tap_waits_for_window() {
        let f = frames(1000, &[(50, 45, 1, 0), (200, 0, 0, 1)]);
        let ev = detect(&f, GestureConfig::default()).unwrap();
        assert_eq!(kinds(&ev), [ContactBegin, ContactEnd, Tap]);
        assert_eq!(ev[0].t_ms, 50);
        assert_eq!(ev[1].t_ms, 200);
        // released on the first frame past onset + 500 ms
        assert_eq!(ev[2].t_ms, 560);
    }

    #[test]
    fn two_nearby_taps_pair() {
        let f = frames(
            1500,
            &[
                (50, 45, 0, 0),
                (180, 0, 0, 0),
                (250, 0, 6, 2),
                (300, 0, 4, 2),
                (400, 45, 0, 0),
                (520, 0, 0, 0),
            ],
        );
        let ev = detect(&f, GestureConfig::default()).unwrap();
        assert_eq!(
            kinds(&ev),
            [ContactBegin, ContactEnd, ContactBegin, ContactEnd, DoubleTap]
        );
    }

    #[test]
    fn taps_too_far_apart_in_space_stay_single() {
        let f = frames(
            2000,
            &[
                (50, 45, 0, 0),
                (180, 0, 0, 0),
                (250, 0, 16, 0),
                (400, 45, 0, 0),
                (520, 0, 0, 0),
            ],
        );
        let ev = detect(&f, GestureConfig::default()).unwrap();
        let taps = ev.iter().filter(|e| e.kind == Tap).count();
        assert_eq!(taps, 2);
        assert!(!kinds(&ev).contains(&DoubleTap));
    }

    #[test]
    fn taps_far_apart_in_time_stay_single() {
        let f = frames(
            2000,
            &[(50, 45, 0, 0), (180, 0, 0, 0), (750, 45, 0, 0), (880, 0, 0, 0)],
        );
        let ev = detect(&f, GestureConfig::default()).unwrap();
        assert_eq!(
            kinds(&ev),
            [ContactBegin, ContactEnd, Tap, ContactBegin, ContactEnd, Tap]
        );
    }

    #[test]
    fn slow_second_tap_still_pairs() {
        // second onset 450 ms after the first, released after the first window closes
        let f = frames(
            2000,
            &[(0, 45, 0, 0), (100, 0, 0, 0), (450, 45, 0, 0), (700, 0, 0, 0)],
        );
        let ev = detect(&f, GestureConfig::default()).unwrap();
        assert_eq!(kinds(&ev).last(), Some(&DoubleTap));
        assert!(!kinds(&ev).contains(&Tap));
    }

    #[test]
    fn press_fires_after_hold() {
        let mut f = frames(600, &[(0, 45, 0, 0), (400, 0, 0, 0)]);
        for (i, fr) in f.iter_mut().enumerate() {
            if fr.squal > 0 && i % 4 == 0 {
                fr.dx = 1;
            }
        }
        let ev = detect(&f, GestureConfig::default()).unwrap();
        assert_eq!(kinds(&ev), [ContactBegin, PressBegin, PressEnd, ContactEnd]);
        assert_eq!(ev[1].t_ms, 300);
        assert_eq!(ev[2].t_ms, 400);
    }

    #[test]
    fn moving_contact_is_not_a_tap() {
        let f = frames(
            1200,
            &[
                (0, 45, 5, 0),
                (50, 45, 5, 0),
                (100, 45, 5, 0),
                (150, 45, 5, 0),
                (250, 0, 0, 0),
            ],
        );
        let ev = detect(&f, GestureConfig::default()).unwrap();
        assert_eq!(kinds(&ev), [ContactBegin, ContactEnd]);
    }

    #[test]
    fn shallow_contact_is_not_a_tap() {
        let f = frames(1200, &[(0, 30, 0, 0), (100, 0, 0, 0)]);
        let ev = detect(&f, GestureConfig::default()).unwrap();
        assert_eq!(kinds(&ev), [ContactBegin, ContactEnd]);
    }

    #[test]
    fn out_of_order_is_error() {
        let mut det = GestureDetector::new(GestureConfig::default()).unwrap();
        det.step(&SensorFrame {
            timestamp_ms: 40,
            ..Default::default()
        })
        .unwrap();
        let err = det
            .step(&SensorFrame {
                timestamp_ms: 20,
                ..Default::default()
            })
            .unwrap_err();
        assert!(matches!(err, Error::OutOfOrder { previous: 40, current: 20 }));
    }

    #[test]
    fn config_validation() {
        let mut c = GestureConfig::default();
        assert!(c.validate().is_ok());
        c.contact_squal = 0;
        assert!(c.validate().is_err());
        let c = GestureConfig {
            tap_squal: 5,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = GestureConfig {
            doubletap_window_ms: 150,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn profiles_per_texture() {
        let p = GestureProfiles::from_kv_text("tap_squal=42\njeans.tap_squal=35\njeans.contact_squal=8")
            .unwrap();
        assert_eq!(p.default.tap_squal, 42);
        assert_eq!(p.for_texture("jeans").tap_squal, 35);
        assert_eq!(p.for_texture("jeans").contact_squal, 8);
        assert_eq!(p.for_texture("wood"), p.default);
        assert!(GestureProfiles::from_kv_text("tap_squal=400").is_err());
    }

    #[test]
    fn jsonl_shape() {
        let e = GestureEvent {
            t_ms: 560,
            kind: Tap,
            x: 1,
            y: -2,
        };
        assert_eq!(e.to_json_line(), r#"{"t_ms":560,"kind":"Tap","x":1,"y":-2}"#);
        let back = events_from_jsonl(&events_to_jsonl(&[e, e])).unwrap();
        assert_eq!(back, vec![e, e]);
    }
}
