//! Trajectory error metrics and campaign aggregation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::angle_between;
use crate::sim::{Shape, TrialSpec, REPS, SIZES_MM};
use crate::stats::{mean_sigma, one_way_anova, AnovaResult};
use crate::texture::Texture;
use crate::traj::PoseSample;

fn check_pair(pred: &[PoseSample], truth: &[PoseSample]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::Empty);
    }
    for (index, (p, t)) in pred.iter().zip(truth).enumerate() {
        if p.t_ms != t.t_ms {
            return Err(Error::TimestampMismatch {
                index,
                left: p.t_ms,
                right: t.t_ms,
            });
        }
    }
    Ok(())
}

/// Translates `pred` so its first position equals the first truth position.
pub fn align(pred: &[PoseSample], truth: &[PoseSample]) -> Result<Vec<PoseSample>> {
    check_pair(pred, truth)?;
    let shift = truth[0].position - pred[0].position;
    Ok(pred
        .iter()
        .map(|p| PoseSample {
            position: p.position + shift,
            ..*p
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean: f64,
    /// Population standard deviation.
    pub sigma: f64,
    pub series: Vec<f64>,
}

impl ErrorStats {
    fn from_series(series: Vec<f64>) -> Self {
        let (mean, sigma) = mean_sigma(&series);
        Self {
            mean,
            sigma,
            series,
        }
    }
}

/// Per-sample Euclidean distance, mm.
pub fn position_error(pred: &[PoseSample], truth: &[PoseSample]) -> Result<ErrorStats> {
    check_pair(pred, truth)?;
    Ok(ErrorStats::from_series(
        pred.iter()
            .zip(truth)
            .map(|(p, t)| (p.position - t.position).norm())
            .collect(),
    ))
}

/// Per-sample angle between forward (body +X) axes, degrees.
pub fn orientation_error(pred: &[PoseSample], truth: &[PoseSample]) -> Result<ErrorStats> {
    check_pair(pred, truth)?;
    let series = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| angle_between(p.orientation.x_axis(), t.orientation.x_axis()))
        .collect::<Result<Vec<_>>>()?;
    Ok(ErrorStats::from_series(series))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub mean_pos_err_mm: f64,
    pub pos_sigma: f64,
    pub mean_ori_err_deg: f64,
    pub ori_sigma: f64,
    pub n: u64,
}

impl TrialMetrics {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain struct serializes")
    }
}

/// Aligns `pred` to `truth` and measures both error metrics.
pub fn evaluate(pred: &[PoseSample], truth: &[PoseSample]) -> Result<TrialMetrics> {
    let aligned = align(pred, truth)?;
    let p = position_error(&aligned, truth)?;
    let o = orientation_error(&aligned, truth)?;
    Ok(TrialMetrics {
        mean_pos_err_mm: p.mean,
        pos_sigma: p.sigma,
        mean_ori_err_deg: o.mean,
        ori_sigma: o.sigma,
        n: truth.len() as u64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub spec: TrialSpec,
    pub metrics: TrialMetrics,
}

/// Sample-weighted statistics over a set of trials.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CellStats {
    pub trials: u64,
    pub samples: u64,
    pub mean_pos_err_mm: f64,
    pub pos_sigma: f64,
    pub mean_ori_err_deg: f64,
    pub ori_sigma: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Pool {
    trials: u64,
    n: f64,
    pos_sum: f64,
    pos_sq: f64,
    ori_sum: f64,
    ori_sq: f64,
}

impl Pool {
    fn add(&mut self, m: &TrialMetrics) {
        let n = m.n as f64;
        self.trials += 1;
        self.n += n;
        self.pos_sum += n * m.mean_pos_err_mm;
        self.pos_sq += n * (m.pos_sigma.powi(2) + m.mean_pos_err_mm.powi(2));
        self.ori_sum += n * m.mean_ori_err_deg;
        self.ori_sq += n * (m.ori_sigma.powi(2) + m.mean_ori_err_deg.powi(2));
    }

    fn stats(&self) -> CellStats {
        if self.n == 0.0 {
            return CellStats::default();
        }
        let pm = self.pos_sum / self.n;
        let om = self.ori_sum / self.n;
        CellStats {
            trials: self.trials,
            samples: self.n as u64,
            mean_pos_err_mm: pm,
            pos_sigma: (self.pos_sq / self.n - pm * pm).max(0.0).sqrt(),
            mean_ori_err_deg: om,
            ori_sigma: (self.ori_sq / self.n - om * om).max(0.0).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnovaSummary {
    #[serde(rename = "F")]
    pub f: f64,
    pub df: [u64; 2],
    pub p: f64,
}

impl From<AnovaResult> for AnovaSummary {
    fn from(a: AnovaResult) -> Self {
        Self {
            f: a.f,
            df: [a.df_between, a.df_within],
            p: a.p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub trials: u64,
    pub by_size: BTreeMap<String, CellStats>,
    pub by_texture: BTreeMap<String, CellStats>,
    pub by_shape: BTreeMap<String, CellStats>,
    pub grand: CellStats,
    /// Across textures, on per-trial mean position errors.
    pub anova: AnovaSummary,
}

impl CampaignSummary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain struct serializes")
    }

    /// Per-size statistics in ascending size order.
    pub fn sizes_in_order(&self) -> Vec<(u32, CellStats)> {
        SIZES_MM
            .iter()
            .filter_map(|s| self.by_size.get(&s.to_string()).map(|c| (*s, *c)))
            .collect()
    }
}

type CellKey = (Texture, u32, Shape, u32);

fn key(s: &TrialSpec) -> CellKey {
    (s.texture, s.size_mm, s.shape, s.rep)
}

/// Aggregates a complete texture x size x shape x repetition grid. The
/// reduction sorts trials first, so the output does not depend on the order
/// results arrive in.
pub fn summarize_campaign(results: &[TrialResult]) -> Result<CampaignSummary> {
    let mut sorted: Vec<&TrialResult> = results.iter().collect();
    sorted.sort_by_key(|r| key(&r.spec));
    for w in sorted.windows(2) {
        if key(&w[0].spec) == key(&w[1].spec) {
            return Err(Error::config("campaign", format!("duplicate trial {}", w[0].spec.name())));
        }
    }
    if let Some(r) = sorted.iter().find(|r| !Shape::GRID.contains(&r.spec.shape)) {
        return Err(Error::config("campaign", format!("trial {} is not part of the grid", r.spec.name())));
    }
    let mut missing = Vec::new();
    for texture in Texture::ALL {
        for size in SIZES_MM {
            for shape in Shape::GRID {
                for rep in 1..=REPS {
                    let k = (texture, size, shape, rep);
                    if sorted.binary_search_by_key(&k, |r| key(&r.spec)).is_err() {
                        missing.push(TrialSpec::new(texture, size, shape, rep, 0.0, 0).name());
                    }
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingCells(missing));
    }

    let mut by_size: BTreeMap<String, Pool> = BTreeMap::new();
    let mut by_texture: BTreeMap<String, Pool> = BTreeMap::new();
    let mut by_shape: BTreeMap<String, Pool> = BTreeMap::new();
    let mut grand = Pool::default();
    let mut groups: Vec<Vec<f64>> = vec![Vec::new(); Texture::ALL.len()];
    for r in &sorted {
        let m = &r.metrics;
        by_size.entry(r.spec.size_mm.to_string()).or_default().add(m);
        by_texture.entry(r.spec.texture.to_string()).or_default().add(m);
        by_shape.entry(r.spec.shape.to_string()).or_default().add(m);
        grand.add(m);
        let g = Texture::ALL
            .iter()
            .position(|t| *t == r.spec.texture)
            .expect("texture listed");
        groups[g].push(m.mean_pos_err_mm);
    }
    let finish = |m: BTreeMap<String, Pool>| m.into_iter().map(|(k, p)| (k, p.stats())).collect();
    Ok(CampaignSummary {
        trials: sorted.len() as u64,
        by_size: finish(by_size),
        by_texture: finish(by_texture),
        by_shape: finish(by_shape),
        grand: grand.stats(),
        anova: one_way_anova(&groups)?.into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{UnitQuat, Vec3};
    use crate::sim::campaign_specs;

    fn line(n: u32) -> Vec<PoseSample> {
        (0..n)
            .map(|k| PoseSample {
                t_ms: k * 20,
                position: Vec3::new(f64::from(k), 0.5 * f64::from(k), 0.0),
                orientation: UnitQuat::IDENTITY,
            })
            .collect()
    }

    #[test]
    fn align_removes_translation_only() {
        let truth = line(10);
        let shifted: Vec<_> = truth
            .iter()
            .map(|p| PoseSample {
                position: p.position + Vec3::X,
                ..*p
            })
            .collect();
        assert_eq!(align(&shifted, &truth).unwrap(), truth);
        assert_eq!(align(&truth, &truth).unwrap(), truth);

        let mut drift = truth.clone();
        for (k, p) in drift.iter_mut().enumerate().skip(1) {
            p.position.x += 0.1 * k as f64;
        }
        let a = align(&drift, &truth).unwrap();
        assert_eq!(a, drift);
    }

    #[test]
    fn offset_after_first_sample() {
        let truth = line(8);
        let mut pred = truth.clone();
        for p in pred.iter_mut().skip(1) {
            p.position.x += 1.0;
        }
        let e = position_error(&align(&pred, &truth).unwrap(), &truth).unwrap();
        assert!((e.mean - 7.0 / 8.0).abs() < 1e-12);
        assert_eq!(e.series[0], 0.0);
    }

    #[test]
    fn orientation_offset() {
        let truth = line(5);
        let yawed = UnitQuat::from_axis_angle(Vec3::Z, 90.0).unwrap();
        let pred: Vec<_> = truth
            .iter()
            .map(|p| PoseSample {
                orientation: yawed,
                ..*p
            })
            .collect();
        let e = orientation_error(&pred, &truth).unwrap();
        assert!((e.mean - 90.0).abs() < 1e-9 && e.sigma < 1e-9);
        let z = evaluate(&truth, &truth).unwrap();
        assert_eq!((z.mean_pos_err_mm, z.mean_ori_err_deg, z.n), (0.0, 0.0, 5));
    }

    #[test]
    fn mismatches_are_errors() {
        let truth = line(5);
        assert!(matches!(
            align(&truth[..4], &truth),
            Err(Error::LengthMismatch { left: 4, right: 5 })
        ));
        let mut late = truth.clone();
        late[3].t_ms += 1;
        assert!(matches!(
            position_error(&late, &truth),
            Err(Error::TimestampMismatch { index: 3, .. })
        ));
        assert_eq!(align(&[], &[]), Err(Error::Empty));
    }

    fn fake_results() -> Vec<TrialResult> {
        campaign_specs(1)
            .into_iter()
            .enumerate()
            .map(|(i, spec)| TrialResult {
                spec,
                metrics: TrialMetrics {
                    mean_pos_err_mm: f64::from(spec.size_mm) / 10.0 + (i % 7) as f64 * 0.01,
                    pos_sigma: 0.1,
                    mean_ori_err_deg: 1.0 + (i % 3) as f64,
                    ori_sigma: 0.2,
                    n: 100 + (i % 11) as u64,
                },
            })
            .collect()
    }

    #[test]
    fn summary_weighting_and_order_independence() {
        let results = fake_results();
        let s = summarize_campaign(&results).unwrap();
        let n: f64 = results.iter().map(|r| r.metrics.n as f64).sum();
        let w: f64 = results
            .iter()
            .map(|r| r.metrics.n as f64 * r.metrics.mean_pos_err_mm)
            .sum::<f64>()
            / n;
        assert!((s.grand.mean_pos_err_mm - w).abs() < 1e-9);
        assert_eq!(s.trials, 360);
        assert_eq!(s.anova.df, [2, 357]);

        let mut rev = results.clone();
        rev.reverse();
        assert_eq!(summarize_campaign(&rev).unwrap(), s);
    }

    #[test]
    fn missing_cells_listed() {
        let mut results = fake_results();
        results.retain(|r| !(r.spec.texture == Texture::Wood && r.spec.size_mm == 21 && r.spec.shape == Shape::Diag));
        match summarize_campaign(&results) {
            Err(Error::MissingCells(cells)) => {
                assert_eq!(cells.len(), 5);
                assert!(cells.contains(&"wood_21_diag_r3".to_string()));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn summary_json_fields() {
        let s = summarize_campaign(&fake_results()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s.to_json()).unwrap();
        assert!(v["anova"]["F"].is_number());
        assert_eq!(v["anova"]["df"][0], 2);
        assert!(v["by_size"]["84"]["mean_pos_err_mm"].is_number());
        assert!(v["by_texture"]["jeans"].is_object());
        assert!(v["by_shape"]["circle"].is_object());
    }
}
