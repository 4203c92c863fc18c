use proptest::prelude::*;

use touch3d::eval::{evaluate, position_error, summarize_campaign, TrialMetrics, TrialResult};
use touch3d::geom::{from_euler, to_euler, EulerAngles, PlaneBasis, UnitQuat, Vec3};
use touch3d::gestures::{detect, GestureConfig, GestureDetector};
use touch3d::interaction::{
    derive_plane, fingertip_compensation, raycast_select, MountMode, Scene, SceneObject, Shape as Solid, Translator,
};
use touch3d::sim::{campaign_specs, random_gesture_trace};
use touch3d::stats::{f_survival, one_way_anova};
use touch3d::traj::{read_csv, write_csv, PoseSample};
use touch3d::wire::{decode_stream, decode_trace, encode_trace, DecoderState, ScaleConfig, SensorFrame};

fn quat() -> impl Strategy<Value = UnitQuat> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
        .prop_filter("non-degenerate", |(w, x, y, z)| w * w + x * x + y * y + z * z > 1e-3)
        .prop_map(|(w, x, y, z)| UnitQuat::from_components(w, x, y, z).unwrap())
}

fn vec3(r: f64) -> impl Strategy<Value = Vec3> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn frame() -> impl Strategy<Value = SensorFrame> {
    (
        any::<u32>(),
        any::<(i16, i16)>(),
        0u8..=169,
        any::<[i16; 3]>(),
        any::<[i16; 3]>(),
        any::<[i16; 3]>(),
    )
        .prop_map(|(t, (dx, dy), squal, a, g, m)| SensorFrame {
            timestamp_ms: t,
            dx,
            dy,
            squal,
            accel_raw: a,
            gyro_raw: g,
            mag_raw: m,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn quaternion_products_stay_unit(a in quat(), b in quat(), v in vec3(100.0)) {
        let q = a * b;
        prop_assert!((q.norm() - 1.0).abs() < 1e-12);
        prop_assert!((q.rotate_vector(v).norm() - v.norm()).abs() < 1e-9);
        prop_assert!(q.inverse().rotate_vector(q.rotate_vector(v)).sub_norm(v) < 1e-9);
    }

    #[test]
    fn euler_round_trip(yaw in -179.9..179.9f64, pitch in -89.0..89.0f64, roll in -179.9..179.9f64) {
        let e = to_euler(from_euler(EulerAngles::new(yaw, pitch, roll)));
        prop_assert!((e.yaw - yaw).abs() < 1e-7);
        prop_assert!((e.pitch - pitch).abs() < 1e-7);
        prop_assert!((e.roll - roll).abs() < 1e-7);
    }

    #[test]
    fn rotation_vector_round_trip(q in quat()) {
        prop_assert!(UnitQuat::from_rotation_vector(q.to_rotation_vector()).angle_to(q) < 1e-7);
    }

    #[test]
    fn plane_basis_is_orthonormal(q in quat()) {
        for mode in [MountMode::Fingertip, MountMode::Fingerpad, MountMode::Ring] {
            prop_assert!(derive_plane(q, mode).orthonormality_error() < 1e-12);
        }
        prop_assert_eq!(
            derive_plane(q, MountMode::Fingertip),
            derive_plane(q * fingertip_compensation(), MountMode::Fingerpad)
        );
    }

    #[test]
    fn wire_round_trip_under_arbitrary_chunking(
        frames in prop::collection::vec(frame(), 0..40),
        cuts in prop::collection::vec(any::<prop::sample::Index>(), 0..6),
    ) {
        let bytes = encode_trace(&frames).unwrap();
        let mut points: Vec<usize> = cuts.iter().map(|i| i.index(bytes.len() + 1)).collect();
        points.sort_unstable();
        let mut state = DecoderState::new();
        let mut got = Vec::new();
        let mut at = 0;
        for p in points.into_iter().chain([bytes.len()]) {
            got.extend(decode_stream(&bytes[at..p], &mut state).0);
            at = p;
        }
        prop_assert_eq!(state.finish().frames, frames.len() as u64);
        prop_assert_eq!(got, frames);
    }

    #[test]
    fn decoder_never_panics_and_only_emits_checked_frames(bytes in prop::collection::vec(any::<u8>(), 0..400)) {
        let (frames, diag) = decode_trace(&bytes);
        prop_assert_eq!(diag.frames, frames.len() as u64);
        prop_assert!(diag.bytes_skipped as usize + 34 * frames.len() <= bytes.len());
        for f in &frames {
            prop_assert!(f.squal <= 169);
        }
    }

    #[test]
    fn gesture_stream_split_invariance(seed in any::<u64>(), n in 1usize..200, cut in any::<prop::sample::Index>()) {
        let frames = random_gesture_trace(seed, n);
        let cfg = GestureConfig::default();
        let whole = detect(&frames, cfg).unwrap();
        let k = cut.index(frames.len() + 1);
        let mut a = GestureDetector::new(cfg).unwrap();
        let mut got = Vec::new();
        for f in &frames[..k] {
            got.extend(a.step(f).unwrap());
        }
        // hand the live detector over, as a streaming host would
        let mut b = a.clone();
        for f in &frames[k..] {
            got.extend(b.step(f).unwrap());
        }
        got.extend(b.finish());
        prop_assert_eq!(got, whole);
    }

    #[test]
    fn translation_is_path_additive(
        q in quat(),
        deltas in prop::collection::vec((-400i16..400, -400i16..400), 1..60),
    ) {
        let scale = ScaleConfig::default();
        let mut t = Translator::new(MountMode::Fingerpad, scale);
        t.step(q, 0, 0);
        let start = t.state().position;
        for &(dx, dy) in &deltas {
            t.step(q, dx, dy);
        }
        let (sx, sy) = deltas.iter().fold((0i32, 0i32), |(a, b), &(dx, dy)| (a + i32::from(dx), b + i32::from(dy)));
        let mut once = Translator::new(MountMode::Fingerpad, scale);
        once.step(q, 0, 0);
        let plane = PlaneBasis::from_quat(q, Vec3::ZERO);
        let k = scale.mm_per_count();
        let expect = plane.u * (f64::from(sx) * k) + plane.v * (f64::from(sy) * k);
        prop_assert!((t.state().position - start).sub_norm(expect) < 1e-9);
        prop_assert!((t.state().position - start).dot(plane.n).abs() < 1e-9);
    }

    #[test]
    fn raycast_picks_nearest_entry(
        origin in vec3(30.0),
        q in quat(),
        centers in prop::collection::vec((vec3(40.0), 1.0..10.0f64), 1..5),
    ) {
        let scene = Scene::new(
            centers
                .iter()
                .enumerate()
                .map(|(i, (c, r))| SceneObject { id: i.to_string(), shape: Solid::Sphere { center: *c, radius: *r } })
                .collect(),
        )
        .unwrap();
        let dir = q.x_axis();
        let best = scene
            .objects
            .iter()
            .filter_map(|o| o.shape.ray_hit(origin, dir).map(|t| (t, o.id.as_str())))
            .fold(None::<(f64, &str)>, |acc, h| match acc {
                Some(a) if a.0 <= h.0 => Some(a),
                _ => Some(h),
            });
        prop_assert_eq!(raycast_select(origin, q, &scene), best.map(|b| b.1));
        if let Some((t, id)) = best {
            let hit = origin + dir * t;
            let obj = scene.objects.iter().find(|o| o.id == id).unwrap();
            prop_assert!(obj.shape.sdf(hit).abs() < 1e-6 || t == 0.0);
        }
    }

    #[test]
    fn scene_json_round_trip(centers in prop::collection::vec((vec3(40.0), 0.5..10.0f64, any::<bool>()), 1..6)) {
        let scene = Scene::new(
            centers
                .iter()
                .enumerate()
                .map(|(i, (c, r, boxed))| SceneObject {
                    id: format!("obj{i}"),
                    shape: if *boxed {
                        Solid::Aabb { min: *c - Vec3::new(*r, *r, *r), max: *c + Vec3::new(*r, *r, *r) }
                    } else {
                        Solid::Sphere { center: *c, radius: *r }
                    },
                })
                .collect(),
        )
        .unwrap();
        prop_assert_eq!(Scene::from_json(&scene.to_json()).unwrap(), scene);
    }

    #[test]
    fn anova_shift_and_scale_invariant(
        groups in prop::collection::vec(prop::collection::vec(0.0..10.0f64, 2..12), 2..5),
        shift in -1000.0..1000.0f64,
        scale in 0.01..100.0f64,
    ) {
        let base = one_way_anova(&groups).unwrap();
        prop_assume!(base.f.is_finite() && base.f > 1e-6);
        let shifted: Vec<Vec<f64>> = groups.iter().map(|g| g.iter().map(|v| v + shift).collect()).collect();
        let scaled: Vec<Vec<f64>> = groups.iter().map(|g| g.iter().map(|v| v * scale).collect()).collect();
        let s = one_way_anova(&shifted).unwrap();
        let c = one_way_anova(&scaled).unwrap();
        prop_assert!((s.f - base.f).abs() <= 1e-9 * base.f.max(1.0) * (1.0 + shift.abs()));
        prop_assert!((c.f - base.f).abs() <= 1e-9 * base.f.max(1.0));
    }

    #[test]
    fn f_tail_decreases_in_f(d1 in 1u32..30, d2 in 1u32..400, a in 0.0..20.0f64, b in 0.0..20.0f64) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let (d1, d2) = (f64::from(d1), f64::from(d2));
        prop_assert!(f_survival(hi, d1, d2) <= f_survival(lo, d1, d2) + 1e-12);
        let p = f_survival(lo, d1, d2);
        prop_assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn position_error_is_symmetric(
        pts in prop::collection::vec((vec3(50.0), vec3(50.0)), 1..40),
    ) {
        let mk = |sel: fn(&(Vec3, Vec3)) -> Vec3| -> Vec<PoseSample> {
            pts.iter()
                .enumerate()
                .map(|(i, p)| PoseSample { t_ms: 20 * i as u32, position: sel(p), orientation: UnitQuat::IDENTITY })
                .collect()
        };
        let (a, b) = (mk(|p| p.0), mk(|p| p.1));
        let ab = position_error(&a, &b).unwrap();
        let ba = position_error(&b, &a).unwrap();
        prop_assert_eq!(ab.series, ba.series);
        let ea = evaluate(&a, &b).unwrap();
        let eb = evaluate(&b, &a).unwrap();
        prop_assert!((ea.mean_pos_err_mm - eb.mean_pos_err_mm).abs() < 1e-9);
    }

    #[test]
    fn trajectory_csv_round_trip(
        pts in prop::collection::vec((vec3(500.0), quat()), 0..30),
    ) {
        let s: Vec<PoseSample> = pts
            .iter()
            .enumerate()
            .map(|(i, (p, q))| PoseSample { t_ms: i as u32 * 20, position: *p, orientation: *q })
            .collect();
        let back = read_csv(&write_csv(&s)).unwrap();
        prop_assert_eq!(back.len(), s.len());
        for (x, y) in back.iter().zip(&s) {
            prop_assert_eq!(x.t_ms, y.t_ms);
            prop_assert!(x.position.sub_norm(y.position) < 1e-5);
            prop_assert!(x.orientation.angle_to(y.orientation) < 1e-5);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn grand_mean_is_sample_weighted(seed in any::<u64>(), vals in prop::collection::vec((0.0..3.0f64, 0.0..1.0f64, 1u64..400), 360)) {
        let results: Vec<TrialResult> = campaign_specs(seed)
            .into_iter()
            .zip(&vals)
            .map(|(spec, &(m, s, n))| TrialResult {
                spec,
                metrics: TrialMetrics { mean_pos_err_mm: m, pos_sigma: s, mean_ori_err_deg: 2.0 * m, ori_sigma: s, n },
            })
            .collect();
        let summary = summarize_campaign(&results).unwrap();
        let total: u64 = vals.iter().map(|v| v.2).sum();
        let weighted = vals.iter().map(|v| v.0 * v.2 as f64).sum::<f64>() / total as f64;
        prop_assert!((summary.grand.mean_pos_err_mm - weighted).abs() < 1e-9);
        let by_size = summary.sizes_in_order();
        let from_cells = by_size.iter().map(|(_, c)| c.mean_pos_err_mm * c.samples as f64).sum::<f64>() / total as f64;
        prop_assert!((from_cells - weighted).abs() < 1e-9);

        let mut shuffled = results.clone();
        shuffled.reverse();
        prop_assert_eq!(summarize_campaign(&shuffled).unwrap(), summary);
    }
}

trait SubNorm {
    fn sub_norm(self, other: Vec3) -> f64;
}

impl SubNorm for Vec3 {
    fn sub_norm(self, other: Vec3) -> f64 {
        (self - other).norm()
    }
}
