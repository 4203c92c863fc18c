#![no_main]
use libfuzzer_sys::fuzz_target;
use touch3d::gestures::{detect, GestureConfig, GestureDetector};
use touch3d::pipeline::{replay, ReplayConfig};
use touch3d::wire::decode_trace;

fuzz_target!(|data: &[u8]| {
    let (frames, _) = decode_trace(data);
    let cfg = GestureConfig::default();
    let Ok(whole) = detect(&frames, cfg) else { return };

    // splitting the frame stream anywhere gives the same events
    let at = frames.len() / 2;
    let mut det = GestureDetector::new(cfg).unwrap();
    let mut events = Vec::new();
    for f in &frames[..at] {
        events.extend(det.step(f).unwrap());
    }
    let mut det = det.clone();
    for f in &frames[at..] {
        events.extend(det.step(f).unwrap());
    }
    events.extend(det.finish());
    assert_eq!(events, whole);

    let _ = replay(&frames, &ReplayConfig::default());
});
