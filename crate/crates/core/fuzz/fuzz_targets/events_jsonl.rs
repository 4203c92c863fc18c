#![no_main]
use libfuzzer_sys::fuzz_target;
use touch3d::gestures::{events_from_jsonl, events_to_jsonl};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(events) = events_from_jsonl(text) {
        assert_eq!(events_from_jsonl(&events_to_jsonl(&events)), Ok(events));
    }
});
