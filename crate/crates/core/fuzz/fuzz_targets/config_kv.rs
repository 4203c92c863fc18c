#![no_main]
use libfuzzer_sys::fuzz_target;
use touch3d::config::KvMap;
use touch3d::filter::FilterConfig;
use touch3d::gestures::GestureProfiles;
use touch3d::pipeline::ReplayConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = FilterConfig::from_kv_text(text);
    let _ = GestureProfiles::from_kv_text(text);
    if let Ok(kv) = KvMap::parse(text) {
        let _ = ReplayConfig::default().apply_sections(&kv, Some("jeans"));
    }
});
