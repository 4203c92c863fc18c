#![no_main]
use libfuzzer_sys::fuzz_target;
use touch3d::geom::{UnitQuat, Vec3};
use touch3d::interaction::{raycast_select, Scene};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(scene) = Scene::from_json(text) {
        let _ = raycast_select(Vec3::ZERO, UnitQuat::IDENTITY, &scene);
        assert_eq!(Scene::from_json(&scene.to_json()).as_ref(), Ok(&scene));
    }
});
