#![no_main]
use libfuzzer_sys::fuzz_target;
use touch3d::eval::evaluate;
use touch3d::traj::{read_csv, write_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(samples) = read_csv(text) {
        let again = read_csv(&write_csv(&samples)).expect("own output parses");
        assert_eq!(again.len(), samples.len());
        let _ = evaluate(&samples, &samples);
    }
});
