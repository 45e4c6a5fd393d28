#![no_main]

use effstab::FtSeries;
use libfuzzer_sys::fuzz_target;

// any accepted document re-serializes to a fixed point
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(f) = FtSeries::from_json(text) {
        let once = f.to_json();
        let back = FtSeries::from_json(&once).expect("serialized series parses");
        assert_eq!(back, f);
        assert_eq!(back.to_json(), once);
    }
});
