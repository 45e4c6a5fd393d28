#![no_main]

use effstab::flow::Trajectory;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = Trajectory::from_bytes(data) {
        let bytes = t.to_bytes();
        let back = Trajectory::from_bytes(&bytes).expect("serialized trajectory parses");
        assert_eq!(back.to_bytes(), bytes);
    }
});
