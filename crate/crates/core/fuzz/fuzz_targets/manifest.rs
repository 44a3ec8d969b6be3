#![no_main]
use libfuzzer_sys::fuzz_target;
use liquidhike::dataset::Manifest;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = Manifest::parse(data) {
        assert_eq!(Manifest::parse(m.to_json().as_bytes()).expect("round trip"), m);
    }
});
