#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = liquidhike::dataset::parse_labels_csv(data);
});
