#![no_main]
use libfuzzer_sys::fuzz_target;
use liquidhike::splat::{decode_splats, encode_splats};

fuzz_target!(|data: &[u8]| {
    if let Ok(g) = decode_splats(data) {
        let again = decode_splats(&encode_splats(&g)).expect("re-encoded file decodes");
        assert_eq!(again.len(), g.len());
    }
});
