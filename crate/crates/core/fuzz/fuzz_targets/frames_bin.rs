#![no_main]
use libfuzzer_sys::fuzz_target;

// First three bytes pick the frame geometry; the rest is the file body.
fuzz_target!(|data: &[u8]| {
    if data.len() < 3 {
        return;
    }
    let (w, h, n) = (data[0] as usize, data[1] as usize, data[2] as usize);
    if let Ok(frames) = liquidhike::dataset::decode_frames(&data[3..], w, h, n) {
        assert_eq!(frames.len(), n);
    }
});
