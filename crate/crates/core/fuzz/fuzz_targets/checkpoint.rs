#![no_main]
use libfuzzer_sys::fuzz_target;
use liquidhike::nn::checkpoint::{load_checkpoint, save_checkpoint};

fuzz_target!(|data: &[u8]| {
    if let Ok(ck) = load_checkpoint(data) {
        // anything accepted must survive a save/load cycle
        let bytes = save_checkpoint(&ck.model, &ck.meta).expect("re-encode");
        let again = load_checkpoint(&bytes).expect("reload");
        assert_eq!(again.model.params, ck.model.params);
    }
});
