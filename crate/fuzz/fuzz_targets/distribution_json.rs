#![no_main]

use goursat_frames::distribution::{Distribution, EvalContext};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(d) = Distribution::from_json(text) else {
        return;
    };
    if let Some(doc) = d.to_doc() {
        let json = serde_json::to_string(&doc).expect("document serialises");
        Distribution::from_json(&json).expect("exported document re-imports");
    }
    if d.dim() <= 16 {
        let mut ctx = EvalContext::new(&d.basepoint);
        let _ = d.eval_generators(&mut ctx, 1);
    }
});
