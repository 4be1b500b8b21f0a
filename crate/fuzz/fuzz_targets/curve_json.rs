#![no_main]

use goursat_frames::invariants::{curve_jet, CurveSpec};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(c) = CurveSpec::from_json(text) else {
        return;
    };
    let json = serde_json::to_string(&c.to_doc()).expect("document serialises");
    CurveSpec::from_json(&json).expect("exported document re-imports");
    for t in c.sample_params(3) {
        let _ = c.at(t);
        let _ = curve_jet(&c, t, 4);
    }
});
