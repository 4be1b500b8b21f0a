#![no_main]

use goursat_frames::exprdsl::parse;
use goursat_frames::jets::JetScalar;
use libfuzzer_sys::fuzz_target;

const VARS: [&str; 4] = ["x", "y", "z", "t"];

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(e) = parse(text, &VARS) else { return };
    let printed = e.to_string();
    let back = parse(&printed, &VARS).expect("printed expression re-parses");
    assert_eq!(back, e, "{text:?} printed as {printed:?}");
    let p = [0.3, -0.7, 1.1, 0.5];
    let _ = e.eval_f64(&p);
    if let Ok(xs) = JetScalar::seed_all(&p, 2) {
        let _ = e.eval_jet(&xs);
    }
});
