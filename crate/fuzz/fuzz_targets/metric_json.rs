#![no_main]

use goursat_frames::cartan::MetricSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(m) = MetricSpec::from_json(text) else {
        return;
    };
    let doc = m.to_doc();
    let json = serde_json::to_string(&doc).expect("document serialises");
    MetricSpec::from_json(&json).expect("exported document re-imports");
    if let Some(p) = &doc.basepoint {
        let _ = m.at(p);
    }
});
