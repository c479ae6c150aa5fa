#![no_main]
use libfuzzer_sys::fuzz_target;
use sgmus_cli::manifest::StageManifest;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = StageManifest::from_json(text) {
        let again = StageManifest::from_json(&m.to_json()).expect("round trip");
        assert_eq!(again, m);
    }
});
