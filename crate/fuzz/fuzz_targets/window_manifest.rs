#![no_main]
use libfuzzer_sys::fuzz_target;
use sgmus::sampling::WindowManifest;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = WindowManifest::from_json(text) {
        let windows = m.windows().expect("validated manifest yields windows");
        assert_eq!(windows.len(), m.windows.len());
        let again = WindowManifest::from_json(&m.to_json().unwrap()).expect("round trip");
        assert_eq!(again, m);
    }
});
