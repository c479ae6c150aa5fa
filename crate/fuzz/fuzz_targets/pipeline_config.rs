#![no_main]
use libfuzzer_sys::fuzz_target;
use sgmus_cli::PipelineConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    // Trailing lines are read as `--set` overrides.
    let mut lines = text.splitn(2, "\n--\n");
    let body = lines.next().unwrap_or_default();
    let overrides: Vec<String> = lines.next().map(|o| o.lines().map(str::to_owned).collect()).unwrap_or_default();
    if let Ok(cfg) = PipelineConfig::from_json_with_overrides(body, &overrides) {
        let again = PipelineConfig::from_json_with_overrides(&cfg.canonical_json(), &[]).expect("canonical config reloads");
        assert_eq!(again.digest(), cfg.digest());
    }
});
