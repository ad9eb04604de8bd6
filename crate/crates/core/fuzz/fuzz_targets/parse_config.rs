#![no_main]

use heatbound::run::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = RunConfig::from_json(text) {
        let _ = config.validate();
        let json = serde_json::to_string(&config).expect("config serializes");
        assert_eq!(RunConfig::from_json(&json).expect("round trip"), config);
    }
});
