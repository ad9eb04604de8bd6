#![no_main]

use heatbound::run::RunReport;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(report) = RunReport::from_json(text) {
        let _ = report.exit_code();
        if let Ok(json) = report.to_json() {
            let again = RunReport::from_json(&json).expect("emitted report parses");
            assert_eq!(again.to_json().expect("reserializes"), json);
        }
    }
});
