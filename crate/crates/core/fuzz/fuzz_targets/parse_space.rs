#![no_main]

use heatbound::ModelSpace;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(space) = text.parse::<ModelSpace>() {
        // Display must produce something that parses back to the same model.
        let again: ModelSpace = space.to_string().parse().expect("display output parses");
        assert_eq!(again, space);
    }
});
