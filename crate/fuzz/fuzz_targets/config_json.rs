#![no_main]

use libfuzzer_sys::fuzz_target;
use saddle_es_cli::Settings;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = Settings::from_json(text);
    }
});
