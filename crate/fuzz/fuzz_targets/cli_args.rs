#![no_main]

use clap::Parser;
use libfuzzer_sys::fuzz_target;
use saddle_es_cli::Cli;

// Argument vectors are NUL-separated; parsing only, no command is executed.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let argv = std::iter::once("saddle-es").chain(text.split('\0'));
    let _ = Cli::try_parse_from(argv);
});
