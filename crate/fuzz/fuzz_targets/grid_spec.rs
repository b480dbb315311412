#![no_main]

use libfuzzer_sys::fuzz_target;
use saddle_es::grid::{GridSpec, Scale};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    for scale in [Scale::Linear, Scale::Log] {
        let Ok(g) = GridSpec::parse(text, scale) else {
            continue;
        };
        assert_eq!(GridSpec::parse(&g.to_string(), Scale::Linear).unwrap(), g);
        if g.len() <= 10_000 {
            let v = g.values();
            assert_eq!(v.len(), g.len());
            assert!(v.iter().all(|x| x.is_finite()));
        }
    }
});
