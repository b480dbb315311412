#![no_main]

use libfuzzer_sys::fuzz_target;
use saddle_es::grid::parse_f64_list;
use saddle_es_cli::NumList;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(v) = parse_f64_list(text) {
        assert!(v.iter().all(|x| x.is_finite()));
        let list: NumList = text.parse().unwrap();
        let again: NumList = list.to_string().parse().unwrap();
        assert_eq!(again, list);
    }
});
