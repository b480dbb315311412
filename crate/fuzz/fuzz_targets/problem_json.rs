#![no_main]

use libfuzzer_sys::fuzz_target;
use saddle_es::SaddleProblem;

fuzz_target!(|data: &[u8]| {
    let Ok(p) = serde_json::from_slice::<SaddleProblem>(data) else {
        return;
    };
    // Accepted problems are valid saddles and survive a round trip.
    let b = p.split();
    assert!(b >= 1 && b < p.dim());
    let text = serde_json::to_string(&p).unwrap();
    assert_eq!(serde_json::from_str::<SaddleProblem>(&text).unwrap(), p);
    let ones = vec![1.0; p.dim()];
    let _ = p.classify(&ones, 0.0);
});
