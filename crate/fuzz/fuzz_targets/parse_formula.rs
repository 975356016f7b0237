#![no_main]

use libfuzzer_sys::fuzz_target;
use ratemaking::design::{parse_formula, ModelFormula};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(formula) = parse_formula(text) {
        // anything accepted must print back to an equivalent formula
        let printed = formula.to_string();
        let again: ModelFormula = printed.parse().expect("printed formula parses");
        assert_eq!(again, formula);
    }
});
