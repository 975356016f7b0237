#![no_main]

use libfuzzer_sys::fuzz_target;
use ratemaking::design::{load_portfolio, FactorSchema};

fuzz_target!(|data: &[u8]| {
    let Ok(schema) = FactorSchema::infer(data) else {
        return;
    };
    if let Ok(portfolio) = load_portfolio(data, &schema) {
        assert!(!portfolio.is_empty());
        for row in portfolio.rows() {
            assert!(row.exposure > 0.0 && row.exposure.is_finite());
            assert_eq!(row.levels.len(), schema.factors().len());
        }
    }
});
