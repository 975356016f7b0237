#![no_main]

use libfuzzer_sys::fuzz_target;
use ratemaking::bonusmalus::BonusMalusTable;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(table) = BonusMalusTable::from_json(text) else {
        return;
    };
    for step in 1..=table.steps {
        for claims in 0..4 {
            let next = table.next_step(step, claims).expect("validated table");
            assert!((1..=table.steps).contains(&next));
        }
    }
    if table.steps > 32 {
        return;
    }
    if let Ok(pi) = table.stationary_distribution(0.1) {
        assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
});
