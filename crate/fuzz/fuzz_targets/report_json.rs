#![no_main]

use libfuzzer_sys::fuzz_target;
use ratemaking::cli::report::ReportDocument;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(doc) = ReportDocument::from_json(text) {
        let first = doc.to_json();
        let again = ReportDocument::from_json(&first).expect("re-parse");
        assert_eq!(again.to_json(), first);
        let _ = doc.render_plain();
    }
});
