#![no_main]
use libfuzzer_sys::fuzz_target;

use evibound::ledger::{ledger_to_string, parse_ledger};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(entries) = parse_ledger(text) {
            let canonical = ledger_to_string(&entries);
            let again = parse_ledger(&canonical).expect("canonical ledger reparses");
            assert_eq!(ledger_to_string(&again), canonical);
        }
    }
});
