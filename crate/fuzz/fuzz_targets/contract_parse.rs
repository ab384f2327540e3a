#![no_main]
use libfuzzer_sys::fuzz_target;

use evibound::contract::{check_schema, parse_contract, serialize_contract};

fuzz_target!(|data: &[u8]| {
    if let Ok(contract) = parse_contract(data) {
        // Anything that parses must survive schema checking and re-serialize
        // to a document that parses back to the same contract.
        let _ = check_schema(&contract);
        let text = serialize_contract(&contract);
        let again = parse_contract(text.as_bytes()).expect("serialized contract reparses");
        assert_eq!(serialize_contract(&again), text);
    }
});
