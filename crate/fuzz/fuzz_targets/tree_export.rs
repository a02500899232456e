#![no_main]

use growfrag::cellsystem::parse_tree_export;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(rows) = parse_tree_export(text) {
        for r in &rows {
            match &r.parent {
                Some(p) => assert_eq!(p.generation() + 1, r.label.generation()),
                None => assert_eq!(r.label.generation(), 0),
            }
        }
    }
});
