#![no_main]

use hermite_fem::fespace::io::{parse_dofs_csv, write_dofs_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(v) = parse_dofs_csv(data) {
        let mut buf = Vec::new();
        write_dofs_csv(&mut buf, &v).unwrap();
        assert_eq!(parse_dofs_csv(&buf).unwrap(), v);
    }
});
