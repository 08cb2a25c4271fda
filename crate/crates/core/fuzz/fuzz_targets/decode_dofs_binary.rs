#![no_main]

use hermite_fem::fespace::io::{decode_dofs_binary, encode_dofs_binary};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(v) = decode_dofs_binary(data) {
        assert_eq!(encode_dofs_binary(&v), data);
    }
});
