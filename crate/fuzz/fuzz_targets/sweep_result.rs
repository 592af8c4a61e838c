#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    eraser_qkd_fuzz::sweep_result(data);
});
