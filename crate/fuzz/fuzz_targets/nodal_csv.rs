#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Some((&n, rest)) = data.split_first() {
        let _ = semirobin::io::read_nodal_csv(rest, n as usize % 64);
    }
});
