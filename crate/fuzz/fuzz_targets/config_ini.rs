#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(cfg) = semirobin::config::parse_config(s) {
            // a resolved config must survive its own serialization
            let again = semirobin::config::parse_config(&cfg.to_ini()).expect("canonical text parses");
            assert_eq!(cfg, again);
        }
    }
});
