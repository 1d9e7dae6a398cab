#![no_main]

use libfuzzer_sys::fuzz_target;
use tuav_cbf::config::{config_to_toml, parse_config};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = parse_config(text) {
        // Anything accepted must survive a round trip unchanged.
        let again = parse_config(&config_to_toml(&cfg)).expect("serialised config reparses");
        assert_eq!(again, cfg);
    }
});
