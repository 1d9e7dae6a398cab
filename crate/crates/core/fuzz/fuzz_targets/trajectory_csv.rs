#![no_main]

use libfuzzer_sys::fuzz_target;
use tuav_cbf::output::{infer_config, read_csv, write_csv};
use tuav_cbf::sim::{verify_log, ScenarioConfig, TrajectoryLog};

fuzz_target!(|data: &[u8]| {
    let Ok(log) = read_csv(data, &ScenarioConfig::default()) else {
        return;
    };
    let cfg = infer_config(&log);
    let log = TrajectoryLog::new(log.records, &cfg);
    let _ = verify_log(&log, &cfg);

    // Rewriting a parsed log and reading it back is lossless.
    let mut buf = Vec::new();
    write_csv(&log, &mut buf).expect("in-memory write");
    let back = read_csv(&buf[..], &cfg).expect("own output parses");
    assert_eq!(back.records.len(), log.records.len());
});
