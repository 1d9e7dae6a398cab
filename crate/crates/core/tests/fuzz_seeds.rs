//! Runs the fuzz target bodies over the checked-in corpus seeds.

use std::path::{Path, PathBuf};

use tuav_cbf::config::{config_to_toml, parse_config};
use tuav_cbf::manifest::parse_manifest;
use tuav_cbf::output::{infer_config, read_csv, write_csv};
use tuav_cbf::sim::{verify_log, ScenarioConfig, TrajectoryLog};

fn seeds(target: &str) -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fuzz/corpus").join(target);
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    v.sort();
    assert!(!v.is_empty(), "no seeds for {target}");
    v
}

#[test]
fn config_seeds_parse_and_round_trip() {
    for p in seeds("config_parse") {
        let cfg = parse_config(&std::fs::read_to_string(&p).unwrap()).unwrap();
        assert_eq!(parse_config(&config_to_toml(&cfg)).unwrap(), cfg, "{}", p.display());
    }
}

#[test]
fn manifest_seeds_parse() {
    for p in seeds("manifest_parse") {
        parse_manifest(&std::fs::read_to_string(&p).unwrap(), Path::new("/fuzz")).unwrap();
    }
}

#[test]
fn csv_seeds_reparse_losslessly() {
    for p in seeds("trajectory_csv") {
        let data = std::fs::read(&p).unwrap();
        let log = read_csv(&data[..], &ScenarioConfig::default()).unwrap();
        let cfg = infer_config(&log);
        let log = TrajectoryLog::new(log.records, &cfg);
        assert!(verify_log(&log, &cfg).safety_ok(), "{}", p.display());
        let mut buf = Vec::new();
        write_csv(&log, &mut buf).unwrap();
        assert_eq!(buf, data, "{}", p.display());
    }
}

#[test]
fn non_finite_radius_is_rejected_for_any_kind() {
    for text in [
        "[scenario]\nradius = nan\n",
        "[scenario]\nradius = inf\n",
        "[scenario]\ntype = \"linear_track\"\nradius = -1.0\n",
    ] {
        assert!(parse_config(text).is_err(), "{text}");
    }
}
