#![allow(dead_code)]

use std::path::PathBuf;

use ocsis_core::dsl::{parse_sources, read_sources, set_files, ProcedureSet};
use ocsis_core::engine::{PerfConfig, SessionConfig};
use ocsis_core::perf::load_correction_table;
use ocsis_core::scenario::{load_scenario, Scenario};

pub const SCENARIOS: [&str; 4] = ["initial_approach", "final_approach", "flaps_locked", "fuel_leak"];

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn fixture_set() -> ProcedureSet {
    let sources = read_sources(&set_files(&fixtures().join("procedures")).unwrap()).unwrap();
    parse_sources(&sources).expect("fixture set parses")
}

pub fn fixture_config() -> SessionConfig {
    let text = std::fs::read_to_string(fixtures().join("procedures/corrections.ocsc")).unwrap();
    SessionConfig {
        perf: Some(PerfConfig {
            vref: 130.0,
            reference_landing_distance: 1500.0,
            corrections: load_correction_table(&text).unwrap(),
        }),
    }
}

pub fn scenario(name: &str, set: &ProcedureSet) -> Scenario {
    let text = std::fs::read_to_string(fixtures().join(format!("scenarios/{name}.ocss"))).unwrap();
    load_scenario(&text, &set.registry).unwrap()
}

pub fn golden(name: &str) -> String {
    std::fs::read_to_string(fixtures().join(format!("golden/{name}.trace"))).unwrap()
}
