#![allow(dead_code)]

pub mod oracle;
pub mod rq1;

use std::path::PathBuf;

use cvn_core::cir::{parse_cir, CirArtifact};

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn text(name: &str) -> String {
    let p = fixture_dir().join(format!("{name}.cir"));
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

pub fn load(name: &str) -> CirArtifact {
    parse_cir(&text(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// The nine pattern fixtures in table order.
pub const PATTERNS: [&str; 9] = [
    "pattern1", "pattern2", "pattern3", "pattern4", "pattern5", "pattern6", "pattern7", "pattern8", "pattern9",
];

pub const REGRESSIONS: [&str; 2] = ["pattern3_regression", "pattern6_regression"];

pub const ALL: [&str; 14] = [
    "fig2",
    "pattern1",
    "pattern1_fixed",
    "pattern2",
    "pattern2_fixed",
    "pattern3",
    "pattern3_regression",
    "pattern4",
    "pattern5",
    "pattern6",
    "pattern6_regression",
    "pattern7",
    "pattern8",
    "pattern9",
];

/// Fixtures with concrete valuations, small enough for the interpreter.
pub const ORACLE_FIXTURES: [&str; 13] = [
    "fig2",
    "pattern1",
    "pattern1_fixed",
    "pattern2",
    "pattern2_fixed",
    "pattern3",
    "pattern3_regression",
    "pattern4",
    "pattern5",
    "pattern6",
    "pattern6_regression",
    "pattern7",
    "pattern8",
];

