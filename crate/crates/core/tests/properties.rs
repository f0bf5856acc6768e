//! Randomized invariants, 1000 cases per property, grouped by module.

mod common;

fn run(module: &str) {
    if let Err(e) = common::suite(module) {
        panic!("{module} property failed: {e}");
    }
}

#[test]
fn linalg() {
    run("linalg");
}

#[test]
fn models() {
    run("models");
}

#[test]
fn kalman() {
    run("kalman");
}

#[test]
fn etkf() {
    run("etkf");
}

#[test]
fn covest() {
    run("covest");
}

#[test]
fn letkf() {
    run("letkf");
}

#[test]
fn metrics() {
    run("metrics");
}

#[test]
fn harness() {
    run("harness");
}
