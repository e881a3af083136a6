//! Finite-difference checks of every head's loss with respect to its own
//! parameters.

mod common;

use common::grad::{check, components, setup};
use unimrp::Framework;

fn run(frameworks: &[Framework]) {
    let s = setup();
    for c in components().iter().filter(|c| frameworks.contains(&c.framework)) {
        if let Err(e) = check(&s, c) {
            panic!("{e}");
        }
    }
}

#[test]
fn sdp_heads() {
    run(&[Framework::Dm, Framework::Psd]);
}

#[test]
fn ucca_head() {
    run(&[Framework::Ucca]);
}

#[test]
fn amr_head() {
    run(&[Framework::Amr]);
}

#[test]
fn eds_anchor_head() {
    run(&[Framework::Eds]);
}
