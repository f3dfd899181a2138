//! Exhaustive audit of the proposal kernel for small p.

mod common;

#[test]
fn reversible_and_connected_small_p() {
    for p in 1..=4 {
        if let Err(e) = common::audit_proposals(p) {
            panic!("{e}");
        }
    }
}
