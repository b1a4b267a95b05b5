//! Importing a consumer's arm without suspending it changes evaluation order.

mod common;

#[test]
fn naive_rewrite_is_caught() {
    common::criterion_7().unwrap();
}
