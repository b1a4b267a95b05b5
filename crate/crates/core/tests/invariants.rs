//! Structural invariants of each stage, over the corpus and generated
//! programs.

mod common;

use common::*;
use lumberjack::gen::{gen_program, MAX_SIZE};
use lumberjack::parse;
use proptest::prelude::*;

#[test]
fn corpus_invariants() {
    for e in corpus() {
        let p = parse(&e.source).unwrap();
        self_contained(&p).unwrap_or_else(|m| panic!("{}: {m}", e.name));
        thunk_round_trip(&p).unwrap_or_else(|m| panic!("{}: {m}", e.name));
        identity_elaboration(&p).unwrap_or_else(|m| panic!("{}: {m}", e.name));
    }
}

#[test]
fn corpus_work_factor() {
    for e in corpus() {
        work_factor(&e).unwrap();
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn constraints_are_self_contained(seed in any::<u64>()) {
        prop_assert_eq!(self_contained(&gen_program(seed, MAX_SIZE)), Ok(()));
    }

    #[test]
    fn thunking_round_trips(seed in any::<u64>()) {
        prop_assert_eq!(thunk_round_trip(&gen_program(seed, MAX_SIZE)), Ok(()));
    }

    #[test]
    fn all_top_elaborates_to_itself(seed in any::<u64>()) {
        prop_assert_eq!(identity_elaboration(&gen_program(seed, MAX_SIZE)), Ok(()));
    }

    #[test]
    fn optimization_is_sound(seed in any::<u64>()) {
        prop_assert_eq!(sweep(seed..seed.saturating_add(1)), Ok(()));
    }
}
