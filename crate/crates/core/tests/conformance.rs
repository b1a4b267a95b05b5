//! Solver and unifier behaviour on hand-built inputs.

mod common;

use common::*;
use lumberjack::gen::{gen_program, MAX_SIZE};
use lumberjack::pipeline::{run, PipelineConfig};
use proptest::prelude::*;

#[test]
fn cyclic_bounds_unify_to_a_loop() {
    cyclic_bisim().unwrap();
}

#[test]
fn unif_equations() {
    common::unif_equations().unwrap();
}

#[test]
fn corpus_solutions_are_ordered_and_merged() {
    corpus_solutions_valid().unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Bisimilarity is an equivalence on every strategy graph the pipeline
    /// builds.
    #[test]
    fn bisimilarity_is_an_equivalence(seed in 0u64..10_000, picks in prop::collection::vec(any::<prop::sample::Index>(), 3)) {
        let out = run(&gen_program(seed, MAX_SIZE), &PipelineConfig::default()).unwrap();
        let st = &out.strategies;
        let mut vars: Vec<_> = st.map.keys().copied().collect();
        vars.sort();
        prop_assume!(!vars.is_empty());
        let [a, b, c] = [0, 1, 2].map(|i| vars[picks[i].index(vars.len())]);
        prop_assert!(st.bisim(a, st, a));
        prop_assert_eq!(st.bisim(a, st, b), st.bisim(b, st, a));
        if st.bisim(a, st, b) && st.bisim(b, st, c) {
            prop_assert!(st.bisim(a, st, c));
        }
    }

    #[test]
    fn sweep_solutions_are_valid(seed in 0u64..100_000) {
        prop_assert_eq!(sweep(seed..seed + 1), Ok(()));
    }
}
