//! Constructor and closure counts before and after optimization.

mod common;

use common::*;
use lumberjack::pipeline::{run, PipelineConfig};
use lumberjack::parse;

#[test]
fn enumerate_sum_hand_count() {
    let (p, out) = optimize(ENUM_SUM).unwrap();
    // [3, 2, 1] is three cells and a nil
    assert_eq!(counters(&p, "3").unwrap().ctor_allocs, 4);
    assert_eq!(counters(&p, "1000").unwrap().ctor_allocs, 1001);
    let small = counters(&out.optimized, "10").unwrap();
    let large = counters(&out.optimized, "1000").unwrap();
    assert_eq!((small.ctor_allocs, large.ctor_allocs), (0, 0));
    assert!(large.closure_allocs <= 3, "{large:?}");
    assert_eq!(small.closure_allocs, large.closure_allocs);
}

#[test]
fn enumerate_to_zero_builds_one_more_cell() {
    let (p, out) = optimize(&entry("enumerate_sum").source).unwrap();
    assert_eq!(counters(&p, "1000").unwrap().ctor_allocs, 1002);
    let c = counters(&out.optimized, "1000").unwrap();
    assert_eq!(c.ctor_allocs, 0);
    assert!(c.closure_allocs <= 3, "{c:?}");
}

#[test]
fn map_map_builds_only_the_output() {
    let (p, out) = optimize(&entry("map_map").source).unwrap();
    for n in [0, 1, 10, 1000] {
        let input = list_of(n);
        let a = counters(&p, &input).unwrap();
        let b = counters(&out.optimized, &input).unwrap();
        assert_eq!(a.ctor_allocs, 2 * (n as u64 + 1), "n={n}");
        assert_eq!(b.ctor_allocs, n as u64 + 1, "n={n}");
    }
}

/// Simplification never adds constructors, and removes the closures that
/// elaboration introduced on the fused examples.
#[test]
fn simplification_is_monotone() {
    for (src, input) in [(ENUM_SUM.to_string(), "100".to_string()), (entry("map_map").source, list_of(100))] {
        let p = parse(&src).unwrap();
        let out = run(&p, &PipelineConfig::default()).unwrap();
        let e = counters(&out.elaborated, &input).unwrap();
        let s = counters(&out.optimized, &input).unwrap();
        assert!(s.ctor_allocs <= e.ctor_allocs, "{e:?} {s:?}");
        assert!(s.closure_allocs < e.closure_allocs, "{e:?} {s:?}");
    }
}
