//! Optimized corpus programs against their expected outputs.

mod common;

use common::*;
use lumberjack::corpus::check_entry;
use lumberjack::gen::gen_source;
use lumberjack::normal::golden_eq;
use lumberjack::pipeline::PipelineConfig;
use lumberjack::{parse, pretty, thunk};

#[test]
fn map_map() {
    golden("map_map").unwrap();
}

#[test]
fn option_producer_consumer() {
    golden("toy_option").unwrap();
}

#[test]
fn enumerate_sum() {
    golden("enumerate_sum").unwrap();
}

#[test]
fn partial_sum_of_squares() {
    golden("sumi_mapsqi").unwrap();
}

#[test]
fn chained_maps() {
    golden("chained_mapi").unwrap();
}

#[test]
fn accumulating_producer() {
    golden("rev_map").unwrap();
}

#[test]
fn unit_argument() {
    golden("foo_unit").unwrap();
}

/// Right after elaboration the squares are still computed eagerly and the
/// tail's sum is suspended behind a unit lambda.
#[test]
fn partial_sum_of_squares_before_simplification() {
    let (_, out) = optimize(&entry("sumi_mapsqi").source).unwrap();
    let got = thunk::unthunk(&out.elaborated);
    let want = parse(
        "let rec sumi p = p ()\n\
         let rec mapsqi p = case p of { y :: ys -> let x = y * y in let xs = mapsqi ys in fun () -> x + sumi xs }\n\
         let main l = sumi (mapsqi l)",
    )
    .unwrap();
    assert!(golden_eq(&got, &want), "{}", pretty(&got));
}

#[test]
fn whole_corpus_checks_out() {
    for e in corpus() {
        let o = check_entry(&e, &PipelineConfig::default(), STEP_LIMIT).unwrap();
        assert!(o.passed(), "{}: golden {:?}, cases {:?}", e.name, o.golden_ok, o.cases);
        assert!(o.output.diagnostics.iter().all(|d| d.level != "error"), "{}", e.name);
    }
}

#[test]
fn generator_is_pinned() {
    assert_eq!(
        gen_source(0, 30),
        "let rec len xs = case xs of { [] -> 0; x :: xs -> 1 + len xs }\n\
         let dbl x = x * 2\n\
         let main = (dbl (len [5, 4, 9]))\n"
    );
}
