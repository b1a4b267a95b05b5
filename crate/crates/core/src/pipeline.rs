//! The whole optimization, stage by stage.

use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::dup::{duplicate, merge_copies, DupReport, DEFAULT_MAX_COPIES};
use crate::elab::{check_pairing, elaborate, RewriteReport};
use crate::infer::{infer, is_self_contained, ConstraintSet, InferError};
use crate::simplify::{simplify_checked, SimplifyOptions};
use crate::solver::{solve_with_budget, validate_output, Solved, DEFAULT_BUDGET};
use crate::syntax::Program;
use crate::unify::{check_consistent, unify, Strategies};

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub max_dup: usize,
    pub dup: bool,
    pub simplify: SimplifyOptions,
    pub solver_budget: u64,
    /// Test-only: skip thunking, so case arms are imported unguarded.
    #[doc(hidden)]
    pub thunking: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            max_dup: DEFAULT_MAX_COPIES,
            dup: true,
            simplify: SimplifyOptions::default(),
            solver_budget: DEFAULT_BUDGET,
            thunking: true,
        }
    }
}

/// A non-fatal note, printed as one JSON line.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostic {
    pub level: &'static str,
    pub stage: &'static str,
    pub message: String,
}

impl Diagnostic {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("diagnostic serializes")
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Infer(#[from] InferError),
    #[error("invariant violated after {stage}: {detail}")]
    Invariant { stage: &'static str, detail: String },
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub thunked: Program,
    pub duplicated: Program,
    pub elaborated: Program,
    pub optimized: Program,
    pub constraints: ConstraintSet,
    /// `None` when solving failed and fusion was disabled.
    pub solved: Option<Solved>,
    pub strategies: Strategies,
    pub dup_report: DupReport,
    pub report: RewriteReport,
    pub diagnostics: Vec<Diagnostic>,
}

fn invariant(stage: &'static str, detail: impl Into<String>) -> PipelineError {
    PipelineError::Invariant { stage, detail: detail.into() }
}

pub fn run(p: &Program, cfg: &PipelineConfig) -> Result<PipelineOutput, PipelineError> {
    let mut diagnostics = Vec::new();
    let thunked = if cfg.thunking { crate::thunk::thunk(p) } else { p.clone() };
    let (mut duplicated, dup_report) =
        if cfg.dup { duplicate(&thunked, cfg.max_dup) } else { (thunked.clone(), DupReport::default()) };
    duplicated.renumber();

    let (_, constraints) = infer(&duplicated)?;
    if !is_self_contained(&duplicated, &constraints) {
        return Err(invariant("infer", "constraint set refers to unknown nodes"));
    }
    let (solved, strategies) = match solve_with_budget(&constraints, cfg.solver_budget) {
        Ok(s) => {
            validate_output(&constraints, &s.xi).map_err(|e| invariant("solve", format!("{e:?}")))?;
            let st = unify(&constraints, &s);
            check_consistent(&constraints, &st).map_err(|e| invariant("unify", e))?;
            (Some(s), st)
        }
        Err(e) => {
            diagnostics.push(Diagnostic { level: "warning", stage: "solve", message: format!("{e}; fusion disabled") });
            (None, Strategies::default())
        }
    };
    if !strategies.failed.is_empty() {
        diagnostics.push(Diagnostic {
            level: "info",
            stage: "unify",
            message: format!("{} type variables left unfused after strategy clashes", strategies.failed.len()),
        });
    }

    let (elaborated, report) = elaborate(&duplicated, &constraints, &strategies);
    if !check_pairing(&report) {
        return Err(invariant("elaborate", "fused constructor without a collapsed case"));
    }
    for (case, why) in &report.skipped {
        diagnostics.push(Diagnostic { level: "info", stage: "elaborate", message: format!("case #{case} not fused: {why:?}") });
    }
    if !elaborated.is_closed() {
        return Err(invariant("elaborate", "output has free variables"));
    }

    let (optimized, converged) = simplify_checked(&elaborated, cfg.simplify);
    let optimized = merge_copies(&optimized, &dup_report);
    if !converged {
        diagnostics.push(Diagnostic { level: "warning", stage: "simplify", message: "no fixpoint within bound".into() });
    }
    if !optimized.is_closed() {
        return Err(invariant("simplify", "output has free variables"));
    }
    Ok(PipelineOutput {
        thunked,
        duplicated,
        elaborated,
        optimized,
        constraints,
        solved,
        strategies,
        dup_report,
        report,
        diagnostics,
    })
}

/// Convenience wrapper returning only the optimized program.
pub fn optimize(p: &Program) -> Result<Program, PipelineError> {
    run(p, &PipelineConfig::default()).map(|o| o.optimized)
}

impl PipelineOutput {
    pub fn dump_constraints(&self) -> String {
        self.constraints.dump_json_lines()
    }

    pub fn dump_bounds(&self) -> String {
        let Some(s) = &self.solved else { return String::new() };
        s.xi
            .iter()
            .map(|c| {
                json!({"lhs": self.constraints.render_pos(&c.lhs), "rhs": self.constraints.render_neg(&c.rhs)}).to_string()
                    + "\n"
            })
            .collect()
    }

    pub fn dump_strategies(&self) -> String {
        crate::unify::dump_json_lines(&self.strategies)
    }

    pub fn dump_report(&self) -> String {
        let mut out = serde_json::to_string(&self.report).expect("report serializes");
        out.push('\n');
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse;

    #[test]
    fn unfusable_program_passes_through() {
        let p = parse("let main = 1 + 2").unwrap();
        let out = run(&p, &PipelineConfig::default()).unwrap();
        assert!(crate::syntax::program_alpha_eq(&p, &out.optimized));
        assert!(out.report.is_empty());
    }

    #[test]
    fn unbound_is_an_error() {
        let p = parse("let main = y").unwrap();
        assert!(matches!(run(&p, &PipelineConfig::default()), Err(PipelineError::Infer(_))));
    }

    #[test]
    fn clash_degrades_to_identity() {
        // applying a list as a function clashes in the solver
        let p = parse("let main = let e = [] in (case e of { [] -> 1 }) + e 1").unwrap();
        let out = run(&p, &PipelineConfig::default()).unwrap();
        assert!(out.solved.is_none());
        assert!(out.diagnostics.iter().any(|d| d.stage == "solve"));
        assert!(crate::syntax::program_alpha_eq(&p, &out.optimized));
    }
}
