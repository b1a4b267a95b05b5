//! Per-call-site duplication of top-level definitions.
//!
//! Inference gives each term a single type variable, so a function consumed
//! in two different ways must exist twice. Recursive groups are copied as a
//! unit; calls inside a copied group stay inside it.

use std::collections::{HashMap, HashSet};

use indexmap::IndexMap;
use serde::Serialize;

use crate::syntax::*;

pub const DEFAULT_MAX_COPIES: usize = 8;

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DupReport {
    /// original name → names of its copies
    pub copies: IndexMap<Name, Vec<Name>>,
    /// (copy name, call-site node id) for every repointed site
    pub sites: Vec<(Name, NodeId)>,
}

/// Strongly connected components of the top-level call graph, callers first.
fn sccs(p: &Program) -> Vec<Vec<usize>> {
    let idx: HashMap<&str, usize> = p.defs.iter().enumerate().map(|(i, d)| (d.name.as_str(), i)).collect();
    let edges: Vec<Vec<usize>> = p
        .defs
        .iter()
        .map(|d| {
            let mut out: Vec<usize> = d.body.free_vars().iter().filter_map(|v| idx.get(v.as_str()).copied()).collect();
            out.sort_unstable();
            out
        })
        .collect();
    // Tarjan, iterative enough for small graphs
    struct St {
        index: Vec<Option<usize>>,
        low: Vec<usize>,
        on: Vec<bool>,
        stack: Vec<usize>,
        next: usize,
        out: Vec<Vec<usize>>,
    }
    fn visit(v: usize, e: &[Vec<usize>], s: &mut St) {
        s.index[v] = Some(s.next);
        s.low[v] = s.next;
        s.next += 1;
        s.stack.push(v);
        s.on[v] = true;
        for &w in &e[v] {
            match s.index[w] {
                None => {
                    visit(w, e, s);
                    s.low[v] = s.low[v].min(s.low[w]);
                }
                Some(iw) if s.on[w] => s.low[v] = s.low[v].min(iw),
                _ => {}
            }
        }
        if Some(s.low[v]) == s.index[v] {
            let mut comp = Vec::new();
            while let Some(w) = s.stack.pop() {
                s.on[w] = false;
                comp.push(w);
                if w == v {
                    break;
                }
            }
            comp.sort_unstable();
            s.out.push(comp);
        }
    }
    let n = p.defs.len();
    let mut s = St { index: vec![None; n], low: vec![0; n], on: vec![false; n], stack: vec![], next: 0, out: vec![] };
    for v in 0..n {
        if s.index[v].is_none() {
            visit(v, &edges, &mut s);
        }
    }
    // Tarjan yields callees first
    s.out.reverse();
    s.out
}

/// Free occurrences of names in `group`, in pre-order, as (name, node id).
fn occurrences(t: &Term, group: &HashSet<Name>, bound: &mut Vec<Name>, out: &mut Vec<(Name, NodeId)>) {
    match &t.kind {
        Kind::Var(v) => {
            if group.contains(v) && !bound.contains(v) {
                out.push((v.clone(), t.id));
            }
        }
        Kind::Lit(_) => {}
        Kind::App(a, b) => {
            occurrences(a, group, bound, out);
            occurrences(b, group, bound, out);
        }
        Kind::Ctor(_, args) => args.iter().for_each(|a| occurrences(a, group, bound, out)),
        Kind::Lam { param, body, .. } => {
            bound.push(param.clone());
            occurrences(body, group, bound, out);
            bound.pop();
        }
        Kind::Case { scrut, arms, .. } => {
            occurrences(scrut, group, bound, out);
            for a in arms {
                let n = bound.len();
                bound.extend(a.binders.iter().cloned());
                occurrences(&a.body, group, bound, out);
                bound.truncate(n);
            }
        }
        Kind::LetRec(n, a, b) => {
            bound.push(n.clone());
            occurrences(a, group, bound, out);
            occurrences(b, group, bound, out);
            bound.pop();
        }
    }
}

fn retarget(t: &mut Term, map: &HashMap<NodeId, Name>) {
    t.walk_mut(&mut |n| {
        if let Some(new) = map.get(&n.id) {
            n.kind = Kind::Var(new.clone());
        }
    });
}

pub fn duplicate(p: &Program, max_copies: usize) -> (Program, DupReport) {
    assert!(max_copies >= 1, "max_copies must be at least 1");
    let mut prog = p.clone();
    let mut report = DupReport::default();
    let order: Vec<Vec<Name>> =
        sccs(&prog).into_iter().map(|c| c.into_iter().map(|i| prog.defs[i].name.clone()).collect()).collect();
    let mut g = IdGen::for_program(&prog);
    let mut taken: HashSet<Name> = prog.top_names();
    taken.insert("main".into());

    for group in order {
        let gset: HashSet<Name> = group.iter().cloned().collect();
        let mut sites = Vec::new();
        for d in prog.defs.iter().filter(|d| !gset.contains(&d.name)) {
            occurrences(&d.body, &gset, &mut Vec::new(), &mut sites);
        }
        occurrences(&prog.main, &gset, &mut Vec::new(), &mut sites);
        if sites.len() <= 1 {
            continue;
        }
        let n_copies = sites.len().min(max_copies);
        // copy k renames every member of the group
        let mut renames: Vec<HashMap<Name, Name>> = Vec::new();
        for _ in 0..n_copies {
            let mut m = HashMap::new();
            for name in &group {
                let fresh = fresh_name(name, &|c: &str| taken.contains(c) || crate::parse::is_reserved(c));
                taken.insert(fresh.clone());
                report.copies.entry(name.clone()).or_default().push(fresh.clone());
                m.insert(name.clone(), fresh);
            }
            renames.push(m);
        }
        let mut site_map = HashMap::new();
        for (i, (name, id)) in sites.iter().enumerate() {
            let k = i.min(n_copies - 1);
            let new = renames[k][name].clone();
            report.sites.push((new.clone(), *id));
            site_map.insert(*id, new);
        }
        for d in prog.defs.iter_mut().filter(|d| !gset.contains(&d.name)) {
            retarget(&mut d.body, &site_map);
        }
        retarget(&mut prog.main, &site_map);

        let mut new_defs = Vec::with_capacity(prog.defs.len() + group.len() * n_copies);
        for d in std::mem::take(&mut prog.defs) {
            if !gset.contains(&d.name) {
                new_defs.push(d);
                continue;
            }
            for ren in &renames {
                let mut body = g.refresh(&d.body);
                for (from, to) in ren {
                    body = rename_free(&body, from, to);
                }
                new_defs.push(Def { name: ren[&d.name].clone(), recursive: d.recursive, body });
            }
        }
        prog.defs = new_defs;
    }
    prog.next_id = g.0;
    (prog, report)
}

/// Undoes duplication that turned out to be useless: copies of one
/// definition whose bodies are α-equivalent (up to their own names) are
/// merged, and a sole surviving copy gets its original name back.
pub fn merge_copies(p: &Program, report: &DupReport) -> Program {
    let mut prog = p.clone();
    for (orig, copies) in &report.copies {
        let mut kept: Vec<Name> = Vec::new();
        for c in copies {
            let Some(body_c) = prog.def(c).map(|d| d.body.clone()) else { continue };
            let same = kept.iter().find(|r| {
                let body_r = &prog.def(r).expect("kept copy exists").body;
                alpha_eq(body_r, &rename_free(&body_c, c, r))
            });
            match same.cloned() {
                Some(r) => {
                    prog.defs.retain(|d| &d.name != c);
                    rename_top(&mut prog, c, &r);
                }
                None => kept.push(c.clone()),
            }
        }
        if let [only] = kept.as_slice() {
            if prog.def(orig).is_none() && !prog.free_vars().contains(orig) {
                rename_top(&mut prog, only, orig);
            }
        }
    }
    prog
}

fn rename_top(p: &mut Program, from: &str, to: &str) {
    for d in &mut p.defs {
        if d.name == from {
            d.name = to.to_string();
        }
        d.body = rename_free(&d.body, from, to);
    }
    p.main = rename_free(&p.main, from, to);
}
