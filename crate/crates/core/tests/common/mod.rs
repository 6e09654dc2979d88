//! Helpers shared by integration tests and the acceptance runner.

use std::collections::{BTreeMap, BTreeSet};

use bandred::bench::gen_general;
use bandred::depgraph::{enumerate_tasks, Problem, TaskNode};
use bandred::runtime::{EventTrace, Region, TaskKind, MAT_A};
use bandred::svd::{reduce_traced, SvdConfig, SvdForm, SvdVariant};
use bandred::ExecGroups;

/// Per (kind, iteration): cells written, cells read or written.
type Raster = BTreeMap<(TaskKind, usize), (BTreeSet<(usize, usize)>, BTreeSet<(usize, usize)>)>;

fn paint(set: &mut BTreeSet<(usize, usize)>, r: &Region) {
    for i in r.rows.clone() {
        for j in r.cols.clone() {
            set.insert((i, j));
        }
    }
}

fn raster_tasks(tasks: &[TaskNode]) -> Raster {
    let mut out = Raster::new();
    for t in tasks {
        let e = out.entry((t.kind, t.iter)).or_default();
        for r in &t.writes {
            paint(&mut e.0, r);
        }
        for r in t.reads.iter().chain(&t.writes) {
            paint(&mut e.1, r);
        }
    }
    out
}

fn raster_trace(tr: &EventTrace) -> Raster {
    let mut out = Raster::new();
    for ev in &tr.events {
        let e = out.entry((ev.kind, ev.iter)).or_default();
        for r in ev.writes.iter().filter(|r| r.mat == MAT_A) {
            paint(&mut e.0, r);
        }
        for r in ev.reads.iter().chain(&ev.writes).filter(|r| r.mat == MAT_A) {
            paint(&mut e.1, r);
        }
    }
    out.retain(|_, v| !v.1.is_empty());
    out
}

/// Compares the symbolic task footprints with the regions the reference
/// reduction declares at run time. Wide band inputs are reduced transposed,
/// so the task model is built for the transposed shape.
pub fn range_oracle_case(
    m: usize,
    n: usize,
    w: usize,
    b: usize,
    form: SvdForm,
) -> Result<(), String> {
    let a = gen_general(m, n, (m * 31 + n) as u64).map_err(|e| e.to_string())?;
    let cfg = SvdConfig::new(w, b, form, SvdVariant::Reference);
    let (_, tr) =
        reduce_traced(&a, &cfg, ExecGroups::new(1, 0).unwrap()).map_err(|e| e.to_string())?;
    let tasks = enumerate_tasks(&Problem::new(m.max(n), m.min(n), w, b, form))
        .map_err(|e| e.to_string())?;
    let want = raster_tasks(&tasks);
    let got = raster_trace(&tr);
    let case = format!("{m}x{n} w={w} b={b} {form:?}");
    let (wk, gk): (Vec<_>, Vec<_>) = (want.keys().collect(), got.keys().collect());
    if wk != gk {
        return Err(format!(
            "{case}: task sets differ, model {wk:?}, run {gk:?}"
        ));
    }
    for (key, v) in &want {
        if v != &got[key] {
            return Err(format!("{case}: footprint of {key:?} differs"));
        }
    }
    Ok(())
}
