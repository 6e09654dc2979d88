//! Symbolic task model of the general reductions: read/write footprints per
//! task, a dependency DAG by range intersection, and look-ahead feasibility.
//!
//! Updates are split into width-b blocks at global multiples of b: a left
//! update per column block, a right update per row block. Each reads its
//! panel and its block and writes the block.
//!
//! Feasibility: the left look-ahead is feasible when no path leads from the
//! tail of step t's left update (column blocks starting at or beyond
//! `k + w`) to the QR of step t+1; the right one likewise for the right
//! update's tail (row blocks from `k + w`) and the LQ of step t+1. Besides
//! the canonical order, the LQ of step r may be delayed until after the left
//! updates of step `r + lag` with `lag <= w/b - 1`, which keeps every panel
//! input final. A flag is reported feasible when some lag realizes it, and
//! `both_feasible` needs one lag that realizes both.

use std::collections::VecDeque;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::runtime::{Region, TaskKind};
use crate::svd::{band_widths, tri_band_widths, SvdForm};

/// Reduction shape to model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Problem {
    pub m: usize,
    pub n: usize,
    pub w: usize,
    pub b: usize,
    pub form: SvdForm,
    /// Number of steps to model; `None` means all of them.
    pub iters: Option<usize>,
}

impl Problem {
    pub fn new(m: usize, n: usize, w: usize, b: usize, form: SvdForm) -> Self {
        Problem {
            m,
            n,
            w,
            b,
            form,
            iters: None,
        }
    }

    pub fn with_iters(mut self, iters: usize) -> Self {
        self.iters = Some(iters);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.b == 0 || self.w < self.b {
            return Err(Error::Config(format!(
                "need 1 <= b <= w, got b = {}, w = {}",
                self.b, self.w
            )));
        }
        if self.m < self.n || self.n == 0 {
            return Err(Error::Dimension(format!(
                "task model needs m >= n >= 1, got {}x{}",
                self.m, self.n
            )));
        }
        if self.iters == Some(0) {
            return Err(Error::Config("at least one iteration is required".into()));
        }
        Ok(())
    }

    /// `(k, bl, br)` for each step, as executed by the real reduction.
    pub fn steps(&self) -> Vec<(usize, usize, usize)> {
        let (m, n, w, b) = (self.m, self.n, self.w, self.b);
        let mut out = Vec::new();
        let mut k = 0;
        loop {
            if self.iters.is_some_and(|t| out.len() >= t) {
                break;
            }
            match self.form {
                SvdForm::TriangularBand => {
                    let (bl, br) = tri_band_widths(m, n, w, b, k);
                    if bl == 0 {
                        break;
                    }
                    out.push((k, bl, br));
                    k += bl;
                }
                SvdForm::Band => {
                    let (bl, br) = band_widths(m, n, w, b, k);
                    if (bl, br) == (0, 0) {
                        break;
                    }
                    out.push((k, bl, br));
                    k += b;
                }
            }
        }
        out
    }
}

/// Schedule knobs for [`enumerate_tasks_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EnumOptions {
    /// Steps by which each LQ (and its right update) is delayed.
    pub lag: usize,
    /// Merge the part of each block update that lands on the next panel into
    /// that panel's factorization task.
    pub fold_next: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskNode {
    pub kind: TaskKind,
    pub iter: usize,
    /// First column (left update) or row (right update) of the target block.
    pub block: Option<usize>,
    pub reads: Vec<Region>,
    pub writes: Vec<Region>,
}

impl TaskNode {
    fn panel(kind: TaskKind, iter: usize, r: Region) -> Self {
        TaskNode {
            kind,
            iter,
            block: None,
            reads: vec![r.clone()],
            writes: vec![r],
        }
    }

    fn update(kind: TaskKind, iter: usize, block: usize, panel: &Region, target: Region) -> Self {
        TaskNode {
            kind,
            iter,
            block: Some(block),
            reads: vec![panel.clone(), target.clone()],
            writes: vec![target],
        }
    }

    pub fn label(&self) -> String {
        let tag = match self.kind {
            TaskKind::QrPanel => "QR",
            TaskKind::LqPanel => "LQ",
            TaskKind::LeftUpdate => "LU",
            TaskKind::RightUpdate => "RU",
            _ => "T",
        };
        match self.block {
            Some(b) => format!("{tag}{}_{b}", self.iter),
            None => format!("{tag}{}", self.iter),
        }
    }
}

fn hits(xs: &[Region], ys: &[Region]) -> bool {
    xs.iter().any(|x| ys.iter().any(|y| x.intersects(y)))
}

/// Splits `[lo, hi)` at multiples of `b`.
fn blocks(lo: usize, hi: usize, b: usize) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut s = lo;
    while s < hi {
        let e = ((s / b + 1) * b).min(hi);
        out.push(s..e);
        s = e;
    }
    out
}

struct StepTasks {
    qr: Option<TaskNode>,
    left: Vec<TaskNode>,
    lq: Option<TaskNode>,
    right: Vec<TaskNode>,
}

fn step_tasks(p: &Problem, t: usize, k: usize, bl: usize, br: usize) -> StepTasks {
    let (m, n, w, b) = (p.m, p.n, p.w, p.b);
    let mut st = StepTasks {
        qr: None,
        left: Vec::new(),
        lq: None,
        right: Vec::new(),
    };
    let left_rows = match p.form {
        SvdForm::TriangularBand => k..m,
        SvdForm::Band => (k + w).min(m)..m,
    };
    if bl > 0 {
        let panel = Region::a(left_rows.clone(), k..k + bl);
        for c in blocks(k + bl, n, b) {
            let target = Region::a(left_rows.clone(), c.clone());
            st.left.push(TaskNode::update(
                TaskKind::LeftUpdate,
                t,
                c.start,
                &panel,
                target,
            ));
        }
        st.qr = Some(TaskNode::panel(TaskKind::QrPanel, t, panel));
    }
    if br > 0 {
        let cols = (k + w).min(n)..n;
        let panel = Region::a(k..k + br, cols.clone());
        for r in blocks(k + br, m, b) {
            let target = Region::a(r.clone(), cols.clone());
            st.right.push(TaskNode::update(
                TaskKind::RightUpdate,
                t,
                r.start,
                &panel,
                target,
            ));
        }
        st.lq = Some(TaskNode::panel(TaskKind::LqPanel, t, panel));
    }
    st
}

/// Folds the part of update `upd` that lands on `dst`'s panel into `dst`.
/// Returns what is left of `upd`, or `upd` unchanged when the overlap is not
/// a clean prefix cut along the update's long dimension.
fn fold_into(dst: &mut TaskNode, upd: TaskNode) -> Option<TaskNode> {
    let panel = dst.writes[0].clone();
    let target = upd.writes[0].clone();
    let src = upd.reads[0].clone();
    let (inner, rest) = if upd.kind == TaskKind::LeftUpdate {
        let ok = panel.cols.start <= target.cols.start
            && target.cols.end <= panel.cols.end
            && target.rows.start <= panel.rows.start
            && panel.rows.end == target.rows.end;
        if !ok {
            return Some(upd);
        }
        (
            Region::a(panel.rows.clone(), target.cols.clone()),
            Region::a(target.rows.start..panel.rows.start, target.cols.clone()),
        )
    } else {
        let ok = panel.rows.start <= target.rows.start
            && target.rows.end <= panel.rows.end
            && target.cols.start <= panel.cols.start
            && panel.cols.end == target.cols.end;
        if !ok {
            return Some(upd);
        }
        (
            Region::a(target.rows.clone(), panel.cols.clone()),
            Region::a(target.rows.clone(), target.cols.start..panel.cols.start),
        )
    };
    dst.reads.extend([src.clone(), inner.clone()]);
    dst.writes.push(inner);
    (!rest.is_empty()).then(|| TaskNode::update(upd.kind, upd.iter, upd.block.unwrap(), &src, rest))
}

/// Tasks in canonical program order: per step, QR, its left updates, LQ,
/// its right updates.
pub fn enumerate_tasks(p: &Problem) -> Result<Vec<TaskNode>> {
    enumerate_tasks_with(p, EnumOptions::default())
}

/// Tasks in program order under the given schedule options.
pub fn enumerate_tasks_with(p: &Problem, opt: EnumOptions) -> Result<Vec<TaskNode>> {
    p.validate()?;
    if opt.lag > 0 && opt.lag >= p.w / p.b {
        return Err(Error::Config(format!(
            "lag {} exceeds w/b - 1 = {}",
            opt.lag,
            p.w / p.b - 1
        )));
    }
    let steps = p.steps();
    let mut per: Vec<StepTasks> = steps
        .iter()
        .enumerate()
        .map(|(t, &(k, bl, br))| step_tasks(p, t, k, bl, br))
        .collect();
    if opt.fold_next {
        for t in 0..per.len().saturating_sub(1) {
            let (k2, _, _) = steps[t + 1];
            let (head, tail) = per.split_at_mut(t + 1);
            let (cur, next) = (&mut head[t], &mut tail[0]);
            if let Some(qr) = next.qr.as_mut() {
                if let Some(i) = cur.left.iter().position(|x| x.block == Some(k2)) {
                    if let Some(rest) = fold_into(qr, cur.left.remove(i)) {
                        cur.left.insert(i, rest);
                    }
                }
            }
            if let Some(lq) = next.lq.as_mut() {
                if let Some(i) = cur.right.iter().position(|x| x.block == Some(k2)) {
                    if let Some(rest) = fold_into(lq, cur.right.remove(i)) {
                        cur.right.insert(i, rest);
                    }
                }
            }
        }
    }
    let mut lefts = Vec::new();
    let mut rights = Vec::new();
    for s in per {
        lefts.push((s.qr, s.left));
        rights.push((s.lq, s.right));
    }
    let mut out = Vec::new();
    let mut rights = rights.into_iter();
    let total = lefts.len();
    for (t, (qr, left)) in lefts.into_iter().enumerate() {
        out.extend(qr);
        out.extend(left);
        if t >= opt.lag {
            let (lq, right) = rights.next().expect("one right half per step");
            out.extend(lq);
            out.extend(right);
        }
    }
    for (lq, right) in rights {
        out.extend(lq);
        out.extend(right);
    }
    debug_assert!(out.iter().all(|x| x.iter < total));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cause {
    /// Read after write.
    Raw,
    /// Write after read.
    War,
    /// Write after write.
    Waw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub cause: Cause,
}

#[derive(Debug, Clone)]
pub struct TaskDag {
    pub nodes: Vec<TaskNode>,
    pub edges: Vec<Edge>,
    succ: Vec<Vec<usize>>,
}

/// Edge `a -> b` for every `a` before `b` whose footprints conflict, one edge
/// per cause.
pub fn build_dag(tasks: Vec<TaskNode>) -> TaskDag {
    let n = tasks.len();
    let mut edges = Vec::new();
    let mut succ = vec![Vec::new(); n];
    for a in 0..n {
        for b in a + 1..n {
            let (x, y) = (&tasks[a], &tasks[b]);
            let mut any = false;
            for (hit, cause) in [
                (hits(&x.writes, &y.reads), Cause::Raw),
                (hits(&x.reads, &y.writes), Cause::War),
                (hits(&x.writes, &y.writes), Cause::Waw),
            ] {
                if hit {
                    edges.push(Edge {
                        from: a,
                        to: b,
                        cause,
                    });
                    any = true;
                }
            }
            if any {
                succ[a].push(b);
            }
        }
    }
    TaskDag {
        nodes: tasks,
        edges,
        succ,
    }
}

impl TaskDag {
    /// Nodes reachable from `sources` (sources included).
    pub fn reachable(&self, sources: &[usize]) -> Vec<bool> {
        let mut seen = vec![false; self.nodes.len()];
        let mut q: VecDeque<usize> = sources.iter().copied().collect();
        for &s in sources {
            seen[s] = true;
        }
        while let Some(x) = q.pop_front() {
            for &y in &self.succ[x] {
                if !seen[y] {
                    seen[y] = true;
                    q.push_back(y);
                }
            }
        }
        seen
    }

    pub fn has_path(&self, from: usize, to: usize) -> bool {
        self.reachable(&[from])[to]
    }

    pub fn find(&self, kind: TaskKind, iter: usize) -> Option<usize> {
        self.nodes
            .iter()
            .position(|x| x.kind == kind && x.iter == iter)
    }

    /// Edges always point forward in program order.
    pub fn is_acyclic(&self) -> bool {
        self.edges.iter().all(|e| e.from < e.to)
    }

    /// `digraph` text with one node per task and one edge per cause.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph tasks {\n  rankdir=TB;\n");
        for (i, x) in self.nodes.iter().enumerate() {
            let shape = match x.kind {
                TaskKind::QrPanel | TaskKind::LqPanel => "box",
                _ => "ellipse",
            };
            let _ = writeln!(s, "  t{i} [label=\"{}\", shape={shape}];", x.label());
        }
        for e in &self.edges {
            let _ = writeln!(s, "  t{} -> t{} [label=\"{:?}\"];", e.from, e.to, e.cause);
        }
        s.push_str("}\n");
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LagResult {
    pub lag: usize,
    pub left: bool,
    pub right: bool,
    pub fold_next: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverlapReport {
    pub left_feasible: bool,
    pub right_feasible: bool,
    pub both_feasible: bool,
    pub per_lag: Vec<LagResult>,
}

/// Steps whose next panels are full-size and whose tails are non-empty,
/// excluding the flushed end of a lagged schedule.
fn steady_steps(p: &Problem, lag: usize) -> Vec<usize> {
    let steps = p.steps();
    let t_max = steps.len();
    (1..t_max)
        .filter(|&t| t + 1 + lag < t_max)
        .filter(|&t| {
            let (k, _, _) = steps[t];
            let (_, bl2, br2) = steps[t + 1];
            bl2 == p.b && br2 == p.b && p.n > k + p.w && p.m > k + p.w
        })
        .collect()
}

/// Left and right feasibility of one schedule over the given steps.
pub fn feasibility(dag: &TaskDag, p: &Problem, steps: &[usize]) -> (bool, bool) {
    let ks = p.steps();
    let mut left = true;
    let mut right = true;
    for &t in steps {
        // Tail blocks start past the next panel; the blocks before it are
        // the next factorization's prerequisites.
        let (k2, bl2, br2) = ks[t + 1];
        let tail = |kind: TaskKind, from: usize| -> Vec<usize> {
            dag.nodes
                .iter()
                .enumerate()
                .filter(|(_, x)| {
                    x.kind == kind && x.iter == t && x.block.is_some_and(|s| s >= from)
                })
                .map(|(i, _)| i)
                .collect()
        };
        if let Some(qr) = dag.find(TaskKind::QrPanel, t + 1) {
            left &= !dag.reachable(&tail(TaskKind::LeftUpdate, k2 + bl2))[qr];
        }
        if let Some(lq) = dag.find(TaskKind::LqPanel, t + 1) {
            right &= !dag.reachable(&tail(TaskKind::RightUpdate, k2 + br2))[lq];
        }
    }
    (left, right)
}

/// Decides left, right and joint look-ahead feasibility over every
/// admissible lag.
pub fn analyze_overlap(p: &Problem) -> Result<OverlapReport> {
    analyze_overlap_with(p, false)
}

/// As [`analyze_overlap`], optionally folding next-panel updates.
pub fn analyze_overlap_with(p: &Problem, fold_next: bool) -> Result<OverlapReport> {
    p.validate()?;
    if p.steps().len() < 4 {
        return Err(Error::Config(format!(
            "steady-state analysis needs at least 4 steps, {m}x{n} with w = {w}, b = {b} has {}",
            p.steps().len(),
            m = p.m,
            n = p.n,
            w = p.w,
            b = p.b
        )));
    }
    let mut per_lag = Vec::new();
    for lag in 0..(p.w / p.b).max(1) {
        let steps = steady_steps(p, lag);
        if steps.is_empty() {
            continue;
        }
        let tasks = enumerate_tasks_with(p, EnumOptions { lag, fold_next })?;
        let dag = build_dag(tasks);
        let (left, right) = feasibility(&dag, p, &steps);
        per_lag.push(LagResult {
            lag,
            left,
            right,
            fold_next,
        });
    }
    if per_lag.is_empty() {
        return Err(Error::Config(format!(
            "no steady-state step for {}x{} with w = {}, b = {}",
            p.m, p.n, p.w, p.b
        )));
    }
    Ok(OverlapReport {
        left_feasible: per_lag.iter().any(|r| r.left),
        right_feasible: per_lag.iter().any(|r| r.right),
        both_feasible: per_lag.iter().any(|r| r.left && r.right),
        per_lag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(r: &OverlapReport) -> (bool, bool, bool) {
        (r.left_feasible, r.right_feasible, r.both_feasible)
    }

    #[test]
    fn blocks_split_at_multiples() {
        assert_eq!(blocks(3, 10, 4), vec![3..4, 4..8, 8..10]);
        assert!(blocks(5, 5, 2).is_empty());
    }

    #[test]
    fn single_iteration_counts() {
        let p = Problem::new(12, 12, 2, 2, SvdForm::TriangularBand).with_iters(1);
        let t = enumerate_tasks(&p).unwrap();
        let count = |k| t.iter().filter(|x| x.kind == k).count();
        assert_eq!(count(TaskKind::QrPanel), 1);
        assert_eq!(count(TaskKind::LqPanel), 1);
        assert_eq!(count(TaskKind::LeftUpdate), 5);
        assert_eq!(count(TaskKind::RightUpdate), 5);
        for x in &t {
            for r in x.reads.iter().chain(&x.writes) {
                assert!(r.rows.end <= 12 && r.cols.end <= 12);
            }
        }
    }

    #[test]
    fn disjoint_tasks_have_no_edge() {
        let a = TaskNode::panel(TaskKind::QrPanel, 0, Region::a(0..2, 0..2));
        let b = TaskNode::panel(TaskKind::QrPanel, 1, Region::a(2..4, 2..4));
        assert!(build_dag(vec![a, b]).edges.is_empty());
    }

    #[test]
    fn three_overlap_cases() {
        let tri = |r: usize| Problem::new(32, 32, 2 * r, 2, SvdForm::TriangularBand);
        assert_eq!(
            flags(&analyze_overlap(&tri(1)).unwrap()),
            (false, false, false)
        );
        assert_eq!(
            flags(&analyze_overlap(&tri(2)).unwrap()),
            (true, true, false)
        );
        assert_eq!(
            flags(&analyze_overlap(&tri(3)).unwrap()),
            (true, true, true)
        );
        let band = Problem::new(32, 32, 4, 2, SvdForm::Band);
        assert_eq!(flags(&analyze_overlap(&band).unwrap()), (true, true, true));
    }

    #[test]
    fn too_few_steps() {
        let p = Problem::new(8, 8, 2, 2, SvdForm::TriangularBand);
        assert!(analyze_overlap(&p).is_err());
        assert!(enumerate_tasks(&Problem::new(4, 6, 2, 2, SvdForm::Band)).is_err());
    }
}
