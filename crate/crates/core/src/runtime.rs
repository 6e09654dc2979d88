//! Static look-ahead execution: a sequential task list on the T_S group runs
//! concurrently with a parallel task list on the T_P group, then both join.
//!
//! Every task declares the matrix regions it reads and writes. A phase whose
//! two lists touch intersecting regions (write/write or write/read) is
//! rejected before anything runs, and tasks can only obtain views inside
//! their declarations, so an accepted phase is race free.

use std::cell::Cell;
use std::fmt;
use std::io::Write;
use std::marker::PhantomData;
use std::ops::Range;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::flops::{FlopCounter, FlopSnapshot};
use crate::kernels::Ctx;
use crate::matrix::{MatMut, MatRef, Matrix};

/// Identifies which matrix a [`Region`] refers to.
pub type MatId = u32;

/// The matrix being reduced.
pub const MAT_A: MatId = 0;
/// The optional accumulated orthogonal factor.
pub const MAT_Q: MatId = 1;
/// Per-iteration scratch (X1..X3, Z_L, Z_R, X).
pub const MAT_WORK: MatId = 2;

/// A rectangular block `rows x cols` of matrix `mat`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Region {
    pub mat: MatId,
    pub rows: Range<usize>,
    pub cols: Range<usize>,
}

impl Region {
    pub fn new(mat: MatId, rows: Range<usize>, cols: Range<usize>) -> Self {
        Region { mat, rows, cols }
    }

    pub fn a(rows: Range<usize>, cols: Range<usize>) -> Self {
        Self::new(MAT_A, rows, cols)
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty() || self.cols.is_empty()
    }

    pub fn intersects(&self, o: &Region) -> bool {
        self.mat == o.mat
            && !self.is_empty()
            && !o.is_empty()
            && self.rows.start < o.rows.end
            && o.rows.start < self.rows.end
            && self.cols.start < o.cols.end
            && o.cols.start < self.cols.end
    }

    pub fn contains(&self, o: &Region) -> bool {
        o.is_empty()
            || (self.mat == o.mat
                && self.rows.start <= o.rows.start
                && o.rows.end <= self.rows.end
                && self.cols.start <= o.cols.start
                && o.cols.end <= self.cols.end)
    }

    pub fn len(&self) -> usize {
        self.rows.len() * self.cols.len()
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.mat {
            MAT_A => "A".to_string(),
            MAT_Q => "Q".to_string(),
            MAT_WORK => "work".to_string(),
            k => format!("M{k}"),
        };
        write!(
            f,
            "{name}[{}:{}, {}:{}]",
            self.rows.start, self.rows.end, self.cols.start, self.cols.end
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TaskKind {
    QrPanel,
    LqPanel,
    LeftUpdate,
    RightUpdate,
    /// Two-sided symmetric update, or its column slice.
    SymUpdate,
    /// Fused left-and-right update of a trailing block.
    FusedUpdate,
    /// Scratch products feeding a later update.
    Workspace,
    /// Accumulation of the orthogonal factor.
    Accumulate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Group {
    /// The sequential look-ahead group.
    Ts,
    /// The parallel remainder group.
    Tp,
    /// All workers, no grouping.
    All,
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Group::Ts => "TS",
            Group::Tp => "TP",
            Group::All => "ALL",
        })
    }
}

/// Worker partition into T_S and T_P.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecGroups {
    total_workers: usize,
    ts_count: usize,
}

impl ExecGroups {
    /// `ts_count = 0` disables look-ahead: both lists run back to back on all
    /// workers. Otherwise T_P keeps `total - ts_count >= 1` workers.
    pub fn new(total_workers: usize, ts_count: usize) -> Result<Self> {
        if total_workers == 0 {
            return Err(Error::Config("at least one worker is required".into()));
        }
        if ts_count > 0 && ts_count >= total_workers {
            return Err(Error::Config(format!(
                "ts_count {ts_count} leaves no worker for T_P (total {total_workers})"
            )));
        }
        Ok(ExecGroups {
            total_workers,
            ts_count,
        })
    }

    /// One worker in T_S when more than one is available.
    pub fn with_workers(total_workers: usize) -> Result<Self> {
        Self::new(total_workers, usize::from(total_workers > 1))
    }

    pub fn total_workers(&self) -> usize {
        self.total_workers
    }

    pub fn ts_count(&self) -> usize {
        self.ts_count
    }

    pub fn tp_count(&self) -> usize {
        self.total_workers - self.ts_count
    }
}

impl Default for ExecGroups {
    fn default() -> Self {
        let n = std::thread::available_parallelism().map_or(1, |n| n.get());
        Self::with_workers(n).expect("valid default grouping")
    }
}

/// Exclusive handle to a matrix that tasks borrow regions from.
pub struct SharedMat<'a> {
    id: MatId,
    ptr: *mut f64,
    rows: usize,
    cols: usize,
    ld: usize,
    _life: PhantomData<&'a mut Matrix>,
}

// SAFETY: access goes through TaskCtx, which only hands out views inside a
// task's declared regions; run_phase rejects concurrent overlapping
// declarations.
unsafe impl Send for SharedMat<'_> {}
unsafe impl Sync for SharedMat<'_> {}

impl<'a> SharedMat<'a> {
    pub fn new(id: MatId, m: &'a mut Matrix) -> Self {
        SharedMat {
            id,
            rows: m.rows(),
            cols: m.cols(),
            ld: m.leading_dim(),
            ptr: m.as_mut_ptr(),
            _life: PhantomData,
        }
    }

    pub fn id(&self) -> MatId {
        self.id
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    fn check_bounds(&self, r: &Region) {
        assert!(
            r.rows.end <= self.rows && r.cols.end <= self.cols,
            "{r} outside {}x{}",
            self.rows,
            self.cols
        );
    }

    fn offset(&self, r: &Region) -> usize {
        if r.is_empty() {
            0
        } else {
            r.rows.start + r.cols.start * self.ld
        }
    }
}

/// Per-task access broker handed to a task body.
pub struct TaskCtx<'r> {
    kern: Ctx<'r>,
    id: &'r str,
    reads: &'r [Region],
    writes: &'r [Region],
    taken: Cell<u64>,
}

impl<'r> TaskCtx<'r> {
    /// Kernel context with this group's worker budget.
    pub fn kern(&self) -> Ctx<'r> {
        self.kern
    }

    pub fn workers(&self) -> usize {
        self.kern.workers
    }

    /// Mutable views of disjoint regions of `m`, each inside a declared
    /// write. Callable once per matrix per task.
    pub fn write_many<'s>(
        &'s self,
        m: &'s SharedMat<'_>,
        regions: &[(Range<usize>, Range<usize>)],
    ) -> Vec<MatMut<'s>> {
        let bit = 1u64 << (m.id % 64);
        assert!(
            self.taken.get() & bit == 0,
            "task {}: write views of matrix {} already taken",
            self.id,
            m.id
        );
        self.taken.set(self.taken.get() | bit);
        let regs: Vec<Region> = regions
            .iter()
            .map(|(r, c)| Region::new(m.id, r.clone(), c.clone()))
            .collect();
        for (i, r) in regs.iter().enumerate() {
            m.check_bounds(r);
            assert!(
                r.is_empty() || self.writes.iter().any(|w| w.contains(r)),
                "task {}: {r} not inside a declared write",
                self.id
            );
            for o in &regs[..i] {
                assert!(!o.intersects(r), "task {}: {o} and {r} overlap", self.id);
            }
        }
        regs.iter()
            .map(|r| {
                // SAFETY: in bounds, inside this task's declared writes, pairwise
                // disjoint, and no other concurrent task declared an
                // intersecting region.
                unsafe {
                    MatMut::from_raw(m.ptr.add(m.offset(r)), r.rows.len(), r.cols.len(), m.ld)
                }
            })
            .collect()
    }

    pub fn write<'s>(
        &'s self,
        m: &'s SharedMat<'_>,
        rows: Range<usize>,
        cols: Range<usize>,
    ) -> MatMut<'s> {
        self.write_many(m, &[(rows, cols)]).pop().expect("one view")
    }

    /// Shared view of a declared read region that this task does not write.
    pub fn read<'s>(
        &'s self,
        m: &'s SharedMat<'_>,
        rows: Range<usize>,
        cols: Range<usize>,
    ) -> MatRef<'s> {
        let r = Region::new(m.id, rows, cols);
        m.check_bounds(&r);
        assert!(
            r.is_empty() || self.reads.iter().chain(self.writes).any(|d| d.contains(&r)),
            "task {}: {r} not inside a declared read",
            self.id
        );
        assert!(
            !self.writes.iter().any(|w| w.intersects(&r)),
            "task {}: read {r} overlaps its own writes",
            self.id
        );
        // SAFETY: as for write_many; nobody writes this region concurrently.
        unsafe { MatRef::from_raw(m.ptr.add(m.offset(&r)), r.rows.len(), r.cols.len(), m.ld) }
    }
}

type Body<'a> = Box<dyn FnOnce(&TaskCtx<'_>) -> Result<()> + Send + 'a>;

/// A unit of work with its declared data footprint.
pub struct Task<'a> {
    pub id: String,
    pub kind: TaskKind,
    pub iter: usize,
    pub reads: Vec<Region>,
    pub writes: Vec<Region>,
    body: Body<'a>,
}

impl<'a> Task<'a> {
    pub fn new(
        id: impl Into<String>,
        kind: TaskKind,
        iter: usize,
        body: impl FnOnce(&TaskCtx<'_>) -> Result<()> + Send + 'a,
    ) -> Self {
        Task {
            id: id.into(),
            kind,
            iter,
            reads: Vec::new(),
            writes: Vec::new(),
            body: Box::new(body),
        }
    }

    pub fn reads(mut self, r: Region) -> Self {
        if !r.is_empty() {
            self.reads.push(r);
        }
        self
    }

    pub fn writes(mut self, r: Region) -> Self {
        if !r.is_empty() {
            self.writes.push(r);
        }
        self
    }
}

impl fmt::Debug for Task<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Task")
            .field("id", &self.id)
            .field("kind", &self.kind)
            .field("iter", &self.iter)
            .field("reads", &self.reads)
            .field("writes", &self.writes)
            .finish()
    }
}

/// One look-ahead phase: `seq` runs in order on T_S while `par` runs in order
/// on T_P.
#[derive(Debug, Default)]
pub struct PhasePlan<'a> {
    pub label: String,
    pub seq: Vec<Task<'a>>,
    pub par: Vec<Task<'a>>,
}

impl<'a> PhasePlan<'a> {
    pub fn new(label: impl Into<String>) -> Self {
        PhasePlan {
            label: label.into(),
            seq: Vec::new(),
            par: Vec::new(),
        }
    }

    pub fn seq(mut self, t: Task<'a>) -> Self {
        self.seq.push(t);
        self
    }

    pub fn par(mut self, t: Task<'a>) -> Self {
        self.par.push(t);
        self
    }

    /// Rejects intersecting footprints across the two lists.
    pub fn validate(&self) -> Result<()> {
        for s in &self.seq {
            for p in &self.par {
                let checks: [(&[Region], &[Region], &'static str); 3] = [
                    (&s.writes, &p.writes, "writes"),
                    (&s.writes, &p.reads, "T_S write / T_P read"),
                    (&s.reads, &p.writes, "T_S read / T_P write"),
                ];
                for (xs, ys, what) in checks {
                    for x in xs {
                        if let Some(y) = ys.iter().find(|y| x.intersects(y)) {
                            return Err(Error::Conflict {
                                phase: self.label.clone(),
                                what,
                                a: x.clone(),
                                b: y.clone(),
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub phase: usize,
    pub phase_label: String,
    pub task_id: String,
    pub kind: TaskKind,
    pub iter: usize,
    pub group: Group,
    pub start: u64,
    pub end: u64,
    pub reads: Vec<Region>,
    pub writes: Vec<Region>,
}

/// Ordered task records with logical start/end ticks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventTrace {
    pub events: Vec<Event>,
}

impl EventTrace {
    pub fn find(&self, task_id: &str) -> Option<&Event> {
        self.events.iter().find(|e| e.task_id == task_id)
    }

    pub fn phase(&self, phase: usize) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(move |e| e.phase == phase)
    }

    pub fn phases(&self) -> Vec<usize> {
        let mut p: Vec<usize> = self.events.iter().map(|e| e.phase).collect();
        p.dedup();
        p
    }

    /// Writes `task_id<TAB>group<TAB>start<TAB>end`, one event per line.
    pub fn dump(&self, mut out: impl Write) -> std::io::Result<()> {
        for e in &self.events {
            writeln!(out, "{}\t{}\t{}\t{}", e.task_id, e.group, e.start, e.end)?;
        }
        Ok(())
    }
}

/// Owns the worker partition, the flop counters and the event trace.
#[derive(Debug)]
pub struct Runtime {
    groups: ExecGroups,
    flops: FlopCounter,
    tick: AtomicU64,
    phase: AtomicUsize,
    trace: Mutex<Vec<Event>>,
}

impl Runtime {
    pub fn new(groups: ExecGroups) -> Self {
        Runtime {
            groups,
            flops: FlopCounter::new(),
            tick: AtomicU64::new(0),
            phase: AtomicUsize::new(0),
            trace: Mutex::new(Vec::new()),
        }
    }

    /// Single worker, no look-ahead group.
    pub fn serial() -> Self {
        Self::new(ExecGroups::new(1, 0).expect("valid"))
    }

    pub fn groups(&self) -> ExecGroups {
        self.groups
    }

    pub fn flop_counter(&self) -> &FlopCounter {
        &self.flops
    }

    pub fn snapshot_flops(&self) -> FlopSnapshot {
        self.flops.snapshot()
    }

    pub fn reset_flops(&self) {
        self.flops.reset()
    }

    /// Kernel context using every worker.
    pub fn ctx_all(&self) -> Ctx<'_> {
        Ctx::new(self.groups.total_workers(), &self.flops)
    }

    pub fn trace(&self) -> EventTrace {
        EventTrace {
            events: self.trace.lock().expect("trace lock").clone(),
        }
    }

    pub fn take_trace(&self) -> EventTrace {
        EventTrace {
            events: std::mem::take(&mut *self.trace.lock().expect("trace lock")),
        }
    }

    /// All tasks submitted so far have completed when this returns. Phases
    /// are synchronous, so this only marks a tick boundary.
    pub fn barrier(&self) {
        self.tick.fetch_add(1, Ordering::SeqCst);
    }

    fn run_list(
        &self,
        tasks: Vec<Task<'_>>,
        group: Group,
        workers: usize,
        phase: usize,
        label: &str,
    ) -> (Vec<Event>, Result<()>) {
        let mut events = Vec::with_capacity(tasks.len());
        for t in tasks {
            let Task {
                id,
                kind,
                iter,
                reads,
                writes,
                body,
            } = t;
            let ctx = TaskCtx {
                kern: Ctx::new(workers, &self.flops),
                id: &id,
                reads: &reads,
                writes: &writes,
                taken: Cell::new(0),
            };
            let start = self.tick.fetch_add(1, Ordering::SeqCst);
            let res = body(&ctx);
            let end = self.tick.fetch_add(1, Ordering::SeqCst);
            events.push(Event {
                phase,
                phase_label: label.to_string(),
                task_id: id,
                kind,
                iter,
                group,
                start,
                end,
                reads,
                writes,
            });
            if let Err(e) = res {
                return (events, Err(e));
            }
        }
        (events, Ok(()))
    }

    fn record(&self, mut events: Vec<Event>) -> EventTrace {
        events.sort_by_key(|e| e.start);
        self.trace
            .lock()
            .expect("trace lock")
            .extend(events.iter().cloned());
        EventTrace { events }
    }

    /// Runs `plan.seq` on T_S concurrently with `plan.par` on T_P and returns
    /// once both lists have finished.
    pub fn run_phase(&self, plan: PhasePlan<'_>) -> Result<EventTrace> {
        plan.validate()?;
        let PhasePlan { label, seq, par } = plan;
        let phase = self.phase.fetch_add(1, Ordering::SeqCst);
        let g = self.groups;
        let (seq_out, par_out) = if g.ts_count() == 0 {
            let s = self.run_list(seq, Group::Ts, g.total_workers(), phase, &label);
            if s.1.is_err() {
                (s, (Vec::new(), Ok(())))
            } else {
                let p = self.run_list(par, Group::Tp, g.total_workers(), phase, &label);
                (s, p)
            }
        } else {
            std::thread::scope(|sc| {
                let label = &label;
                let h = sc.spawn(move || self.run_list(seq, Group::Ts, g.ts_count(), phase, label));
                let p = self.run_list(par, Group::Tp, g.tp_count(), phase, label);
                let s = match h.join() {
                    Ok(s) => s,
                    Err(panic) => std::panic::resume_unwind(panic),
                };
                (s, p)
            })
        };
        let mut events = seq_out.0;
        events.extend(par_out.0);
        let trace = self.record(events);
        seq_out.1?;
        par_out.1?;
        Ok(trace)
    }

    /// Runs `tasks` in order on all workers (no look-ahead).
    pub fn run_sequence(&self, label: &str, tasks: Vec<Task<'_>>) -> Result<EventTrace> {
        let phase = self.phase.fetch_add(1, Ordering::SeqCst);
        let (events, res) =
            self.run_list(tasks, Group::All, self.groups.total_workers(), phase, label);
        let trace = self.record(events);
        res?;
        Ok(trace)
    }
}
