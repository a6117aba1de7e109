//! Trace-driven execution of a workload on a multicore with private caches.
//!
//! Time is counted in cycles and advances by each access's latency; there is
//! no compute cost outside memory accesses. Caches start cold and are never
//! flushed, so a core's next process sees whatever the previous one left.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet, VecDeque};
use std::fmt::Write as _;

use crate::access::DataSet;
use crate::cache::{generate_trace, CacheState, Latency, SimStats, TraceEvent};
use crate::error::{Error, Result};
use crate::graph::{sharing_matrix_from_sets, GlobalId, Workload};
use crate::layout::{base_layout, plan_layout, AddressMap, CacheGeometry, LayoutSummary};
use crate::scheduler::{
    ls_schedule, rrs_policy, rs_policy, DecisionLog, SchedulerKind, Slot, StaticSchedule, DEFAULT_QUANTUM,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    pub cores: usize,
    pub geometry: CacheGeometry,
    pub latency: Latency,
    /// Round-robin time slice in cycles.
    pub quantum: u64,
    /// Only used to convert cycles to time in reports.
    pub clock_mhz: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            cores: 8,
            geometry: CacheGeometry::default(),
            latency: Latency::default(),
            quantum: DEFAULT_QUANTUM,
            clock_mhz: 200,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cores == 0 {
            return Err(Error::Contract("core count must be at least 1".into()));
        }
        if self.latency.hit == 0 || self.latency.miss == 0 {
            return Err(Error::Contract("latencies must be at least 1 cycle".into()));
        }
        if self.quantum == 0 {
            return Err(Error::Contract("quantum must be at least 1 cycle".into()));
        }
        if self.clock_mhz == 0 {
            return Err(Error::Contract("clock must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CoreStats {
    pub hits: u64,
    pub misses: u64,
    pub busy_cycles: u64,
    pub idle_cycles: u64,
    /// Distinct lines this core ever touched: its compulsory misses.
    pub distinct_lines: u64,
}

impl CoreStats {
    /// Misses beyond the first touch of each line.
    pub fn conflict_misses(&self) -> u64 {
        self.misses - self.distinct_lines
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ProcessStats {
    /// Core the process finished on.
    pub core: usize,
    pub start: u64,
    pub finish: u64,
    pub hits: u64,
    pub misses: u64,
    pub preemptions: u64,
    /// Cache digest of the core when the process first started, and when it
    /// last stopped.
    pub start_checksum: u64,
    pub end_checksum: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    pub policy: String,
    pub completion_cycles: u64,
    pub clock_mhz: u64,
    pub cores: Vec<CoreStats>,
    pub processes: Vec<ProcessStats>,
    pub schedule: Option<StaticSchedule>,
    pub decisions: Option<DecisionLog>,
    pub layout: Option<LayoutSummary>,
}

impl Report {
    pub fn total_hits(&self) -> u64 {
        self.cores.iter().map(|c| c.hits).sum()
    }

    pub fn total_misses(&self) -> u64 {
        self.cores.iter().map(|c| c.misses).sum()
    }

    pub fn conflict_misses(&self) -> u64 {
        self.cores.iter().map(CoreStats::conflict_misses).sum()
    }

    pub fn completion_micros(&self) -> f64 {
        self.completion_cycles as f64 / self.clock_mhz as f64
    }

    /// Checks the report's own bookkeeping.
    pub fn check_consistency(&self) -> Result<()> {
        let ph: u64 = self.processes.iter().map(|p| p.hits).sum();
        let pm: u64 = self.processes.iter().map(|p| p.misses).sum();
        if ph != self.total_hits() || pm != self.total_misses() {
            return Err(Error::Internal("per-core and per-process counts disagree".into()));
        }
        for (i, p) in self.processes.iter().enumerate() {
            if p.finish < p.start || p.finish > self.completion_cycles {
                return Err(Error::Internal(format!("process {i} has inconsistent times")));
            }
        }
        for (c, s) in self.cores.iter().enumerate() {
            if s.busy_cycles + s.idle_cycles != self.completion_cycles {
                return Err(Error::Internal(format!("core {c} busy + idle != makespan")));
            }
        }
        Ok(())
    }

    pub const CSV_HEADER: &'static str =
        "policy,scope,core,hits,misses,conflict_misses,busy_cycles,idle_cycles,makespan_cycles";

    /// Rows for each core plus a summary row, without the header.
    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for (c, s) in self.cores.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},core,{c},{},{},{},{},{},{}",
                self.policy,
                s.hits,
                s.misses,
                s.conflict_misses(),
                s.busy_cycles,
                s.idle_cycles,
                self.completion_cycles
            );
        }
        let busy: u64 = self.cores.iter().map(|c| c.busy_cycles).sum();
        let idle: u64 = self.cores.iter().map(|c| c.idle_cycles).sum();
        let _ = writeln!(
            out,
            "{},summary,,{},{},{},{busy},{idle},{}",
            self.policy,
            self.total_hits(),
            self.total_misses(),
            self.conflict_misses(),
            self.completion_cycles
        );
        out
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}", Self::CSV_HEADER, self.csv_rows())
    }

    pub fn to_text(&self, workload: &Workload) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "policy: {}", self.policy);
        let _ = writeln!(
            out,
            "makespan: {} cycles ({:.3} us at {} MHz)",
            self.completion_cycles,
            self.completion_micros(),
            self.clock_mhz
        );
        let _ = writeln!(
            out,
            "hits: {}  misses: {}  conflict misses: {}",
            self.total_hits(),
            self.total_misses(),
            self.conflict_misses()
        );
        let _ = writeln!(out, "\ncore       hits     misses       busy       idle");
        for (c, s) in self.cores.iter().enumerate() {
            let _ = writeln!(
                out,
                "{c:>4} {:>10} {:>10} {:>10} {:>10}",
                s.hits, s.misses, s.busy_cycles, s.idle_cycles
            );
        }
        let _ = writeln!(out, "\nprocess    core      start     finish       hits     misses  preempt");
        for (i, p) in self.processes.iter().enumerate() {
            let _ = writeln!(
                out,
                "{:<8} {:>6} {:>10} {:>10} {:>10} {:>10} {:>8}",
                workload.process_label(i),
                p.core,
                p.start,
                p.finish,
                p.hits,
                p.misses,
                p.preemptions
            );
        }
        if let Some(s) = &self.schedule {
            let _ = writeln!(out, "\nschedule:");
            for c in 0..s.cores() {
                let items: Vec<&str> = s
                    .queue(c)
                    .iter()
                    .map(|slot| match slot {
                        Slot::Run(p) => workload.process_label(*p),
                        Slot::Idle => "-",
                    })
                    .collect();
                let _ = writeln!(out, "  c{c}: [{}]", items.join(", "));
            }
        }
        if let Some(l) = &self.layout {
            let names: Vec<String> = workload.arrays.iter().map(|a| a.name.clone()).collect();
            let _ = writeln!(out, "\nlayout:");
            let _ = writeln!(out, "conflict threshold: {}", l.threshold);
            out.push_str(&l.conflicts.to_text(&names));
            out.push_str(&l.map.report_csv(&workload.arrays));
        }
        out
    }
}

/// Runs one policy on one workload.
pub fn run(workload: &Workload, kind: SchedulerKind, cfg: &SimConfig) -> Result<Report> {
    cfg.validate()?;
    kind.validate()?;
    let epg = &workload.epg;
    let data_sets: Vec<DataSet> = match kind {
        SchedulerKind::Locality { .. } | SchedulerKind::LocalityMapped { .. } => workload.data_sets()?,
        _ => Vec::new(),
    };
    let mut decisions = None;
    let mut layout = None;
    let (schedule, map) = match kind {
        SchedulerKind::Random { seed } => (
            Some(rs_policy(epg, cfg.cores, seed)?),
            base_layout(&workload.arrays, &cfg.geometry)?,
        ),
        SchedulerKind::RoundRobin { quantum } => {
            rrs_policy(quantum)?;
            (None, base_layout(&workload.arrays, &cfg.geometry)?)
        }
        SchedulerKind::Locality { trim } => {
            let m = sharing_matrix_from_sets(&data_sets);
            let out = ls_schedule(epg, &m, cfg.cores, trim)?;
            decisions = Some(out.log);
            (Some(out.schedule), base_layout(&workload.arrays, &cfg.geometry)?)
        }
        SchedulerKind::LocalityMapped { trim } => {
            let m = sharing_matrix_from_sets(&data_sets);
            let out = ls_schedule(epg, &m, cfg.cores, trim)?;
            let summary = plan_layout(workload, &data_sets, Some(&out.schedule), &cfg.geometry)?;
            let map = summary.map.clone();
            decisions = Some(out.log);
            layout = Some(summary);
            (Some(out.schedule), map)
        }
    };
    let traces = traces(workload, &map);
    let mut report = match (&schedule, kind) {
        (Some(s), _) => {
            s.validate(epg)?;
            run_static(workload, s, &traces, cfg)?
        }
        (None, SchedulerKind::RoundRobin { quantum }) => run_round_robin(workload, &traces, quantum, cfg)?,
        (None, _) => return Err(Error::Internal("static policy without a schedule".into())),
    };
    report.policy = kind.name().to_string();
    report.schedule = schedule;
    report.decisions = decisions;
    report.layout = layout;
    Ok(report)
}

/// Simulates a caller-supplied static schedule on the base layout.
pub fn run_schedule(workload: &Workload, schedule: &StaticSchedule, cfg: &SimConfig) -> Result<Report> {
    cfg.validate()?;
    schedule.validate(&workload.epg)?;
    let map = base_layout(&workload.arrays, &cfg.geometry)?;
    let mut report = run_static(workload, schedule, &traces(workload, &map), cfg)?;
    report.policy = "static".to_string();
    report.schedule = Some(schedule.clone());
    Ok(report)
}

/// Runs every policy on the same inputs.
pub fn compare(workload: &Workload, kinds: &[SchedulerKind], cfg: &SimConfig) -> Result<Vec<Report>> {
    kinds.iter().map(|&k| run(workload, k, cfg)).collect()
}

/// Side-by-side summary of several reports.
pub fn comparison_table(reports: &[Report]) -> String {
    let mut out = String::from("policy    makespan        hits      misses    conflict\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{:<6} {:>11} {:>11} {:>11} {:>11}",
            r.policy,
            r.completion_cycles,
            r.total_hits(),
            r.total_misses(),
            r.conflict_misses()
        );
    }
    out
}

pub fn traces(workload: &Workload, map: &AddressMap) -> Vec<Vec<TraceEvent>> {
    workload
        .epg
        .processes()
        .iter()
        .map(|p| generate_trace(p, &workload.arrays, map))
        .collect()
}

struct Core {
    cache: CacheState,
    stats: CoreStats,
    lines: HashSet<u64>,
}

impl Core {
    fn new(cfg: &SimConfig) -> Self {
        Core {
            cache: CacheState::new(cfg.geometry, cfg.latency),
            stats: CoreStats::default(),
            lines: HashSet::new(),
        }
    }

    /// Runs `trace` until it ends or `budget` cycles have elapsed, and
    /// returns the stats of the slice.
    fn execute(&mut self, trace: &[TraceEvent], pos: &mut usize, budget: u64) -> SimStats {
        let mut slice = SimStats::default();
        let line_size = self.cache.geometry().line_size();
        while *pos < trace.len() && slice.cycles < budget {
            let addr = trace[*pos].addr;
            slice.record(self.cache.access(addr));
            self.lines.insert(addr / line_size);
            *pos += 1;
        }
        self.stats.hits += slice.hits;
        self.stats.misses += slice.misses;
        self.stats.busy_cycles += slice.cycles;
        slice
    }
}

fn finish_report(mut cores: Vec<Core>, processes: Vec<ProcessStats>) -> Report {
    let makespan = processes.iter().map(|p| p.finish).max().unwrap_or(0);
    let cores: Vec<CoreStats> = cores
        .iter_mut()
        .map(|c| CoreStats {
            idle_cycles: makespan - c.stats.busy_cycles,
            distinct_lines: c.lines.len() as u64,
            ..c.stats
        })
        .collect();
    Report {
        policy: String::new(),
        completion_cycles: makespan,
        clock_mhz: 0,
        cores,
        processes,
        schedule: None,
        decisions: None,
        layout: None,
    }
}

/// Each core runs its queue in order; a process starts once its core is free
/// and all of its predecessors have finished, then runs to completion.
fn run_static(
    workload: &Workload,
    schedule: &StaticSchedule,
    traces: &[Vec<TraceEvent>],
    cfg: &SimConfig,
) -> Result<Report> {
    let epg = &workload.epg;
    let n = epg.len();
    let mut cores: Vec<Core> = (0..cfg.cores).map(|_| Core::new(cfg)).collect();
    if schedule.cores() != cfg.cores {
        return Err(Error::Internal("schedule and config disagree on core count".into()));
    }
    let mut finish: Vec<Option<u64>> = vec![None; n];
    let mut stats = vec![ProcessStats::default(); n];
    let mut head = vec![0usize; cfg.cores];
    let mut clock = vec![0u64; cfg.cores];
    let mut done = 0;
    while done < n {
        let mut progressed = false;
        for c in 0..cfg.cores {
            let queue = schedule.queue(c);
            while head[c] < queue.len() {
                let p = match queue[head[c]] {
                    Slot::Idle => {
                        head[c] += 1;
                        continue;
                    }
                    Slot::Run(p) => p,
                };
                let ready = epg.preds(p).iter().map(|&u| finish[u]).try_fold(0u64, |acc, f| f.map(|f| acc.max(f)));
                let Some(ready_at) = ready else { break };
                let start = clock[c].max(ready_at);
                let core = &mut cores[c];
                let start_checksum = core.cache.checksum();
                let mut pos = 0;
                let s = core.execute(&traces[p], &mut pos, u64::MAX);
                clock[c] = start + s.cycles;
                finish[p] = Some(clock[c]);
                stats[p] = ProcessStats {
                    core: c,
                    start,
                    finish: clock[c],
                    hits: s.hits,
                    misses: s.misses,
                    preemptions: 0,
                    start_checksum,
                    end_checksum: core.cache.checksum(),
                };
                head[c] += 1;
                done += 1;
                progressed = true;
            }
        }
        if !progressed && done < n {
            return Err(Error::Internal("static schedule stalled on an unsatisfiable dependence".into()));
        }
    }
    let mut report = finish_report(cores, stats);
    report.clock_mhz = cfg.clock_mhz;
    Ok(report)
}

struct RoundRobinState {
    cores: Vec<Core>,
    running: Vec<Option<GlobalId>>,
    ready: VecDeque<GlobalId>,
    pos: Vec<usize>,
    started: Vec<bool>,
    stats: Vec<ProcessStats>,
    events: BinaryHeap<Reverse<(u64, usize)>>,
}

impl RoundRobinState {
    /// Idle cores, lowest id first, take the head of the ready queue.
    fn dispatch(&mut self, now: u64, traces: &[Vec<TraceEvent>], quantum: u64) {
        for c in 0..self.cores.len() {
            if self.running[c].is_some() {
                continue;
            }
            let Some(p) = self.ready.pop_front() else { break };
            if !self.started[p] {
                self.started[p] = true;
                self.stats[p].start = now;
                self.stats[p].start_checksum = self.cores[c].cache.checksum();
            }
            let s = self.cores[c].execute(&traces[p], &mut self.pos[p], quantum);
            self.stats[p].hits += s.hits;
            self.stats[p].misses += s.misses;
            self.stats[p].core = c;
            self.running[c] = Some(p);
            self.events.push(Reverse((now + s.cycles, c)));
        }
    }
}

/// Round-robin over one global FIFO. An idle core takes the head of the
/// queue; after `quantum` cycles the process goes back to the tail and
/// later resumes from where it stopped, on whichever core picks it up.
fn run_round_robin(
    workload: &Workload,
    traces: &[Vec<TraceEvent>],
    quantum: u64,
    cfg: &SimConfig,
) -> Result<Report> {
    let epg = &workload.epg;
    let n = epg.len();
    let mut waiting: Vec<usize> = (0..n).map(|p| epg.preds(p).len()).collect();
    let mut st = RoundRobinState {
        cores: (0..cfg.cores).map(|_| Core::new(cfg)).collect(),
        running: vec![None; cfg.cores],
        ready: (0..n).filter(|&p| waiting[p] == 0).collect(),
        pos: vec![0; n],
        started: vec![false; n],
        stats: vec![ProcessStats::default(); n],
        events: BinaryHeap::new(),
    };
    let mut finished = 0;

    st.dispatch(0, traces, quantum);
    while let Some(Reverse((now, _))) = st.events.peek().copied() {
        while let Some(&Reverse((t, c))) = st.events.peek() {
            if t != now {
                break;
            }
            st.events.pop();
            let p = st.running[c].take().expect("event for an idle core");
            if st.pos[p] == traces[p].len() {
                st.stats[p].finish = now;
                st.stats[p].end_checksum = st.cores[c].cache.checksum();
                finished += 1;
                let mut succs = epg.succs(p).to_vec();
                succs.sort_unstable();
                for s in succs {
                    waiting[s] -= 1;
                    if waiting[s] == 0 {
                        st.ready.push_back(s);
                    }
                }
            } else {
                st.stats[p].preemptions += 1;
                st.ready.push_back(p);
            }
        }
        st.dispatch(now, traces, quantum);
    }
    let (cores, stats) = (st.cores, st.stats);
    if finished < n {
        return Err(Error::Internal("round-robin run ended with unfinished processes".into()));
    }
    let mut report = finish_report(cores, stats);
    report.clock_mhz = cfg.clock_mhz;
    Ok(report)
}
