//! Scheduling policies: random (RS), round-robin (RRS), locality-aware (LS)
//! and locality-aware with data re-layout (LSM).
//!
//! RS, LS and LSM produce a [`StaticSchedule`] up front. RRS is dynamic and
//! is carried out by the engine; here it is only a descriptor.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{ExtendedProcessGraph, GlobalId, SharingMatrix};

pub const DEFAULT_QUANTUM: u64 = 50_000;

/// Which candidate the LS initialization step drops while the independent
/// set is larger than the core count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum TrimRule {
    /// Drop the candidate sharing the most with the other candidates.
    #[default]
    RemoveMax,
    /// Drop the candidate sharing the least.
    RemoveMin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchedulerKind {
    Random { seed: u64 },
    RoundRobin { quantum: u64 },
    Locality { trim: TrimRule },
    LocalityMapped { trim: TrimRule },
}

impl SchedulerKind {
    pub fn name(&self) -> &'static str {
        match self {
            SchedulerKind::Random { .. } => "RS",
            SchedulerKind::RoundRobin { .. } => "RRS",
            SchedulerKind::Locality { .. } => "LS",
            SchedulerKind::LocalityMapped { .. } => "LSM",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SchedulerKind::RoundRobin { quantum: 0 } => {
                Err(Error::Contract("round-robin quantum must be at least 1 cycle".into()))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    Run(GlobalId),
    /// The core had nothing eligible in this round.
    Idle,
}

/// Per-core ordered queues.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StaticSchedule {
    queues: Vec<Vec<Slot>>,
    /// Global placement order; a topological order of the graph.
    order: Vec<GlobalId>,
}

impl StaticSchedule {
    fn empty(cores: usize) -> Self {
        StaticSchedule {
            queues: vec![Vec::new(); cores],
            order: Vec::new(),
        }
    }

    /// Builds a schedule from explicit per-core queues. Placement order is
    /// round by round, cores ascending.
    pub fn from_queues(queues: Vec<Vec<GlobalId>>) -> Self {
        let mut s = StaticSchedule::empty(queues.len());
        let rounds = queues.iter().map(Vec::len).max().unwrap_or(0);
        for r in 0..rounds {
            for (c, q) in queues.iter().enumerate() {
                if let Some(&p) = q.get(r) {
                    s.place(c, p);
                }
            }
        }
        s
    }

    fn place(&mut self, core: usize, id: GlobalId) {
        self.queues[core].push(Slot::Run(id));
        self.order.push(id);
    }

    fn strip_trailing_idle(&mut self) {
        for q in &mut self.queues {
            while q.last() == Some(&Slot::Idle) {
                q.pop();
            }
        }
    }

    pub fn cores(&self) -> usize {
        self.queues.len()
    }

    pub fn queue(&self, core: usize) -> &[Slot] {
        &self.queues[core]
    }

    /// Processes on a core, idle markers dropped.
    pub fn processes_on(&self, core: usize) -> Vec<GlobalId> {
        self.queues[core]
            .iter()
            .filter_map(|s| match s {
                Slot::Run(p) => Some(*p),
                Slot::Idle => None,
            })
            .collect()
    }

    pub fn placement_order(&self) -> &[GlobalId] {
        &self.order
    }

    pub fn core_of(&self, id: GlobalId) -> Option<usize> {
        self.queues
            .iter()
            .position(|q| q.contains(&Slot::Run(id)))
    }

    /// Pairs of processes that run back to back on the same core.
    pub fn successive_pairs(&self) -> Vec<(GlobalId, GlobalId)> {
        (0..self.cores())
            .flat_map(|c| {
                let ps = self.processes_on(c);
                ps.windows(2).map(|w| (w[0], w[1])).collect::<Vec<_>>()
            })
            .collect()
    }

    /// Every process exactly once, and no process queued ahead of one of its
    /// ancestors on the same core.
    pub fn validate(&self, epg: &ExtendedProcessGraph) -> Result<()> {
        let mut seen = vec![false; epg.len()];
        for c in 0..self.cores() {
            let ps = self.processes_on(c);
            for (i, &p) in ps.iter().enumerate() {
                if p >= epg.len() {
                    return Err(Error::Reference(format!("schedule names unknown process {p}")));
                }
                if std::mem::replace(&mut seen[p], true) {
                    return Err(Error::Internal(format!("process {p} scheduled twice")));
                }
                if let Some(&later) = ps[i + 1..].iter().find(|&&q| epg.is_ancestor(q, p)) {
                    return Err(Error::Internal(format!(
                        "process {p} queued before its ancestor {later} on core {c}"
                    )));
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Internal(format!("process {missing} never scheduled")));
        }
        Ok(())
    }
}

impl fmt::Display for StaticSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (c, q) in self.queues.iter().enumerate() {
            let items: Vec<String> = q
                .iter()
                .map(|s| match s {
                    Slot::Run(p) => format!("P{p}"),
                    Slot::Idle => "-".to_string(),
                })
                .collect();
            writeln!(f, "c{c}: [{}]", items.join(", "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrimStep {
    pub removed: GlobalId,
    /// Row sums over the remaining candidates at the moment of removal.
    pub sums: Vec<(GlobalId, u64)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pick {
    pub round: usize,
    pub core: usize,
    pub prev: Option<GlobalId>,
    pub chosen: Option<GlobalId>,
    /// Eligible processes with their sharing against `prev`.
    pub considered: Vec<(GlobalId, u64)>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DecisionLog {
    pub trims: Vec<TrimStep>,
    pub picks: Vec<Pick>,
}

impl DecisionLog {
    /// Line-oriented dump, one decision per line.
    pub fn to_text(&self) -> String {
        let fmt_pairs = |v: &[(GlobalId, u64)]| {
            v.iter()
                .map(|(p, s)| format!("P{p}:{s}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut out = String::new();
        for t in &self.trims {
            let _ = writeln!(out, "trim removed=P{} sums={}", t.removed, fmt_pairs(&t.sums));
        }
        for p in &self.picks {
            let prev = p.prev.map_or("-".to_string(), |v| format!("P{v}"));
            let chosen = p.chosen.map_or("idle".to_string(), |v| format!("P{v}"));
            let _ = writeln!(
                out,
                "round={} core={} prev={} chose={} considered={}",
                p.round,
                p.core,
                prev,
                chosen,
                fmt_pairs(&p.considered)
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LsOutcome {
    pub schedule: StaticSchedule,
    pub log: DecisionLog,
}

/// Shrinks `candidates` to `cores` entries. Returns the kept set and the
/// removed candidates in removal order.
pub fn ls_trim(
    candidates: &BTreeSet<GlobalId>,
    m: &SharingMatrix,
    cores: usize,
    rule: TrimRule,
) -> Result<(BTreeSet<GlobalId>, Vec<GlobalId>, Vec<TrimStep>)> {
    if candidates.len() <= cores {
        return Err(Error::Contract(format!(
            "trim called with {} candidates for {cores} cores",
            candidates.len()
        )));
    }
    let mut remaining = candidates.clone();
    let mut deferred = Vec::new();
    let mut steps = Vec::new();
    while remaining.len() > cores {
        let sums: Vec<(GlobalId, u64)> = remaining
            .iter()
            .map(|&p| (p, remaining.iter().map(|&q| m.get(p, q)).sum()))
            .collect();
        // iteration is ascending, so strict comparison keeps the lowest id on ties
        let mut best = sums[0];
        for &cand in &sums[1..] {
            let better = match rule {
                TrimRule::RemoveMax => cand.1 > best.1,
                TrimRule::RemoveMin => cand.1 < best.1,
            };
            if better {
                best = cand;
            }
        }
        remaining.remove(&best.0);
        deferred.push(best.0);
        steps.push(TrimStep { removed: best.0, sums });
    }
    Ok((remaining, deferred, steps))
}

/// Locality-aware static schedule.
pub fn ls_schedule(
    epg: &ExtendedProcessGraph,
    m: &SharingMatrix,
    cores: usize,
    rule: TrimRule,
) -> Result<LsOutcome> {
    check_inputs(epg, m, cores)?;
    let initial = epg.independent_set(&BTreeSet::new());
    let mut trims = Vec::new();
    let first: Vec<GlobalId> = if initial.len() > cores {
        let (kept, _, steps) = ls_trim(&initial, m, cores, rule)?;
        trims = steps;
        kept.into_iter().collect()
    } else {
        initial.into_iter().collect()
    };
    let mut outcome = ls_rounds(epg, m, cores, &first)?;
    outcome.log.trims = trims;
    Ok(outcome)
}

/// LS with the first round fixed by the caller: `first[c]` goes on core `c`.
/// The remaining rounds follow the normal greedy rule.
pub fn ls_schedule_pinned(
    epg: &ExtendedProcessGraph,
    m: &SharingMatrix,
    cores: usize,
    first: &[GlobalId],
) -> Result<LsOutcome> {
    check_inputs(epg, m, cores)?;
    if first.len() > cores {
        return Err(Error::Contract(format!(
            "{} pinned processes for {cores} cores",
            first.len()
        )));
    }
    let unique: BTreeSet<GlobalId> = first.iter().copied().collect();
    if unique.len() != first.len() {
        return Err(Error::Contract("pinned first round repeats a process".into()));
    }
    for &p in first {
        if p >= epg.len() || !epg.preds(p).is_empty() {
            return Err(Error::Contract(format!("pinned process {p} is not independent")));
        }
    }
    ls_rounds(epg, m, cores, first)
}

fn check_inputs(epg: &ExtendedProcessGraph, m: &SharingMatrix, cores: usize) -> Result<()> {
    if cores == 0 {
        return Err(Error::Contract("core count must be at least 1".into()));
    }
    if m.len() != epg.len() {
        return Err(Error::Contract(format!(
            "sharing matrix is {}x{} for {} processes",
            m.len(),
            m.len(),
            epg.len()
        )));
    }
    Ok(())
}

fn ls_rounds(
    epg: &ExtendedProcessGraph,
    m: &SharingMatrix,
    cores: usize,
    first: &[GlobalId],
) -> Result<LsOutcome> {
    let n = epg.len();
    let mut schedule = StaticSchedule::empty(cores);
    let mut log = DecisionLog::default();
    let mut placed = vec![false; n];
    let mut last: Vec<Option<GlobalId>> = vec![None; cores];
    for (c, &p) in first.iter().enumerate() {
        schedule.place(c, p);
        placed[p] = true;
        last[c] = Some(p);
    }
    let mut remaining = n - first.len();
    let mut round = 1;
    while remaining > 0 {
        // eligibility is frozen at the start of the round
        let before = placed.clone();
        let mut eligible: BTreeSet<GlobalId> = (0..n)
            .filter(|&q| !before[q] && epg.preds(q).iter().all(|&u| before[u]))
            .collect();
        if eligible.is_empty() {
            return Err(Error::Internal("no eligible process while some remain unplaced".into()));
        }
        #[allow(clippy::needless_range_loop)]
        for c in 0..cores {
            let prev = last[c];
            let considered: Vec<(GlobalId, u64)> = eligible
                .iter()
                .map(|&q| (q, prev.map_or(0, |p| m.get(p, q))))
                .collect();
            // ascending ids with a strict comparison: lowest id wins ties
            let mut chosen: Option<(GlobalId, u64)> = None;
            for &cand in &considered {
                if chosen.is_none_or(|best| cand.1 > best.1) {
                    chosen = Some(cand);
                }
            }
            let chosen = chosen.map(|(q, _)| q);
            match chosen {
                Some(q) => {
                    schedule.place(c, q);
                    eligible.remove(&q);
                    placed[q] = true;
                    last[c] = Some(q);
                    remaining -= 1;
                }
                None => schedule.queues[c].push(Slot::Idle),
            }
            log.picks.push(Pick {
                round,
                core: c,
                prev,
                chosen,
                considered,
            });
        }
        round += 1;
    }
    schedule.strip_trailing_idle();
    Ok(LsOutcome { schedule, log })
}

/// Random static schedule: a uniformly random ready process goes to a
/// uniformly random core, until every process is placed.
pub fn rs_policy(epg: &ExtendedProcessGraph, cores: usize, seed: u64) -> Result<StaticSchedule> {
    if cores == 0 {
        return Err(Error::Contract("core count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut schedule = StaticSchedule::empty(cores);
    let mut placed = BTreeSet::new();
    while placed.len() < epg.len() {
        let ready: Vec<GlobalId> = epg.independent_set(&placed).into_iter().collect();
        let p = ready[rng.gen_range(0..ready.len())];
        let c = rng.gen_range(0..cores);
        schedule.place(c, p);
        placed.insert(p);
    }
    Ok(schedule)
}

/// Runtime parameters of round-robin; the engine executes it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundRobinPolicy {
    pub quantum: u64,
}

pub fn rrs_policy(quantum: u64) -> Result<RoundRobinPolicy> {
    if quantum == 0 {
        return Err(Error::Contract("round-robin quantum must be at least 1 cycle".into()));
    }
    Ok(RoundRobinPolicy { quantum })
}
