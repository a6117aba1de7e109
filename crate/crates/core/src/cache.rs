//! Trace generation and a set-associative LRU cache.

use std::fmt::Write as _;

use crate::access::{AccessMode, ArrayDecl};
use crate::graph::Process;
use crate::layout::{set_index, AddressMap, CacheGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AccessKind {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TraceEvent {
    pub addr: u64,
    pub kind: AccessKind,
}

/// Memory events of one process in loop order. Within an iteration the refs
/// are visited in declaration order; a read-write ref emits its read first.
pub fn generate_trace(process: &Process, arrays: &[ArrayDecl], map: &AddressMap) -> Vec<TraceEvent> {
    let per_point: usize = process
        .refs
        .iter()
        .map(|r| if r.mode == AccessMode::ReadWrite { 2 } else { 1 })
        .sum();
    let mut trace = Vec::with_capacity(per_point * process.space.len() as usize);
    let _ = process.space.for_each_point(|point| {
        for r in &process.refs {
            let linear = r
                .element_at(&arrays[r.array], point)
                .expect("references are validated against their iteration space");
            let addr = map.addr(r.array, linear);
            match r.mode {
                AccessMode::Read => trace.push(TraceEvent { addr, kind: AccessKind::Read }),
                AccessMode::Write => trace.push(TraceEvent { addr, kind: AccessKind::Write }),
                AccessMode::ReadWrite => {
                    trace.push(TraceEvent { addr, kind: AccessKind::Read });
                    trace.push(TraceEvent { addr, kind: AccessKind::Write });
                }
            }
        }
        Ok::<(), ()>(())
    });
    trace
}

/// One event per line, `R 0x...` or `W 0x...`.
pub fn dump_trace(trace: &[TraceEvent]) -> String {
    let mut out = String::with_capacity(trace.len() * 12);
    for e in trace {
        let k = match e.kind {
            AccessKind::Read => 'R',
            AccessKind::Write => 'W',
        };
        let _ = writeln!(out, "{k} {:#x}", e.addr);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Latency {
    pub hit: u64,
    pub miss: u64,
}

impl Default for Latency {
    fn default() -> Self {
        Latency { hit: 2, miss: 75 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccessOutcome {
    pub hit: bool,
    pub cycles: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimStats {
    pub hits: u64,
    pub misses: u64,
    pub cycles: u64,
}

impl SimStats {
    pub fn accesses(&self) -> u64 {
        self.hits + self.misses
    }

    pub(crate) fn record(&mut self, outcome: AccessOutcome) {
        if outcome.hit {
            self.hits += 1;
        } else {
            self.misses += 1;
        }
        self.cycles += outcome.cycles;
    }
}

impl std::ops::AddAssign for SimStats {
    fn add_assign(&mut self, rhs: Self) {
        self.hits += rhs.hits;
        self.misses += rhs.misses;
        self.cycles += rhs.cycles;
    }
}

/// Write-allocate LRU cache. Each set lists its line tags most recent first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheState {
    geometry: CacheGeometry,
    latency: Latency,
    sets: Vec<Vec<u64>>,
}

impl CacheState {
    pub fn new(geometry: CacheGeometry, latency: Latency) -> Self {
        CacheState {
            geometry,
            latency,
            sets: vec![Vec::with_capacity(geometry.associativity() as usize); geometry.num_sets() as usize],
        }
    }

    pub fn geometry(&self) -> &CacheGeometry {
        &self.geometry
    }

    /// Line tags of one set, most recently used first.
    pub fn set(&self, index: usize) -> &[u64] {
        &self.sets[index]
    }

    pub fn contains(&self, addr: u64) -> bool {
        let tag = self.geometry.line_of(addr);
        self.sets[set_index(addr, &self.geometry) as usize].contains(&tag)
    }

    pub fn access(&mut self, addr: u64) -> AccessOutcome {
        let tag = self.geometry.line_of(addr);
        let ways = self.geometry.associativity() as usize;
        let set = &mut self.sets[set_index(addr, &self.geometry) as usize];
        match set.iter().position(|&t| t == tag) {
            Some(pos) => {
                set[..=pos].rotate_right(1);
                AccessOutcome { hit: true, cycles: self.latency.hit }
            }
            None => {
                if set.len() == ways {
                    set.pop();
                }
                set.insert(0, tag);
                AccessOutcome { hit: false, cycles: self.latency.miss }
            }
        }
    }

    /// Order-sensitive digest of the contents.
    pub fn checksum(&self) -> u64 {
        // FNV-1a over (set, tag) in MRU order
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (i, set) in self.sets.iter().enumerate() {
            for &t in set {
                for v in [i as u64, t] {
                    for byte in v.to_le_bytes() {
                        h ^= byte as u64;
                        h = h.wrapping_mul(0x0100_0000_01b3);
                    }
                }
            }
        }
        h
    }
}

/// Runs a trace through `state`, which keeps its contents for the next call.
pub fn simulate(trace: &[TraceEvent], state: &mut CacheState) -> SimStats {
    let mut stats = SimStats::default();
    for e in trace {
        stats.record(state.access(e.addr));
    }
    stats
}
