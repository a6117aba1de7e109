//! Locality-aware process scheduling for multicores with private caches.
//!
//! The crate models processes as affine loop nests over arrays, measures how
//! much data pairs of processes share, schedules them so that processes
//! sharing data run back to back on the same core, optionally re-lays out
//! arrays so that conflicting arrays fall into disjoint cache-set halves, and
//! replays the result through a trace-driven set-associative LRU simulator.

pub mod access;
pub mod cache;
pub mod engine;
pub mod error;
pub mod graph;
pub mod layout;
pub mod matrix;
pub mod scheduler;
pub mod workload;

pub use access::{
    enumerate_data_set, sharing_size, AccessDescriptor, AccessMode, AffineExpr, ArrayDecl, ArrayId, DataSet,
    IterationSpace,
};
pub use cache::{generate_trace, simulate, AccessKind, AccessOutcome, CacheState, Latency, SimStats, TraceEvent};
pub use engine::{compare, comparison_table, run, run_schedule, CoreStats, ProcessStats, Report, SimConfig};
pub use error::{Error, Result};
pub use graph::{build_sharing_matrix, ExtendedProcessGraph, GlobalId, Process, ProcessId, Workload};
pub use layout::{
    apply_plan, base_layout, compute_conflict_matrix, default_threshold, plan_layout, relayout_select,
    remap_addr, set_index, AddressMap, ArrayRelation, CacheGeometry, HalfPage, LayoutPlan, LayoutSummary,
};
pub use matrix::{ConflictMatrix, SharingMatrix, SymmetricMatrix};
pub use scheduler::{
    ls_schedule, ls_schedule_pinned, ls_trim, rrs_policy, rs_policy, DecisionLog, LsOutcome, SchedulerKind, Slot,
    StaticSchedule, TrimRule,
};
pub use workload::{merge_workloads, parse_workload, parse_workload_str, to_json, WorkloadFile};
