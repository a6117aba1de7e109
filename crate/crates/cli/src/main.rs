use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use locality_sched::cache::dump_trace;
use locality_sched::engine::traces;
use locality_sched::{
    base_layout, build_sharing_matrix, compute_conflict_matrix, ls_schedule, merge_workloads, parse_workload,
    plan_layout, rs_policy, ArrayRelation, CacheGeometry, Latency, Report, SchedulerKind, SimConfig,
    StaticSchedule, TrimRule, Workload,
};

#[derive(Parser)]
#[command(name = "locsched", version, about = "Locality-aware multicore scheduling and cache simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the process sharing matrix.
    SharingMatrix(Opts),
    /// Print the array conflict matrix under the base layout.
    ConflictMatrix(Opts),
    /// Print the conflict matrix, threshold and re-layout decisions.
    RelayoutPlan(Opts),
    /// Schedule and simulate one workload under one policy.
    Simulate(Opts),
    /// Run every policy on the first 1, 2, ... n workloads merged together.
    Sweep(Opts),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Policy {
    Rs,
    Rrs,
    Ls,
    Lsm,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Trim {
    Max,
    Min,
}

#[derive(Args)]
struct Opts {
    /// Workload file; repeat for sweep.
    #[arg(long = "workload", value_name = "PATH", required = true)]
    workloads: Vec<PathBuf>,
    /// Scheduling policy; repeat for sweep (default: all).
    #[arg(long = "policy", value_enum)]
    policies: Vec<Policy>,
    #[arg(long, default_value_t = 8)]
    cores: usize,
    #[arg(long = "cache-size", value_name = "BYTES", default_value_t = 8192)]
    cache_size: u64,
    #[arg(long, default_value_t = 2)]
    assoc: u64,
    #[arg(long, value_name = "BYTES", default_value_t = 32)]
    line: u64,
    /// Default element size for arrays that do not declare one.
    #[arg(long, value_name = "BYTES", default_value_t = 4)]
    elem: u64,
    /// Round-robin time slice.
    #[arg(long, value_name = "CYCLES", default_value_t = 50_000)]
    quantum: u64,
    #[arg(long = "hit-cycles", default_value_t = 2)]
    hit_cycles: u64,
    #[arg(long = "miss-cycles", default_value_t = 75)]
    miss_cycles: u64,
    #[arg(long = "trim-rule", value_enum, default_value_t = Trim::Max)]
    trim_rule: Trim,
    #[arg(long, value_name = "U64", default_value_t = 0)]
    seed: u64,
    /// Write CSV output to this file.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Print CSV instead of text.
    #[arg(long)]
    csv: bool,
    /// simulate: write the LS decision log to this file.
    #[arg(long, value_name = "PATH")]
    log: Option<PathBuf>,
    /// simulate: dump one memory trace per process into this directory.
    #[arg(long = "trace-dir", value_name = "DIR")]
    trace_dir: Option<PathBuf>,
}

impl Opts {
    fn geometry(&self) -> Result<CacheGeometry> {
        Ok(CacheGeometry::new(self.cache_size, self.assoc, self.line)?)
    }

    fn config(&self) -> Result<SimConfig> {
        let cfg = SimConfig {
            cores: self.cores,
            geometry: self.geometry()?,
            latency: Latency {
                hit: self.hit_cycles,
                miss: self.miss_cycles,
            },
            quantum: self.quantum,
            ..SimConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn trim(&self) -> TrimRule {
        match self.trim_rule {
            Trim::Max => TrimRule::RemoveMax,
            Trim::Min => TrimRule::RemoveMin,
        }
    }

    fn kind(&self, p: Policy) -> SchedulerKind {
        match p {
            Policy::Rs => SchedulerKind::Random { seed: self.seed },
            Policy::Rrs => SchedulerKind::RoundRobin { quantum: self.quantum },
            Policy::Ls => SchedulerKind::Locality { trim: self.trim() },
            Policy::Lsm => SchedulerKind::LocalityMapped { trim: self.trim() },
        }
    }

    fn single_workload(&self) -> Result<Workload> {
        if self.workloads.len() != 1 {
            bail!("this command takes exactly one --workload, got {}", self.workloads.len());
        }
        Ok(parse_workload(&self.workloads[0], self.elem)?)
    }

    fn at_most_one_policy(&self) -> Result<Option<Policy>> {
        match self.policies.as_slice() {
            [] => Ok(None),
            [p] => Ok(Some(*p)),
            _ => bail!("this command takes at most one --policy"),
        }
    }

    /// Static schedule used to relate arrays, if the policy produces one.
    fn schedule(&self, w: &Workload, policy: Option<Policy>) -> Result<Option<StaticSchedule>> {
        Ok(match policy {
            Some(Policy::Ls | Policy::Lsm) => {
                let m = build_sharing_matrix(w.epg.processes(), &w.arrays)?;
                Some(ls_schedule(&w.epg, &m, self.cores, self.trim())?.schedule)
            }
            Some(Policy::Rs) => Some(rs_policy(&w.epg, self.cores, self.seed)?),
            Some(Policy::Rrs) | None => None,
        })
    }
}

fn emit(opts: &Opts, text: &str, csv: &str) -> Result<()> {
    if let Some(path) = &opts.out {
        fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?;
    }
    print!("{}", if opts.csv { csv } else { text });
    Ok(())
}

fn process_labels(w: &Workload) -> Vec<String> {
    (0..w.epg.len()).map(|i| w.process_label(i).to_string()).collect()
}

fn array_labels(w: &Workload) -> Vec<String> {
    w.arrays.iter().map(|a| a.name.clone()).collect()
}

fn sharing_matrix(opts: &Opts) -> Result<()> {
    let w = opts.single_workload()?;
    let m = build_sharing_matrix(w.epg.processes(), &w.arrays)?;
    let labels = process_labels(&w);
    emit(opts, &m.to_text(&labels), &m.to_csv(&labels))
}

fn conflict_matrix(opts: &Opts) -> Result<()> {
    let w = opts.single_workload()?;
    let g = opts.geometry()?;
    let policy = opts.at_most_one_policy()?;
    let data_sets = w.data_sets()?;
    let schedule = opts.schedule(&w, policy)?;
    let relation = ArrayRelation::from_schedule(&w, &data_sets, schedule.as_ref());
    let map = base_layout(&w.arrays, &g)?;
    let m = compute_conflict_matrix(&w.arrays, &data_sets, &map, &relation);
    let labels = array_labels(&w);
    emit(opts, &m.to_text(&labels), &m.to_csv(&labels))
}

fn relayout_plan(opts: &Opts) -> Result<()> {
    let w = opts.single_workload()?;
    let g = opts.geometry()?;
    let policy = opts.at_most_one_policy()?.or(Some(Policy::Ls));
    let data_sets = w.data_sets()?;
    let schedule = opts.schedule(&w, policy)?;
    let summary = plan_layout(&w, &data_sets, schedule.as_ref(), &g)?;
    let labels = array_labels(&w);
    let mut text = summary.conflicts.to_text(&labels);
    text.push_str(&format!("threshold: {}\n", summary.threshold));
    if summary.plan.is_noop() {
        text.push_str("plan: no array is re-laid out\n");
    } else {
        for (a, half) in summary.plan.relayouted() {
            text.push_str(&format!("relayout {} b={}\n", labels[a], half.offset(&g)));
        }
    }
    let csv = summary.map.report_csv(&w.arrays);
    text.push('\n');
    text.push_str(&csv);
    emit(opts, &text, &csv)
}

fn simulate(opts: &Opts) -> Result<()> {
    let w = opts.single_workload()?;
    let cfg = opts.config()?;
    let Some(policy) = opts.at_most_one_policy()? else {
        bail!("simulate needs --policy");
    };
    let report = locality_sched::run(&w, opts.kind(policy), &cfg)?;
    report.check_consistency()?;
    if let Some(path) = &opts.log {
        let log = report.decisions.as_ref().map(|d| d.to_text()).unwrap_or_default();
        fs::write(path, log).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(dir) = &opts.trace_dir {
        write_traces(&w, &report, &cfg, dir)?;
    }
    emit(opts, &report.to_text(&w), &report.to_csv())
}

fn write_traces(w: &Workload, report: &Report, cfg: &SimConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let map = match &report.layout {
        Some(l) => l.map.clone(),
        None => base_layout(&w.arrays, &cfg.geometry)?,
    };
    for (i, t) in traces(w, &map).iter().enumerate() {
        let path = dir.join(format!("{}.trace", w.process_label(i)));
        fs::write(&path, dump_trace(t)).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

const SWEEP_HEADER: &str = "tasks,policy,cores,hits,misses,conflict_misses,busy_cycles,idle_cycles,makespan_cycles";

fn sweep(opts: &Opts) -> Result<()> {
    let cfg = opts.config()?;
    let parts = opts
        .workloads
        .iter()
        .map(|p| parse_workload(p, opts.elem))
        .collect::<locality_sched::Result<Vec<_>>>()?;
    let policies = if opts.policies.is_empty() {
        vec![Policy::Rs, Policy::Rrs, Policy::Ls, Policy::Lsm]
    } else {
        opts.policies.clone()
    };
    let mut csv = format!("{SWEEP_HEADER}\n");
    let mut text = String::from("tasks policy    makespan        hits      misses    conflict\n");
    for t in 1..=parts.len() {
        let merged = merge_workloads(&parts[..t])?;
        for &p in &policies {
            let r = locality_sched::run(&merged, opts.kind(p), &cfg)?;
            let busy: u64 = r.cores.iter().map(|c| c.busy_cycles).sum();
            let idle: u64 = r.cores.iter().map(|c| c.idle_cycles).sum();
            csv.push_str(&format!(
                "{t},{},{},{},{},{},{busy},{idle},{}\n",
                r.policy,
                cfg.cores,
                r.total_hits(),
                r.total_misses(),
                r.conflict_misses(),
                r.completion_cycles
            ));
            text.push_str(&format!(
                "{t:>5} {:<6} {:>11} {:>11} {:>11} {:>11}\n",
                r.policy,
                r.completion_cycles,
                r.total_hits(),
                r.total_misses(),
                r.conflict_misses()
            ));
        }
    }
    emit(opts, &text, &csv)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::SharingMatrix(o) => sharing_matrix(o),
        Command::ConflictMatrix(o) => conflict_matrix(o),
        Command::RelayoutPlan(o) => relayout_plan(o),
        Command::Simulate(o) => simulate(o),
        Command::Sweep(o) => sweep(o),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
