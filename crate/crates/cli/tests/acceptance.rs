//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::{BTreeSet, HashSet};
use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use locality_sched::{
    base_layout, build_sharing_matrix, generate_trace, ls_schedule, ls_schedule_pinned, parse_workload,
    relayout_select, remap_addr, run, run_schedule, set_index, simulate, ArrayRelation, CacheGeometry,
    CacheState, HalfPage, Latency, SchedulerKind, SimConfig, StaticSchedule, SymmetricMatrix, TrimRule,
    Workload,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn workload_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../workloads").join(name)
}

fn load(name: &str) -> Result<Workload, String> {
    parse_workload(&workload_path(name), 4).map_err(|e| e.to_string())
}

fn locsched(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_locsched"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("locsched {args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    String::from_utf8(out.stdout).map_err(|e| e.to_string())
}

fn sharing_table() -> Outcome {
    let path = workload_path("prog1.workload");
    let start = Instant::now();
    let csv = locsched(&["sharing-matrix", "--csv", "--workload", path.to_str().unwrap()])?;
    let elapsed = start.elapsed();
    let rows: Vec<Vec<String>> = csv.lines().map(|l| l.split(',').map(String::from).collect()).collect();
    check(rows.len() == 9, format!("expected 9 CSV lines, got {}", rows.len()))?;
    for k in 0..8usize {
        check(rows[k + 1].len() == 9, format!("row {k} has {} fields", rows[k + 1].len()))?;
        for p in 0..8usize {
            let want = match k.abs_diff(p) {
                0 => "0",
                1 => "2000",
                2 => "1000",
                _ => "0",
            };
            check(rows[k + 1][p + 1] == want, format!("cell ({k},{p}) = {:?}, want {want:?}", rows[k + 1][p + 1]))?;
        }
    }
    check(elapsed < Duration::from_secs(1), format!("took {elapsed:?}"))?;
    let text = locsched(&["sharing-matrix", "--workload", path.to_str().unwrap()])?;
    let p0: Vec<&str> = text.lines().nth(1).unwrap_or("").split_whitespace().collect();
    check(p0 == ["P0", "2000", "1000", "0", "0", "0", "0", "0"], format!("text row P0 {p0:?}"))?;
    Ok(format!("8x8 table exact in {} ms", elapsed.as_millis()))
}

fn pinned_round() -> Outcome {
    let w = load("prog1.workload")?;
    let m = build_sharing_matrix(w.epg.processes(), &w.arrays).map_err(|e| e.to_string())?;
    let out = ls_schedule_pinned(&w.epg, &m, 4, &[0, 2, 4, 6]).map_err(|e| e.to_string())?;
    let second: Vec<usize> = (0..4).map(|c| out.schedule.processes_on(c)[1]).collect();
    check(second == vec![1, 3, 5, 7], format!("second round {second:?}"))?;
    Ok("next round P1,P3,P5,P7 on cores 0-3".into())
}

fn full_hand_trace() -> Outcome {
    let w = load("prog1.workload")?;
    let m = build_sharing_matrix(w.epg.processes(), &w.arrays).map_err(|e| e.to_string())?;
    let out = ls_schedule(&w.epg, &m, 4, TrimRule::RemoveMax).map_err(|e| e.to_string())?;
    let queues: Vec<Vec<usize>> = (0..4).map(|c| out.schedule.processes_on(c)).collect();
    check(
        queues == vec![vec![0, 1], vec![3, 2], vec![6, 5], vec![7, 4]],
        format!("schedule {queues:?}"),
    )?;
    for pick in &out.log.picks {
        let (Some(prev), Some(chosen)) = (pick.prev, pick.chosen) else {
            return Err(format!("incomplete pick {pick:?}"));
        };
        let best = pick.considered.iter().map(|&(_, s)| s).max().unwrap_or(0);
        check(m.get(prev, chosen) == best, format!("pick {pick:?} is not an arg-max"))?;
        let tied_lower = pick.considered.iter().any(|&(q, s)| s == best && q < chosen);
        check(!tied_lower, format!("pick {pick:?} ignores the lowest-id tie-break"))?;
    }
    Ok(format!("c0:[P0,P1] c1:[P3,P2] c2:[P6,P5] c3:[P7,P4], {} picks arg-max", out.log.picks.len()))
}

fn remap_properties() -> Outcome {
    let mut checked = 0u64;
    for page in [256u64, 4096] {
        let half = page / 2;
        let mut images: [Vec<u64>; 2] = [Vec::new(), Vec::new()];
        for (i, b) in [0, half].into_iter().enumerate() {
            let mut seen = HashSet::new();
            for rel in 0..16 * page {
                let got = remap_addr(rel, b, &CacheGeometry::new(2 * page, 2, 1).map_err(|e| e.to_string())?)
                    .map_err(|e| e.to_string())?;
                let want = (rel / half) * page + rel % half + b;
                check(got == want, format!("C={page} rel={rel} b={b}: {got} != {want}"))?;
                check(seen.insert(got), format!("C={page} b={b}: {got} hit twice"))?;
                images[i].push(got);
                checked += 1;
            }
        }
        let mut line = 1;
        while line <= half {
            let g = CacheGeometry::new(2 * page, 2, line).map_err(|e| e.to_string())?;
            let lower: BTreeSet<u64> = images[0].iter().map(|&a| set_index(a, &g)).collect();
            let upper: BTreeSet<u64> = images[1].iter().map(|&a| set_index(a, &g)).collect();
            check(lower.is_disjoint(&upper), format!("C={page} line={line}: set ranges overlap"))?;
            line *= 2;
        }
    }
    Ok(format!("{checked} offsets, closed form, injective, disjoint sets"))
}

/// Reference LRU: per-set (tag, last use) pairs, evict the oldest.
struct NaiveLru {
    ways: usize,
    line: u64,
    sets: Vec<Vec<(u64, u64)>>,
    now: u64,
}

impl NaiveLru {
    fn access(&mut self, addr: u64) -> bool {
        self.now += 1;
        let tag = addr / self.line;
        let n = self.sets.len() as u64;
        let set = &mut self.sets[(tag % n) as usize];
        if let Some(e) = set.iter_mut().find(|e| e.0 == tag) {
            e.1 = self.now;
            return true;
        }
        if set.len() == self.ways {
            let oldest = (0..set.len()).min_by_key(|&i| set[i].1).unwrap();
            set.remove(oldest);
        }
        set.push((tag, self.now));
        false
    }

    fn mru_first(&self, s: usize) -> Vec<u64> {
        let mut v = self.sets[s].clone();
        v.sort_by_key(|e| std::cmp::Reverse(e.1));
        v.into_iter().map(|e| e.0).collect()
    }
}

fn lru_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let geometries = 12;
    let accesses = 100_000;
    for _ in 0..geometries {
        let line = 1u64 << rng.gen_range(2..7);
        let ways = 1u64 << rng.gen_range(0..4);
        let sets = 2 * rng.gen_range(1..40u64);
        let g = CacheGeometry::new(sets * line * ways, ways, line).map_err(|e| e.to_string())?;
        let mut sim = CacheState::new(g, Latency::default());
        let mut reference = NaiveLru {
            ways: ways as usize,
            line,
            sets: vec![Vec::new(); sets as usize],
            now: 0,
        };
        // address space of three cache sizes
        let span = sets * line * ways * 3;
        for i in 0..accesses {
            let addr = rng.gen_range(0..span);
            let a = sim.access(addr).hit;
            let b = reference.access(addr);
            check(a == b, format!("{g:?}: access {i} at {addr} differs"))?;
        }
        for s in 0..sets as usize {
            check(sim.set(s) == reference.mru_first(s).as_slice(), format!("{g:?}: final set {s} differs"))?;
        }
    }
    Ok(format!("{geometries} geometries x {accesses} accesses identical"))
}

fn compulsory_misses() -> Outcome {
    let w = load("prog1_scaled.workload")?;
    let g = CacheGeometry::default();
    let map = base_layout(&w.arrays, &g).map_err(|e| e.to_string())?;
    let mut counts = Vec::new();
    for p in w.epg.processes() {
        let trace = generate_trace(p, &w.arrays, &map);
        let lines: HashSet<u64> = trace.iter().map(|e| e.addr / g.line_size()).collect();
        let mut cache = CacheState::new(g, Latency::default());
        let stats = simulate(&trace, &mut cache);
        check(
            stats.misses == lines.len() as u64,
            format!("{}: {} misses, {} distinct lines", p.name, stats.misses, lines.len()),
        )?;
        counts.push(stats.misses);
    }
    Ok(format!("misses = distinct lines for all 8 processes ({counts:?})"))
}

fn ls_directional() -> Outcome {
    let start = Instant::now();
    let w = load("prog1_scaled.workload")?;
    let cfg = SimConfig { cores: 4, ..SimConfig::default() };
    let ls = run(&w, SchedulerKind::Locality { trim: TrimRule::RemoveMax }, &cfg).map_err(|e| e.to_string())?;
    let reversed = StaticSchedule::from_queues(vec![vec![0, 7], vec![2, 5], vec![4, 3], vec![6, 1]]);
    let worst = run_schedule(&w, &reversed, &cfg).map_err(|e| e.to_string())?;
    let rrs = run(&w, SchedulerKind::RoundRobin { quantum: cfg.quantum }, &cfg).map_err(|e| e.to_string())?;
    let (a, b, c) = (ls.total_misses(), worst.total_misses(), rrs.total_misses());
    check(a < b, format!("LS {a} not below reversed pairing {b}"))?;
    check(a < c, format!("LS {a} not below RRS {c}"))?;
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(10), format!("took {elapsed:?}"))?;
    Ok(format!("misses LS {a} < reversed {b}, LS {a} < RRS {c}"))
}

fn lsm_directional() -> Outcome {
    let p1 = workload_path("prog1_scaled.workload");
    let p2 = workload_path("prog2_conflict.workload");
    let csv = locsched(&[
        "sweep",
        "--csv",
        "--cores",
        "2",
        "--policy",
        "ls",
        "--policy",
        "lsm",
        "--workload",
        p1.to_str().unwrap(),
        "--workload",
        p2.to_str().unwrap(),
    ])?;
    // tasks,policy,cores,hits,misses,conflict_misses,busy_cycles,idle_cycles,makespan_cycles
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let get = |t: &str, p: &str| -> Result<(i64, i64), String> {
        let r = rows
            .iter()
            .find(|r| r[0] == t && r[1] == p)
            .ok_or_else(|| format!("missing row {t},{p}"))?;
        Ok((r[5].parse().unwrap(), r[8].parse().unwrap()))
    };
    let (ls1, lsm1) = (get("1", "LS")?, get("1", "LSM")?);
    let (ls2, lsm2) = (get("2", "LS")?, get("2", "LSM")?);
    check(lsm2.0 < ls2.0, format!("|T|=2 conflict misses LSM {} vs LS {}", lsm2.0, ls2.0))?;
    check(lsm2.1 < ls2.1, format!("|T|=2 makespan LSM {} vs LS {}", lsm2.1, ls2.1))?;
    let gap1 = (ls1.0 - lsm1.0, ls1.1 - lsm1.1);
    let gap2 = (ls2.0 - lsm2.0, ls2.1 - lsm2.1);
    check(gap2.0 > gap1.0 && gap2.1 > gap1.1, format!("gap |T|=1 {gap1:?} vs |T|=2 {gap2:?}"))?;
    Ok(format!(
        "|T|=2 conflicts {} -> {}, makespan {} -> {}; gap grows {gap1:?} -> {gap2:?}",
        ls2.0, lsm2.0, ls2.1, lsm2.1
    ))
}

fn relayout_fixture() -> Outcome {
    let m = SymmetricMatrix::from_rows(vec![vec![0, 90, 60], vec![90, 0, 10], vec![60, 10, 0]])
        .map_err(|e| e.to_string())?;
    let all = ArrayRelation::all(3);
    let plan = relayout_select(&m, &all, 40);
    let got: Vec<Option<HalfPage>> = (0..3).map(|a| plan.offset(a)).collect();
    check(
        got == vec![Some(HalfPage::Lower), Some(HalfPage::Upper), Some(HalfPage::Upper)],
        format!("plan {got:?}"),
    )?;
    check(plan.relayouted().count() == 3, "an array was assigned twice or skipped")?;
    let quiet = relayout_select(&m, &all, 90);
    check(quiet.is_noop(), format!("threshold 90 gave {quiet:?}"))?;
    Ok("b = 0, C/2, C/2 after two iterations; empty plan when all <= T".into())
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p1 = workload_path("prog1_scaled.workload");
    let p2 = workload_path("prog2_conflict.workload");
    let both = workload_path("prog1_prog2.workload");
    let (p1, p2, both) = (p1.to_str().unwrap(), p2.to_str().unwrap(), both.to_str().unwrap());
    let commands: Vec<Vec<&str>> = vec![
        vec!["sharing-matrix", "--workload", both],
        vec!["conflict-matrix", "--workload", both, "--policy", "ls"],
        vec!["relayout-plan", "--workload", both],
        vec!["simulate", "--workload", p1, "--policy", "rs", "--seed", "1", "--cores", "4"],
        vec!["simulate", "--workload", p1, "--policy", "rrs", "--cores", "4"],
        vec!["simulate", "--workload", p1, "--policy", "ls", "--cores", "4"],
        vec!["simulate", "--workload", p1, "--policy", "lsm", "--cores", "4"],
        vec!["sweep", "--workload", p1, "--workload", p2, "--cores", "2"],
    ];
    for (i, cmd) in commands.iter().enumerate() {
        let mut hashes = Vec::new();
        for run in 0..2 {
            let out = dir.path().join(format!("{i}-{run}.csv"));
            let mut args = cmd.clone();
            args.extend(["--out", out.to_str().unwrap()]);
            locsched(&args)?;
            let bytes = std::fs::read(&out).map_err(|e| e.to_string())?;
            check(!bytes.is_empty(), format!("{cmd:?} wrote an empty CSV"))?;
            hashes.push(Sha256::digest(&bytes));
        }
        check(hashes[0] == hashes[1], format!("{cmd:?} is not reproducible"))?;
    }
    Ok(format!("{} commands bit-identical on re-run", commands.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("sharing matrix golden table", sharing_table),
        ("pinned first round mapping", pinned_round),
        ("full LS hand-trace and arg-max log", full_hand_trace),
        ("remap closed form, injectivity, disjoint halves", remap_properties),
        ("LRU equals naive reference", lru_oracle),
        ("compulsory misses equal distinct lines", compulsory_misses),
        ("LS below reversed pairing and RRS", ls_directional),
        ("LSM below LS, gap grows with tasks", lsm_directional),
        ("relayout_select three-array fixture", relayout_fixture),
        ("bit-identical CSV on re-run", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
