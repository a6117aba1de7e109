use std::path::PathBuf;

use locality_sched::workload::{format_affine, parse_affine};
use locality_sched::{
    build_sharing_matrix, merge_workloads, parse_workload, parse_workload_str, run, to_json, AffineExpr,
    SchedulerKind, SimConfig, TrimRule, Workload,
};
use proptest::prelude::*;

fn shipped(name: &str) -> Workload {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../workloads").join(name);
    parse_workload(&path, 4).unwrap()
}

#[test]
fn shipped_prog1_shape() {
    let w = shipped("prog1.workload");
    assert_eq!(w.tasks, vec!["Prog1"]);
    assert_eq!(w.epg.len(), 8);
    let names: Vec<&str> = w.arrays.iter().map(|a| a.name.as_str()).collect();
    assert_eq!(names, ["A", "B1"]);
    assert_eq!(w.arrays[0].dims, vec![10000, 6]);
    assert!(w.epg.edges().is_empty());
}

#[test]
fn shipped_pair_has_zero_cross_block() {
    let w = shipped("prog1_prog2.workload");
    assert_eq!(w.tasks.len(), 2);
    assert_eq!(w.epg.len(), 16);
    let names: Vec<&str> = w.arrays.iter().map(|a| a.name.as_str()).collect();
    assert_eq!(names, ["A", "B1", "D", "B2"]);
    let m = build_sharing_matrix(w.epg.processes(), &w.arrays).unwrap();
    for p in 0..8 {
        for q in 8..16 {
            assert_eq!(m.get(p, q), 0);
        }
        assert_eq!(m.get(p, p + 1 - 2 * (p % 8 == 7) as usize), 2000);
    }
    assert_eq!(m.get(9, 10), 2000);
    assert_eq!(m.get(8, 10), 1000);
}

#[test]
fn merged_files_equal_combined_file() {
    let merged = merge_workloads(&[shipped("prog1.workload"), shipped("prog2.workload")]).unwrap();
    assert_eq!(merged, shipped("prog1_prog2.workload"));
}

#[test]
fn shipped_files_round_trip() {
    for name in [
        "prog1.workload",
        "prog2.workload",
        "prog1_prog2.workload",
        "prog1_scaled.workload",
        "prog2_scaled.workload",
        "prog2_conflict.workload",
    ] {
        let w = shipped(name);
        let text = to_json(&w);
        assert_eq!(parse_workload_str(&text, 4).unwrap(), w, "{name}");
        assert_eq!(to_json(&parse_workload_str(&text, 4).unwrap()), text, "{name}");
    }
}

#[test]
fn conflict_pair_co_maps_under_base_layout() {
    let merged = merge_workloads(&[shipped("prog1_scaled.workload"), shipped("prog2_conflict.workload")]).unwrap();
    let g = locality_sched::CacheGeometry::default();
    let map = locality_sched::base_layout(&merged.arrays, &g).unwrap();
    let a = map.region(merged.array_id("A").unwrap()).base;
    let d = map.region(merged.array_id("D").unwrap()).base;
    assert_eq!(a % g.page(), 0);
    assert_eq!(d % g.page(), 0);
}

#[test]
fn lsm_equals_ls_with_two_arrays() {
    let w = shipped("prog1_scaled.workload");
    let cfg = SimConfig { cores: 4, ..SimConfig::default() };
    let ls = run(&w, SchedulerKind::Locality { trim: TrimRule::RemoveMax }, &cfg).unwrap();
    let lsm = run(&w, SchedulerKind::LocalityMapped { trim: TrimRule::RemoveMax }, &cfg).unwrap();
    assert!(lsm.layout.as_ref().unwrap().plan.is_noop());
    assert_eq!(ls.total_misses(), lsm.total_misses());
    assert_eq!(ls.completion_cycles, lsm.completion_cycles);
}

fn arb_expr(depth: usize) -> impl Strategy<Value = AffineExpr> {
    (prop::collection::vec(-50i64..50, depth), -1000i64..1000).prop_map(|(c, k)| AffineExpr::new(c, k))
}

proptest! {
    #[test]
    fn affine_text_round_trips((depth, e) in (1usize..=3).prop_flat_map(|d| (Just(d), arb_expr(d)))) {
        prop_assert_eq!(parse_affine(&format_affine(&e), depth).unwrap(), e);
    }

    #[test]
    fn generated_workloads_round_trip(
        n in 1usize..5,
        stride in 1i64..20,
        len in 1i64..30,
        chain in any::<bool>(),
        elem in prop::sample::select(vec![1u64, 2, 4, 8]),
    ) {
        let rows = stride * (n as i64 - 1) + len;
        let procs: Vec<String> = (0..n).map(|k| format!(
            r#"{{"name":"p{k}","loops":[[{k},{}],[0,{len}]],"refs":[{{"array":"X","index":["{stride}*i0 + i1"],"mode":"read-write"}}]}}"#,
            k + 1)).collect();
        let edges: Vec<String> = if chain { (1..n).map(|k| format!(r#"["p{}","p{k}"]"#, k - 1)).collect() } else { vec![] };
        let text = format!(
            r#"{{"arrays":[{{"name":"X","dims":[{rows}]}}],"tasks":[{{"name":"T","processes":[{}],"edges":[{}]}}]}}"#,
            procs.join(","), edges.join(","));
        let w = parse_workload_str(&text, elem).unwrap();
        prop_assert_eq!(w.arrays[0].element_size, elem);
        prop_assert_eq!(&parse_workload_str(&to_json(&w), 1).unwrap(), &w);
    }
}
