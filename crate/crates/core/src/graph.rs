//! Tasks, processes, the extended process graph and the sharing matrix.

use std::collections::BTreeSet;

use crate::access::{enumerate_data_set, sharing_size, AccessDescriptor, ArrayDecl, DataSet, IterationSpace};
use crate::error::{Error, Result};
pub use crate::matrix::SharingMatrix;
use crate::matrix::SymmetricMatrix;

/// Dense process index, unique across a workload.
pub type GlobalId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProcessId {
    pub task: usize,
    pub index: usize,
    pub global: GlobalId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Process {
    pub id: ProcessId,
    pub name: String,
    pub space: IterationSpace,
    pub refs: Vec<AccessDescriptor>,
}

impl Process {
    pub fn data_set(&self, arrays: &[ArrayDecl]) -> Result<DataSet> {
        enumerate_data_set(&self.refs, &self.space, arrays)
    }
}

/// Processes plus precedence edges; `(u, v)` means `v` waits for `u`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtendedProcessGraph {
    processes: Vec<Process>,
    edges: BTreeSet<(GlobalId, GlobalId)>,
    preds: Vec<Vec<GlobalId>>,
    succs: Vec<Vec<GlobalId>>,
}

impl ExtendedProcessGraph {
    /// Validates ids, endpoints and acyclicity.
    pub fn new(processes: Vec<Process>, edges: impl IntoIterator<Item = (GlobalId, GlobalId)>) -> Result<Self> {
        for (i, p) in processes.iter().enumerate() {
            if p.id.global != i {
                return Err(Error::Structure(format!(
                    "process {} has global id {} at position {i}",
                    p.name, p.id.global
                )));
            }
            if p.refs.is_empty() {
                return Err(Error::Structure(format!("process {} has no references", p.name)));
            }
        }
        let n = processes.len();
        let edges: BTreeSet<(GlobalId, GlobalId)> = edges.into_iter().collect();
        let mut preds = vec![Vec::new(); n];
        let mut succs = vec![Vec::new(); n];
        for &(u, v) in &edges {
            if u >= n || v >= n {
                return Err(Error::Reference(format!(
                    "edge ({u}, {v}) names a process outside 0..{n}"
                )));
            }
            if u == v {
                return Err(Error::Cycle(vec![u]));
            }
            succs[u].push(v);
            preds[v].push(u);
        }
        let graph = ExtendedProcessGraph {
            processes,
            edges,
            preds,
            succs,
        };
        if let Some(cycle) = graph.find_cycle() {
            return Err(Error::Cycle(cycle));
        }
        Ok(graph)
    }

    fn find_cycle(&self) -> Option<Vec<GlobalId>> {
        // 0 = unvisited, 1 = on stack, 2 = done
        let n = self.processes.len();
        let mut color = vec![0u8; n];
        let mut stack: Vec<(GlobalId, usize)> = Vec::new();
        for root in 0..n {
            if color[root] != 0 {
                continue;
            }
            stack.push((root, 0));
            color[root] = 1;
            while let Some(&mut (node, ref mut next)) = stack.last_mut() {
                if let Some(&child) = self.succs[node].get(*next) {
                    *next += 1;
                    match color[child] {
                        0 => {
                            color[child] = 1;
                            stack.push((child, 0));
                        }
                        1 => {
                            let start = stack.iter().position(|&(p, _)| p == child).unwrap();
                            return Some(stack[start..].iter().map(|&(p, _)| p).collect());
                        }
                        _ => {}
                    }
                } else {
                    color[node] = 2;
                    stack.pop();
                }
            }
        }
        None
    }

    pub fn len(&self) -> usize {
        self.processes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.processes.is_empty()
    }

    pub fn processes(&self) -> &[Process] {
        &self.processes
    }

    pub fn process(&self, id: GlobalId) -> &Process {
        &self.processes[id]
    }

    pub fn edges(&self) -> &BTreeSet<(GlobalId, GlobalId)> {
        &self.edges
    }

    pub fn preds(&self, id: GlobalId) -> &[GlobalId] {
        &self.preds[id]
    }

    pub fn succs(&self, id: GlobalId) -> &[GlobalId] {
        &self.succs[id]
    }

    /// Unfinished processes whose every predecessor is in `done`.
    pub fn independent_set(&self, done: &BTreeSet<GlobalId>) -> BTreeSet<GlobalId> {
        (0..self.len())
            .filter(|id| !done.contains(id))
            .filter(|&id| self.preds[id].iter().all(|p| done.contains(p)))
            .collect()
    }

    /// True if `ancestor` reaches `id` along edges.
    pub fn is_ancestor(&self, ancestor: GlobalId, id: GlobalId) -> bool {
        let mut seen = vec![false; self.len()];
        let mut work = vec![id];
        while let Some(v) = work.pop() {
            for &p in &self.preds[v] {
                if p == ancestor {
                    return true;
                }
                if !seen[p] {
                    seen[p] = true;
                    work.push(p);
                }
            }
        }
        false
    }
}

/// A validated workload: array table, task names and the graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workload {
    pub arrays: Vec<ArrayDecl>,
    pub tasks: Vec<String>,
    pub epg: ExtendedProcessGraph,
}

impl Workload {
    pub fn new(arrays: Vec<ArrayDecl>, tasks: Vec<String>, epg: ExtendedProcessGraph) -> Result<Self> {
        for a in &arrays {
            a.validate()?;
        }
        let mut names = BTreeSet::new();
        for a in &arrays {
            if !names.insert(a.name.as_str()) {
                return Err(Error::Structure(format!("duplicate array {}", a.name)));
            }
        }
        for p in epg.processes() {
            if p.id.task >= tasks.len() {
                return Err(Error::Reference(format!(
                    "process {} belongs to unknown task {}",
                    p.name, p.id.task
                )));
            }
            for r in &p.refs {
                r.validate(&arrays, &p.space)?;
            }
        }
        Ok(Workload { arrays, tasks, epg })
    }

    pub fn array_id(&self, name: &str) -> Option<usize> {
        self.arrays.iter().position(|a| a.name == name)
    }

    pub fn process_label(&self, id: GlobalId) -> &str {
        &self.epg.process(id).name
    }

    pub fn data_sets(&self) -> Result<Vec<DataSet>> {
        self.epg
            .processes()
            .iter()
            .map(|p| p.data_set(&self.arrays))
            .collect()
    }
}

pub fn build_sharing_matrix(processes: &[Process], arrays: &[ArrayDecl]) -> Result<SharingMatrix> {
    let sets: Vec<DataSet> = processes
        .iter()
        .map(|p| p.data_set(arrays))
        .collect::<Result<_>>()?;
    Ok(sharing_matrix_from_sets(&sets))
}

pub fn sharing_matrix_from_sets(sets: &[DataSet]) -> SharingMatrix {
    let n = sets.len();
    let mut m = SymmetricMatrix::zeros(n);
    for p in 0..n {
        for q in p + 1..n {
            m.set(p, q, sharing_size(&sets[p], &sets[q]));
        }
    }
    m
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::access::{AccessMode, AffineExpr};

    /// Prog1 at a given scale: `B1[i1] += A[i1*stride + i2][5]`, `0 <= i2 < len`.
    pub(crate) fn prog1(stride: i64, len: i64) -> Workload {
        let rows = (7 * stride + len) as u64;
        let arrays = vec![
            ArrayDecl::new("A", vec![rows, 6], 4).unwrap(),
            ArrayDecl::new("B1", vec![8], 4).unwrap(),
        ];
        let processes = (0..8)
            .map(|k| Process {
                id: ProcessId { task: 0, index: k, global: k },
                name: format!("P{k}"),
                space: IterationSpace::new(vec![(k as i64, k as i64 + 1), (0, len)]).unwrap(),
                refs: vec![
                    AccessDescriptor::new(
                        0,
                        vec![AffineExpr::new(vec![stride, 1], 0), AffineExpr::constant(2, 5)],
                        AccessMode::Read,
                    ),
                    AccessDescriptor::new(1, vec![AffineExpr::var(2, 0)], AccessMode::ReadWrite),
                ],
            })
            .collect();
        let epg = ExtendedProcessGraph::new(processes, []).unwrap();
        Workload::new(arrays, vec!["Prog1".into()], epg).unwrap()
    }

    pub(crate) fn tiny_process(global: usize, array: usize) -> Process {
        Process {
            id: ProcessId { task: 0, index: global, global },
            name: format!("P{global}"),
            space: IterationSpace::new(vec![(0, 4)]).unwrap(),
            refs: vec![AccessDescriptor::new(array, vec![AffineExpr::var(1, 0)], AccessMode::Read)],
        }
    }

    #[test]
    fn prog1_epg_has_no_edges() {
        let w = prog1(1000, 3000);
        assert_eq!(w.epg.len(), 8);
        assert!(w.epg.edges().is_empty());
    }

    #[test]
    fn cycle_is_rejected() {
        let ps = vec![tiny_process(0, 0), tiny_process(1, 0)];
        let err = ExtendedProcessGraph::new(ps, [(0, 1), (1, 0)]).unwrap_err();
        match err {
            Error::Cycle(c) => {
                assert_eq!(c.len(), 2);
                assert!(c.contains(&0) && c.contains(&1));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn longer_cycle_lists_members() {
        let ps: Vec<Process> = (0..4).map(|i| tiny_process(i, 0)).collect();
        let err = ExtendedProcessGraph::new(ps, [(0, 1), (1, 2), (2, 3), (3, 1)]).unwrap_err();
        assert_eq!(err, Error::Cycle(vec![1, 2, 3]));
        assert_eq!(err.to_string(), "dependence cycle: P1 -> P2 -> P3 -> P1");
    }

    #[test]
    fn dangling_and_self_edges() {
        let ps = vec![tiny_process(0, 0)];
        assert!(matches!(
            ExtendedProcessGraph::new(ps.clone(), [(0, 3)]),
            Err(Error::Reference(_))
        ));
        assert!(matches!(ExtendedProcessGraph::new(ps.clone(), [(0, 0)]), Err(Error::Cycle(_))));
        assert_eq!(ExtendedProcessGraph::new(ps, []).unwrap().len(), 1);
    }

    #[test]
    fn independent_set_examples() {
        let w = prog1(1000, 3000);
        let none = BTreeSet::new();
        assert_eq!(w.epg.independent_set(&none), (0..8).collect());
        let all: BTreeSet<usize> = (0..8).collect();
        assert!(w.epg.independent_set(&all).is_empty());

        let chain = ExtendedProcessGraph::new(vec![tiny_process(0, 0), tiny_process(1, 0)], [(0, 1)]).unwrap();
        assert_eq!(chain.independent_set(&none), BTreeSet::from([0]));
        assert_eq!(chain.independent_set(&BTreeSet::from([0])), BTreeSet::from([1]));
        assert!(chain.is_ancestor(0, 1));
        assert!(!chain.is_ancestor(1, 0));
    }

    fn banded(off1: u64, off2: u64) -> Vec<Vec<u64>> {
        (0..8i64)
            .map(|p| {
                (0..8i64)
                    .map(|q| match (p - q).abs() {
                        1 => off1,
                        2 => off2,
                        _ => 0,
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn prog1_sharing_matrix_matches_table() {
        let w = prog1(1000, 3000);
        let m = build_sharing_matrix(w.epg.processes(), &w.arrays).unwrap();
        assert_eq!(m, SharingMatrix::from_rows(banded(2000, 1000)).unwrap());
    }

    #[test]
    fn scaled_prog1_sharing_matrix() {
        let w = prog1(100, 300);
        assert_eq!(w.arrays[0].dims, vec![1000, 6]);
        let m = build_sharing_matrix(w.epg.processes(), &w.arrays).unwrap();
        assert_eq!(m, SharingMatrix::from_rows(banded(200, 100)).unwrap());
    }

    #[test]
    fn disjoint_arrays_share_nothing() {
        let arrays = vec![
            ArrayDecl::new("X", vec![4], 4).unwrap(),
            ArrayDecl::new("Y", vec![4], 4).unwrap(),
        ];
        let m = build_sharing_matrix(&[tiny_process(0, 0), tiny_process(1, 1)], &arrays).unwrap();
        assert_eq!(m.get(0, 1), 0);
        assert_eq!(m.get(1, 0), 0);
    }

    #[test]
    fn asymmetric_rows_rejected() {
        assert!(SharingMatrix::from_rows(vec![vec![0, 1], vec![2, 0]]).is_err());
    }
}
