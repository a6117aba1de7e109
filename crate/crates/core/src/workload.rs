//! Workload files.
//!
//! A workload is a JSON document:
//!
//! ```json
//! {
//!   "arrays": [{ "name": "A", "dims": [10000, 6], "element_size": 4 }],
//!   "tasks": [{
//!     "name": "Prog1",
//!     "processes": [{
//!       "name": "P0",
//!       "loops": [[0, 1], [0, 3000]],
//!       "refs": [{ "array": "A", "index": ["1000*i0 + i1", "5"], "mode": "read" }]
//!     }],
//!     "edges": [["P0", "P1"]]
//!   }],
//!   "edges": [{ "from": ["Prog1", "P0"], "to": ["Prog2", "Q0"] }]
//! }
//! ```
//!
//! `loops` gives `[lower, upper)` per loop, outermost first. Subscripts are
//! affine in the loop variables `i0`, `i1`, `i2`. `element_size` and `base`
//! are optional; `mode` is `read`, `write` or `read-write`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::access::{AccessDescriptor, AccessMode, AffineExpr, ArrayDecl, IterationSpace};
use crate::error::{Error, Result};
use crate::graph::{ExtendedProcessGraph, Process, ProcessId, Workload};

pub const DEFAULT_ELEMENT_SIZE: u64 = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadFile {
    pub arrays: Vec<ArrayEntry>,
    pub tasks: Vec<TaskEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edges: Vec<CrossEdge>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayEntry {
    pub name: String,
    pub dims: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element_size: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskEntry {
    pub name: String,
    pub processes: Vec<ProcessEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edges: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessEntry {
    pub name: String,
    pub loops: Vec<(i64, i64)>,
    pub refs: Vec<RefEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefEntry {
    pub array: String,
    pub index: Vec<Subscript>,
    pub mode: AccessMode,
}

/// A subscript written either as text (`"1000*i0 + i1"`) or as explicit
/// coefficients.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Subscript {
    Text(String),
    Explicit(AffineExpr),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossEdge {
    pub from: (String, String),
    pub to: (String, String),
}

/// Parses `"3*i0 - i1 + 7"` for a nest of `depth` loops.
pub fn parse_affine(text: &str, depth: usize) -> std::result::Result<AffineExpr, String> {
    let mut coeffs = vec![0i64; depth];
    let mut constant = 0i64;
    let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    if compact.is_empty() {
        return Err("empty subscript".into());
    }
    let mut terms: Vec<(i64, &str)> = Vec::new();
    let mut sign = 1;
    let mut start = 0;
    let bytes = compact.as_bytes();
    for i in 0..=bytes.len() {
        if i == bytes.len() || ((bytes[i] == b'+' || bytes[i] == b'-') && i > 0 && bytes[i - 1] != b'*') {
            let term = &compact[start..i];
            if term.is_empty() {
                return Err(format!("malformed subscript {text:?}"));
            }
            terms.push((sign, term));
            if i < bytes.len() {
                sign = if bytes[i] == b'-' { -1 } else { 1 };
            }
            start = i + 1;
        } else if i == 0 && (bytes[0] == b'-' || bytes[0] == b'+') {
            sign = if bytes[0] == b'-' { -1 } else { 1 };
            start = 1;
        }
    }
    for (sign, term) in terms {
        let (factor, var) = match term.split_once('*') {
            Some((a, b)) if b.starts_with('i') => (a, Some(b)),
            Some((a, b)) if a.starts_with('i') => (b, Some(a)),
            Some(_) => return Err(format!("term {term:?} has no loop variable")),
            None if term.starts_with('i') => ("1", Some(term)),
            None => (term, None),
        };
        let value: i64 = factor
            .parse()
            .map_err(|_| format!("bad number {factor:?} in {text:?}"))?;
        match var {
            Some(v) => {
                let idx: usize = v[1..]
                    .parse()
                    .map_err(|_| format!("bad loop variable {v:?} in {text:?}"))?;
                if idx >= depth {
                    return Err(format!("loop variable {v} outside a nest of depth {depth}"));
                }
                coeffs[idx] += sign * value;
            }
            None => constant += sign * value,
        }
    }
    Ok(AffineExpr::new(coeffs, constant))
}

/// Canonical text form: nonzero terms in variable order, then the constant.
pub fn format_affine(expr: &AffineExpr) -> String {
    let mut out = String::new();
    let mut push = |value: i64, var: Option<usize>| {
        if value == 0 {
            return;
        }
        let mag = value.unsigned_abs();
        if out.is_empty() {
            if value < 0 {
                out.push('-');
            }
        } else {
            out.push_str(if value < 0 { " - " } else { " + " });
        }
        match var {
            Some(v) if mag == 1 => out.push_str(&format!("i{v}")),
            Some(v) => out.push_str(&format!("{mag}*i{v}")),
            None => out.push_str(&mag.to_string()),
        }
    };
    for (v, &c) in expr.coeffs.iter().enumerate() {
        push(c, Some(v));
    }
    push(expr.constant, None);
    if out.is_empty() {
        out.push('0');
    }
    out
}

impl WorkloadFile {
    /// Validates and builds the in-memory workload.
    pub fn into_workload(self, default_element_size: u64) -> Result<Workload> {
        let mut arrays = Vec::with_capacity(self.arrays.len());
        let mut array_ids = BTreeMap::new();
        for (i, a) in self.arrays.into_iter().enumerate() {
            let loc = format!("arrays[{i}] ({})", a.name);
            if array_ids.insert(a.name.clone(), i).is_some() {
                return Err(Error::parse(loc, "duplicate array name"));
            }
            let decl = ArrayDecl {
                name: a.name,
                dims: a.dims,
                element_size: a.element_size.unwrap_or(default_element_size),
                base: a.base,
            };
            decl.validate().map_err(|e| Error::parse(&loc, e.to_string()))?;
            arrays.push(decl);
        }

        let mut tasks = Vec::new();
        let mut processes = Vec::new();
        let mut edges = Vec::new();
        let mut by_name: BTreeMap<(String, String), usize> = BTreeMap::new();
        for (t, task) in self.tasks.into_iter().enumerate() {
            if tasks.contains(&task.name) {
                return Err(Error::parse(format!("tasks[{t}] ({})", task.name), "duplicate task name"));
            }
            let first = processes.len();
            for (k, p) in task.processes.into_iter().enumerate() {
                let loc = format!("tasks[{t}].processes[{k}] ({})", p.name);
                let global = processes.len();
                if by_name.insert((task.name.clone(), p.name.clone()), global).is_some() {
                    return Err(Error::parse(loc, "duplicate process name in task"));
                }
                let space = IterationSpace::new(p.loops).map_err(|e| Error::parse(&loc, e.to_string()))?;
                if p.refs.is_empty() {
                    return Err(Error::parse(loc, "process has no references"));
                }
                let mut refs = Vec::with_capacity(p.refs.len());
                for (r, entry) in p.refs.into_iter().enumerate() {
                    let rloc = format!("{loc}.refs[{r}]");
                    let array = *array_ids
                        .get(&entry.array)
                        .ok_or_else(|| Error::parse(&rloc, format!("unknown array {}", entry.array)))?;
                    let index = entry
                        .index
                        .into_iter()
                        .map(|s| match s {
                            Subscript::Text(text) => parse_affine(&text, space.depth()),
                            Subscript::Explicit(e) => Ok(e),
                        })
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|m| Error::parse(&rloc, m))?;
                    let access = AccessDescriptor::new(array, index, entry.mode);
                    access
                        .validate(&arrays, &space)
                        .map_err(|e| Error::parse(&rloc, e.to_string()))?;
                    refs.push(access);
                }
                processes.push(Process {
                    id: ProcessId { task: t, index: k, global },
                    name: p.name,
                    space,
                    refs,
                });
            }
            for (e, (from, to)) in task.edges.into_iter().enumerate() {
                let loc = format!("tasks[{t}].edges[{e}]");
                let find = |name: &String| {
                    by_name
                        .get(&(task.name.clone(), name.clone()))
                        .copied()
                        .filter(|&g| g >= first)
                        .ok_or_else(|| Error::parse(&loc, format!("unknown process {name}")))
                };
                edges.push((find(&from)?, find(&to)?));
            }
            tasks.push(task.name);
        }
        for (e, edge) in self.edges.into_iter().enumerate() {
            let loc = format!("edges[{e}]");
            let find = |key: &(String, String)| {
                by_name
                    .get(key)
                    .copied()
                    .ok_or_else(|| Error::parse(&loc, format!("unknown process {}/{}", key.0, key.1)))
            };
            edges.push((find(&edge.from)?, find(&edge.to)?));
        }
        let epg = ExtendedProcessGraph::new(processes, edges).map_err(|e| match e {
            Error::Cycle(_) => Error::parse("edges", e.to_string()),
            other => other,
        })?;
        Workload::new(arrays, tasks, epg)
    }

    pub fn from_workload(w: &Workload) -> Self {
        let arrays = w
            .arrays
            .iter()
            .map(|a| ArrayEntry {
                name: a.name.clone(),
                dims: a.dims.clone(),
                element_size: Some(a.element_size),
                base: a.base,
            })
            .collect();
        let epg = &w.epg;
        let mut tasks: Vec<TaskEntry> = w
            .tasks
            .iter()
            .map(|name| TaskEntry {
                name: name.clone(),
                processes: Vec::new(),
                edges: Vec::new(),
            })
            .collect();
        for p in epg.processes() {
            tasks[p.id.task].processes.push(ProcessEntry {
                name: p.name.clone(),
                loops: p.space.bounds().iter().map(|b| (b.lower, b.upper)).collect(),
                refs: p
                    .refs
                    .iter()
                    .map(|r| RefEntry {
                        array: w.arrays[r.array].name.clone(),
                        index: r.index.iter().map(|e| Subscript::Text(format_affine(e))).collect(),
                        mode: r.mode,
                    })
                    .collect(),
            });
        }
        let mut edges = Vec::new();
        for &(u, v) in epg.edges() {
            let (pu, pv) = (epg.process(u), epg.process(v));
            if pu.id.task == pv.id.task {
                tasks[pu.id.task].edges.push((pu.name.clone(), pv.name.clone()));
            } else {
                edges.push(CrossEdge {
                    from: (w.tasks[pu.id.task].clone(), pu.name.clone()),
                    to: (w.tasks[pv.id.task].clone(), pv.name.clone()),
                });
            }
        }
        WorkloadFile { arrays, tasks, edges }
    }
}

/// Parses workload text; syntax errors carry line and column.
pub fn parse_workload_str(text: &str, default_element_size: u64) -> Result<Workload> {
    let file: WorkloadFile = serde_json::from_str(text)
        .map_err(|e| Error::parse(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
    file.into_workload(default_element_size)
}

pub fn parse_workload(path: &Path, default_element_size: u64) -> Result<Workload> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
    parse_workload_str(&text, default_element_size).map_err(|e| match e {
        Error::Parse { location, message } => Error::Parse {
            location: format!("{}: {location}", path.display()),
            message,
        },
        other => other,
    })
}

pub fn to_json(w: &Workload) -> String {
    let mut s = serde_json::to_string_pretty(&WorkloadFile::from_workload(w)).expect("workload serializes");
    s.push('\n');
    s
}

/// Concatenates workloads into one concurrent workload. Arrays with the same
/// name must have identical declarations and are then shared.
pub fn merge_workloads(parts: &[Workload]) -> Result<Workload> {
    let mut arrays: Vec<ArrayDecl> = Vec::new();
    let mut tasks = Vec::new();
    let mut processes = Vec::new();
    let mut edges = Vec::new();
    for (i, w) in parts.iter().enumerate() {
        let mut remap = Vec::with_capacity(w.arrays.len());
        for a in &w.arrays {
            match arrays.iter().position(|b| b.name == a.name) {
                Some(j) if arrays[j] == *a => remap.push(j),
                Some(_) => {
                    return Err(Error::Merge(format!(
                        "array {} is declared differently in workload {i}",
                        a.name
                    )))
                }
                None => {
                    remap.push(arrays.len());
                    arrays.push(a.clone());
                }
            }
        }
        let task_offset = tasks.len();
        let offset = processes.len();
        for t in &w.tasks {
            if tasks.contains(t) {
                return Err(Error::Merge(format!("task {t} appears in more than one workload")));
            }
            tasks.push(t.clone());
        }
        for p in w.epg.processes() {
            let mut p = p.clone();
            p.id.task += task_offset;
            p.id.global += offset;
            for r in &mut p.refs {
                r.array = remap[r.array];
            }
            processes.push(p);
        }
        edges.extend(w.epg.edges().iter().map(|&(u, v)| (u + offset, v + offset)));
    }
    let epg = ExtendedProcessGraph::new(processes, edges)?;
    Workload::new(arrays, tasks, epg)
}
