//! Array placement in memory, cache-set mapping, and conflict-avoiding
//! re-layout.
//!
//! A re-layouted array is cut into half-page chunks (a cache page is
//! `cache_size / associativity` bytes) and chunk `k` is stored at
//! `k * page + b`, with `b` either `0` or `page / 2`. Two arrays using
//! different `b` therefore land in disjoint halves of the set range.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::access::{ArrayDecl, ArrayId, DataSet};
use crate::error::{Error, Result};
use crate::graph::Workload;
use crate::matrix::{ConflictMatrix, SymmetricMatrix};
use crate::scheduler::StaticSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CacheGeometry {
    cache_size: u64,
    associativity: u64,
    line_size: u64,
}

impl Default for CacheGeometry {
    /// 8 KB, 2-way, 32-byte lines.
    fn default() -> Self {
        CacheGeometry {
            cache_size: 8192,
            associativity: 2,
            line_size: 32,
        }
    }
}

impl CacheGeometry {
    pub fn new(cache_size: u64, associativity: u64, line_size: u64) -> Result<Self> {
        if cache_size == 0 || associativity == 0 || line_size == 0 {
            return Err(Error::Geometry("sizes must be positive".into()));
        }
        if !line_size.is_power_of_two() {
            return Err(Error::Geometry(format!("line size {line_size} is not a power of two")));
        }
        if !cache_size.is_multiple_of(associativity * line_size) {
            return Err(Error::Geometry(format!(
                "cache size {cache_size} is not a multiple of associativity x line size ({})",
                associativity * line_size
            )));
        }
        let page = cache_size / associativity;
        if !page.is_multiple_of(2) || !(page / 2).is_multiple_of(line_size) {
            return Err(Error::Geometry(format!(
                "cache page {page} must split into two halves of whole {line_size}-byte lines"
            )));
        }
        Ok(CacheGeometry {
            cache_size,
            associativity,
            line_size,
        })
    }

    pub fn cache_size(&self) -> u64 {
        self.cache_size
    }

    pub fn associativity(&self) -> u64 {
        self.associativity
    }

    pub fn line_size(&self) -> u64 {
        self.line_size
    }

    /// Cache page: the address period after which set indices repeat.
    pub fn page(&self) -> u64 {
        self.cache_size / self.associativity
    }

    pub fn half_page(&self) -> u64 {
        self.page() / 2
    }

    pub fn num_sets(&self) -> u64 {
        self.cache_size / (self.associativity * self.line_size)
    }

    #[inline]
    pub fn line_of(&self, addr: u64) -> u64 {
        addr / self.line_size
    }
}

/// Cache set an address maps to.
#[inline]
pub fn set_index(addr: u64, g: &CacheGeometry) -> u64 {
    (addr / g.line_size) % g.num_sets()
}

/// Which half of every cache page a re-layouted array occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HalfPage {
    Lower,
    Upper,
}

impl HalfPage {
    pub fn offset(self, g: &CacheGeometry) -> u64 {
        match self {
            HalfPage::Lower => 0,
            HalfPage::Upper => g.half_page(),
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            HalfPage::Lower => HalfPage::Upper,
            HalfPage::Upper => HalfPage::Lower,
        }
    }
}

#[inline]
fn remap(rel: u64, half: HalfPage, g: &CacheGeometry) -> u64 {
    2 * rel - rel % g.half_page() + half.offset(g)
}

/// `2·rel − (rel mod C/2) + b` for a byte offset inside an array's region.
pub fn remap_addr(rel_addr: u64, b: u64, g: &CacheGeometry) -> Result<u64> {
    let half = if b == 0 {
        HalfPage::Lower
    } else if b == g.half_page() {
        HalfPage::Upper
    } else {
        return Err(Error::Contract(format!(
            "offset {b} is neither 0 nor half the cache page ({})",
            g.half_page()
        )));
    };
    Ok(remap(rel_addr, half, g))
}

/// Per-array re-layout decisions; `None` keeps the plain row-major layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutPlan {
    offsets: Vec<Option<HalfPage>>,
}

impl LayoutPlan {
    pub fn empty(arrays: usize) -> Self {
        LayoutPlan {
            offsets: vec![None; arrays],
        }
    }

    pub fn from_offsets(offsets: Vec<Option<HalfPage>>) -> Self {
        LayoutPlan { offsets }
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn offset(&self, array: ArrayId) -> Option<HalfPage> {
        self.offsets[array]
    }

    pub fn relayouted(&self) -> impl Iterator<Item = (ArrayId, HalfPage)> + '_ {
        self.offsets
            .iter()
            .enumerate()
            .filter_map(|(a, o)| o.map(|h| (a, h)))
    }

    pub fn is_noop(&self) -> bool {
        self.offsets.iter().all(Option::is_none)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub base: u64,
    /// Bytes reserved, including padding and the re-layout gaps.
    pub size: u64,
    pub element_size: u64,
    pub relayout: Option<HalfPage>,
}

/// The final element-to-address function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AddressMap {
    geometry: CacheGeometry,
    regions: Vec<Region>,
}

impl AddressMap {
    pub fn geometry(&self) -> &CacheGeometry {
        &self.geometry
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn region(&self, array: ArrayId) -> &Region {
        &self.regions[array]
    }

    /// Address of a linear element index; the caller guarantees it is in range.
    #[inline]
    pub fn addr(&self, array: ArrayId, linear: u64) -> u64 {
        let r = &self.regions[array];
        let rel = linear * r.element_size;
        match r.relayout {
            None => r.base + rel,
            Some(h) => r.base + remap(rel, h, &self.geometry),
        }
    }

    /// Address of `array[indices]` with bounds checking.
    pub fn element_addr(&self, arrays: &[ArrayDecl], array: ArrayId, indices: &[i64]) -> Result<u64> {
        let decl = arrays
            .get(array)
            .ok_or_else(|| Error::Reference(format!("unknown array id {array}")))?;
        let linear = decl.linearize(indices).ok_or_else(|| {
            Error::Bounds(format!("{}{indices:?} outside extents {:?}", decl.name, decl.dims))
        })?;
        Ok(self.addr(array, linear))
    }

    /// CSV: `array,base,size_bytes,relayouted,b`.
    pub fn report_csv(&self, arrays: &[ArrayDecl]) -> String {
        let mut out = String::from("array,base,size_bytes,relayouted,b\n");
        for (decl, r) in arrays.iter().zip(&self.regions) {
            let b = r.relayout.map_or(String::new(), |h| h.offset(&self.geometry).to_string());
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                decl.name,
                r.base,
                r.size,
                r.relayout.is_some(),
                b
            );
        }
        out
    }
}

fn round_up(value: u64, to: u64) -> u64 {
    value.div_ceil(to) * to
}

/// Row-major layout without any re-layout.
pub fn base_layout(arrays: &[ArrayDecl], g: &CacheGeometry) -> Result<AddressMap> {
    apply_plan(&LayoutPlan::empty(arrays.len()), arrays, g)
}

/// Allocates one region per array. Arrays with an explicit base that are not
/// re-layouted stay put; everything else is packed in id order above them.
/// Plain regions are padded to a multiple of half a page; re-layouted ones
/// start on a page boundary and reserve twice their padded size.
pub fn apply_plan(plan: &LayoutPlan, arrays: &[ArrayDecl], g: &CacheGeometry) -> Result<AddressMap> {
    if plan.len() != arrays.len() {
        return Err(Error::Contract(format!(
            "plan covers {} arrays, workload has {}",
            plan.len(),
            arrays.len()
        )));
    }
    let half = g.half_page();
    let mut regions: Vec<Option<Region>> = vec![None; arrays.len()];
    let mut fixed: Vec<(u64, u64, ArrayId)> = Vec::new();
    for (a, decl) in arrays.iter().enumerate() {
        if let (Some(base), None) = (decl.base, plan.offset(a)) {
            if base % half != 0 {
                return Err(Error::Structure(format!(
                    "base of {} ({base}) is not a multiple of half the cache page ({half})",
                    decl.name
                )));
            }
            let size = round_up(decl.size_bytes(), half);
            fixed.push((base, base + size, a));
            regions[a] = Some(Region {
                base,
                size,
                element_size: decl.element_size,
                relayout: None,
            });
        }
    }
    fixed.sort_unstable();
    for w in fixed.windows(2) {
        if w[1].0 < w[0].1 {
            return Err(Error::Structure(format!(
                "arrays {} and {} overlap",
                arrays[w[0].2].name, arrays[w[1].2].name
            )));
        }
    }
    let mut cursor = round_up(fixed.iter().map(|f| f.1).max().unwrap_or(0), g.page());
    for (a, decl) in arrays.iter().enumerate() {
        if regions[a].is_some() {
            continue;
        }
        let padded = round_up(decl.size_bytes(), half);
        let relayout = plan.offset(a);
        let (base, size) = match relayout {
            None => (cursor, padded),
            Some(_) => (round_up(cursor, g.page()), 2 * padded),
        };
        cursor = base + size;
        regions[a] = Some(Region {
            base,
            size,
            element_size: decl.element_size,
            relayout,
        });
    }
    Ok(AddressMap {
        geometry: *g,
        regions: regions.into_iter().map(Option::unwrap).collect(),
    })
}

/// Which array pairs may conflict: arrays touched by the same process, or by
/// two processes that run back to back on one core.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrayRelation {
    n: usize,
    related: Vec<bool>,
}

impl ArrayRelation {
    pub fn all(n: usize) -> Self {
        ArrayRelation {
            n,
            related: vec![true; n * n],
        }
    }

    pub fn none(n: usize) -> Self {
        ArrayRelation {
            n,
            related: vec![false; n * n],
        }
    }

    fn relate(&mut self, x: ArrayId, y: ArrayId) {
        self.related[x * self.n + y] = true;
        self.related[y * self.n + x] = true;
    }

    /// With a schedule: same-process and successive-on-one-core pairs. Without
    /// one every pair of processes counts, so every pair of accessed arrays
    /// is related.
    pub fn from_schedule(workload: &Workload, data_sets: &[DataSet], schedule: Option<&StaticSchedule>) -> Self {
        let n = workload.arrays.len();
        let mut rel = ArrayRelation::none(n);
        let touched: Vec<Vec<ArrayId>> = data_sets.iter().map(DataSet::arrays).collect();
        let mut link = |a: &[ArrayId], b: &[ArrayId]| {
            for &x in a {
                for &y in b {
                    rel.relate(x, y);
                }
            }
        };
        match schedule {
            Some(s) => {
                for t in &touched {
                    link(t, t);
                }
                for (p, q) in s.successive_pairs() {
                    link(&touched[p], &touched[q]);
                }
            }
            None => {
                let all: BTreeSet<ArrayId> = touched.iter().flatten().copied().collect();
                let all: Vec<ArrayId> = all.into_iter().collect();
                link(&all, &all);
            }
        }
        rel
    }

    pub fn related(&self, x: ArrayId, y: ArrayId) -> bool {
        self.related[x * self.n + y]
    }
}

/// For each related pair of arrays, the number of cross-array element pairs
/// that fall into the same cache set: `Σ_s n_x(s) · n_y(s)`, where `n_x(s)` is
/// how many distinct accessed elements of `x` map to set `s`.
pub fn compute_conflict_matrix(
    arrays: &[ArrayDecl],
    data_sets: &[DataSet],
    map: &AddressMap,
    relation: &ArrayRelation,
) -> ConflictMatrix {
    let n = arrays.len();
    let g = map.geometry();
    let sets = g.num_sets() as usize;
    let union = DataSet::from_elements(data_sets.iter().flat_map(|d| d.elements().iter().copied()).collect());
    let mut histogram = vec![vec![0u64; sets]; n];
    for &(a, e) in union.elements() {
        histogram[a][set_index(map.addr(a, e), g) as usize] += 1;
    }
    let mut m = SymmetricMatrix::zeros(n);
    for x in 0..n {
        for y in x + 1..n {
            if relation.related(x, y) {
                let c = histogram[x].iter().zip(&histogram[y]).map(|(a, b)| a * b).sum();
                m.set(x, y, c);
            }
        }
    }
    m
}

/// Mean of all off-diagonal pairs (zeros included), rounded down.
pub fn default_threshold(m: &ConflictMatrix) -> Result<u64> {
    let n = m.len() as u64;
    if n < 2 {
        return Err(Error::Contract(format!("threshold needs at least two arrays, got {n}")));
    }
    let total: u64 = m.pairs().map(|(_, _, v)| v).sum();
    Ok(total / (n * (n - 1) / 2))
}

/// Greedy choice of arrays to re-layout, highest conflict first.
pub fn relayout_select(m: &ConflictMatrix, relation: &ArrayRelation, threshold: u64) -> LayoutPlan {
    let n = m.len();
    let mut cells = m.clone();
    let mut plan = LayoutPlan::empty(n);
    loop {
        let mut best: Option<(usize, usize, u64)> = None;
        for (x, y, v) in cells.pairs() {
            if plan.offsets[x].is_some() && plan.offsets[y].is_some() {
                continue;
            }
            if best.is_none_or(|b| v > b.2) {
                best = Some((x, y, v));
            }
        }
        let Some((x, y, v)) = best else { break };
        if v <= threshold {
            break;
        }
        cells.set(x, y, 0);
        if !relation.related(x, y) {
            continue;
        }
        match (plan.offsets[x], plan.offsets[y]) {
            (Some(hx), None) => plan.offsets[y] = Some(hx.opposite()),
            (None, Some(hy)) => plan.offsets[x] = Some(hy.opposite()),
            (None, None) => {
                plan.offsets[x] = Some(HalfPage::Lower);
                plan.offsets[y] = Some(HalfPage::Upper);
            }
            (Some(_), Some(_)) => {}
        }
    }
    plan
}

/// Everything the LSM layout phase decided.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutSummary {
    pub conflicts: ConflictMatrix,
    pub threshold: u64,
    pub plan: LayoutPlan,
    pub map: AddressMap,
}

/// Conflict matrix under the schedule's relation, threshold, selection, and
/// the final allocation.
pub fn plan_layout(
    workload: &Workload,
    data_sets: &[DataSet],
    schedule: Option<&StaticSchedule>,
    g: &CacheGeometry,
) -> Result<LayoutSummary> {
    let base = base_layout(&workload.arrays, g)?;
    let relation = ArrayRelation::from_schedule(workload, data_sets, schedule);
    let conflicts = compute_conflict_matrix(&workload.arrays, data_sets, &base, &relation);
    let (threshold, plan) = if workload.arrays.len() >= 2 {
        let t = default_threshold(&conflicts)?;
        (t, relayout_select(&conflicts, &relation, t))
    } else {
        (0, LayoutPlan::empty(workload.arrays.len()))
    };
    let map = apply_plan(&plan, &workload.arrays, g)?;
    Ok(LayoutSummary {
        conflicts,
        threshold,
        plan,
        map,
    })
}
