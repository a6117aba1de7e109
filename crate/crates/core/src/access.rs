//! Affine array references over rectangular loop nests, and the data sets
//! they touch.
//!
//! A process is described by an [`IterationSpace`] and a list of
//! [`AccessDescriptor`]s. Its data set is the set of distinct array elements
//! the references reach over every iteration point, computed here by exact
//! enumeration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense index of an array inside a workload's array table.
pub type ArrayId = usize;

pub const MAX_DEPTH: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrayDecl {
    pub name: String,
    /// Extents in row-major order.
    pub dims: Vec<u64>,
    pub element_size: u64,
    /// Optional fixed base address for the base layout.
    pub base: Option<u64>,
}

impl ArrayDecl {
    pub fn new(name: impl Into<String>, dims: Vec<u64>, element_size: u64) -> Result<Self> {
        let decl = ArrayDecl {
            name: name.into(),
            dims,
            element_size,
            base: None,
        };
        decl.validate()?;
        Ok(decl)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(Error::Structure(format!("array {} has no dimensions", self.name)));
        }
        if let Some(d) = self.dims.iter().position(|&e| e == 0) {
            return Err(Error::Structure(format!(
                "array {} has zero extent in dimension {d}",
                self.name
            )));
        }
        if self.element_size == 0 {
            return Err(Error::Structure(format!("array {} has element_size 0", self.name)));
        }
        self.dims
            .iter()
            .try_fold(1u64, |acc, &e| acc.checked_mul(e))
            .and_then(|n| n.checked_mul(self.element_size))
            .ok_or_else(|| Error::Structure(format!("array {} is too large", self.name)))?;
        Ok(())
    }

    /// Number of elements.
    pub fn len(&self) -> u64 {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn size_bytes(&self) -> u64 {
        self.len() * self.element_size
    }

    /// Row-major linear index, or `None` when any index is out of range.
    pub fn linearize(&self, indices: &[i64]) -> Option<u64> {
        if indices.len() != self.dims.len() {
            return None;
        }
        let mut linear = 0u64;
        for (&idx, &extent) in indices.iter().zip(&self.dims) {
            if idx < 0 || idx as u64 >= extent {
                return None;
            }
            linear = linear * extent + idx as u64;
        }
        Some(linear)
    }
}

/// `coeffs · point + constant`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AffineExpr {
    pub coeffs: Vec<i64>,
    #[serde(rename = "const", default)]
    pub constant: i64,
}

impl AffineExpr {
    pub fn new(coeffs: Vec<i64>, constant: i64) -> Self {
        AffineExpr { coeffs, constant }
    }

    pub fn constant(depth: usize, value: i64) -> Self {
        AffineExpr::new(vec![0; depth], value)
    }

    /// The loop variable `var` itself, in a nest of `depth` loops.
    pub fn var(depth: usize, var: usize) -> Self {
        let mut coeffs = vec![0; depth];
        coeffs[var] = 1;
        AffineExpr::new(coeffs, 0)
    }

    pub fn eval(&self, point: &[i64]) -> Result<i64> {
        if point.len() != self.coeffs.len() {
            return Err(Error::Structure(format!(
                "affine expression has {} coefficients but the point has {} coordinates",
                self.coeffs.len(),
                point.len()
            )));
        }
        Ok(self.eval_unchecked(point))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, point: &[i64]) -> i64 {
        self.coeffs
            .iter()
            .zip(point)
            .fold(self.constant, |acc, (c, x)| acc + c * x)
    }

    /// Inclusive min and max of the expression over a box. Affine functions
    /// attain their extremes at the corners, so one pass per coefficient sign
    /// suffices.
    pub fn range_over(&self, space: &IterationSpace) -> (i64, i64) {
        let mut lo = self.constant;
        let mut hi = self.constant;
        for (&c, b) in self.coeffs.iter().zip(&space.bounds) {
            let a = c * b.lower;
            let z = c * (b.upper - 1);
            lo += a.min(z);
            hi += a.max(z);
        }
        (lo, hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopBound {
    /// Inclusive.
    pub lower: i64,
    /// Exclusive.
    pub upper: i64,
}

/// A rectangular, unit-stride loop nest of depth 1 to 3.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IterationSpace {
    bounds: Vec<LoopBound>,
}

impl IterationSpace {
    pub fn new(bounds: Vec<(i64, i64)>) -> Result<Self> {
        if bounds.is_empty() || bounds.len() > MAX_DEPTH {
            return Err(Error::Structure(format!(
                "iteration space depth {} outside 1..={MAX_DEPTH}",
                bounds.len()
            )));
        }
        let bounds: Vec<LoopBound> = bounds
            .into_iter()
            .map(|(lower, upper)| LoopBound { lower, upper })
            .collect();
        if let Some(d) = bounds.iter().position(|b| b.lower >= b.upper) {
            return Err(Error::Structure(format!(
                "empty iteration range in loop {d}: [{}, {})",
                bounds[d].lower, bounds[d].upper
            )));
        }
        Ok(IterationSpace { bounds })
    }

    pub fn depth(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[LoopBound] {
        &self.bounds
    }

    /// Number of iteration points.
    pub fn len(&self) -> u64 {
        self.bounds
            .iter()
            .map(|b| (b.upper - b.lower) as u64)
            .product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Visits every point in lexicographic order (outermost loop slowest).
    pub fn for_each_point<E>(
        &self,
        mut f: impl FnMut(&[i64]) -> std::result::Result<(), E>,
    ) -> std::result::Result<(), E> {
        let depth = self.bounds.len();
        let mut point: Vec<i64> = self.bounds.iter().map(|b| b.lower).collect();
        loop {
            f(&point)?;
            let mut d = depth;
            loop {
                if d == 0 {
                    return Ok(());
                }
                d -= 1;
                point[d] += 1;
                if point[d] < self.bounds[d].upper {
                    break;
                }
                point[d] = self.bounds[d].lower;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AccessMode {
    Read,
    Write,
    ReadWrite,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessDescriptor {
    pub array: ArrayId,
    /// One expression per array dimension.
    pub index: Vec<AffineExpr>,
    pub mode: AccessMode,
}

impl AccessDescriptor {
    pub fn new(array: ArrayId, index: Vec<AffineExpr>, mode: AccessMode) -> Self {
        AccessDescriptor { array, index, mode }
    }

    /// Checks arity against the array and the loop nest, then checks that
    /// every index stays in bounds over the whole space.
    pub fn validate(&self, arrays: &[ArrayDecl], space: &IterationSpace) -> Result<()> {
        let decl = arrays
            .get(self.array)
            .ok_or_else(|| Error::Reference(format!("unknown array id {}", self.array)))?;
        if self.index.len() != decl.dims.len() {
            return Err(Error::Structure(format!(
                "reference to {} has {} subscripts, array has {} dimensions",
                decl.name,
                self.index.len(),
                decl.dims.len()
            )));
        }
        for (d, expr) in self.index.iter().enumerate() {
            if expr.coeffs.len() != space.depth() {
                return Err(Error::Structure(format!(
                    "subscript {d} of {} has {} coefficients for a loop nest of depth {}",
                    decl.name,
                    expr.coeffs.len(),
                    space.depth()
                )));
            }
            let (lo, hi) = expr.range_over(space);
            if lo < 0 || hi as u64 >= decl.dims[d] {
                return Err(Error::Bounds(format!(
                    "subscript {d} of {} spans [{lo}, {hi}] but the extent is {}",
                    decl.name, decl.dims[d]
                )));
            }
        }
        Ok(())
    }

    /// Linear element index at one iteration point.
    pub fn element_at(&self, decl: &ArrayDecl, point: &[i64]) -> Option<u64> {
        let mut linear = 0u64;
        for (expr, &extent) in self.index.iter().zip(&decl.dims) {
            let idx = expr.eval_unchecked(point);
            if idx < 0 || idx as u64 >= extent {
                return None;
            }
            linear = linear * extent + idx as u64;
        }
        Some(linear)
    }
}

/// Distinct `(array, linear element index)` pairs, kept sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DataSet {
    elements: Vec<(ArrayId, u64)>,
}

impl DataSet {
    pub fn from_elements(mut elements: Vec<(ArrayId, u64)>) -> Self {
        elements.sort_unstable();
        elements.dedup();
        DataSet { elements }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[(ArrayId, u64)] {
        &self.elements
    }

    pub fn contains(&self, elem: (ArrayId, u64)) -> bool {
        self.elements.binary_search(&elem).is_ok()
    }

    /// Elements belonging to one array.
    pub fn of_array(&self, array: ArrayId) -> impl Iterator<Item = u64> + '_ {
        let start = self.elements.partition_point(|&(a, _)| a < array);
        self.elements[start..]
            .iter()
            .take_while(move |&&(a, _)| a == array)
            .map(|&(_, e)| e)
    }

    pub fn arrays(&self) -> Vec<ArrayId> {
        let mut out: Vec<ArrayId> = self.elements.iter().map(|&(a, _)| a).collect();
        out.dedup();
        out
    }
}

/// Every distinct element the references touch over the space.
pub fn enumerate_data_set(
    refs: &[AccessDescriptor],
    space: &IterationSpace,
    arrays: &[ArrayDecl],
) -> Result<DataSet> {
    let mut elements = Vec::with_capacity(refs.len() * space.len() as usize);
    for (r, access) in refs.iter().enumerate() {
        let decl = arrays
            .get(access.array)
            .ok_or_else(|| Error::Reference(format!("ref {r}: unknown array id {}", access.array)))?;
        if access.index.len() != decl.dims.len()
            || access.index.iter().any(|e| e.coeffs.len() != space.depth())
        {
            return Err(Error::Structure(format!(
                "ref {r} to {} does not match the array or loop nest shape",
                decl.name
            )));
        }
        space.for_each_point(|point| match access.element_at(decl, point) {
            Some(linear) => {
                elements.push((access.array, linear));
                Ok(())
            }
            None => Err(Error::Bounds(format!(
                "ref {r} to {} is out of bounds at point {point:?}",
                decl.name
            ))),
        })?;
    }
    Ok(DataSet::from_elements(elements))
}

/// `|a ∩ b|`.
pub fn sharing_size(a: &DataSet, b: &DataSet) -> u64 {
    let (mut i, mut j, mut n) = (0, 0, 0u64);
    let (x, y) = (&a.elements, &b.elements);
    while i < x.len() && j < y.len() {
        match x[i].cmp(&y[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}
