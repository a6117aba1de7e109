use crate::error::{Error, Result};

/// Symmetric square matrix of counts with a zero diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymmetricMatrix {
    n: usize,
    cells: Vec<u64>,
}

impl SymmetricMatrix {
    pub fn zeros(n: usize) -> Self {
        SymmetricMatrix { n, cells: vec![0; n * n] }
    }

    /// Builds from a full table; rejects asymmetric input and forces a zero diagonal.
    pub fn from_rows(rows: Vec<Vec<u64>>) -> Result<Self> {
        let n = rows.len();
        if let Some(p) = rows.iter().position(|r| r.len() != n) {
            return Err(Error::Structure(format!("row {p} has {} cells, expected {n}", rows[p].len())));
        }
        let mut m = SymmetricMatrix::zeros(n);
        for (p, row) in rows.iter().enumerate() {
            for (q, &v) in row.iter().enumerate() {
                if rows[q][p] != v {
                    return Err(Error::Structure(format!("matrix not symmetric at ({p}, {q})")));
                }
                if p != q {
                    m.cells[p * n + q] = v;
                }
            }
        }
        Ok(m)
    }

    /// Sets both `(p, q)` and `(q, p)`; the diagonal stays zero.
    pub(crate) fn set(&mut self, p: usize, q: usize, value: u64) {
        if p != q {
            self.cells[p * self.n + q] = value;
            self.cells[q * self.n + p] = value;
        }
    }

    /// Off-diagonal cells of the upper triangle, row by row.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        (0..self.n).flat_map(move |p| (p + 1..self.n).map(move |q| (p, q, self.get(p, q))))
    }

    /// Comma-separated rows with a header of column labels.
    pub fn to_csv(&self, labels: &[String]) -> String {
        let mut out = String::from("id");
        for l in labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (p, row) in self.rows().enumerate() {
            out.push_str(&labels[p]);
            for v in row {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    /// Aligned table, diagonal left blank.
    pub fn to_text(&self, labels: &[String]) -> String {
        let width = self
            .cells
            .iter()
            .map(|v| v.to_string().len())
            .chain(labels.iter().map(|l| l.len()))
            .max()
            .unwrap_or(1);
        let mut out = format!("{:>width$}", "");
        for l in labels {
            out.push_str(&format!(" {l:>width$}"));
        }
        out.push('\n');
        for (p, row) in self.rows().enumerate() {
            out.push_str(&format!("{:>width$}", labels[p]));
            for (q, v) in row.iter().enumerate() {
                if p == q {
                    out.push_str(&format!(" {:>width$}", ""));
                } else {
                    out.push_str(&format!(" {v:>width$}"));
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, p: usize, q: usize) -> u64 {
        self.cells[p * self.n + q]
    }

    pub fn row(&self, p: usize) -> &[u64] {
        &self.cells[p * self.n..(p + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u64]> {
        self.cells.chunks(self.n.max(1)).take(self.n)
    }
}


/// Process-by-process shared element counts.
pub type SharingMatrix = SymmetricMatrix;

/// Array-by-array co-mapped element pair counts.
pub type ConflictMatrix = SymmetricMatrix;
