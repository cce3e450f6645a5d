//! Sparse matrices: Matrix Market input, CSR storage, level sets and the
//! partitioners that map a matrix onto the tile grid.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::noc::Coord;

pub mod generate;
mod partition;

pub use partition::*;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CooMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub entries: Vec<(usize, usize, f32)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct MatrixMarketError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SparseError {
    #[error("row {row} has a zero or missing diagonal")]
    SingularMatrix { row: usize },
    #[error("entry ({row}, {col}) lies above the diagonal")]
    NotLowerTriangular { row: usize, col: usize },
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix has no rows")]
    Empty,
    #[error(transparent)]
    Capacity(#[from] CapacityError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryRegion {
    Instruction,
    Data,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("tile {coord} needs {footprint} bytes of {region:?} memory, budget is {budget}")]
pub struct CapacityError {
    pub coord: Coord,
    pub region: MemoryRegion,
    pub footprint: usize,
    pub budget: usize,
}

impl CooMatrix {
    pub fn new(n_rows: usize, n_cols: usize) -> CooMatrix {
        CooMatrix {
            n_rows,
            n_cols,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f32) {
        assert!(
            row < self.n_rows && col < self.n_cols,
            "({row}, {col}) outside {}x{}",
            self.n_rows,
            self.n_cols
        );
        self.entries.push((row, col, value));
    }
}

/// Converts to CSR. Duplicates are summed in input order.
pub fn coo_to_csr(coo: &CooMatrix) -> CsrMatrix {
    let mut order: Vec<usize> = (0..coo.entries.len()).collect();
    // stable: duplicates keep input order
    order.sort_by_key(|&k| (coo.entries[k].0, coo.entries[k].1));
    let mut row_ptr = vec![0usize; coo.n_rows + 1];
    let mut col_idx = Vec::with_capacity(order.len());
    let mut values: Vec<f32> = Vec::with_capacity(order.len());
    let mut last: Option<(usize, usize)> = None;
    for k in order {
        let (r, c, v) = coo.entries[k];
        if last == Some((r, c)) {
            *values.last_mut().unwrap() += v;
        } else {
            col_idx.push(c);
            values.push(v);
            row_ptr[r + 1] += 1;
            last = Some((r, c));
        }
    }
    for i in 0..coo.n_rows {
        row_ptr[i + 1] += row_ptr[i];
    }
    CsrMatrix {
        n_rows: coo.n_rows,
        n_cols: coo.n_cols,
        row_ptr,
        col_idx,
        values,
    }
}

impl CsrMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> CsrMatrix {
        CsrMatrix {
            n_rows,
            n_cols,
            row_ptr: vec![0; n_rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> CsrMatrix {
        CsrMatrix::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(d: &[f32]) -> CsrMatrix {
        let n = d.len();
        CsrMatrix {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: d.to_vec(),
        }
    }

    /// Builds from a dense row-major array, keeping nonzero entries.
    pub fn from_dense(rows: &[Vec<f32>]) -> CsrMatrix {
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut coo = CooMatrix::new(rows.len(), n_cols);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n_cols, "ragged dense input");
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    coo.push(i, j, v);
                }
            }
        }
        coo_to_csr(&coo)
    }

    pub fn to_dense(&self) -> Vec<Vec<f32>> {
        let mut out = vec![vec![0.0f32; self.n_cols]; self.n_rows];
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                out[i][j] = v;
            }
        }
        out
    }

    pub fn to_coo(&self) -> CooMatrix {
        let mut coo = CooMatrix::new(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                coo.entries.push((i, j, v));
            }
        }
        coo
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_nnz(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn max_row_nnz(&self) -> usize {
        (0..self.n_rows).map(|i| self.row_nnz(i)).max().unwrap_or(0)
    }

    /// Column/value pairs of row `i` in storage order.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f32)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f32> {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .binary_search(&j)
            .ok()
            .map(|k| self.values[r.start + k])
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut coo = CooMatrix::new(self.n_cols, self.n_rows);
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                coo.entries.push((j, i, v));
            }
        }
        coo_to_csr(&coo)
    }

    /// Pattern and values agree with the transpose within `tol`, relative
    /// to the larger magnitude (absolute below 1).
    pub fn is_symmetric(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let t = self.transpose();
        if t.row_ptr != self.row_ptr || t.col_idx != self.col_idx {
            return false;
        }
        self.values.iter().zip(&t.values).all(|(&a, &b)| {
            let (a, b) = (a as f64, b as f64);
            (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
        })
    }

    /// The lower triangle including the diagonal.
    pub fn lower_triangle(&self) -> CsrMatrix {
        let mut coo = CooMatrix::new(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            for (j, v) in self.row(i).filter(|&(j, _)| j <= i) {
                coo.entries.push((i, j, v));
            }
        }
        coo_to_csr(&coo)
    }

    pub fn diagonal_values(&self) -> Vec<Option<f32>> {
        (0..self.n_rows.min(self.n_cols))
            .map(|i| self.get(i, i))
            .collect()
    }

    /// Checks that the matrix is square, lower triangular and has a
    /// nonzero diagonal.
    pub fn check_lower_triangular(&self) -> Result<(), SparseError> {
        if !self.is_square() {
            return Err(SparseError::NotSquare {
                rows: self.n_rows,
                cols: self.n_cols,
            });
        }
        for i in 0..self.n_rows {
            if let Some((j, _)) = self.row(i).find(|&(j, _)| j > i) {
                return Err(SparseError::NotLowerTriangular { row: i, col: j });
            }
        }
        for i in 0..self.n_rows {
            match self.get(i, i) {
                Some(v) if v != 0.0 => {}
                _ => return Err(SparseError::SingularMatrix { row: i }),
            }
        }
        Ok(())
    }
}

/// Parses a coordinate-format Matrix Market file.
pub fn parse_matrix_market(text: &str) -> Result<CooMatrix, MatrixMarketError> {
    let err = |line: usize, message: String| MatrixMarketError { line, message };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

    let (hline, header) = lines.next().ok_or_else(|| err(1, "empty input".into()))?;
    let words: Vec<String> = header
        .split_whitespace()
        .map(str::to_ascii_lowercase)
        .collect();
    if words.len() != 5 || words[0] != "%%matrixmarket" {
        return Err(err(hline, format!("bad header `{header}`")));
    }
    if words[1] != "matrix" || words[2] != "coordinate" {
        return Err(err(
            hline,
            format!("unsupported format `{} {}`", words[1], words[2]),
        ));
    }
    let pattern = match words[3].as_str() {
        "real" | "integer" => false,
        "pattern" => true,
        other => return Err(err(hline, format!("unsupported field `{other}`"))),
    };
    let symmetric = match words[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(err(hline, format!("unsupported symmetry `{other}`"))),
    };

    let mut data = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (sline, size) = data
        .next()
        .ok_or_else(|| err(hline, "missing size line".into()))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|w| {
            w.parse::<usize>()
                .map_err(|_| err(sline, format!("bad size value `{w}`")))
        })
        .collect::<Result<_, _>>()?;
    let [n_rows, n_cols, nnz] = dims[..] else {
        return Err(err(
            sline,
            format!("size line needs 3 values, found {}", dims.len()),
        ));
    };

    let mut coo = CooMatrix::new(n_rows, n_cols);
    let mut count = 0usize;
    for (ln, line) in data {
        count += 1;
        if count > nnz {
            return Err(err(ln, format!("more than the declared {nnz} entries")));
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let want = if pattern { 2 } else { 3 };
        if f.len() != want {
            return Err(err(
                ln,
                format!("expected {want} fields, found {}", f.len()),
            ));
        }
        let index = |w: &str, n: usize, what: &str| -> Result<usize, MatrixMarketError> {
            let v: usize = w
                .parse()
                .map_err(|_| err(ln, format!("bad {what} index `{w}`")))?;
            if v == 0 || v > n {
                return Err(err(ln, format!("{what} index {v} outside 1..={n}")));
            }
            Ok(v - 1)
        };
        let i = index(f[0], n_rows, "row")?;
        let j = index(f[1], n_cols, "column")?;
        let v = if pattern {
            1.0
        } else {
            f[2].parse::<f32>()
                .map_err(|_| err(ln, format!("bad value `{}`", f[2])))?
        };
        coo.entries.push((i, j, v));
        if symmetric && i != j {
            if j >= n_rows || i >= n_cols {
                return Err(err(ln, "symmetric entry mirrors outside the matrix".into()));
            }
            coo.entries.push((j, i, v));
        }
    }
    if count != nnz {
        return Err(err(
            text.lines().count().max(1),
            format!("declared {nnz} entries, found {count}"),
        ));
    }
    Ok(coo)
}

/// Writes a general real coordinate file. Values round-trip exactly.
pub fn write_matrix_market(m: &CsrMatrix) -> String {
    let mut s = String::from("%%MatrixMarket matrix coordinate real general\n");
    let _ = writeln!(s, "{} {} {}", m.n_rows, m.n_cols, m.nnz());
    for i in 0..m.n_rows {
        for (j, v) in m.row(i) {
            let _ = writeln!(s, "{} {} {:?}", i + 1, j + 1, v);
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Levels {
    pub level: Vec<usize>,
    /// Rows per level.
    pub histogram: BTreeMap<usize, usize>,
}

impl Levels {
    pub fn depth(&self) -> usize {
        self.histogram.keys().next_back().map_or(0, |&l| l + 1)
    }
}

/// Level of each row of a lower-triangular matrix: the length of the
/// longest dependency chain ending at the row.
pub fn compute_levels(l: &CsrMatrix) -> Result<Levels, SparseError> {
    l.check_lower_triangular()?;
    let mut level = vec![0usize; l.n_rows];
    for i in 0..l.n_rows {
        level[i] = l
            .row(i)
            .filter(|&(j, _)| j < i)
            .map(|(j, _)| level[j] + 1)
            .max()
            .unwrap_or(0);
    }
    let mut histogram = BTreeMap::new();
    for &lv in &level {
        *histogram.entry(lv).or_insert(0) += 1;
    }
    Ok(Levels { level, histogram })
}
