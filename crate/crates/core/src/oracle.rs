//! Software references for checking device results.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::Preconditioner;
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMode {
    /// binary32 arithmetic in CSR storage order, as the device does it.
    SameOrder,
    /// f64 accumulation, rounded once to binary32.
    F64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("singular matrix at row {row}")]
    SingularMatrix { row: usize },
    #[error("entry ({row}, {col}) lies above the diagonal")]
    NotLowerTriangular { row: usize, col: usize },
}

fn check_len(expected: usize, found: usize) -> Result<(), OracleError> {
    if expected != found {
        return Err(OracleError::Dimension { expected, found });
    }
    Ok(())
}

pub fn spmv_ref(a: &CsrMatrix, x: &[f32], mode: OracleMode) -> Result<Vec<f32>, OracleError> {
    check_len(a.n_cols, x.len())?;
    Ok((0..a.n_rows)
        .map(|i| match mode {
            OracleMode::SameOrder => a.row(i).fold(0.0f32, |acc, (j, v)| acc + v * x[j]),
            OracleMode::F64 => a.row(i).map(|(j, v)| v as f64 * x[j] as f64).sum::<f64>() as f32,
        })
        .collect())
}

/// Forward substitution. `SameOrder` multiplies by the binary32
/// reciprocal of each diagonal; `F64` divides in f64.
pub fn sptrsv_ref(l: &CsrMatrix, b: &[f32], mode: OracleMode) -> Result<Vec<f32>, OracleError> {
    check_len(l.n_rows, b.len())?;
    check_len(l.n_rows, l.n_cols)?;
    let mut x32 = vec![0.0f32; l.n_rows];
    let mut x64 = vec![0.0f64; l.n_rows];
    for i in 0..l.n_rows {
        let mut diag = None;
        let mut s32 = 0.0f32;
        let mut s64 = 0.0f64;
        for (j, v) in l.row(i) {
            if j > i {
                return Err(OracleError::NotLowerTriangular { row: i, col: j });
            }
            if j == i {
                diag = Some(v);
                continue;
            }
            s32 += v * x32[j];
            s64 += v as f64 * x64[j];
        }
        let d = match diag {
            Some(d) if d != 0.0 => d,
            _ => return Err(OracleError::SingularMatrix { row: i }),
        };
        x32[i] = (b[i] - s32) * (1.0f32 / d);
        x64[i] = (b[i] as f64 - s64) / d as f64;
    }
    Ok(match mode {
        OracleMode::SameOrder => x32,
        OracleMode::F64 => x64.into_iter().map(|v| v as f32).collect(),
    })
}

/// Gaussian elimination with partial pivoting.
pub fn direct_solve_ref(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>, OracleError> {
    let n = a.len();
    check_len(n, b.len())?;
    let mut m: Vec<Vec<f64>> = a.to_vec();
    for row in &m {
        check_len(n, row.len())?;
    }
    let mut rhs = b.to_vec();
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs()))
            .unwrap();
        if m[p][k] == 0.0 {
            return Err(OracleError::SingularMatrix { row: k });
        }
        m.swap(k, p);
        rhs.swap(k, p);
        for i in k + 1..n {
            let f = m[i][k] / m[k][k];
            if f != 0.0 {
                for j in k..n {
                    m[i][j] -= f * m[k][j];
                }
                rhs[i] -= f * rhs[k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| m[i][j] * x[j]).sum();
        x[i] = (rhs[i] - s) / m[i][i];
    }
    Ok(x)
}

pub fn dense_f64(a: &CsrMatrix) -> Vec<Vec<f64>> {
    a.to_dense()
        .into_iter()
        .map(|r| r.into_iter().map(f64::from).collect())
        .collect()
}

/// Plain f64 PCG, for cross-checking the device-backed solver.
pub fn pcg_ref(
    a: &CsrMatrix,
    b: &[f64],
    tol: f64,
    max_iters: usize,
    pre: Preconditioner,
) -> (Vec<f64>, Vec<f64>) {
    let n = a.n_rows;
    let matvec = |v: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| a.row(i).map(|(j, w)| w as f64 * v[j]).sum())
            .collect()
    };
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    let inv: Vec<f64> = (0..n)
        .map(|i| match pre {
            Preconditioner::None => 1.0,
            Preconditioner::Jacobi => 1.0 / a.get(i, i).unwrap_or(1.0) as f64,
        })
        .collect();
    let b_norm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    let mut hist = Vec::new();
    if b_norm == 0.0 {
        return (x, hist);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for _ in 0..max_iters {
        let q = matvec(&p);
        let alpha = rz / dot(&p, &q);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        let rel = dot(&r, &r).sqrt() / b_norm;
        hist.push(rel);
        if rel <= tol {
            break;
        }
        z = r.iter().zip(&inv).map(|(r, d)| r * d).collect();
        let next = dot(&r, &z);
        let beta = next / rz;
        rz = next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    (x, hist)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub max_abs_diff: f64,
    pub max_rel_diff: f64,
    /// `max |a - b| / max |b|`.
    pub rel_inf_norm: f64,
    pub bitwise_equal: bool,
    pub worst_index: Option<usize>,
    pub rel_tol: f64,
    pub within_tol: bool,
}

/// Relative differences use `max(|a_i|, |b_i|, 1e-30)` as denominator.
pub const REL_FLOOR: f64 = 1e-30;

pub fn compare(a: &[f64], b: &[f64], rel_tol: f64) -> Result<ComparisonReport, OracleError> {
    check_len(a.len(), b.len())?;
    let mut rep = ComparisonReport {
        max_abs_diff: 0.0,
        max_rel_diff: 0.0,
        rel_inf_norm: 0.0,
        bitwise_equal: a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()),
        worst_index: None,
        rel_tol,
        within_tol: true,
    };
    let mut b_max = 0.0f64;
    for (i, (&x, &y)) in a.iter().zip(b).enumerate() {
        let abs = if x.to_bits() == y.to_bits() {
            0.0
        } else {
            (x - y).abs()
        };
        let rel = abs / x.abs().max(y.abs()).max(REL_FLOOR);
        if rep.worst_index.is_none() || rel > rep.max_rel_diff || rel.is_nan() {
            rep.worst_index = Some(i);
            rep.max_rel_diff = rel;
        }
        rep.max_abs_diff = if abs.is_nan() {
            f64::NAN
        } else {
            rep.max_abs_diff.max(abs)
        };
        b_max = b_max.max(y.abs());
    }
    rep.rel_inf_norm = rep.max_abs_diff / b_max.max(REL_FLOOR);
    rep.within_tol = rep.rel_inf_norm <= rel_tol;
    Ok(rep)
}

/// Compares binary32 vectors; `bitwise_equal` checks the f32 bit patterns.
pub fn compare_f32(a: &[f32], b: &[f32], rel_tol: f64) -> Result<ComparisonReport, OracleError> {
    let wide = |v: &[f32]| v.iter().map(|&x| x as f64).collect::<Vec<f64>>();
    let mut rep = compare(&wide(a), &wide(b), rel_tol)?;
    rep.bitwise_equal = a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits());
    Ok(rep)
}
