//! Seeded test matrices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{coo_to_csr, CooMatrix, CsrMatrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform values in `[-1, 1)`.
pub fn random_vector(n: usize, seed: u64) -> Vec<f32> {
    let mut r = rng(seed);
    (0..n).map(|_| r.gen_range(-1.0f32..1.0)).collect()
}

/// Each entry is nonzero with probability `density`, values in `[-1, 1)`.
pub fn random(n_rows: usize, n_cols: usize, density: f64, seed: u64) -> CsrMatrix {
    let mut r = rng(seed);
    let mut coo = CooMatrix::new(n_rows, n_cols);
    for i in 0..n_rows {
        for j in 0..n_cols {
            if r.gen_bool(density) {
                let v = r.gen_range(-1.0f32..1.0);
                coo.push(i, j, if v == 0.0 { 0.5 } else { v });
            }
        }
    }
    coo_to_csr(&coo)
}

pub fn dense(n_rows: usize, n_cols: usize, seed: u64) -> CsrMatrix {
    random(n_rows, n_cols, 1.0, seed)
}

/// Lower triangular with off-diagonal values in `[-0.5, 0.5)` and a
/// diagonal of `1 + sum |off-diagonal|`.
pub fn random_lower(n: usize, density: f64, seed: u64) -> CsrMatrix {
    let mut r = rng(seed);
    let mut coo = CooMatrix::new(n, n);
    for i in 0..n {
        let mut sum = 0.0f32;
        for j in 0..i {
            if r.gen_bool(density) {
                let v = r.gen_range(-0.5f32..0.5);
                let v = if v == 0.0 { 0.25 } else { v };
                sum += v.abs();
                coo.push(i, j, v);
            }
        }
        coo.push(i, i, 1.0 + sum);
    }
    coo_to_csr(&coo)
}

/// Symmetric and strictly diagonally dominant with a positive diagonal,
/// hence positive definite.
pub fn random_spd(n: usize, density: f64, seed: u64) -> CsrMatrix {
    let mut r = rng(seed);
    let mut coo = CooMatrix::new(n, n);
    let mut rowsum = vec![0.0f32; n];
    for i in 0..n {
        for j in 0..i {
            if r.gen_bool(density) {
                let v = r.gen_range(-1.0f32..1.0);
                let v = if v == 0.0 { 0.5 } else { v };
                coo.push(i, j, v);
                coo.push(j, i, v);
                rowsum[i] += v.abs();
                rowsum[j] += v.abs();
            }
        }
    }
    for (i, s) in rowsum.iter().enumerate() {
        coo.push(i, i, 1.0 + s);
    }
    coo_to_csr(&coo)
}

/// `diag` on the diagonal, `sub` on the first subdiagonal.
pub fn bidiagonal(n: usize, diag: f32, sub: f32) -> CsrMatrix {
    let mut coo = CooMatrix::new(n, n);
    for i in 0..n {
        if i > 0 {
            coo.push(i, i - 1, sub);
        }
        coo.push(i, i, diag);
    }
    coo_to_csr(&coo)
}

pub fn tridiagonal(n: usize, diag: f32, off: f32) -> CsrMatrix {
    let mut coo = CooMatrix::new(n, n);
    for i in 0..n {
        if i > 0 {
            coo.push(i, i - 1, off);
        }
        coo.push(i, i, diag);
        if i + 1 < n {
            coo.push(i, i + 1, off);
        }
    }
    coo_to_csr(&coo)
}

/// Named test matrices used by the examples and the test suites.
#[derive(Debug, Clone)]
pub struct Case {
    pub name: String,
    pub matrix: CsrMatrix,
}

/// General SpMV corpus: structured cases plus random matrices of sizes
/// 8..=256 at densities 1% to 25%.
pub fn spmv_corpus() -> Vec<Case> {
    let mut v = vec![
        Case {
            name: "identity16".into(),
            matrix: CsrMatrix::identity(16),
        },
        Case {
            name: "diagonal24".into(),
            matrix: CsrMatrix::diagonal(&random_vector(24, 7)),
        },
        Case {
            name: "dense4".into(),
            matrix: dense(4, 4, 1),
        },
        Case {
            name: "dense8".into(),
            matrix: dense(8, 8, 2),
        },
        Case {
            name: "dense12".into(),
            matrix: dense(12, 12, 3),
        },
        Case {
            name: "bidiagonal32".into(),
            matrix: bidiagonal(32, 2.0, -1.0),
        },
        Case {
            name: "tridiagonal64".into(),
            matrix: tridiagonal(64, 4.0, -1.0),
        },
        Case {
            name: "rect12x20".into(),
            matrix: random(12, 20, 0.3, 4),
        },
        Case {
            name: "rect30x9".into(),
            matrix: random(30, 9, 0.3, 5),
        },
    ];
    let randoms = [
        (8, 0.25),
        (16, 0.25),
        (24, 0.10),
        (32, 0.05),
        (48, 0.10),
        (64, 0.05),
        (96, 0.02),
        (128, 0.03),
        (160, 0.01),
        (200, 0.02),
        (256, 0.01),
        (256, 0.04),
    ];
    for (k, &(n, d)) in randoms.iter().enumerate() {
        v.push(Case {
            name: format!("random{n}_{}pct", (d * 100.0) as u32),
            matrix: random(n, n, d, 100 + k as u64),
        });
    }
    v
}

/// Lower-triangular corpus with nonzero diagonals.
pub fn sptrsv_corpus() -> Vec<Case> {
    let mut v = vec![
        Case {
            name: "identity16".into(),
            matrix: CsrMatrix::identity(16),
        },
        Case {
            name: "diagonal24".into(),
            matrix: CsrMatrix::diagonal(&[3.0; 24]),
        },
        Case {
            name: "dense_lower8".into(),
            matrix: random_lower(8, 1.0, 1),
        },
        Case {
            name: "dense_lower12".into(),
            matrix: random_lower(12, 1.0, 2),
        },
        Case {
            name: "bidiagonal32".into(),
            matrix: bidiagonal(32, 2.0, -1.0),
        },
        Case {
            name: "tridiagonal_lower64".into(),
            matrix: tridiagonal(64, 4.0, -1.0).lower_triangle(),
        },
    ];
    let randoms = [
        (8, 0.25),
        (16, 0.25),
        (24, 0.10),
        (32, 0.05),
        (48, 0.10),
        (64, 0.05),
        (96, 0.02),
        (128, 0.03),
        (160, 0.01),
        (200, 0.02),
        (256, 0.01),
        (256, 0.04),
        (50, 0.10),
        (60, 0.08),
    ];
    for (k, &(n, d)) in randoms.iter().enumerate() {
        v.push(Case {
            name: format!("lower{n}_{}pct", (d * 100.0) as u32),
            matrix: random_lower(n, d, 200 + k as u64),
        });
    }
    v
}
