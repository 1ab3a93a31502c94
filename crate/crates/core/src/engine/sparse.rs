use nalgebra::DMatrix;
use num_complex::Complex64;

/// Row-compressed copy of an operator used inside the Liouvillian.
#[derive(Debug, Clone)]
pub(crate) struct SparseOp {
    rows: Vec<Vec<(usize, Complex64)>>,
}

impl SparseOp {
    pub(crate) fn from_dense(m: &DMatrix<Complex64>) -> Self {
        let rows = (0..m.nrows())
            .map(|i| {
                (0..m.ncols())
                    .filter_map(|j| {
                        let v = m[(i, j)];
                        (v != Complex64::new(0.0, 0.0)).then_some((j, v))
                    })
                    .collect()
            })
            .collect();
        Self { rows }
    }

    /// `out = self · x` for row-major `n×n` dense `x`.
    pub(crate) fn mul_dense(&self, x: &[Complex64], out: &mut [Complex64], n: usize) {
        out.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        self.mul_dense_add(x, out, n);
    }

    /// `out += self · x`.
    pub(crate) fn mul_dense_add(&self, x: &[Complex64], out: &mut [Complex64], n: usize) {
        for (i, row) in self.rows.iter().enumerate() {
            let dst = &mut out[i * n..(i + 1) * n];
            for &(k, v) in row {
                let src = &x[k * n..(k + 1) * n];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += v * s;
                }
            }
        }
    }
}

/// Row-major conjugate transpose.
pub(crate) fn adjoint_into(x: &[Complex64], out: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in 0..n {
            out[j * n + i] = x[i * n + j].conj();
        }
    }
}
