//! Dense row-major f64 matrix. All model math runs on this type; vectors are
//! 1×n matrices.

use rand::Rng;
use rand_distr::{Distribution, Normal};

#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "shape/data mismatch");
        Mat { rows, cols, data }
    }

    pub fn row_vec(data: Vec<f64>) -> Self {
        Mat {
            rows: 1,
            cols: data.len(),
            data,
        }
    }

    pub fn scalar(x: f64) -> Self {
        Mat {
            rows: 1,
            cols: 1,
            data: vec![x],
        }
    }

    /// Zero-mean normal entries with the given standard deviation.
    pub fn randn<R: Rng>(rows: usize, cols: usize, sd: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, sd).expect("valid sd");
        let data = (0..rows * cols).map(|_| normal.sample(rng)).collect();
        Mat { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }

    /// Single scalar value of a 1×1 matrix.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on non-scalar");
        self.data[0]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copy of the rows listed in `idx`, in order (repeats allowed).
    pub fn gather_rows(&self, idx: &[usize]) -> Mat {
        let mut out = Mat::zeros(idx.len(), self.cols);
        for (i, &r) in idx.iter().enumerate() {
            assert!(r < self.rows, "row index {} out of range {}", r, self.rows);
            out.row_mut(i).copy_from_slice(self.row(r));
        }
        out
    }

    /// `self += other * scale`, shapes must match.
    pub fn add_scaled(&mut self, other: &Mat, scale: f64) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b * scale;
        }
    }

    /// `self[row_at] += other_row * scale` for scatter accumulation.
    pub fn add_row_scaled(&mut self, row_at: usize, other_row: &[f64], scale: f64) {
        let dst = self.row_mut(row_at);
        assert_eq!(dst.len(), other_row.len());
        for (a, b) in dst.iter_mut().zip(other_row.iter()) {
            *a += b * scale;
        }
    }

    pub fn scale_in_place(&mut self, s: f64) {
        for v in self.data.iter_mut() {
            *v *= s;
        }
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// General product of (optionally transposed) operands.
    pub fn matmul(a: &Mat, ta: bool, b: &Mat, tb: bool) -> Mat {
        let (m, k1) = if ta { (a.cols, a.rows) } else { (a.rows, a.cols) };
        let (k2, n) = if tb { (b.cols, b.rows) } else { (b.rows, b.cols) };
        assert_eq!(k1, k2, "inner dims mismatch: {}x{} . {}x{}", m, k1, k2, n);
        let mut out = Mat::zeros(m, n);
        match (ta, tb) {
            (false, false) => {
                for i in 0..m {
                    for k in 0..k1 {
                        let av = a.data[i * a.cols + k];
                        if av == 0.0 {
                            continue;
                        }
                        let brow = &b.data[k * b.cols..(k + 1) * b.cols];
                        let orow = &mut out.data[i * n..(i + 1) * n];
                        for j in 0..n {
                            orow[j] += av * brow[j];
                        }
                    }
                }
            }
            (false, true) => {
                for i in 0..m {
                    let arow = &a.data[i * a.cols..(i + 1) * a.cols];
                    for j in 0..n {
                        let brow = &b.data[j * b.cols..(j + 1) * b.cols];
                        let mut s = 0.0;
                        for k in 0..k1 {
                            s += arow[k] * brow[k];
                        }
                        out.data[i * n + j] = s;
                    }
                }
            }
            (true, false) => {
                for k in 0..k1 {
                    let arow = &a.data[k * a.cols..(k + 1) * a.cols];
                    let brow = &b.data[k * b.cols..(k + 1) * b.cols];
                    for i in 0..m {
                        let av = arow[i];
                        if av == 0.0 {
                            continue;
                        }
                        let orow = &mut out.data[i * n..(i + 1) * n];
                        for j in 0..n {
                            orow[j] += av * brow[j];
                        }
                    }
                }
            }
            (true, true) => {
                for i in 0..m {
                    for j in 0..n {
                        let mut s = 0.0;
                        for k in 0..k1 {
                            s += a.data[k * a.cols + i] * b.data[j * b.cols + k];
                        }
                        out.data[i * n + j] = s;
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_all_transpose_combinations() {
        let a = Mat::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Mat::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let plain = Mat::matmul(&a, false, &b, false);
        assert_eq!(plain.data(), &[58.0, 64.0, 139.0, 154.0]);

        let at = a.transpose();
        let bt = b.transpose();
        assert_eq!(Mat::matmul(&at, true, &b, false).data(), plain.data());
        assert_eq!(Mat::matmul(&a, false, &bt, true).data(), plain.data());
        assert_eq!(Mat::matmul(&at, true, &bt, true).data(), plain.data());
    }

    #[test]
    fn gather_rows_allows_repeats() {
        let m = Mat::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let g = m.gather_rows(&[2, 0, 2]);
        assert_eq!(g.data(), &[5.0, 6.0, 1.0, 2.0, 5.0, 6.0]);
    }
}
