/// Dense row-major `f64` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            n_rows * n_cols,
            "data length must be n_rows * n_cols"
        );
        Matrix {
            n_rows,
            n_cols,
            data,
        }
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Matrix::new(n_rows, n_cols, vec![0.0; n_rows * n_cols])
    }

    pub fn from_rows<'a>(n_cols: usize, rows: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let mut data = Vec::new();
        let mut n_rows = 0;
        for r in rows {
            assert_eq!(r.len(), n_cols, "ragged row");
            data.extend_from_slice(r);
            n_rows += 1;
        }
        Matrix::new(n_rows, n_cols, data)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, j)).collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_cols.max(1)).take(self.n_rows)
    }

    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        Matrix::from_rows(self.n_cols, indices.iter().map(|&i| self.row(i)))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}
