use super::Matrix;

/// Upper bound on distinct bins per feature.
pub const MAX_BINS: usize = 256;

/// Features discretized once per training set so that split search runs over
/// per-bin histograms. A value `x` falls in bin `b` when
/// `edges[b - 1] < x <= edges[b]`, so the split "bin ≤ b" is exactly the raw
/// split "x ≤ edges[b]".
#[derive(Clone, Debug)]
pub struct BinnedMatrix {
    n_rows: usize,
    cols: Vec<Vec<u8>>,
    edges: Vec<Vec<f64>>,
}

fn midpoint(a: f64, b: f64) -> f64 {
    a + (b - a) / 2.0
}

/// Split points for one column: midpoints between consecutive distinct values
/// when there are few of them, otherwise midpoints at equal-mass quantiles.
fn column_edges(values: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() <= MAX_BINS {
        return distinct.windows(2).map(|w| midpoint(w[0], w[1])).collect();
    }
    let n = sorted.len();
    let mut edges: Vec<f64> = Vec::with_capacity(MAX_BINS - 1);
    for q in 1..MAX_BINS {
        let v = sorted[(q * n / MAX_BINS).saturating_sub(1)];
        let next = distinct.partition_point(|&d| d <= v);
        if next == distinct.len() {
            break;
        }
        let e = midpoint(v, distinct[next]);
        if edges.last().is_none_or(|&last| e > last) {
            edges.push(e);
        }
    }
    edges
}

impl BinnedMatrix {
    pub fn new(x: &Matrix) -> Self {
        let mut cols = Vec::with_capacity(x.n_cols());
        let mut edges = Vec::with_capacity(x.n_cols());
        for j in 0..x.n_cols() {
            let values = x.column(j);
            let e = column_edges(&values);
            cols.push(
                values
                    .iter()
                    .map(|&v| e.partition_point(|&edge| edge < v) as u8)
                    .collect(),
            );
            edges.push(e);
        }
        BinnedMatrix {
            n_rows: x.n_rows(),
            cols,
            edges,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    pub fn n_bins(&self, j: usize) -> usize {
        self.edges[j].len() + 1
    }

    pub fn column(&self, j: usize) -> &[u8] {
        &self.cols[j]
    }

    /// Raw-value threshold equivalent to "bin ≤ b".
    pub fn threshold(&self, j: usize, b: usize) -> f64 {
        self.edges[j][b]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn few_values_use_midpoints() {
        let x = Matrix::new(5, 1, vec![3.0, 1.0, 2.0, 1.0, 3.0]);
        let b = BinnedMatrix::new(&x);
        assert_eq!(b.n_bins(0), 3);
        assert_eq!(b.column(0), &[2, 0, 1, 0, 2]);
        assert_eq!(b.threshold(0, 0), 1.5);
        assert_eq!(b.threshold(0, 1), 2.5);
    }

    #[test]
    fn many_values_are_capped() {
        let vals: Vec<f64> = (0..2000).map(|i| (i % 1000) as f64 * 0.5).collect();
        let x = Matrix::new(2000, 1, vals.clone());
        let b = BinnedMatrix::new(&x);
        assert!(b.n_bins(0) <= MAX_BINS);
        assert!(b.n_bins(0) > 200);
        // Bin order agrees with value order and thresholds separate bins.
        for (i, &v) in vals.iter().enumerate() {
            let bin = b.column(0)[i] as usize;
            if bin > 0 {
                assert!(v > b.threshold(0, bin - 1));
            }
            if bin + 1 < b.n_bins(0) {
                assert!(v <= b.threshold(0, bin));
            }
        }
    }

    #[test]
    fn constant_column_has_one_bin() {
        let x = Matrix::new(3, 1, vec![7.0; 3]);
        let b = BinnedMatrix::new(&x);
        assert_eq!(b.n_bins(0), 1);
    }
}
