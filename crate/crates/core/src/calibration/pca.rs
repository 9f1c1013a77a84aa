use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::matrix::{DenseMatrix, RowKey};
use super::CalibrationError;

/// Principal axes in rater space ("eigenraters") with per-row scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenraterBasis {
    pub raters: Vec<String>,
    pub rows: Vec<RowKey>,
    /// `components[j]` is a unit vector over raters, by descending eigenvalue.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub explained_ratio: Vec<f64>,
    /// `scores[i][j]`: row i projected on component j.
    pub scores: Vec<Vec<f64>>,
    /// Per-rater means removed before projecting.
    pub column_means: Vec<f64>,
}

impl EigenraterBasis {
    /// Rebuilds row `i` of the input from its scores.
    pub fn reconstruct_row(&self, i: usize) -> Vec<f64> {
        let mut out = self.column_means.clone();
        for (s, c) in self.scores[i].iter().zip(&self.components) {
            out.iter_mut().zip(c).for_each(|(o, x)| *o += s * x);
        }
        out
    }

    /// Share of variance explained by the first `k` components.
    pub fn cumulative_ratio(&self, k: usize) -> f64 {
        self.explained_ratio.iter().take(k).sum()
    }
}

/// PCA with raters as variables and (post, value) rows as observations.
/// Covariance uses the n-1 divisor; each component's largest-magnitude
/// coordinate is made positive.
pub fn pca(m: &DenseMatrix) -> Result<EigenraterBasis, CalibrationError> {
    let (n, p) = (m.n_rows(), m.n_cols());
    if n < 2 || p < 2 {
        return Err(CalibrationError::Shape(format!(
            "need at least 2x2, got {n}x{p}"
        )));
    }
    let x = DMatrix::from_row_slice(n, p, m.data());
    let means: Vec<f64> = (0..p).map(|j| x.column(j).mean()).collect();
    let mut xc = x;
    for (j, mean) in means.iter().enumerate() {
        xc.column_mut(j).add_scalar_mut(-mean);
    }
    let cov = (xc.transpose() * &xc) / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
    let trace: f64 = eigenvalues.iter().sum();
    let scale = eigenvalues.first().copied().unwrap_or(0.0).max(1.0);
    if trace <= 1e-12 * scale || trace == 0.0 {
        return Err(CalibrationError::Degenerate);
    }

    let components: Vec<Vec<f64>> = order
        .iter()
        .map(|&k| {
            let mut c: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            let lead = c
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
                .map(|(i, _)| i)
                .unwrap_or(0);
            if c[lead] < 0.0 {
                c.iter_mut().for_each(|x| *x = -*x);
            }
            c
        })
        .collect();
    let scores = (0..n)
        .map(|i| {
            let row = xc.row(i);
            components
                .iter()
                .map(|c| row.iter().zip(c).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();
    Ok(EigenraterBasis {
        raters: m.raters().to_vec(),
        rows: m.rows().to_vec(),
        explained_ratio: eigenvalues.iter().map(|e| e / trace).collect(),
        components,
        eigenvalues,
        scores,
        column_means: means,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::demean_rows;
    use crate::value_system::ValueId;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn matrix(n: usize, p: usize, data: Vec<f64>) -> DenseMatrix {
        let rows = (0..n)
            .map(|i| RowKey {
                post_id: format!("p{i}"),
                value: ValueId::Tradition,
            })
            .collect();
        DenseMatrix::new(rows, (0..p).map(|j| format!("r{j}")).collect(), data).unwrap()
    }

    #[test]
    fn rank_one() {
        let pattern = [1.0, -2.0, 0.5, 0.5];
        let data: Vec<f64> = (1..=6)
            .flat_map(|s| pattern.map(|x| x * s as f64))
            .collect();
        let b = pca(&matrix(6, 4, data)).unwrap();
        assert!((b.explained_ratio[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn all_zero_rejected() {
        assert!(matches!(
            pca(&matrix(3, 3, vec![0.0; 9])),
            Err(CalibrationError::Degenerate)
        ));
    }

    #[test]
    fn random_orthonormal_and_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (n, p) = (120, 12);
        let data: Vec<f64> = (0..n * p).map(|_| rng.random_range(0..=6) as f64).collect();
        let m = demean_rows(&matrix(n, p, data));
        let b = pca(&m).unwrap();
        for a in 0..p {
            for c in 0..p {
                let dot: f64 = b.components[a]
                    .iter()
                    .zip(&b.components[c])
                    .map(|(x, y)| x * y)
                    .sum();
                let want = if a == c { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-9);
            }
        }
        for i in 0..n {
            for (x, y) in b.reconstruct_row(i).iter().zip(m.row(i)) {
                assert!((x - y).abs() < 1e-6);
            }
        }
        assert!((b.cumulative_ratio(p) - 1.0).abs() < 1e-9);
        assert!(b.explained_ratio.windows(2).all(|w| w[0] >= w[1]));
    }
}
