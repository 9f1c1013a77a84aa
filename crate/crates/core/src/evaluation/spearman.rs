use thiserror::Error;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("length mismatch: {0} vs {1}")]
pub struct LengthMismatch(pub usize, pub usize);

/// Average (fractional) ranks, 1-based.
pub fn fractional_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && xs[order[j]] == xs[order[i]] {
            j += 1;
        }
        // positions i..j share ranks i+1..=j
        let avg = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

/// Pearson correlation; `None` when either side has no variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<Option<f64>, LengthMismatch> {
    if a.len() != b.len() {
        return Err(LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 || is_constant(a) || is_constant(b) {
        return Ok(None);
    }
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(None);
    }
    Ok(Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)))
}

fn is_constant(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[0] == w[1])
}

/// Spearman's rho with average-rank ties. Undefined (`None`) when either
/// vector is constant, e.g. two all-zero rating vectors.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<Option<f64>, LengthMismatch> {
    if a.len() != b.len() {
        return Err(LengthMismatch(a.len(), b.len()));
    }
    pearson(&fractional_ranks(a), &fractional_ranks(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_is_one() {
        let a = [0.0, 1.0, 3.0, 3.0, 6.0];
        assert_eq!(spearman(&a, &a).unwrap(), Some(1.0));
    }

    #[test]
    fn single_one_elsewhere() {
        let mut a = [0.0; 19];
        let mut b = [0.0; 19];
        a[2] = 1.0;
        b[11] = 1.0;
        let rho = spearman(&a, &b).unwrap().unwrap();
        assert!((rho + 1.0 / 18.0).abs() < 1e-15, "{rho}");
    }

    #[test]
    fn constant_is_undefined() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(spearman(&a, &[0.0; 3]).unwrap(), None);
        assert_eq!(spearman(&[0.0; 3], &[0.0; 3]).unwrap(), None);
    }

    #[test]
    fn length_mismatch() {
        assert_eq!(spearman(&[1.0], &[1.0, 2.0]), Err(LengthMismatch(1, 2)));
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(
            fractional_ranks(&[3.0, 1.0, 3.0, 2.0]),
            vec![3.5, 1.0, 3.5, 2.0]
        );
    }

    proptest! {
        #[test]
        fn symmetric_and_monotone_invariant(
            a in prop::collection::vec(0u8..=6, 19),
            b in prop::collection::vec(0u8..=6, 19),
        ) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let ab = spearman(&a, &b).unwrap();
            prop_assert_eq!(ab, spearman(&b, &a).unwrap());
            // strictly increasing transform leaves ranks unchanged
            let t: Vec<f64> = a.iter().map(|x| (x * 0.7).exp() + 3.0).collect();
            prop_assert_eq!(fractional_ranks(&t), fractional_ranks(&a));
            if let Some(r) = ab {
                prop_assert!((-1.0..=1.0).contains(&r));
            }
        }
    }
}
