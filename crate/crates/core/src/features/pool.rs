use super::field::FeatureField;
use super::linear::Linear;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub enum PoolMode<'a> {
    Max,
    /// Shared linear map per row, then the coordinatewise maximum.
    Conv1(&'a Linear),
}

/// Coordinatewise maximum and the winning row per coordinate (lowest row on ties).
pub fn max_pool(rows: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<usize>)> {
    let first = rows.first().ok_or_else(|| Error::Empty("pooling needs at least one row".into()))?;
    let mut best = first.clone();
    let mut arg = vec![0; first.len()];
    for (r, row) in rows.iter().enumerate().skip(1) {
        if row.len() != best.len() {
            return Err(Error::Shape("pooled rows have different widths".into()));
        }
        for (c, v) in row.iter().enumerate() {
            if *v > best[c] {
                best[c] = *v;
                arg[c] = r;
            }
        }
    }
    Ok((best, arg))
}

/// Scatters the pooled gradient back to the winning rows.
pub fn max_pool_backward(arg: &[usize], grad: &[f64], rows: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; grad.len()]; rows];
    for (c, (&r, g)) in arg.iter().zip(grad).enumerate() {
        out[r][c] += g;
    }
    out
}

pub fn global_pool(field: &FeatureField, mode: PoolMode) -> Result<Vec<f64>> {
    let rows: Vec<Vec<f64>> = match mode {
        PoolMode::Max => field.rows().map(<[f64]>::to_vec).collect(),
        PoolMode::Conv1(map) => {
            if map.inputs() != field.dim() {
                return Err(Error::Shape(format!("map expects width {}, rows have {}", map.inputs(), field.dim())));
            }
            field.rows().map(|r| map.forward(r)).collect()
        }
    };
    Ok(max_pool(&rows)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureRole;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn field(rows: usize, seed: u64) -> FeatureField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FeatureField::new(3, (0..rows * 3).map(|_| rng.random::<f64>() - 0.5).collect(), FeatureRole::Local).unwrap()
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = vec![];
        for p in permutations(n - 1) {
            for i in 0..n {
                let mut q = p.clone();
                q.insert(i, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn singleton_is_returned_unchanged() {
        let f = field(1, 1);
        assert_eq!(global_pool(&f, PoolMode::Max).unwrap(), f.row(0));
    }

    #[test]
    fn max_pool_is_permutation_invariant_exhaustively() {
        let f = field(6, 2);
        let want = global_pool(&f, PoolMode::Max).unwrap();
        for p in permutations(6) {
            let rows: Vec<Vec<f64>> = p.iter().map(|&i| f.row(i).to_vec()).collect();
            assert_eq!(max_pool(&rows).unwrap().0, want);
        }
    }

    #[test]
    fn conv1_matches_map_then_max() {
        let f = field(10, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let map = Linear::random(3, 5, &mut rng).unwrap();
        let got = global_pool(&f, PoolMode::Conv1(&map)).unwrap();
        for c in 0..5 {
            let want = f
                .rows()
                .map(|r| (0..3).map(|i| map.weight[c * 3 + i] * r[i]).sum::<f64>() + map.bias[c])
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((got[c] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_routes_to_the_maximum() {
        let rows = vec![vec![1.0, 5.0], vec![3.0, 2.0]];
        let (_, arg) = max_pool(&rows).unwrap();
        assert_eq!(max_pool_backward(&arg, &[1.0, 2.0], 2), vec![vec![0.0, 2.0], vec![1.0, 0.0]]);
    }
}
