//! Reference minimax costs by min-max closure over the full distance matrix.
//! Cubic in `n`; used to cross-check the forest in tests.

use super::{OpfError, SeedSet};
use crate::matrix::FeatureMatrix;

pub const ORACLE_MAX_NODES: usize = 256;

/// `K x n` per-class minimax path costs computed by the closure
/// `c[i][j] <- min(c[i][j], max(c[i][k], c[k][j]))`.
pub fn minimax_oracle(points: &FeatureMatrix, seeds: &SeedSet) -> Result<FeatureMatrix, OpfError> {
    let n = points.rows();
    if n > ORACLE_MAX_NODES {
        return Err(OpfError::TooLarge {
            n,
            max: ORACLE_MAX_NODES,
        });
    }
    seeds.check_against(points)?;

    let mut closure = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for (a, b) in points.row(i).iter().zip(points.row(j)) {
                s += (a - b) * (a - b);
            }
            closure[i * n + j] = s.sqrt();
        }
    }
    for k in 0..n {
        for i in 0..n {
            let ik = closure[i * n + k];
            for j in 0..n {
                let via = ik.max(closure[k * n + j]);
                if via < closure[i * n + j] {
                    closure[i * n + j] = via;
                }
            }
        }
    }

    let mut out = FeatureMatrix::zeros(seeds.num_classes(), n);
    for class in 0..seeds.num_classes() {
        for t in 0..n {
            let best = seeds
                .indices()
                .iter()
                .zip(seeds.labels())
                .filter(|(_, &l)| l == class)
                .map(|(&s, _)| closure[s * n + t])
                .fold(f64::INFINITY, f64::min);
            out.set(class, t, best);
        }
    }
    Ok(out)
}
