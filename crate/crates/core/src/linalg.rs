//! Discounted Markov-chain solves: values `(I - δP) V = r` and discounted
//! occupancies `(I - δP)^T μ = e_0`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Largest chain solved by dense LU; bigger chains use fixed-point iteration.
pub const DENSE_LIMIT: usize = 2000;
const ITER_TOL: f64 = 1e-12;

/// Sparse row-stochastic transition structure.
#[derive(Debug, Clone, Default)]
pub struct Chain {
    pub states: usize,
    /// `(from, to, probability)`; duplicates are summed.
    pub transitions: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct ChainSolution {
    /// `values[k][s]` for each right-hand side `k`.
    pub values: Vec<Vec<f64>>,
    /// Expected discounted number of visits to each state from state 0.
    pub occupancy: Vec<f64>,
}

/// Solves the discounted value equations for every reward vector in `rewards`
/// and the discounted occupancy measure started from state 0.
pub fn solve(chain: &Chain, delta: f64, rewards: &[Vec<f64>]) -> Result<ChainSolution> {
    if chain.states <= DENSE_LIMIT {
        solve_dense(chain, delta, rewards)
    } else {
        solve_iterative(chain, delta, rewards)
    }
}

fn solve_dense(chain: &Chain, delta: f64, rewards: &[Vec<f64>]) -> Result<ChainSolution> {
    let n = chain.states;
    let mut a = DMatrix::<f64>::identity(n, n);
    for &(from, to, p) in &chain.transitions {
        a[(from, to)] -= delta * p;
    }
    let at = a.transpose();
    let lu = a.lu();
    let values = rewards
        .iter()
        .map(|r| {
            let b = nalgebra::DVector::from_column_slice(r);
            lu.solve(&b)
                .map(|x| x.as_slice().to_vec())
                .ok_or_else(|| Error::internal("singular value system"))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut e0 = nalgebra::DVector::zeros(n);
    e0[0] = 1.0;
    let occupancy = at
        .lu()
        .solve(&e0)
        .map(|x| x.as_slice().to_vec())
        .ok_or_else(|| Error::internal("singular occupancy system"))?;
    Ok(ChainSolution { values, occupancy })
}

fn solve_iterative(chain: &Chain, delta: f64, rewards: &[Vec<f64>]) -> Result<ChainSolution> {
    let n = chain.states;
    // Contraction factor is delta, so this many sweeps shrink any error below tolerance.
    let max_iter = if delta > 0.0 {
        ((ITER_TOL.ln() - 10.0) / delta.ln()).ceil() as usize + 100
    } else {
        2
    };
    let iterate = |base: &[f64], transpose: bool| -> Result<Vec<f64>> {
        let mut x = base.to_vec();
        let mut next = vec![0.0; n];
        for _ in 0..max_iter {
            next.copy_from_slice(base);
            for &(from, to, p) in &chain.transitions {
                if transpose {
                    next[to] += delta * p * x[from];
                } else {
                    next[from] += delta * p * x[to];
                }
            }
            let scale = next.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            let change = x.iter().zip(&next).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            std::mem::swap(&mut x, &mut next);
            if change <= ITER_TOL * scale {
                return Ok(x);
            }
        }
        Err(Error::internal("discounted fixed-point iteration did not converge"))
    };
    let values = rewards.iter().map(|r| iterate(r, false)).collect::<Result<Vec<_>>>()?;
    let mut e0 = vec![0.0; n];
    e0[0] = 1.0;
    let occupancy = iterate(&e0, true)?;
    Ok(ChainSolution { values, occupancy })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> Chain {
        Chain {
            states: 2,
            transitions: vec![(0, 1, 0.5), (0, 0, 0.5), (1, 1, 1.0)],
        }
    }

    #[test]
    fn dense_matches_iterative() {
        let chain = two_state();
        let r = vec![vec![1.0, 3.0]];
        let a = solve_dense(&chain, 0.9, &r).unwrap();
        let b = solve_iterative(&chain, 0.9, &r).unwrap();
        for (x, y) in a.values[0].iter().zip(&b.values[0]) {
            assert!((x - y).abs() < 1e-9);
        }
        for (x, y) in a.occupancy.iter().zip(&b.occupancy) {
            assert!((x - y).abs() < 1e-9);
        }
        // Occupancy totals 1/(1-δ).
        assert!((a.occupancy.iter().sum::<f64>() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn absorbing_value() {
        let chain = Chain {
            states: 1,
            transitions: vec![(0, 0, 1.0)],
        };
        let s = solve(&chain, 0.9, &[vec![1.0]]).unwrap();
        assert!((s.values[0][0] - 10.0).abs() < 1e-12);
    }
}
