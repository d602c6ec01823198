//! Entropic smoothing of the dual in log-price coordinates.
//!
//! With `q_j = log p_j` the dual reads
//! `sum_j exp(q_j) + sum_i B_i max(0, max_j (log v_ij - q_j))`.
//! Replacing the inner max by `mu * log(1 + sum_j exp((log v_ij - q_j) / mu))`
//! gives a smooth, strictly convex function whose minimizer tends to the
//! dual optimum as `mu -> 0`. The softmax weights are each bidder's budget
//! shares across its cheapest goods.

use nalgebra::{DMatrix, DVector};

use crate::market::MarketInstance;

pub(crate) struct Smoothed<'a> {
    inst: &'a MarketInstance,
    /// Goods some bidder values; all other prices stay at zero.
    goods: &'a [usize],
    mu: f64,
}

struct Eval {
    value: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

impl<'a> Smoothed<'a> {
    pub(crate) fn new(inst: &'a MarketInstance, goods: &'a [usize], mu: f64) -> Self {
        Self { inst, goods, mu }
    }

    pub(crate) fn value(&self, q: &[f64]) -> f64 {
        self.eval(q, false).value
    }

    fn eval(&self, q: &[f64], second_order: bool) -> Eval {
        let k = self.goods.len();
        let mut value: f64 = q.iter().map(|x| x.exp()).sum();
        let mut grad = DVector::from_iterator(k, q.iter().map(|x| x.exp()));
        let mut hess = if second_order {
            DMatrix::from_diagonal(&grad)
        } else {
            DMatrix::zeros(0, 0)
        };
        let mut z = vec![f64::NEG_INFINITY; k];
        for i in 0..self.inst.num_bidders() {
            let b = self.inst.budget(i);
            let mut z_max: f64 = 0.0;
            for (slot, &j) in self.goods.iter().enumerate() {
                let v = self.inst.value(i, j);
                z[slot] = if v > 0.0 { (v.ln() - q[slot]) / self.mu } else { f64::NEG_INFINITY };
                z_max = z_max.max(z[slot]);
            }
            let mut total = (-z_max).exp();
            for zs in z.iter_mut() {
                *zs = (*zs - z_max).exp();
                total += *zs;
            }
            value += b * self.mu * (z_max + total.ln());
            // z now holds the unnormalized weights
            for w in z.iter_mut() {
                *w /= total;
            }
            for a in 0..k {
                if z[a] == 0.0 {
                    continue;
                }
                grad[a] -= b * z[a];
                if second_order {
                    let c = b / self.mu;
                    hess[(a, a)] += c * z[a];
                    for bb in 0..k {
                        hess[(a, bb)] -= c * z[a] * z[bb];
                    }
                }
            }
        }
        Eval { value, grad, hess }
    }

    /// Damped Newton descent from `q`; returns the number of steps taken.
    pub(crate) fn minimize(&self, q: &mut [f64], max_steps: usize) -> usize {
        let mut steps = 0;
        while steps < max_steps {
            let e = self.eval(q, true);
            let Some(chol) = e.hess.clone().cholesky() else {
                break;
            };
            let dir = chol.solve(&(-&e.grad));
            let slope = e.grad.dot(&dir);
            steps += 1;
            if -slope <= 1e-15 * (1.0 + e.value.abs()) {
                break;
            }
            let mut t = 1.0;
            let mut moved = false;
            while t > 1e-12 {
                let trial: Vec<f64> = q.iter().zip(dir.iter()).map(|(x, d)| x + t * d).collect();
                let v = self.value(&trial);
                if v <= e.value + 0.25 * t * slope {
                    q.copy_from_slice(&trial);
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
        }
        steps
    }
}
