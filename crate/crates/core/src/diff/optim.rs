use super::matrix::Matrix;
use super::params::ParamStore;
use super::DiffError;
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

/// Adam moment estimates for one parameter store.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    step: u64,
    first: Vec<Matrix<T>>,
    second: Vec<Matrix<T>>,
}

impl<T: Scalar> Adam<T> {
    /// Defaults: betas (0.9, 0.999), eps 1e-8.
    pub fn new(params: &ParamStore<T>, lr: T) -> Self {
        Self {
            lr,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            step: 0,
            first: params.zeros_like(),
            second: params.zeros_like(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected descent step along `grads`.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &[Matrix<T>]) -> Result<(), DiffError> {
        if grads.len() != params.len() || self.first.len() != params.len() {
            return Err(DiffError::ShapeMismatch(format!(
                "adam: {} params, {} grads, {} moments",
                params.len(),
                grads.len(),
                self.first.len()
            )));
        }
        for (i, (p, g)) in params.values().iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || self.first[i].shape() != p.shape() {
                return Err(DiffError::ShapeMismatch(format!(
                    "adam: parameter {i} shape {:?}, gradient {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
        }
        self.step += 1;
        let t = T::from_u64(self.step).expect("step count");
        let bc1 = T::one() - self.beta1.powf(t);
        let bc2 = T::one() - self.beta2.powf(t);
        for ((p, g), (m, v)) in params
            .values_mut()
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            let ps = p.as_mut_slice();
            let ms = m.as_mut_slice();
            let vs = v.as_mut_slice();
            for (k, &gk) in g.as_slice().iter().enumerate() {
                ms[k] = self.beta1 * ms[k] + (T::one() - self.beta1) * gk;
                vs[k] = self.beta2 * vs[k] + (T::one() - self.beta2) * gk * gk;
                let m_hat = ms[k] / bc1;
                let v_hat = vs[k] / bc2;
                ps[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::Tape;

    fn single(v: Vec<f64>) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        let n = v.len();
        s.push("w", Matrix::from_vec(1, n, v));
        s
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = single(vec![1.0, -2.0, 3.0]);
        let before = p.clone();
        let mut opt = Adam::new(&p, 0.001);
        opt.step(&mut p, &[Matrix::zeros(1, 3)]).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_each_coordinate_by_learning_rate() {
        let mut p = single(vec![0.0, 0.0, 0.0]);
        let mut opt = Adam::new(&p, 0.001);
        opt.step(&mut p, &[Matrix::from_vec(1, 3, vec![5.0, -0.01, 200.0])]).unwrap();
        for (&x, sign) in p.values()[0].as_slice().iter().zip([-1.0, 1.0, -1.0]) {
            assert!((x - sign * 0.001).abs() < 1e-8, "{x}");
        }
    }

    #[test]
    fn converges_on_convex_quadratic() {
        // f(w) = Σ c_i (w_i - t_i)², argmin w = t.
        let target = [0.7, -1.3, 0.25];
        let curv = [1.0, 4.0, 0.5];
        let mut p = single(vec![0.0, 0.0, 0.0]);
        let mut opt = Adam::new(&p, 0.05);
        for _ in 0..200 {
            let mut tape = Tape::new();
            let b = p.bind(&mut tape, true);
            let w = b.var(crate::diff::ParamId(0));
            let t = tape.constant(Matrix::from_vec(1, 3, target.to_vec()));
            let c = tape.constant(Matrix::from_vec(1, 3, curv.to_vec()));
            let d = tape.sub(w, t);
            let sq = tape.square(d);
            let wsq = tape.mul(sq, c);
            let loss = tape.sum(wsq);
            let grads = tape.backward(loss).unwrap();
            let g = b.gradients(&grads, &p);
            opt.step(&mut p, &g).unwrap();
        }
        for (x, t) in p.values()[0].as_slice().iter().zip(target) {
            assert!((x - t).abs() < 1e-3, "{x} vs {t}");
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = single(vec![0.0, 0.0]);
        let mut opt = Adam::new(&p, 0.001);
        assert!(opt.step(&mut p, &[Matrix::zeros(2, 1)]).is_err());
        assert!(opt.step(&mut p, &[]).is_err());
        assert_eq!(opt.steps(), 0);
    }
}
