use super::matrix::Matrix;
use super::tape::{Gradients, Tape, Var};
use super::DiffError;
use crate::scalar::Scalar;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Named learnable arrays in a fixed insertion order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamStore<T> {
    names: Vec<String>,
    values: Vec<Matrix<T>>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Index of a parameter inside its [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamId(pub usize);

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, value: Matrix<T>) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    /// Glorot-uniform weight matrix of shape `rows × cols`.
    pub fn push_glorot<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        rng: &mut R,
    ) -> ParamId {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| T::lit(rng.random_range(-limit..limit)))
            .collect();
        self.push(name, Matrix::from_vec(rows, cols, data))
    }

    pub fn push_zeros(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> ParamId {
        self.push(name, Matrix::zeros(rows, cols))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Matrix<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix<T> {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix<T>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn values(&self) -> &[Matrix<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Matrix<T>] {
        &mut self.values
    }

    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }

    /// Zero-filled arrays shaped like every parameter.
    pub fn zeros_like(&self) -> Vec<Matrix<T>> {
        self.values
            .iter()
            .map(|m| Matrix::zeros(m.rows(), m.cols()))
            .collect()
    }

    /// Records every parameter as a leaf of `tape`. Frozen bindings carry
    /// no gradient of their own but still pass adjoints through.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> Bound {
        let vars = self
            .values
            .iter()
            .map(|m| {
                if trainable {
                    tape.param(m.clone())
                } else {
                    tape.constant(m.clone())
                }
            })
            .collect();
        Bound { vars }
    }

    pub fn check_same_layout(&self, other: &Self) -> Result<(), DiffError> {
        if self.len() != other.len() {
            return Err(DiffError::ShapeMismatch(format!(
                "parameter count {} vs {}",
                self.len(),
                other.len()
            )));
        }
        for (i, (a, b)) in self.values.iter().zip(&other.values).enumerate() {
            if a.shape() != b.shape() {
                return Err(DiffError::ShapeMismatch(format!(
                    "parameter {} ({}): {:?} vs {:?}",
                    i,
                    self.names[i],
                    a.shape(),
                    b.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn to_f64(&self) -> ParamStore<f64> {
        ParamStore {
            names: self.names.clone(),
            values: self
                .values
                .iter()
                .map(|m| {
                    Matrix::from_vec(
                        m.rows(),
                        m.cols(),
                        m.as_slice().iter().map(|v| v.to_f64_lossy()).collect(),
                    )
                })
                .collect(),
        }
    }

    pub fn from_f64(store: &ParamStore<f64>) -> Self {
        ParamStore {
            names: store.names.clone(),
            values: store
                .values
                .iter()
                .map(|m| {
                    Matrix::from_vec(
                        m.rows(),
                        m.cols(),
                        m.as_slice().iter().map(|&v| T::lit(v)).collect(),
                    )
                })
                .collect(),
        }
    }
}

/// Tape handles for a bound [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    /// Per-parameter gradients, zero for parameters the output ignores.
    pub fn gradients<T: Scalar>(&self, grads: &Gradients<T>, store: &ParamStore<T>) -> Vec<Matrix<T>> {
        self.vars
            .iter()
            .zip(store.values())
            .map(|(&v, m)| grads.get(v, m.shape()))
            .collect()
    }
}

/// Frozen copy of a parameter store, moved only by [`TargetParams::soft_update`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetParams<T>(ParamStore<T>);

impl<T: Scalar> TargetParams<T> {
    pub fn new(source: &ParamStore<T>) -> Self {
        Self(source.clone())
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.0
    }

    /// `target ← τ·source + (1 − τ)·target`.
    pub fn soft_update(&mut self, source: &ParamStore<T>, tau: T) -> Result<(), DiffError> {
        if !(tau >= T::zero() && tau <= T::one()) {
            return Err(DiffError::InvalidArgument(format!(
                "soft update rate {tau} outside [0, 1]"
            )));
        }
        self.0.check_same_layout(source)?;
        let keep = T::one() - tau;
        for (t, s) in self.0.values_mut().iter_mut().zip(source.values()) {
            for (tv, &sv) in t.as_mut_slice().iter_mut().zip(s.as_slice()) {
                *tv = tau * sv + keep * *tv;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(v: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.push("w", Matrix::filled(2, 2, v));
        s
    }

    #[test]
    fn soft_update_boundaries_and_midpoint() {
        let src = store(2.0);
        let mut t = TargetParams::new(&store(0.0));
        t.soft_update(&src, 0.0).unwrap();
        assert_eq!(t.params(), &store(0.0));
        t.soft_update(&src, 0.5).unwrap();
        assert_eq!(t.params(), &store(1.0));
        t.soft_update(&src, 1.0).unwrap();
        assert_eq!(t.params(), &src);
    }

    #[test]
    fn soft_update_rejects_rate_outside_unit_interval() {
        let mut t = TargetParams::new(&store(0.0));
        assert!(t.soft_update(&store(1.0), 1.5).is_err());
        assert!(t.soft_update(&store(1.0), -0.1).is_err());
        assert!(t.soft_update(&store(1.0), f64::NAN).is_err());
    }

    #[test]
    fn soft_update_rejects_layout_mismatch() {
        let mut other = ParamStore::new();
        other.push("w", Matrix::<f64>::zeros(3, 2));
        let mut t = TargetParams::new(&store(0.0));
        assert!(t.soft_update(&other, 0.5).is_err());
    }
}
