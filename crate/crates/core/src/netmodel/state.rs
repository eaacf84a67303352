use super::NetError;
use serde::{Deserialize, Serialize};

/// `f[0] = I`, `f[k] = f[k-1] + incoming[k-1] - demand[k-1]`. Negative values
/// are predicted stockouts and are kept as-is.
pub fn imbalance_profile(initial: f64, incoming: &[f64], demand: &[f64]) -> Result<Vec<f64>, NetError> {
    if incoming.len() != demand.len() {
        return Err(NetError::LengthMismatch {
            expected: demand.len(),
            got: incoming.len(),
        });
    }
    let mut out = Vec::with_capacity(incoming.len() + 1);
    let mut f = initial;
    out.push(f);
    for (s, d) in incoming.iter().zip(demand) {
        f = f + s - d;
        out.push(f);
    }
    Ok(out)
}

/// Per-node predicted-imbalance profiles, `|V| × K`, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeStateMatrix {
    k: usize,
    values: Vec<f64>,
}

impl NodeStateMatrix {
    pub fn new(k: usize, values: Vec<f64>) -> Result<Self, NetError> {
        if k == 0 || values.len() % k != 0 {
            return Err(NetError::Shape(format!(
                "{} values do not form rows of width {k}",
                values.len()
            )));
        }
        Ok(Self { k, values })
    }

    pub fn from_profiles(profiles: &[Vec<f64>]) -> Result<Self, NetError> {
        let k = profiles.first().map_or(0, Vec::len);
        if let Some(bad) = profiles.iter().find(|p| p.len() != k) {
            return Err(NetError::LengthMismatch {
                expected: k,
                got: bad.len(),
            });
        }
        Self::new(k, profiles.concat())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn node_count(&self) -> usize {
        self.values.len() / self.k
    }

    pub fn profile(&self, v: usize) -> &[f64] {
        &self.values[v * self.k..(v + 1) * self.k]
    }

    /// `f_v^{t+K-1|t}`: the furthest-ahead entry.
    pub fn last(&self, v: usize) -> f64 {
        self.values[(v + 1) * self.k - 1]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Rows reordered so that node `v` lands at `perm[v]`.
    pub fn relabel(&self, perm: &[usize]) -> Self {
        let mut values = vec![0.0; self.values.len()];
        for (v, &p) in perm.iter().enumerate() {
            values[p * self.k..(p + 1) * self.k].copy_from_slice(self.profile(v));
        }
        Self { k: self.k, values }
    }

    /// Rows of `other` appended after those of `self`.
    pub fn stack(&self, other: &Self) -> Result<Self, NetError> {
        if self.k != other.k {
            return Err(NetError::LengthMismatch {
                expected: self.k,
                got: other.k,
            });
        }
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        Ok(Self { k: self.k, values })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn direct_recursion_examples() {
        assert_eq!(
            imbalance_profile(10.0, &[0.0, 0.0, 0.0], &[2.0, 3.0, 4.0]).unwrap(),
            vec![10.0, 8.0, 5.0, 1.0]
        );
        assert_eq!(
            imbalance_profile(10.0, &[0.0, 5.0, 0.0], &[2.0, 3.0, 4.0]).unwrap(),
            vec![10.0, 8.0, 10.0, 6.0]
        );
        assert_eq!(imbalance_profile(7.0, &[0.0; 3], &[0.0; 3]).unwrap(), vec![7.0; 4]);
    }

    #[test]
    fn negative_values_are_not_clipped() {
        assert_eq!(imbalance_profile(1.0, &[0.0], &[3.0]).unwrap(), vec![1.0, -2.0]);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(imbalance_profile(1.0, &[0.0], &[1.0, 2.0]).is_err());
        assert!(NodeStateMatrix::from_profiles(&[vec![1.0, 2.0], vec![1.0]]).is_err());
    }

    proptest! {
        // exact for dyadic inputs, where every partial sum is representable
        #[test]
        fn telescopes_exactly(
            init in -64i32..64,
            steps in prop::collection::vec((0i32..64, 0i32..64), 0..8),
        ) {
            let inc: Vec<f64> = steps.iter().map(|s| s.0 as f64 / 8.0).collect();
            let dem: Vec<f64> = steps.iter().map(|s| s.1 as f64 / 8.0).collect();
            let f = imbalance_profile(init as f64, &inc, &dem).unwrap();
            prop_assert_eq!(f[0], init as f64);
            let net: f64 = inc.iter().sum::<f64>() - dem.iter().sum::<f64>();
            prop_assert_eq!(f[f.len() - 1] - f[0], net);
        }

        #[test]
        fn telescopes_within_roundoff(
            init in -10.0f64..10.0,
            steps in prop::collection::vec((0.0f64..5.0, 0.0f64..5.0), 0..8),
        ) {
            let inc: Vec<f64> = steps.iter().map(|s| s.0).collect();
            let dem: Vec<f64> = steps.iter().map(|s| s.1).collect();
            let f = imbalance_profile(init, &inc, &dem).unwrap();
            let net: f64 = inc.iter().sum::<f64>() - dem.iter().sum::<f64>();
            prop_assert!((f[f.len() - 1] - f[0] - net).abs() < 1e-9);
        }
    }
}
