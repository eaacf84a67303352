use super::NetError;
use serde::{Deserialize, Serialize};

/// Divides every quantity of one SKU by its maximum training-period inventory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkuScaler {
    max_inventory: f64,
}

impl SkuScaler {
    pub fn new(max_inventory: f64) -> Result<Self, NetError> {
        if !(max_inventory > 0.0) || !max_inventory.is_finite() {
            return Err(NetError::NonPositiveScale(max_inventory));
        }
        Ok(Self { max_inventory })
    }

    pub fn max_inventory(&self) -> f64 {
        self.max_inventory
    }

    pub fn scale(&self, raw: f64) -> f64 {
        raw / self.max_inventory
    }

    pub fn unscale(&self, scaled: f64) -> f64 {
        scaled * self.max_inventory
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn definition_and_fixed_point() {
        let s = SkuScaler::new(1000.0).unwrap();
        assert_eq!(s.scale(500.0), 0.5);
        assert_eq!(s.scale(1000.0), 1.0);
    }

    #[test]
    fn rejects_nonpositive() {
        assert!(SkuScaler::new(0.0).is_err());
        assert!(SkuScaler::new(-3.0).is_err());
        assert!(SkuScaler::new(f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(max in 1e-3f64..1e6, y in -1e6f64..1e6) {
            let s = SkuScaler::new(max).unwrap();
            let back = s.scale(s.unscale(y));
            prop_assert!((back - y).abs() <= 1e-12 * y.abs().max(1.0));
        }
    }
}
