//! Invertible maps from constrained parameters onto the real line.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Box-Cox transform `(y^lambda - 1) / lambda`, or `ln y` when `lambda = 0`.
pub fn boxcox(y: f64, lambda: f64) -> Result<f64> {
    if !(y > 0.0) {
        return Err(Error::domain(format!("Box-Cox needs y > 0, got {y}")));
    }
    Ok(if lambda == 0.0 {
        y.ln()
    } else {
        (lambda * y.ln()).exp_m1() / lambda
    })
}

/// Inverse of [`boxcox`].
pub fn inv_boxcox(z: f64, lambda: f64) -> Result<f64> {
    if lambda == 0.0 {
        return Ok(z.exp());
    }
    let base = lambda * z;
    if !(base > -1.0) {
        return Err(Error::domain(format!(
            "inverse Box-Cox undefined for z={z}, lambda={lambda}"
        )));
    }
    Ok((base.ln_1p() / lambda).exp())
}

/// Forward transform applied to one column of a coefficient series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    Identity,
    Log,
    BoxCox { lambda: f64 },
}

impl Transform {
    pub fn forward(&self, y: f64) -> Result<f64> {
        match *self {
            Transform::Identity => Ok(y),
            Transform::Log => boxcox(y, 0.0),
            Transform::BoxCox { lambda } => boxcox(y, lambda),
        }
    }

    pub fn inverse(&self, z: f64) -> Result<f64> {
        match *self {
            Transform::Identity => Ok(z),
            Transform::Log => inv_boxcox(z, 0.0),
            Transform::BoxCox { lambda } => inv_boxcox(z, lambda),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(boxcox(1.0, 0.7).unwrap(), 0.0);
        assert_eq!(boxcox(1.0, 0.0).unwrap(), 0.0);
        assert!((boxcox(std::f64::consts::E, 0.0).unwrap() - 1.0).abs() < 1e-15);
        // (4^0.5 - 1) / 0.5 = 2
        assert!((boxcox(4.0, 0.5).unwrap() - 2.0).abs() < 1e-15);
        assert!(boxcox(0.0, 0.5).is_err());
        assert!(boxcox(-1.0, 0.0).is_err());
        assert!(inv_boxcox(-3.0, 0.5).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(y in 1e-2f64..1e2, lambda in -1.0f64..2.0) {
            let z = boxcox(y, lambda).unwrap();
            let back = inv_boxcox(z, lambda).unwrap();
            prop_assert!((back - y).abs() <= 1e-12 * y.max(1.0));
            for t in [Transform::Log, Transform::BoxCox { lambda }, Transform::Identity] {
                let w = t.forward(y).unwrap();
                prop_assert!((t.inverse(w).unwrap() - y).abs() <= 1e-12 * y.max(1.0));
            }
        }
    }
}
