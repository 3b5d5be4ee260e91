//! Flat prior on a phase window.

use crate::error::{MetroError, MetroResult};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlatPrior {
    mean: f64,
    width: f64,
}

impl FlatPrior {
    pub fn new(mean: f64, width: f64) -> MetroResult<Self> {
        if !(width > 0.0) || !width.is_finite() || !mean.is_finite() {
            return Err(MetroError::InvalidParameter(format!("prior needs finite mean and width > 0, got ({mean}, {width})")));
        }
        Ok(FlatPrior { mean, width })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn lower(&self) -> f64 {
        self.mean - self.width / 2.0
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.width / 2.0
    }

    /// `W0² / 12`.
    pub fn variance(&self) -> f64 {
        self.width * self.width / 12.0
    }

    /// `∫ dθ p(θ) θ²`.
    pub fn second_moment(&self) -> f64 {
        self.variance() + self.mean * self.mean
    }

    pub fn contains(&self, theta: f64) -> bool {
        theta >= self.lower() && theta <= self.upper()
    }

    pub fn density(&self, theta: f64) -> f64 {
        if self.contains(theta) {
            1.0 / self.width
        } else {
            0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments() {
        let p = FlatPrior::new(0.3, 1.2).unwrap();
        assert!((p.variance() - 0.12).abs() < 1e-15);
        assert!((p.second_moment() - 0.21).abs() < 1e-15);
        assert_eq!(p.density(0.3), 1.0 / 1.2);
        assert_eq!(p.density(1.0), 0.0);
        assert!(FlatPrior::new(0.0, 0.0).is_err());
        assert!(FlatPrior::new(f64::NAN, 1.0).is_err());
    }
}
