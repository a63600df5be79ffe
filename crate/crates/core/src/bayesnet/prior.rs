use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// `pi * N(0, s1^2) + (1 - pi) * N(0, s2^2)` with `s_k = exp(-neg_log_sigma_k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleMixturePrior {
    pub pi: f64,
    pub neg_log_sigma1: f64,
    pub neg_log_sigma2: f64,
}

impl Default for ScaleMixturePrior {
    fn default() -> Self {
        Self {
            pi: 0.5,
            neg_log_sigma1: 0.0,
            neg_log_sigma2: 6.0,
        }
    }
}

/// `log N(x; mean, std^2)`.
pub fn log_normal(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    -HALF_LN_2PI - std.ln() - 0.5 * z * z
}

impl ScaleMixturePrior {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.pi) {
            return Err(Error::Config(format!(
                "prior mixture weight must lie in [0, 1], got {}",
                self.pi
            )));
        }
        if !self.neg_log_sigma1.is_finite() || !self.neg_log_sigma2.is_finite() {
            return Err(Error::Config("prior scales must be finite".into()));
        }
        Ok(())
    }

    pub fn sigmas(&self) -> (f64, f64) {
        ((-self.neg_log_sigma1).exp(), (-self.neg_log_sigma2).exp())
    }

    /// Log density and its derivative at `w`, evaluated in log space so that
    /// neither component underflows.
    pub fn log_density_and_grad(&self, w: f64) -> (f64, f64) {
        let (s1, s2) = self.sigmas();
        let a = self.pi.ln() + log_normal(w, 0.0, s1);
        let b = (1.0 - self.pi).ln() + log_normal(w, 0.0, s2);
        let max = a.max(b);
        let log_p = max + ((a - max).exp() + (b - max).exp()).ln();
        let r1 = (a - log_p).exp();
        let r2 = (b - log_p).exp();
        let grad = -w * (r1 / (s1 * s1) + r2 / (s2 * s2));
        (log_p, grad)
    }

    pub fn log_density(&self, w: f64) -> f64 {
        self.log_density_and_grad(w).0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct_density(p: &ScaleMixturePrior, w: f64) -> f64 {
        let (s1, s2) = p.sigmas();
        let n = |s: f64| (-(w * w) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
        p.pi * n(s1) + (1.0 - p.pi) * n(s2)
    }

    #[test]
    fn matches_direct_density() {
        let p = ScaleMixturePrior::default();
        for w in [-2.0, -0.3, -0.001, 0.0, 0.004, 0.7, 1.9] {
            let want = direct_density(&p, w).ln();
            assert!((p.log_density(w) - want).abs() < 1e-12, "w={w}");
        }
    }

    #[test]
    fn default_scales() {
        let (s1, s2) = ScaleMixturePrior::default().sigmas();
        assert_eq!(s1, 1.0);
        assert!((s2 - (-6.0f64).exp()).abs() < 1e-18);
    }

    #[test]
    fn positive_far_in_the_tail() {
        let p = ScaleMixturePrior::default();
        let lp = p.log_density(60.0);
        assert!(lp.is_finite());
        assert!((lp - (0.5f64.ln() + log_normal(60.0, 0.0, 1.0))).abs() < 1e-9);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let p = ScaleMixturePrior::default();
        for w in [-1.3, -0.004, 0.002, 0.5, 3.0] {
            let h = 1e-7;
            let fd = (p.log_density(w + h) - p.log_density(w - h)) / (2.0 * h);
            let (_, g) = p.log_density_and_grad(w);
            assert!((fd - g).abs() <= 1e-5 * g.abs().max(1.0), "w={w}: {fd} vs {g}");
        }
    }

    #[test]
    fn degenerate_mixture_weights() {
        for pi in [0.0, 1.0] {
            let p = ScaleMixturePrior {
                pi,
                ..Default::default()
            };
            assert!(p.log_density(0.3).is_finite());
            assert!(p.log_density_and_grad(0.3).1.is_finite());
        }
    }
}
