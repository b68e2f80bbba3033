//! Training-method selector and the score rescaling factor `w_t`.

use core::fmt;
#[allow(unused_imports)] // std float methods shadow it when std is linked
use num_traits::Float;

/// Training objective. `Niso` and `Tango` carry their constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Iso,
    Niso { c: f64 },
    Tango { c: f64 },
    /// Riemannian sliced score matching baseline.
    Rssm,
}

impl Method {
    /// Scale factor of the optimal score at noise level σ:
    /// `σ` (Iso, RSSM), `√(σ² + c²)` (Niso), `max(σ, c)` (Tango).
    pub fn rescale_factor(&self, sigma: f64) -> f64 {
        match *self {
            Method::Iso | Method::Rssm => sigma,
            Method::Niso { c } => (sigma * sigma + c * c).sqrt(),
            Method::Tango { c } => sigma.max(c),
        }
    }

    /// Time-reweighting coefficient: `σ²` without rescaling, `σ w` with it.
    pub fn lambda(&self, sigma: f64, rescale: bool) -> f64 {
        if rescale {
            sigma * self.rescale_factor(sigma)
        } else {
            sigma * sigma
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Iso => "iso",
            Method::Niso { .. } => "niso",
            Method::Tango { .. } => "tango",
            Method::Rssm => "rssm",
        }
    }

    /// Default stage-switch threshold for the annealing sampler.
    pub fn default_switch_sigma(&self) -> Option<f64> {
        match *self {
            Method::Niso { c } | Method::Tango { c } => Some(c),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Niso { c } | Method::Tango { c } => write!(f, "{}(c={c})", self.name()),
            _ => f.write_str(self.name()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rescale_factors() {
        assert_relative_eq!(Method::Niso { c: 0.01 }.rescale_factor(0.001), 0.0100499, max_relative = 1e-5);
        assert_eq!(Method::Tango { c: 0.2 }.rescale_factor(0.001), 0.2);
        assert_eq!(Method::Iso.rescale_factor(0.3), 0.3);
    }

    #[test]
    fn lambda_conventions() {
        assert_eq!(Method::Iso.lambda(0.5, false), 0.25);
        assert_eq!(Method::Iso.lambda(0.5, true), 0.25);
        assert_relative_eq!(Method::Tango { c: 0.2 }.lambda(0.001, true), 2e-4, max_relative = 1e-12);
    }
}
