//! Shared value types. Every constructor validates; an invalid value cannot exist.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub use crate::rng::RngStream;

/// Default embedding dimension for synthesized workloads.
pub const DEFAULT_DIMENSION: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("sigma_micro ({sigma_micro}) must be strictly below sigma_mono ({sigma_mono})")]
    NonPositiveSigmaOrdering { sigma_mono: f64, sigma_micro: f64 },
    #[error("parameter `{name}` must be non-negative and finite, got {value}")]
    NegativeParameter { name: &'static str, value: f64 },
    #[error("user count must be at least 1")]
    ZeroUsers,
    #[error("vector dimension must be at least 1")]
    EmptyVector,
    #[error("vector component {index} is not finite")]
    NonFiniteComponent { index: usize },
    #[error("score is not finite")]
    NonFiniteScore,
}

/// Parameters of the two closed-form latency models, all in milliseconds.
///
/// `t_comp`: fixed compute time. `alpha`: per-user contention cost of the
/// centralized store (ms/user). `t_local`: local-access cost of a co-located shard.
/// `sigma_mono` / `sigma_micro`: std-dev of the Gaussian jitter of each deployment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyModelParams {
    pub t_comp: f64,
    pub alpha: f64,
    pub t_local: f64,
    pub sigma_mono: f64,
    pub sigma_micro: f64,
}

impl Default for LatencyModelParams {
    fn default() -> Self {
        Self {
            t_comp: 5.0,
            alpha: 0.02,
            t_local: 2.0,
            sigma_mono: 3.0,
            sigma_micro: 1.0,
        }
    }
}

impl LatencyModelParams {
    pub fn new(
        t_comp: f64,
        alpha: f64,
        t_local: f64,
        sigma_mono: f64,
        sigma_micro: f64,
    ) -> Result<Self, DomainError> {
        validate_params(Self {
            t_comp,
            alpha,
            t_local,
            sigma_mono,
            sigma_micro,
        })
    }

    /// The same parameters with both jitter terms switched off.
    pub fn without_noise(self) -> Self {
        Self {
            sigma_mono: 0.0,
            sigma_micro: 0.0,
            ..self
        }
    }

    pub fn is_noiseless(&self) -> bool {
        self.sigma_mono == 0.0 && self.sigma_micro == 0.0
    }

    pub fn mono_noise(&self) -> NoiseSpec {
        NoiseSpec {
            sigma: self.sigma_mono,
        }
    }

    pub fn micro_noise(&self) -> NoiseSpec {
        NoiseSpec {
            sigma: self.sigma_micro,
        }
    }
}

/// Checks every invariant of [`LatencyModelParams`] and hands the value back.
///
/// The jitter ordering `sigma_micro < sigma_mono` is required, with one exception:
/// both sigmas equal to zero is the noiseless limit used for exact checks.
pub fn validate_params(p: LatencyModelParams) -> Result<LatencyModelParams, DomainError> {
    for (name, value) in [
        ("t_comp", p.t_comp),
        ("alpha", p.alpha),
        ("t_local", p.t_local),
        ("sigma_mono", p.sigma_mono),
        ("sigma_micro", p.sigma_micro),
    ] {
        if !(value.is_finite() && value >= 0.0) {
            return Err(DomainError::NegativeParameter { name, value });
        }
    }
    if !p.is_noiseless() && p.sigma_micro >= p.sigma_mono {
        return Err(DomainError::NonPositiveSigmaOrdering {
            sigma_mono: p.sigma_mono,
            sigma_micro: p.sigma_micro,
        });
    }
    Ok(p)
}

/// Zero-mean Gaussian jitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    sigma: f64,
}

impl NoiseSpec {
    pub const NONE: NoiseSpec = NoiseSpec { sigma: 0.0 };

    pub fn new(sigma: f64) -> Result<Self, DomainError> {
        if sigma.is_finite() && sigma >= 0.0 {
            Ok(Self { sigma })
        } else {
            Err(DomainError::NegativeParameter {
                name: "sigma",
                value: sigma,
            })
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn is_zero(&self) -> bool {
        self.sigma == 0.0
    }
}

/// Number of registered users, `n >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UserCount(u64);

impl UserCount {
    pub fn new(n: u64) -> Result<Self, DomainError> {
        if n == 0 {
            Err(DomainError::ZeroUsers)
        } else {
            Ok(Self(n))
        }
    }

    pub fn get(self) -> u64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64
    }
}

impl fmt::Display for UserCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

pub type UserId = u64;

fn check_components(components: &[f64]) -> Result<(), DomainError> {
    if components.is_empty() {
        return Err(DomainError::EmptyVector);
    }
    if let Some(index) = components.iter().position(|c| !c.is_finite()) {
        return Err(DomainError::NonFiniteComponent { index });
    }
    Ok(())
}

/// A user's preference embedding. Components are shared, so cloning is cheap.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceVector {
    user_id: UserId,
    components: Arc<[f64]>,
}

impl PreferenceVector {
    pub fn new(user_id: UserId, components: Vec<f64>) -> Result<Self, DomainError> {
        check_components(&components)?;
        Ok(Self {
            user_id,
            components: components.into(),
        })
    }

    pub fn user_id(&self) -> UserId {
        self.user_id
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn dimension(&self) -> usize {
        self.components.len()
    }
}

/// Feature vector of the item being scored.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemVector {
    components: Arc<[f64]>,
}

impl ItemVector {
    pub fn new(components: Vec<f64>) -> Result<Self, DomainError> {
        check_components(&components)?;
        Ok(Self {
            components: components.into(),
        })
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn dimension(&self) -> usize {
        self.components.len()
    }
}

/// A finite relevance score.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Score(f64);

impl Score {
    pub fn new(value: f64) -> Result<Self, DomainError> {
        if value.is_finite() {
            Ok(Self(value))
        } else {
            Err(DomainError::NonFiniteScore)
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Architecture {
    Monolith,
    Microservice,
}

impl Architecture {
    pub const ALL: [Architecture; 2] = [Architecture::Monolith, Architecture::Microservice];

    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::Monolith => "monolith",
            Architecture::Microservice => "microservice",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One observed response time. Negative draws are clamped to zero on construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencySample {
    pub architecture: Architecture,
    pub n: UserCount,
    pub trial: u32,
    latency: f64,
}

impl LatencySample {
    /// Panics if `latency` is NaN or infinite; callers only ever pass sums of finite values.
    pub fn new(architecture: Architecture, n: UserCount, trial: u32, latency: f64) -> Self {
        assert!(latency.is_finite(), "latency must be finite");
        Self {
            architecture,
            n,
            trial,
            latency: latency.max(0.0),
        }
    }

    pub fn latency(&self) -> f64 {
        self.latency
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_params_are_valid() {
        let p = LatencyModelParams::new(5.0, 0.02, 2.0, 3.0, 1.0).unwrap();
        assert_eq!(p, LatencyModelParams::default());
        assert_eq!(validate_params(p), Ok(p));
    }

    #[test]
    fn equal_sigmas_rejected() {
        let p = LatencyModelParams {
            sigma_mono: 1.0,
            sigma_micro: 1.0,
            ..Default::default()
        };
        assert!(matches!(
            validate_params(p),
            Err(DomainError::NonPositiveSigmaOrdering { .. })
        ));
    }

    #[test]
    fn negative_alpha_rejected() {
        let p = LatencyModelParams {
            alpha: -0.1,
            ..Default::default()
        };
        assert_eq!(
            validate_params(p),
            Err(DomainError::NegativeParameter {
                name: "alpha",
                value: -0.1
            })
        );
    }

    #[test]
    fn nan_rejected() {
        let p = LatencyModelParams {
            t_local: f64::NAN,
            ..Default::default()
        };
        assert!(matches!(
            validate_params(p),
            Err(DomainError::NegativeParameter {
                name: "t_local",
                ..
            })
        ));
    }

    #[test]
    fn noiseless_limit_accepted() {
        let p = LatencyModelParams::default().without_noise();
        assert!(validate_params(p).is_ok());
        // Only the both-zero case is exempt from the ordering rule.
        let q = LatencyModelParams {
            sigma_mono: 0.0,
            sigma_micro: 0.5,
            ..Default::default()
        };
        assert!(validate_params(q).is_err());
    }

    #[test]
    fn user_count_rejects_zero() {
        assert_eq!(UserCount::new(0), Err(DomainError::ZeroUsers));
        assert_eq!(UserCount::new(1).unwrap().get(), 1);
    }

    #[test]
    fn vectors_reject_empty_and_nan() {
        assert_eq!(ItemVector::new(vec![]), Err(DomainError::EmptyVector));
        assert_eq!(
            PreferenceVector::new(0, vec![1.0, f64::INFINITY]),
            Err(DomainError::NonFiniteComponent { index: 1 })
        );
    }

    #[test]
    fn latency_sample_clamps() {
        let n = UserCount::new(3).unwrap();
        assert_eq!(
            LatencySample::new(Architecture::Monolith, n, 0, -2.5).latency(),
            0.0
        );
        assert_eq!(
            LatencySample::new(Architecture::Monolith, n, 0, 2.5).latency(),
            2.5
        );
    }

    #[test]
    fn noise_spec_guard() {
        assert!(NoiseSpec::new(-1.0).is_err());
        assert!(NoiseSpec::new(0.0).unwrap().is_zero());
    }
}
