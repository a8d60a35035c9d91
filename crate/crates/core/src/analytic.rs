//! Closed-form latency models, noise sampling and trial sweeps.
//!
//! Monolith: `max(0, t_comp + alpha * n + eps)` with `eps ~ N(0, sigma_mono^2)`.
//! Microservice: `max(0, t_comp + t_local + eps)` with `eps ~ N(0, sigma_micro^2)`,
//! independent of `n`.

use thiserror::Error;

use crate::domain::{
    validate_params, Architecture, DomainError, LatencyModelParams, LatencySample, NoiseSpec,
    UserCount,
};
use crate::rng::{substream_seed, RngStream};
use crate::stats::{summarize, Summary};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticError {
    #[error("alpha is zero: the monolith never overtakes the microservice deployment")]
    ZeroAlpha,
    #[error("user counts must be non-empty and strictly increasing")]
    UnorderedUserCounts,
    #[error("trials_per_point must be at least 1")]
    NoTrials,
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// `sigma * z` with `z` drawn by Box–Muller from two consecutive draws of `rng`.
pub fn sample_gaussian(rng: &mut RngStream, spec: NoiseSpec) -> f64 {
    spec.sigma() * rng.standard_normal()
}

pub fn eval_mono(n: UserCount, p: &LatencyModelParams, eps: f64) -> f64 {
    (p.t_comp + p.alpha * n.as_f64() + eps).max(0.0)
}

pub fn eval_micro(p: &LatencyModelParams, eps: f64) -> f64 {
    (p.t_comp + p.t_local + eps).max(0.0)
}

/// User count at which the expected latencies of the two deployments meet.
pub fn crossover_n(p: &LatencyModelParams) -> Result<f64, AnalyticError> {
    if p.alpha == 0.0 {
        return Err(AnalyticError::ZeroAlpha);
    }
    Ok(p.t_local / p.alpha)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    user_counts: Vec<UserCount>,
    trials_per_point: u32,
    params: LatencyModelParams,
    seed: u64,
}

impl SweepConfig {
    pub fn new(
        user_counts: Vec<UserCount>,
        trials_per_point: u32,
        params: LatencyModelParams,
        seed: u64,
    ) -> Result<Self, AnalyticError> {
        if user_counts.is_empty() || user_counts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(AnalyticError::UnorderedUserCounts);
        }
        if trials_per_point == 0 {
            return Err(AnalyticError::NoTrials);
        }
        let params = validate_params(params)?;
        Ok(Self {
            user_counts,
            trials_per_point,
            params,
            seed,
        })
    }

    pub fn user_counts(&self) -> &[UserCount] {
        &self.user_counts
    }

    pub fn trials_per_point(&self) -> u32 {
        self.trials_per_point
    }

    pub fn params(&self) -> &LatencyModelParams {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Summary of all trials at one `(architecture, n)` point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointSummary {
    pub architecture: Architecture,
    pub n: UserCount,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Ordered by architecture (monolith first), then `n`, then trial.
    pub samples: Vec<LatencySample>,
    /// One entry per `(architecture, n)`, in the same order as `samples`.
    pub points: Vec<PointSummary>,
}

impl SweepResult {
    pub fn point(&self, architecture: Architecture, n: UserCount) -> Option<&PointSummary> {
        self.points
            .iter()
            .find(|p| p.architecture == architecture && p.n == n)
    }

    pub fn samples_for(
        &self,
        architecture: Architecture,
        n: UserCount,
    ) -> impl Iterator<Item = &LatencySample> {
        self.samples
            .iter()
            .filter(move |s| s.architecture == architecture && s.n == n)
    }
}

/// Noise draw for one sweep cell, from its own substream.
pub fn cell_noise(
    seed: u64,
    architecture: Architecture,
    n: UserCount,
    trial: u32,
    spec: NoiseSpec,
) -> f64 {
    let mut rng = RngStream::new(substream_seed(
        seed,
        architecture.as_str(),
        n.get(),
        u64::from(trial),
    ));
    sample_gaussian(&mut rng, spec)
}

pub fn run_sweep(cfg: &SweepConfig) -> SweepResult {
    let p = cfg.params;
    let mut samples = Vec::with_capacity(2 * cfg.user_counts.len() * cfg.trials_per_point as usize);
    let mut points = Vec::with_capacity(2 * cfg.user_counts.len());
    for arch in Architecture::ALL {
        for &n in &cfg.user_counts {
            let start = samples.len();
            for trial in 0..cfg.trials_per_point {
                let latency = match arch {
                    Architecture::Monolith => {
                        eval_mono(n, &p, cell_noise(cfg.seed, arch, n, trial, p.mono_noise()))
                    }
                    Architecture::Microservice => {
                        eval_micro(&p, cell_noise(cfg.seed, arch, n, trial, p.micro_noise()))
                    }
                };
                samples.push(LatencySample::new(arch, n, trial, latency));
            }
            let values: Vec<f64> = samples[start..].iter().map(|s| s.latency()).collect();
            let summary = summarize(&values).expect("at least one finite trial per point");
            points.push(PointSummary {
                architecture: arch,
                n,
                summary,
            });
        }
    }
    SweepResult { samples, points }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::std_dev;
    use proptest::prelude::*;

    fn users(ns: &[u64]) -> Vec<UserCount> {
        ns.iter().map(|&n| UserCount::new(n).unwrap()).collect()
    }

    fn defaults() -> LatencyModelParams {
        LatencyModelParams::default()
    }

    #[test]
    fn zero_sigma_is_zero() {
        for seed in [0, 1, 42, u64::MAX] {
            let mut rng = RngStream::new(seed);
            assert_eq!(sample_gaussian(&mut rng, NoiseSpec::NONE), 0.0);
        }
    }

    #[test]
    fn unit_sigma_std() {
        let mut rng = RngStream::new(42);
        let spec = NoiseSpec::new(1.0).unwrap();
        let xs: Vec<f64> = (0..100_000)
            .map(|_| sample_gaussian(&mut rng, spec))
            .collect();
        let s = std_dev(&xs).unwrap();
        assert!((s - 1.0).abs() < 0.01, "std {s}");
    }

    #[test]
    fn sigma_scales_linearly() {
        let mut a = RngStream::new(5);
        let mut b = RngStream::new(5);
        let one = NoiseSpec::new(1.0).unwrap();
        let three = NoiseSpec::new(3.0).unwrap();
        for _ in 0..1000 {
            let x = sample_gaussian(&mut a, one);
            let y = sample_gaussian(&mut b, three);
            assert_eq!(y, 3.0 * x);
        }
    }

    #[test]
    fn mono_substitution() {
        let n = UserCount::new(1000).unwrap();
        assert_eq!(eval_mono(n, &defaults(), 0.0), 25.0);
        let flat = LatencyModelParams {
            alpha: 0.0,
            ..defaults()
        };
        assert_eq!(eval_mono(UserCount::new(1).unwrap(), &flat, 0.0), 5.0);
        assert_eq!(
            eval_mono(UserCount::new(100).unwrap(), &defaults(), -10.0),
            0.0
        );
    }

    #[test]
    fn micro_substitution() {
        let p = defaults();
        assert_eq!(eval_micro(&p, 0.0), 7.0);
        let no_local = LatencyModelParams { t_local: 0.0, ..p };
        assert_eq!(eval_micro(&no_local, 0.0), 5.0);
    }

    #[test]
    fn crossover_values() {
        assert_eq!(crossover_n(&defaults()), Ok(100.0));
        let p = LatencyModelParams {
            t_local: 0.0,
            alpha: 0.5,
            ..defaults()
        };
        assert_eq!(crossover_n(&p), Ok(0.0));
        let p = LatencyModelParams {
            alpha: 0.0,
            ..defaults()
        };
        assert_eq!(crossover_n(&p), Err(AnalyticError::ZeroAlpha));
    }

    #[test]
    fn sweep_config_guards() {
        let p = defaults();
        assert_eq!(
            SweepConfig::new(users(&[100, 100]), 3, p, 1),
            Err(AnalyticError::UnorderedUserCounts)
        );
        assert_eq!(
            SweepConfig::new(vec![], 3, p, 1),
            Err(AnalyticError::UnorderedUserCounts)
        );
        assert_eq!(
            SweepConfig::new(users(&[100]), 0, p, 1),
            Err(AnalyticError::NoTrials)
        );
    }

    #[test]
    fn zero_noise_sweep_collapses() {
        let cfg = SweepConfig::new(users(&[100]), 3, defaults().without_noise(), 9).unwrap();
        let r = run_sweep(&cfg);
        let n = UserCount::new(100).unwrap();
        assert_eq!(r.samples.len(), 6);
        assert_eq!(
            r.point(Architecture::Monolith, n).unwrap().summary.mean,
            5.0 + 100.0 * 0.02
        );
        assert_eq!(
            r.point(Architecture::Microservice, n).unwrap().summary.mean,
            7.0
        );
    }

    #[test]
    fn sweep_is_deterministic() {
        let cfg = SweepConfig::new(users(&[100, 1000]), 20, defaults(), 77).unwrap();
        assert_eq!(run_sweep(&cfg), run_sweep(&cfg));
    }

    #[test]
    fn extending_sweep_keeps_existing_samples() {
        let small = SweepConfig::new(users(&[500]), 5, defaults(), 3).unwrap();
        let big = SweepConfig::new(users(&[100, 500, 2000]), 9, defaults(), 3).unwrap();
        let a = run_sweep(&small);
        let b = run_sweep(&big);
        let n = UserCount::new(500).unwrap();
        for arch in Architecture::ALL {
            let xs: Vec<_> = a.samples_for(arch, n).collect();
            let ys: Vec<_> = b.samples_for(arch, n).take(5).collect();
            assert_eq!(xs, ys);
        }
    }

    #[test]
    fn law_of_large_numbers_at_defaults() {
        let cfg = SweepConfig::new(users(&[1000]), 10_000, defaults(), 1).unwrap();
        let r = run_sweep(&cfg);
        let n = UserCount::new(1000).unwrap();
        let mono = r.point(Architecture::Monolith, n).unwrap().summary.mean;
        let micro = r.point(Architecture::Microservice, n).unwrap().summary.mean;
        assert!((mono - 25.0).abs() < 0.1, "mono {mono}");
        assert!((micro - 7.0).abs() < 0.1, "micro {micro}");
    }

    #[test]
    fn point_means_match_samples() {
        let cfg = SweepConfig::new(users(&[10, 20, 30]), 7, defaults(), 4).unwrap();
        let r = run_sweep(&cfg);
        for pt in &r.points {
            let xs: Vec<f64> = r
                .samples_for(pt.architecture, pt.n)
                .map(|s| s.latency())
                .collect();
            assert_eq!(xs.len(), 7);
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            assert!((pt.summary.mean - m).abs() <= 1e-12 * m.abs().max(1.0));
        }
    }

    proptest! {
        #[test]
        fn mono_strictly_increasing(n in 1u64..1_000_000, alpha in 1e-6f64..10.0) {
            let p = LatencyModelParams { alpha, ..defaults() };
            let a = eval_mono(UserCount::new(n).unwrap(), &p, 0.0);
            let b = eval_mono(UserCount::new(n + 1).unwrap(), &p, 0.0);
            prop_assert!(b > a);
        }

        #[test]
        fn beyond_crossover_mono_is_slower(t_local in 0.0f64..50.0, alpha in 1e-4f64..1.0, extra in 1u64..100_000) {
            let p = LatencyModelParams { alpha, t_local, ..defaults() };
            let x = crossover_n(&p).unwrap();
            let n = x.ceil() as u64 + extra;
            prop_assert!(eval_mono(UserCount::new(n).unwrap(), &p, 0.0) > eval_micro(&p, 0.0));
        }

        #[test]
        fn micro_flat_across_sweep(seed in any::<u64>()) {
            let p = LatencyModelParams { sigma_micro: 0.0, ..defaults() };
            let cfg = SweepConfig::new(users(&[1, 10, 1000, 1_000_000]), 3, p, seed).unwrap();
            let r = run_sweep(&cfg);
            let micro: Vec<f64> = r.samples.iter()
                .filter(|s| s.architecture == Architecture::Microservice)
                .map(|s| s.latency())
                .collect();
            prop_assert!(micro.iter().all(|&x| x.to_bits() == micro[0].to_bits()));
        }
    }
}
