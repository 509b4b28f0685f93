//! Independence tests based on `t*`, and power / sample-size calculations.
//!
//! Tests are one-sided: `τ* ≥ 0` with equality exactly under independence,
//! so only large values of `n·t*` count against the null.

use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimator::{dense_ranks, tstar, PairedSample};
use crate::marginal::DiscreteMarginal;
use crate::nulldist::{InversionMethod, NullDistribution};
use crate::rng::stream_rng;
use crate::spectrum::{
    spectrum_continuous, spectrum_discrete, spectrum_mixed, MarginalKind, MixtureSpectrum, DEFAULT_EPS, MAX_SUPPORT,
};

/// Sample size below which the asymptotic law is flagged as unreliable.
pub const RECOMMENDED_MIN_N: usize = 80;
pub const MIN_PERMUTATIONS: usize = 99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisKind {
    Continuous,
    Discrete,
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResolvedKind {
    Continuous,
    Discrete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
        }
    }
}

/// How each axis is to be treated, optionally with known discrete laws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalSpec {
    pub x: AxisKind,
    pub y: AxisKind,
    pub x_marginal: Option<DiscreteMarginal>,
    pub y_marginal: Option<DiscreteMarginal>,
}

impl MarginalSpec {
    pub fn new(x: AxisKind, y: AxisKind) -> Self {
        Self { x, y, x_marginal: None, y_marginal: None }
    }

    pub fn auto() -> Self {
        Self::new(AxisKind::Auto, AxisKind::Auto)
    }

    pub fn continuous() -> Self {
        Self::new(AxisKind::Continuous, AxisKind::Continuous)
    }

    pub fn discrete() -> Self {
        Self::new(AxisKind::Discrete, AxisKind::Discrete)
    }
}

impl Default for MarginalSpec {
    fn default() -> Self {
        Self::auto()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    /// An axis declared continuous contains tied values.
    TiesInContinuousAxis { axis: Axis },
    /// `Auto` saw a discrete-looking axis with too many levels for the
    /// discrete spectrum and fell back to continuous.
    SupportTooLargeForDiscrete { axis: Axis, distinct: usize },
    SmallSample { n: usize, recommended: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedMarginals {
    pub x: ResolvedKind,
    pub y: ResolvedKind,
    pub x_marginal: Option<DiscreteMarginal>,
    pub y_marginal: Option<DiscreteMarginal>,
    pub warnings: Vec<Warning>,
}

impl ResolvedMarginals {
    pub fn marginal_kind(&self) -> MarginalKind {
        match (self.x, self.y) {
            (ResolvedKind::Continuous, ResolvedKind::Continuous) => MarginalKind::ContinuousContinuous,
            (ResolvedKind::Discrete, ResolvedKind::Discrete) => MarginalKind::DiscreteDiscrete,
            _ => MarginalKind::DiscreteContinuous,
        }
    }
}

fn resolve_axis(
    values: &[f64],
    kind: AxisKind,
    given: Option<&DiscreteMarginal>,
    axis: Axis,
    warnings: &mut Vec<Warning>,
) -> Result<(ResolvedKind, Option<DiscreteMarginal>)> {
    let n = values.len();
    let distinct = dense_ranks(values).1;
    let tied = distinct < n;
    let discrete = || -> Result<(ResolvedKind, Option<DiscreteMarginal>)> {
        let m = match given {
            Some(m) => m.clone(),
            None => DiscreteMarginal::from_observations(values)?,
        };
        if m.len() > MAX_SUPPORT {
            return Err(Error::SupportTooLarge { size: m.len(), cap: MAX_SUPPORT });
        }
        Ok((ResolvedKind::Discrete, Some(m)))
    };
    match kind {
        AxisKind::Continuous => {
            if tied {
                warnings.push(Warning::TiesInContinuousAxis { axis });
            }
            Ok((ResolvedKind::Continuous, None))
        }
        AxisKind::Discrete => discrete(),
        AxisKind::Auto => {
            let threshold = 10usize.max((n as f64).sqrt() as usize);
            if tied && distinct <= threshold {
                if distinct > MAX_SUPPORT && given.is_none() {
                    warnings.push(Warning::SupportTooLargeForDiscrete { axis, distinct });
                    return Ok((ResolvedKind::Continuous, None));
                }
                discrete()
            } else {
                Ok((ResolvedKind::Continuous, None))
            }
        }
    }
}

/// Decides the type of each axis. `Auto` makes an axis discrete when it has
/// at least one tie and at most `max(10, √n)` distinct values; discrete axes
/// get the empirical law of the observed values unless a law was supplied.
pub fn resolve_marginals(s: &PairedSample, spec: &MarginalSpec) -> Result<ResolvedMarginals> {
    let mut warnings = Vec::new();
    let (x, x_marginal) = resolve_axis(s.xs(), spec.x, spec.x_marginal.as_ref(), Axis::X, &mut warnings)?;
    let (y, y_marginal) = resolve_axis(s.ys(), spec.y, spec.y_marginal.as_ref(), Axis::Y, &mut warnings)?;
    Ok(ResolvedMarginals { x, y, x_marginal, y_marginal, warnings })
}

/// The marginal-free null law for two continuous axes at the default
/// truncation, built once per process.
pub fn continuous_null() -> &'static NullDistribution {
    static NULL: OnceLock<NullDistribution> = OnceLock::new();
    NULL.get_or_init(|| NullDistribution::new(spectrum_continuous(DEFAULT_EPS).expect("default eps is valid")))
}

/// Spectrum of the limiting law for the resolved marginals.
pub fn null_spectrum(resolved: &ResolvedMarginals, eps: f64) -> Result<MixtureSpectrum> {
    match (&resolved.x_marginal, &resolved.y_marginal) {
        (None, None) => spectrum_continuous(eps),
        (Some(mx), Some(my)) => spectrum_discrete(mx, my),
        (Some(m), None) | (None, Some(m)) => spectrum_mixed(m, eps),
    }
}

fn null_distribution(resolved: &ResolvedMarginals, eps: f64) -> Result<std::borrow::Cow<'static, NullDistribution>> {
    if resolved.x_marginal.is_none() && resolved.y_marginal.is_none() && eps == DEFAULT_EPS {
        return Ok(std::borrow::Cow::Borrowed(continuous_null()));
    }
    Ok(std::borrow::Cow::Owned(NullDistribution::new(null_spectrum(resolved, eps)?)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestMethod {
    Asymptotic,
    Permutation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub kind: MarginalKind,
    pub top_weights: Vec<f64>,
    pub weight_count: usize,
    pub tail_bound: f64,
    pub inversion: InversionMethod,
    pub inversion_error: f64,
}

impl SpectrumSummary {
    const TOP: usize = 5;

    pub fn of(null: &NullDistribution) -> Self {
        let s = null.spectrum();
        Self {
            kind: s.kind(),
            top_weights: s.weights().iter().take(Self::TOP).copied().collect(),
            weight_count: s.len(),
            tail_bound: s.tail_bound(),
            inversion: null.method(),
            inversion_error: null.inversion_error(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub t_star: f64,
    pub n: usize,
    /// `n·t*`, the statistic compared with the null law.
    pub scaled_statistic: f64,
    pub p_value: f64,
    pub method: TestMethod,
    pub x_kind: Option<ResolvedKind>,
    pub y_kind: Option<ResolvedKind>,
    pub spectrum: Option<SpectrumSummary>,
    pub seed: Option<u64>,
    pub permutations: Option<usize>,
    pub warnings: Vec<Warning>,
}

/// Asymptotic test with the default spectrum truncation.
pub fn test_asymptotic(s: &PairedSample, spec: &MarginalSpec) -> Result<TestResult> {
    test_asymptotic_with(s, spec, DEFAULT_EPS)
}

/// Asymptotic test: `p = P(Q ≥ n·t*)` under the limiting law matching the
/// resolved marginal types, with estimated laws plugged in for discrete axes.
pub fn test_asymptotic_with(s: &PairedSample, spec: &MarginalSpec, eps: f64) -> Result<TestResult> {
    s.require(4)?;
    let mut resolved = resolve_marginals(s, spec)?;
    for (values, axis) in [(s.xs(), Axis::X), (s.ys(), Axis::Y)] {
        if dense_ranks(values).1 == 1 {
            return Err(Error::DegenerateMarginal(axis.name()));
        }
    }
    for (m, axis) in [(&resolved.x_marginal, Axis::X), (&resolved.y_marginal, Axis::Y)] {
        if m.as_ref().is_some_and(|m| m.len() == 1) {
            return Err(Error::DegenerateMarginal(axis.name()));
        }
    }
    if s.len() < RECOMMENDED_MIN_N {
        resolved.warnings.push(Warning::SmallSample { n: s.len(), recommended: RECOMMENDED_MIN_N });
    }
    let est = tstar(s)?;
    let scaled = est.scaled();
    let null = null_distribution(&resolved, eps)?;
    let p = null.sf(scaled)?.clamp(0.0, 1.0);
    Ok(TestResult {
        t_star: est.value,
        n: est.n,
        scaled_statistic: scaled,
        p_value: p,
        method: TestMethod::Asymptotic,
        x_kind: Some(resolved.x),
        y_kind: Some(resolved.y),
        spectrum: Some(SpectrumSummary::of(&null)),
        seed: None,
        permutations: None,
        warnings: resolved.warnings,
    })
}

/// Permutation test: `p = (1 + #{b : t*_b ≥ t*_obs}) / (B + 1)` over `B`
/// random re-pairings of the ys. Permutation `b` uses stream `b` of `seed`,
/// so the result does not depend on the thread count.
pub fn test_permutation(s: &PairedSample, permutations: usize, seed: u64) -> Result<TestResult> {
    s.require(4)?;
    if permutations < MIN_PERMUTATIONS {
        return Err(Error::InvalidParameter(format!(
            "at least {MIN_PERMUTATIONS} permutations required, got {permutations}"
        )));
    }
    let observed = tstar(s)?;
    let exceed = (0..permutations)
        .into_par_iter()
        .map(|b| {
            let mut ys = s.ys().to_vec();
            ys.shuffle(&mut stream_rng(seed, b as u64));
            let perm = PairedSample::new(s.xs().to_vec(), ys)?;
            Ok(usize::from(tstar(&perm)?.kernel_sum_thirds >= observed.kernel_sum_thirds))
        })
        .collect::<Result<Vec<usize>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(TestResult {
        t_star: observed.value,
        n: observed.n,
        scaled_statistic: observed.scaled(),
        p_value: (1 + exceed) as f64 / (permutations + 1) as f64,
        method: TestMethod::Permutation,
        x_kind: None,
        y_kind: None,
        spectrum: None,
        seed: Some(seed),
        permutations: Some(permutations),
        warnings: Vec::new(),
    })
}

/// Inputs of the normal-approximation power bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRequest {
    pub tau_star: f64,
    /// Upper bound on `σ₁² = Var[h₁]`; at most 1/4.
    pub sigma1sq_bound: f64,
    pub alpha: f64,
    /// Target power.
    pub beta: f64,
    /// Null law supplying the critical value.
    pub spectrum: MixtureSpectrum,
}

impl PowerRequest {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.tau_star > 0.0 && self.tau_star <= 2.0 / 3.0) {
            return bad(format!("tau_star must lie in (0, 2/3], got {}", self.tau_star));
        }
        if !(self.sigma1sq_bound > 0.0 && self.sigma1sq_bound <= 0.25) {
            return bad(format!("sigma1sq_bound must lie in (0, 1/4], got {}", self.sigma1sq_bound));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad(format!("beta must lie in (0, 1), got {}", self.beta));
        }
        Ok(())
    }
}

/// A validated [`PowerRequest`] with its critical value `c_α` resolved.
#[derive(Debug, Clone)]
pub struct PowerCalculator {
    request: PowerRequest,
    critical_value: f64,
}

impl PowerCalculator {
    pub fn new(request: PowerRequest) -> Result<Self> {
        request.validate()?;
        let critical_value = if request.spectrum.kind() == MarginalKind::ContinuousContinuous
            && request.spectrum == *continuous_null().spectrum()
        {
            continuous_null().quantile(1.0 - request.alpha)?
        } else {
            NullDistribution::new(request.spectrum.clone()).quantile(1.0 - request.alpha)?
        };
        Ok(Self { request, critical_value })
    }

    /// `c_α`, the `1 − α` quantile of the null law of `n·t*`.
    pub fn critical_value(&self) -> f64 {
        self.critical_value
    }

    pub fn request(&self) -> &PowerRequest {
        &self.request
    }

    /// Lower bound on the power at sample size `n`:
    /// `1 − Φ((c_α/n − τ*) / √(16σ̄₁²/n))` when `c_α/n ≤ τ*`, else 0.
    pub fn power(&self, n: usize) -> Result<f64> {
        if n < 4 {
            return Err(Error::InsufficientSample { needed: 4, got: n });
        }
        let nf = n as f64;
        let threshold = self.critical_value / nf;
        if threshold > self.request.tau_star {
            return Ok(0.0);
        }
        let sd = (16.0 * self.request.sigma1sq_bound / nf).sqrt();
        let z = (threshold - self.request.tau_star) / sd;
        Ok(1.0 - Normal::standard().cdf(z))
    }

    fn adequate(&self, n: usize) -> Result<bool> {
        Ok(self.power(n)? >= self.request.beta)
    }

    /// Smallest `n ≥ 4` whose power bound reaches `β`.
    pub fn sample_size(&self) -> Result<usize> {
        let mut hi = 4usize;
        while !self.adequate(hi)? {
            if hi > 1 << 40 {
                return Err(Error::NoConvergence(hi));
            }
            hi *= 2;
        }
        let mut lo = hi / 2;
        if lo < 4 {
            return Ok(hi);
        }
        // invariant: lo inadequate, hi adequate
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.adequate(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }
}

pub fn power_normal_approx(req: &PowerRequest, n: usize) -> Result<f64> {
    PowerCalculator::new(req.clone())?.power(n)
}

pub fn sample_size(req: &PowerRequest) -> Result<usize> {
    PowerCalculator::new(req.clone())?.sample_size()
}
