//! The law of `Q = Σ λ_k (χ²₁ − 1)` for a [`MixtureSpectrum`].
//!
//! Two evaluation engines:
//!
//! * A chi-square series (Ruben's expansion) `P(Q + Σλ ≤ w) = Σ c_j
//!   P(χ²_{K+2j} ≤ w/β)` with `β = min λ`. Used when the spectrum has few
//!   terms and the coefficients converge; this covers the one- and
//!   two-weight laws whose characteristic function decays too slowly to be
//!   inverted.
//! * Gil-Pelaez inversion on the midpoint grid `t_k = (k + ½)h`:
//!   `F(x) = ½ − Σ_k Im[e^{−it_k x} φ(t_k)] / (π(k + ½))`. The grid period
//!   `2π/h` exceeds the width of the region holding all but `1e-10` of the
//!   mass (Chernoff bound), which caps the aliasing error at that level, and
//!   the sum is truncated once a rigorous envelope of the remainder drops
//!   below the configured target.
//!
//! Repeated weights are grouped, and weights with `2λ|t| < 10⁻³` enter the
//! log characteristic function through moment sums, so spectra with
//! hundreds of thousands of weights stay cheap.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared as ChiSquaredLaw, ContinuousCDF};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::spectrum::MixtureSpectrum;

const SERIES_SWITCH: f64 = 1e-3;
// the moment generating function only feeds a tail bound, so its expansion
// may start at larger weights
const MGF_SERIES_SWITCH: f64 = 2e-2;
const ALIAS_PROBABILITY: f64 = 1e-10;
const PERIOD_MARGIN: f64 = 1.05;
const ENVELOPE_CHECK_EVERY: usize = 32;
/// Weight groups drawn exactly by [`NullDistribution::sample`]; the rest are
/// replaced by a normal variable with the same variance.
pub const EXACT_SAMPLER_GROUPS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InversionSettings {
    /// Bound on the truncated part of the inversion sum.
    pub truncation_target: f64,
    /// Largest number of characteristic function evaluations on a grid.
    pub max_evaluations: usize,
    /// Accepted mass missing from the chi-square series.
    pub series_target: f64,
    pub series_max_terms: usize,
    /// Largest total multiplicity handled by the chi-square series.
    pub series_max_dof: usize,
}

impl Default for InversionSettings {
    fn default() -> Self {
        Self {
            truncation_target: 1e-7,
            max_evaluations: 2_000_000,
            series_target: 1e-10,
            series_max_terms: 4000,
            series_max_dof: 256,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InversionMethod {
    /// No weights: `Q = 0`.
    PointMass,
    ChiSquareSeries,
    GilPelaez,
}

#[derive(Debug, Clone)]
struct Series {
    beta: f64,
    dof: usize,
    coeffs: Vec<f64>,
    missing: f64,
}

#[derive(Debug, Clone)]
struct Grid {
    h: f64,
    rho: Vec<f64>,
    theta: Vec<f64>,
    bound: f64,
}

#[derive(Debug, Clone)]
enum Engine {
    PointMass,
    Series(Series),
    Grid(Grid),
}

/// Grouped weights with suffix moment sums for the small-weight expansion.
#[derive(Debug, Clone)]
struct Groups {
    lambda: Vec<f64>,
    mult: Vec<f64>,
    s2: Vec<f64>,
    s3: Vec<f64>,
    s4: Vec<f64>,
}

impl Groups {
    fn new(spectrum: &MixtureSpectrum) -> Self {
        let (lambda, mult): (Vec<f64>, Vec<f64>) =
            spectrum.groups().into_iter().map(|(l, d)| (l, d as f64)).unzip();
        let g = lambda.len();
        let (mut s2, mut s3, mut s4) = (vec![0.0; g + 1], vec![0.0; g + 1], vec![0.0; g + 1]);
        for i in (0..g).rev() {
            let (l, d) = (lambda[i], mult[i]);
            s2[i] = s2[i + 1] + d * l * l;
            s3[i] = s3[i + 1] + d * l * l * l;
            s4[i] = s4[i + 1] + d * l * l * l * l;
        }
        Self { lambda, mult, s2, s3, s4 }
    }

    fn split(&self, scale: f64) -> usize {
        self.split_at(scale, SERIES_SWITCH)
    }

    fn split_at(&self, scale: f64, switch: f64) -> usize {
        self.lambda.partition_point(|&l| 2.0 * l * scale >= switch)
    }

    fn log_cf(&self, t: f64) -> Complex64 {
        let split = self.split(t.abs());
        let (mut re, mut im) = (0.0, 0.0);
        for i in 0..split {
            let (l, d) = (self.lambda[i], self.mult[i]);
            let x = 2.0 * l * t;
            re -= 0.25 * d * (x * x).ln_1p();
            im += d * (0.5 * x.atan() - l * t);
        }
        let t2 = t * t;
        re += -t2 * self.s2[split] + 2.0 * t2 * t2 * self.s4[split];
        im -= 4.0 / 3.0 * t2 * t * self.s3[split];
        Complex64::new(re, im)
    }

    /// `ln E[e^{sQ}]` for `0 ≤ s < 1/(2 max λ)`.
    fn log_mgf(&self, s: f64) -> f64 {
        let split = self.split_at(s, MGF_SERIES_SWITCH);
        let mut v = 0.0;
        for i in 0..split {
            let (l, d) = (self.lambda[i], self.mult[i]);
            v += d * (-0.5 * (-2.0 * l * s).ln_1p() - l * s);
        }
        let s2 = s * s;
        v + s2 * self.s2[split] + 4.0 / 3.0 * s2 * s * self.s3[split] + 2.0 * s2 * s2 * self.s4[split]
    }

    fn shift(&self) -> f64 {
        self.lambda.iter().zip(&self.mult).map(|(l, d)| l * d).sum()
    }

    /// A point `u` with `P(Q > u) ≤ ALIAS_PROBABILITY` by the Chernoff bound.
    fn upper_point(&self) -> f64 {
        let s_max = 0.5 / self.lambda[0] * (1.0 - 1e-12);
        let log_target = ALIAS_PROBABILITY.ln();
        let chernoff = |u: f64| {
            let f = |s: f64| -s * u + self.log_mgf(s);
            let (mut a, mut b) = (0.0, s_max);
            let r = 0.5 * (5f64.sqrt() - 1.0);
            for _ in 0..64 {
                let c = b - r * (b - a);
                let d = a + r * (b - a);
                if f(c) < f(d) {
                    b = d;
                } else {
                    a = c;
                }
            }
            f(0.5 * (a + b))
        };
        let sd = (2.0 * self.s2[0]).sqrt();
        let mut hi = sd.max(self.lambda[0]);
        while chernoff(hi) > log_target {
            hi *= 2.0;
        }
        let mut lo = 0.5 * hi;
        for _ in 0..30 {
            let mid = 0.5 * (lo + hi);
            if chernoff(mid) > log_target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    /// Bound on `Σ_{k ≥ K} ρ(t_k)/(π(k + ½))` given the grid starts its
    /// remainder after `t = tp`. With `S = {λ : λ·tp ≥ 1}` of total
    /// multiplicity `m`, `ρ(t) ≤ ρ(tp)·A·(tp/t)^{m/2}` for `t ≥ tp`, where
    /// `A = Π_S (1 + 1/(4λ²tp²))^{d/4}`; integrating `ρ(t)/t` gives
    /// `ρ(tp)·A·2/(π m)`.
    fn envelope(&self, tp: f64) -> f64 {
        let mut m = 0.0;
        let mut log_a = 0.0;
        for (l, d) in self.lambda.iter().zip(&self.mult) {
            if l * tp < 1.0 {
                break;
            }
            m += d;
            log_a += 0.25 * d * (1.0 / (4.0 * l * l * tp * tp)).ln_1p();
        }
        if m == 0.0 {
            return f64::INFINITY;
        }
        (self.log_cf(tp).re + log_a).exp() * 2.0 / (PI * m)
    }

    fn series(&self, settings: &InversionSettings) -> Option<Series> {
        let dof: f64 = self.mult.iter().sum();
        if dof > settings.series_max_dof as f64 {
            return None;
        }
        let beta = *self.lambda.last()?;
        // the coefficients shrink roughly like (1 − β/max λ)^j
        if settings.series_target.ln() / (-beta / self.lambda[0]).ln_1p() > settings.series_max_terms as f64 {
            return None;
        }
        let ln_c0: f64 = self.lambda.iter().zip(&self.mult).map(|(l, d)| 0.5 * d * (beta / l).ln()).sum();
        let c0 = ln_c0.exp();
        if c0 == 0.0 {
            return None;
        }
        let ratios: Vec<f64> = self.lambda.iter().map(|l| 1.0 - beta / l).collect();
        let mut powers = vec![1.0; ratios.len()];
        let mut g = vec![0.0];
        let mut coeffs = vec![c0];
        let mut total = c0;
        for j in 1..=settings.series_max_terms {
            if 1.0 - total <= settings.series_target {
                return Some(Series { beta, dof: dof as usize, coeffs, missing: (1.0 - total).max(0.0) });
            }
            let mut gj = 0.0;
            for ((p, r), d) in powers.iter_mut().zip(&ratios).zip(&self.mult) {
                *p *= r;
                gj += d * *p;
            }
            g.push(0.5 * gj);
            let cj = (0..j).map(|r| g[j - r] * coeffs[r]).sum::<f64>() / j as f64;
            coeffs.push(cj);
            total += cj;
        }
        (1.0 - total <= settings.series_target)
            .then(|| Series { beta, dof: dof as usize, coeffs, missing: (1.0 - total).max(0.0) })
    }

    fn grid(&self, width: f64, settings: &InversionSettings) -> Grid {
        let h = 2.0 * PI / (PERIOD_MARGIN * width);
        let mut rho = Vec::new();
        let mut theta = Vec::new();
        let mut bound = f64::INFINITY;
        while rho.len() < settings.max_evaluations {
            let t = (rho.len() as f64 + 0.5) * h;
            let lc = self.log_cf(t);
            rho.push(lc.re.exp());
            theta.push(lc.im);
            if rho.len() % ENVELOPE_CHECK_EVERY == 0 {
                bound = self.envelope((rho.len() as f64 - 0.5) * h);
                if bound <= settings.truncation_target {
                    break;
                }
            }
        }
        if bound > settings.truncation_target {
            bound = bound.min(self.envelope((rho.len() as f64 - 0.5) * h));
        }
        Grid { h, rho, theta, bound }
    }
}

impl Series {
    fn cdf(&self, w: f64) -> f64 {
        let y = w / self.beta;
        if y <= 0.0 {
            return 0.0;
        }
        let Ok(law) = ChiSquaredLaw::new(self.dof as f64) else {
            return f64::NAN;
        };
        let mut p = law.cdf(y);
        let mut nu = self.dof as f64;
        // ln of y^{ν/2} e^{−y/2} / (2^{ν/2} Γ(ν/2 + 1))
        let mut ln_term = 0.5 * nu * (0.5 * y).ln() - 0.5 * y - ln_gamma(0.5 * nu + 1.0);
        let mut f = 0.0;
        for &c in &self.coeffs {
            f += c * p;
            p = (p - ln_term.exp()).clamp(0.0, 1.0);
            ln_term += (0.5 * y).ln() - (0.5 * nu + 1.0).ln();
            nu += 2.0;
        }
        f.clamp(0.0, 1.0)
    }

    fn density(&self, w: f64) -> f64 {
        let y = w / self.beta;
        if y <= 0.0 {
            return 0.0;
        }
        let mut nu = self.dof as f64;
        let mut ln_f = (0.5 * nu - 1.0) * y.ln() - 0.5 * y - 0.5 * nu * 2f64.ln() - ln_gamma(0.5 * nu);
        let mut f = 0.0;
        for &c in &self.coeffs {
            f += c * ln_f.exp();
            ln_f += y.ln() - nu.ln();
            nu += 2.0;
        }
        f / self.beta
    }
}

impl Grid {
    fn cdf(&self, x: f64) -> f64 {
        let mut s = 0.0;
        for (k, (r, th)) in self.rho.iter().zip(&self.theta).enumerate() {
            let kh = k as f64 + 0.5;
            s += r * (th - kh * self.h * x).sin() / kh;
        }
        (0.5 - s / PI).clamp(0.0, 1.0)
    }

    fn density(&self, x: f64) -> f64 {
        let mut s = 0.0;
        for (k, (r, th)) in self.rho.iter().zip(&self.theta).enumerate() {
            s += r * (th - (k as f64 + 0.5) * self.h * x).cos();
        }
        (self.h * s / PI).max(0.0)
    }
}

/// Distribution of `Q = Σ λ_k (χ²₁ − 1)`, the limit of `n·t*`.
#[derive(Debug, Clone)]
pub struct NullDistribution {
    spectrum: MixtureSpectrum,
    settings: InversionSettings,
    groups: Groups,
    lower: f64,
    upper: f64,
    engine: Engine,
}

impl NullDistribution {
    pub fn new(spectrum: MixtureSpectrum) -> Self {
        Self::with_settings(spectrum, InversionSettings::default())
    }

    pub fn with_settings(spectrum: MixtureSpectrum, settings: InversionSettings) -> Self {
        let groups = Groups::new(&spectrum);
        if groups.lambda.is_empty() {
            return Self { spectrum, settings, groups, lower: 0.0, upper: 0.0, engine: Engine::PointMass };
        }
        let lower = -groups.shift();
        let upper = groups.upper_point();
        let engine = match groups.series(&settings) {
            Some(series) => Engine::Series(series),
            None => Engine::Grid(groups.grid(upper - lower, &settings)),
        };
        Self { spectrum, settings, groups, lower, upper, engine }
    }

    pub fn spectrum(&self) -> &MixtureSpectrum {
        &self.spectrum
    }

    pub fn settings(&self) -> &InversionSettings {
        &self.settings
    }

    pub fn method(&self) -> InversionMethod {
        match self.engine {
            Engine::PointMass => InversionMethod::PointMass,
            Engine::Series(_) => InversionMethod::ChiSquareSeries,
            Engine::Grid(_) => InversionMethod::GilPelaez,
        }
    }

    /// Infimum of the support, `−Σλ`.
    pub fn lower_bound(&self) -> f64 {
        self.lower
    }

    pub fn variance(&self) -> f64 {
        self.spectrum.variance()
    }

    /// Bound on the absolute CDF error from inversion alone.
    pub fn inversion_error(&self) -> f64 {
        match &self.engine {
            Engine::PointMass => 0.0,
            Engine::Series(s) => s.missing,
            Engine::Grid(g) => g.bound + 2.0 * ALIAS_PROBABILITY,
        }
    }

    /// Inversion error plus the weight dropped by spectrum truncation.
    pub fn reported_precision(&self) -> f64 {
        self.inversion_error() + self.spectrum.tail_bound()
    }

    pub fn char_function(&self, t: f64) -> Complex64 {
        self.groups.log_cf(t).exp()
    }

    fn grid_for(&self, x: f64) -> Result<std::borrow::Cow<'_, Grid>> {
        let Engine::Grid(cached) = &self.engine else {
            unreachable!("grid requested for a non-grid engine")
        };
        let grid = if x <= self.upper {
            std::borrow::Cow::Borrowed(cached)
        } else {
            std::borrow::Cow::Owned(self.groups.grid(x - self.lower, &self.settings))
        };
        if grid.bound > self.settings.truncation_target {
            return Err(Error::Precision { target: self.settings.truncation_target, achieved: grid.bound });
        }
        Ok(grid)
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        if x.is_nan() {
            return Err(Error::NonFinite);
        }
        match &self.engine {
            Engine::PointMass => Ok(if x >= 0.0 { 1.0 } else { 0.0 }),
            _ if x <= self.lower => Ok(0.0),
            _ if x == f64::INFINITY => Ok(1.0),
            Engine::Series(s) => Ok(s.cdf(x - self.lower)),
            Engine::Grid(_) => Ok(self.grid_for(x)?.cdf(x)),
        }
    }

    /// `P(Q > x)`.
    pub fn sf(&self, x: f64) -> Result<f64> {
        Ok(1.0 - self.cdf(x)?)
    }

    pub fn density(&self, x: f64) -> Result<f64> {
        if x.is_nan() {
            return Err(Error::NonFinite);
        }
        match &self.engine {
            Engine::PointMass => Ok(if x == 0.0 { f64::INFINITY } else { 0.0 }),
            _ if x <= self.lower || x == f64::INFINITY => Ok(0.0),
            Engine::Series(s) => Ok(s.density(x - self.lower)),
            Engine::Grid(_) => Ok(self.grid_for(x)?.density(x)),
        }
    }

    /// Smallest `x` with `F(x) ≥ q`, to bisection precision.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidParameter(format!("quantile level must lie in (0, 1), got {q}")));
        }
        if let Engine::PointMass = self.engine {
            return Ok(0.0);
        }
        let sd = self.variance().sqrt();
        let mut lo = (-sd).max(self.lower);
        while lo > self.lower && self.cdf(lo)? > q {
            lo = (2.0 * lo).max(self.lower);
        }
        let mut hi = sd;
        while self.cdf(hi)? < q {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if hi - lo <= 1e-13 * (1.0 + mid.abs()) {
                break;
            }
            if self.cdf(mid)? < q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// `count` draws of `Q`, deterministic in `seed`.
    ///
    /// The largest [`EXACT_SAMPLER_GROUPS`] weight groups are drawn exactly
    /// as `λ(χ²_d − d)`; the remaining weights, each tiny, are summed into
    /// one centred normal with the same variance.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<f64> {
        let g = &self.groups;
        let exact = g.lambda.len().min(EXACT_SAMPLER_GROUPS);
        let chi: Vec<Option<ChiSquared<f64>>> = g.mult[..exact]
            .iter()
            .map(|&d| if d == 1.0 { None } else { ChiSquared::new(d).ok() })
            .collect();
        let rest_sd = (2.0 * g.s2[exact]).sqrt();
        let mut rng = stream_rng(seed, 0);
        (0..count)
            .map(|_| {
                let mut q = 0.0;
                for i in 0..exact {
                    let c = match &chi[i] {
                        None => {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            z * z
                        }
                        Some(dist) => dist.sample(&mut rng),
                    };
                    q += g.lambda[i] * (c - g.mult[i]);
                }
                if rest_sd > 0.0 {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    q += rest_sd * z;
                }
                q
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marginal::DiscreteMarginal;
    use crate::spectrum::{spectrum_continuous, spectrum_discrete, spectrum_mixed, MarginalKind, DEFAULT_EPS};
    use statrs::distribution::Continuous;

    fn single(w: f64) -> NullDistribution {
        NullDistribution::new(MixtureSpectrum::from_weights(vec![w], 0.0, MarginalKind::DiscreteDiscrete).unwrap())
    }

    fn continuous() -> NullDistribution {
        NullDistribution::new(spectrum_continuous(DEFAULT_EPS).unwrap())
    }

    #[test]
    fn char_function_values() {
        let d = single(0.25);
        assert_eq!(d.char_function(0.0), Complex64::new(1.0, 0.0));
        let direct = Complex64::new(1.0, -0.5).powf(-0.5) * Complex64::new(0.0, -0.25).exp();
        assert!((d.char_function(1.0) - direct).norm() < 1e-14);
        let mut prev = 1.0;
        for k in 1..200 {
            let m = d.char_function(f64::from(k) * 0.37).norm();
            assert!(m <= prev);
            prev = m;
        }
    }

    #[test]
    fn series_expansion_matches_exact_log_cf() {
        let spec = MixtureSpectrum::from_weights(vec![1e-4, 3e-5, 2e-5], 0.0, MarginalKind::DiscreteDiscrete).unwrap();
        let d = NullDistribution::new(spec);
        for t in [0.1, 1.0, 4.9] {
            let mut exact = Complex64::new(0.0, 0.0);
            for &l in &[1e-4, 3e-5, 2e-5] {
                exact += -0.5 * Complex64::new(1.0, -2.0 * l * t).ln() - Complex64::new(0.0, l * t);
            }
            assert!((d.groups.log_cf(t) - exact).norm() < 1e-15);
        }
    }

    #[test]
    fn single_weight_cdf_is_chi_square() {
        let d = single(0.25);
        assert_eq!(d.method(), InversionMethod::ChiSquareSeries);
        let chi = ChiSquaredLaw::new(1.0).unwrap();
        assert!((d.cdf(0.0).unwrap() - chi.cdf(1.0)).abs() < 1e-12);
        assert!((d.cdf(0.0).unwrap() - 0.682689).abs() < 1e-6);
        assert!((d.quantile(0.682689).unwrap()).abs() < 1e-5);
        for x in [-0.2, 0.1, 0.7, 2.0] {
            let y = 1.0 + x / 0.25;
            assert!((d.cdf(x).unwrap() - chi.cdf(y)).abs() < 1e-12);
            assert!((d.density(x).unwrap() - chi.pdf(y) / 0.25).abs() < 1e-10);
        }
        assert!(d.cdf(-0.25).unwrap() <= 1e-6);
    }

    #[test]
    fn two_weight_series_matches_grid() {
        let spec = MixtureSpectrum::from_weights(vec![0.3, 0.2, 0.1, 0.1], 0.0, MarginalKind::DiscreteDiscrete).unwrap();
        let series = NullDistribution::new(spec.clone());
        let settings = InversionSettings { series_max_dof: 0, ..InversionSettings::default() };
        let grid = NullDistribution::with_settings(spec, settings);
        assert_eq!(series.method(), InversionMethod::ChiSquareSeries);
        assert_eq!(grid.method(), InversionMethod::GilPelaez);
        for k in 0..40 {
            let x = -0.65 + 0.1 * f64::from(k);
            let (a, b) = (series.cdf(x).unwrap(), grid.cdf(x).unwrap());
            assert!((a - b).abs() < 1e-6, "{x}: {a} vs {b}");
            let (fa, fb) = (series.density(x).unwrap(), grid.density(x).unwrap());
            assert!((fa - fb).abs() < 1e-4, "{x}: {fa} vs {fb}");
        }
    }

    #[test]
    fn continuous_law_properties() {
        let d = continuous();
        assert_eq!(d.method(), InversionMethod::GilPelaez);
        assert!(d.inversion_error() < 1e-6);
        let sd = d.variance().sqrt();
        assert!(d.cdf(d.lower_bound() - 1e-3).unwrap() <= 1e-6);
        assert!(d.cdf(10.0 * sd).unwrap() >= 1.0 - 1e-3);
        let mut prev = 0.0;
        for k in 0..400 {
            let x = d.lower_bound() + 0.01 * f64::from(k);
            let f = d.cdf(x).unwrap();
            assert!(f >= prev - 1e-8);
            prev = f;
        }
        // beyond the cached grid
        assert!(d.cdf(40.0).unwrap() > 1.0 - 1e-9);
    }

    #[test]
    fn quantile_round_trip() {
        for d in [continuous(), single(0.25)] {
            for q in [0.01, 0.2, 0.5, 0.9, 0.95, 0.999] {
                let x = d.quantile(q).unwrap();
                assert!((d.cdf(x).unwrap() - q).abs() <= 1e-6);
            }
            for x in [-0.1, 0.3, 1.5] {
                let back = d.quantile(d.cdf(x).unwrap()).unwrap();
                assert!((back - x).abs() < 1e-4, "{x} vs {back}");
            }
        }
        assert!(single(0.25).quantile(1.0).is_err());
    }

    #[test]
    fn density_integrates_to_one() {
        // the single-weight density has an integrable pole at the lower end,
        // so its first stretch is taken from the CDF
        for (d, offset) in [(continuous(), 0.0), (single(0.25), 1e-2)] {
            let (a, b) = (d.lower_bound() + offset, 12.0);
            let k = 20_000;
            let h = (b - a) / f64::from(k);
            let mut integral = d.cdf(a).unwrap();
            for i in 0..k {
                let x = a + (f64::from(i) + 0.5) * h;
                let f = d.density(x).unwrap();
                assert!(f >= -1e-6);
                integral += f * h;
            }
            assert!((integral - 1.0).abs() < 1e-3, "{integral}");
        }
    }

    #[test]
    fn sampler_moments_and_determinism() {
        let d = continuous();
        let n = 1_000_000;
        let draws = d.sample(n, 17);
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let v = d.variance();
        assert!(mean.abs() < 3.0 * (v / n as f64).sqrt());
        // Var(s²) for a sum of centred chi-squares: (μ₄ − σ⁴)/n with μ₄ = 3σ⁴ + 48Σλ⁴
        let l4: f64 = d.spectrum().weights().iter().map(|l| l.powi(4)).sum();
        let se = ((2.0 * v * v + 48.0 * l4) / n as f64).sqrt();
        assert!((var - v).abs() < 3.0 * se, "{var} vs {v}");
        assert_eq!(d.sample(10, 3), d.sample(10, 3));
        assert_ne!(d.sample(10, 3), d.sample(10, 4));
    }

    #[test]
    fn discrete_and_mixed_spectra_invert() {
        let u10 = DiscreteMarginal::uniform(10).unwrap();
        let geo: Vec<f64> = (1..=12).map(|i| 0.5f64.powi(i)).collect();
        let g12 = DiscreteMarginal::proportional(&geo).unwrap();
        let u5 = DiscreteMarginal::uniform(5).unwrap();
        for spec in [spectrum_discrete(&u10, &g12).unwrap(), spectrum_mixed(&u5, DEFAULT_EPS).unwrap()] {
            let d = NullDistribution::new(spec);
            assert!(d.inversion_error() <= 1e-6, "{:?}", d.method());
            let f = d.cdf(0.0).unwrap();
            assert!(f > 0.3 && f < 0.9);
        }
    }

    #[test]
    fn empty_spectrum_is_a_point_mass() {
        let d = NullDistribution::new(MixtureSpectrum::from_weights(vec![], 0.0, MarginalKind::DiscreteDiscrete).unwrap());
        assert_eq!(d.cdf(-1e-9).unwrap(), 0.0);
        assert_eq!(d.cdf(0.0).unwrap(), 1.0);
        assert_eq!(d.sample(3, 1), vec![0.0; 3]);
    }
}
