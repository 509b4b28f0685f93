//! Scenario samplers and Monte Carlo study drivers.
//!
//! Replicate `r` of a study at sample size `n` draws from the stream
//! `stream_id(&[study tag, n, r])` of the user seed and results are reduced
//! in replicate order, so outputs do not depend on the thread count.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::estimator::{dense_ranks, tstar, PairedSample};
use crate::inference::{continuous_null, test_asymptotic, AxisKind, MarginalSpec, SpectrumSummary};
use crate::marginal::DiscreteMarginal;
use crate::nulldist::NullDistribution;
use crate::rng::{stream_id, stream_rng, StreamRng};
use crate::spectrum::{spectrum_continuous, spectrum_discrete, spectrum_mixed, DEFAULT_EPS};
use crate::stats::{ks_distance, mean, pearson, proportion_se, std_error};

/// Side of the square grid used by the discrete scenarios.
pub const GRID: usize = 5;
/// Monte Carlo replicates per point when a caller has no better choice.
pub const DEFAULT_REPS: usize = 2000;

const TAG_DRAW: u64 = 0;
const TAG_CURVE: u64 = 1;
const TAG_CONVERGENCE: u64 = 2;
const TAG_POWER: u64 = 3;
const TAG_SAMPLE_SIZE: u64 = 4;

/// Cells of the 5×5 grid carrying the dependent component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridPattern {
    /// `{(i, i)}`.
    Diagonal,
    /// `{(1,1), (2,5), (3,3), (4,4), (5,2)}`, a non-monotone matching.
    Permutation,
    /// The first column together with the last row, `{(1, y)} ∪ {(x, 5)}`.
    LShape,
    UniformGrid,
}

impl GridPattern {
    fn contains(self, x: usize, y: usize) -> bool {
        match self {
            GridPattern::Diagonal => x == y,
            GridPattern::Permutation => matches!((x, y), (1, 1) | (2, 5) | (3, 3) | (4, 4) | (5, 2)),
            GridPattern::LShape => x == 1 || y == GRID,
            GridPattern::UniformGrid => true,
        }
    }
}

/// Law of `X` in the mixed mean-shift scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixedDesign {
    /// `X ~ Bernoulli(0.3)`; `Y | X = 0` has mean `μ`, `Y | X = 1` mean 0.
    Bernoulli,
    /// `X` uniform on `{1, …, 6}`; `Y` has mean `μ` when `X` is even.
    DieEven,
}

impl MixedDesign {
    pub fn x_marginal(self) -> DiscreteMarginal {
        match self {
            MixedDesign::Bernoulli => DiscreteMarginal::new(vec![0.0, 1.0], vec![0.7, 0.3]),
            MixedDesign::DieEven => DiscreteMarginal::uniform(6),
        }
        .expect("fixed laws are valid")
    }

    fn shifted(self, x: f64) -> bool {
        match self {
            MixedDesign::Bernoulli => x == 0.0,
            MixedDesign::DieEven => x as u32 % 2 == 0,
        }
    }
}

/// A single marginal law for the independence scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum MarginalLaw {
    StandardNormal,
    Discrete { marginal: DiscreteMarginal },
}

impl MarginalLaw {
    fn draw(&self, rng: &mut StreamRng) -> f64 {
        match self {
            MarginalLaw::StandardNormal => StandardNormal.sample(rng),
            MarginalLaw::Discrete { marginal } => draw_discrete(marginal, rng),
        }
    }

    fn discrete(&self) -> Option<&DiscreteMarginal> {
        match self {
            MarginalLaw::StandardNormal => None,
            MarginalLaw::Discrete { marginal } => Some(marginal),
        }
    }

    fn axis_kind(&self) -> AxisKind {
        match self {
            MarginalLaw::StandardNormal => AxisKind::Continuous,
            MarginalLaw::Discrete { .. } => AxisKind::Discrete,
        }
    }
}

fn draw_discrete(m: &DiscreteMarginal, rng: &mut StreamRng) -> f64 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (v, p) in m.iter() {
        acc += p;
        if u < acc {
            return v;
        }
    }
    *m.support().last().expect("marginals are nonempty")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    BivariateNormal { rho: f64 },
    /// Mixture `weight · pattern + (1 − weight) · uniform` on `{1..5}²`,
    /// each component uniform over its cells. `y = 1` is the top row.
    DiscreteGrid { pattern: GridPattern, weight: f64 },
    /// Discrete `X`, then `Y | X = x ~ N(μ_x, 1)`.
    MixedMeanShift { design: MixedDesign, mu: f64 },
    /// Independent axes with the given laws.
    Independent { x: MarginalLaw, y: MarginalLaw },
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        match self {
            Scenario::BivariateNormal { rho } if !(-1.0..=1.0).contains(rho) => {
                bad(format!("rho must lie in [-1, 1], got {rho}"))
            }
            Scenario::DiscreteGrid { weight, .. } if !(0.0..=1.0).contains(weight) => {
                bad(format!("mixture weight must lie in [0, 1], got {weight}"))
            }
            Scenario::MixedMeanShift { mu, .. } if !mu.is_finite() => bad(format!("mean shift must be finite, got {mu}")),
            _ => Ok(()),
        }
    }

    /// The 5×5 probability table `mass[x−1][y−1]` of a grid scenario.
    pub fn grid_masses(pattern: GridPattern, weight: f64) -> [[f64; GRID]; GRID] {
        let cells = (1..=GRID).flat_map(|x| (1..=GRID).map(move |y| (x, y))).filter(|&(x, y)| pattern.contains(x, y));
        let k = cells.count() as f64;
        let mut t = [[(1.0 - weight) / (GRID * GRID) as f64; GRID]; GRID];
        for (x, row) in t.iter_mut().enumerate() {
            for (y, cell) in row.iter_mut().enumerate() {
                if pattern.contains(x + 1, y + 1) {
                    *cell += weight / k;
                }
            }
        }
        t
    }

    /// Marginal types a test of this scenario should declare.
    pub fn marginal_spec(&self) -> MarginalSpec {
        match self {
            Scenario::BivariateNormal { .. } => MarginalSpec::continuous(),
            Scenario::DiscreteGrid { .. } => MarginalSpec::discrete(),
            Scenario::MixedMeanShift { .. } => MarginalSpec::new(AxisKind::Discrete, AxisKind::Continuous),
            Scenario::Independent { x, y } => MarginalSpec::new(x.axis_kind(), y.axis_kind()),
        }
    }

    /// Limiting null law of `n·t*` under the true marginals. Only defined
    /// for scenarios in which `X` and `Y` are independent.
    pub fn null_distribution(&self, eps: f64) -> Result<NullDistribution> {
        let dependent = || Err(Error::InvalidParameter(format!("scenario {self:?} has dependent axes")));
        let spectrum = match self {
            Scenario::BivariateNormal { rho } if *rho == 0.0 => spectrum_continuous(eps)?,
            Scenario::DiscreteGrid { pattern, weight } if *weight == 0.0 || *pattern == GridPattern::UniformGrid => {
                let u = DiscreteMarginal::uniform(GRID)?;
                spectrum_discrete(&u, &u)?
            }
            Scenario::MixedMeanShift { design, mu } if *mu == 0.0 => spectrum_mixed(&design.x_marginal(), eps)?,
            Scenario::Independent { x, y } => match (x.discrete(), y.discrete()) {
                (None, None) => spectrum_continuous(eps)?,
                (Some(mx), Some(my)) => spectrum_discrete(mx, my)?,
                (Some(m), None) | (None, Some(m)) => spectrum_mixed(m, eps)?,
            },
            _ => return dependent(),
        };
        Ok(NullDistribution::new(spectrum))
    }

    fn sample(&self, n: usize, rng: &mut StreamRng) -> Result<PairedSample> {
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        match self {
            Scenario::BivariateNormal { rho } => {
                let c = (1.0 - rho * rho).max(0.0).sqrt();
                for _ in 0..n {
                    let z1: f64 = StandardNormal.sample(rng);
                    let z2: f64 = StandardNormal.sample(rng);
                    xs.push(z1);
                    ys.push(rho * z1 + c * z2);
                }
            }
            Scenario::DiscreteGrid { pattern, weight } => {
                let table = Self::grid_masses(*pattern, *weight);
                let cells: Vec<(usize, usize, f64)> =
                    (0..GRID).flat_map(|x| (0..GRID).map(move |y| (x, y))).map(|(x, y)| (x, y, table[x][y])).collect();
                for _ in 0..n {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut pick = cells[cells.len() - 1];
                    for &c in &cells {
                        acc += c.2;
                        if u < acc {
                            pick = c;
                            break;
                        }
                    }
                    xs.push((pick.0 + 1) as f64);
                    ys.push((pick.1 + 1) as f64);
                }
            }
            Scenario::MixedMeanShift { design, mu } => {
                let mx = design.x_marginal();
                for _ in 0..n {
                    let x = draw_discrete(&mx, rng);
                    let z: f64 = StandardNormal.sample(rng);
                    xs.push(x);
                    ys.push(z + if design.shifted(x) { *mu } else { 0.0 });
                }
            }
            Scenario::Independent { x, y } => {
                for _ in 0..n {
                    xs.push(x.draw(rng));
                    ys.push(y.draw(rng));
                }
            }
        }
        PairedSample::new(xs, ys)
    }
}

/// `n` draws from `sc`, deterministic in `seed`.
pub fn draw(sc: &Scenario, n: usize, seed: u64) -> Result<PairedSample> {
    draw_stream(sc, n, seed, stream_id(&[TAG_DRAW, n as u64]))
}

/// `n` draws from `sc` on an explicit stream of `seed`.
pub fn draw_stream(sc: &Scenario, n: usize, seed: u64, stream: u64) -> Result<PairedSample> {
    sc.validate()?;
    if n == 0 {
        return Err(Error::InsufficientSample { needed: 1, got: 0 });
    }
    sc.sample(n, &mut stream_rng(seed, stream))
}

fn replicate(sc: &Scenario, n: usize, seed: u64, tag: u64, level: u64, r: usize) -> Result<PairedSample> {
    sc.sample(n, &mut stream_rng(seed, stream_id(&[tag, level, n as u64, r as u64])))
}

fn require_reps(reps: usize, min: usize) -> Result<()> {
    if reps < min {
        return Err(Error::InvalidParameter(format!("at least {min} replicates required, got {reps}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub rho: f64,
    pub mean_t_star: f64,
    pub std_error: f64,
}

/// Monte Carlo mean of `t*` under bivariate normals of correlation `ρ`.
pub fn tau_star_curve(rhos: &[f64], n: usize, reps: usize, seed: u64) -> Result<Vec<CurvePoint>> {
    require_reps(reps, 1)?;
    rhos.iter()
        .enumerate()
        .map(|(i, &rho)| {
            let sc = Scenario::BivariateNormal { rho };
            sc.validate()?;
            let values = (0..reps)
                .into_par_iter()
                .map(|r| Ok(tstar(&replicate(&sc, n, seed, TAG_CURVE, i as u64, r)?)?.value))
                .collect::<Result<Vec<f64>>>()?;
            let se = if reps > 1 { std_error(&values) } else { f64::NAN };
            Ok(CurvePoint { rho, mean_t_star: mean(&values), std_error: se })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub reps: usize,
    /// Kolmogorov distance between the replicates of `n·t*` and the limit.
    pub ks_distance: f64,
    pub mean: f64,
    pub variance: f64,
    /// Replicate values of `n·t*`, in replicate order.
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePoint {
    pub x: f64,
    pub cdf: f64,
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub scenario: Scenario,
    pub seed: u64,
    pub reference: SpectrumSummary,
    pub reference_variance: f64,
    /// The limiting CDF and density on a grid spanning its 0.1%–99.9% range.
    pub reference_curve: Vec<ReferencePoint>,
    pub rows: Vec<ConvergenceRow>,
}

const CURVE_POINTS: usize = 101;

/// Finite-sample law of `n·t*` against its limit under an independence
/// scenario, one row per sample size.
pub fn convergence_study(sc: &Scenario, sizes: &[usize], reps: usize, seed: u64) -> Result<ConvergenceStudy> {
    sc.validate()?;
    require_reps(reps, 1)?;
    if let Some(&n) = sizes.iter().find(|&&n| n < 4) {
        return Err(Error::InsufficientSample { needed: 4, got: n });
    }
    let null = match sc {
        Scenario::BivariateNormal { rho } if *rho == 0.0 => std::borrow::Cow::Borrowed(continuous_null()),
        _ => std::borrow::Cow::Owned(sc.null_distribution(DEFAULT_EPS)?),
    };
    let rows = sizes
        .iter()
        .map(|&n| {
            let samples = (0..reps)
                .into_par_iter()
                .map(|r| Ok(tstar(&replicate(sc, n, seed, TAG_CONVERGENCE, 0, r)?)?.scaled()))
                .collect::<Result<Vec<f64>>>()?;
            let ks = ks_distance(&samples, |x| null.cdf(x))?;
            let var = if reps > 1 { crate::stats::variance(&samples) } else { f64::NAN };
            Ok(ConvergenceRow { n, reps, ks_distance: ks, mean: mean(&samples), variance: var, samples })
        })
        .collect::<Result<Vec<_>>>()?;
    let (lo, hi) = (null.quantile(1e-3)?, null.quantile(1.0 - 1e-3)?);
    let reference_curve = (0..CURVE_POINTS)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / (CURVE_POINTS - 1) as f64;
            Ok(ReferencePoint { x, cdf: null.cdf(x)?, density: null.density(x)? })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceStudy {
        scenario: sc.clone(),
        seed,
        reference: SpectrumSummary::of(&null),
        reference_variance: null.variance(),
        reference_curve,
        rows,
    })
}

/// Two-sided Pearson correlation test: `r·√((n−2)/(1−r²))` against a
/// `t` law with `n − 2` degrees of freedom. With a binary `x` this is the
/// pooled two-sample `t`-test. Constant axes give `p = 1`.
pub fn pearson_test(s: &PairedSample) -> Result<f64> {
    s.require(3)?;
    let Some(r) = pearson(s.xs(), s.ys()) else { return Ok(1.0) };
    if r.abs() >= 1.0 {
        return Ok(0.0);
    }
    let df = (s.len() - 2) as f64;
    let t = r * (df / (1.0 - r * r)).sqrt();
    let law = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok((2.0 * law.sf(t.abs())).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareOutcome {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    /// Cells left out of the statistic because their expected count is 0.
    pub excluded_cells: usize,
}

/// Pearson chi-square test of independence on the contingency table of the
/// observed values, without continuity correction or pooling. When `levels`
/// are given the table uses them, so unobserved levels give empty rows or
/// columns; cells with zero expected count are excluded and counted, and
/// the degrees of freedom use only the nonempty rows and columns.
/// A table with fewer than two nonempty rows or columns gives `p = 1`.
pub fn chi_square_test(s: &PairedSample, levels: Option<(&[f64], &[f64])>) -> Result<ChiSquareOutcome> {
    s.require(1)?;
    let index = |values: &[f64], known: Option<&[f64]>| -> Result<(Vec<usize>, usize)> {
        match known {
            None => Ok(dense_ranks(values)),
            Some(lv) => values
                .iter()
                .map(|v| {
                    lv.iter()
                        .position(|l| l == v)
                        .ok_or_else(|| Error::InvalidParameter(format!("value {v} is not a declared level")))
                })
                .collect::<Result<Vec<_>>>()
                .map(|ix| (ix, lv.len())),
        }
    };
    let (xi, r) = index(s.xs(), levels.map(|l| l.0))?;
    let (yi, c) = index(s.ys(), levels.map(|l| l.1))?;
    let mut table = vec![vec![0usize; c]; r];
    for (&a, &b) in xi.iter().zip(&yi) {
        table[a][b] += 1;
    }
    let n = s.len() as f64;
    let rows: Vec<f64> = table.iter().map(|row| row.iter().sum::<usize>() as f64).collect();
    let cols: Vec<f64> = (0..c).map(|j| table.iter().map(|row| row[j]).sum::<usize>() as f64).collect();
    let mut statistic = 0.0;
    let mut excluded = 0;
    for i in 0..r {
        for j in 0..c {
            let e = rows[i] * cols[j] / n;
            if e == 0.0 {
                excluded += 1;
            } else {
                statistic += (table[i][j] as f64 - e).powi(2) / e;
            }
        }
    }
    let live = |m: &[f64]| m.iter().filter(|&&v| v > 0.0).count();
    let (lr, lc) = (live(&rows), live(&cols));
    if lr < 2 || lc < 2 {
        return Ok(ChiSquareOutcome { statistic, df: 0, p_value: 1.0, excluded_cells: excluded });
    }
    let df = (lr - 1) * (lc - 1);
    let law = ChiSquared::new(df as f64).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(ChiSquareOutcome { statistic, df, p_value: law.sf(statistic), excluded_cells: excluded })
}

/// An external independence test plugged into [`power_study_with`].
pub trait TestHook: Sync {
    fn name(&self) -> &str;
    /// p-value for `sample`; `seed` is unique to the replicate.
    fn p_value(&self, sample: &PairedSample, seed: u64) -> Result<f64>;
}

/// A one-parameter family of scenarios indexed by a dependence level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ScenarioFamily {
    /// Level is the correlation `ρ`.
    BivariateNormal,
    /// Level is the mixture weight.
    DiscreteGrid { pattern: GridPattern },
    /// Level is the mean shift `μ`.
    MixedMeanShift { design: MixedDesign },
}

impl ScenarioFamily {
    pub fn at(&self, level: f64) -> Scenario {
        match *self {
            ScenarioFamily::BivariateNormal => Scenario::BivariateNormal { rho: level },
            ScenarioFamily::DiscreteGrid { pattern } => Scenario::DiscreteGrid { pattern, weight: level },
            ScenarioFamily::MixedMeanShift { design } => Scenario::MixedMeanShift { design, mu: level },
        }
    }

    /// The classical competitor for this family, if one is built in.
    pub fn default_baseline(&self) -> Option<Baseline> {
        match self {
            ScenarioFamily::BivariateNormal | ScenarioFamily::MixedMeanShift { design: MixedDesign::Bernoulli } => {
                Some(Baseline::Pearson)
            }
            ScenarioFamily::DiscreteGrid { .. } => Some(Baseline::ChiSquare),
            ScenarioFamily::MixedMeanShift { design: MixedDesign::DieEven } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Pearson,
    ChiSquare,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub test: String,
    pub rate: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub level: f64,
    pub tests: Vec<Rejection>,
    /// Replicates in which the chi-square statistic excluded empty cells.
    pub chi_square_flagged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerStudy {
    pub family: ScenarioFamily,
    pub n: usize,
    pub reps: usize,
    pub alpha: f64,
    pub seed: u64,
    pub rows: Vec<PowerRow>,
}

pub const MIN_POWER_REPS: usize = 100;
pub const TSTAR_TEST: &str = "t_star";

fn baseline_name(b: Baseline) -> &'static str {
    match b {
        Baseline::Pearson => "pearson",
        Baseline::ChiSquare => "chi_square",
    }
}

/// Rejection rates at level `alpha` of the asymptotic `t*` test and the
/// family's default baseline.
pub fn power_study(
    family: &ScenarioFamily,
    levels: &[f64],
    n: usize,
    reps: usize,
    alpha: f64,
    seed: u64,
) -> Result<PowerStudy> {
    power_study_with(family, levels, n, reps, alpha, seed, family.default_baseline(), None)
}

/// [`power_study`] with an explicit baseline and an optional external test.
#[allow(clippy::too_many_arguments)]
pub fn power_study_with(
    family: &ScenarioFamily,
    levels: &[f64],
    n: usize,
    reps: usize,
    alpha: f64,
    seed: u64,
    baseline: Option<Baseline>,
    hook: Option<&dyn TestHook>,
) -> Result<PowerStudy> {
    require_reps(reps, MIN_POWER_REPS)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if n < 4 {
        return Err(Error::InsufficientSample { needed: 4, got: n });
    }
    let grid_levels: Vec<f64> = (1..=GRID).map(|v| v as f64).collect();
    let rows = levels
        .iter()
        .enumerate()
        .map(|(li, &level)| {
            let sc = family.at(level);
            sc.validate()?;
            let spec = sc.marginal_spec();
            let outcomes = (0..reps)
                .into_par_iter()
                .map(|r| {
                    let stream = stream_id(&[TAG_POWER, li as u64, n as u64, r as u64]);
                    let s = sc.sample(n, &mut stream_rng(seed, stream))?;
                    let t = reject_tstar(&s, &spec, alpha)?;
                    let (b, flagged) = match baseline {
                        None => (None, false),
                        Some(Baseline::Pearson) => (Some(pearson_test(&s)? <= alpha), false),
                        Some(Baseline::ChiSquare) => {
                            let lv = matches!(family, ScenarioFamily::DiscreteGrid { .. })
                                .then_some((grid_levels.as_slice(), grid_levels.as_slice()));
                            let out = chi_square_test(&s, lv)?;
                            (Some(out.p_value <= alpha), out.excluded_cells > 0)
                        }
                    };
                    let h = hook.map(|h| h.p_value(&s, stream).map(|p| p <= alpha)).transpose()?;
                    Ok((t, b, h, flagged))
                })
                .collect::<Result<Vec<_>>>()?;
            let rate = |hits: usize| hits as f64 / reps as f64;
            let row = |name: &str, hits: usize| Rejection {
                test: name.to_string(),
                rate: rate(hits),
                std_error: proportion_se(rate(hits), reps),
            };
            let mut tests = vec![row(TSTAR_TEST, outcomes.iter().filter(|o| o.0).count())];
            if let Some(b) = baseline {
                tests.push(row(baseline_name(b), outcomes.iter().filter(|o| o.1 == Some(true)).count()));
            }
            if let Some(h) = hook {
                tests.push(row(h.name(), outcomes.iter().filter(|o| o.2 == Some(true)).count()));
            }
            Ok(PowerRow { level, tests, chi_square_flagged: outcomes.iter().filter(|o| o.3).count() })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PowerStudy { family: *family, n, reps, alpha, seed, rows })
}

fn reject_tstar(s: &PairedSample, spec: &MarginalSpec, alpha: f64) -> Result<bool> {
    match test_asymptotic(s, spec) {
        Ok(t) => Ok(t.p_value <= alpha),
        // a sample with a constant axis carries no evidence against independence
        Err(Error::DegenerateMarginal(_)) => Ok(false),
        Err(e) => Err(e),
    }
}

/// Monte Carlo power of the asymptotic `t*` test under `sc` at size `n`.
pub fn empirical_power(sc: &Scenario, n: usize, reps: usize, alpha: f64, seed: u64) -> Result<f64> {
    sc.validate()?;
    let spec = sc.marginal_spec();
    let hits = (0..reps)
        .into_par_iter()
        .map(|r| reject_tstar(&replicate(sc, n, seed, TAG_SAMPLE_SIZE, 0, r)?, &spec, alpha))
        .collect::<Result<Vec<bool>>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / reps as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSizePoint {
    pub beta: f64,
    pub n: usize,
    pub power_at_n: f64,
}

/// Smallest `n ≥ 4` whose Monte Carlo power reaches each `β`, searching by
/// doubling then bisection up to `n_max`. Power is treated as nondecreasing
/// in `n`; each candidate `n` is simulated once and shared across `β`s.
pub fn empirical_sample_size(
    sc: &Scenario,
    betas: &[f64],
    alpha: f64,
    reps: usize,
    seed: u64,
    n_max: usize,
) -> Result<Vec<SampleSizePoint>> {
    require_reps(reps, MIN_POWER_REPS)?;
    let mut memo: HashMap<usize, f64> = HashMap::new();
    let mut power = |n: usize| -> Result<f64> {
        if let Some(&p) = memo.get(&n) {
            return Ok(p);
        }
        let p = empirical_power(sc, n, reps, alpha, seed)?;
        memo.insert(n, p);
        Ok(p)
    };
    betas
        .iter()
        .map(|&beta| {
            if !(beta > 0.0 && beta < 1.0) {
                return Err(Error::InvalidParameter(format!("beta must lie in (0, 1), got {beta}")));
            }
            let mut hi = 4;
            while power(hi)? < beta {
                if hi >= n_max {
                    return Err(Error::NoConvergence(hi));
                }
                hi = (2 * hi).min(n_max);
            }
            let mut lo = 3;
            // invariant: power(lo) < beta (or lo < 4), power(hi) ≥ beta
            while hi - lo > 1 {
                let mid = lo + (hi - lo) / 2;
                if power(mid)? >= beta {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            Ok(SampleSizePoint { beta, n: hi, power_at_n: power(hi)? })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_tables_are_distributions() {
        for pattern in [GridPattern::Diagonal, GridPattern::Permutation, GridPattern::LShape, GridPattern::UniformGrid] {
            for i in 0..=10 {
                let t = Scenario::grid_masses(pattern, i as f64 / 10.0);
                let total: f64 = t.iter().flatten().sum();
                assert!((total - 1.0).abs() < 1e-12);
                assert!(t.iter().flatten().all(|&m| m >= 0.0));
            }
        }
        let l = Scenario::grid_masses(GridPattern::LShape, 1.0);
        assert!((l[0][0] - 1.0 / 9.0).abs() < 1e-15);
        assert!((l[4][4] - 1.0 / 9.0).abs() < 1e-15);
        assert_eq!(l[2][2], 0.0);
    }

    #[test]
    fn diagonal_pattern_puts_points_on_the_diagonal() {
        let s = draw(&Scenario::DiscreteGrid { pattern: GridPattern::Diagonal, weight: 1.0 }, 500, 3).unwrap();
        assert!(s.points().all(|p| p.x == p.y && (1.0..=5.0).contains(&p.x)));
    }

    #[test]
    fn permutation_pattern_cells() {
        let s = draw(&Scenario::DiscreteGrid { pattern: GridPattern::Permutation, weight: 1.0 }, 500, 3).unwrap();
        let mut seen: Vec<(u32, u32)> = s.points().map(|p| (p.x as u32, p.y as u32)).collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen, vec![(1, 1), (2, 5), (3, 3), (4, 4), (5, 2)]);
    }

    #[test]
    fn draws_are_reproducible() {
        let sc = Scenario::MixedMeanShift { design: MixedDesign::DieEven, mu: 0.5 };
        assert_eq!(draw(&sc, 50, 9).unwrap(), draw(&sc, 50, 9).unwrap());
        assert_ne!(draw(&sc, 50, 9).unwrap(), draw(&sc, 50, 10).unwrap());
    }

    #[test]
    fn independent_normals_have_small_correlation() {
        let n = 20_000;
        let s = draw(&Scenario::BivariateNormal { rho: 0.0 }, n, 1).unwrap();
        assert!(pearson(s.xs(), s.ys()).unwrap().abs() < 3.0 / (n as f64).sqrt());
        let s = draw(&Scenario::BivariateNormal { rho: 0.5 }, n, 1).unwrap();
        assert!((pearson(s.xs(), s.ys()).unwrap() - 0.5).abs() < 0.03);
    }

    #[test]
    fn bernoulli_design_frequencies() {
        let s = draw(&Scenario::MixedMeanShift { design: MixedDesign::Bernoulli, mu: 1.0 }, 20_000, 2).unwrap();
        let ones = s.xs().iter().filter(|&&x| x == 1.0).count() as f64 / 20_000.0;
        assert!((ones - 0.3).abs() < 0.015);
        let shifted: Vec<f64> = s.points().filter(|p| p.x == 0.0).map(|p| p.y).collect();
        assert!((mean(&shifted) - 1.0).abs() < 0.05);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(draw(&Scenario::BivariateNormal { rho: 1.5 }, 10, 0).is_err());
        assert!(draw(&Scenario::DiscreteGrid { pattern: GridPattern::LShape, weight: -0.1 }, 10, 0).is_err());
        assert!(draw(&Scenario::BivariateNormal { rho: 0.0 }, 0, 0).is_err());
        assert!(Scenario::BivariateNormal { rho: 0.3 }.null_distribution(1e-4).is_err());
    }

    #[test]
    fn curve_endpoints() {
        let c = tau_star_curve(&[0.0, 1.0, -1.0], 30, 40, 5).unwrap();
        assert!(c[0].mean_t_star.abs() < 3.0 * c[0].std_error);
        for p in &c[1..] {
            assert!((p.mean_t_star - 2.0 / 3.0).abs() < 1e-12);
            assert!(p.std_error < 1e-12);
        }
    }

    #[test]
    fn mixed_null_has_zero_mean_tstar() {
        let sc = Scenario::MixedMeanShift { design: MixedDesign::Bernoulli, mu: 0.0 };
        let v: Vec<f64> = (0..400).map(|r| tstar(&replicate(&sc, 40, 1, 9, 0, r).unwrap()).unwrap().value).collect();
        assert!(mean(&v).abs() < 3.0 * std_error(&v));
    }

    #[test]
    fn pearson_test_matches_two_sample_t() {
        let xs = vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
        let ys = vec![1.2, 0.7, 1.9, 2.5, 2.1, 3.3, 2.0];
        let s = PairedSample::new(xs, ys.clone()).unwrap();
        let (a, b) = (&ys[..3], &ys[3..]);
        let pooled = ((a.len() - 1) as f64 * crate::stats::variance(a) + (b.len() - 1) as f64 * crate::stats::variance(b))
            / (ys.len() - 2) as f64;
        let t = (mean(b) - mean(a)) / (pooled * (1.0 / a.len() as f64 + 1.0 / b.len() as f64)).sqrt();
        let p = 2.0 * StudentsT::new(0.0, 1.0, 5.0).unwrap().sf(t.abs());
        assert!((pearson_test(&s).unwrap() - p).abs() < 1e-12);
    }

    #[test]
    fn chi_square_by_hand() {
        // table [[2, 1], [1, 2]]: expected 1.5 everywhere, X² = 4·(0.25/1.5)
        let s = PairedSample::from_pairs(&[(0.0, 0.0), (0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0), (1.0, 1.0)])
            .unwrap();
        let out = chi_square_test(&s, None).unwrap();
        assert!((out.statistic - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(out.df, 1);
        assert!((out.p_value - ChiSquared::new(1.0).unwrap().sf(2.0 / 3.0)).abs() < 1e-15);
        let levels = [0.0, 1.0, 2.0];
        let flagged = chi_square_test(&s, Some((&levels, &levels))).unwrap();
        assert_eq!(flagged.excluded_cells, 5);
        assert_eq!(flagged.df, 1);
        assert!((flagged.statistic - out.statistic).abs() < 1e-15);
    }

    #[test]
    fn convergence_study_is_deterministic() {
        let sc = Scenario::BivariateNormal { rho: 0.0 };
        let a = convergence_study(&sc, &[10, 20], 50, 4).unwrap();
        let b = convergence_study(&sc, &[10, 20], 50, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 2);
        assert_eq!(a.reference_curve.len(), CURVE_POINTS);
        assert!(convergence_study(&sc, &[3], 5, 0).is_err());
    }

    struct AlwaysReject;
    impl TestHook for AlwaysReject {
        fn name(&self) -> &str {
            "always"
        }
        fn p_value(&self, _: &PairedSample, _: u64) -> Result<f64> {
            Ok(0.0)
        }
    }

    #[test]
    fn power_study_reports_each_test() {
        let fam = ScenarioFamily::MixedMeanShift { design: MixedDesign::DieEven };
        let st = power_study_with(&fam, &[0.0], 30, 100, 0.05, 1, Some(Baseline::Pearson), Some(&AlwaysReject)).unwrap();
        let names: Vec<&str> = st.rows[0].tests.iter().map(|t| t.test.as_str()).collect();
        assert_eq!(names, vec![TSTAR_TEST, "pearson", "always"]);
        assert_eq!(st.rows[0].tests[2].rate, 1.0);
        assert!(power_study(&fam, &[0.0], 30, 99, 0.05, 1).is_err());
    }
}
