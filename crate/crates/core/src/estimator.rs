//! Estimation of the sign covariance from a sample.
//!
//! `t*` is the U-statistic of the kernel `h` over all `C(n, 4)` quadruples.
//! With `C` concordant and `D` discordant quadruples, `t* = (2C − D) / (3·C(n, 4))`,
//! so both estimators below accumulate exact integer counts and only divide at
//! the end.
//!
//! The fast path counts concordant and discordant quadruples on the grid of
//! distinct values. A quadruple whose middle two x-values and middle two
//! y-values both differ has a unique "split cell" `(v, w)`: `v` is its second
//! smallest x-value and `w` its second smallest y-value. Given the 3×3 table
//! of point counts around `(v, w)` (x below / at / above `v`, same for y), the
//! number of quadruples with that split cell follows from an
//! inclusion–exclusion over "at most one point strictly below":
//!
//! ```text
//! [s₂ = v < s₃] = [#{x ≤ v} = 2] − [#{x < v} = 2, #{x = v} = 0]
//! ```
//!
//! Each bracket asks for two points on either side of a threshold, and the
//! quadrant counts `LL, LU, UL, UU` for that threshold give
//! `C(LL,2)·C(UU,2) + C(LU,2)·C(UL,2)` concordant and `LL·LU·UL·UU`
//! discordant quadruples. The sweep costs `O(n + d_x·d_y)` for `d_x, d_y`
//! distinct values.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{a_sign_unchecked, classify_points, Point};
use crate::rng::stream_rng;

/// Observed pairs `(x_i, y_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSample {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl PairedSample {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::LengthMismatch { xs: xs.len(), ys: ys.len() });
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { xs, ys })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        let (xs, ys) = pairs.iter().copied().unzip();
        Self::new(xs, ys)
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn point(&self, i: usize) -> Point {
        Point::new(self.xs[i], self.ys[i])
    }

    pub fn points(&self) -> impl Iterator<Item = Point> + '_ {
        self.xs.iter().zip(&self.ys).map(|(&x, &y)| Point::new(x, y))
    }

    /// Same xs with `ys` replaced.
    pub fn with_ys(&self, ys: Vec<f64>) -> Result<Self> {
        Self::new(self.xs.clone(), ys)
    }

    pub(crate) fn require(&self, needed: usize) -> Result<()> {
        if self.len() < needed {
            Err(Error::InsufficientSample { needed, got: self.len() })
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimatorMethod {
    BruteForce,
    Optimized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TStarEstimate {
    /// `t*`, always in `[−1/3, 2/3]`.
    pub value: f64,
    pub n: usize,
    pub method: EstimatorMethod,
    /// `Σ 3·h` over all quadruples; `value = kernel_sum_thirds / (3·C(n, 4))`.
    pub kernel_sum_thirds: i128,
}

impl TStarEstimate {
    fn from_thirds(kernel_sum_thirds: i128, n: usize, method: EstimatorMethod) -> Self {
        let denom = 3.0 * binomial4(n) as f64;
        Self { value: kernel_sum_thirds as f64 / denom, n, method, kernel_sum_thirds }
    }

    pub fn scaled(&self) -> f64 {
        self.n as f64 * self.value
    }
}

pub(crate) fn binomial4(n: usize) -> i128 {
    let n = n as i128;
    if n < 4 {
        0
    } else {
        n * (n - 1) * (n - 2) * (n - 3) / 24
    }
}

/// `t*` as the plain average of `h` over every quadruple, `O(n⁴)`.
pub fn tstar_bruteforce(s: &PairedSample) -> Result<TStarEstimate> {
    s.require(4)?;
    let pts: Vec<Point> = s.points().collect();
    let n = pts.len();
    let mut sum: i128 = 0;
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                for l in k + 1..n {
                    let c = classify_points(&[pts[i], pts[j], pts[k], pts[l]]);
                    sum += i128::from(c.kernel_value().thirds());
                }
            }
        }
    }
    Ok(TStarEstimate::from_thirds(sum, n, EstimatorMethod::BruteForce))
}

/// Largest sample size accepted by [`tstar`]; cell products stay inside `i64`.
pub const MAX_OPTIMIZED_N: usize = 40_000;

/// `t*` by split-cell counting, `O(n + d_x·d_y)`. Exactly equal to
/// [`tstar_bruteforce`].
pub fn tstar(s: &PairedSample) -> Result<TStarEstimate> {
    s.require(4)?;
    if s.len() > MAX_OPTIMIZED_N {
        return Err(Error::InvalidParameter(format!(
            "sample size {} exceeds {MAX_OPTIMIZED_N}",
            s.len()
        )));
    }
    let counts = quadruple_counts(s.xs(), s.ys());
    let thirds = 2 * counts.concordant - counts.discordant;
    Ok(TStarEstimate::from_thirds(thirds, s.len(), EstimatorMethod::Optimized))
}

/// Concordant and discordant quadruple counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuadrupleCounts {
    pub concordant: i128,
    pub discordant: i128,
}

/// Dense ranks (0-based) of `v` among its distinct values.
pub(crate) fn dense_ranks(v: &[f64]) -> (Vec<usize>, usize) {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_unstable_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0; v.len()];
    let mut distinct = 0;
    let mut prev: Option<f64> = None;
    for &i in &order {
        if prev != Some(v[i]) {
            distinct += 1;
            prev = Some(v[i]);
        }
        ranks[i] = distinct - 1;
    }
    (ranks, distinct)
}

#[inline]
fn choose2(k: i64) -> i64 {
    k * (k - 1) / 2
}

#[inline]
fn conc_disc(ll: i64, lu: i64, ul: i64, uu: i64) -> (i64, i64) {
    (choose2(ll) * choose2(uu) + choose2(lu) * choose2(ul), ll * lu * ul * uu)
}

pub fn quadruple_counts(xs: &[f64], ys: &[f64]) -> QuadrupleCounts {
    let n = xs.len();
    let (rx, dx) = dense_ranks(xs);
    let (ry, dy) = dense_ranks(ys);
    let mut by_x: Vec<Vec<usize>> = vec![Vec::new(); dx];
    let mut row_total = vec![0i64; dy];
    for i in 0..n {
        by_x[rx[i]].push(ry[i]);
        row_total[ry[i]] += 1;
    }

    let mut lt = vec![0i64; dy];
    let mut eq = vec![0i64; dy];
    let mut n_lt = 0i64;
    let (mut conc, mut disc) = (0i128, 0i128);
    for column in &by_x {
        for &w in column {
            eq[w] += 1;
        }
        let n_eq = column.len() as i64;
        let n_gt = n as i64 - n_lt - n_eq;
        let (mut b_lt, mut b_eq, mut b_gt) = (0i64, 0i64, 0i64);
        let (mut conc_v, mut disc_v) = (0i64, 0i64);
        for w in 0..dy {
            let (e_lt, e_eq) = (lt[w], eq[w]);
            let e_gt = row_total[w] - e_lt - e_eq;
            // cell counts: first letter x-side, second y-side (l: below, e: at, g: above)
            let (ll, le, lg) = (b_lt, e_lt, n_lt - b_lt - e_lt);
            let (el, ee, eg) = (b_eq, e_eq, n_eq - b_eq - e_eq);
            let (gl, ge, gg) = (b_gt, e_gt, n_gt - b_gt - e_gt);

            let pp = conc_disc(ll + le + el + ee, lg + eg, gl + ge, gg);
            let mp = conc_disc(ll + le, lg, gl + ge, gg);
            let pm = conc_disc(ll + el, lg + eg, gl, gg);
            let mm = conc_disc(ll, lg, gl, gg);
            conc_v += pp.0 - mp.0 - pm.0 + mm.0;
            disc_v += pp.1 - mp.1 - pm.1 + mm.1;

            b_lt += e_lt;
            b_eq += e_eq;
            b_gt += e_gt;
        }
        conc += i128::from(conc_v);
        disc += i128::from(disc_v);
        for &w in column {
            eq[w] -= 1;
            lt[w] += 1;
        }
        n_lt += n_eq;
    }
    QuadrupleCounts { concordant: conc, discordant: disc }
}

/// The V-statistic form: the average of `a(x…)·a(y…)` over all `n⁴` index
/// tuples, repeats included. `O(n⁴)`.
pub fn tstar_vstatistic(s: &PairedSample) -> Result<f64> {
    s.require(1)?;
    let (xs, ys) = (s.xs(), s.ys());
    let n = xs.len();
    let mut sum: i64 = 0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let ax = a_sign_unchecked(xs[i], xs[j], xs[k], xs[l]);
                    if ax != 0 {
                        sum += i64::from(ax * a_sign_unchecked(ys[i], ys[j], ys[k], ys[l]));
                    }
                }
            }
        }
    }
    Ok(sum as f64 / (n as f64).powi(4))
}

/// Triples drawn per point when estimating the first projection `h₁`.
pub const PROJECTION_TRIPLES: usize = 500;
const PROJECTION_SEED: u64 = 0x7A5_u64 << 32 | 0x51_61;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauSigma1 {
    pub tau_hat: f64,
    /// Estimate of `Var[h₁(X, Y)]`, clamped to `[0, 1/4]`.
    pub sigma1sq_hat: f64,
}

/// Plug-in estimate of `τ*` and of the projection variance `σ₁²`.
///
/// For each point, `h₁` is estimated by averaging `h` over triples of the
/// remaining points: all of them when there are at most
/// [`PROJECTION_TRIPLES`], otherwise that many distinct triples sampled with
/// a fixed seed. `σ₁²` is the sample variance of those estimates.
pub fn estimate_tau_sigma1(s: &PairedSample) -> Result<TauSigma1> {
    s.require(8)?;
    let tau_hat = tstar(s)?.value;
    let pts: Vec<Point> = s.points().collect();
    let n = pts.len();
    let m = n - 1;
    let all_triples = m * (m - 1) * (m - 2) / 6;

    let projections: Vec<f64> = (0..n)
        .map(|i| {
            let others: Vec<Point> = (0..n).filter(|&j| j != i).map(|j| pts[j]).collect();
            let mut sum = 0i64;
            let mut count = 0usize;
            let mut add = |a: usize, b: usize, c: usize| {
                let cls = classify_points(&[pts[i], others[a], others[b], others[c]]);
                sum += i64::from(cls.kernel_value().thirds());
                count += 1;
            };
            if all_triples <= PROJECTION_TRIPLES {
                for a in 0..m {
                    for b in a + 1..m {
                        for c in b + 1..m {
                            add(a, b, c);
                        }
                    }
                }
            } else {
                let mut rng = stream_rng(PROJECTION_SEED, i as u64);
                let mut seen = HashSet::with_capacity(PROJECTION_TRIPLES);
                while seen.len() < PROJECTION_TRIPLES {
                    let mut t = [rng.random_range(0..m), rng.random_range(0..m), rng.random_range(0..m)];
                    t.sort_unstable();
                    if t[0] != t[1] && t[1] != t[2] && seen.insert(t) {
                        add(t[0], t[1], t[2]);
                    }
                }
            }
            sum as f64 / (3.0 * count as f64)
        })
        .collect();

    let mean = projections.iter().sum::<f64>() / n as f64;
    let var = projections.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok(TauSigma1 { tau_hat, sigma1sq_hat: var.clamp(0.0, 0.25) })
}
