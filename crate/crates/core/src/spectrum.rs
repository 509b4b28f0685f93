//! Weights of the limiting null law `n·t* → Σ λ̃_k (χ²₁ − 1)`.
//!
//! Three cases: both margins continuous (a fixed, marginal-free spectrum),
//! both discrete (products of `R`-matrix eigenvalues), and one of each.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marginal::DiscreteMarginal;

/// Weights below this are treated as zero.
pub const EIGEN_CUTOFF: f64 = 1e-14;
/// Largest support handled by the discrete spectra.
pub const MAX_SUPPORT: usize = 64;
/// Default truncation target for infinite spectra.
pub const DEFAULT_EPS: f64 = 1e-4;

const SYMMETRY_TOLERANCE: f64 = 1e-12;
const JACOBI_SWEEPS: usize = 64;

/// Dense square matrix in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymmetricMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::NotSquare);
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { n, data: rows.concat() })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n.max(1)).map(<[f64]>::to_vec).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in i + 1..self.n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// All eigenvalues of a symmetric matrix, with multiplicity, sorted
/// descending. Cyclic Jacobi rotations until the off-diagonal Frobenius norm
/// drops below `1e-13·‖M‖`.
pub fn symmetric_eigenvalues(m: &SymmetricMatrix) -> Result<Vec<f64>> {
    let asym = m.max_asymmetry();
    if asym > SYMMETRY_TOLERANCE {
        return Err(Error::Asymmetric(asym));
    }
    let n = m.n;
    let mut a = m.rows();
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (a[i][j] + a[j][i]);
            a[i][j] = avg;
            a[j][i] = avg;
        }
    }
    let target = 1e-13 * m.frobenius_norm();
    let off_norm = |a: &[Vec<f64>]| {
        let mut s = 0.0;
        for (i, row) in a.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if i != j {
                    s += v * v;
                }
            }
        }
        s.sqrt()
    };

    let mut converged = off_norm(&a) <= target;
    let mut sweep = 0;
    while !converged && sweep < JACOBI_SWEEPS {
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + theta.hypot(1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / t.hypot(1.0);
                let s = t * c;
                a[p][p] -= t * apq;
                a[q][q] += t * apq;
                a[p][q] = 0.0;
                a[q][p] = 0.0;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let (akp, akq) = (a[k][p], a[k][q]);
                    let new_p = c * akp - s * akq;
                    let new_q = s * akp + c * akq;
                    a[k][p] = new_p;
                    a[p][k] = new_p;
                    a[k][q] = new_q;
                    a[q][k] = new_q;
                }
            }
        }
        sweep += 1;
        converged = off_norm(&a) <= target;
    }
    if !converged {
        return Err(Error::NoConvergence(sweep));
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    eig.sort_by(|x, y| y.total_cmp(x));
    Ok(eig)
}

/// The matrix `R` of a discrete marginal; its eigenvalues are those of the
/// integral operator of `k = −g` under the marginal.
pub fn r_matrix(m: &DiscreteMarginal) -> SymmetricMatrix {
    let p = m.masses();
    let f = m.cumulative();
    let r = p.len();
    let mut out = SymmetricMatrix::zeros(r);
    for i in 0..r {
        for j in i..r {
            // i ≤ j, so u_i is the smaller support point
            let mut v = (f[i] - p[i]).powi(2) + (1.0 - f[j]).powi(2);
            if i != j {
                let interior: f64 = (i + 1..j).map(|l| p[l] * (1.0 - f[l])).sum();
                v -= f[i] * (1.0 - f[i]) + interior;
            }
            let entry = (p[i] * p[j]).sqrt() * v;
            out.set(i, j, entry);
            out.set(j, i, entry);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginalKind {
    ContinuousContinuous,
    DiscreteDiscrete,
    DiscreteContinuous,
}

/// Weights `λ̃_k` of `Σ λ̃_k (χ²₁ − 1)`, sorted descending, plus the total
/// weight left out by truncation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpectrum {
    weights: Vec<f64>,
    tail_bound: f64,
    kind: MarginalKind,
}

impl MixtureSpectrum {
    /// Spectrum from explicit weights. Weights must be finite and positive.
    pub fn from_weights(mut weights: Vec<f64>, tail_bound: f64, kind: MarginalKind) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite()) || !tail_bound.is_finite() {
            return Err(Error::NonFinite);
        }
        if weights.iter().any(|&w| w <= 0.0) {
            return Err(Error::InvalidParameter("spectrum weights must be positive".into()));
        }
        if tail_bound < 0.0 {
            return Err(Error::InvalidParameter("tail bound must be non-negative".into()));
        }
        weights.sort_by(|a, b| b.total_cmp(a));
        Ok(Self { weights, tail_bound, kind })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    pub fn kind(&self) -> MarginalKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn sum_squares(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum()
    }

    /// Variance of the truncated law, `2·Σλ̃²`.
    pub fn variance(&self) -> f64 {
        2.0 * self.sum_squares()
    }

    /// Runs of equal weights as `(weight, multiplicity)`, descending.
    pub fn groups(&self) -> Vec<(f64, usize)> {
        let mut out: Vec<(f64, usize)> = Vec::new();
        for &w in &self.weights {
            match out.last_mut() {
                Some((v, d)) if *v == w => *d += 1,
                _ => out.push((w, 1)),
            }
        }
        out
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("truncation eps must lie in (0, 1), got {eps}")))
    }
}

/// Both margins continuous: weights `36/(π⁴ i² j²)`.
///
/// The kept set is `{(i, j) : i·j ≤ M}`, the smallest such hyperbolic set
/// whose omitted mass is at most `eps`. The weights sum to exactly 1, so
/// `tail_bound = 1 − Σ kept`.
pub fn spectrum_continuous(eps: f64) -> Result<MixtureSpectrum> {
    check_eps(eps)?;
    let scale = 36.0 / PI.powi(4);
    // number of divisors of each m, grown in blocks as M increases
    let mut divisors: Vec<u32> = Vec::new();
    let mut kept = 0.0;
    let mut m_max = 0usize;
    let mut block = 1024usize;
    loop {
        let hi = m_max + block;
        divisors.resize(hi + 1, 0);
        for i in 1..=hi {
            let start = (m_max / i + 1) * i;
            let mut m = start;
            while m <= hi {
                divisors[m] += 1;
                m += i;
            }
        }
        let mut done = false;
        for m in m_max + 1..=hi {
            kept += f64::from(divisors[m]) * scale / (m * m) as f64;
            m_max = m;
            if 1.0 - kept <= eps {
                done = true;
                break;
            }
        }
        if done {
            break;
        }
        block *= 2;
    }
    let mut weights = Vec::new();
    for (m, &d) in divisors.iter().enumerate().take(m_max + 1).skip(1) {
        let w = scale / (m * m) as f64;
        weights.extend(std::iter::repeat_n(w, d as usize));
    }
    let tail = (1.0 - weights.iter().sum::<f64>()).max(0.0);
    Ok(MixtureSpectrum { weights, tail_bound: tail, kind: MarginalKind::ContinuousContinuous })
}

fn check_support(m: &DiscreteMarginal) -> Result<()> {
    if m.len() > MAX_SUPPORT {
        Err(Error::SupportTooLarge { size: m.len(), cap: MAX_SUPPORT })
    } else {
        Ok(())
    }
}

/// Eigenvalues of `r_matrix(m)`, sorted descending.
pub fn marginal_eigenvalues(m: &DiscreteMarginal) -> Result<Vec<f64>> {
    check_support(m)?;
    symmetric_eigenvalues(&r_matrix(m))
}

/// Both margins discrete: weights `4·λ_i^X·λ_j^Y`; exact, so `tail_bound = 0`.
pub fn spectrum_discrete(mx: &DiscreteMarginal, my: &DiscreteMarginal) -> Result<MixtureSpectrum> {
    let ex = marginal_eigenvalues(mx)?;
    let ey = marginal_eigenvalues(my)?;
    let mut weights = Vec::with_capacity(ex.len() * ey.len());
    for &a in &ex {
        for &b in &ey {
            let w = 4.0 * a * b;
            if w > EIGEN_CUTOFF {
                weights.push(w);
            }
        }
    }
    MixtureSpectrum::from_weights(weights, 0.0, MarginalKind::DiscreteDiscrete)
}

/// One discrete margin `mx`, the other continuous: weights
/// `12·λ_i/(π² j²)` for `j ≤ J`, with `J` the smallest value leaving at
/// most `eps` of weight behind. The omitted weight is exact,
/// `12·Σλ_i/π² · Σ_{j>J} 1/j²`.
pub fn spectrum_mixed(mx: &DiscreteMarginal, eps: f64) -> Result<MixtureSpectrum> {
    check_eps(eps)?;
    let lambdas: Vec<f64> = marginal_eigenvalues(mx)?.into_iter().filter(|&l| l > EIGEN_CUTOFF).collect();
    let total: f64 = lambdas.iter().sum();
    let scale = 12.0 * total / (PI * PI);
    let zeta2 = PI * PI / 6.0;
    let mut partial = 0.0;
    let mut j_max = 0usize;
    while scale * (zeta2 - partial) > eps {
        j_max += 1;
        partial += 1.0 / (j_max * j_max) as f64;
    }
    let tail = (scale * (zeta2 - partial)).max(0.0);
    let mut weights = Vec::with_capacity(lambdas.len() * j_max);
    for &l in &lambdas {
        for j in 1..=j_max {
            weights.push(12.0 * l / (PI * PI * (j * j) as f64));
        }
    }
    MixtureSpectrum::from_weights(weights, tail, MarginalKind::DiscreteContinuous)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::g_discrete;
    use crate::rng::stream_rng;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_pmf(rng: &mut impl Rng, r: usize) -> DiscreteMarginal {
        let raw: Vec<f64> = (0..r).map(|_| rng.random_range(0.05..1.0)).collect();
        DiscreteMarginal::proportional(&raw).unwrap()
    }

    fn nalgebra_eigenvalues(m: &SymmetricMatrix) -> Vec<f64> {
        let n = m.size();
        let dm = DMatrix::from_fn(n, n, |i, j| m.get(i, j));
        let mut e: Vec<f64> = dm.symmetric_eigen().eigenvalues.iter().copied().collect();
        e.sort_by(|a, b| b.total_cmp(a));
        e
    }

    #[test]
    fn identity_and_errors() {
        let id = SymmetricMatrix::from_rows(&[vec![1., 0., 0.], vec![0., 1., 0.], vec![0., 0., 1.]]).unwrap();
        assert_eq!(symmetric_eigenvalues(&id).unwrap(), vec![1.0, 1.0, 1.0]);
        let asym = SymmetricMatrix::from_rows(&[vec![1., 2.], vec![2.1, 1.]]).unwrap();
        assert!(matches!(symmetric_eigenvalues(&asym), Err(Error::Asymmetric(_))));
        assert_eq!(SymmetricMatrix::from_rows(&[vec![1., 2.]]), Err(Error::NotSquare));
    }

    #[test]
    fn jacobi_matches_independent_solver() {
        let mut rng = stream_rng(8, 8);
        for size in [2usize, 5, 8, 8, 8, 13] {
            let mut m = SymmetricMatrix::zeros(size);
            for i in 0..size {
                for j in i..size {
                    let v = rng.random_range(-1.0..1.0);
                    m.set(i, j, v);
                    m.set(j, i, v);
                }
            }
            let ours = symmetric_eigenvalues(&m).unwrap();
            for (a, b) in ours.iter().zip(nalgebra_eigenvalues(&m)) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn bernoulli_r_matrix() {
        for k in 1..=9 {
            let p = f64::from(k) / 10.0;
            let m = DiscreteMarginal::new(vec![0.0, 1.0], vec![1.0 - p, p]).unwrap();
            let r = r_matrix(&m);
            let q = p * (1.0 - p);
            let expected = [[p * p * (1.0 - p), -q.powf(1.5)], [-q.powf(1.5), p * (1.0 - p).powi(2)]];
            for i in 0..2 {
                for j in 0..2 {
                    assert!((r.get(i, j) - expected[i][j]).abs() < 1e-12);
                }
            }
            let e = symmetric_eigenvalues(&r).unwrap();
            assert!((e[0] - q).abs() < 1e-12 && e[1].abs() < 1e-12, "{e:?}");
        }
    }

    #[test]
    fn ternary_r_matrix() {
        let mut rng = stream_rng(3, 3);
        for _ in 0..50 {
            let p1 = rng.random_range(0.02..0.9);
            let p2 = rng.random_range(0.02..(0.98 - p1));
            let p3 = 1.0 - p1 - p2;
            let r = r_matrix(&DiscreteMarginal::new(vec![1.0, 2.0, 3.0], vec![p1, p2, p3]).unwrap());
            let expected = [
                (0, 0, p1 * (1.0 - p1).powi(2)),
                (0, 1, -(p1 * p2).sqrt() * (p1 * (1.0 - p1) - p3 * p3)),
                (0, 2, -(p1 * p3).sqrt() * (p3 * (1.0 - p3) + p1 * p2)),
                (1, 1, p2 * (p1 * p1 + p3 * p3)),
                (1, 2, -(p2 * p3).sqrt() * (p3 * (1.0 - p3) - p1 * p1)),
                (2, 2, p3 * (1.0 - p3).powi(2)),
            ];
            for (i, j, v) in expected {
                assert!((r.get(i, j) - v).abs() < 1e-12);
                assert_eq!(r.get(i, j), r.get(j, i));
            }
        }
    }

    #[test]
    fn point_mass_r_matrix_is_zero() {
        let r = r_matrix(&DiscreteMarginal::new(vec![3.0], vec![1.0]).unwrap());
        assert_eq!(r.rows(), vec![vec![0.0]]);
    }

    #[test]
    fn r_entries_are_weighted_minus_g() {
        let m = DiscreteMarginal::new(vec![0.0, 1.0, 4.0, 5.0, 9.0], vec![0.1, 0.3, 0.2, 0.25, 0.15]).unwrap();
        let r = r_matrix(&m);
        for (i, (u, pu)) in m.iter().enumerate() {
            for (j, (v, pv)) in m.iter().enumerate() {
                let k = -g_discrete(u, v, &m).unwrap();
                assert!((r.get(i, j) - (pu * pv).sqrt() * k).abs() < 1e-13);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn trace_second_moment_and_psd(seed in 0u64..10_000, r in 1usize..12) {
            let mut rng = stream_rng(seed, r as u64);
            let m = random_pmf(&mut rng, r);
            let rm = r_matrix(&m);
            let eig = symmetric_eigenvalues(&rm).unwrap();
            prop_assert!((eig.iter().sum::<f64>() - rm.trace()).abs() < 1e-12);
            // Σλ² = E[k(X₁, X₂)²], enumerated through g
            let mut second = 0.0;
            for (u, pu) in m.iter() {
                for (v, pv) in m.iter() {
                    second += pu * pv * g_discrete(u, v, &m).unwrap().powi(2);
                }
            }
            prop_assert!((eig.iter().map(|l| l * l).sum::<f64>() - second).abs() < 1e-12);
            prop_assert!(eig.iter().all(|&l| l > -1e-13), "{:?}", eig);
        }
    }

    fn uniform_top3(k: usize) -> Vec<f64> {
        marginal_eigenvalues(&DiscreteMarginal::uniform(k).unwrap()).unwrap()[..3].to_vec()
    }

    /// Uniform marginals on `k` points approach the operator `3c`, whose
    /// eigenvalues are `3/(j²π²)`. The discrete diagonal differs from `3c` by
    /// `x(1 − x)/k`, an `O(1/k)` bias: at k = 64 the third eigenvalue is still
    /// about 6% high, so it is checked after one Richardson step.
    #[test]
    fn uniform_marginals_approach_cramer_von_mises() {
        let limit: Vec<f64> = (1..=3).map(|j| 3.0 / ((j * j) as f64 * PI * PI)).collect();
        let mut previous = f64::INFINITY;
        for k in [4, 8, 16, 32, 64] {
            let top = uniform_top3(k);
            let err = top.iter().zip(&limit).map(|(a, b)| (a / b - 1.0).abs()).fold(0.0, f64::max);
            assert!(err < previous, "k = {k}");
            previous = err;
        }
        let (e32, e64) = (uniform_top3(32), uniform_top3(64));
        for j in 0..2 {
            assert!((e64[j] / limit[j] - 1.0).abs() < 0.05);
        }
        for j in 0..3 {
            let extrapolated = 2.0 * e64[j] - e32[j];
            assert!((extrapolated / limit[j] - 1.0).abs() < 0.05, "j = {}", j + 1);
        }
    }

    #[test]
    fn continuous_spectrum() {
        let s = spectrum_continuous(DEFAULT_EPS).unwrap();
        assert!((s.weights()[0] - 36.0 / PI.powi(4)).abs() < 1e-12);
        assert!((36.0 / PI.powi(4) - 0.369576).abs() < 1e-6);
        assert!(s.tail_bound() <= DEFAULT_EPS);
        let total = s.sum();
        assert!(total <= 1.0 + 1e-12 && total + s.tail_bound() >= 1.0 - 1e-12);
        assert!((s.sum_squares() / 36.0 - 1.0 / 225.0).abs() < 1e-6);
        assert!((s.variance() - 0.32).abs() < 1e-4);
        assert!(s.weights().windows(2).all(|w| w[0] >= w[1]));
        assert_eq!(s.groups()[1], (36.0 / PI.powi(4) / 4.0, 2));
        assert!(spectrum_continuous(0.0).is_err());
    }

    #[test]
    fn discrete_spectrum() {
        let b = |p: f64| DiscreteMarginal::new(vec![0.0, 1.0], vec![1.0 - p, p]).unwrap();
        let s = spectrum_discrete(&b(0.3), &b(0.6)).unwrap();
        assert_eq!(s.len(), 1);
        assert!((s.weights()[0] - 4.0 * 0.3 * 0.6 * 0.7 * 0.4).abs() < 1e-14);
        let half = spectrum_discrete(&b(0.5), &b(0.5)).unwrap();
        assert!((half.weights()[0] - 0.25).abs() < 1e-14);
        assert_eq!(half.tail_bound(), 0.0);
    }

    #[test]
    fn discrete_spectrum_product_structure() {
        let mx = DiscreteMarginal::uniform(10).unwrap();
        let geo: Vec<f64> = (1..=12).map(|i| 10.0 * 0.5f64.powi(i)).collect();
        let my = DiscreteMarginal::proportional(&geo).unwrap();
        let s = spectrum_discrete(&mx, &my).unwrap();
        let ex = marginal_eigenvalues(&mx).unwrap();
        let ey = marginal_eigenvalues(&my).unwrap();
        for &w in s.weights() {
            let found = ex.iter().any(|a| ey.iter().any(|b| (4.0 * a * b - w).abs() < 1e-15));
            assert!(found, "{w}");
        }
        // Σw² = 16·E[g_X²]·E[g_Y²] by enumeration
        let moment = |m: &DiscreteMarginal| {
            let mut s = 0.0;
            for (u, pu) in m.iter() {
                for (v, pv) in m.iter() {
                    s += pu * pv * g_discrete(u, v, m).unwrap().powi(2);
                }
            }
            s
        };
        assert!((s.sum_squares() - 16.0 * moment(&mx) * moment(&my)).abs() < 1e-12);
    }

    #[test]
    fn mixed_spectrum() {
        let b = DiscreteMarginal::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        let s = spectrum_mixed(&b, DEFAULT_EPS).unwrap();
        assert!((s.weights()[0] - 12.0 * 0.25 / (PI * PI)).abs() < 1e-14);
        assert!((s.weights()[0] - 0.30396).abs() < 1e-5);

        let u5 = DiscreteMarginal::uniform(5).unwrap();
        let a = spectrum_mixed(&u5, 1e-3).unwrap();
        let half = spectrum_mixed(&u5, 5e-4).unwrap();
        assert!(a.weights().iter().all(|&w| w > 0.0));
        assert!(a.tail_bound() <= 1e-3 && half.tail_bound() <= 5e-4);
        assert!(half.tail_bound() < a.tail_bound());
        assert!(half.len() > a.len());
        let total: f64 = 12.0 / (PI * PI) * marginal_eigenvalues(&u5).unwrap().iter().sum::<f64>() * PI * PI / 6.0;
        assert!((a.sum() + a.tail_bound() - total).abs() < 1e-12);
    }

    #[test]
    fn oversized_support_is_rejected() {
        let m = DiscreteMarginal::uniform(65).unwrap();
        assert!(matches!(spectrum_discrete(&m, &m), Err(Error::SupportTooLarge { .. })));
    }
}
