//! The sign-covariance kernel.
//!
//! `a(z1, z2, z3, z4)` compares two pairs of reals with strict inequalities,
//! and the symmetric four-point kernel `h` averages `a(x)·a(y)` over the 24
//! orderings of a quadruple. `h` only takes the values 2/3, −1/3 and 0
//! depending on whether the points are concordant, discordant or
//! inseparable, so kernel values are carried as exact thirds.
//!
//! The conditional-expectation kernels (`c`, `h2`, `g`, `h1`) exist as
//! analytic oracles for the degeneracy and spectral results.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marginal::DiscreteMarginal;

/// A point of the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Self { x, y }
    }
}

/// Four points of the plane, in no particular order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadruple(pub [Point; 4]);

impl Quadruple {
    pub fn new(points: [Point; 4]) -> Result<Self> {
        if points.iter().all(Point::is_finite) {
            Ok(Self(points))
        } else {
            Err(Error::NonFinite)
        }
    }

    pub fn from_pairs(pairs: [(f64, f64); 4]) -> Result<Self> {
        Self::new(pairs.map(Point::from))
    }

    pub fn points(&self) -> &[Point; 4] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Classification {
    Concordant,
    Discordant,
    Inseparable,
}

impl Classification {
    pub fn kernel_value(self) -> KernelValue {
        match self {
            Classification::Concordant => KernelValue::CONCORDANT,
            Classification::Discordant => KernelValue::DISCORDANT,
            Classification::Inseparable => KernelValue::INSEPARABLE,
        }
    }
}

/// Exact kernel value, stored as a multiple of 1/3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KernelValue(i8);

impl KernelValue {
    pub const CONCORDANT: Self = Self(2);
    pub const DISCORDANT: Self = Self(-1);
    pub const INSEPARABLE: Self = Self(0);

    /// Numerator over the denominator 3.
    pub fn thirds(self) -> i8 {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        f64::from(self.0) / 3.0
    }
}

/// The 24-permutation average of `a(x)·a(y)`, kept as the integer sum over
/// permutations (the value is `sum / 24`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PermutationAverage {
    pub sum: i32,
}

impl PermutationAverage {
    pub fn value(self) -> f64 {
        f64::from(self.sum) / 24.0
    }

    /// The same number as an exact third, if it is one.
    pub fn as_kernel_value(self) -> Option<KernelValue> {
        (self.sum % 8 == 0).then(|| KernelValue((self.sum / 8) as i8))
    }
}

/// `max(a, b) < min(c, d)`.
#[inline]
fn pair_below(a: f64, b: f64, c: f64, d: f64) -> bool {
    a.max(b) < c.min(d)
}

#[inline]
pub(crate) fn a_sign_unchecked(z1: f64, z2: f64, z3: f64, z4: f64) -> i8 {
    let mut s = 0;
    if pair_below(z1, z3, z2, z4) {
        s += 1;
    }
    if pair_below(z2, z4, z1, z3) {
        s += 1;
    }
    if pair_below(z1, z2, z3, z4) {
        s -= 1;
    }
    if pair_below(z3, z4, z1, z2) {
        s -= 1;
    }
    s
}

/// The sign function `a`; all comparisons are strict.
pub fn a_sign(z1: f64, z2: f64, z3: f64, z4: f64) -> Result<i8> {
    if [z1, z2, z3, z4].iter().all(|z| z.is_finite()) {
        Ok(a_sign_unchecked(z1, z2, z3, z4))
    } else {
        Err(Error::NonFinite)
    }
}

#[inline]
pub(crate) fn classify_points(p: &[Point; 4]) -> Classification {
    let mut pts = *p;
    pts.sort_unstable_by(|a, b| a.x.total_cmp(&b.x));
    if pts[1].x == pts[2].x {
        return Classification::Inseparable;
    }
    let mut ys = [pts[0].y, pts[1].y, pts[2].y, pts[3].y];
    ys.sort_unstable_by(f64::total_cmp);
    if ys[1] == ys[2] {
        return Classification::Inseparable;
    }
    let (lo_max, lo_min) = (pts[0].y.max(pts[1].y), pts[0].y.min(pts[1].y));
    let (hi_max, hi_min) = (pts[2].y.max(pts[3].y), pts[2].y.min(pts[3].y));
    if lo_max < hi_min || hi_max < lo_min {
        Classification::Concordant
    } else {
        Classification::Discordant
    }
}

pub fn classify(q: &Quadruple) -> Classification {
    classify_points(&q.0)
}

/// Kernel value through the classification of the quadruple.
pub fn h_kernel(q: &Quadruple) -> KernelValue {
    classify(q).kernel_value()
}

const PERMUTATIONS: [[usize; 4]; 24] = permutations_of_four();

const fn permutations_of_four() -> [[usize; 4]; 24] {
    let mut out = [[0; 4]; 24];
    let mut k = 0;
    let mut a = 0;
    while a < 4 {
        let mut b = 0;
        while b < 4 {
            let mut c = 0;
            while c < 4 {
                if a != b && a != c && b != c {
                    out[k] = [a, b, c, 6 - a - b - c];
                    k += 1;
                }
                c += 1;
            }
            b += 1;
        }
        a += 1;
    }
    out
}

/// Kernel value through its defining average over all orderings of the
/// quadruple. Independent of [`classify`]; used to cross-check it.
pub fn h_kernel_by_average(q: &Quadruple) -> PermutationAverage {
    let p = &q.0;
    let sum = PERMUTATIONS
        .iter()
        .map(|&[i, j, k, l]| {
            let ax = a_sign_unchecked(p[i].x, p[j].x, p[k].x, p[l].x);
            let ay = a_sign_unchecked(p[i].y, p[j].y, p[k].y, p[l].y);
            i32::from(ax * ay)
        })
        .sum();
    PermutationAverage { sum }
}

fn check_unit(v: f64) -> Result<f64> {
    if !v.is_finite() {
        Err(Error::NonFinite)
    } else if !(0.0..=1.0).contains(&v) {
        Err(Error::OutOfUnitInterval(v))
    } else {
        Ok(v)
    }
}

/// The Cramér–von Mises kernel `½x₁² + ½x₂² − max(x₁, x₂) + 1/3` on `[0, 1]²`.
pub fn cvm_c(x1: f64, x2: f64) -> Result<f64> {
    let (x1, x2) = (check_unit(x1)?, check_unit(x2)?);
    Ok(0.5 * x1 * x1 + 0.5 * x2 * x2 - x1.max(x2) + 1.0 / 3.0)
}

/// Second projection of `h` for independent uniform marginals,
/// `6·c(x₁, x₂)·c(y₁, y₂)`.
pub fn h2_uniform(p1: Point, p2: Point) -> Result<f64> {
    Ok(6.0 * cvm_c(p1.x, p2.x)? * cvm_c(p1.y, p2.y)?)
}

/// `g(u₁, u₂) = E[a(u₁, u₂, X₃, X₄)]` for i.i.d. `X₃, X₄ ~ m`, by exact
/// summation over the support.
pub fn g_discrete(u1: f64, u2: f64, m: &DiscreteMarginal) -> Result<f64> {
    if !(u1.is_finite() && u2.is_finite()) {
        return Err(Error::NonFinite);
    }
    let mut g = 0.0;
    for (s3, p3) in m.iter() {
        for (s4, p4) in m.iter() {
            let a = a_sign_unchecked(u1, u2, s3, s4);
            if a != 0 {
                g += f64::from(a) * p3 * p4;
            }
        }
    }
    Ok(g)
}

/// Largest joint support handled by the `h₁` enumerations (40³ triples).
pub const H1_SUPPORT_CAP: usize = 40;

/// A finite joint law on the plane.
#[derive(Debug, Clone, PartialEq)]
pub struct JointMass {
    atoms: Vec<(Point, f64)>,
}

impl JointMass {
    pub fn new(atoms: Vec<(Point, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidMarginal("empty joint support".into()));
        }
        if atoms.iter().any(|(pt, p)| !pt.is_finite() || !p.is_finite()) {
            return Err(Error::NonFinite);
        }
        if let Some((_, p)) = atoms.iter().find(|(_, p)| *p < 0.0) {
            return Err(Error::InvalidMarginal(format!("negative mass {p}")));
        }
        let total: f64 = atoms.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > crate::marginal::MASS_TOLERANCE {
            return Err(Error::InvalidMarginal(format!("masses sum to {total}, not 1")));
        }
        Ok(Self { atoms })
    }

    /// The product law `mx ⊗ my`.
    pub fn product(mx: &DiscreteMarginal, my: &DiscreteMarginal) -> Result<Self> {
        let atoms = mx
            .iter()
            .flat_map(|(x, px)| my.iter().map(move |(y, py)| (Point::new(x, y), px * py)))
            .collect();
        Self::new(atoms)
    }

    pub fn atoms(&self) -> &[(Point, f64)] {
        &self.atoms
    }
}

/// `h₁(x, y) = E[h((x, y), Z₂, Z₃, Z₄)]` for `Z` drawn from `joint`, by full
/// enumeration of the support triples.
pub fn h1_bruteforce_joint(x: f64, y: f64, joint: &JointMass) -> Result<f64> {
    if !(x.is_finite() && y.is_finite()) {
        return Err(Error::NonFinite);
    }
    let atoms = joint.atoms();
    if atoms.len() > H1_SUPPORT_CAP {
        return Err(Error::EnumerationCap { size: atoms.len(), cap: H1_SUPPORT_CAP });
    }
    let z1 = Point::new(x, y);
    let mut total = 0.0;
    for &(z2, p2) in atoms {
        for &(z3, p3) in atoms {
            let p23 = p2 * p3;
            for &(z4, p4) in atoms {
                let thirds = classify_points(&[z1, z2, z3, z4]).kernel_value().thirds();
                if thirds != 0 {
                    total += f64::from(thirds) * p23 * p4;
                }
            }
        }
    }
    Ok(total / 3.0)
}

/// `h₁(x, y)` under the independent law `mx ⊗ my`.
pub fn h1_bruteforce(x: f64, y: f64, mx: &DiscreteMarginal, my: &DiscreteMarginal) -> Result<f64> {
    let size = mx.len() * my.len();
    if size > H1_SUPPORT_CAP {
        return Err(Error::EnumerationCap { size, cap: H1_SUPPORT_CAP });
    }
    h1_bruteforce_joint(x, y, &JointMass::product(mx, my)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn quad(pairs: [(f64, f64); 4]) -> Quadruple {
        Quadruple::from_pairs(pairs).unwrap()
    }

    #[test]
    fn a_sign_examples() {
        assert_eq!(a_sign(1.0, 2.0, 3.0, 4.0).unwrap(), -1);
        assert_eq!(a_sign(1.0, 3.0, 2.0, 4.0).unwrap(), 1);
        assert_eq!(a_sign(1.0, 1.0, 1.0, 1.0).unwrap(), 0);
        assert_eq!(a_sign(f64::NAN, 1.0, 2.0, 3.0), Err(Error::NonFinite));
    }

    #[test]
    fn classification_examples() {
        use Classification::*;
        assert_eq!(classify(&quad([(1., 1.), (2., 2.), (3., 3.), (4., 4.)])), Concordant);
        assert_eq!(classify(&quad([(1., 1.), (2., 3.), (3., 2.), (4., 4.)])), Discordant);
        assert_eq!(classify(&quad([(1., 1.), (2., 2.), (2., 3.), (3., 4.)])), Inseparable);
        // order of the points does not matter
        assert_eq!(classify(&quad([(4., 4.), (2., 3.), (1., 1.), (3., 2.)])), Discordant);
        // middle y-values tied
        assert_eq!(classify(&quad([(1., 1.), (2., 2.), (3., 2.), (4., 4.)])), Inseparable);
        // decreasing points are concordant too
        assert_eq!(classify(&quad([(1., 4.), (2., 3.), (3., 2.), (4., 1.)])), Concordant);
    }

    #[test]
    fn kernel_values() {
        assert_eq!(h_kernel(&quad([(1., 1.), (2., 2.), (3., 3.), (4., 4.)])).to_f64(), 2.0 / 3.0);
        assert_eq!(h_kernel(&quad([(1., 1.), (2., 3.), (3., 2.), (4., 4.)])).to_f64(), -1.0 / 3.0);
        assert_eq!(h_kernel(&quad([(1., 1.), (2., 2.), (2., 3.), (3., 4.)])).to_f64(), 0.0);
        assert!(Quadruple::from_pairs([(1., f64::INFINITY), (2., 2.), (3., 3.), (4., 4.)]).is_err());
    }

    #[test]
    fn permutation_table_is_complete() {
        let mut seen = std::collections::HashSet::new();
        for p in PERMUTATIONS {
            let mut s = p;
            s.sort();
            assert_eq!(s, [0, 1, 2, 3]);
            seen.insert(p);
        }
        assert_eq!(seen.len(), 24);
    }

    fn tied_coordinate(rng: &mut impl Rng) -> f64 {
        f64::from(rng.random_range(0..4u8))
    }

    #[test]
    fn classification_agrees_with_permutation_average() {
        let mut rng = stream_rng(11, 0);
        for i in 0..10_000 {
            let pts: [(f64, f64); 4] = std::array::from_fn(|_| {
                if i % 2 == 0 {
                    (tied_coordinate(&mut rng), tied_coordinate(&mut rng))
                } else {
                    (rng.random(), rng.random())
                }
            });
            let q = quad(pts);
            let direct = h_kernel(&q);
            let averaged = h_kernel_by_average(&q);
            assert_eq!(averaged.as_kernel_value(), Some(direct), "{pts:?}");
        }
    }

    proptest! {
        #[test]
        fn distinct_coordinates_are_never_inseparable(
            xs in proptest::collection::hash_set(0i32..1000, 4),
            ys in proptest::collection::hash_set(0i32..1000, 4),
        ) {
            let xs: Vec<_> = xs.into_iter().collect();
            let ys: Vec<_> = ys.into_iter().collect();
            let q = quad(std::array::from_fn(|i| (f64::from(xs[i]), f64::from(ys[i]))));
            prop_assert_ne!(classify(&q), Classification::Inseparable);
        }

        #[test]
        fn kernel_invariances(
            pts in proptest::array::uniform4((0i32..6, 0i32..6)),
            perm in 0usize..24,
        ) {
            let q = quad(pts.map(|(x, y)| (f64::from(x), f64::from(y))));
            let h = h_kernel(&q);
            let swapped = quad(pts.map(|(x, y)| (f64::from(y), f64::from(x))));
            prop_assert_eq!(h_kernel(&swapped), h);
            let p = PERMUTATIONS[perm];
            let relabeled = Quadruple(p.map(|i| q.0[i]));
            prop_assert_eq!(h_kernel(&relabeled), h);
            let monotone = quad(pts.map(|(x, y)| ((f64::from(x)).exp() * 3.0 - 1.0, f64::from(y).powi(3))));
            prop_assert_eq!(h_kernel(&monotone), h);
        }
    }

    #[test]
    fn cvm_kernel_examples() {
        assert!((cvm_c(0.5, 0.5).unwrap() - 1.0 / 12.0).abs() < 1e-15);
        assert!((cvm_c(0.0, 0.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(cvm_c(0.2, 0.9).unwrap(), cvm_c(0.9, 0.2).unwrap());
        assert!(matches!(cvm_c(1.5, 0.2), Err(Error::OutOfUnitInterval(_))));
        assert!((h2_uniform(Point::new(0.5, 0.5), Point::new(0.5, 0.5)).unwrap() - 1.0 / 24.0).abs() < 1e-15);
        let (p, q) = (Point::new(0.1, 0.7), Point::new(0.4, 0.3));
        assert_eq!(h2_uniform(p, q).unwrap(), h2_uniform(q, p).unwrap());
    }

    /// `∫∫ c(x₁, x₂) dx₁ dx₂ = 0`, so the Monte Carlo mean of `h₂` vanishes.
    #[test]
    fn h2_uniform_has_zero_mean() {
        // midpoint-rule oracle for the first moment of c
        let k = 400;
        let mut integral = 0.0;
        for i in 0..k {
            for j in 0..k {
                let (a, b) = ((i as f64 + 0.5) / k as f64, (j as f64 + 0.5) / k as f64);
                integral += cvm_c(a, b).unwrap();
            }
        }
        assert!((integral / (k * k) as f64).abs() < 1e-5);

        let mut rng = stream_rng(5, 1);
        let n = 200_000;
        let vals: Vec<f64> = (0..n)
            .map(|_| {
                let p = Point::new(rng.random(), rng.random());
                let q = Point::new(rng.random(), rng.random());
                h2_uniform(p, q).unwrap()
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 3.0 * (var / n as f64).sqrt(), "mean {mean}");
    }

    /// Enumeration oracle for `g` on Bernoulli(1/2): of the four (X₃, X₄)
    /// outcomes only (0, 1) separates the pairs {0, X₃} < {1, X₄}.
    #[test]
    fn g_discrete_bernoulli() {
        let m = DiscreteMarginal::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        let g = g_discrete(0.0, 1.0, &m).unwrap();
        assert!((g - 0.25).abs() < 1e-15);
        // k = −g matches the off-diagonal R-matrix entry divided by √(p₀p₁)
        let r01 = -(0.25f64).powf(1.5);
        assert!((-g - r01 / 0.5).abs() < 1e-15);
    }

    #[test]
    fn g_discrete_symmetry_and_degeneracy() {
        let m = DiscreteMarginal::new(vec![-1.0, 0.5, 2.0, 3.0], vec![0.1, 0.4, 0.3, 0.2]).unwrap();
        let mut mean = 0.0;
        for (u, pu) in m.iter() {
            for (v, pv) in m.iter() {
                let g = g_discrete(u, v, &m).unwrap();
                assert!((g - g_discrete(v, u, &m).unwrap()).abs() < 1e-15);
                mean += pu * pv * g;
            }
        }
        assert!(mean.abs() < 1e-12);
        let point = DiscreteMarginal::new(vec![4.0], vec![1.0]).unwrap();
        assert_eq!(g_discrete(4.0, 4.0, &point).unwrap(), 0.0);
    }

    /// Off the diagonal only: with `x₁ = x₂` the strict comparisons give
    /// `g = −x² − (1 − x)²`, a null set for continuous draws.
    #[test]
    fn g_matches_minus_three_c_for_uniform_marginals() {
        let mut rng = stream_rng(3, 9);
        let n = 100_000;
        for &(x1, x2) in &[(0.1, 0.2), (0.5, 0.55), (0.3, 0.9), (0.95, 0.05)] {
            let draws: Vec<f64> = (0..n)
                .map(|_| f64::from(a_sign_unchecked(x1, x2, rng.random(), rng.random())))
                .collect();
            let mean = draws.iter().sum::<f64>() / n as f64;
            let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let target = -3.0 * cvm_c(x1, x2).unwrap();
            assert!((mean - target).abs() < 3.0 * (var / n as f64).sqrt() + 1e-12, "{x1},{x2}: {mean} vs {target}");
        }
    }

    #[test]
    fn h1_vanishes_under_independence() {
        let mx = DiscreteMarginal::new(vec![0.0, 1.0], vec![0.7, 0.3]).unwrap();
        let my = DiscreteMarginal::new(vec![0.0, 1.0], vec![0.4, 0.6]).unwrap();
        for &x in mx.support() {
            for &y in my.support() {
                assert!(h1_bruteforce(x, y, &mx, &my).unwrap().abs() < 1e-12);
            }
        }
        let single = DiscreteMarginal::new(vec![2.0], vec![1.0]).unwrap();
        assert_eq!(h1_bruteforce(2.0, 2.0, &single, &single).unwrap(), 0.0);

        let mx = DiscreteMarginal::uniform(5).unwrap();
        let my = DiscreteMarginal::proportional(&[1.0, 3.0, 2.0, 0.5]).unwrap();
        for &x in mx.support() {
            for &y in my.support() {
                assert!(h1_bruteforce(x, y, &mx, &my).unwrap().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn h1_is_not_constant_under_dependence() {
        let joint = JointMass::new(vec![
            (Point::new(0.0, 0.0), 0.4),
            (Point::new(0.0, 1.0), 0.1),
            (Point::new(1.0, 0.0), 0.1),
            (Point::new(1.0, 1.0), 0.4),
        ])
        .unwrap();
        let on_diag = h1_bruteforce_joint(0.0, 0.0, &joint).unwrap();
        let off_diag = h1_bruteforce_joint(0.0, 1.0, &joint).unwrap();
        assert!((on_diag - off_diag).abs() > 1e-3, "{on_diag} {off_diag}");
    }

    #[test]
    fn h1_enumeration_cap() {
        let big = DiscreteMarginal::uniform(7).unwrap();
        assert!(matches!(h1_bruteforce(1.0, 1.0, &big, &big), Err(Error::EnumerationCap { .. })));
    }
}
