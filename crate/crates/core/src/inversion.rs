//! Linear inversion of m-fold coincidence probabilities into photon-number
//! probabilities, and the truncated estimators for P₁.
//!
//! The estimator coefficients are generated once from the detector-response
//! linear system in exact rational arithmetic (polynomials in the detection
//! efficiency η), then evaluated in floating point. This both removes
//! transcription risk for the printed low-order coefficients and extends
//! the expansion past six detectors.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::detector::{coincidence_probs, CoincidenceStats};
use crate::dist::PhotonNumberDist;
use crate::error::{Error, Result};

fn rat(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

fn big_binomial(n: usize, k: usize) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

/// Dense polynomial in η with exact rational coefficients.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct RatPoly(Vec<BigRational>);

impl RatPoly {
    fn zero() -> Self {
        RatPoly(vec![])
    }

    fn trim(mut self) -> Self {
        while self.0.last().is_some_and(|c| c.is_zero()) {
            self.0.pop();
        }
        self
    }

    fn is_zero(&self) -> bool {
        self.0.iter().all(|c| c.is_zero())
    }

    fn add(&self, other: &RatPoly) -> RatPoly {
        let len = self.0.len().max(other.0.len());
        let mut out = vec![BigRational::zero(); len];
        for (i, c) in self.0.iter().enumerate() {
            out[i] += c;
        }
        for (i, c) in other.0.iter().enumerate() {
            out[i] += c;
        }
        RatPoly(out).trim()
    }

    fn mul(&self, other: &RatPoly) -> RatPoly {
        if self.is_zero() || other.is_zero() {
            return RatPoly::zero();
        }
        let mut out = vec![BigRational::zero(); self.0.len() + other.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        RatPoly(out).trim()
    }

    fn scale(&self, s: &BigRational) -> RatPoly {
        RatPoly(self.0.iter().map(|c| c * s).collect()).trim()
    }

    /// Shift up: multiply by η^k.
    fn shift(&self, k: usize) -> RatPoly {
        if self.is_zero() {
            return RatPoly::zero();
        }
        let mut out = vec![BigRational::zero(); k];
        out.extend(self.0.iter().cloned());
        RatPoly(out)
    }

    fn eval(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for c in self.0.iter().rev() {
            acc = acc * x + c.to_f64().unwrap_or(f64::NAN);
        }
        acc
    }
}

/// Rational function of the form num(η) / η^den_pow.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct EtaRational {
    pub(crate) num: RatPoly,
    pub(crate) den_pow: usize,
}

impl EtaRational {
    fn zero() -> Self {
        EtaRational {
            num: RatPoly::zero(),
            den_pow: 0,
        }
    }

    fn normalize(mut self) -> Self {
        if self.num.is_zero() {
            return EtaRational::zero();
        }
        while self.den_pow > 0 && self.num.0.first().is_some_and(|c| c.is_zero()) {
            self.num.0.remove(0);
            self.den_pow -= 1;
        }
        self
    }

    fn add(&self, other: &EtaRational) -> EtaRational {
        let pow = self.den_pow.max(other.den_pow);
        let a = self.num.shift(pow - self.den_pow);
        let b = other.num.shift(pow - other.den_pow);
        EtaRational {
            num: a.add(&b),
            den_pow: pow,
        }
        .normalize()
    }

    fn mul_poly(&self, p: &RatPoly) -> EtaRational {
        EtaRational {
            num: self.num.mul(p),
            den_pow: self.den_pow,
        }
        .normalize()
    }

    /// Divide by the monomial c·η^k.
    fn div_monomial(&self, c: &BigRational, k: usize) -> EtaRational {
        EtaRational {
            num: self.num.scale(&(BigRational::one() / c)),
            den_pow: self.den_pow + k,
        }
        .normalize()
    }

    fn eval(&self, eta: f64) -> f64 {
        self.num.eval(eta) / eta.powi(self.den_pow as i32)
    }
}

/// Detector-response polynomial `A_{mn}(η) = Σ_r (−1)^r C(m,r) (1−rη)^n`.
/// Vanishes identically for `n < m`; the diagonal is `m! η^m`.
pub(crate) fn response_poly(m: usize, n: usize) -> RatPoly {
    let mut coeffs = vec![BigRational::zero(); n + 1];
    for r in 0..=m {
        let sr = if r % 2 == 0 { 1 } else { -1 };
        let cmr = big_binomial(m, r);
        // (1 - r η)^n = Σ_i C(n,i) (-r)^i η^i
        let mut ri = BigInt::one();
        for (i, c) in coeffs.iter_mut().enumerate() {
            let term =
                BigRational::from_integer(BigInt::from(sr) * &cmr * big_binomial(n, i) * &ri);
            *c += term;
            ri *= -BigInt::from(r as i64);
        }
    }
    RatPoly(coeffs).trim()
}

/// Exact coefficients of `C_1..C_order` in the P₁ expansion, as rational
/// functions of η. The order-m coefficient has the form
/// `p_m(η) / (m! η^m)` with integer-polynomial `p_m` of degree m−1.
pub(crate) fn alpha_rationals(order: usize) -> Vec<EtaRational> {
    let mut alphas: Vec<EtaRational> = Vec::with_capacity(order);
    for n in 1..=order {
        // equation n of Σ_m α_m A_{mn} = δ_{n,1}
        let mut rhs = if n == 1 {
            EtaRational {
                num: RatPoly(vec![BigRational::one()]),
                den_pow: 0,
            }
        } else {
            EtaRational::zero()
        };
        for (mi, alpha) in alphas.iter().enumerate() {
            let a = response_poly(mi + 1, n);
            rhs = rhs.add(
                &alpha
                    .mul_poly(&a)
                    .mul_poly(&RatPoly(vec![-BigRational::one()])),
            );
        }
        // divide by the diagonal A_{nn} = n! η^n
        let mut fact = BigRational::one();
        for i in 1..=n {
            fact *= rat(i as i64);
        }
        alphas.push(rhs.div_monomial(&fact, n));
    }
    alphas
}

/// Evaluated multipliers of `C_1..C_m` in the truncated P₁ estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct InversionCoefficients {
    pub order: usize,
    pub eta: f64,
    pub coeffs: Vec<f64>,
}

impl InversionCoefficients {
    pub fn generate(order: usize, eta: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::domain("order must be at least 1"));
        }
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::domain(format!("eta = {eta} outside (0,1]")));
        }
        let coeffs = alpha_rationals(order).iter().map(|a| a.eval(eta)).collect();
        Ok(InversionCoefficients { order, eta, coeffs })
    }
}

/// P₁ estimate with an uncertainty propagated linearly from the per-order
/// standard errors (orders treated as independent).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct P1Estimate {
    pub value: f64,
    pub sigma: Option<f64>,
}

/// Truncated P₁ estimator: `Σ_{i≤m} α_i(η) C_i`.
pub fn p1_truncated(stats: &CoincidenceStats, eta: f64, m: usize) -> Result<P1Estimate> {
    if m > stats.orders() {
        return Err(Error::InsufficientOrders {
            requested: m,
            available: stats.orders(),
        });
    }
    let coeffs = InversionCoefficients::generate(m, eta)?;
    let value = (0..m).map(|i| coeffs.coeffs[i] * stats.get(i + 1)).sum();
    let sigma = stats.sigma().map(|s| {
        (0..m)
            .map(|i| (coeffs.coeffs[i] * s[i]).powi(2))
            .sum::<f64>()
            .sqrt()
    });
    Ok(P1Estimate { value, sigma })
}

/// Result of the triangular photon-number solve.
#[derive(Debug, Clone)]
pub struct PnSolve {
    /// Recovered distribution (P₀ from normalization). Entries may be
    /// negative under noise; they are reported as-is.
    pub dist: PhotonNumberDist,
    /// Propagated standard errors per component (index = photon number),
    /// present when the stats carry uncertainties.
    pub sigma: Option<Vec<f64>>,
    /// Diagonal of the response system shrinks like `m! η^m`; flagged for
    /// low efficiency and deep cutoffs.
    pub ill_conditioned: bool,
    /// Components driven below −5σ by noise.
    pub negative_components: Vec<usize>,
}

/// Solve the triangular system `C = A(η) P` assuming `P_n = 0` for
/// `n > cutoff`; exact for finite-support distributions.
pub fn pn_solve(stats: &CoincidenceStats, eta: f64, cutoff: usize) -> Result<PnSolve> {
    if cutoff == 0 || cutoff > stats.orders() {
        return Err(Error::InsufficientOrders {
            requested: cutoff,
            available: stats.orders(),
        });
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::domain(format!("eta = {eta} outside (0,1]")));
    }
    // response matrix on 1..=cutoff
    let mut a = vec![vec![0.0; cutoff + 1]; cutoff + 1];
    for m in 1..=cutoff {
        for n in m..=cutoff {
            a[m][n] = response_poly(m, n).eval(eta);
        }
    }
    // back substitution from the top order down
    let mut p = vec![0.0; cutoff + 1];
    for m in (1..=cutoff).rev() {
        let mut acc = stats.get(m);
        for n in (m + 1)..=cutoff {
            acc -= a[m][n] * p[n];
        }
        p[m] = acc / a[m][m];
    }
    let p0 = 1.0 - p[1..].iter().sum::<f64>();

    // inverse rows for covariance propagation
    let sigma = stats.sigma().map(|s| {
        let mut binv = vec![vec![0.0; cutoff + 1]; cutoff + 1]; // binv[n][m]
        for col in 1..=cutoff {
            let mut x = vec![0.0; cutoff + 1];
            for m in (1..=cutoff).rev() {
                let mut acc = if m == col { 1.0 } else { 0.0 };
                for n in (m + 1)..=cutoff {
                    acc -= a[m][n] * x[n];
                }
                x[m] = acc / a[m][m];
            }
            for n in 1..=cutoff {
                binv[n][col] = x[n];
            }
        }
        let mut out = vec![0.0; cutoff + 1];
        for n in 1..=cutoff {
            out[n] = (1..=cutoff)
                .map(|m| (binv[n][m] * s[m - 1]).powi(2))
                .sum::<f64>()
                .sqrt();
        }
        // P0 = 1 - Σ P_n inherits the summed rows
        out[0] = (1..=cutoff)
            .map(|m| {
                let row_sum: f64 = (1..=cutoff).map(|n| binv[n][m]).sum();
                (row_sum * s[m - 1]).powi(2)
            })
            .sum::<f64>()
            .sqrt();
        out
    });

    let mut probs = vec![p0];
    probs.extend_from_slice(&p[1..]);
    let negative_components = probs
        .iter()
        .enumerate()
        .filter(|(n, &v)| {
            let s = sigma.as_ref().map(|s| s[*n]).unwrap_or(0.0);
            v < -5.0 * s - 1e-12
        })
        .map(|(n, _)| n)
        .collect();
    Ok(PnSolve {
        dist: PhotonNumberDist::new_unchecked(probs, 0.0),
        sigma,
        ill_conditioned: eta < 0.2 && cutoff >= 5,
        negative_components,
    })
}

/// The truncation-order sweep: P₁ estimates at each order `m = 1..=m_max`
/// applied to exact coincidence probabilities of `dist`.
pub fn truncation_scan(
    dist: &PhotonNumberDist,
    eta: f64,
    m_max: usize,
) -> Result<Vec<(usize, f64)>> {
    let stats = coincidence_probs(dist, eta, m_max)?;
    (1..=m_max)
        .map(|m| Ok((m, p1_truncated(&stats, eta, m)?.value)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{cj_output_dist, spdc_dist};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Printed low-order coefficients: numerator polynomials of
    /// `p_m(η) / (m! η^m)` with integer coefficients in ascending powers.
    const PRINTED_NUMERATORS: [&[i64]; 6] = [
        &[1],
        &[-2, 1],
        &[3, -6, 2],
        &[-4, 18, -22, 6],
        &[5, -40, 105, -100, 24],
        &[-6, 75, -340, 675, -548, 120],
    ];

    #[test]
    fn generated_coefficients_match_printed_polynomials_exactly() {
        let alphas = alpha_rationals(6);
        for (m, alpha) in alphas.iter().enumerate() {
            let order = m + 1;
            assert_eq!(alpha.den_pow, order, "denominator power at order {order}");
            let mut fact = BigRational::one();
            for i in 1..=order {
                fact *= rat(i as i64);
            }
            let scaled = alpha.num.scale(&fact); // should equal the printed integer polynomial
            let printed = RatPoly(PRINTED_NUMERATORS[m].iter().map(|&c| rat(c)).collect()).trim();
            assert_eq!(scaled, printed, "numerator polynomial at order {order}");
        }
    }

    #[test]
    fn leading_coefficients_have_stated_form() {
        let c = InversionCoefficients::generate(6, 0.13).unwrap();
        assert_abs_diff_eq!(c.coeffs[0], 1.0 / 0.13, epsilon = 1e-12);
        assert_abs_diff_eq!(
            c.coeffs[1],
            -(2.0 - 0.13) / (2.0 * 0.13f64.powi(2)),
            epsilon = 1e-10
        );
    }

    #[test]
    fn single_photon_state_is_recovered_exactly() {
        let d = PhotonNumberDist::new(vec![0.0, 1.0], 0.0).unwrap();
        let stats = coincidence_probs(&d, 0.8, 6).unwrap();
        for m in 1..=5 {
            let est = p1_truncated(&stats, 0.8, m).unwrap();
            assert_abs_diff_eq!(est.value, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn truncation_brackets_truth_for_spontaneous_pdc() {
        let d = spdc_dist(1.2, 300).unwrap();
        let stats = coincidence_probs(&d, 0.13, 6).unwrap();
        let p1 = d.get(1);
        let e5 = p1_truncated(&stats, 0.13, 5).unwrap().value;
        let e6 = p1_truncated(&stats, 0.13, 6).unwrap().value;
        assert!(e5 > p1, "five-order estimate should overshoot");
        assert!(e6 < p1, "six-order estimate should undershoot");
    }

    #[test]
    fn truncation_scan_alternates_and_tightens() {
        let d = cj_output_dist(1.2, 300).unwrap();
        let p1 = d.get(1);
        let scan = truncation_scan(&d, 0.13, 6).unwrap();
        for &(m, est) in &scan {
            if m % 2 == 1 {
                assert!(est > p1, "odd order {m} should sit above truth");
            } else {
                assert!(est < p1, "even order {m} should sit below truth");
            }
        }
        let err3 = (scan[2].1 - p1).abs();
        let err5 = (scan[4].1 - p1).abs();
        assert!(err5 < err3);
    }

    #[test]
    fn truncation_scan_is_flat_for_single_photon() {
        let d = PhotonNumberDist::new(vec![0.0, 1.0], 0.0).unwrap();
        for (_, est) in truncation_scan(&d, 0.4, 6).unwrap() {
            assert_abs_diff_eq!(est, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn pn_solve_round_trip_example() {
        let d = PhotonNumberDist::new(vec![0.5, 0.25, 0.125, 0.125], 0.0).unwrap();
        let stats = coincidence_probs(&d, 0.8, 6).unwrap();
        let solved = pn_solve(&stats, 0.8, 6).unwrap();
        for n in 0..=3 {
            assert_abs_diff_eq!(solved.dist.get(n), d.get(n), epsilon = 1e-12);
        }
        for n in 4..=6 {
            assert_abs_diff_eq!(solved.dist.get(n), 0.0, epsilon = 1e-12);
        }
        assert!(solved.negative_components.is_empty());
        assert!(!solved.ill_conditioned);
    }

    #[test]
    fn pn_solve_vacuum_gives_zeros() {
        let d = PhotonNumberDist::new(vec![1.0], 0.0).unwrap();
        let stats = coincidence_probs(&d, 0.5, 6).unwrap();
        let solved = pn_solve(&stats, 0.5, 6).unwrap();
        assert_abs_diff_eq!(solved.dist.get(0), 1.0, epsilon = 1e-12);
        for n in 1..=6 {
            assert_eq!(solved.dist.get(n), 0.0);
        }
    }

    #[test]
    fn pn_solve_flags_conditioning_and_order_errors() {
        let d = spdc_dist(1.2, 100).unwrap();
        let stats = coincidence_probs(&d, 0.15, 6).unwrap();
        assert!(pn_solve(&stats, 0.15, 6).unwrap().ill_conditioned);
        assert!(matches!(
            pn_solve(&stats, 0.15, 7),
            Err(Error::InsufficientOrders { .. })
        ));
        assert!(matches!(
            p1_truncated(&stats, 0.15, 7),
            Err(Error::InsufficientOrders { .. })
        ));
    }

    #[test]
    fn pn_solve_flags_deeply_negative_noise() {
        // inflate C_2 so the implied P_1 lands firmly negative while the
        // stats themselves stay valid probabilities
        let d = PhotonNumberDist::new(vec![0.5, 0.3, 0.2], 0.0).unwrap();
        let clean = coincidence_probs(&d, 0.25, 3).unwrap();
        let mut c = clean.probs().to_vec();
        c[1] += 0.03;
        let stats = CoincidenceStats::exact(c).unwrap();
        let solved = pn_solve(&stats, 0.25, 3).unwrap();
        assert!(solved.dist.get(1) < 0.0, "P_1 = {}", solved.dist.get(1));
        assert!(solved.negative_components.contains(&1));
    }

    proptest! {
        #[test]
        fn exact_on_finite_support(p1 in 0.0f64..1.0, p2 in 0.0f64..1.0, p3 in 0.0f64..1.0,
                                   eta in 0.3f64..1.0) {
            // random distribution supported on n <= 3
            let total = 1.0 + p1 + p2 + p3;
            let probs = vec![1.0 / total, p1 / total, p2 / total, p3 / total];
            let d = PhotonNumberDist::new(probs.clone(), 0.0).unwrap();
            let per = eta / 6.0; // per-detector efficiency keeps M*eta <= 1
            let stats = coincidence_probs(&d, per, 6).unwrap();
            // truncated estimator at any order covering the support is exact
            for m in 3..=6 {
                let est = p1_truncated(&stats, per, m).unwrap().value;
                prop_assert!((est - probs[1]).abs() < 1e-10);
            }
            // and the full solve reproduces every component
            let solved = pn_solve(&stats, per, 6).unwrap();
            for n in 0..=3 {
                prop_assert!((solved.dist.get(n) - probs[n]).abs() < 1e-10);
            }
        }
    }
}
