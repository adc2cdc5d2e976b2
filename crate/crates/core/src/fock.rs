//! Truncated two-mode Fock space and the pair-creation (PDC) and
//! beam-splitter unitaries, in both closed-form matrix-element and
//! numerical-propagator form.
//!
//! Conventions: the PDC unitary is `exp[r(a_H† a_V† − a_H a_V)]` with
//! `g = cosh²r`, so pair amplitudes generated from vacuum are positive
//! (`tanhⁿr / cosh r` on `|n,n⟩`). The beam splitter is
//! `exp[θ(a†b − b†a)]` with transmittance `T = cos²θ`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Tolerance on the leakage into the top two Fock layers after a PDC
/// propagation before [`apply_pdc_numeric`] refuses the result.
pub const PDC_LEAKAGE_TOL: f64 = 1e-6;

const LN_FACT_LEN: usize = 1024;

fn ln_fact_table() -> &'static [f64; LN_FACT_LEN] {
    static TABLE: OnceLock<[f64; LN_FACT_LEN]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [0.0; LN_FACT_LEN];
        for n in 1..LN_FACT_LEN {
            t[n] = t[n - 1] + (n as f64).ln();
        }
        t
    })
}

/// ln(n!) for integer n.
pub(crate) fn ln_factorial(n: usize) -> f64 {
    ln_fact_table()[n]
}

/// Squeezing-strength parameters of a PDC interaction.
///
/// Gain and squeezing are locked together by `g = cosh²r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqueezeParams {
    gain: f64,
    squeeze: f64,
}

impl SqueezeParams {
    /// Build from the parametric gain `g ≥ 1`.
    pub fn from_gain(gain: f64) -> Result<Self> {
        if !(gain >= 1.0) || !gain.is_finite() {
            return Err(Error::domain(format!("gain must be >= 1, got {gain}")));
        }
        Ok(SqueezeParams {
            gain,
            squeeze: gain.sqrt().acosh(),
        })
    }

    /// Build from the squeezing parameter `r ≥ 0`.
    pub fn from_squeeze(squeeze: f64) -> Result<Self> {
        if !(squeeze >= 0.0) || !squeeze.is_finite() {
            return Err(Error::domain(format!(
                "squeeze must be >= 0, got {squeeze}"
            )));
        }
        Ok(SqueezeParams {
            gain: squeeze.cosh().powi(2),
            squeeze,
        })
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn squeeze(&self) -> f64 {
        self.squeeze
    }

    /// Cutoff satisfying the tail rule `((g−1)/g)^(N+1) < tol`, plus two
    /// extra layers for few-photon inputs.
    pub fn suggested_cutoff(&self, tol: f64) -> usize {
        let q = (self.gain - 1.0) / self.gain;
        if q <= 0.0 {
            return 4;
        }
        let n = (tol.ln() / q.ln()).ceil() as usize;
        n + 2
    }
}

/// Pure two-mode state on the truncated Fock space `0 ≤ n_H, n_V ≤ N`.
///
/// `amps[(n_h, n_v)]` is the amplitude of `|n_H, n_V⟩`; `tail_bound` is
/// certified probability mass outside the cutoff.
#[derive(Debug, Clone)]
pub struct TwoModeFockState {
    cutoff: usize,
    amps: DMatrix<Complex64>,
    tail_bound: f64,
}

impl TwoModeFockState {
    /// The vacuum `|0,0⟩`.
    pub fn vacuum(cutoff: usize) -> Self {
        Self::fock(cutoff, 0, 0).expect("vacuum always fits")
    }

    /// The basis state `|n_H, n_V⟩`.
    pub fn fock(cutoff: usize, n_h: usize, n_v: usize) -> Result<Self> {
        if n_h > cutoff || n_v > cutoff {
            return Err(Error::domain(format!(
                "occupation ({n_h},{n_v}) exceeds cutoff {cutoff}"
            )));
        }
        let mut amps = DMatrix::zeros(cutoff + 1, cutoff + 1);
        amps[(n_h, n_v)] = Complex64::new(1.0, 0.0);
        Ok(TwoModeFockState {
            cutoff,
            amps,
            tail_bound: 0.0,
        })
    }

    /// Build from an amplitude matrix; checks normalization against the
    /// declared tail bound.
    pub fn from_amplitudes(amps: DMatrix<Complex64>, tail_bound: f64) -> Result<Self> {
        if amps.nrows() != amps.ncols() || amps.nrows() == 0 {
            return Err(Error::domain(
                "amplitude matrix must be square and nonempty",
            ));
        }
        if tail_bound < 0.0 {
            return Err(Error::domain("tail_bound must be >= 0"));
        }
        let state = TwoModeFockState {
            cutoff: amps.nrows() - 1,
            amps,
            tail_bound,
        };
        let total = state.norm_sqr() + tail_bound;
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!(
                "state not normalized: |psi|^2 + tail = {total}"
            )));
        }
        Ok(state)
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    pub fn amplitude(&self, n_h: usize, n_v: usize) -> Complex64 {
        if n_h > self.cutoff || n_v > self.cutoff {
            Complex64::new(0.0, 0.0)
        } else {
            self.amps[(n_h, n_v)]
        }
    }

    pub fn amplitudes(&self) -> &DMatrix<Complex64> {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Probability mass in the top two layers `n = N, N−1` of either mode.
    pub fn top_layer_mass(&self) -> f64 {
        let n = self.cutoff;
        let mut s = 0.0;
        for i in 0..=n {
            for j in 0..=n {
                if i + 2 > n || j + 2 > n {
                    s += self.amps[(i, j)].norm_sqr();
                }
            }
        }
        s
    }

    /// Photon-number distribution of the H mode (marginal over V).
    pub fn h_marginal(&self) -> Vec<f64> {
        (0..=self.cutoff)
            .map(|n| {
                (0..=self.cutoff)
                    .map(|m| self.amps[(n, m)].norm_sqr())
                    .sum()
            })
            .collect()
    }
}

/// exp(G) for the real skew-symmetric tridiagonal generator with
/// off-diagonal `offdiag[m]` between rows m and m+1 (G[m+1,m] = +offdiag[m]).
///
/// The phase rotation D = diag(i^m) maps iG to a real symmetric tridiagonal
/// matrix, so a single real eigendecomposition per block suffices and the
/// result is exactly real orthogonal up to roundoff.
fn expm_skew_tridiag(offdiag: &[f64]) -> DMatrix<f64> {
    let dim = offdiag.len() + 1;
    if dim == 1 {
        return DMatrix::identity(1, 1);
    }
    // S = D (iG) D^† has entries S[m+1,m] = S[m,m+1] = -offdiag[m].
    let mut s = DMatrix::zeros(dim, dim);
    for (m, &c) in offdiag.iter().enumerate() {
        s[(m + 1, m)] = -c;
        s[(m, m + 1)] = -c;
    }
    let eig = SymmetricEigen::new(s);
    let v = &eig.eigenvectors;
    let lam = &eig.eigenvalues;
    // (e^G)_{jk} = Re[i^{k-j} Σ_v V_{jv} V_{kv} e^{-iλ_v}]
    let cosl: Vec<f64> = lam.iter().map(|l| l.cos()).collect();
    let sinl: Vec<f64> = lam.iter().map(|l| l.sin()).collect();
    let mut out = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        for k in 0..dim {
            let (use_sin, sign) = match (k as i64 - j as i64).rem_euclid(4) {
                0 => (false, 1.0),
                1 => (true, 1.0),
                2 => (false, -1.0),
                _ => (true, -1.0),
            };
            let mut acc = 0.0;
            for vi in 0..dim {
                let w = v[(j, vi)] * v[(k, vi)];
                acc += w * if use_sin { sinl[vi] } else { cosl[vi] };
            }
            out[(j, k)] = sign * acc;
        }
    }
    out
}

/// PDC propagator restricted to the conserved-difference block
/// `d = n_H − n_V ≥ 0`, basis `|m+d, m⟩` for `m = 0..=(cutoff−d)`.
pub(crate) fn pdc_block_propagator(cutoff: usize, d: usize, squeeze: f64) -> DMatrix<f64> {
    let dim = cutoff - d + 1;
    let offdiag: Vec<f64> = (0..dim - 1)
        .map(|m| squeeze * (((m + d + 1) * (m + 1)) as f64).sqrt())
        .collect();
    expm_skew_tridiag(&offdiag)
}

/// BS propagator restricted to the conserved-sum block `s = n_a + n_b`,
/// basis `|m, s−m⟩` for `m = 0..=min(s, cutoff)` on a square cutoff grid.
fn bs_block_propagator(s: usize, cutoff: usize, theta: f64) -> DMatrix<f64> {
    let lo = s.saturating_sub(cutoff);
    let hi = s.min(cutoff);
    let dim = hi - lo + 1;
    let offdiag: Vec<f64> = (0..dim - 1)
        .map(|i| {
            let m = lo + i;
            theta * (((m + 1) * (s - m)) as f64).sqrt()
        })
        .collect();
    expm_skew_tridiag(&offdiag)
}

/// Apply the truncated PDC unitary without any leakage policy; returns the
/// propagated state together with the probability mass that ended in the top
/// two Fock layers. The output is renormalized only through `tail_bound`
/// bookkeeping, never rescaled.
pub fn apply_pdc_raw(state: &TwoModeFockState, params: &SqueezeParams) -> (TwoModeFockState, f64) {
    let n = state.cutoff();
    let r = params.squeeze();
    let mut out: DMatrix<Complex64> = DMatrix::zeros(n + 1, n + 1);
    // positive-difference blocks (and mirror for d < 0)
    for d in 0..=n {
        for mirror in [false, true] {
            if d == 0 && mirror {
                continue;
            }
            let dim = n - d + 1;
            // gather input coefficients of this block
            let mut col = vec![Complex64::new(0.0, 0.0); dim];
            let mut nonzero = false;
            for m in 0..dim {
                let (ih, iv) = if mirror { (m, m + d) } else { (m + d, m) };
                let a = state.amps[(ih, iv)];
                if a.norm_sqr() > 0.0 {
                    nonzero = true;
                }
                col[m] = a;
            }
            if !nonzero {
                continue;
            }
            let u = pdc_block_propagator(n, d, r);
            for row in 0..dim {
                let mut acc = Complex64::new(0.0, 0.0);
                for m in 0..dim {
                    acc += col[m] * u[(row, m)];
                }
                let (oh, ov) = if mirror {
                    (row, row + d)
                } else {
                    (row + d, row)
                };
                out[(oh, ov)] += acc;
            }
        }
    }
    let leaked_norm = 1.0 - state.tail_bound();
    let new_norm: f64 = out.iter().map(|a| a.norm_sqr()).sum();
    // The truncated generator is skew within each block, so norm is preserved
    // exactly; any residual difference is tracked as tail.
    let tail = state.tail_bound() + (leaked_norm - new_norm).max(0.0);
    let result = TwoModeFockState {
        cutoff: n,
        amps: out,
        tail_bound: tail,
    };
    let top = result.top_layer_mass();
    (result, top)
}

/// Apply the PDC unitary `exp[r(a_H†a_V† − a_Ha_V)]` on the truncated space.
///
/// Fails with [`Error::CutoffTooSmall`] when the propagated state carries
/// more than [`PDC_LEAKAGE_TOL`] in the top two Fock layers, which signals
/// that the truncation has visibly distorted the result.
pub fn apply_pdc_numeric(
    state: &TwoModeFockState,
    params: &SqueezeParams,
) -> Result<TwoModeFockState> {
    let (out, top) = apply_pdc_raw(state, params);
    if top > PDC_LEAKAGE_TOL {
        return Err(Error::CutoffTooSmall {
            cutoff: state.cutoff(),
            leakage: top,
        });
    }
    Ok(out)
}

/// Apply the beam-splitter unitary `exp[θ(a†b − b†a)]`. Exactly unitary on
/// the truncated space since total photon number is conserved block-wise.
pub fn apply_bs_numeric(state: &TwoModeFockState, theta: f64) -> TwoModeFockState {
    let n = state.cutoff();
    let mut out = DMatrix::zeros(n + 1, n + 1);
    for s in 0..=(2 * n) {
        let lo = s.saturating_sub(n);
        let hi = s.min(n);
        let dim = hi - lo + 1;
        let mut col = vec![Complex64::new(0.0, 0.0); dim];
        let mut nonzero = false;
        for i in 0..dim {
            let m = lo + i;
            let a = state.amps[(m, s - m)];
            if a.norm_sqr() > 0.0 {
                nonzero = true;
            }
            col[i] = a;
        }
        if !nonzero {
            continue;
        }
        let u = bs_block_propagator(s, n, theta);
        for row in 0..dim {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..dim {
                acc += col[i] * u[(row, i)];
            }
            let m = lo + row;
            out[(m, s - m)] += acc;
        }
    }
    TwoModeFockState {
        cutoff: n,
        amps: out,
        tail_bound: state.tail_bound(),
    }
}

/// Signed log-space accumulator: sums terms given as (sign, ln|term|).
fn signed_logsum(terms: &[(f64, f64)]) -> f64 {
    let mx = terms.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        return 0.0;
    }
    let s: f64 = terms.iter().map(|(sg, ll)| sg * (ll - mx).exp()).sum();
    s * mx.exp()
}

/// Closed-form matrix element `⟨n,m| U_g^PDC |j,k⟩`.
///
/// Zero exactly unless the photon-number difference is conserved
/// (`n − m = j − k`). Evaluated as a finite alternating sum in log space
/// with sign tracking; the amplitude is real in this phase convention.
pub fn pdc_matrix_element(n: usize, m: usize, j: usize, k: usize, g: f64) -> Result<Complex64> {
    if !(g >= 1.0) || !g.is_finite() {
        return Err(Error::domain(format!("gain must be >= 1, got {g}")));
    }
    if n as i64 - m as i64 != j as i64 - k as i64 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    if g == 1.0 {
        let v = if n == j && m == k { 1.0 } else { 0.0 };
        return Ok(Complex64::new(v, 0.0));
    }
    let r = g.sqrt().acosh();
    let ln_tanh = r.tanh().ln();
    let ln_cosh = r.cosh().ln();
    let qmin = j.saturating_sub(n);
    let qmax = j.min(k);
    let mut terms = Vec::with_capacity(qmax + 1 - qmin);
    for q in qmin..=qmax {
        let ll = (n + 2 * q - j) as f64 * ln_tanh
            + (2.0 * q as f64 - (j + k + 1) as f64) * ln_cosh
            + 0.5 * (ln_factorial(j) + ln_factorial(k) + ln_factorial(n) + ln_factorial(m))
            - ln_factorial(q)
            - ln_factorial(n + q - j)
            - ln_factorial(j - q)
            - ln_factorial(k - q);
        let sign = if q % 2 == 0 { 1.0 } else { -1.0 };
        terms.push((sign, ll));
    }
    Ok(Complex64::new(signed_logsum(&terms), 0.0))
}

/// Closed-form matrix element `⟨n,m| U_T^BS |j,k⟩` with `T = cos²θ`.
///
/// Zero exactly unless total photon number is conserved (`n + m = j + k`).
pub fn bs_matrix_element(n: usize, m: usize, j: usize, k: usize, theta: f64) -> Complex64 {
    if n + m != j + k {
        return Complex64::new(0.0, 0.0);
    }
    let (sin, cos) = theta.sin_cos();
    if sin == 0.0 {
        // diagonal: cos = ±1, element = δ_{nj} cos^(j+k)
        let v = if n == j {
            cos.powi((j + k) as i32)
        } else {
            0.0
        };
        return Complex64::new(v, 0.0);
    }
    let ln_c = cos.abs().max(f64::MIN_POSITIVE).ln();
    let ln_s = sin.abs().ln();
    let pmin = n.saturating_sub(k);
    let pmax = j.min(n);
    let mut terms = Vec::with_capacity(pmax + 1 - pmin);
    for p in pmin..=pmax {
        let q = n - p;
        // cos^p (-sin)^(j-p) sin^q cos^(k-q), with binomials and sqrt factors
        let c_pow = p + k - q;
        let s_pow = (j - p) + q;
        let ll = ln_factorial(j) - ln_factorial(p) - ln_factorial(j - p) + ln_factorial(k)
            - ln_factorial(q)
            - ln_factorial(k - q)
            + 0.5 * (ln_factorial(n) + ln_factorial(m) - ln_factorial(j) - ln_factorial(k))
            + c_pow as f64 * ln_c
            + s_pow as f64 * ln_s;
        let mut sign = if (j - p) % 2 == 0 { 1.0 } else { -1.0 };
        if cos < 0.0 && c_pow % 2 == 1 {
            sign = -sign;
        }
        if sin < 0.0 && s_pow % 2 == 1 {
            sign = -sign;
        }
        terms.push((sign, ll));
    }
    Complex64::new(signed_logsum(&terms), 0.0)
}
