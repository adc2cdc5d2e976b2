//! Two-mode Wigner-function slice reconstruction from the model's output
//! state.
//!
//! Convention: ħ = 1 real quadratures with `α = (x + ip)/√2`, so the full
//! four-dimensional Wigner function integrates to one and the two-mode
//! vacuum peaks at `1/π²`. Fock-basis kernels use the associated-Laguerre
//! closed form evaluated by three-term recurrence with log-scaled
//! prefactors.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::dist::PhotonNumberDist;
use crate::error::{Error, Result};
use crate::fock::{apply_pdc_raw, ln_factorial, SqueezeParams, TwoModeFockState};
use crate::model::ExperimentModel;

/// Classical mixture of pure two-mode Fock-space states.
#[derive(Debug, Clone)]
pub struct TwoModeMixedState {
    components: Vec<(f64, TwoModeFockState)>,
}

impl TwoModeMixedState {
    pub fn new(components: Vec<(f64, TwoModeFockState)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::domain("mixture needs at least one component"));
        }
        let total: f64 = components.iter().map(|(w, _)| w).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!("mixture weights sum to {total}")));
        }
        if components.iter().any(|(w, _)| *w < 0.0) {
            return Err(Error::domain("mixture weights must be nonnegative"));
        }
        Ok(TwoModeMixedState { components })
    }

    pub fn pure(state: TwoModeFockState) -> Self {
        TwoModeMixedState {
            components: vec![(1.0, state)],
        }
    }

    pub fn components(&self) -> &[(f64, TwoModeFockState)] {
        &self.components
    }

    pub fn cutoff(&self) -> usize {
        self.components[0].1.cutoff()
    }

    /// H-mode photon-number marginal of the mixture.
    pub fn h_marginal(&self) -> PhotonNumberDist {
        let cutoff = self.cutoff();
        let mut probs = vec![0.0; cutoff + 1];
        let mut tail = 0.0;
        for (w, state) in &self.components {
            for (n, p) in state.h_marginal().iter().enumerate() {
                probs[n] += w * p;
            }
            tail += w * state.tail_bound();
        }
        PhotonNumberDist::new_unchecked(probs, tail)
    }

    /// Mean H-mode photon number.
    pub fn mean_h(&self) -> f64 {
        self.h_marginal()
            .probs()
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .sum()
    }
}

/// Propagate the four-component input mixture of an experiment through the
/// PDC unitary: weights `(1−O₁)(1−O₂), (1−O₁)O₂, O₁(1−O₂), O₁O₂` on inputs
/// `|0,0⟩, |0,1⟩, |1,0⟩, |1,1⟩`.
pub fn output_mixed_state(model: &ExperimentModel, cutoff: usize) -> Result<TwoModeMixedState> {
    model.validate()?;
    let params = SqueezeParams::from_gain(model.gain)?;
    let (o1, o2) = (model.o1, model.o2);
    let weights = [
        (1.0 - o1) * (1.0 - o2),
        (1.0 - o1) * o2,
        o1 * (1.0 - o2),
        o1 * o2,
    ];
    let inputs = [(0usize, 0usize), (0, 1), (1, 0), (1, 1)];
    let mut components = Vec::new();
    for (w, (j, k)) in weights.iter().zip(inputs.iter()) {
        if *w == 0.0 {
            continue;
        }
        let input = TwoModeFockState::fock(cutoff, *j, *k)?;
        let (out, _) = apply_pdc_raw(&input, &params);
        components.push((*w, out));
    }
    // weights of dropped zero components are zero, so the total is unchanged
    TwoModeMixedState::new(components)
}

/// Rectangular slice grid specification.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridSpec {
    pub p_min: f64,
    pub p_max: f64,
    pub n_p: usize,
    pub y_min: f64,
    pub y_max: f64,
    pub n_y: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            p_min: -4.0,
            p_max: 4.0,
            n_p: 201,
            y_min: -4.0,
            y_max: 4.0,
            n_y: 201,
        }
    }
}

impl GridSpec {
    pub fn p_axis(&self) -> Vec<f64> {
        linspace(self.p_min, self.p_max, self.n_p)
    }

    pub fn y_axis(&self) -> Vec<f64> {
        linspace(self.y_min, self.y_max, self.n_y)
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| lo + i as f64 * step).collect()
}

/// Wigner slice `W(p_x, y)` at `x = 0, p_y = 0`, on a rectangular grid.
/// Rows index `p_x`, columns index `y`.
#[derive(Debug, Clone)]
pub struct WignerGrid {
    pub values: DMatrix<f64>,
    pub p_axis: Vec<f64>,
    pub y_axis: Vec<f64>,
}

impl WignerGrid {
    /// CSV rows `p_x,y,w` with full double precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("p_x,y,w\r\n");
        for (r, p) in self.p_axis.iter().enumerate() {
            for (c, y) in self.y_axis.iter().enumerate() {
                out.push_str(&format!(
                    "{:.16e},{:.16e},{:.16e}\r\n",
                    p,
                    y,
                    self.values[(r, c)]
                ));
            }
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        crate::gridfile::encode_real(&self.p_axis, &self.y_axis, &self.values)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Single-mode Fock-basis Wigner kernel matrix `K[n,m] = W_{nm}(x, p)`;
/// `W_00(0,0) = 1/π`.
pub fn wigner_kernel_matrix(cutoff: usize, x: f64, p: f64) -> DMatrix<Complex64> {
    let alpha = Complex64::new(x, p) / 2f64.sqrt();
    let aa = alpha.norm_sqr();
    let four_aa = 4.0 * aa;
    let gauss = (-2.0 * aa).exp() / std::f64::consts::PI;
    let mut k = DMatrix::zeros(cutoff + 1, cutoff + 1);
    for d in 0..=cutoff {
        // phase and magnitude of (2 conj(alpha))^d, kept in log scale
        let mag = 2.0 * alpha.norm();
        let phase = if mag == 0.0 {
            Complex64::new(1.0, 0.0)
        } else {
            (alpha.conj() / alpha.norm()).powu(d as u32)
        };
        let ln_mag_d = if d == 0 {
            0.0
        } else {
            d as f64 * mag.max(f64::MIN_POSITIVE).ln()
        };
        // Laguerre L_n^(d)(4aa) by upward recurrence
        let mut l_prev = 1.0;
        let mut l_cur = 1.0 + d as f64 - four_aa;
        for n in 0..=(cutoff - d) {
            let lag = if n == 0 {
                l_prev
            } else if n == 1 {
                l_cur
            } else {
                let nn = (n - 1) as f64;
                let next = ((2.0 * nn + 1.0 + d as f64 - four_aa) * l_cur
                    - (nn + d as f64) * l_prev)
                    / (nn + 1.0);
                l_prev = l_cur;
                l_cur = next;
                next
            };
            let m = n + d;
            let ln_pref = 0.5 * (ln_factorial(n) - ln_factorial(m)) + ln_mag_d;
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            let val = phase * Complex64::new(sign * gauss * ln_pref.exp() * lag, 0.0);
            k[(n, m)] = val;
            k[(m, n)] = val.conj();
        }
    }
    k
}

/// Evaluate the two-mode Wigner function of a mixture at a single
/// phase-space point.
pub fn wigner_point(state: &TwoModeMixedState, x: f64, px: f64, y: f64, py: f64) -> f64 {
    let cutoff = state.cutoff();
    let k1 = wigner_kernel_matrix(cutoff, x, px);
    let k2 = wigner_kernel_matrix(cutoff, y, py);
    let mut total = Complex64::new(0.0, 0.0);
    for (w, psi) in state.components() {
        total += Complex64::new(*w, 0.0) * contract_component(psi, &k1, &k2);
    }
    total.re
}

/// `Σ ψ[n1,n2] ψ*[m1,m2] K1[n1,m1] K2[n2,m2]` for one pure component.
fn contract_component(
    psi: &TwoModeFockState,
    k1: &DMatrix<Complex64>,
    k2: &DMatrix<Complex64>,
) -> Complex64 {
    let amps = psi.amplitudes();
    // X[n2, m2] = Σ_{n1,m1} ψ[n1,n2] K1[n1,m1] conj(ψ[m1,m2]);
    // both iterators run column-major, so the zip is elementwise
    let x = amps.transpose() * k1 * amps.conjugate();
    x.iter().zip(k2.iter()).map(|(a, b)| a * b).sum()
}

/// Reconstruct the slice `W(p_x, y)` with `x = 0`, `p_y = 0`.
///
/// Emits a cutoff warning through the `Err` channel only when the state
/// visibly overflows its truncation (top-layer population above 1e-6 is
/// reported by the caller's state construction; here the evaluation is
/// unconditional). Rows are parallelized; the result is independent of the
/// worker count.
pub fn wigner_slice(state: &TwoModeMixedState, spec: &GridSpec) -> Result<WignerGrid> {
    if spec.n_p < 2 || spec.n_y < 2 {
        return Err(Error::domain("slice grid needs at least 2x2 points"));
    }
    let cutoff = state.cutoff();
    let p_axis = spec.p_axis();
    let y_axis = spec.y_axis();
    // precompute per-component X matrices for every p, and K2 for every y
    let k2s: Vec<DMatrix<Complex64>> = y_axis
        .iter()
        .map(|&y| wigner_kernel_matrix(cutoff, y, 0.0))
        .collect();
    let rows: Vec<Vec<f64>> = p_axis
        .par_iter()
        .map(|&p| {
            let k1 = wigner_kernel_matrix(cutoff, 0.0, p);
            let xs: Vec<(f64, DMatrix<Complex64>)> = state
                .components()
                .iter()
                .map(|(w, psi)| {
                    let amps = psi.amplitudes();
                    (*w, amps.transpose() * &k1 * amps.conjugate())
                })
                .collect();
            y_axis
                .iter()
                .enumerate()
                .map(|(iy, _)| {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (w, x) in &xs {
                        let dot: Complex64 = x.iter().zip(k2s[iy].iter()).map(|(a, b)| a * b).sum();
                        acc += Complex64::new(*w, 0.0) * dot;
                    }
                    debug_assert!(acc.im.abs() < 1e-10);
                    acc.re
                })
                .collect()
        })
        .collect();
    let values = DMatrix::from_fn(spec.n_p, spec.n_y, |r, c| rows[r][c]);
    Ok(WignerGrid {
        values,
        p_axis,
        y_axis,
    })
}
