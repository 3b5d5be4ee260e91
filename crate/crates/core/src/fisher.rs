//! Classical and quantum Fisher information.

use crate::bayes::LikelihoodModel;
use crate::error::MetroResult;
use crate::fock::{j_parameter, mandel_q, mean_photon_number, moment, TwoModeState};
use crate::linalg::{hermitian_eigen, CMatrix};
use crate::povm::{PhaseLikelihood, Povm};

/// Outcomes with probability below this are left out of the classical sum.
pub const PROBABILITY_FLOOR: f64 = 1e-14;

/// `F(θ) = Σ_o (∂p)²/p` from the analytic derivative of the likelihood.
///
/// Outcomes below [`PROBABILITY_FLOOR`] contribute their limiting value
/// `4 Σ_f |∂a_f|²`, which is exact at a double zero of `p`.
pub fn classical_fisher(lik: &PhaseLikelihood, theta: f64) -> f64 {
    let k = lik.outcome_count();
    let (mut p, mut dp, mut speed) = (vec![0.0; k], vec![0.0; k], vec![0.0; k]);
    lik.probabilities_and_derivatives(theta, &mut p, &mut dp);
    let mut f = 0.0;
    let mut need_limit = false;
    for o in 0..k {
        if p[o] > PROBABILITY_FLOOR {
            f += dp[o] * dp[o] / p[o];
        } else {
            need_limit = true;
            if dp[o].abs() > PROBABILITY_FLOOR.sqrt() {
                log::warn!("outcome {o} has p = {:.1e} but p' = {:.1e} at θ = {theta}", p[o], dp[o]);
            }
        }
    }
    if need_limit {
        lik.amplitude_speeds(theta, &mut speed);
        f += (0..k).filter(|&o| p[o] <= PROBABILITY_FLOOR).map(|o| 4.0 * speed[o]).sum::<f64>();
    }
    f
}

/// Classical Fisher information of `povm` on `probe` under `exp(-i J_z θ)`.
pub fn classical_fisher_for(povm: &Povm, probe: &TwoModeState, theta: f64) -> MetroResult<f64> {
    Ok(classical_fisher(&PhaseLikelihood::new(povm, probe)?, theta))
}

/// Classical Fisher information of any likelihood model by a central
/// difference with step `h`.
pub fn classical_fisher_numeric(model: &dyn LikelihoodModel, theta: f64, h: f64) -> f64 {
    let k = model.outcome_count();
    let (mut p, mut lo, mut hi) = (vec![0.0; k], vec![0.0; k], vec![0.0; k]);
    model.probabilities(theta, &mut p);
    model.probabilities(theta - h, &mut lo);
    model.probabilities(theta + h, &mut hi);
    (0..k)
        .filter(|&o| p[o] > PROBABILITY_FLOOR)
        .map(|o| {
            let d = (hi[o] - lo[o]) / (2.0 * h);
            d * d / p[o]
        })
        .sum()
}

/// `4 (<G²> - <G>²)` for a pure state and Hermitian generator.
pub fn quantum_fisher(state: &TwoModeState, generator: &CMatrix) -> f64 {
    let v = state.amps();
    let gv = generator * v;
    let m1 = v.dotc(&gv).re;
    let m2 = gv.norm_squared();
    4.0 * (m2 - m1 * m1)
}

/// Quantum Fisher information for `U(θ) = exp(-i J_z θ)`, from photon statistics.
pub fn quantum_fisher_jz(state: &TwoModeState) -> f64 {
    let m1 = moment(state, |n, m| (n as f64 - m as f64) / 2.0);
    let m2 = moment(state, |n, m| (n as f64 - m as f64).powi(2) / 4.0);
    4.0 * (m2 - m1 * m1)
}

/// Symmetric-logarithmic-derivative QFI of a mixed state `ρ(θ)` with
/// derivative `∂ρ`: `2 Σ |∂ρ_ij|²/(p_i + p_j)` over pairs with
/// `p_i + p_j > cutoff`.
pub fn sld_quantum_fisher(rho: &CMatrix, drho: &CMatrix, cutoff: f64) -> f64 {
    let eig = hermitian_eigen(rho);
    let d = eig.vectors.adjoint() * drho * &eig.vectors;
    let n = eig.values.len();
    let mut f = 0.0;
    for i in 0..n {
        for j in 0..n {
            let s = eig.values[i] + eig.values[j];
            if s > cutoff {
                f += 2.0 * d[(i, j)].norm_sqr() / s;
            }
        }
    }
    f
}

/// Both sides of `F_q = n̄ (1 + Q)(1 - J)` for a path-symmetric pure probe.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathSymmetricIdentity {
    pub variance_form: f64,
    pub statistics_form: f64,
}

impl PathSymmetricIdentity {
    pub fn residual(&self) -> f64 {
        (self.variance_form - self.statistics_form).abs()
    }
}

pub fn path_symmetric_identity(state: &TwoModeState) -> MetroResult<PathSymmetricIdentity> {
    let nbar = mean_photon_number(state);
    let q = mandel_q(state)?;
    let j = j_parameter(state)?;
    Ok(PathSymmetricIdentity { variance_form: quantum_fisher_jz(state), statistics_form: nbar * (1.0 + q) * (1.0 - j) })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FisherReport {
    pub theta: f64,
    pub classical: f64,
    pub quantum: f64,
}

impl FisherReport {
    pub fn efficiency(&self) -> f64 {
        self.classical / self.quantum
    }
}

pub fn fisher_report(lik: &PhaseLikelihood, theta: f64) -> FisherReport {
    FisherReport { theta, classical: classical_fisher(lik, theta), quantum: lik.quantum_fisher() }
}
