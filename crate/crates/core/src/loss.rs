//! Two-photon probes with photon loss in the first arm.
//!
//! This module uses its own conventions: the phase enters through
//! `exp(-i N1 φ)` rather than `exp(-i J_z θ)`, and the default prior is
//! centred at `π/4`. Everything lives on the `3 x 3` two-mode truncation.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::bayes::{mse_repeated_model, Budget, LikelihoodModel, MseCurve};
use crate::error::{MetroError, MetroResult};
use crate::fisher::sld_quantum_fisher;
use crate::fock::{FockDims, ModeOperator, TwoModeState};
use num_complex::Complex64 as C64;

use crate::linalg::{c, hermitian_eigen, CMatrix, CVector, I};
use crate::personick::{solve_estimator, MomentPair, PersonickSolution, DEFAULT_SUPPORT_CUTOFF};
use crate::prior::FlatPrior;

/// Per-mode cutoff holding every two-photon state.
pub const LOSS_CUTOFF: usize = 3;

/// `|0,0>, |0,2>, |1,0>, |2,0>`: the states a lossy two-photon probe can reach
/// when the second arm is lossless and the probe has no `|1,1>` part.
pub const REPORT_BASIS: [(usize, usize); 4] = [(0, 0), (0, 2), (1, 0), (2, 0)];

/// Default prior of the loss demonstration.
pub fn loss_prior() -> FlatPrior {
    FlatPrior::new(PI / 4.0, PI / 2.0).expect("valid prior")
}

pub fn loss_dims() -> FockDims {
    FockDims::square(LOSS_CUTOFF).expect("non-zero cutoff")
}

/// Fictitious beam splitter of transmissivity `η` on arm 1.
#[derive(Clone, Debug)]
pub struct LossChannel {
    pub eta: f64,
    /// `K_l = (1-η)^{l/2} η^{N1/2} a1^l / sqrt(l!)` on the two-mode space.
    pub kraus: Vec<CMatrix>,
}

impl LossChannel {
    pub fn new(eta: f64) -> MetroResult<Self> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(MetroError::InvalidParameter(format!("transmissivity must lie in (0, 1], got {eta}")));
        }
        let d = LOSS_CUTOFF;
        let a = ModeOperator::annihilation(d).mat;
        let eta_n = CMatrix::from_fn(d, d, |i, j| if i == j { c(eta.powf(i as f64 / 2.0)) } else { c(0.0) });
        let mut al = CMatrix::identity(d, d);
        let mut fact = 1.0;
        let mut kraus = Vec::with_capacity(d);
        for l in 0..d {
            if l > 0 {
                al = &al * &a;
                fact *= l as f64;
            }
            let k1 = &eta_n * &al * c((1.0 - eta).powf(l as f64 / 2.0) / fact.sqrt());
            kraus.push(ModeOperator { space: crate::fock::OpSpace::Single(d), mat: k1 }.on_mode1(loss_dims())?.mat);
        }
        Ok(LossChannel { eta, kraus })
    }

    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        self.kraus.iter().fold(CMatrix::zeros(rho.nrows(), rho.ncols()), |acc, k| acc + k * rho * k.adjoint())
    }

    /// `‖Σ K† K - I‖` (max entry).
    pub fn completeness_defect(&self) -> f64 {
        let n = self.kraus[0].nrows();
        let s = self.kraus.iter().fold(CMatrix::zeros(n, n), |acc, k| acc + k.adjoint() * k);
        (s - CMatrix::identity(n, n)).iter().fold(0.0f64, |m, z| m.max(z.norm()))
    }
}

/// `Σ_k c_k |k, 2-k>`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoPhotonProbe {
    pub c: [C64; 3],
}

impl TwoPhotonProbe {
    pub fn new(c0: C64, c1: C64, c2: C64) -> MetroResult<Self> {
        let norm = c0.norm_sqr() + c1.norm_sqr() + c2.norm_sqr();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(MetroError::InvalidParameter(format!("two-photon amplitudes have squared norm {norm}")));
        }
        Ok(TwoPhotonProbe { c: [c0, c1, c2] })
    }

    pub fn real(c0: f64, c1: f64, c2: f64) -> MetroResult<Self> {
        Self::new(c(c0), c(c1), c(c2))
    }

    /// `(|2,0> + |0,2>)/sqrt(2)`.
    pub fn noon() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        TwoPhotonProbe { c: [c(h), c(0.0), c(h)] }
    }

    pub fn state(&self) -> TwoModeState {
        let dims = loss_dims();
        TwoModeState::from_fn(dims, |n, m| if n + m == 2 { self.c[n] } else { c(0.0) })
    }
}

/// `N1` eigenvalue of every basis state.
fn n1_diagonal() -> Vec<f64> {
    let dims = loss_dims();
    (0..dims.dim()).map(|i| dims.pair(i).0 as f64).collect()
}

/// Loss applied to the probe, before any phase.
pub fn lossy_initial_state(probe: &TwoPhotonProbe, channel: &LossChannel) -> CMatrix {
    channel.apply(&probe.state().density_matrix())
}

/// `e^{-i N1 φ} (Σ_l K_l |ψ0><ψ0| K_l†) e^{i N1 φ}`.
pub fn lossy_encoded_state(probe: &TwoPhotonProbe, channel: &LossChannel, phi: f64) -> CMatrix {
    encode_n1(&lossy_initial_state(probe, channel), phi)
}

fn encode_n1(rho0: &CMatrix, phi: f64) -> CMatrix {
    let h = n1_diagonal();
    CMatrix::from_fn(rho0.nrows(), rho0.ncols(), |a, b| rho0[(a, b)] * C64::from_polar(1.0, -(h[a] - h[b]) * phi))
}

/// `∂ρ/∂φ = -i [N1, ρ(φ)]`.
pub fn lossy_derivative(rho: &CMatrix) -> CMatrix {
    let h = n1_diagonal();
    CMatrix::from_fn(rho.nrows(), rho.ncols(), |a, b| -I * rho[(a, b)] * (h[a] - h[b]))
}

/// Restriction to [`REPORT_BASIS`].
pub fn report_block(m: &CMatrix) -> CMatrix {
    let dims = loss_dims();
    let idx: Vec<usize> = REPORT_BASIS.iter().map(|&(n, k)| dims.index(n, k)).collect();
    CMatrix::from_fn(4, 4, |i, j| m[(idx[i], idx[j])])
}

/// Symmetric logarithmic derivative `L = Σ 2 (∂ρ)_ij / (p_i + p_j) |i><j|`.
pub fn symmetric_log_derivative(rho: &CMatrix, drho: &CMatrix, cutoff: f64) -> CMatrix {
    let eig = hermitian_eigen(rho);
    let d = eig.vectors.adjoint() * drho * &eig.vectors;
    let n = rho.nrows();
    let l = CMatrix::from_fn(n, n, |i, j| {
        let s = eig.values[i] + eig.values[j];
        if s > cutoff {
            d[(i, j)] * (2.0 / s)
        } else {
            c(0.0)
        }
    });
    &eig.vectors * l * eig.vectors.adjoint()
}

/// QFI of the lossy family; independent of `φ`.
pub fn lossy_quantum_fisher(probe: &TwoPhotonProbe, channel: &LossChannel) -> f64 {
    let rho = lossy_initial_state(probe, channel);
    sld_quantum_fisher(&rho, &lossy_derivative(&rho), 1e-12)
}

fn fisher_at(p0: f64, p1: f64, channel: &LossChannel) -> f64 {
    let p2 = 1.0 - p0 - p1;
    if p0 < 0.0 || p1 < 0.0 || p2 < -1e-15 {
        return f64::NEG_INFINITY;
    }
    let probe = TwoPhotonProbe { c: [c(p0.sqrt()), c(p1.sqrt()), c(p2.max(0.0).sqrt())] };
    lossy_quantum_fisher(&probe, channel)
}

/// Real non-negative amplitudes maximising the lossy QFI.
///
/// Signs of `c_k` can be absorbed into a phase on arm 2, which commutes
/// with both the loss and the encoding, so the search runs over the
/// probability simplex: a coarse grid followed by a shrinking pattern
/// search.
pub fn best_fisher_two_photon(eta: f64) -> MetroResult<TwoPhotonProbe> {
    const GRID: usize = 200;
    let channel = LossChannel::new(eta)?;
    let cells: Vec<(usize, usize)> = (0..=GRID).flat_map(|i| (0..=GRID - i).map(move |j| (i, j))).collect();
    let (mut p0, mut p1, mut best) = cells
        .par_iter()
        .map(|&(i, j)| {
            let (a, b) = (i as f64 / GRID as f64, j as f64 / GRID as f64);
            (a, b, fisher_at(a, b, &channel))
        })
        .reduce(|| (0.0, 0.0, f64::NEG_INFINITY), |x, y| if y.2 > x.2 { y } else { x });
    let mut step = 1.0 / GRID as f64;
    let mut iters = 0;
    while step > 1e-12 {
        iters += 1;
        if iters > 10_000 {
            log::warn!("probe optimisation stalled at step {step:.1e}");
            break;
        }
        let mut moved = false;
        for (dx, dy) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0), (1.0, -1.0), (-1.0, 1.0)] {
            let (a, b) = ((p0 + dx * step).max(0.0), (p1 + dy * step).max(0.0));
            let f = fisher_at(a, b, &channel);
            if f > best {
                p0 = a;
                p1 = b;
                best = f;
                moved = true;
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    let p2 = (1.0 - p0 - p1).max(0.0);
    let norm = (p0 + p1 + p2).sqrt();
    TwoPhotonProbe::real(p0.sqrt() / norm, p1.sqrt() / norm, p2.sqrt() / norm)
}

/// Prior moments of the lossy family.
pub fn lossy_moments(probe: &TwoPhotonProbe, channel: &LossChannel, prior: &FlatPrior) -> MetroResult<MomentPair> {
    MomentPair::from_diagonal_generator(&lossy_initial_state(probe, channel), &n1_diagonal(), prior)
}

/// Born-rule likelihood of a rank-one measurement on the lossy family,
/// with a final outcome for the complement of the listed vectors.
#[derive(Clone, Debug)]
pub struct MixedLikelihood {
    rho0: CMatrix,
    vectors: Vec<CVector>,
    fq: f64,
}

impl MixedLikelihood {
    pub fn new(rho0: CMatrix, vectors: Vec<CVector>) -> Self {
        let fq = sld_quantum_fisher(&rho0, &lossy_derivative(&rho0), 1e-12);
        MixedLikelihood { rho0, vectors, fq }
    }

    pub fn quantum_fisher(&self) -> f64 {
        self.fq
    }
}

impl LikelihoodModel for MixedLikelihood {
    fn outcome_count(&self) -> usize {
        self.vectors.len() + 1
    }

    fn probabilities(&self, theta: f64, out: &mut [f64]) {
        let rho = encode_n1(&self.rho0, theta);
        let mut listed = 0.0;
        for (o, v) in self.vectors.iter().enumerate() {
            let p = v.dotc(&(&rho * v)).re.max(0.0);
            out[o] = p;
            listed += p;
        }
        out[self.vectors.len()] = (1.0 - listed).max(0.0);
    }

    fn fisher_hint(&self) -> Option<f64> {
        Some(self.fq)
    }
}

#[derive(Clone, Debug)]
pub struct LossSweep {
    pub eta: f64,
    pub probe: TwoPhotonProbe,
    pub solution: PersonickSolution,
    pub quantum_fisher: f64,
    pub curve: MseCurve,
}

impl LossSweep {
    pub fn crb(&self, mu: usize) -> f64 {
        1.0 / (mu as f64 * self.quantum_fisher)
    }
}

/// Optimal single-shot measurement on the QFI-optimal probe, repeated.
pub fn lossy_personick_sweep(eta: f64, prior: &FlatPrior, mu_max: usize, budget: &Budget) -> MetroResult<LossSweep> {
    let probe = best_fisher_two_photon(eta)?;
    lossy_sweep_for_probe(probe, eta, prior, mu_max, budget)
}

pub fn lossy_sweep_for_probe(probe: TwoPhotonProbe, eta: f64, prior: &FlatPrior, mu_max: usize, budget: &Budget) -> MetroResult<LossSweep> {
    let channel = LossChannel::new(eta)?;
    let moments = lossy_moments(&probe, &channel, prior)?;
    let solution = solve_estimator(&moments, prior, DEFAULT_SUPPORT_CUTOFF)?;
    let vectors = (0..solution.projectors.ncols()).map(|k| solution.projectors.column(k).into_owned()).collect();
    let model = MixedLikelihood::new(lossy_initial_state(&probe, &channel), vectors);
    let curve = mse_repeated_model(&model, prior, mu_max, budget)?;
    Ok(LossSweep { eta, probe, solution, quantum_fisher: model.quantum_fisher(), curve })
}
