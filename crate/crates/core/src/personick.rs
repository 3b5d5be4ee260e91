//! Prior-averaged moments, the optimal quantum estimator and the single-shot
//! (and collective) Bayesian bound.
//!
//! With `U(θ) = exp(-i J_z θ)` every matrix element of `ρ(θ)` picks up a
//! phase `e^{-ixθ/2}`, `x = n - m + l - k`, so the prior averages are
//! Hadamard products `ρ = ρ0 ∘ K`, `ρ̄ = ρ0 ∘ L` with closed-form kernels.

use num_complex::Complex64 as C64;

use crate::error::{MetroError, MetroResult};
use crate::fock::{FockDims, SectorDecomposition, TwoModeState};
use crate::linalg::{c, hermitian_eigen, trace, CMatrix, CVector, I};
use crate::prior::FlatPrior;

/// Default eigenvalue cutoff defining the support of `ρ`.
pub const DEFAULT_SUPPORT_CUTOFF: f64 = 1e-12;
/// Relative tolerance used to group degenerate estimates.
pub const DEGENERACY_TOL: f64 = 1e-9;
/// Largest tensor-power dimension accepted by [`collective_bound`].
pub const DEFAULT_COLLECTIVE_DIM_LIMIT: usize = 2048;

/// `(K(x), L(x))`: prior averages of `e^{-ixθ/2}` and `θ e^{-ixθ/2}`.
pub fn kernel_values(x: f64, prior: &FlatPrior) -> (C64, C64) {
    let tb = prior.mean();
    let w = prior.width();
    if x == 0.0 {
        return (c(1.0), c(tb));
    }
    let a = C64::from_polar(1.0, -x * tb / 2.0);
    let b = (x * w / 4.0).sin();
    let cc = (x * w / 4.0).cos();
    let d = C64::new(tb, -2.0 / x);
    let k = a * (4.0 / w) * b / x;
    let l = (a * 2.0 / x) * (d * (2.0 * b / w) + I * cc);
    (k, l)
}

/// Kernel matrices on the full two-mode space, rows `(nm)` and columns `(kl)`.
pub fn kernel_matrices(prior: &FlatPrior, dims: FockDims) -> (CMatrix, CMatrix) {
    let n = dims.dim();
    let mut k = CMatrix::zeros(n, n);
    let mut l = CMatrix::zeros(n, n);
    for a in 0..n {
        let (n1, m1) = dims.pair(a);
        for b in 0..n {
            let (k1, l1) = dims.pair(b);
            let x = n1 as f64 - m1 as f64 + l1 as f64 - k1 as f64;
            let (kv, lv) = kernel_values(x, prior);
            k[(a, b)] = kv;
            l[(a, b)] = lv;
        }
    }
    (k, l)
}

/// `ρ = ∫ p(θ) ρ(θ)` and `ρ̄ = ∫ p(θ) θ ρ(θ)`.
#[derive(Clone, Debug)]
pub struct MomentPair {
    pub rho: CMatrix,
    pub rho_bar: CMatrix,
}

impl MomentPair {
    /// Averages of `e^{-iHθ} ρ0 e^{iHθ}` for a diagonal generator with
    /// eigenvalues `h`.
    pub fn from_diagonal_generator(rho0: &CMatrix, h: &[f64], prior: &FlatPrior) -> MetroResult<Self> {
        let n = rho0.nrows();
        if h.len() != n || rho0.ncols() != n {
            return Err(MetroError::DimensionMismatch { expected: n, got: h.len() });
        }
        let mut rho = CMatrix::zeros(n, n);
        let mut rho_bar = CMatrix::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                let (kv, lv) = kernel_values(2.0 * (h[a] - h[b]), prior);
                rho[(a, b)] = rho0[(a, b)] * kv;
                rho_bar[(a, b)] = rho0[(a, b)] * lv;
            }
        }
        Ok(MomentPair { rho, rho_bar })
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }
}

/// Full-space route: `(d1 d2) x (d1 d2)` Hadamard products.
pub fn averaged_moments(probe: &TwoModeState, prior: &FlatPrior) -> MomentPair {
    let dims = probe.dims();
    let (k, l) = kernel_matrices(prior, dims);
    let rho0 = probe.density_matrix();
    MomentPair { rho: rho0.component_mul(&k), rho_bar: rho0.component_mul(&l) }
}

/// Moments expressed on the orthonormal basis of normalised
/// photon-difference sector components of a pure probe.
#[derive(Clone, Debug)]
pub struct SectorMoments {
    pub sectors: SectorDecomposition,
    pub moments: MomentPair,
}

pub fn sector_moments(probe: &TwoModeState, prior: &FlatPrior) -> SectorMoments {
    let sectors = SectorDecomposition::new(probe);
    let moments = moments_from_sector_weights(&sectors.labels, &sectors.weights, prior);
    SectorMoments { sectors, moments }
}

fn moments_from_sector_weights(labels: &[i64], weights: &[f64], prior: &FlatPrior) -> MomentPair {
    let k = labels.len();
    let mut rho = CMatrix::zeros(k, k);
    let mut rho_bar = CMatrix::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            let (kv, lv) = kernel_values((labels[a] - labels[b]) as f64, prior);
            let ww = weights[a] * weights[b];
            rho[(a, b)] = kv * ww;
            rho_bar[(a, b)] = lv * ww;
        }
    }
    MomentPair { rho, rho_bar }
}

#[derive(Clone, Debug)]
pub struct PersonickSolution {
    /// Optimal estimator `S`, zero outside the support of `ρ`.
    pub estimator: CMatrix,
    /// Eigenvalues of `S` on the support, ascending, with multiplicity.
    pub estimates: Vec<f64>,
    /// Orthonormal eigenvectors of `S` (columns), matching `estimates`.
    pub projectors: CMatrix,
    /// `∫ p θ² - Tr(ρ̄ S)`.
    pub bound: f64,
    /// `Δθ²_p - ΔS²_ρ`, the same quantity evaluated independently.
    pub bound_variance_form: f64,
    /// `Re Tr(ρ̄ S)`.
    pub trace_rho_bar_s: f64,
    /// `Re Tr(ρ S)`, which should equal the prior mean.
    pub trace_rho_s: f64,
    pub support_dim: usize,
    /// Index groups (into `estimates`) of numerically degenerate eigenvalues.
    pub degenerate_groups: Vec<Vec<usize>>,
    /// Number of `p_i + p_j` denominators clipped at `2 * cutoff`.
    pub clipped_entries: usize,
    /// `‖P(Sρ + ρS - 2ρ̄)P‖_F / ‖ρ̄‖_F` with `P` the support projector.
    pub sylvester_residual: f64,
}

impl PersonickSolution {
    pub fn is_degenerate(&self) -> bool {
        !self.degenerate_groups.is_empty()
    }
}

/// Solves `Sρ + ρS = 2ρ̄` in the eigenbasis of `ρ`.
pub fn solve_estimator(m: &MomentPair, prior: &FlatPrior, support_cutoff: f64) -> MetroResult<PersonickSolution> {
    if !(support_cutoff > 0.0) {
        return Err(MetroError::InvalidParameter(format!("support cutoff must be > 0, got {support_cutoff}")));
    }
    let n = m.dim();
    let eig = hermitian_eigen(&m.rho);
    let keep: Vec<usize> = (0..n).filter(|&i| eig.values[i] > support_cutoff).collect();
    if keep.is_empty() {
        return Err(MetroError::EmptySupport(support_cutoff));
    }
    let r = keep.len();
    let p: Vec<f64> = keep.iter().map(|&i| eig.values[i]).collect();
    let v = CMatrix::from_fn(n, r, |i, j| eig.vectors[(i, keep[j])]);

    let rbd = v.adjoint() * &m.rho_bar * &v;
    let mut clipped = 0;
    let sd = CMatrix::from_fn(r, r, |i, j| {
        let mut den = p[i] + p[j];
        if den < 2.0 * support_cutoff {
            den = 2.0 * support_cutoff;
            clipped += 1;
        }
        rbd[(i, j)] * (2.0 / den)
    });

    let s_eig = hermitian_eigen(&sd);
    let projectors = &v * &s_eig.vectors;
    let estimator = &v * &sd * v.adjoint();

    // Tr(ρ S) and Tr(ρ S²) in the eigenbasis of ρ
    let sd2 = &sd * &sd;
    let trace_rho_s: f64 = (0..r).map(|i| p[i] * sd[(i, i)].re).sum();
    let trace_rho_s2: f64 = (0..r).map(|i| p[i] * sd2[(i, i)].re).sum();
    let trace_rho_bar_s = (0..r).map(|i| (rbd.row(i) * sd.column(i))[(0, 0)]).sum::<C64>().re;

    let bound = prior.second_moment() - trace_rho_bar_s;
    let bound_variance_form = prior.variance() - (trace_rho_s2 - trace_rho_s * trace_rho_s);

    let residual = {
        let proj = &v * v.adjoint();
        let res = &proj * (&estimator * &m.rho + &m.rho * &estimator - &m.rho_bar * c(2.0)) * &proj;
        res.norm() / m.rho_bar.norm().max(1e-300)
    };

    Ok(PersonickSolution {
        estimator,
        degenerate_groups: degenerate_groups(&s_eig.values, DEGENERACY_TOL),
        estimates: s_eig.values,
        projectors,
        bound,
        bound_variance_form,
        trace_rho_bar_s,
        trace_rho_s,
        support_dim: r,
        clipped_entries: clipped,
        sylvester_residual: residual,
    })
}

fn degenerate_groups(sorted: &[f64], rel_tol: f64) -> Vec<Vec<usize>> {
    let scale = sorted.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1e-300);
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=sorted.len() {
        if i == sorted.len() || (sorted[i] - sorted[i - 1]).abs() > rel_tol * scale {
            if i - start > 1 {
                groups.push((start..i).collect());
            }
            start = i;
        }
    }
    groups
}

/// `∫ p(θ) θ² - Tr(ρ̄ S)`.
pub fn single_shot_bound(sol: &PersonickSolution, prior: &FlatPrior) -> f64 {
    prior.second_moment() - sol.trace_rho_bar_s
}

/// Narrow-prior approximation `Δθ²_p (1 - Δθ²_p F_q)`.
pub fn narrow_prior_bound(prior: &FlatPrior, fq: f64) -> f64 {
    if prior.width() > 0.5 {
        log::warn!("narrow-prior approximation used with W0 = {} > 0.5", prior.width());
    }
    let v = prior.variance();
    v * (1.0 - v * fq)
}

/// Optimal single-shot strategy for a pure probe, solved on the sector basis.
#[derive(Clone, Debug)]
pub struct OptimalStrategy {
    pub probe: TwoModeState,
    pub sectors: SectorDecomposition,
    pub solution: PersonickSolution,
}

impl OptimalStrategy {
    pub fn bound(&self) -> f64 {
        self.solution.bound
    }

    pub fn estimates(&self) -> &[f64] {
        &self.solution.estimates
    }

    /// Eigenvectors of `S` on the full two-mode space (columns).
    pub fn lifted_projectors(&self) -> CMatrix {
        let r = self.solution.projectors.ncols();
        let n = self.probe.dims().dim();
        let mut out = CMatrix::zeros(n, r);
        for col in 0..r {
            let coeffs: Vec<C64> = self.solution.projectors.column(col).iter().copied().collect();
            out.set_column(col, &self.sectors.lift(&self.probe, &coeffs));
        }
        out
    }

    /// The estimator `S` on the full two-mode space.
    pub fn lifted_estimator(&self) -> CMatrix {
        let u = self.lifted_projectors();
        let d = CVector::from_iterator(self.solution.estimates.len(), self.solution.estimates.iter().map(|&s| c(s)));
        &u * CMatrix::from_diagonal(&d) * u.adjoint()
    }
}

pub fn optimal_strategy(probe: &TwoModeState, prior: &FlatPrior, support_cutoff: f64) -> MetroResult<OptimalStrategy> {
    let sm = sector_moments(probe, prior);
    let solution = solve_estimator(&sm.moments, prior, support_cutoff)?;
    Ok(OptimalStrategy { probe: probe.clone(), sectors: sm.sectors, solution })
}

/// Bound for a joint measurement on `μ` copies, built on the tensor power
/// of the probe's support with kernels indexed by the summed photon
/// difference.
pub fn collective_bound(probe: &TwoModeState, prior: &FlatPrior, mu: usize, dim_limit: usize) -> MetroResult<f64> {
    if mu == 0 {
        return Err(MetroError::InvalidParameter("collective bound needs mu >= 1".into()));
    }
    let dims = probe.dims();
    let support: Vec<(i64, C64)> = probe
        .amps()
        .iter()
        .enumerate()
        .filter(|(_, z)| z.norm_sqr() > 0.0)
        .map(|(i, z)| {
            let (n, m) = dims.pair(i);
            (n as i64 - m as i64, *z)
        })
        .collect();
    let s = support.len();
    let dim = (0..mu).try_fold(1usize, |acc, _| acc.checked_mul(s)).unwrap_or(usize::MAX);
    if dim > dim_limit {
        return Err(MetroError::DimensionOverflow { dim, limit: dim_limit });
    }
    // amplitude and summed photon difference of every product basis tuple
    let mut amps = vec![c(1.0)];
    let mut diffs = vec![0i64];
    for _ in 0..mu {
        let mut na = Vec::with_capacity(amps.len() * s);
        let mut nd = Vec::with_capacity(amps.len() * s);
        for (a, d) in amps.iter().zip(&diffs) {
            for (j, z) in &support {
                na.push(a * z);
                nd.push(d + j);
            }
        }
        amps = na;
        diffs = nd;
    }
    let rho0 = CMatrix::from_fn(dim, dim, |a, b| amps[a] * amps[b].conj());
    let h: Vec<f64> = diffs.iter().map(|&d| d as f64 / 2.0).collect();
    let m = MomentPair::from_diagonal_generator(&rho0, &h, prior)?;
    Ok(solve_estimator(&m, prior, DEFAULT_SUPPORT_CUTOFF)?.bound)
}

/// Same quantity as [`collective_bound`], computed from the distribution of
/// the total photon difference, which is the `μ`-fold convolution of the
/// single-copy sector weights.
pub fn collective_bound_by_convolution(probe: &TwoModeState, prior: &FlatPrior, mu: usize) -> MetroResult<f64> {
    if mu == 0 {
        return Err(MetroError::InvalidParameter("collective bound needs mu >= 1".into()));
    }
    let sec = SectorDecomposition::new(probe);
    let lo = sec.labels[0];
    let width = (sec.labels[sec.len() - 1] - lo) as usize + 1;
    let mut single = vec![0.0; width];
    for (j, w) in sec.labels.iter().zip(&sec.weights) {
        single[(j - lo) as usize] = w * w;
    }
    let mut dist = vec![1.0];
    for _ in 0..mu {
        let mut next = vec![0.0; dist.len() + width - 1];
        for (a, pa) in dist.iter().enumerate() {
            for (b, pb) in single.iter().enumerate() {
                next[a + b] += pa * pb;
            }
        }
        dist = next;
    }
    let base = lo * mu as i64;
    let (labels, weights): (Vec<i64>, Vec<f64>) = dist
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 1e-300)
        .map(|(k, &p)| (base + k as i64, p.sqrt()))
        .unzip();
    let m = moments_from_sector_weights(&labels, &weights, prior);
    Ok(solve_estimator(&m, prior, DEFAULT_SUPPORT_CUTOFF)?.bound)
}

/// Rows `(index, estimate)` of the sorted estimator spectrum.
pub fn spectrum_rows(sol: &PersonickSolution) -> Vec<(usize, f64)> {
    sol.estimates.iter().copied().enumerate().collect()
}

/// `Tr ρ` as a quick sanity value.
pub fn trace_of(m: &CMatrix) -> f64 {
    trace(m).re
}
