//! Measurement schemes as POVMs on the truncated two-mode space.
//!
//! Physical schemes are stored as a gate sequence followed by a product
//! basis measurement: the outcome amplitude is `<b1 b2| G_last ... G_first |ψ>`.
//! The optimal single-shot scheme is stored as explicit orthonormal vectors
//! plus a complement outcome.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::error::{MetroError, MetroResult};
use crate::fock::{apply_beam_splitter, beam_splitter_blocks, BeamSplitterBlock, FockDims, ModeOperator, SectorDecomposition, TwoModeState};
use crate::linalg::{c, hermitian_eigen, unitary_from_generator, CMatrix, CVector, I};
use crate::personick::OptimalStrategy;

/// Quadrature angle used by default (`X = (e^{-iπ/8} a† + e^{iπ/8} a)/√2`).
pub const QUADRATURE_ANGLE: f64 = -PI / 8.0;
/// Opposite rotation, as printed in the table of measurement sequences.
pub const QUADRATURE_ANGLE_TABLE: f64 = PI / 8.0;
/// Upper bound on `#effects * dim²` for dense effect construction.
pub const DENSE_EFFECT_LIMIT: usize = 20_000_000;

/// Elementary operation of a measurement circuit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Gate {
    /// `exp(-i t N1)`
    PhaseN1(f64),
    /// `exp(-i t N2)`
    PhaseN2(f64),
    /// `exp(-i t J_z)`
    PhaseJz(f64),
    /// `exp(-i t J_x)`
    BeamSplitter(f64),
    /// `D1(α)`, exponentiated on the truncated mode so it stays unitary there
    Displace1(C64),
}

#[derive(Clone, Debug)]
enum CompiledGate {
    Diagonal(CVector),
    Blocks(Vec<BeamSplitterBlock>),
    Mode1(CMatrix),
}

impl CompiledGate {
    fn compile(gate: Gate, dims: FockDims) -> Self {
        let diag = |f: &dyn Fn(usize, usize) -> f64| {
            CompiledGate::Diagonal(CVector::from_fn(dims.dim(), |i, _| {
                let (n, m) = dims.pair(i);
                C64::from_polar(1.0, -f(n, m))
            }))
        };
        match gate {
            Gate::PhaseN1(t) => diag(&|n, _| t * n as f64),
            Gate::PhaseN2(t) => diag(&|_, m| t * m as f64),
            Gate::PhaseJz(t) => diag(&|n, m| t * (n as f64 - m as f64) / 2.0),
            Gate::BeamSplitter(t) => CompiledGate::Blocks(beam_splitter_blocks(dims, t)),
            Gate::Displace1(alpha) => {
                let a = ModeOperator::annihilation(dims.d1).mat;
                let g = (a.adjoint() * alpha - &a * alpha.conj()) * I;
                CompiledGate::Mode1(unitary_from_generator(&g, 1.0))
            }
        }
    }

    fn apply(&self, dims: FockDims, amps: &mut CVector) {
        match self {
            CompiledGate::Diagonal(d) => amps.component_mul_assign(d),
            CompiledGate::Blocks(b) => apply_beam_splitter(b, amps),
            CompiledGate::Mode1(u) => {
                let phi = CMatrix::from_fn(dims.d1, dims.d2, |n, m| amps[dims.index(n, m)]);
                let out = u * phi;
                for n in 0..dims.d1 {
                    for m in 0..dims.d2 {
                        amps[dims.index(n, m)] = out[(n, m)];
                    }
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum OutcomeLabel {
    Photons(usize, usize),
    /// Eigenvalue pair of the two truncated quadratures.
    Quadratures(f64, f64),
    /// Parities `(±1, ±1)` of the two output modes.
    Parity(i8, i8),
    /// Index into the estimator spectrum and the estimate itself.
    Estimate(usize, f64),
    /// Complement of the listed outcomes.
    Rest,
}

impl std::fmt::Display for OutcomeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OutcomeLabel::Photons(n, m) => write!(f, "({n},{m})"),
            OutcomeLabel::Quadratures(a, b) => write!(f, "({a:.6},{b:.6})"),
            OutcomeLabel::Parity(a, b) => write!(f, "({a:+},{b:+})"),
            OutcomeLabel::Estimate(i, s) => write!(f, "s{i}={s:.6}"),
            OutcomeLabel::Rest => write!(f, "rest"),
        }
    }
}

#[derive(Clone, Debug)]
pub enum SchemeKind {
    CountingEven,
    CountingOdd,
    Quadratures { angle: f64 },
    UndoPreparation { alpha: C64 },
    Parity,
    OptimalSingleShot(Box<OptimalStrategy>),
}

impl SchemeKind {
    pub fn quadratures8() -> Self {
        SchemeKind::Quadratures { angle: QUADRATURE_ANGLE }
    }

    pub fn undo_preparation() -> Self {
        SchemeKind::UndoPreparation { alpha: c(2f64.sqrt()) }
    }

    /// Short name used in configs and CSV output.
    pub fn label(&self) -> &'static str {
        match self {
            SchemeKind::CountingEven => "counting-even",
            SchemeKind::CountingOdd => "counting-odd",
            SchemeKind::Quadratures { .. } => "quadratures",
            SchemeKind::UndoPreparation { .. } => "undo-preparation",
            SchemeKind::Parity => "parity",
            SchemeKind::OptimalSingleShot(_) => "optimal",
        }
    }

    /// Gate sequence, first gate acting first.
    pub fn gates(&self) -> Vec<Gate> {
        match self {
            SchemeKind::CountingEven | SchemeKind::Parity => vec![Gate::PhaseN2(PI / 4.0), Gate::BeamSplitter(PI / 2.0)],
            SchemeKind::CountingOdd => vec![Gate::PhaseN2(PI / 2.0), Gate::BeamSplitter(PI / 2.0)],
            SchemeKind::Quadratures { .. } => vec![Gate::PhaseN1(-PI / 4.0), Gate::BeamSplitter(PI / 2.0)],
            SchemeKind::UndoPreparation { alpha } => {
                vec![Gate::PhaseJz(-PI), Gate::BeamSplitter(-PI / 2.0), Gate::Displace1(-*alpha)]
            }
            SchemeKind::OptimalSingleShot(_) => vec![],
        }
    }
}

#[derive(Clone, Debug)]
enum PovmForm {
    Circuit {
        gates: Vec<CompiledGate>,
        /// Per-mode measurement bases (columns); `None` means the Fock basis.
        bases: Option<(CMatrix, CMatrix)>,
        /// Outcome index of every product basis element.
        group: Vec<usize>,
    },
    Vectors {
        vectors: CMatrix,
    },
}

#[derive(Clone, Debug)]
pub struct Povm {
    dims: FockDims,
    scheme: &'static str,
    form: PovmForm,
    labels: Vec<OutcomeLabel>,
}

pub fn build_scheme(kind: &SchemeKind, dims: FockDims) -> MetroResult<Povm> {
    let scheme = kind.label();
    if let SchemeKind::OptimalSingleShot(strategy) = kind {
        let pdims = strategy.probe.dims();
        if pdims != dims {
            return Err(MetroError::DimensionMismatch { expected: pdims.dim(), got: dims.dim() });
        }
        let vectors = strategy.lifted_projectors();
        let mut labels: Vec<OutcomeLabel> =
            strategy.estimates().iter().enumerate().map(|(i, &s)| OutcomeLabel::Estimate(i, s)).collect();
        labels.push(OutcomeLabel::Rest);
        return Ok(Povm { dims, scheme, form: PovmForm::Vectors { vectors }, labels });
    }

    let gates = kind.gates().into_iter().map(|g| CompiledGate::compile(g, dims)).collect();
    let n = dims.dim();
    let (bases, group, labels) = match kind {
        SchemeKind::Quadratures { angle } => {
            let e1 = hermitian_eigen(&ModeOperator::quadrature(dims.d1, *angle).mat);
            let e2 = hermitian_eigen(&ModeOperator::quadrature(dims.d2, *angle).mat);
            let labels = (0..n)
                .map(|i| {
                    let (a, b) = dims.pair(i);
                    OutcomeLabel::Quadratures(e1.values[a], e2.values[b])
                })
                .collect();
            (Some((e1.vectors, e2.vectors)), (0..n).collect(), labels)
        }
        SchemeKind::Parity => {
            let signs = [(1, 1), (1, -1), (-1, 1), (-1, -1)];
            let group = (0..n)
                .map(|i| {
                    let (a, b) = dims.pair(i);
                    2 * (a % 2) + (b % 2)
                })
                .collect();
            (None, group, signs.iter().map(|&(a, b)| OutcomeLabel::Parity(a, b)).collect())
        }
        _ => {
            let labels = (0..n)
                .map(|i| {
                    let (a, b) = dims.pair(i);
                    OutcomeLabel::Photons(a, b)
                })
                .collect();
            (None, (0..n).collect(), labels)
        }
    };
    Ok(Povm { dims, scheme, form: PovmForm::Circuit { gates, bases, group }, labels })
}

impl Povm {
    pub fn dims(&self) -> FockDims {
        self.dims
    }

    pub fn scheme(&self) -> &'static str {
        self.scheme
    }

    pub fn labels(&self) -> &[OutcomeLabel] {
        &self.labels
    }

    pub fn outcome_count(&self) -> usize {
        self.labels.len()
    }

    /// Number of rank-one elements before grouping.
    pub fn fine_count(&self) -> usize {
        match &self.form {
            PovmForm::Circuit { group, .. } => group.len(),
            PovmForm::Vectors { vectors } => vectors.ncols(),
        }
    }

    /// Outcome of each rank-one element; `None` entries belong to the
    /// complement outcome, which is never listed here.
    pub fn fine_groups(&self) -> Vec<usize> {
        match &self.form {
            PovmForm::Circuit { group, .. } => group.clone(),
            PovmForm::Vectors { vectors } => (0..vectors.ncols()).collect(),
        }
    }

    /// Index of the complement outcome, if any.
    pub fn rest_outcome(&self) -> Option<usize> {
        match self.form {
            PovmForm::Vectors { .. } => Some(self.labels.len() - 1),
            PovmForm::Circuit { .. } => None,
        }
    }

    fn check(&self, state: &TwoModeState) -> MetroResult<()> {
        if state.dims() != self.dims {
            return Err(MetroError::DimensionMismatch { expected: self.dims.dim(), got: state.dims().dim() });
        }
        Ok(())
    }

    /// Amplitudes `<e_f|ψ>` on the rank-one elements.
    pub fn fine_amplitudes(&self, state: &TwoModeState) -> MetroResult<CVector> {
        self.check(state)?;
        Ok(self.fine_amplitudes_unchecked(state.amps()))
    }

    fn fine_amplitudes_unchecked(&self, amps: &CVector) -> CVector {
        let dims = self.dims;
        match &self.form {
            PovmForm::Vectors { vectors } => vectors.adjoint() * amps,
            PovmForm::Circuit { gates, bases, .. } => {
                let mut v = amps.clone();
                for g in gates {
                    g.apply(dims, &mut v);
                }
                match bases {
                    None => v,
                    Some((b1, b2)) => {
                        let phi = CMatrix::from_fn(dims.d1, dims.d2, |n, m| v[dims.index(n, m)]);
                        let out = b1.adjoint() * phi * b2.conjugate();
                        CVector::from_fn(dims.dim(), |i, _| {
                            let (a, b) = dims.pair(i);
                            out[(a, b)]
                        })
                    }
                }
            }
        }
    }

    /// Born-rule probabilities, clipped at zero.
    pub fn likelihood(&self, state: &TwoModeState) -> MetroResult<Vec<f64>> {
        let amps = self.fine_amplitudes(state)?;
        let norm2 = state.norm().powi(2);
        let mut p = vec![0.0; self.outcome_count()];
        for (f, g) in self.fine_groups().into_iter().enumerate() {
            p[g] += amps[f].norm_sqr();
        }
        if let Some(r) = self.rest_outcome() {
            let listed: f64 = p.iter().sum();
            p[r] = norm2 - listed;
        }
        for x in p.iter_mut() {
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        Ok(p)
    }

    /// Rank-one element vectors `|e_f>` as columns.
    fn fine_vectors(&self) -> CMatrix {
        let n = self.dims.dim();
        let mut out = CMatrix::zeros(n, self.fine_count());
        // <e_f|ψ> is linear in ψ, so feeding basis states gives conj(e_f)
        for k in 0..n {
            let basis = CVector::from_fn(n, |i, _| if i == k { c(1.0) } else { c(0.0) });
            let amps = self.fine_amplitudes_unchecked(&basis);
            for f in 0..amps.len() {
                out[(k, f)] = amps[f].conj();
            }
        }
        out
    }

    /// Dense effect matrices, one per outcome.
    pub fn effects(&self) -> MetroResult<Vec<CMatrix>> {
        let n = self.dims.dim();
        let entries = self.outcome_count().saturating_mul(n * n);
        if entries > DENSE_EFFECT_LIMIT {
            return Err(MetroError::DimensionOverflow { dim: entries, limit: DENSE_EFFECT_LIMIT });
        }
        let vecs = self.fine_vectors();
        let mut effects = vec![CMatrix::zeros(n, n); self.outcome_count()];
        for (f, g) in self.fine_groups().into_iter().enumerate() {
            let col = vecs.column(f);
            effects[g] += &col * col.adjoint();
        }
        if let Some(r) = self.rest_outcome() {
            let listed = effects.iter().take(r).fold(CMatrix::zeros(n, n), |acc, e| acc + e);
            effects[r] = CMatrix::identity(n, n) - listed;
        }
        Ok(effects)
    }
}

/// Likelihood of a pure probe under `U(θ) = exp(-i J_z θ)`, evaluated from
/// per-sector measurement amplitudes:
/// `p(o|θ) = Σ_{f in o} |Σ_k A_{fk} e^{-i j_k θ/2}|²`.
#[derive(Clone, Debug)]
pub struct PhaseLikelihood {
    /// `j_k / 2` for every occupied sector.
    freqs: Vec<f64>,
    /// Fine amplitudes of the weighted sector components, `fine x sectors`.
    amps: CMatrix,
    group: Vec<usize>,
    outcomes: usize,
    rest: Option<usize>,
}

impl PhaseLikelihood {
    pub fn new(povm: &Povm, probe: &TwoModeState) -> MetroResult<Self> {
        povm.check(probe)?;
        let sectors = SectorDecomposition::new(probe);
        let k = sectors.len();
        let mut amps = CMatrix::zeros(povm.fine_count(), k);
        for s in 0..k {
            let comp = sectors.component(probe, s);
            let a = povm.fine_amplitudes_unchecked(comp.amps()) * c(sectors.weights[s]);
            amps.set_column(s, &a);
        }
        // drop rank-one elements the probe never reaches
        let group_all = povm.fine_groups();
        let keep: Vec<usize> = (0..amps.nrows()).filter(|&f| amps.row(f).iter().any(|z| z.norm_sqr() > 1e-30)).collect();
        let amps = CMatrix::from_fn(keep.len(), k, |i, j| amps[(keep[i], j)]);
        let group = keep.iter().map(|&f| group_all[f]).collect();
        Ok(PhaseLikelihood {
            freqs: sectors.labels.iter().map(|&j| j as f64 / 2.0).collect(),
            amps,
            group,
            outcomes: povm.outcome_count(),
            rest: povm.rest_outcome(),
        })
    }

    pub fn outcome_count(&self) -> usize {
        self.outcomes
    }

    /// `4 Var(J_z)` of the probe.
    pub fn quantum_fisher(&self) -> f64 {
        let w: Vec<f64> = (0..self.freqs.len()).map(|k| self.amps.column(k).norm_squared()).collect();
        let total: f64 = w.iter().sum();
        let m1: f64 = w.iter().zip(&self.freqs).map(|(p, h)| p * h).sum::<f64>() / total;
        let m2: f64 = w.iter().zip(&self.freqs).map(|(p, h)| p * h * h).sum::<f64>() / total;
        4.0 * (m2 - m1 * m1)
    }

    fn phases(&self, theta: f64) -> Vec<C64> {
        self.freqs.iter().map(|h| C64::from_polar(1.0, -h * theta)).collect()
    }

    pub fn probabilities(&self, theta: f64, out: &mut [f64]) {
        let ph = self.phases(theta);
        out.iter_mut().for_each(|x| *x = 0.0);
        for f in 0..self.amps.nrows() {
            let mut a = C64::new(0.0, 0.0);
            for (k, z) in ph.iter().enumerate() {
                a += self.amps[(f, k)] * z;
            }
            out[self.group[f]] += a.norm_sqr();
        }
        self.finish(out);
    }

    /// Probabilities and their analytic θ-derivatives.
    pub fn probabilities_and_derivatives(&self, theta: f64, p: &mut [f64], dp: &mut [f64]) {
        let ph = self.phases(theta);
        p.iter_mut().for_each(|x| *x = 0.0);
        dp.iter_mut().for_each(|x| *x = 0.0);
        for f in 0..self.amps.nrows() {
            let mut a = C64::new(0.0, 0.0);
            let mut da = C64::new(0.0, 0.0);
            for (k, z) in ph.iter().enumerate() {
                let t = self.amps[(f, k)] * z;
                a += t;
                da += t * C64::new(0.0, -self.freqs[k]);
            }
            p[self.group[f]] += a.norm_sqr();
            dp[self.group[f]] += 2.0 * (a.conj() * da).re;
        }
        if let Some(r) = self.rest {
            let listed: f64 = dp.iter().take(r).sum();
            dp[r] = -listed;
        }
        self.finish(p);
    }

    /// `Σ_{f in o} |∂a_f/∂θ|²` per outcome. Where `p(o|θ)` has a double zero
    /// the Fisher term `(∂p)²/p` tends to four times this.
    pub fn amplitude_speeds(&self, theta: f64, out: &mut [f64]) {
        let ph = self.phases(theta);
        out.iter_mut().for_each(|x| *x = 0.0);
        for f in 0..self.amps.nrows() {
            let mut da = C64::new(0.0, 0.0);
            for (k, z) in ph.iter().enumerate() {
                da += self.amps[(f, k)] * z * C64::new(0.0, -self.freqs[k]);
            }
            out[self.group[f]] += da.norm_sqr();
        }
        if let Some(r) = self.rest {
            out[r] = 0.0;
        }
    }

    fn finish(&self, out: &mut [f64]) {
        if let Some(r) = self.rest {
            let listed: f64 = out.iter().take(r).sum();
            out[r] = 1.0 - listed;
        }
        for x in out.iter_mut() {
            if *x < 0.0 {
                *x = 0.0;
            }
        }
    }
}
