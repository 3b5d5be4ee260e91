//! Truncated two-mode Fock space: states, mode operators, probe constructors
//! and photon-number statistics.
//!
//! Basis ordering is fixed: `|n,m>` lives at index `n * d2 + m`, so mode 1 is
//! the slow index and two-mode operators are `A ⊗ B` Kronecker products.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::error::{MetroError, MetroResult};
use crate::linalg::{c, hermiticity_defect, kron, unitary_from_generator, CMatrix, CVector, I};

/// Tail probability accepted by [`make_probe`] unless overridden.
pub const DEFAULT_TAIL_THRESHOLD: f64 = 1e-4;

/// Extra Fock levels used when exponentiating single-mode generators before
/// truncating back to the requested cutoff.
const PAD_EXTRA: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FockDims {
    pub d1: usize,
    pub d2: usize,
}

impl FockDims {
    pub fn new(d1: usize, d2: usize) -> MetroResult<Self> {
        if d1 == 0 || d2 == 0 {
            return Err(MetroError::InvalidDims(format!("({d1}, {d2}); both cutoffs must be >= 1")));
        }
        Ok(FockDims { d1, d2 })
    }

    pub fn square(d: usize) -> MetroResult<Self> {
        Self::new(d, d)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d1 * self.d2
    }

    #[inline]
    pub fn index(&self, n: usize, m: usize) -> usize {
        n * self.d2 + m
    }

    #[inline]
    pub fn pair(&self, idx: usize) -> (usize, usize) {
        (idx / self.d2, idx % self.d2)
    }
}

#[derive(Clone, Debug)]
pub struct TwoModeState {
    dims: FockDims,
    amps: CVector,
}

impl TwoModeState {
    pub fn new(dims: FockDims, amps: CVector) -> MetroResult<Self> {
        if amps.len() != dims.dim() {
            return Err(MetroError::DimensionMismatch { expected: dims.dim(), got: amps.len() });
        }
        Ok(TwoModeState { dims, amps })
    }

    pub fn from_fn(dims: FockDims, f: impl Fn(usize, usize) -> C64) -> Self {
        let amps = CVector::from_fn(dims.dim(), |i, _| {
            let (n, m) = dims.pair(i);
            f(n, m)
        });
        TwoModeState { dims, amps }
    }

    pub fn fock(dims: FockDims, n: usize, m: usize) -> MetroResult<Self> {
        if n >= dims.d1 || m >= dims.d2 {
            return Err(MetroError::InvalidDims(format!("|{n},{m}> outside cutoff ({}, {})", dims.d1, dims.d2)));
        }
        Ok(Self::from_fn(dims, |a, b| if a == n && b == m { c(1.0) } else { c(0.0) }))
    }

    pub fn vacuum(dims: FockDims) -> Self {
        Self::from_fn(dims, |n, m| if n == 0 && m == 0 { c(1.0) } else { c(0.0) })
    }

    pub fn dims(&self) -> FockDims {
        self.dims
    }

    pub fn amps(&self) -> &CVector {
        &self.amps
    }

    #[inline]
    pub fn amp(&self, n: usize, m: usize) -> C64 {
        self.amps[self.dims.index(n, m)]
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    pub fn normalized(mut self) -> MetroResult<Self> {
        let nrm = self.norm();
        if nrm == 0.0 || !nrm.is_finite() {
            return Err(MetroError::InvalidParameter("cannot normalise a zero state".into()));
        }
        self.amps /= c(nrm);
        Ok(self)
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|z| z.norm_sqr()).collect()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &TwoModeState) -> MetroResult<C64> {
        if self.dims != other.dims {
            return Err(MetroError::DimensionMismatch { expected: self.dims.dim(), got: other.dims.dim() });
        }
        Ok(self.amps.dotc(&other.amps))
    }

    /// Copies the amplitudes into a different cutoff, dropping or zero-filling.
    pub fn resized(&self, dims: FockDims) -> TwoModeState {
        TwoModeState::from_fn(dims, |n, m| {
            if n < self.dims.d1 && m < self.dims.d2 {
                self.amp(n, m)
            } else {
                c(0.0)
            }
        })
    }

    pub fn density_matrix(&self) -> CMatrix {
        &self.amps * self.amps.adjoint()
    }
}

/// Space an operator acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpSpace {
    Single(usize),
    Two(FockDims),
}

impl OpSpace {
    pub fn dim(&self) -> usize {
        match self {
            OpSpace::Single(d) => *d,
            OpSpace::Two(dims) => dims.dim(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ModeOperator {
    pub space: OpSpace,
    pub mat: CMatrix,
}

fn annihilation_matrix(d: usize) -> CMatrix {
    CMatrix::from_fn(d, d, |i, j| if j == i + 1 { c((j as f64).sqrt()) } else { c(0.0) })
}

impl ModeOperator {
    pub fn annihilation(d: usize) -> Self {
        ModeOperator { space: OpSpace::Single(d), mat: annihilation_matrix(d) }
    }

    pub fn creation(d: usize) -> Self {
        ModeOperator { space: OpSpace::Single(d), mat: annihilation_matrix(d).adjoint() }
    }

    pub fn number(d: usize) -> Self {
        let mat = CMatrix::from_fn(d, d, |i, j| if i == j { c(i as f64) } else { c(0.0) });
        ModeOperator { space: OpSpace::Single(d), mat }
    }

    /// `(-1)^{a† a}`.
    pub fn parity(d: usize) -> Self {
        let mat = CMatrix::from_fn(d, d, |i, j| if i == j { c(if i % 2 == 0 { 1.0 } else { -1.0 }) } else { c(0.0) });
        ModeOperator { space: OpSpace::Single(d), mat }
    }

    /// `X = (e^{iφ} a† + e^{-iφ} a)/√2`.
    pub fn quadrature(d: usize, angle: f64) -> Self {
        let a = annihilation_matrix(d);
        let e = C64::from_polar(1.0, angle);
        let mat = (a.adjoint() * e + a * e.conj()) * c(std::f64::consts::FRAC_1_SQRT_2);
        ModeOperator { space: OpSpace::Single(d), mat }
    }

    /// `D(α) = exp(α a† - α* a)`, exponentiated on a padded space then truncated.
    pub fn displacement(d: usize, alpha: C64) -> Self {
        let big = 2 * d + PAD_EXTRA;
        let a = annihilation_matrix(big);
        let g = (a.adjoint() * alpha - &a * alpha.conj()) * I;
        let u = unitary_from_generator(&g, 1.0);
        ModeOperator { space: OpSpace::Single(d), mat: u.view((0, 0), (d, d)).into_owned() }
    }

    /// `S(r) = exp[(r* a² - r a†²)/2]`, exponentiated on a padded space then truncated.
    pub fn squeeze(d: usize, r: C64) -> Self {
        let big = 2 * d + PAD_EXTRA;
        let a = annihilation_matrix(big);
        let a2 = &a * &a;
        let g = (&a2 * r.conj() - a2.adjoint() * r) * (I * 0.5);
        let u = unitary_from_generator(&g, 1.0);
        ModeOperator { space: OpSpace::Single(d), mat: u.view((0, 0), (d, d)).into_owned() }
    }

    /// Lifts a single-mode operator onto mode 1 (`op ⊗ 1`).
    pub fn on_mode1(&self, dims: FockDims) -> MetroResult<Self> {
        self.expect_single(dims.d1)?;
        Ok(ModeOperator { space: OpSpace::Two(dims), mat: kron(&self.mat, &CMatrix::identity(dims.d2, dims.d2)) })
    }

    /// Lifts a single-mode operator onto mode 2 (`1 ⊗ op`).
    pub fn on_mode2(&self, dims: FockDims) -> MetroResult<Self> {
        self.expect_single(dims.d2)?;
        Ok(ModeOperator { space: OpSpace::Two(dims), mat: kron(&CMatrix::identity(dims.d1, dims.d1), &self.mat) })
    }

    fn expect_single(&self, d: usize) -> MetroResult<()> {
        match self.space {
            OpSpace::Single(s) if s == d => Ok(()),
            _ => Err(MetroError::DimensionMismatch { expected: d, got: self.space.dim() }),
        }
    }

    pub fn a1(dims: FockDims) -> Self {
        Self::annihilation(dims.d1).on_mode1(dims).expect("matching cutoff")
    }

    pub fn a2(dims: FockDims) -> Self {
        Self::annihilation(dims.d2).on_mode2(dims).expect("matching cutoff")
    }

    pub fn n1(dims: FockDims) -> Self {
        Self::diagonal(dims, |n, _| n as f64)
    }

    pub fn n2(dims: FockDims) -> Self {
        Self::diagonal(dims, |_, m| m as f64)
    }

    pub fn jz(dims: FockDims) -> Self {
        Self::diagonal(dims, |n, m| (n as f64 - m as f64) / 2.0)
    }

    /// `J_x = (a1† a2 + a2† a1)/2`.
    pub fn jx(dims: FockDims) -> Self {
        let a1 = Self::a1(dims).mat;
        let a2 = Self::a2(dims).mat;
        let mat = (a1.adjoint() * &a2 + a2.adjoint() * &a1) * c(0.5);
        ModeOperator { space: OpSpace::Two(dims), mat }
    }

    /// Diagonal two-mode operator with entries `f(n, m)`.
    pub fn diagonal(dims: FockDims, f: impl Fn(usize, usize) -> f64) -> Self {
        let diag = CVector::from_fn(dims.dim(), |i, _| {
            let (n, m) = dims.pair(i);
            c(f(n, m))
        });
        ModeOperator { space: OpSpace::Two(dims), mat: CMatrix::from_diagonal(&diag) }
    }

    /// `U(θ) = exp(-i J_z θ)`.
    pub fn phase_encoding(dims: FockDims, theta: f64) -> Self {
        let diag = CVector::from_fn(dims.dim(), |i, _| {
            let (n, m) = dims.pair(i);
            C64::from_polar(1.0, -(n as f64 - m as f64) * theta / 2.0)
        });
        ModeOperator { space: OpSpace::Two(dims), mat: CMatrix::from_diagonal(&diag) }
    }

    /// `exp(-i t J_x)`, assembled block by block in total photon number.
    pub fn beam_splitter(dims: FockDims, t: f64) -> Self {
        let mut mat = CMatrix::zeros(dims.dim(), dims.dim());
        for block in beam_splitter_blocks(dims, t) {
            for (a, &ia) in block.indices.iter().enumerate() {
                for (b, &ib) in block.indices.iter().enumerate() {
                    mat[(ia, ib)] = block.unitary[(a, b)];
                }
            }
        }
        ModeOperator { space: OpSpace::Two(dims), mat }
    }

    pub fn apply(&self, state: &TwoModeState) -> MetroResult<TwoModeState> {
        match self.space {
            OpSpace::Two(d) if d == state.dims => Ok(TwoModeState { dims: d, amps: &self.mat * &state.amps }),
            _ => Err(MetroError::DimensionMismatch { expected: self.space.dim(), got: state.dims.dim() }),
        }
    }

    pub fn hermiticity_defect(&self) -> f64 {
        hermiticity_defect(&self.mat)
    }

    /// `max |(M†M - 1)_{ij}|` over basis states whose photon numbers are all
    /// below `block`; truncation only spoils unitarity near the cutoff.
    pub fn unitarity_defect(&self, block: usize) -> f64 {
        let prod = self.mat.adjoint() * &self.mat;
        let keep: Vec<usize> = match self.space {
            OpSpace::Single(d) => (0..d.min(block)).collect(),
            OpSpace::Two(dims) => (0..dims.dim())
                .filter(|&i| {
                    let (n, m) = dims.pair(i);
                    n < block && m < block
                })
                .collect(),
        };
        let mut worst: f64 = 0.0;
        for &i in &keep {
            for &j in &keep {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((prod[(i, j)] - c(target)).norm());
            }
        }
        worst
    }
}

/// One fixed-total-photon-number block of `exp(-i t J_x)`.
#[derive(Clone, Debug)]
pub struct BeamSplitterBlock {
    pub indices: Vec<usize>,
    pub unitary: CMatrix,
}

pub fn beam_splitter_blocks(dims: FockDims, t: f64) -> Vec<BeamSplitterBlock> {
    let max_total = dims.d1 + dims.d2 - 2;
    let mut blocks = Vec::with_capacity(max_total + 1);
    for total in 0..=max_total {
        // states |n, total-n> inside the cutoff, ordered by n
        let ns: Vec<usize> = (0..dims.d1).filter(|&n| n <= total && total - n < dims.d2).collect();
        let k = ns.len();
        let mut g = CMatrix::zeros(k, k);
        for a in 0..k {
            // a1† a2 |n, m> = sqrt((n+1) m) |n+1, m-1>
            if a + 1 < k && ns[a + 1] == ns[a] + 1 {
                let n = ns[a] as f64;
                let m = (total - ns[a]) as f64;
                let v = 0.5 * ((n + 1.0) * m).sqrt();
                g[(a + 1, a)] = c(v);
                g[(a, a + 1)] = c(v);
            }
        }
        let unitary = unitary_from_generator(&g, t);
        let indices = ns.iter().map(|&n| dims.index(n, total - n)).collect();
        blocks.push(BeamSplitterBlock { indices, unitary });
    }
    blocks
}

/// Applies `exp(-i t J_x)` to a state without forming the full matrix.
pub fn apply_beam_splitter(blocks: &[BeamSplitterBlock], amps: &mut CVector) {
    let mut scratch = Vec::new();
    for block in blocks {
        scratch.clear();
        scratch.extend(block.indices.iter().map(|&i| amps[i]));
        for (a, &ia) in block.indices.iter().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for (b, z) in scratch.iter().enumerate() {
                acc += block.unitary[(a, b)] * z;
            }
            amps[ia] = acc;
        }
    }
}

/// Default parameters for the intermediate twin squeezed cat.
pub const TSC_INTERMEDIATE: (f64, f64) = (1.103, 1.090);
/// Default parameters for the Fisher-optimal twin squeezed cat.
pub const TSC_OPTIMAL: (f64, f64) = (1.215, 0.9601);

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ProbeKind {
    Coherent { alpha: C64 },
    Noon { n: usize },
    TwinSqueezedVacuum { r: f64 },
    SqueezedEntangled { r: f64 },
    TwinSqueezedCat { r: f64, alpha: f64 },
}

impl ProbeKind {
    pub fn coherent() -> Self {
        ProbeKind::Coherent { alpha: c(2f64.sqrt()) }
    }

    pub fn noon() -> Self {
        ProbeKind::Noon { n: 2 }
    }

    pub fn tsv() -> Self {
        ProbeKind::TwinSqueezedVacuum { r: 1f64.asinh() }
    }

    pub fn ses() -> Self {
        ProbeKind::SqueezedEntangled { r: (2.0 + 3f64.sqrt()).ln() }
    }

    pub fn tsc_optimal() -> Self {
        ProbeKind::TwinSqueezedCat { r: TSC_OPTIMAL.0, alpha: TSC_OPTIMAL.1 }
    }

    pub fn tsc_intermediate() -> Self {
        ProbeKind::TwinSqueezedCat { r: TSC_INTERMEDIATE.0, alpha: TSC_INTERMEDIATE.1 }
    }

    /// Looks up a default probe by its short name.
    pub fn from_name(name: &str) -> MetroResult<Self> {
        match name.to_ascii_lowercase().as_str() {
            "coherent" => Ok(Self::coherent()),
            "noon" => Ok(Self::noon()),
            "tsv" => Ok(Self::tsv()),
            "ses" => Ok(Self::ses()),
            "tsc" | "tsc-opt" | "tsc_opt" => Ok(Self::tsc_optimal()),
            "tsc-int" | "tsc_int" => Ok(Self::tsc_intermediate()),
            _ => Err(MetroError::Unknown { kind: "probe", name: name.to_string() }),
        }
    }

    /// Default per-mode cutoff.
    pub fn default_cutoff(&self) -> usize {
        match self {
            ProbeKind::Coherent { .. } => 21,
            ProbeKind::Noon { n } => n + 1,
            ProbeKind::TwinSqueezedVacuum { .. } => 51,
            ProbeKind::SqueezedEntangled { .. } => 101,
            ProbeKind::TwinSqueezedCat { .. } => 51,
        }
    }

    pub fn default_dims(&self) -> FockDims {
        let d = self.default_cutoff();
        FockDims { d1: d, d2: d }
    }

    pub fn label(&self) -> String {
        match self {
            ProbeKind::Coherent { .. } => "coherent".into(),
            ProbeKind::Noon { .. } => "noon".into(),
            ProbeKind::TwinSqueezedVacuum { .. } => "tsv".into(),
            ProbeKind::SqueezedEntangled { .. } => "ses".into(),
            ProbeKind::TwinSqueezedCat { r, alpha } => {
                if (*r, *alpha) == TSC_INTERMEDIATE {
                    "tsc-int".into()
                } else if (*r, *alpha) == TSC_OPTIMAL {
                    "tsc-opt".into()
                } else {
                    "tsc".into()
                }
            }
        }
    }
}

/// A constructed probe with the truncation tail it left behind.
#[derive(Clone, Debug)]
pub struct Probe {
    pub kind: ProbeKind,
    pub state: TwoModeState,
    /// Probability mass of the untruncated probe outside the cutoff.
    pub tail_probability: f64,
}

pub fn make_probe(kind: ProbeKind, dims: FockDims) -> MetroResult<Probe> {
    make_probe_with_threshold(kind, dims, DEFAULT_TAIL_THRESHOLD)
}

pub fn make_probe_with_threshold(kind: ProbeKind, dims: FockDims, threshold: f64) -> MetroResult<Probe> {
    // amplitudes on a padded space, as a big1 x big2 matrix
    let (full, big) = padded_probe(kind, dims)?;
    let total: f64 = full.iter().map(|z| z.norm_sqr()).sum();
    let state = TwoModeState::from_fn(dims, |n, m| full[(n, m)]);
    let kept = state.norm().powi(2);
    let tail = (1.0 - kept / total).max(0.0);
    debug_assert!(big.0 >= dims.d1 && big.1 >= dims.d2);
    if tail > threshold {
        return Err(MetroError::CutoffTooSmall { probe: kind.label(), tail, threshold });
    }
    let state = state.normalized()?;
    Ok(Probe { kind, state, tail_probability: tail })
}

fn padded_probe(kind: ProbeKind, dims: FockDims) -> MetroResult<(CMatrix, (usize, usize))> {
    let b1 = 2 * dims.d1 + PAD_EXTRA;
    let b2 = 2 * dims.d2 + PAD_EXTRA;
    let vac = |d: usize| CVector::from_fn(d, |i, _| if i == 0 { c(1.0) } else { c(0.0) });
    let m = match kind {
        ProbeKind::Noon { n } => {
            if n == 0 {
                return Err(MetroError::InvalidParameter("NOON photon number must be >= 1".into()));
            }
            if n >= dims.d1 || n >= dims.d2 {
                return Err(MetroError::CutoffTooSmall { probe: kind.label(), tail: 0.5, threshold: DEFAULT_TAIL_THRESHOLD });
            }
            let h = c(std::f64::consts::FRAC_1_SQRT_2);
            let mut m = CMatrix::zeros(b1, b2);
            m[(n, 0)] = h;
            m[(0, n)] = h;
            m
        }
        ProbeKind::Coherent { alpha } => {
            let v = ModeOperator::displacement(b1, alpha).mat.column(0).into_owned();
            let big = FockDims { d1: b1, d2: b2 };
            let mut amps = CVector::from_fn(b1 * b2, |i, _| if i % b2 == 0 { v[i / b2] } else { c(0.0) });
            apply_beam_splitter(&beam_splitter_blocks(big, PI / 2.0), &mut amps);
            CMatrix::from_fn(b1, b2, |n, k| amps[big.index(n, k)])
        }
        ProbeKind::TwinSqueezedVacuum { r } => {
            let v1 = ModeOperator::squeeze(b1, c(r)).mat.column(0).into_owned();
            let v2 = ModeOperator::squeeze(b2, c(r)).mat.column(0).into_owned();
            &v1 * v2.transpose()
        }
        ProbeKind::SqueezedEntangled { r } => {
            let v1 = ModeOperator::squeeze(b1, c(r)).mat.column(0).into_owned();
            let v2 = ModeOperator::squeeze(b2, c(r)).mat.column(0).into_owned();
            &v1 * vac(b2).transpose() + vac(b1) * v2.transpose()
        }
        ProbeKind::TwinSqueezedCat { r, alpha } => {
            let cat = |d: usize| {
                let plus = ModeOperator::displacement(d, c(alpha)).mat.column(0).into_owned();
                let minus = ModeOperator::displacement(d, c(-alpha)).mat.column(0).into_owned();
                ModeOperator::squeeze(d, c(r)).mat * (plus + minus)
            };
            cat(b1) * cat(b2).transpose()
        }
    };
    Ok((m, (b1, b2)))
}

pub fn mean_photon_number(state: &TwoModeState) -> f64 {
    moment(state, |n, m| (n + m) as f64)
}

/// `Σ |c_nm|² f(n, m)`.
pub fn moment(state: &TwoModeState, f: impl Fn(usize, usize) -> f64) -> f64 {
    let dims = state.dims;
    state.amps.iter().enumerate().map(|(i, z)| {
        let (n, m) = dims.pair(i);
        z.norm_sqr() * f(n, m)
    }).sum()
}

/// `U(θ)|ψ>` with `U(θ) = exp(-i J_z θ)`.
pub fn encode_phase(state: &TwoModeState, theta: f64) -> TwoModeState {
    let dims = state.dims;
    let amps = CVector::from_fn(dims.dim(), |i, _| {
        let (n, m) = dims.pair(i);
        state.amps[i] * C64::from_polar(1.0, -(n as f64 - m as f64) * theta / 2.0)
    });
    TwoModeState { dims, amps }
}

const PATH_SYMMETRY_TOL: f64 = 1e-6;

/// Mandel Q from the mode-1 photon statistics, checked against mode 2.
pub fn mandel_q(state: &TwoModeState) -> MetroResult<f64> {
    let nbar = mean_photon_number(state);
    if nbar <= 0.0 {
        return Err(MetroError::ZeroPhotonNumber);
    }
    let q1 = (4.0 * moment(state, |n, _| (n * n) as f64) - nbar * nbar - 2.0 * nbar) / (2.0 * nbar);
    let q2 = (4.0 * moment(state, |_, m| (m * m) as f64) - nbar * nbar - 2.0 * nbar) / (2.0 * nbar);
    if (q1 - q2).abs() > PATH_SYMMETRY_TOL {
        return Err(MetroError::NotPathSymmetric(q1, q2));
    }
    Ok(q1)
}

/// Normalised inter-mode photon-number covariance.
pub fn j_parameter(state: &TwoModeState) -> MetroResult<f64> {
    let nbar = mean_photon_number(state);
    let n1 = moment(state, |n, _| n as f64);
    let n2 = moment(state, |_, m| m as f64);
    if (n1 - n2).abs() > PATH_SYMMETRY_TOL {
        return Err(MetroError::NotPathSymmetric(n1, n2));
    }
    let v1 = moment(state, |n, _| (n * n) as f64) - n1 * n1;
    let v2 = moment(state, |_, m| (m * m) as f64) - n2 * n2;
    if v1 <= 1e-14 {
        return Err(MetroError::ZeroVariance(1));
    }
    if v2 <= 1e-14 {
        return Err(MetroError::ZeroVariance(2));
    }
    let cross = moment(state, |n, m| (n * m) as f64);
    Ok((cross - nbar * nbar / 4.0) / (v1 * v2).sqrt())
}

/// Decomposition of a state into its photon-difference sectors `j = n - m`.
///
/// `U(θ)` acts on sector `j` as the phase `e^{-ijθ/2}`, so prior-averaged
/// moments of a pure probe live on the span of the normalised sector
/// components.
#[derive(Clone, Debug)]
pub struct SectorDecomposition {
    pub dims: FockDims,
    /// Photon differences `j` of the occupied sectors, ascending.
    pub labels: Vec<i64>,
    /// Norms `‖v_j‖` of the sector components.
    pub weights: Vec<f64>,
    /// Position of sector `j` in `labels`, offset by `d2 - 1`.
    slot: Vec<Option<usize>>,
}

impl SectorDecomposition {
    pub fn new(state: &TwoModeState) -> Self {
        let dims = state.dims;
        let span = dims.d1 + dims.d2 - 1;
        let offset = dims.d2 as i64 - 1;
        let mut norms = vec![0.0; span];
        for (i, z) in state.amps.iter().enumerate() {
            let (n, m) = dims.pair(i);
            norms[(n as i64 - m as i64 + offset) as usize] += z.norm_sqr();
        }
        let mut labels = Vec::new();
        let mut weights = Vec::new();
        let mut slot = vec![None; span];
        for (k, &w2) in norms.iter().enumerate() {
            if w2 > 1e-300 {
                slot[k] = Some(labels.len());
                labels.push(k as i64 - offset);
                weights.push(w2.sqrt());
            }
        }
        SectorDecomposition { dims, labels, weights, slot }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Position of the sector holding `|n, m>`, if occupied.
    pub fn sector_of(&self, n: usize, m: usize) -> Option<usize> {
        self.slot[(n as i64 - m as i64 + self.dims.d2 as i64 - 1) as usize]
    }

    /// Normalised sector component `v_j / ‖v_j‖` as a full-space state.
    pub fn component(&self, state: &TwoModeState, k: usize) -> TwoModeState {
        let j = self.labels[k];
        let w = self.weights[k];
        TwoModeState::from_fn(self.dims, |n, m| {
            if n as i64 - m as i64 == j {
                state.amp(n, m) / w
            } else {
                c(0.0)
            }
        })
    }

    /// Maps coefficients `u_k` on the sector basis to a full-space vector
    /// `Σ_k u_k v_k/‖v_k‖`.
    pub fn lift(&self, state: &TwoModeState, coeffs: &[C64]) -> CVector {
        let dims = self.dims;
        CVector::from_fn(dims.dim(), |i, _| {
            let (n, m) = dims.pair(i);
            match self.sector_of(n, m) {
                Some(k) => coeffs[k] * state.amps[i] / self.weights[k],
                None => c(0.0),
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn coherent_amplitude(alpha: C64, n: usize) -> C64 {
        // independent closed form e^{-|α|²/2} α^n / sqrt(n!)
        let mut z = C64::from_polar((-alpha.norm_sqr() / 2.0).exp(), 0.0);
        for k in 1..=n {
            z *= alpha / (k as f64).sqrt();
        }
        z
    }

    #[test]
    fn index_roundtrip() {
        let d = FockDims::new(3, 5).unwrap();
        for i in 0..d.dim() {
            let (n, m) = d.pair(i);
            assert_eq!(d.index(n, m), i);
        }
        assert!(FockDims::new(0, 2).is_err());
    }

    #[test]
    fn noon_default() {
        let p = make_probe(ProbeKind::noon(), FockDims::square(3).unwrap()).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(p.state.amp(2, 0).re, h, epsilon = 1e-15);
        assert_abs_diff_eq!(p.state.amp(0, 2).re, h, epsilon = 1e-15);
        assert_abs_diff_eq!(mean_photon_number(&p.state), 2.0, epsilon = 1e-12);
        assert!(p.tail_probability < 1e-15);
    }

    #[test]
    fn coherent_matches_split_coherent_product() {
        // exp(-iπ/2 J_x) D1(α)|0,0> = |α/√2> ⊗ |-iα/√2>
        let dims = FockDims::square(21).unwrap();
        let p = make_probe(ProbeKind::coherent(), dims).unwrap();
        let a = c(2f64.sqrt() / 2f64.sqrt());
        let b = C64::new(0.0, -1.0) * a;
        for n in 0..21 {
            for m in 0..21 {
                let want = coherent_amplitude(a, n) * coherent_amplitude(b, m);
                assert!((p.state.amp(n, m) - want).norm() < 1e-10, "({n},{m})");
            }
        }
        assert!(p.tail_probability < 1e-15);
        assert_abs_diff_eq!(mean_photon_number(&p.state), 2.0, epsilon = 1e-10);
    }

    #[test]
    fn tsv_zero_squeezing_is_vacuum() {
        let p = make_probe(ProbeKind::TwinSqueezedVacuum { r: 0.0 }, FockDims::square(5).unwrap()).unwrap();
        assert_abs_diff_eq!(p.state.amp(0, 0).norm(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(mean_photon_number(&p.state), 0.0, epsilon = 1e-12);
        assert!(matches!(mandel_q(&p.state), Err(MetroError::ZeroPhotonNumber)));
    }

    #[test]
    fn tsv_photon_number_is_two_sinh_squared() {
        let r = 1f64.asinh();
        let p = make_probe(ProbeKind::tsv(), FockDims::square(51).unwrap()).unwrap();
        assert_abs_diff_eq!(mean_photon_number(&p.state), 2.0 * r.sinh().powi(2), epsilon = 1e-5);
    }

    #[test]
    fn squeezed_vacuum_amplitudes() {
        // <2k|S(r)|0> = (-tanh r)^k sqrt((2k)!)/(2^k k!) / sqrt(cosh r)
        let r: f64 = 0.7;
        let s = ModeOperator::squeeze(30, c(r));
        let mut ratio = 1.0;
        for k in 0..10usize {
            if k > 0 {
                ratio *= ((2 * k - 1) as f64 / (2 * k) as f64).sqrt();
            }
            let want = (-r.tanh()).powi(k as i32) * ratio / r.cosh().sqrt();
            assert_abs_diff_eq!(s.mat[(2 * k, 0)].re, want, epsilon = 1e-10);
            assert_abs_diff_eq!(s.mat[(2 * k + 1, 0)].norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn cutoff_too_small_reported() {
        let err = make_probe(ProbeKind::tsv(), FockDims::square(4).unwrap()).unwrap_err();
        assert!(matches!(err, MetroError::CutoffTooSmall { .. }));
    }

    #[test]
    fn hermitian_operators() {
        let dims = FockDims::new(4, 5).unwrap();
        for op in [ModeOperator::n1(dims), ModeOperator::n2(dims), ModeOperator::jx(dims), ModeOperator::jz(dims)] {
            assert!(op.hermiticity_defect() < 1e-12);
        }
        for op in [ModeOperator::quadrature(7, 0.3), ModeOperator::parity(7), ModeOperator::number(7)] {
            assert!(op.hermiticity_defect() < 1e-12);
        }
    }

    #[test]
    fn unitaries_on_low_block() {
        let dims = FockDims::square(12).unwrap();
        assert!(ModeOperator::beam_splitter(dims, 0.9).unitarity_defect(12) < 1e-12);
        assert!(ModeOperator::phase_encoding(dims, 0.4).unitarity_defect(12) < 1e-14);
        assert!(ModeOperator::displacement(30, C64::new(0.5, 0.2)).unitarity_defect(8) < 1e-10);
        assert!(ModeOperator::squeeze(60, c(0.5)).unitarity_defect(8) < 1e-10);
    }

    #[test]
    fn beam_splitter_matches_dense_exponential() {
        let dims = FockDims::new(4, 3).unwrap();
        let dense = unitary_from_generator(&ModeOperator::jx(dims).mat, 0.8);
        let blocks = ModeOperator::beam_splitter(dims, 0.8).mat;
        assert!(crate::linalg::max_abs(&(dense - blocks)) < 1e-12);
    }

    #[test]
    fn noon_encoding() {
        let p = make_probe(ProbeKind::noon(), FockDims::square(3).unwrap()).unwrap();
        let th = 0.37;
        let e = encode_phase(&p.state, th);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((e.amp(2, 0) - C64::from_polar(h, -th)).norm() < 1e-15);
        assert!((e.amp(0, 2) - C64::from_polar(h, th)).norm() < 1e-15);
        let full = unitary_from_generator(&ModeOperator::jz(p.state.dims()).mat, 2.0 * PI);
        let rot = ModeOperator { space: OpSpace::Two(p.state.dims()), mat: full }.apply(&p.state).unwrap();
        assert_abs_diff_eq!(p.state.inner(&rot).unwrap().norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn correlations_of_simple_probes() {
        let noon = make_probe(ProbeKind::noon(), FockDims::square(3).unwrap()).unwrap();
        assert_abs_diff_eq!(mandel_q(&noon.state).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(j_parameter(&noon.state).unwrap(), -1.0, epsilon = 1e-12);
        let coh = make_probe(ProbeKind::coherent(), FockDims::square(21).unwrap()).unwrap();
        assert_abs_diff_eq!(mandel_q(&coh.state).unwrap(), 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!(j_parameter(&coh.state).unwrap(), 0.0, epsilon = 1e-8);
        let fock = TwoModeState::fock(FockDims::square(3).unwrap(), 1, 1).unwrap();
        assert!(matches!(j_parameter(&fock), Err(MetroError::ZeroVariance(1))));
        let lopsided = TwoModeState::fock(FockDims::square(3).unwrap(), 2, 0).unwrap();
        assert!(matches!(mandel_q(&lopsided), Err(MetroError::NotPathSymmetric(..))));
    }

    #[test]
    fn sector_lift_rebuilds_state() {
        let p = make_probe_with_threshold(ProbeKind::coherent(), FockDims::square(8).unwrap(), 1.0).unwrap();
        let sec = SectorDecomposition::new(&p.state);
        let ones: Vec<C64> = sec.weights.iter().map(|&w| c(w)).collect();
        let back = sec.lift(&p.state, &ones);
        assert!((back - p.state.amps()).norm() < 1e-14);
        let total: f64 = sec.weights.iter().map(|w| w * w).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn encoding_composes_and_preserves_norm(t1 in -7.0f64..7.0, t2 in -7.0f64..7.0, seed in 0u64..1000) {
            let dims = FockDims::new(4, 3).unwrap();
            let s = TwoModeState::from_fn(dims, |n, m| {
                let x = (seed as f64 + 1.0) * (n as f64 * 1.3 + m as f64 * 0.7 + 0.1);
                C64::new(x.sin(), x.cos())
            }).normalized().unwrap();
            let a = encode_phase(&encode_phase(&s, t1), t2);
            let b = encode_phase(&s, t1 + t2);
            prop_assert!((a.amps() - b.amps()).camax() < 1e-12);
            prop_assert!((encode_phase(&s, t1).norm() - s.norm()).abs() < 1e-14);
        }

    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn correlation_ranges(r in 0.1f64..1.0, alpha in 0.2f64..1.2) {
            let dims = FockDims::square(24).unwrap();
            for kind in [ProbeKind::TwinSqueezedCat { r, alpha }, ProbeKind::SqueezedEntangled { r: r * 0.8 }] {
                let p = make_probe_with_threshold(kind, dims, 1e-2).unwrap();
                prop_assert!((p.state.norm() - 1.0).abs() < 1e-10);
                let q = mandel_q(&p.state).unwrap();
                let j = j_parameter(&p.state).unwrap();
                prop_assert!(q >= -1.0);
                prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&j));
            }
        }
    }
}
