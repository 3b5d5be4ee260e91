//! Small dense complex linear-algebra helpers on top of nalgebra.

use nalgebra as na;
use num_complex::Complex64 as C64;

pub type CMatrix = na::DMatrix<C64>;
pub type CVector = na::DVector<C64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

#[inline]
pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues in ascending
/// order and matching eigenvector columns.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

/// Tries the real symmetric embedding first and falls back to complex Jacobi
/// rotations when the result does not reconstruct `m`.
pub fn hermitian_eigen(m: &CMatrix) -> HermitianEigen {
    let n = m.nrows();
    if n == 0 {
        return HermitianEigen { values: vec![], vectors: CMatrix::zeros(0, 0) };
    }
    let h = (m + m.adjoint()) * c(0.5);
    let fast = embedded_eigen(&h);
    if eigen_defect(&h, &fast) <= 1e-12 * max_abs(&h).max(1e-300) {
        return fast;
    }
    jacobi_eigen(&h)
}

fn eigen_defect(h: &CMatrix, e: &HermitianEigen) -> f64 {
    let n = h.nrows();
    if e.values.len() != n || e.values.iter().any(|v| !v.is_finite()) || e.vectors.iter().any(|z| !z.is_finite()) {
        return f64::INFINITY;
    }
    let scaled = CMatrix::from_fn(n, n, |i, j| e.vectors[(i, j)] * e.values[j]);
    let rec = max_abs(&(scaled * e.vectors.adjoint() - h));
    let orth = max_abs(&(e.vectors.adjoint() * &e.vectors - CMatrix::identity(n, n)));
    rec.max(orth * max_abs(h))
}

/// Cyclic Jacobi for a complex Hermitian matrix.
pub fn jacobi_eigen(m: &CMatrix) -> HermitianEigen {
    let n = m.nrows();
    let mut a = (m + m.adjoint()) * c(0.5);
    let mut v = CMatrix::identity(n, n);
    let total = a.norm().max(1e-300);
    for _sweep in 0..60 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[(i, j)].norm_sqr()).sum();
        if off.sqrt() <= 1e-16 * total {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                let r = apq.norm();
                if r <= 1e-300 {
                    continue;
                }
                let ph = apq / r;
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let theta = (aqq - app) / (2.0 * r);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;
                // J = diag(1, e^{-iφ}) followed by the real rotation [[c, s], [-s, c]]
                let e = ph.conj();
                for k in 0..n {
                    let (xp, xq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = xp * cs - xq * e * sn;
                    a[(k, q)] = xp * sn + xq * e * cs;
                }
                for k in 0..n {
                    let (xp, xq) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = xp * cs - xq * e.conj() * sn;
                    a[(q, k)] = xp * sn + xq * e.conj() * cs;
                }
                for k in 0..n {
                    let (xp, xq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = xp * cs - xq * e * sn;
                    v[(k, q)] = xp * sn + xq * e * cs;
                }
                a[(p, q)] = c(0.0);
                a[(q, p)] = c(0.0);
            }
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&x, &y| a[(x, x)].re.total_cmp(&a[(y, y)].re));
    HermitianEigen {
        values: idx.iter().map(|&k| a[(k, k)].re).collect(),
        vectors: CMatrix::from_fn(n, n, |i, j| v[(i, idx[j])]),
    }
}

/// Real symmetric embedding `[[Re, -Im], [Im, Re]]`, whose spectrum is the
/// Hermitian one doubled. nalgebra's complex solver loses accuracy on the
/// nearly rank-deficient averaged states met here, the real one does not.
fn embedded_eigen(h: &CMatrix) -> HermitianEigen {
    let n = h.nrows();
    let mut h = h.clone();
    // entries far below the matrix scale underflow when squared inside the
    // Householder steps and turn into NaN; they carry no information anyway
    let floor = 1e-150 * max_abs(&h);
    h.iter_mut().for_each(|z| {
        if z.norm() < floor {
            *z = c(0.0);
        }
    });
    let emb = na::DMatrix::<f64>::from_fn(2 * n, 2 * n, |i, j| {
        let z = h[(i % n, j % n)];
        match (i < n, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    let eig = emb.symmetric_eigen();
    let mut order: Vec<usize> = (0..2 * n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let scale = eig.eigenvalues.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let tol = 1e-9 * scale;

    // (u; w) maps to u + i w; each complex eigenvector shows up twice (as z
    // and i z), so pick an orthonormal set per cluster by pivoted Gram-Schmidt
    let mut values = Vec::with_capacity(n);
    let mut vectors = CMatrix::zeros(n, n);
    let mut start = 0;
    while start < 2 * n {
        let mut end = start + 1;
        while end < 2 * n && eig.eigenvalues[order[end]] - eig.eigenvalues[order[end - 1]] <= tol {
            end += 1;
        }
        let mut cands: Vec<CVector> = order[start..end]
            .iter()
            .map(|&k| CVector::from_fn(n, |i, _| C64::new(eig.eigenvectors[(i, k)], eig.eigenvectors[(i + n, k)])))
            .collect();
        let want = ((end - start) + 1) / 2;
        for _ in 0..want {
            if values.len() == n {
                break;
            }
            let (best, _) = cands
                .iter()
                .enumerate()
                .map(|(i, v)| (i, v.norm_squared()))
                .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            let z = cands.swap_remove(best);
            let z = &z / c(z.norm());
            for v in cands.iter_mut() {
                let proj = z.dotc(v);
                *v -= &z * proj;
            }
            values.push(z.dotc(&(&h * &z)).re);
            let col = values.len() - 1;
            vectors.set_column(col, &z);
        }
        start = end;
    }
    if values.len() < n {
        // a pair was split by the tolerance; the caller falls back to Jacobi
        return HermitianEigen { values: vec![f64::NAN; n], vectors: CMatrix::zeros(n, n) };
    }
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let vectors = CMatrix::from_fn(n, idx.len(), |i, j| vectors[(i, idx[j])]);
    let values = idx.iter().map(|&k| values[k]).collect();
    HermitianEigen { values, vectors }
}

/// Largest entrywise modulus of `m - m†`.
pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn trace(m: &CMatrix) -> C64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)]).sum()
}

/// `Tr(a b)` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// `exp(-i t g)` for a Hermitian generator `g`, via its eigendecomposition so
/// the result is unitary to working precision.
pub fn unitary_from_generator(g: &CMatrix, t: f64) -> CMatrix {
    let eig = hermitian_eigen(g);
    let phases = CVector::from_iterator(
        eig.values.len(),
        eig.values.iter().map(|&v| C64::from_polar(1.0, -t * v)),
    );
    let scaled = CMatrix::from_fn(g.nrows(), g.ncols(), |i, j| eig.vectors[(i, j)] * phases[j]);
    scaled * eig.vectors.adjoint()
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn outer(v: &CVector) -> CMatrix {
    v * v.adjoint()
}
