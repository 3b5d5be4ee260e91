//! Posterior machinery on a θ-grid and the repeated-measurement MSE
//! `ε̄(μ) = ∫ds p(s) ε(s)`, with `ε(s)` the posterior variance.
//!
//! Small cases are enumerated exactly over outcome counts; everything else
//! is Monte Carlo with one independent counter-based stream per sample.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{MetroError, MetroResult};
use crate::fock::TwoModeState;
use crate::povm::{PhaseLikelihood, Povm};
use crate::prior::FlatPrior;

/// Anything that yields `p(o|θ)` for a fixed outcome alphabet.
pub trait LikelihoodModel: Sync {
    fn outcome_count(&self) -> usize;
    fn probabilities(&self, theta: f64, out: &mut [f64]);
    /// Per-shot Fisher information scale, used to size the θ-grid.
    fn fisher_hint(&self) -> Option<f64> {
        None
    }
}

impl LikelihoodModel for PhaseLikelihood {
    fn outcome_count(&self) -> usize {
        PhaseLikelihood::outcome_count(self)
    }

    fn probabilities(&self, theta: f64, out: &mut [f64]) {
        PhaseLikelihood::probabilities(self, theta, out)
    }

    fn fisher_hint(&self) -> Option<f64> {
        Some(self.quantum_fisher())
    }
}

/// Composite Simpson grid over the prior support.
#[derive(Clone, Debug)]
pub struct ThetaGrid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl ThetaGrid {
    /// `n` is rounded up to the next odd number (at least 3).
    pub fn simpson(prior: &FlatPrior, n: usize) -> Self {
        let n = if n < 3 { 3 } else if n % 2 == 0 { n + 1 } else { n };
        let h = prior.width() / (n - 1) as f64;
        let points = (0..n)
            .map(|i| if i == n - 1 { prior.upper() } else { prior.lower() + i as f64 * h })
            .collect();
        let weights = (0..n)
            .map(|i| {
                let w = if i == 0 || i == n - 1 { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                w * h / 3.0
            })
            .collect();
        ThetaGrid { points, weights }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// `log p(o|θ_g)` for the outcomes that occur somewhere on the grid, stored
/// outcome-major so a posterior update is one contiguous row.
#[derive(Clone, Debug)]
pub struct LikelihoodTable {
    grid: ThetaGrid,
    /// Original outcome index of every kept row.
    kept: Vec<usize>,
    /// Row of each original outcome, if kept.
    row_of: Vec<Option<usize>>,
    log_probs: Vec<f64>,
}

impl LikelihoodTable {
    pub fn build(model: &dyn LikelihoodModel, grid: ThetaGrid) -> Self {
        let k = model.outcome_count();
        let g = grid.len();
        let rows: Vec<Vec<f64>> = grid
            .points
            .par_iter()
            .map(|&t| {
                let mut p = vec![0.0; k];
                model.probabilities(t, &mut p);
                p
            })
            .collect();
        let kept: Vec<usize> = (0..k).filter(|&o| rows.iter().any(|r| r[o] > 0.0)).collect();
        let mut row_of = vec![None; k];
        let mut log_probs = vec![0.0; kept.len() * g];
        for (r, &o) in kept.iter().enumerate() {
            row_of[o] = Some(r);
            for (gi, row) in rows.iter().enumerate() {
                log_probs[r * g + gi] = row[o].ln();
            }
        }
        LikelihoodTable { grid, kept, row_of, log_probs }
    }

    pub fn grid(&self) -> &ThetaGrid {
        &self.grid
    }

    pub fn kept_outcomes(&self) -> &[usize] {
        &self.kept
    }

    fn row(&self, r: usize) -> &[f64] {
        let g = self.grid.len();
        &self.log_probs[r * g..(r + 1) * g]
    }
}

/// Posterior density on the grid (integrates to one with the grid weights).
pub fn posterior(prior: &FlatPrior, table: &LikelihoodTable, outcomes: &[usize]) -> MetroResult<Vec<f64>> {
    let grid = &table.grid;
    let mut lp = vec![0.0; grid.len()];
    for &o in outcomes {
        let r = table.row_of.get(o).copied().flatten().ok_or(MetroError::ZeroEvidence)?;
        for (x, l) in lp.iter_mut().zip(table.row(r)) {
            *x += l;
        }
    }
    let max = lp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(MetroError::ZeroEvidence);
    }
    let unnorm: Vec<f64> = lp.iter().map(|l| (l - max).exp() / prior.width()).collect();
    let z: f64 = unnorm.iter().zip(&grid.weights).map(|(p, w)| p * w).sum();
    if z * max.exp() < 1e-300 && max < -690.0 {
        log::debug!("posterior evidence below 1e-300; normalising in log space");
    }
    Ok(unnorm.iter().map(|p| p / z).collect())
}

/// Posterior mean, variance and fourth central moment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PosteriorSummary {
    pub mean: f64,
    pub variance: f64,
    pub fourth_central: f64,
}

pub fn posterior_summary(grid: &ThetaGrid, density: &[f64]) -> PosteriorSummary {
    summarise(&grid.points, &grid.weights, density, 0, grid.len())
}

pub fn posterior_variance(grid: &ThetaGrid, density: &[f64]) -> f64 {
    posterior_summary(grid, density).variance
}

fn summarise(points: &[f64], weights: &[f64], dens: &[f64], lo: usize, hi: usize) -> PosteriorSummary {
    let mut z = 0.0;
    let mut m1 = 0.0;
    for g in lo..hi {
        let w = weights[g] * dens[g - lo];
        z += w;
        m1 += w * points[g];
    }
    let mean = m1 / z;
    let (mut v, mut f) = (0.0, 0.0);
    for g in lo..hi {
        let w = weights[g] * dens[g - lo];
        let d = points[g] - mean;
        let d2 = d * d;
        v += w * d2;
        f += w * d2 * d2;
    }
    PosteriorSummary { mean, variance: (v / z).max(0.0), fourth_central: (f / z).max(0.0) }
}

/// Which `μ` values a curve reports.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Checkpoints {
    /// Every `μ` from 1 to `μ_max`.
    All,
    /// Every `μ` up to `dense_until`, then geometrically spaced by `ratio`.
    Geometric { dense_until: usize, ratio: f64 },
}

impl Checkpoints {
    pub fn values(&self, mu_max: usize) -> Vec<usize> {
        match *self {
            Checkpoints::All => (1..=mu_max).collect(),
            Checkpoints::Geometric { dense_until, ratio } => {
                let mut out: Vec<usize> = (1..=mu_max.min(dense_until)).collect();
                let mut x = dense_until.max(1) as f64;
                loop {
                    x *= ratio.max(1.0 + 1e-9);
                    let m = x.round() as usize;
                    if m > mu_max {
                        break;
                    }
                    if out.last().map_or(true, |&l| m > l) {
                        out.push(m);
                    }
                }
                if mu_max > 0 && out.last() != Some(&mu_max) {
                    out.push(mu_max);
                }
                out
            }
        }
    }
}

/// Sampling configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Budget {
    /// Monte Carlo samples `(θ', outcome sequence)`.
    pub samples: usize,
    pub seed: u64,
    /// Exact enumeration is used while the number of outcome-count
    /// compositions stays below this.
    pub exact_limit: usize,
    /// Exact enumeration is never used beyond this `μ`.
    pub exact_max_mu: usize,
    /// Minimum θ-grid size.
    pub grid_points: usize,
    /// Relative change of the `μ = 1` MSE that stops grid doubling.
    pub grid_tolerance: f64,
    pub max_grid_points: usize,
    pub checkpoints: Checkpoints,
    pub taylor: bool,
    /// Skip enumeration entirely.
    pub force_monte_carlo: bool,
    /// Grid points whose log posterior falls this far below the maximum are
    /// dropped for the rest of a sample.
    pub prune_log: f64,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            samples: 50_000,
            seed: 0x5eed,
            exact_limit: 100_000,
            exact_max_mu: 10,
            grid_points: 1001,
            grid_tolerance: 1e-4,
            max_grid_points: 16_001,
            checkpoints: Checkpoints::Geometric { dense_until: 100, ratio: 1.01 },
            taylor: true,
            force_monte_carlo: false,
            prune_log: 50.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MseCurve {
    pub mu: Vec<usize>,
    pub mse: Vec<f64>,
    /// Monte Carlo standard error, zero for enumerated points.
    pub stderr: Vec<f64>,
    /// Taylor error band `Δε̄(μ)`.
    pub taylor_band: Option<Vec<f64>>,
    /// Average posterior second moment `E_s[<θ²>]`.
    pub posterior_second_moment: Vec<f64>,
    pub exact: Vec<bool>,
    pub seed: u64,
    pub samples: usize,
    pub grid_points: usize,
}

impl MseCurve {
    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn at(&self, mu: usize) -> Option<(f64, f64)> {
        self.mu.iter().position(|&m| m == mu).map(|i| (self.mse[i], self.stderr[i]))
    }

    /// Least-squares slope of `log mse` against `log μ` over `[lo, hi]`.
    pub fn log_slope(&self, lo: usize, hi: usize) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .mu
            .iter()
            .zip(&self.mse)
            .filter(|(&m, _)| m >= lo && m <= hi)
            .map(|(&m, &e)| ((m as f64).ln(), e.ln()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some(sxy / sxx)
    }
}

/// Binomial-style count of multisets of size `mu` from `k` outcomes, saturating.
fn compositions(mu: usize, k: usize) -> usize {
    if k == 0 {
        return 0;
    }
    let mut acc: u128 = 1;
    for i in 1..=mu as u128 {
        acc = acc * (k as u128 - 1 + i) / i;
        if acc > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    acc as usize
}

#[derive(Clone, Copy, Default)]
struct Acc {
    mse: f64,
    mse_sq: f64,
    taylor: f64,
    second: f64,
}

/// Per-sequence statistics from a (windowed) log posterior.
#[inline]
fn sequence_stats(points: &[f64], weights: &[f64], lp: &[f64], lo: usize, hi: usize, buf: &mut Vec<f64>) -> (f64, PosteriorSummary) {
    let max = lp[lo..hi].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    buf.clear();
    buf.extend(lp[lo..hi].iter().map(|l| (l - max).exp()));
    let s = summarise(points, weights, buf, lo, hi);
    let z: f64 = (lo..hi).map(|g| weights[g] * buf[g - lo]).sum();
    (max + z.ln(), s)
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    for i in 1..=n {
        out[i] = out[i - 1] + (i as f64).ln();
    }
    out
}

/// Exact `ε̄(μ)` for `μ = 1..=depth`, enumerating outcome multisets.
fn enumerate_exact(table: &LikelihoodTable, prior: &FlatPrior, depth: usize) -> Vec<Acc> {
    let grid = &table.grid;
    let g = grid.len();
    let k = table.kept.len();
    let lnf = ln_factorials(depth);
    let mut out = vec![Acc::default(); depth];
    let mut stack: Vec<Vec<f64>> = vec![vec![0.0; g]; depth + 1];
    let mut buf = Vec::with_capacity(g);
    let ln_w0 = prior.width().ln();

    // depth-first walk over non-decreasing outcome sequences
    struct Frame {
        next: usize,
        log_mult: f64,
        run: usize,
        last: usize,
    }
    let mut frames = vec![Frame { next: 0, log_mult: 0.0, run: 0, last: usize::MAX }];
    while !frames.is_empty() {
        let d = frames.len() - 1;
        let top = &mut frames[d];
        if d == depth || top.next >= k {
            frames.pop();
            continue;
        }
        let o = top.next;
        top.next += 1;
        let run = if o == top.last { top.run + 1 } else { 1 };
        let log_mult = top.log_mult + lnf[d + 1] - lnf[d] - (run as f64).ln();
        let (lower, upper) = stack.split_at_mut(d + 1);
        let parent = &lower[d];
        let child = &mut upper[0];
        let row = table.row(o);
        for i in 0..g {
            child[i] = parent[i] + row[i];
        }
        let (log_z, s) = sequence_stats(&grid.points, &grid.weights, child, 0, g, &mut buf);
        if !log_z.is_finite() {
            continue;
        }
        // p(counts) = multinomial * ∫ p(θ) Π p(o|θ)
        let p = (log_mult + log_z - ln_w0).exp();
        let a = &mut out[d];
        a.mse += p * s.variance;
        a.taylor += p * s.fourth_central / 12.0;
        a.second += p * (s.variance + s.mean * s.mean);
        frames.push(Frame { next: o, log_mult, run, last: o });
    }
    out
}

/// Monte Carlo accumulators for the requested checkpoints.
fn monte_carlo(model: &dyn LikelihoodModel, table: &LikelihoodTable, prior: &FlatPrior, checkpoints: &[usize], budget: &Budget) -> Vec<Acc> {
    const CHUNK: usize = 128;
    let grid = &table.grid;
    let g = grid.len();
    let mu_max = *checkpoints.last().unwrap_or(&0);
    let k_all = model.outcome_count();
    let chunks = budget.samples.div_ceil(CHUNK);
    let partials: Vec<Vec<Acc>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![Acc::default(); checkpoints.len()];
            let mut probs = vec![0.0; k_all];
            let mut cdf = vec![0.0; table.kept.len()];
            let mut lp = vec![0.0; g];
            let mut buf = Vec::with_capacity(g);
            for i in c * CHUNK..((c + 1) * CHUNK).min(budget.samples) {
                let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
                rng.set_stream(i as u64);
                let theta: f64 = prior.lower() + prior.width() * rng.gen::<f64>();
                model.probabilities(theta, &mut probs);
                let mut run = 0.0;
                for (r, &o) in table.kept.iter().enumerate() {
                    run += probs[o];
                    cdf[r] = run;
                }
                lp.iter_mut().for_each(|x| *x = 0.0);
                let (mut lo, mut hi) = (0usize, g);
                let mut next_cp = 0;
                for t in 1..=mu_max {
                    let u = rng.gen::<f64>() * run;
                    let r = cdf.partition_point(|&x| x <= u).min(cdf.len() - 1);
                    let row = table.row(r);
                    for j in lo..hi {
                        lp[j] += row[j];
                    }
                    if t == checkpoints[next_cp] {
                        let (_, s) = sequence_stats(&grid.points, &grid.weights, &lp, lo, hi, &mut buf);
                        let a = &mut acc[next_cp];
                        a.mse += s.variance;
                        a.mse_sq += s.variance * s.variance;
                        a.taylor += s.fourth_central / 12.0;
                        a.second += s.variance + s.mean * s.mean;
                        next_cp += 1;
                        if next_cp == checkpoints.len() {
                            break;
                        }
                        // drop grid points the posterior has abandoned
                        let max = lp[lo..hi].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let cut = max - budget.prune_log;
                        while lo + 1 < hi && !(lp[lo] >= cut) {
                            lo += 1;
                        }
                        while hi > lo + 1 && !(lp[hi - 1] >= cut) {
                            hi -= 1;
                        }
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = vec![Acc::default(); checkpoints.len()];
    for part in partials {
        for (t, p) in total.iter_mut().zip(part) {
            t.mse += p.mse;
            t.mse_sq += p.mse_sq;
            t.taylor += p.taylor;
            t.second += p.second;
        }
    }
    total
}

/// Grid size: at least the budget minimum and fine enough to resolve a
/// posterior of width `1/sqrt(μ F)`.
fn initial_grid_points(model: &dyn LikelihoodModel, prior: &FlatPrior, mu_max: usize, budget: &Budget) -> usize {
    let mut n = budget.grid_points;
    if let Some(f) = model.fisher_hint() {
        if f > 0.0 {
            let need = 8.0 * prior.width() * (mu_max as f64 * f).sqrt() + 1.0;
            n = n.max(need.ceil() as usize);
        }
    }
    n.min(budget.max_grid_points)
}

/// Builds the likelihood table, doubling the grid until the single-shot MSE
/// is stable to `budget.grid_tolerance`.
pub fn converged_table(model: &dyn LikelihoodModel, prior: &FlatPrior, mu_max: usize, budget: &Budget) -> LikelihoodTable {
    let mut n = initial_grid_points(model, prior, mu_max, budget);
    let mut table = LikelihoodTable::build(model, ThetaGrid::simpson(prior, n));
    let mut prev = enumerate_exact(&table, prior, 1)[0].mse;
    while 2 * n - 1 <= budget.max_grid_points {
        n = 2 * n - 1;
        let finer = LikelihoodTable::build(model, ThetaGrid::simpson(prior, n));
        let cur = enumerate_exact(&finer, prior, 1)[0].mse;
        table = finer;
        if (cur - prev).abs() <= budget.grid_tolerance * cur.abs().max(1e-300) {
            break;
        }
        prev = cur;
    }
    table
}

/// `ε̄(μ)` for a generic likelihood model.
pub fn mse_repeated_model(model: &dyn LikelihoodModel, prior: &FlatPrior, mu_max: usize, budget: &Budget) -> MetroResult<MseCurve> {
    let checkpoints = budget.checkpoints.values(mu_max);
    let mut curve = MseCurve {
        mu: vec![],
        mse: vec![],
        stderr: vec![],
        taylor_band: budget.taylor.then(Vec::new),
        posterior_second_moment: vec![],
        exact: vec![],
        seed: budget.seed,
        samples: budget.samples,
        grid_points: 0,
    };
    if checkpoints.is_empty() {
        return Ok(curve);
    }
    let table = converged_table(model, prior, mu_max, budget);
    curve.grid_points = table.grid.len();
    let k = table.kept.len();
    if k == 0 {
        return Err(MetroError::ZeroEvidence);
    }

    let mut depth = 0;
    if !budget.force_monte_carlo {
        while depth < budget.exact_max_mu.min(mu_max) && compositions(depth + 1, k) <= budget.exact_limit {
            depth += 1;
        }
    }
    let exact = if depth > 0 { enumerate_exact(&table, prior, depth) } else { vec![] };
    let mc_points: Vec<usize> = checkpoints.iter().copied().filter(|&m| m > depth).collect();
    if !mc_points.is_empty() && budget.samples == 0 {
        return Err(MetroError::InvalidParameter("Monte Carlo needs at least one sample".into()));
    }
    let mc = if mc_points.is_empty() { vec![] } else { monte_carlo(model, &table, prior, &mc_points, budget) };
    let n = budget.samples as f64;
    for &m in &checkpoints {
        let (mse, se, taylor, second, is_exact) = if m <= depth {
            let a = exact[m - 1];
            (a.mse, 0.0, a.taylor, a.second, true)
        } else {
            let a = mc[mc_points.iter().position(|&x| x == m).unwrap()];
            let mean = a.mse / n;
            let var = (a.mse_sq / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
            (mean, (var / n).sqrt(), a.taylor / n, a.second / n, false)
        };
        if !is_exact && se > 5e-4 * mse {
            log::warn!("budget exhausted at mu = {m}: relative stderr {:.2e} above third-digit precision", se / mse);
        }
        curve.mu.push(m);
        curve.mse.push(mse);
        curve.stderr.push(se);
        curve.posterior_second_moment.push(second);
        curve.exact.push(is_exact);
        if let Some(b) = curve.taylor_band.as_mut() {
            b.push(taylor);
        }
    }
    Ok(curve)
}

/// `ε̄(μ)` for a pure probe measured with `povm` after `U(θ)`.
pub fn mse_repeated(probe: &TwoModeState, povm: &Povm, prior: &FlatPrior, mu_max: usize, budget: &Budget) -> MetroResult<MseCurve> {
    let model = PhaseLikelihood::new(povm, probe)?;
    mse_repeated_model(&model, prior, mu_max, budget)
}

/// Taylor error band `Δε̄(μ)` computed alongside the MSE.
pub fn taylor_error_band(probe: &TwoModeState, povm: &Povm, prior: &FlatPrior, mu_max: usize, budget: &Budget) -> MetroResult<Vec<f64>> {
    let b = Budget { taylor: true, ..budget.clone() };
    Ok(mse_repeated(probe, povm, prior, mu_max, &b)?.taylor_band.unwrap_or_default())
}

/// `|ε̄ - 1/(μF)| / ε̄` at every point of the curve, with its standard error.
pub fn relative_error(curve: &MseCurve, fq: f64) -> Vec<(f64, f64)> {
    curve
        .mu
        .iter()
        .zip(curve.mse.iter().zip(&curve.stderr))
        .map(|(&m, (&e, &se))| {
            let crb = 1.0 / (m as f64 * fq);
            ((e - crb).abs() / e, se * crb / (e * e))
        })
        .collect()
}

/// Number of repetitions after which the curve stays within `target`
/// relative error of the Cramér-Rao asymptote.
///
/// The last point that exceeds the target by more than its standard error
/// is located, and the crossing with the next point is interpolated in
/// `log μ` and rounded to the nearest integer.
pub fn mu_tau(curve: &MseCurve, fq: f64, target: f64) -> MetroResult<usize> {
    if curve.is_empty() {
        return Err(MetroError::NotReached);
    }
    let rel = relative_error(curve, fq);
    let last_bad = rel.iter().rposition(|&(r, se)| r - target > se);
    let i = match last_bad {
        None => return Ok(curve.mu[0]),
        Some(i) if i + 1 == curve.len() => return Err(MetroError::NotReached),
        Some(i) => i,
    };
    let (r0, r1) = (rel[i].0, rel[i + 1].0);
    if r1 > target {
        return Ok(curve.mu[i + 1]);
    }
    let (x0, x1) = ((curve.mu[i] as f64).ln(), (curve.mu[i + 1] as f64).ln());
    let x = x0 + (r0 - target) / (r0 - r1) * (x1 - x0);
    Ok(x.exp().round() as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{make_probe, FockDims, ProbeKind};
    use crate::povm::{build_scheme, SchemeKind};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    /// Closed-form NOON likelihood under even counting: outcomes
    /// (2,0), (0,2), (1,1) with u = θ - π/4.
    struct NoonCounting;

    impl LikelihoodModel for NoonCounting {
        fn outcome_count(&self) -> usize {
            3
        }
        fn probabilities(&self, theta: f64, out: &mut [f64]) {
            let u = theta - PI / 4.0;
            out[0] = 0.5 * u.sin().powi(2);
            out[1] = out[0];
            out[2] = u.cos().powi(2);
        }
    }

    /// Plain 1-D Simpson integral of `f` over `[a, b]`.
    fn integrate(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let n = 20001;
        let h = (b - a) / (n - 1) as f64;
        (0..n)
            .map(|i| {
                let w = if i == 0 || i == n - 1 { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                w * f(a + i as f64 * h)
            })
            .sum::<f64>()
            * h
            / 3.0
    }

    fn prior() -> FlatPrior {
        FlatPrior::new(0.0, PI / 2.0).unwrap()
    }

    #[test]
    fn grid_weights_sum_to_width() {
        let g = ThetaGrid::simpson(&prior(), 1000);
        assert_eq!(g.len(), 1001);
        assert_abs_diff_eq!(g.weights().iter().sum::<f64>(), PI / 2.0, epsilon = 1e-12);
        assert_eq!(g.points()[0], -PI / 4.0);
        assert_eq!(g.points()[1000], PI / 4.0);
    }

    #[test]
    fn empty_update_is_prior() {
        let table = LikelihoodTable::build(&NoonCounting, ThetaGrid::simpson(&prior(), 101));
        let d = posterior(&prior(), &table, &[]).unwrap();
        assert!(d.iter().all(|&p| (p - 2.0 / PI).abs() < 1e-12));
        assert_abs_diff_eq!(posterior_variance(table.grid(), &d), PI * PI / 48.0, epsilon = 1e-12);
    }

    #[test]
    fn noon_posteriors() {
        let table = LikelihoodTable::build(&NoonCounting, ThetaGrid::simpson(&prior(), 2001));
        let d = posterior(&prior(), &table, &[2]).unwrap();
        for (t, p) in table.grid().points().iter().zip(&d) {
            assert_abs_diff_eq!(*p, 4.0 / PI * (t - PI / 4.0).cos().powi(2), epsilon = 1e-9);
        }
        let s = posterior_summary(table.grid(), &d);
        assert_abs_diff_eq!(s.mean, 1.0 / PI, epsilon = 1e-10);
        assert_abs_diff_eq!(s.variance, PI * PI / 48.0 - 1.0 / (PI * PI), epsilon = 1e-10);
        let d = posterior(&prior(), &table, &[0]).unwrap();
        assert_abs_diff_eq!(posterior_summary(table.grid(), &d).mean, -1.0 / PI, epsilon = 1e-10);
    }

    #[test]
    fn zero_evidence() {
        // outcome (1,1) is impossible at θ = -π/4, so a prior pinned there fails
        struct Pinned;
        impl LikelihoodModel for Pinned {
            fn outcome_count(&self) -> usize {
                2
            }
            fn probabilities(&self, theta: f64, out: &mut [f64]) {
                out[0] = if theta < 0.0 { 1.0 } else { 0.0 };
                out[1] = 1.0 - out[0];
            }
        }
        let table = LikelihoodTable::build(&Pinned, ThetaGrid::simpson(&prior(), 11));
        assert!(posterior(&prior(), &table, &[0]).is_ok());
        assert!(matches!(posterior(&prior(), &table, &[0, 1]), Err(MetroError::ZeroEvidence)));
    }

    #[test]
    fn point_like_posterior_has_zero_variance() {
        let grid = ThetaGrid::simpson(&prior(), 5);
        let dens = [0.0, 0.0, 1.0, 0.0, 0.0];
        assert_eq!(posterior_variance(&grid, &dens), 0.0);
    }

    #[test]
    fn noon_single_shot_mse_and_band_from_closed_form() {
        let budget = Budget { taylor: true, ..Budget::default() };
        let curve = mse_repeated_model(&NoonCounting, &prior(), 1, &budget).unwrap();
        assert!(curve.exact[0]);
        assert_abs_diff_eq!(curve.mse[0], PI * PI / 48.0 - 1.0 / (PI * PI), epsilon = 1e-9);
        // oracle: the three analytic posteriors and their probabilities
        let lik = |o: usize, t: f64| {
            let mut p = [0.0; 3];
            NoonCounting.probabilities(t, &mut p);
            p[o]
        };
        let mut band = 0.0;
        for o in 0..3 {
            let z = integrate(-PI / 4.0, PI / 4.0, |t| lik(o, t) / (PI / 2.0));
            let m = integrate(-PI / 4.0, PI / 4.0, |t| t * lik(o, t) / (PI / 2.0)) / z;
            let c4 = integrate(-PI / 4.0, PI / 4.0, |t| (t - m).powi(4) * lik(o, t) / (PI / 2.0)) / z;
            band += z * c4 / 12.0;
        }
        assert_abs_diff_eq!(curve.taylor_band.unwrap()[0], band, epsilon = 1e-9);
    }

    #[test]
    fn exact_and_monte_carlo_agree() {
        let mut budget = Budget { samples: 20_000, checkpoints: Checkpoints::All, ..Budget::default() };
        let exact = mse_repeated_model(&NoonCounting, &prior(), 6, &budget).unwrap();
        assert!(exact.exact.iter().all(|&e| e));
        budget.force_monte_carlo = true;
        let mc = mse_repeated_model(&NoonCounting, &prior(), 6, &budget).unwrap();
        for i in 0..6 {
            assert!(!mc.exact[i]);
            assert!((exact.mse[i] - mc.mse[i]).abs() <= 3.0 * mc.stderr[i] + 1e-12, "mu = {}: {} {} {}", i + 1, exact.mse[i], mc.mse[i], mc.stderr[i]);
        }
    }

    #[test]
    fn law_of_total_variance() {
        let budget = Budget { checkpoints: Checkpoints::All, ..Budget::default() };
        let curve = mse_repeated_model(&NoonCounting, &prior(), 8, &budget).unwrap();
        for s in &curve.posterior_second_moment {
            assert_abs_diff_eq!(*s, prior().second_moment(), epsilon = 1e-8);
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let budget = Budget { samples: 2000, force_monte_carlo: true, checkpoints: Checkpoints::All, ..Budget::default() };
        let a = mse_repeated_model(&NoonCounting, &prior(), 12, &budget).unwrap();
        let b = mse_repeated_model(&NoonCounting, &prior(), 12, &budget).unwrap();
        assert_eq!(a, b);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let c = pool.install(|| mse_repeated_model(&NoonCounting, &prior(), 12, &budget).unwrap());
        assert_eq!(a, c);
    }

    #[test]
    fn empty_curve_for_zero_mu() {
        let curve = mse_repeated_model(&NoonCounting, &prior(), 0, &Budget::default()).unwrap();
        assert!(curve.is_empty());
    }

    #[test]
    fn checkpoint_spacing() {
        let v = Checkpoints::Geometric { dense_until: 100, ratio: 1.01 }.values(1000);
        assert_eq!(&v[..3], &[1, 2, 3]);
        assert!(v.contains(&100) && v.contains(&101) && *v.last().unwrap() == 1000);
        assert!(v.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(Checkpoints::All.values(4), vec![1, 2, 3, 4]);
    }

    #[test]
    fn compositions_count() {
        assert_eq!(compositions(1, 7), 7);
        assert_eq!(compositions(2, 3), 6);
        assert_eq!(compositions(10, 3), 66);
    }

    fn synthetic(mu: &[usize], mse: &[f64]) -> MseCurve {
        MseCurve {
            mu: mu.to_vec(),
            mse: mse.to_vec(),
            stderr: vec![0.0; mu.len()],
            taylor_band: None,
            posterior_second_moment: vec![0.0; mu.len()],
            exact: vec![true; mu.len()],
            seed: 0,
            samples: 0,
            grid_points: 0,
        }
    }

    #[test]
    fn mu_tau_rules() {
        let f = 8.0;
        let mus: Vec<usize> = (1..=20).collect();
        let on_crb: Vec<f64> = mus.iter().map(|&m| 1.0 / (m as f64 * f)).collect();
        assert_eq!(mu_tau(&synthetic(&mus, &on_crb), f, 0.05).unwrap(), 1);
        // relative error 0.053 at 5 and 0.040 at 6 crosses 0.05 near 5.2
        let mut mse = on_crb.clone();
        for (i, m) in mus.iter().enumerate() {
            let r = match m {
                1..=5 => 0.053 + 0.01 * (5 - m) as f64,
                6 => 0.040,
                _ => 0.03,
            };
            mse[i] = 1.0 / (*m as f64 * f) / (1.0 - r);
        }
        assert_eq!(mu_tau(&synthetic(&mus, &mse), f, 0.05).unwrap(), 5);
        let far: Vec<f64> = on_crb.iter().map(|x| 2.0 * x).collect();
        assert!(matches!(mu_tau(&synthetic(&mus, &far), f, 0.05), Err(MetroError::NotReached)));
    }

    #[test]
    fn noon_parity_matches_counting_curve() {
        let dims = FockDims::square(3).unwrap();
        let probe = make_probe(ProbeKind::noon(), dims).unwrap().state;
        let budget = Budget { checkpoints: Checkpoints::All, ..Budget::default() };
        let counting = mse_repeated(&probe, &build_scheme(&SchemeKind::CountingEven, dims).unwrap(), &prior(), 6, &budget).unwrap();
        let parity = mse_repeated(&probe, &build_scheme(&SchemeKind::Parity, dims).unwrap(), &prior(), 6, &budget).unwrap();
        for i in 0..6 {
            assert!(parity.exact[i]);
            assert!(parity.mse[i] >= counting.mse[i] - 1e-12);
        }
        assert_abs_diff_eq!(parity.mse[0], counting.mse[0], epsilon = 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn curve_invariants(mean in -0.5f64..0.5, width in 0.2f64..2.5, seed in 0u64..1000) {
            let prior = FlatPrior::new(mean, width).unwrap();
            let budget = Budget { samples: 800, seed, checkpoints: Checkpoints::All, grid_points: 201, max_grid_points: 801, ..Budget::default() };
            let curve = mse_repeated_model(&NoonCounting, &prior, 14, &budget).unwrap();
            for i in 0..curve.len() {
                prop_assert!(curve.mse[i] <= prior.variance() + 2.0 * curve.stderr[i] + 1e-9);
                prop_assert!(curve.taylor_band.as_ref().unwrap()[i] >= 0.0);
                if i > 0 {
                    let slack = 2.0 * (curve.stderr[i] + curve.stderr[i - 1]) + 1e-12;
                    prop_assert!(curve.mse[i] <= curve.mse[i - 1] + slack);
                }
            }
        }
    }
}
