//! Executes experiments and collects their output tables.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::path::{Path, PathBuf};

use mzmetro_core::bayes::MseCurve;
use mzmetro_core::fisher::quantum_fisher_jz;
use mzmetro_core::fock::{j_parameter, mandel_q, mean_photon_number};
use mzmetro_core::loss::lossy_personick_sweep;
use mzmetro_core::personick::{collective_bound, spectrum_rows, DEFAULT_COLLECTIVE_DIM_LIMIT, DEFAULT_SUPPORT_CUTOFF};
use mzmetro_core::{build_scheme, make_probe, mse_repeated, mu_tau, optimal_strategy, FockDims, MetroError, Probe, ProbeKind, SchemeKind};

use crate::config::{ExperimentConfig, PriorSpec, RunKind, StateSpec};
use crate::error::CliError;
use crate::output::{sci, Table, BOUND_HEADER, CURVE_HEADER, LOSS_EXTRA, SPECTRUM_HEADER, STATE_HEADER};

pub const DEFAULT_MU_MAX: usize = 100;
pub const DEFAULT_ETA: f64 = 0.9;
pub const LOSS_STATE: &str = "two-photon";
/// Relative-error target used for `μ_τ`.
pub const MU_TAU_TARGET: f64 = 0.05;

/// Tables produced by one experiment.
#[derive(Clone, Debug)]
pub struct RunOutput {
    /// Curve rows, or the bound row of a personick run.
    pub csv: Table,
    pub spectrum: Option<Table>,
}

pub fn probe_for(spec: &StateSpec) -> Result<Probe, CliError> {
    let kind = spec.kind()?;
    let dims = match spec.cutoff {
        Some(d) => FockDims::square(d)?,
        None => kind.default_dims(),
    };
    Ok(make_probe(kind, dims)?)
}

fn scheme_for(exp: &ExperimentConfig, probe: &Probe) -> Result<SchemeKind, CliError> {
    let prior = exp.prior.prior()?;
    Ok(match exp.scheme.as_str() {
        "optimal" => SchemeKind::OptimalSingleShot(Box::new(optimal_strategy(&probe.state, &prior, DEFAULT_SUPPORT_CUTOFF)?)),
        "counting-even" => SchemeKind::CountingEven,
        "counting-odd" => SchemeKind::CountingOdd,
        "quadratures" => SchemeKind::Quadratures { angle: exp.quadrature_angle() },
        "undo-preparation" => match probe.kind {
            ProbeKind::Coherent { alpha } => SchemeKind::UndoPreparation { alpha },
            _ => SchemeKind::undo_preparation(),
        },
        "parity" => SchemeKind::Parity,
        other => return Err(CliError::Config(format!("scheme '{other}' has no measurement"))),
    })
}

fn finite(x: f64, what: &str) -> Result<f64, CliError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(CliError::Numerical(format!("{what} is not finite")))
    }
}

fn curve_rows(table: &mut Table, lead: [&str; 2], prior: &PriorSpec, curve: &MseCurve, fq: f64, extra: &[String]) -> Result<(), CliError> {
    for i in 0..curve.len() {
        let mu = curve.mu[i];
        let mut row = vec![
            lead[0].to_string(),
            lead[1].to_string(),
            sci(prior.w0),
            sci(prior.theta_bar),
            mu.to_string(),
            sci(finite(curve.mse[i], "mse")?),
            sci(curve.stderr[i]),
            curve.taylor_band.as_ref().map(|b| sci(b[i])).unwrap_or_default(),
            sci(1.0 / (mu as f64 * fq)),
            curve.seed.to_string(),
        ];
        row.extend_from_slice(extra);
        table.push(row);
    }
    Ok(())
}

pub fn simulate(exp: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let probe = probe_for(&exp.state)?;
    let label = probe.kind.label();
    let prior = exp.prior.prior()?;
    let fq = finite(quantum_fisher_jz(&probe.state), "quantum Fisher information")?;
    let mut table = Table::new(&CURVE_HEADER);
    if exp.scheme == "collective" {
        for mu in 1..=exp.mu_max {
            let bound = finite(collective_bound(&probe.state, &prior, mu, DEFAULT_COLLECTIVE_DIM_LIMIT)?, "collective bound")?;
            table.push(vec![
                label.clone(),
                exp.scheme.clone(),
                sci(exp.prior.w0),
                sci(exp.prior.theta_bar),
                mu.to_string(),
                sci(bound),
                sci(0.0),
                String::new(),
                sci(1.0 / (mu as f64 * fq)),
                exp.seed.to_string(),
            ]);
        }
        return Ok(RunOutput { csv: table, spectrum: None });
    }
    let budget = exp.budget.budget(exp.seed)?;
    if exp.mu_max == 0 {
        return Ok(RunOutput { csv: table, spectrum: None });
    }
    let povm = build_scheme(&scheme_for(exp, &probe)?, probe.state.dims())?;
    let curve = mse_repeated(&probe.state, &povm, &prior, exp.mu_max, &budget)?;
    curve_rows(&mut table, [&label, &exp.scheme], &exp.prior, &curve, fq, &[])?;
    Ok(RunOutput { csv: table, spectrum: None })
}

pub fn personick(exp: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let probe = probe_for(&exp.state)?;
    let label = probe.kind.label();
    let prior = exp.prior.prior()?;
    let strategy = optimal_strategy(&probe.state, &prior, DEFAULT_SUPPORT_CUTOFF)?;
    let sol = &strategy.solution;
    let mut bound = Table::new(&BOUND_HEADER);
    bound.push(vec![
        label.clone(),
        sci(exp.prior.w0),
        sci(exp.prior.theta_bar),
        sci(finite(sol.bound, "bound")?),
        sci(sol.bound_variance_form),
        sci(quantum_fisher_jz(&probe.state)),
        sol.support_dim.to_string(),
        sol.degenerate_groups.len().to_string(),
    ]);
    let mut spectrum = Table::new(&SPECTRUM_HEADER);
    for (i, s) in spectrum_rows(sol) {
        spectrum.push(vec![label.clone(), i.to_string(), sci(finite(s, "estimate")?)]);
    }
    Ok(RunOutput { csv: bound, spectrum: Some(spectrum) })
}

pub fn loss(exp: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let eta = exp.eta.unwrap_or(DEFAULT_ETA);
    let prior = exp.prior.prior()?;
    let budget = exp.budget.budget(exp.seed)?;
    let mut header: Vec<&str> = CURVE_HEADER.to_vec();
    header.extend(LOSS_EXTRA);
    let mut table = Table::new(&header);
    if exp.mu_max == 0 {
        return Ok(RunOutput { csv: table, spectrum: None });
    }
    let sweep = lossy_personick_sweep(eta, &prior, exp.mu_max, &budget)?;
    let fq = finite(sweep.quantum_fisher, "lossy quantum Fisher information")?;
    curve_rows(&mut table, [LOSS_STATE, "optimal"], &exp.prior, &sweep.curve, fq, &[sci(eta), "single-arm".into()])?;
    Ok(RunOutput { csv: table, spectrum: None })
}

pub fn execute(exp: &ExperimentConfig) -> Result<RunOutput, CliError> {
    exp.validate()?;
    match exp.kind {
        RunKind::Simulate => simulate(exp),
        RunKind::Personick => personick(exp),
        RunKind::Loss => loss(exp),
    }
}

/// Output tables keyed by destination, in first-use order. `None` is stdout.
#[derive(Debug, Default)]
pub struct Sinks(Vec<(Option<PathBuf>, Table)>);

impl Sinks {
    pub fn add(&mut self, path: Option<PathBuf>, table: Table) -> Result<(), CliError> {
        match self.0.iter_mut().find(|(p, _)| *p == path) {
            Some((_, t)) => t.extend(table),
            None => {
                self.0.push((path, table));
                Ok(())
            }
        }
    }

    pub fn tables(&self) -> &[(Option<PathBuf>, Table)] {
        &self.0
    }

    pub fn write(&self) -> Result<(), CliError> {
        for (p, t) in &self.0 {
            t.write_to(p.as_deref())?;
        }
        Ok(())
    }
}

/// Runs every experiment, then writes all outputs. Nothing is written if
/// any experiment fails.
pub fn run_all(exps: &[ExperimentConfig]) -> Result<Sinks, CliError> {
    let mut sinks = Sinks::default();
    for exp in exps {
        log::info!("running {:?} {} / {}", exp.kind, exp.state.name, exp.scheme);
        let out = execute(exp)?;
        match (exp.kind, out.spectrum) {
            (RunKind::Personick, Some(spec)) => {
                sinks.add(exp.outputs.spectrum.clone(), spec)?;
                match &exp.outputs.csv {
                    Some(p) => sinks.add(Some(p.clone()), out.csv)?,
                    None => {
                        let r = &out.csv.rows[0];
                        eprintln!("{}: bound {} (variance form {}), F_q {}", r[0], r[3], r[4], r[5]);
                    }
                }
            }
            _ => sinks.add(exp.outputs.csv.clone(), out.csv)?,
        }
    }
    Ok(sinks)
}

/// Command-line values that replace or fill in experiment fields.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub state: Option<String>,
    pub r: Option<f64>,
    pub alpha: Option<f64>,
    pub n: Option<usize>,
    pub cutoff: Option<usize>,
    pub scheme: Option<String>,
    pub quadrature_angle: Option<f64>,
    pub w0: Option<f64>,
    pub theta_bar: Option<f64>,
    pub mu_max: Option<usize>,
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub eta: Option<f64>,
    pub out: Option<PathBuf>,
    pub bound_out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, exp: &mut ExperimentConfig) {
        if let Some(name) = &self.state {
            exp.state = StateSpec::named(name);
        }
        exp.state.r = self.r.or(exp.state.r);
        exp.state.alpha = self.alpha.or(exp.state.alpha);
        exp.state.n = self.n.or(exp.state.n);
        exp.state.cutoff = self.cutoff.or(exp.state.cutoff);
        if let Some(s) = &self.scheme {
            exp.scheme = s.clone();
        }
        exp.quadrature_angle = self.quadrature_angle.or(exp.quadrature_angle);
        exp.prior.w0 = self.w0.unwrap_or(exp.prior.w0);
        exp.prior.theta_bar = self.theta_bar.unwrap_or(exp.prior.theta_bar);
        exp.mu_max = self.mu_max.unwrap_or(exp.mu_max);
        exp.seed = self.seed.unwrap_or(exp.seed);
        exp.budget.samples = self.samples.or(exp.budget.samples);
        exp.eta = self.eta.or(exp.eta);
        match exp.kind {
            RunKind::Personick => {
                exp.outputs.spectrum = self.out.clone().or(exp.outputs.spectrum.take());
                exp.outputs.csv = self.bound_out.clone().or(exp.outputs.csv.take());
            }
            _ => exp.outputs.csv = self.out.clone().or(exp.outputs.csv.take()),
        }
    }

    /// An experiment built from flags alone.
    pub fn standalone(&self, kind: RunKind) -> Result<ExperimentConfig, CliError> {
        let name = match (kind, &self.state) {
            (RunKind::Loss, _) => LOSS_STATE.to_string(),
            (_, Some(s)) => s.clone(),
            (_, None) => return Err(CliError::Config("--state is required without --config".into())),
        };
        let theta_bar = if kind == RunKind::Loss { FRAC_PI_4 } else { 0.0 };
        let mut exp = ExperimentConfig {
            kind,
            state: StateSpec::named(&name),
            scheme: "optimal".into(),
            prior: PriorSpec { theta_bar, w0: FRAC_PI_2 },
            mu_max: DEFAULT_MU_MAX,
            seed: 0,
            quadrature_angle: None,
            eta: None,
            budget: Default::default(),
            outputs: Default::default(),
        };
        let mut o = self.clone();
        if kind == RunKind::Loss {
            o.state = None;
        }
        o.apply(&mut exp);
        exp.validate()?;
        Ok(exp)
    }
}

/// Statistics of a probe, with `μ_τ` when an MSE curve is supplied.
pub fn state_info(spec: &StateSpec, curve: Option<&Path>) -> Result<Table, CliError> {
    let probe = probe_for(spec)?;
    let label = probe.kind.label();
    let s = &probe.state;
    let nbar = mean_photon_number(s);
    let fq = quantum_fisher_jz(s);
    let opt = |r: Result<f64, MetroError>, what: &str| match r {
        Ok(v) => sci(v),
        Err(e) => {
            log::warn!("{label}: {what} undefined ({e})");
            String::new()
        }
    };
    let q = opt(mandel_q(s), "Q");
    let j = opt(j_parameter(s), "J");
    let tau = match curve {
        None => String::new(),
        Some(p) => {
            let c = read_curve(p, &label)?;
            match mu_tau(&c, fq, MU_TAU_TARGET) {
                Ok(t) => t.to_string(),
                Err(MetroError::NotReached) => {
                    log::warn!("{label}: curve never settles within {MU_TAU_TARGET} of the Cramér-Rao bound");
                    String::new()
                }
                Err(e) => return Err(e.into()),
            }
        }
    };
    let mut t = Table::new(&STATE_HEADER);
    t.push(vec![label, s.dims().d1.to_string(), sci(probe.tail_probability), sci(nbar), q, j, sci(fq), tau]);
    Ok(t)
}

/// Reads `mu, mse, stderr` rows for one state from a curve CSV.
pub fn read_curve(path: &Path, state: &str) -> Result<MseCurve, CliError> {
    let bad = |msg: String| CliError::Config(format!("{}: {msg}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| bad(format!("missing column '{name}'")));
    let (cs, cm, ce, cse) = (col("state")?, col("mu")?, col("mse")?, col("stderr")?);
    let mut c = MseCurve {
        mu: vec![],
        mse: vec![],
        stderr: vec![],
        taylor_band: None,
        posterior_second_moment: vec![],
        exact: vec![],
        seed: 0,
        samples: 0,
        grid_points: 0,
    };
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if &rec[cs] != state {
            continue;
        }
        let num = |i: usize| rec[i].parse::<f64>().map_err(|e| bad(format!("'{}': {e}", &rec[i])));
        c.mu.push(rec[cm].parse().map_err(|e| bad(format!("mu '{}': {e}", &rec[cm])))?);
        c.mse.push(num(ce)?);
        c.stderr.push(num(cse)?);
    }
    if c.mu.is_empty() {
        return Err(bad(format!("no rows for state '{state}'")));
    }
    Ok(c)
}
