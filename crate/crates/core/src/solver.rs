//! Fixed-point continuation for `min_{W psd} mu ||W||_* + 1/2 ||A(W) - b||^2`.
//!
//! Three variants share one proximal step `X+ = D_{tau mu}(B - tau A^*(A(B) - b))`:
//! plain MFPC uses a fixed `tau` and `B = X^k`; MFPC-BB picks `tau` from a
//! Barzilai-Borwein ratio; AFPC-BB additionally extrapolates
//! `B = X^k + (t_{k-1} - 1) / t_k (X^k - X^{k-1})`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grammap::ConstraintSystem;
use crate::spectral::{
    partial_schur_with, schur_sym, threshold, EigenDecomposition, PartialMethod, SymMatrix,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "mfpc")]
    Mfpc,
    #[serde(rename = "mfpc-bb")]
    MfpcBb,
    #[serde(rename = "afpc-bb")]
    AfpcBb,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Mfpc, Variant::MfpcBb, Variant::AfpcBb];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Mfpc => "mfpc",
            Variant::MfpcBb => "mfpc-bb",
            Variant::AfpcBb => "afpc-bb",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "mfpc" => Ok(Variant::Mfpc),
            "mfpc-bb" => Ok(Variant::MfpcBb),
            "afpc-bb" => Ok(Variant::AfpcBb),
            other => Err(Error::InvalidArgument(format!("unknown variant `{other}`"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Which Barzilai-Borwein ratio to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum BbRule {
    /// `<dX, dg> / <dg, dg>`
    #[default]
    Bb1,
    /// `<dX, dX> / <dX, dg>`
    Bb2,
}

/// Matrix norm applied to `A^*(b)` when deriving the default `mu` schedule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MuNorm {
    #[default]
    Spectral,
    Frobenius,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum EigenMode {
    /// Full decomposition of every `Y^k`.
    Full,
    /// Leading `s_k` eigenpairs, grown until all eigenvalues above the
    /// threshold are captured.
    #[default]
    Partial,
}

/// Solver parameters. `None` entries are derived from the constraint system:
/// `mu_1 = ||A^*b|| / 4`, `mu_bar = 1e-4 ||A^*b||`, `tau_min = 1e-3 / L`,
/// `tau_max = 10 / L`, `tau_fixed = tau_0 = 1.99 / L` with `L = ||A||_2^2`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverConfig {
    pub variant: Variant,
    pub mu_bar: Option<f64>,
    pub mu_1: Option<f64>,
    pub eta: f64,
    /// When `false` a single stage runs at `mu_bar`.
    pub continuation: bool,
    pub mu_norm: MuNorm,
    pub tau_fixed: Option<f64>,
    pub tau_0: Option<f64>,
    pub tau_min: Option<f64>,
    pub tau_max: Option<f64>,
    pub bb_rule: BbRule,
    pub epsilon: f64,
    pub eps_rank: f64,
    pub max_iter: usize,
    /// Stagnation tolerance of the final stage.
    pub xtol: f64,
    /// Stagnation tolerance that ends an intermediate continuation stage.
    pub stage_tol: f64,
    pub eigen_mode: EigenMode,
    pub partial_method: PartialMethod,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            variant: Variant::AfpcBb,
            mu_bar: None,
            mu_1: None,
            eta: 0.25,
            continuation: true,
            mu_norm: MuNorm::Spectral,
            tau_fixed: None,
            tau_0: None,
            tau_min: None,
            tau_max: None,
            bb_rule: BbRule::Bb1,
            epsilon: 1e-3,
            eps_rank: 1e-2,
            max_iter: 1000,
            xtol: 1e-8,
            stage_tol: 1e-3,
            eigen_mode: EigenMode::Partial,
            partial_method: PartialMethod::Auto,
        }
    }
}

impl SolverConfig {
    pub fn with_variant(variant: Variant) -> Self {
        SolverConfig { variant, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return bad(format!("eta must lie in (0, 1), got {}", self.eta));
        }
        if let Some(m) = self.mu_bar {
            if !(m > 0.0) {
                return bad(format!("mu_bar must be positive, got {m}"));
            }
        }
        if let (Some(m1), Some(mb)) = (self.mu_1, self.mu_bar) {
            if m1 < mb {
                return bad(format!("mu_1 = {m1} is below mu_bar = {mb}"));
            }
        }
        if let Some(m) = self.mu_1 {
            if !(m > 0.0) {
                return bad(format!("mu_1 must be positive, got {m}"));
            }
        }
        for (name, v) in [("tau_min", self.tau_min), ("tau_max", self.tau_max), ("tau_fixed", self.tau_fixed), ("tau_0", self.tau_0)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return bad(format!("{name} must be positive and finite, got {v}"));
                }
            }
        }
        if let (Some(lo), Some(hi)) = (self.tau_min, self.tau_max) {
            if lo >= hi {
                return bad(format!("tau_min = {lo} must be below tau_max = {hi}"));
            }
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.eps_rank > 0.0 && self.eps_rank < 1.0) {
            return bad(format!("eps_rank must lie in (0, 1), got {}", self.eps_rank));
        }
        if !(self.xtol >= 0.0) || !(self.stage_tol >= 0.0) {
            return bad("stagnation tolerances must be non-negative".into());
        }
        Ok(())
    }
}

/// Tracks `s_k`, the number of eigenpairs requested from the partial solver.
#[derive(Clone, Debug)]
pub struct RankTracker {
    pub eps_rank: f64,
    pub boost: usize,
    pub violations: usize,
    n: usize,
}

impl RankTracker {
    pub fn new(n: usize, eps_rank: f64) -> Self {
        RankTracker { eps_rank, boost: 0, violations: 0, n }
    }

    /// Records one check of `||X^{k+1} - X^k|| <= ||Y^k - Y^{k-1}||`.
    /// Ten violations raise `s_k` by one and reset the counter.
    pub fn record(&mut self, non_expansive: bool) {
        if !non_expansive {
            self.violations += 1;
            if self.violations >= 10 {
                self.boost += 1;
                self.violations = 0;
            }
        }
    }

    /// `#{lambda_i >= eps_rank * lambda_1}` (at least one), plus the boost.
    pub fn update(&self, lambda_prev: &[f64]) -> usize {
        update_rank_estimate(lambda_prev, self.eps_rank, self.boost, self.n)
    }
}

/// `s_k` from the previous spectrum; see [`RankTracker`].
pub fn update_rank_estimate(lambda_prev: &[f64], eps_rank: f64, boost: usize, n: usize) -> usize {
    let top = lambda_prev.iter().fold(0.0f64, |a, &l| a.max(l.abs()));
    let count = if top > 0.0 {
        lambda_prev.iter().filter(|&&l| l >= eps_rank * top).count()
    } else {
        0
    };
    (count.max(1) + boost).min(n.max(1))
}

/// Per-iteration solver state.
#[derive(Clone, Debug)]
pub struct SolverState {
    pub x: SymMatrix,
    pub x_prev: SymMatrix,
    /// `A^*(A(X^k) - b)`
    pub g: SymMatrix,
    pub g_prev: SymMatrix,
    pub y_prev: Option<SymMatrix>,
    /// `A(X^k) - b`
    pub residual: Vec<f64>,
    pub tau: f64,
    pub t: f64,
    pub t_prev: f64,
    pub mu: f64,
    pub s_k: usize,
    pub tracker: RankTracker,
    pub iter: usize,
    /// Positive eigenvalues of `X^k`, non-increasing.
    pub lambda: Vec<f64>,
    pub objective: f64,
    /// The last partial decomposition stopped at an eigenvalue still above
    /// the threshold, so more eigenpairs could have survived.
    pub truncation_binding: bool,
}

impl SolverState {
    /// `X^0 = 0`, `t = 1`, `s_k = n`.
    pub fn new(cs: &ConstraintSystem, eps_rank: f64) -> Self {
        let n = cs.n();
        let residual: Vec<f64> = cs.b().iter().map(|v| -v).collect();
        let g = cs.adjoint(&residual).expect("dims");
        let half_sq = 0.5 * residual.iter().map(|v| v * v).sum::<f64>();
        SolverState {
            x: SymMatrix::zeros(n),
            x_prev: SymMatrix::zeros(n),
            g_prev: g.clone(),
            g,
            y_prev: None,
            residual,
            tau: 0.0,
            t: 1.0,
            t_prev: 1.0,
            mu: 0.0,
            s_k: n.max(1),
            tracker: RankTracker::new(n, eps_rank),
            iter: 0,
            lambda: vec![],
            objective: half_sq,
            truncation_binding: false,
        }
    }

    pub fn residual_norm(&self) -> f64 {
        self.residual.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Restarts the momentum sequence (`t = 1`).
    pub fn reset_momentum(&mut self) {
        self.t = 1.0;
        self.t_prev = 1.0;
    }
}

/// Options for a single proximal step.
#[derive(Clone, Copy, Debug, Default)]
pub struct StepOptions {
    pub eigen_mode: EigenMode,
    pub partial_method: PartialMethod,
}

fn leading_eigs(y: &SymMatrix, s_k: usize, opts: StepOptions) -> Result<EigenDecomposition> {
    match opts.eigen_mode {
        EigenMode::Full => schur_sym(y),
        EigenMode::Partial => partial_schur_with(y, s_k.clamp(1, y.n()), opts.partial_method),
    }
}

fn prox_from(state: &mut SolverState, cs: &ConstraintSystem, base: &SymMatrix, grad: &SymMatrix, tau: f64, mu: f64, opts: StepOptions) -> Result<()> {
    if !(tau > 0.0) || !(mu > 0.0) {
        return Err(Error::InvalidArgument(format!("tau and mu must be positive (tau = {tau}, mu = {mu})")));
    }
    let y = base.axpy(-tau, grad);
    let nu = tau * mu;
    let decomp = leading_eigs(&y, state.s_k, opts)?;
    let x_next = threshold(&decomp, nu)?;

    let moved = x_next.sub(&state.x).norm_fro();
    if let Some(yp) = &state.y_prev {
        let bound = y.sub(yp).norm_fro();
        state.tracker.record(moved <= bound + 1e-12 * (1.0 + bound));
    }
    state.y_prev = Some(y);

    state.truncation_binding = decomp.k() < decomp.n() && decomp.lambda.last().is_some_and(|&l| l > nu);
    state.lambda = decomp.lambda.iter().map(|l| l - nu).take_while(|&l| l > 0.0).collect();
    let residual: Vec<f64> = cs.apply(&x_next)?.iter().zip(cs.b()).map(|(a, b)| a - b).collect();
    let g_next = cs.adjoint(&residual)?;

    state.x_prev = std::mem::replace(&mut state.x, x_next);
    state.g_prev = std::mem::replace(&mut state.g, g_next);
    state.residual = residual;
    state.tau = tau;
    state.mu = mu;
    state.iter += 1;
    let nuc: f64 = state.lambda.iter().sum();
    state.objective = mu * nuc + 0.5 * state.residual_norm().powi(2);
    Ok(())
}

/// One fixed-point step `X+ = D_{tau mu}(X - tau A^*(A(X) - b))`.
pub fn mfpc_step(state: &mut SolverState, cs: &ConstraintSystem, tau: f64, mu: f64, opts: StepOptions) -> Result<()> {
    let base = state.x.clone();
    let grad = state.g.clone();
    prox_from(state, cs, &base, &grad, tau, mu, opts)
}

/// `t_{k+1} = (1 + sqrt(1 + 4 t_k^2)) / 2`
pub fn next_momentum(t: f64) -> f64 {
    0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt())
}

/// One accelerated step: extrapolate to `Z`, take the proximal step from
/// `Z`, then advance `t`.
pub fn afpc_step(state: &mut SolverState, cs: &ConstraintSystem, tau: f64, mu: f64, opts: StepOptions) -> Result<()> {
    let weight = (state.t_prev - 1.0) / state.t;
    let z = if weight == 0.0 {
        state.x.clone()
    } else {
        state.x.axpy(weight, &state.x.sub(&state.x_prev))
    };
    let rz: Vec<f64> = cs.apply(&z)?.iter().zip(cs.b()).map(|(a, b)| a - b).collect();
    let gz = cs.adjoint(&rz)?;
    prox_from(state, cs, &z, &gz, tau, mu, opts)?;
    state.t_prev = state.t;
    state.t = next_momentum(state.t);
    Ok(())
}

/// Barzilai-Borwein step clamped to `[tau_min, tau_max]`. A zero, negative
/// or non-finite ratio falls back to `tau_max`.
pub fn bb_step_size(dx: &SymMatrix, dg: &SymMatrix, tau_min: f64, tau_max: f64, rule: BbRule) -> f64 {
    let xg = dx.dot(dg);
    let raw = match rule {
        BbRule::Bb1 => xg / dg.dot(dg),
        BbRule::Bb2 => dx.dot(dx) / xg,
    };
    let raw = if raw.is_finite() && raw > 0.0 { raw } else { tau_max };
    raw.min(tau_max).max(tau_min)
}

/// `||W - D_{tau mu}(W - tau A^*(A(W) - b))||_F`, zero exactly at the optimum.
pub fn fixed_point_residual(w: &SymMatrix, cs: &ConstraintSystem, tau: f64, mu: f64) -> Result<f64> {
    let r: Vec<f64> = cs.apply(w)?.iter().zip(cs.b()).map(|(a, b)| a - b).collect();
    let h = w.axpy(-tau, &cs.adjoint(&r)?);
    let d = threshold(&schur_sym(&h)?, tau * mu)?;
    Ok(w.sub(&d).norm_fro())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iter: usize,
    pub mu: f64,
    pub tau: f64,
    pub s_k: usize,
    pub rel_err: f64,
    pub objective: f64,
    pub rank: usize,
}

/// Writes history as CSV: `iter,mu,tau,s_k,rel_err,objective,rank`.
pub fn write_history_csv<W: Write>(mut out: W, history: &[HistoryRow]) -> std::io::Result<()> {
    writeln!(out, "iter,mu,tau,s_k,rel_err,objective,rank")?;
    for h in history {
        writeln!(out, "{},{:e},{:e},{},{:e},{:e},{}", h.iter, h.mu, h.tau, h.s_k, h.rel_err, h.objective, h.rank)?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub w: SymMatrix,
    /// `||A(W) - b|| / ||b||`, or the absolute residual when `b = 0`.
    pub rel_err: f64,
    pub iterations: usize,
    pub rank: usize,
    pub fixed_point_residual: f64,
    pub converged: bool,
    pub history: Vec<HistoryRow>,
    pub mu_final: f64,
    pub tau_final: f64,
    /// Positive eigenvalues of `w`, non-increasing.
    pub eigenvalues: Vec<f64>,
    /// `||A(W) - b||` against `mu_bar / n`, reported only as a diagnostic.
    pub residual_vs_mu_over_n: (f64, f64),
}

/// `#{lambda_i > 1e-6 lambda_1}`.
pub fn numerical_rank(lambda: &[f64]) -> usize {
    let top = lambda.iter().fold(0.0f64, |a, &l| a.max(l));
    if top <= 0.0 {
        return 0;
    }
    lambda.iter().filter(|&&l| l > 1e-6 * top).count()
}

/// Resolved numeric parameters of a run.
#[derive(Clone, Copy, Debug)]
pub struct Schedule {
    pub lipschitz: f64,
    pub mu_1: f64,
    pub mu_bar: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    pub tau_fixed: f64,
    pub tau_0: f64,
}

impl Schedule {
    pub fn resolve(cs: &ConstraintSystem, cfg: &SolverConfig) -> Result<Schedule> {
        cfg.validate()?;
        let l = cs.op_norm_sq().max(f64::MIN_POSITIVE);
        let atb = cs.adjoint_b();
        let atb_norm = match cfg.mu_norm {
            MuNorm::Spectral => atb.norm_spectral(),
            MuNorm::Frobenius => atb.norm_fro(),
        };
        let mu_bar = cfg.mu_bar.unwrap_or(1e-4 * atb_norm).max(f64::MIN_POSITIVE);
        let mu_1 = if cfg.continuation { cfg.mu_1.unwrap_or(0.25 * atb_norm).max(mu_bar) } else { mu_bar };
        let tau_min = cfg.tau_min.unwrap_or(1e-3 / l);
        let tau_max = cfg.tau_max.unwrap_or(10.0 / l);
        if tau_min >= tau_max {
            return Err(Error::InvalidArgument(format!("tau_min = {tau_min} must be below tau_max = {tau_max}")));
        }
        let tau_fixed = cfg.tau_fixed.unwrap_or(1.99 / l);
        let tau_0 = cfg.tau_0.unwrap_or(1.99 / l).clamp(tau_min, tau_max);
        Ok(Schedule { lipschitz: l, mu_1, mu_bar, tau_min, tau_max, tau_fixed, tau_0 })
    }
}

/// Runs the configured variant with continuation `mu <- max(eta mu, mu_bar)`.
///
/// The run stops as soon as the relative error reaches `epsilon`, when the
/// final stage stagnates below `xtol`, or after `max_iter` iterations.
pub fn solve(cs: &ConstraintSystem, cfg: &SolverConfig) -> Result<SolveResult> {
    let sched = Schedule::resolve(cs, cfg)?;
    let n = cs.n();
    let b_norm = cs.b_norm();
    let err_of = |s: &SolverState| {
        let r = s.residual_norm();
        if b_norm > 0.0 {
            r / b_norm
        } else {
            r
        }
    };

    let mut state = SolverState::new(cs, cfg.eps_rank);
    let opts = StepOptions { eigen_mode: cfg.eigen_mode, partial_method: cfg.partial_method };
    let mut mu = sched.mu_1;
    let mut history = Vec::new();
    let mut rel_err = err_of(&state);
    let mut converged = rel_err <= cfg.epsilon;
    let mut have_prev = false;

    while !converged && state.iter < cfg.max_iter && n > 0 {
        let tau = match cfg.variant {
            Variant::Mfpc => sched.tau_fixed,
            _ if have_prev => {
                let dg = state.g.sub(&state.g_prev);
                if dg.norm_fro() == 0.0 {
                    state.tau.clamp(sched.tau_min, sched.tau_max)
                } else {
                    bb_step_size(&state.x.sub(&state.x_prev), &dg, sched.tau_min, sched.tau_max, cfg.bb_rule)
                }
            }
            _ => sched.tau_0,
        };
        let before = state.x.clone();
        match cfg.variant {
            Variant::AfpcBb => afpc_step(&mut state, cs, tau, mu, opts)?,
            _ => mfpc_step(&mut state, cs, tau, mu, opts)?,
        }
        have_prev = true;
        rel_err = err_of(&state);
        history.push(HistoryRow {
            iter: state.iter,
            mu,
            tau,
            s_k: state.s_k,
            rel_err,
            objective: state.objective,
            rank: numerical_rank(&state.lambda),
        });
        let change = state.x.sub(&before).norm_fro() / before.norm_fro().max(1.0);
        if mu <= sched.mu_bar && rel_err <= cfg.epsilon {
            converged = true;
            break;
        }
        if mu > sched.mu_bar {
            if rel_err <= cfg.epsilon || change < cfg.stage_tol {
                mu = (cfg.eta * mu).max(sched.mu_bar);
                state.reset_momentum();
            }
        } else if change < cfg.xtol {
            if !(state.truncation_binding && state.s_k < n) {
                break;
            }
            // stalled on the truncated map: widen the decomposition
            state.tracker.boost += 1;
        }
        state.s_k = state.tracker.update(&state.lambda);
    }

    let fpr = fixed_point_residual(&state.x, cs, if state.tau > 0.0 { state.tau } else { sched.tau_0 }, mu)?;
    let residual_norm = state.residual_norm();
    Ok(SolveResult {
        rank: numerical_rank(&state.lambda),
        w: state.x,
        rel_err,
        iterations: state.iter,
        fixed_point_residual: fpr,
        converged,
        history,
        mu_final: mu,
        tau_final: state.tau,
        eigenvalues: state.lambda,
        residual_vs_mu_over_n: (residual_norm, sched.mu_bar / n.max(1) as f64),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammap::{build_basis, build_constraints, BasisOption};
    use crate::polyalg::{parse_polynomial, Rational};

    fn scalar_system(b: i64) -> ConstraintSystem {
        ConstraintSystem::new(1, vec![vec![(0, 0, Rational::from_integer(1.into()))]], vec![Rational::from_integer(b.into())]).unwrap()
    }

    #[test]
    fn zero_rhs_is_a_fixed_point() {
        let cs = ConstraintSystem::new(2, vec![vec![(0, 0, Rational::from_integer(1.into()))]], vec![Rational::from_integer(0.into())]).unwrap();
        let mut st = SolverState::new(&cs, 1e-2);
        mfpc_step(&mut st, &cs, 0.5, 1.0, StepOptions::default()).unwrap();
        assert_eq!(st.x.norm_fro(), 0.0);
        let res = solve(&cs, &SolverConfig::default()).unwrap();
        assert_eq!(res.w.norm_fro(), 0.0);
        assert!(res.iterations <= 1);
    }

    #[test]
    fn scalar_mfpc_step() {
        let cs = scalar_system(10);
        let mut st = SolverState::new(&cs, 1e-2);
        mfpc_step(&mut st, &cs, 0.5, 2.0, StepOptions::default()).unwrap();
        assert!((st.x.get(0, 0) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn scalar_fixed_point_residual() {
        let cs = scalar_system(10);
        let w = SymMatrix::from_diag(&[4.0]);
        let r = fixed_point_residual(&w, &cs, 0.5, 2.0).unwrap();
        assert!((r - 2.0).abs() < 1e-14);
        let z = ConstraintSystem::new(1, vec![vec![(0, 0, Rational::from_integer(1.into()))]], vec![Rational::from_integer(0.into())]).unwrap();
        assert_eq!(fixed_point_residual(&SymMatrix::zeros(1), &z, 0.5, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn bb_examples() {
        let i = SymMatrix::identity(3);
        let two = i.scale(2.0);
        assert!((bb_step_size(&i, &two, 1e-6, 1e6, BbRule::Bb1) - 0.5).abs() < 1e-15);
        let big = i.scale(0.01);
        assert_eq!(bb_step_size(&i, &big, 1e-3, 10.0, BbRule::Bb1), 10.0);
        let a = SymMatrix::from_diag(&[1.0, 0.0]);
        let b = SymMatrix::from_diag(&[0.0, 1.0]);
        assert_eq!(bb_step_size(&a, &b, 1e-3, 7.0, BbRule::Bb1), 7.0);
        assert_eq!(bb_step_size(&a, &SymMatrix::zeros(2), 1e-3, 7.0, BbRule::Bb1), 7.0);
    }

    #[test]
    fn momentum_recursion() {
        let t2 = next_momentum(1.0);
        assert!((t2 - 1.618_033_988_749_895).abs() < 1e-12);
        let t3 = next_momentum(t2);
        assert!((t3 - 2.193_527_085_331_054).abs() < 1e-12, "{t3}");
    }

    #[test]
    fn first_accelerated_step_equals_plain_step() {
        let f = parse_polynomial("x1^2 + 2*x1 + 1").unwrap();
        let cs = build_constraints(&f, &build_basis(&f, &BasisOption::Full).unwrap()).unwrap();
        let mut a = SolverState::new(&cs, 1e-2);
        let mut b = SolverState::new(&cs, 1e-2);
        afpc_step(&mut a, &cs, 0.3, 0.01, StepOptions::default()).unwrap();
        mfpc_step(&mut b, &cs, 0.3, 0.01, StepOptions::default()).unwrap();
        assert!(a.x.sub(&b.x).norm_fro() < 1e-15);
        assert!((a.t - 1.618_033_988_749_895).abs() < 1e-12);
    }

    #[test]
    fn rank_estimate_examples() {
        assert_eq!(update_rank_estimate(&[5.0, 4.0, 0.001], 0.01, 0, 3), 2);
        assert_eq!(update_rank_estimate(&[0.0, 0.0], 0.01, 0, 2), 1);
        assert_eq!(update_rank_estimate(&[], 0.01, 0, 2), 1);
        let mut tr = RankTracker::new(10, 0.01);
        let base = tr.update(&[5.0, 4.0, 0.001]);
        for _ in 0..9 {
            tr.record(false);
        }
        assert_eq!(tr.update(&[5.0, 4.0, 0.001]), base);
        tr.record(true);
        tr.record(false);
        assert_eq!(tr.update(&[5.0, 4.0, 0.001]), base + 1);
        assert_eq!(tr.violations, 0);
    }

    #[test]
    fn perfect_square_converges() {
        let f = parse_polynomial("x1^2 + 2*x1 + 1").unwrap();
        let cs = build_constraints(&f, &build_basis(&f, &BasisOption::Full).unwrap()).unwrap();
        for v in Variant::ALL {
            let cfg = SolverConfig { epsilon: 5e-3, max_iter: 5000, ..SolverConfig::with_variant(v) };
            let res = solve(&cs, &cfg).unwrap();
            assert!(res.converged, "{v}: {}", res.rel_err);
            assert!(res.rel_err < 5e-3);
            assert_eq!(res.rank, 1);
        }
    }

    #[test]
    fn config_validation() {
        let mut c = SolverConfig { eta: 1.5, ..Default::default() };
        assert!(c.validate().is_err());
        c.eta = 0.25;
        c.tau_min = Some(1.0);
        c.tau_max = Some(0.5);
        assert!(c.validate().is_err());
        c.tau_max = Some(2.0);
        c.mu_1 = Some(1e-6);
        c.mu_bar = Some(1e-3);
        assert!(c.validate().is_err());
        assert!("afpc_bb".parse::<Variant>().is_ok());
        assert!("nope".parse::<Variant>().is_err());
    }
}
