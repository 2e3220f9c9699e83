//! End-to-end certification: basis, constraints, numerical solve, low-rank
//! refinement, rounding, exact projection and the exact check.

use num_bigint::BigInt;
use num_traits::{One, Signed};

use crate::error::Error;
use crate::exact::{certify, project_affine_exact, rationalize, CertificateFailure, SosCertificate};
use crate::grammap::{build_basis, build_constraints, BasisOption, ConstraintSystem, MonomialBasis};
use crate::polyalg::{rational_to_f64, Polynomial};
use crate::refine::{gauss_newton_refine_with, padded_factor, truncated_factor, RefineResult};
use crate::solver::{solve, SolveResult, SolverConfig};

/// Pipeline stage, used to label failures.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Basis,
    Constraints,
    Solve,
    Refine,
    Rationalize,
    Project,
    Certify,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Basis => "basis",
            Stage::Constraints => "constraints",
            Stage::Solve => "solve",
            Stage::Refine => "refine",
            Stage::Rationalize => "rationalize",
            Stage::Project => "project",
            Stage::Certify => "certify",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed: {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

fn at(stage: Stage) -> impl FnOnce(Error) -> StageError {
    move |source| StageError { stage, source }
}

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub basis: BasisOption,
    pub solver: SolverConfig,
    /// Fixed factor rank; chosen from the spectrum when `None`.
    pub rank: Option<usize>,
    /// Extra ranks tried above the first choice.
    pub rank_retries: usize,
    /// Relative backward-error target of Gauss-Newton, scaled by `max(1, ||b||)`.
    pub gn_tol: f64,
    /// Largest relative backward error accepted before rounding.
    pub gn_accept: f64,
    pub max_gn: usize,
    /// First denominator bound; escalated by `denom_step` up to `denom_max`.
    pub denom_bound: BigInt,
    pub denom_step: BigInt,
    pub denom_max: BigInt,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            basis: BasisOption::Full,
            solver: SolverConfig::default(),
            rank: None,
            rank_retries: 3,
            gn_tol: 1e-15,
            gn_accept: 1e-9,
            max_gn: 30,
            denom_bound: BigInt::one() << 32,
            denom_step: BigInt::one() << 16,
            denom_max: BigInt::one() << 128,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), Error> {
        self.solver.validate()?;
        if self.denom_bound < BigInt::one() || self.denom_max < self.denom_bound {
            return Err(Error::InvalidArgument("denominator bounds must satisfy 1 <= start <= max".into()));
        }
        if self.denom_step <= BigInt::one() {
            return Err(Error::InvalidArgument("denominator escalation factor must exceed 1".into()));
        }
        if !(self.gn_tol > 0.0 && self.gn_accept > 0.0) {
            return Err(Error::InvalidArgument("refinement tolerances must be positive".into()));
        }
        if self.rank == Some(0) {
            return Err(Error::InvalidArgument("rank must be at least 1".into()));
        }
        Ok(())
    }
}

/// One attempted factor rank.
#[derive(Clone, Debug)]
pub struct RankAttempt {
    pub rank: usize,
    pub theta: Option<f64>,
    pub gn_iterations: usize,
    pub denom_bound: Option<BigInt>,
    pub outcome: String,
}

#[derive(Clone, Debug)]
pub struct PipelineOutcome {
    pub basis: MonomialBasis,
    pub p: usize,
    pub solve: Option<SolveResult>,
    pub refine: Option<RefineResult>,
    pub attempts: Vec<RankAttempt>,
    /// Best certificate found; exact when `certificate.exact`.
    pub certificate: Option<SosCertificate>,
    /// Rank and denominator bound of the certificate.
    pub rank: Option<usize>,
    pub denom_bound: Option<BigInt>,
}

impl PipelineOutcome {
    pub fn is_exact(&self) -> bool {
        self.certificate.as_ref().is_some_and(|c| c.exact)
    }
}

/// Factor rank from the largest relative gap `lambda_r / lambda_{r+1}` among
/// the positive eigenvalues; all of them when no gap exceeds a factor of 10.
pub fn choose_rank(lambda: &[f64]) -> usize {
    let top = lambda.first().copied().unwrap_or(0.0);
    let pos: Vec<f64> = lambda.iter().copied().filter(|&l| l > 1e-12 * top && l > 0.0).collect();
    if pos.len() <= 1 {
        return 1;
    }
    let mut best = (pos.len(), 0.0);
    for r in 1..pos.len() {
        let gap = pos[r - 1] / pos[r];
        if gap > best.1 {
            best = (r, gap);
        }
    }
    if best.1 < 10.0 {
        pos.len()
    } else {
        best.0
    }
}

/// Full pipeline from a polynomial.
pub fn certify_polynomial(f: &Polynomial, cfg: &PipelineConfig) -> Result<PipelineOutcome, StageError> {
    cfg.validate().map_err(at(Stage::Solve))?;
    let basis = build_basis(f, &cfg.basis).map_err(at(Stage::Basis))?;
    let cs = build_constraints(f, &basis).map_err(at(Stage::Constraints))?;
    let res = solve(&cs, &cfg.solver).map_err(at(Stage::Solve))?;
    certify_from_solution(f, &basis, &cs, &res, cfg)
}

/// Refinement and exact certification starting from a numerical solution.
pub fn certify_from_solution(
    f: &Polynomial,
    basis: &MonomialBasis,
    cs: &ConstraintSystem,
    res: &SolveResult,
    cfg: &PipelineConfig,
) -> Result<PipelineOutcome, StageError> {
    let mut out = PipelineOutcome {
        basis: basis.clone(),
        p: cs.p(),
        solve: Some(res.clone()),
        refine: None,
        attempts: Vec::new(),
        certificate: None,
        rank: None,
        denom_bound: None,
    };
    let positive = res.eigenvalues.iter().filter(|&&l| l > 0.0).count();
    if positive == 0 {
        // only the zero polynomial has the zero Gram matrix
        let zero = crate::exact::RationalSymMatrix::from_lower_fn(basis.len(), |_, _| num_traits::Zero::zero());
        let cert = certify(f, &zero, basis).map_err(at(Stage::Certify))?;
        out.certificate = Some(cert);
        return Ok(out);
    }
    let first = cfg.rank.unwrap_or_else(|| choose_rank(&res.eigenvalues));
    let n = basis.len();
    if first > n {
        return Err(StageError {
            stage: Stage::Refine,
            source: Error::InvalidArgument(format!("rank {first} exceeds the basis size {n}")),
        });
    }
    let ranks: Vec<usize> = (first..=first + cfg.rank_retries).filter(|&r| r <= n).collect();
    let scale = cs.b_norm().max(1.0);
    let floor = 1e-6 * res.eigenvalues[0];
    for r in ranks {
        let mut attempt = RankAttempt { rank: r, theta: None, gn_iterations: 0, denom_bound: None, outcome: String::new() };
        let init = if r <= positive {
            truncated_factor(&res.w, r, basis)
        } else {
            padded_factor(&res.w, r, floor, basis)
        };
        let init = init.map_err(at(Stage::Refine))?;
        let refined = gauss_newton_refine_with(cs, &init, cfg.gn_tol * scale, cfg.max_gn).map_err(at(Stage::Refine))?;
        attempt.theta = Some(refined.theta);
        attempt.gn_iterations = refined.gn_iterations;
        if refined.theta > cfg.gn_accept * scale {
            attempt.outcome = format!("backward error {:.3e} above threshold", refined.theta);
            out.attempts.push(attempt);
            keep_best_refine(&mut out, refined);
            continue;
        }
        let gram = refined.factors.gram();
        let mut bound = cfg.denom_bound.clone();
        while bound <= cfg.denom_max {
            attempt.denom_bound = Some(bound.clone());
            let rat = rationalize(&gram, &bound).map_err(at(Stage::Rationalize))?;
            let proj = match project_affine_exact(&rat, cs) {
                Ok(p) => p,
                Err(e) => return Err(StageError { stage: Stage::Project, source: e }),
            };
            let cert = certify(f, &proj, basis).map_err(at(Stage::Certify))?;
            if cert.exact {
                attempt.outcome = "exact".into();
                out.attempts.push(attempt);
                out.refine = Some(refined);
                out.certificate = Some(cert);
                out.rank = Some(r);
                out.denom_bound = Some(bound);
                return Ok(out);
            }
            attempt.outcome = match &cert.failure {
                Some(CertificateFailure::NotPsd { value, .. }) => {
                    format!("not PSD, margin {:.3e}", rational_to_f64(&value.abs()))
                }
                Some(other) => other.to_string(),
                None => "not exact".into(),
            };
            if out.certificate.is_none() {
                out.certificate = Some(cert);
                out.rank = Some(r);
                out.denom_bound = Some(bound.clone());
            }
            bound *= &cfg.denom_step;
        }
        out.attempts.push(attempt);
        keep_best_refine(&mut out, refined);
    }
    interior_fallback(f, basis, cs, res, cfg, &mut out)?;
    Ok(out)
}

/// Shifts the best available Gram matrix towards the interior of the PSD
/// cone before rounding. Low-rank points lying in a continuous family rarely
/// round onto the face; a strictly feasible point survives rounding and
/// projection whenever one exists.
fn interior_fallback(
    f: &Polynomial,
    basis: &MonomialBasis,
    cs: &ConstraintSystem,
    res: &SolveResult,
    cfg: &PipelineConfig,
    out: &mut PipelineOutcome,
) -> Result<(), StageError> {
    let base = out.refine.as_ref().filter(|r| r.theta <= cfg.gn_accept * cs.b_norm().max(1.0)).map(|r| r.factors.gram());
    let base = base.unwrap_or_else(|| res.w.clone());
    let top = res.eigenvalues.first().copied().unwrap_or(1.0).max(1e-12);
    for k in 1..=6 {
        let delta = top * 10f64.powi(-k);
        let shifted = base.add(&crate::spectral::SymMatrix::identity(basis.len()).scale(delta));
        let rat = rationalize(&shifted, &cfg.denom_bound).map_err(at(Stage::Rationalize))?;
        let proj = project_affine_exact(&rat, cs).map_err(at(Stage::Project))?;
        let cert = certify(f, &proj, basis).map_err(at(Stage::Certify))?;
        let exact = cert.exact;
        out.attempts.push(RankAttempt {
            rank: basis.len(),
            theta: None,
            gn_iterations: 0,
            denom_bound: Some(cfg.denom_bound.clone()),
            outcome: format!("interior shift {delta:.1e}: {}", if exact { "exact" } else { "not exact" }),
        });
        if exact {
            out.rank = Some(cert.weights.len());
            out.denom_bound = Some(cfg.denom_bound.clone());
            out.certificate = Some(cert);
            return Ok(());
        }
    }
    Ok(())
}

fn keep_best_refine(out: &mut PipelineOutcome, refined: RefineResult) {
    if out.refine.as_ref().is_none_or(|r| refined.theta < r.theta) {
        out.refine = Some(refined);
    }
}
