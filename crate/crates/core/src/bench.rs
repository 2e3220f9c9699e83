//! Planted random instances and the experiment harness.
//!
//! An instance samples an integer `n x r` factor `L`, sets `W = L L^T`, and
//! expands `f = mon^T W mon` exactly, so a rank-`r` PSD solution is known.

use std::time::Instant;

use num_traits::{ToPrimitive, Zero};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grammap::{build_constraints, ConstraintSystem, MonomialBasis};
use crate::pipeline::{certify_from_solution, PipelineConfig};
use crate::polyalg::{Polynomial, Rational};
use crate::solver::{solve, EigenMode, SolverConfig, Variant};

/// Default cap on `n`; larger sizes need `allow_large`.
pub const DESK_MAX_N: usize = 500;
const MAX_VARS: usize = 200;

/// How the monomial vector of a random instance is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisMode {
    /// First `n` monomials of degree `<= 2` in the fewest variables that suffice.
    #[default]
    Leading,
    /// `n` monomials drawn at random from degree `<= 2` monomials in twice
    /// as many candidates, which lowers the freedom ratio.
    Sparse,
}

#[derive(Clone, Debug)]
pub struct InstanceOptions {
    pub entry_bound: i64,
    pub basis_mode: BasisMode,
    pub allow_large: bool,
}

impl Default for InstanceOptions {
    fn default() -> Self {
        InstanceOptions { entry_bound: 5, basis_mode: BasisMode::Leading, allow_large: false }
    }
}

#[derive(Clone, Debug)]
pub struct BenchInstance {
    pub n: usize,
    pub r: usize,
    pub factor_l: Vec<Vec<Rational>>,
    pub w_true: Vec<Vec<Rational>>,
    pub basis: MonomialBasis,
    pub f: Polynomial,
    pub cs: ConstraintSystem,
    pub p: usize,
    pub fr: f64,
    pub seed: u64,
}

impl BenchInstance {
    pub fn w_true_f64(&self) -> crate::spectral::SymMatrix {
        crate::spectral::SymMatrix::from_lower_fn(self.n, |i, j| self.w_true[i][j].to_f64().unwrap_or(f64::NAN))
    }
}

/// `r (2n - r + 1) / 2` degrees of freedom of a rank-`r` symmetric matrix over `p`.
pub fn freedom_ratio(n: usize, r: usize, p: usize) -> f64 {
    let dr = (r * (2 * n - r + 1)) as f64 / 2.0;
    dr / p as f64
}

fn binom(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

fn vars_for(n: usize, factor: usize) -> Result<usize> {
    (1..=MAX_VARS)
        .find(|&s| binom(s + 2, 2) >= factor * n)
        .ok_or_else(|| Error::InvalidArgument(format!("n = {n} needs more than {MAX_VARS} variables")))
}

/// Basis used for a random instance of size `n`.
pub fn instance_basis(n: usize, mode: BasisMode, rng: &mut ChaCha8Rng) -> Result<MonomialBasis> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    match mode {
        BasisMode::Leading => {
            let s = vars_for(n, 1)?;
            let full = MonomialBasis::full(s, 2);
            MonomialBasis::new(s, full.monomials()[..n].to_vec())
        }
        BasisMode::Sparse => {
            let s = vars_for(n, 2)?;
            let full = MonomialBasis::full(s, 2);
            let mut idx = sample(rng, full.len(), n).into_vec();
            idx.sort_unstable();
            MonomialBasis::new(s, idx.into_iter().map(|i| full.get(i).clone()).collect())
        }
    }
}

/// Planted instance from an explicit factor `L` (rows indexed by basis).
pub fn instance_from_factor(basis: MonomialBasis, factor_l: Vec<Vec<Rational>>, seed: u64) -> Result<BenchInstance> {
    let n = basis.len();
    if factor_l.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: factor_l.len() });
    }
    let r = factor_l.first().map_or(0, Vec::len);
    if factor_l.iter().any(|row| row.len() != r) || r == 0 {
        return Err(Error::InvalidArgument("factor rows must share a positive length".into()));
    }
    let mut w = vec![vec![Rational::zero(); n]; n];
    for i in 0..n {
        for j in 0..=i {
            let v: Rational = (0..r).map(|k| &factor_l[i][k] * &factor_l[j][k]).sum();
            w[i][j] = v.clone();
            w[j][i] = v;
        }
    }
    let f = basis.quadratic_form(&w);
    let cs = build_constraints(&f, &basis)?;
    let p = cs.p();
    Ok(BenchInstance { n, r, fr: freedom_ratio(n, r, p), factor_l, w_true: w, basis, f, cs, p, seed })
}

/// Random planted instance with integer factor entries in `[-entry_bound, entry_bound]`.
pub fn random_instance(n: usize, r: usize, seed: u64, entry_bound: i64) -> Result<BenchInstance> {
    random_instance_with(n, r, seed, &InstanceOptions { entry_bound, ..Default::default() })
}

pub fn random_instance_with(n: usize, r: usize, seed: u64, opts: &InstanceOptions) -> Result<BenchInstance> {
    if n > DESK_MAX_N && !opts.allow_large {
        return Err(Error::InvalidArgument(format!("n = {n} exceeds the desk limit {DESK_MAX_N}; enable allow_large")));
    }
    if r == 0 || r > n {
        return Err(Error::InvalidArgument(format!("rank r = {r} outside [1, {n}]")));
    }
    if opts.entry_bound < 1 {
        return Err(Error::InvalidArgument("entry_bound must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let basis = instance_basis(n, opts.basis_mode, &mut rng)?;
    let factor_l: Vec<Vec<Rational>> = (0..n)
        .map(|_| {
            (0..r)
                .map(|_| Rational::from_integer(rng.gen_range(-opts.entry_bound..=opts.entry_bound).into()))
                .collect()
        })
        .collect();
    instance_from_factor(basis, factor_l, seed)
}

/// Experiment protocol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentMode {
    /// Single stage at `mu_bar`, full decomposition every iteration.
    #[default]
    Fixed,
    /// Default continuation schedule with partial decompositions.
    Continuation,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Case {
    pub n: usize,
    pub r: usize,
}

/// Experiment description, usually read from JSON.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub mode: ExperimentMode,
    #[serde(default)]
    pub cases: Vec<Case>,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default = "default_eps")]
    pub epsilon: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub basis: BasisMode,
    #[serde(default = "default_entry_bound")]
    pub entry_bound: i64,
    /// Attempt an exact certificate after each solve.
    #[serde(default)]
    pub certify: bool,
    /// When `false`, `time_s` is written as 0 so reports are byte-stable.
    #[serde(default = "default_true")]
    pub record_time: bool,
    #[serde(default)]
    pub allow_large: bool,
}

fn default_variants() -> Vec<Variant> {
    vec![Variant::AfpcBb]
}
fn default_eps() -> f64 {
    1e-3
}
fn default_max_iter() -> usize {
    2000
}
fn default_entry_bound() -> i64 {
    5
}
fn default_true() -> bool {
    true
}

impl ExperimentSpec {
    pub fn empty() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }

    /// Named presets: `table1-desk`, `table2-desk`, `table5-desk`.
    pub fn preset(name: &str) -> Result<Self> {
        let mut s = Self::empty();
        match name {
            "table1-desk" => {
                s.mode = ExperimentMode::Fixed;
                s.cases = vec![Case { n: 100, r: 10 }];
                s.variants = Variant::ALL.to_vec();
                s.seeds = (1..=5).collect();
                s.epsilon = 5e-3;
            }
            "table2-desk" => {
                s.mode = ExperimentMode::Continuation;
                s.cases = vec![Case { n: 100, r: 10 }, Case { n: 200, r: 10 }];
                s.seeds = (1..=3).collect();
                s.epsilon = 1e-3;
            }
            "table5-desk" => {
                s.mode = ExperimentMode::Continuation;
                s.cases = vec![Case { n: 50, r: 5 }];
                s.seeds = (1..=5).collect();
                s.epsilon = 1e-3;
                s.basis = BasisMode::Sparse;
                s.certify = true;
            }
            other => return Err(Error::InvalidArgument(format!("unknown preset `{other}`"))),
        }
        Ok(s)
    }

    pub fn solver_config(&self, variant: Variant) -> SolverConfig {
        let base = SolverConfig { variant, epsilon: self.epsilon, max_iter: self.max_iter, ..Default::default() };
        match self.mode {
            ExperimentMode::Fixed => SolverConfig { continuation: false, eigen_mode: EigenMode::Full, ..base },
            ExperimentMode::Continuation => base,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub variant: Variant,
    pub n: usize,
    pub r: usize,
    pub p: usize,
    #[serde(rename = "FR")]
    pub fr: f64,
    pub seed: u64,
    pub iterations: usize,
    pub time_s: f64,
    pub rel_err: f64,
    pub rank: usize,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub squares: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Aggregate {
    pub variant: Variant,
    pub n: usize,
    pub r: usize,
    pub runs: usize,
    pub median_iterations: f64,
    pub median_rel_err: f64,
    pub median_time_s: f64,
    pub converged: usize,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct BenchReport {
    pub records: Vec<RunRecord>,
    pub aggregate: Vec<Aggregate>,
}

pub const CSV_HEADER: &str = "variant,n,r,p,FR,seed,iterations,time_s,rel_err,rank,converged";

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            s.push_str(&format!(
                "{},{},{},{},{:.4},{},{},{:.6},{:.6e},{},{}\n",
                r.variant, r.n, r.r, r.p, r.fr, r.seed, r.iterations, r.time_s, r.rel_err, r.rank, r.converged
            ));
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn median_iterations(&self, variant: Variant, n: usize, r: usize) -> Option<f64> {
        self.aggregate
            .iter()
            .find(|a| a.variant == variant && a.n == n && a.r == r)
            .map(|a| a.median_iterations)
    }

    fn aggregate_records(records: &[RunRecord]) -> Vec<Aggregate> {
        let mut keys: Vec<(Variant, usize, usize)> = Vec::new();
        for r in records {
            let k = (r.variant, r.n, r.r);
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        keys.into_iter()
            .map(|(variant, n, r)| {
                let rs: Vec<&RunRecord> = records
                    .iter()
                    .filter(|x| x.variant == variant && x.n == n && x.r == r && x.error.is_none())
                    .collect();
                Aggregate {
                    variant,
                    n,
                    r,
                    runs: rs.len(),
                    median_iterations: median(rs.iter().map(|x| x.iterations as f64).collect()),
                    median_rel_err: median(rs.iter().map(|x| x.rel_err).collect()),
                    median_time_s: median(rs.iter().map(|x| x.time_s).collect()),
                    converged: rs.iter().filter(|x| x.converged).count(),
                }
            })
            .collect()
    }
}

struct Job {
    variant: Variant,
    case: Case,
    seed: u64,
}

fn run_one(spec: &ExperimentSpec, job: &Job) -> RunRecord {
    let mut rec = RunRecord {
        variant: job.variant,
        n: job.case.n,
        r: job.case.r,
        p: 0,
        fr: f64::NAN,
        seed: job.seed,
        iterations: 0,
        time_s: 0.0,
        rel_err: f64::NAN,
        rank: 0,
        converged: false,
        exact: None,
        squares: None,
        error: None,
    };
    let opts = InstanceOptions { entry_bound: spec.entry_bound, basis_mode: spec.basis, allow_large: spec.allow_large };
    let inst = match random_instance_with(job.case.n, job.case.r, job.seed, &opts) {
        Ok(i) => i,
        Err(e) => {
            rec.error = Some(e.to_string());
            return rec;
        }
    };
    rec.p = inst.p;
    rec.fr = inst.fr;
    let start = Instant::now();
    let res = match solve(&inst.cs, &spec.solver_config(job.variant)) {
        Ok(r) => r,
        Err(e) => {
            rec.error = Some(e.to_string());
            return rec;
        }
    };
    if spec.record_time {
        rec.time_s = start.elapsed().as_secs_f64();
    }
    rec.iterations = res.iterations;
    rec.rel_err = res.rel_err;
    rec.rank = res.rank;
    rec.converged = res.converged;
    if spec.certify {
        match certify_from_solution(&inst.f, &inst.basis, &inst.cs, &res, &PipelineConfig::default()) {
            Ok(out) => {
                rec.exact = Some(out.certificate.as_ref().is_some_and(|c| c.exact));
                rec.squares = out.certificate.as_ref().map(|c| c.weights.len());
            }
            Err(e) => {
                rec.exact = Some(false);
                rec.error = Some(e.to_string());
            }
        }
    }
    rec
}

/// Runs every `(case, variant, seed)` combination on a pool of `threads`
/// workers. Records keep the spec's order regardless of scheduling.
pub fn run_experiment(spec: &ExperimentSpec, threads: usize) -> Result<BenchReport> {
    for c in &spec.cases {
        if c.n > DESK_MAX_N && !spec.allow_large {
            return Err(Error::InvalidArgument(format!("n = {} exceeds the desk limit {DESK_MAX_N}; set allow_large", c.n)));
        }
    }
    let jobs: Vec<Job> = spec
        .cases
        .iter()
        .flat_map(|c| {
            spec.variants.iter().flat_map(move |&v| {
                spec.seeds.iter().map(move |&s| Job { variant: v, case: c.clone(), seed: s })
            })
        })
        .collect();
    if jobs.is_empty() {
        return Ok(BenchReport::default());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let records: Vec<RunRecord> = pool.install(|| {
        use rayon::prelude::*;
        jobs.par_iter().map(|j| run_one(spec, j)).collect()
    });
    let aggregate = BenchReport::aggregate_records(&records);
    Ok(BenchReport { records, aggregate })
}
