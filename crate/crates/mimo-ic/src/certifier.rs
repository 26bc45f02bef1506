//! Numeric verdicts: SVD rank with one relative threshold, per-receiver
//! decodability reports, feasibility grids and a high-SNR slope estimate.
//!
//! Decodability at receiver `j` means the desired image `H_jj V_j` has full
//! column rank and meets the interference span only at zero. The joint rank
//! is measured on orthonormal bases of the two spans, so it reflects the
//! angle between them rather than the conditioning of the beamformers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::{self, BeamformingSolution, BuildOptions, Mode, SchemeDescriptor, SchemeKind};
use crate::channel::{ChannelSet, Flavor};
use crate::dof_core::{self, AntennaConfig, Rational};
use crate::linalg::{self, CMat, C64};
use crate::{Error, Result};

pub use crate::linalg::DEFAULT_REL_TOL;

/// Master seed used when none is given.
pub const DEFAULT_MASTER_SEED: u64 = 20_260_101;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    /// Descending.
    pub singular_values: Vec<f64>,
    pub tol_used: f64,
    pub rank: usize,
}

/// SVD rank with threshold `rel_tol * max(s1, tiny) * max(rows, cols)`.
pub fn numeric_rank(a: &CMat, rel_tol: f64) -> Result<RankReport> {
    if !linalg::is_finite(a) {
        return Err(Error::NonFinite);
    }
    let singular_values = linalg::singular_values(a);
    let s1 = singular_values.first().copied().unwrap_or(0.0);
    let tol_used = linalg::rank_tol(s1, a.nrows(), a.ncols(), rel_tol);
    let rank = singular_values.iter().filter(|&&s| s > tol_used).count();
    Ok(RankReport { singular_values, tol_used, rank })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RxReport {
    pub rx: usize,
    pub demanded: usize,
    pub interference_dim: usize,
    pub desired_dim: usize,
    pub joint_rank: usize,
    /// Largest relative misalignment over the aligned pairs at this receiver.
    pub residual: f64,
    /// Rank report of `[orth(desired), orth(interference)]`.
    pub joint: RankReport,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub per_rx: Vec<RxReport>,
    pub pass: bool,
    pub scheme: SchemeDescriptor,
    pub rel_tol: f64,
    pub align_tol: f64,
}

fn rx_projection(sol: &BeamformingSolution, j: usize) -> Option<&CMat> {
    sol.rx_projections.as_ref().map(|q| &q[j])
}

fn image(ch: &ChannelSet, sol: &BeamformingSolution, j: usize, i: usize) -> CMat {
    let a = ch.h(j, i) * &sol.v[i];
    match rx_projection(sol, j) {
        Some(q) => q * a,
        None => a,
    }
}

fn check_shapes(ch: &ChannelSet, sol: &BeamformingSolution) -> Result<()> {
    if sol.v.iter().any(|v| !linalg::is_finite(v)) {
        return Err(Error::NonFinite);
    }
    for i in 0..3 {
        if sol.v[i].nrows() != ch.tx_dim() {
            return Err(Error::ShapeMismatch(format!(
                "beamformer {i} has {} rows, transmit dimension is {}",
                sol.v[i].nrows(),
                ch.tx_dim()
            )));
        }
        if sol.v[i].ncols() != sol.demand[i] {
            return Err(Error::ShapeMismatch(format!(
                "beamformer {i} has {} columns, demand is {}",
                sol.v[i].ncols(),
                sol.demand[i]
            )));
        }
        if let Some(q) = rx_projection(sol, i) {
            if q.ncols() != ch.rx_dim() {
                return Err(Error::ShapeMismatch(format!(
                    "receive projection {i} has {} columns, receive dimension is {}",
                    q.ncols(),
                    ch.rx_dim()
                )));
            }
        }
    }
    for p in &sol.aligned {
        for b in [p.a, p.b] {
            if b.tx > 2 || b.start + b.width > sol.v[b.tx].ncols() {
                return Err(Error::ShapeMismatch(format!("aligned block {b:?} out of range")));
            }
        }
    }
    Ok(())
}

/// Rank verdict with the default threshold.
pub fn verify_solution(ch: &ChannelSet, sol: &BeamformingSolution) -> Result<AlignmentReport> {
    verify_solution_with_tol(ch, sol, DEFAULT_REL_TOL)
}

/// Per-receiver interference dimension, desired dimension, joint rank and
/// alignment residual. The alignment tolerance equals `rel_tol`.
pub fn verify_solution_with_tol(ch: &ChannelSet, sol: &BeamformingSolution, rel_tol: f64) -> Result<AlignmentReport> {
    check_shapes(ch, sol)?;
    let align_tol = rel_tol;
    let mut per_rx = Vec::with_capacity(3);
    for j in 0..3 {
        let desired = image(ch, sol, j, j);
        let rows = desired.nrows();
        let others: Vec<CMat> = (0..3).filter(|&i| i != j).map(|i| image(ch, sol, j, i)).collect();
        let refs: Vec<&CMat> = others.iter().collect();
        let interference = linalg::hstack(rows, &refs);
        // One absolute threshold per receiver, scaled by everything it hears,
        // so leakage at round-off level does not count as a dimension.
        let received = linalg::hstack(rows, &[&desired, &interference]);
        let s1 = linalg::singular_values(&received).first().copied().unwrap_or(0.0);
        let tol = linalg::rank_tol(s1, rows, received.ncols(), rel_tol);
        let d_basis = linalg::column_space_abs(&desired, tol);
        let i_basis = linalg::column_space_abs(&interference, tol);
        let joint = numeric_rank(&linalg::hstack(rows, &[&d_basis, &i_basis]), rel_tol)?;
        let mut residual = 0.0_f64;
        for p in sol.aligned.iter().filter(|p| p.rx == j) {
            let block = |b: &alignment::ColumnBlock| {
                let a = ch.h(j, b.tx) * sol.v[b.tx].columns(b.start, b.width);
                match rx_projection(sol, j) {
                    Some(q) => q * a,
                    None => a,
                }
            };
            let (a, b) = (block(&p.a), block(&p.b));
            residual = residual
                .max(linalg::subspace_residual(&a, &b, rel_tol))
                .max(linalg::subspace_residual(&b, &a, rel_tol));
        }
        let (interference_dim, desired_dim) = (i_basis.ncols(), d_basis.ncols());
        let pass = joint.rank == interference_dim + desired_dim
            && desired_dim == sol.demand[j]
            && residual <= align_tol;
        per_rx.push(RxReport {
            rx: j,
            demanded: sol.demand[j],
            interference_dim,
            desired_dim,
            joint_rank: joint.rank,
            residual,
            joint,
            pass,
        });
    }
    let pass = per_rx.iter().all(|r| r.pass);
    Ok(AlignmentReport { per_rx, pass, scheme: sol.scheme.clone(), rel_tol, align_tol })
}

/// Seed of attempt `k` at cell `(m_t, m_r)`.
pub fn cell_seed(master: u64, m_t: usize, m_r: usize, k: usize) -> u64 {
    linalg::mix_seed(&[master, m_t as u64, m_r as u64, k as u64])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridOptions {
    pub master_seed: u64,
    pub seeds_per_cell: usize,
    pub rel_tol: f64,
    /// Worker threads; `None` uses the global rayon pool.
    pub jobs: Option<usize>,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self { master_seed: DEFAULT_MASTER_SEED, seeds_per_cell: 3, rel_tol: DEFAULT_REL_TOL, jobs: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub m_t: usize,
    pub m_r: usize,
    pub dof_star: Rational,
    /// Demanded streams per user.
    pub d: usize,
    pub scheme: SchemeKind,
    pub pass: bool,
    /// Attempts made; stops at the first passing seed.
    pub seeds_tried: usize,
    /// Whether `d <= floor(dof_star)`.
    pub predicted: bool,
    /// Construction error or failing report of the last attempt.
    pub error: Option<String>,
    pub failure: Option<AlignmentReport>,
}

impl GridCell {
    pub fn agrees(&self) -> bool {
        self.pass == self.predicted
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub max_m: usize,
    pub max_n: usize,
    pub options: GridOptions,
    pub cells: Vec<GridCell>,
}

impl GridResult {
    pub fn all_pass(&self) -> bool {
        self.cells.iter().all(|c| c.pass)
    }

    pub fn mismatches(&self) -> Vec<&GridCell> {
        self.cells.iter().filter(|c| !c.agrees()).collect()
    }

    pub fn cell(&self, m_t: usize, m_r: usize) -> Option<&GridCell> {
        self.cells.iter().find(|c| c.m_t == m_t && c.m_r == m_r)
    }

    /// One row per cell: `m_t, m_r, dof_star_num, dof_star_den, d, scheme,
    /// verdict, seeds`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["m_t", "m_r", "dof_star_num", "dof_star_den", "d", "scheme", "verdict", "seeds"])?;
        for c in &self.cells {
            w.write_record([
                c.m_t.to_string(),
                c.m_r.to_string(),
                c.dof_star.numer().to_string(),
                c.dof_star.denom().to_string(),
                c.d.to_string(),
                c.scheme.name().to_string(),
                if c.pass { "pass" } else { "fail" }.to_string(),
                c.seeds_tried.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Tries `seeds_per_cell` seeds of the construction without symbol
/// extensions for `d` streams; passes if any attempt verifies.
pub fn evaluate_cell(cfg: AntennaConfig, d: usize, opts: &GridOptions) -> GridCell {
    let predicted = dof_core::is_linear_feasible(cfg, d as u64).linear_feasible;
    let mut cell = GridCell {
        m_t: cfg.m_t(),
        m_r: cfg.m_r(),
        dof_star: dof_core::dof_star(cfg),
        d,
        scheme: SchemeKind::Trivial,
        pass: false,
        seeds_tried: 0,
        predicted,
        error: None,
        failure: None,
    };
    for k in 0..opts.seeds_per_cell.max(1) {
        cell.seeds_tried = k + 1;
        let seed = cell_seed(opts.master_seed, cfg.m_t(), cfg.m_r(), k);
        let ch = ChannelSet::generate(cfg.m_t(), cfg.m_r(), Flavor::Constant, seed).expect("valid config");
        let build = BuildOptions { seed, rel_tol: opts.rel_tol };
        match alignment::construct_feasibility_with_demand(&ch, d, &build) {
            Err(e) => cell.error = Some(e.to_string()),
            Ok(c) => {
                cell.scheme = c.solution.scheme.kind;
                match verify_solution_with_tol(&c.channel, &c.solution, opts.rel_tol) {
                    Err(e) => cell.error = Some(e.to_string()),
                    Ok(rep) if rep.pass => {
                        cell.pass = true;
                        cell.error = None;
                        cell.failure = None;
                        break;
                    }
                    Ok(rep) => cell.failure = Some(rep),
                }
            }
        }
    }
    cell
}

fn run_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("thread pool")
            .install(f),
        None => f(),
    }
}

/// Every cell `1 <= m_t <= max_m`, `1 <= m_r <= max_n` with demand
/// `floor(dof_star)`, using the default options and `seeds_per_cell`.
pub fn feasibility_grid(max_m: usize, max_n: usize, seeds_per_cell: usize) -> GridResult {
    let opts = GridOptions { seeds_per_cell, ..GridOptions::default() };
    feasibility_grid_with(max_m, max_n, &opts)
}

pub fn feasibility_grid_with(max_m: usize, max_n: usize, opts: &GridOptions) -> GridResult {
    let coords: Vec<(usize, usize)> = (1..=max_m).flat_map(|t| (1..=max_n).map(move |r| (t, r))).collect();
    let cells = run_pool(opts.jobs, || {
        coords
            .par_iter()
            .map(|&(t, r)| {
                let cfg = AntennaConfig::new(t, r).expect("positive");
                evaluate_cell(cfg, dof_core::dof_floor(cfg) as usize, opts)
            })
            .collect()
    });
    GridResult { max_m, max_n, options: opts.clone(), cells }
}

/// Outcome of the symbol-extension scheme at one cell under both flavors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeCell {
    pub m_t: usize,
    pub m_r: usize,
    pub extension: usize,
    pub per_user: usize,
    pub constant_pass: bool,
    pub varying_pass: bool,
}

impl TimeCell {
    /// Constant channels fail but time-varying ones pass.
    pub fn needs_time_variation(&self) -> bool {
        !self.constant_pass && self.varying_pass
    }
}

/// Runs the symbol-extension scheme on every cell with `m < n < ... `,
/// `m/n > 1/2` and non-integral `dof_star`, under constant and time-varying
/// channels, passing a flavor if any of `seeds_per_cell` seeds verifies.
pub fn time_extension_survey(max: usize, opts: &GridOptions) -> Vec<TimeCell> {
    let coords: Vec<(usize, usize)> = (1..=max)
        .flat_map(|n| (1..n).map(move |m| (m, n)))
        .filter(|&(m, n)| 2 * m > n)
        .filter(|&(m, n)| !dof_core::dof_star(AntennaConfig::new(m, n).expect("positive")).is_integer())
        .collect();
    run_pool(opts.jobs, || {
        coords
            .par_iter()
            .map(|&(m, n)| {
                let mut out = TimeCell { m_t: m, m_r: n, extension: 0, per_user: 0, constant_pass: false, varying_pass: false };
                for flavor in [Flavor::Constant, Flavor::TimeVarying] {
                    for k in 0..opts.seeds_per_cell.max(1) {
                        let seed = cell_seed(opts.master_seed ^ 0x7135, m, n, k);
                        let ch = ChannelSet::generate(m, n, flavor, seed).expect("valid config");
                        let build = BuildOptions { seed, rel_tol: opts.rel_tol };
                        let Ok(c) = alignment::construct_time_extension(&ch, &build) else { continue };
                        out.extension = c.channel.extension();
                        out.per_user = c.solution.demand[0];
                        let ok = verify_solution_with_tol(&c.channel, &c.solution, opts.rel_tol)
                            .map(|r| r.pass)
                            .unwrap_or(false);
                        if ok {
                            match flavor {
                                Flavor::Constant => out.constant_pass = true,
                                Flavor::TimeVarying => out.varying_pass = true,
                            }
                            break;
                        }
                    }
                }
                out
            })
            .collect()
    })
}

/// Sum rates and the least-squares slope against `log2(snr)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeEstimate {
    pub snr_db: Vec<f64>,
    /// Sum over users, per channel use.
    pub sum_rates: Vec<f64>,
    pub slope: f64,
}

/// Sum rate per channel use with linear MMSE receivers. Every stream gets
/// power `snr * T / d_i` along a unit-norm beamformer column, noise is unit
/// variance per receive antenna and slot (passed through any receive
/// projection).
pub fn sum_rate(ch: &ChannelSet, sol: &BeamformingSolution, snr: f64) -> Result<f64> {
    check_shapes(ch, sol)?;
    let t = ch.extension() as f64;
    let mut total = 0.0;
    for j in 0..3 {
        let q = rx_projection(sol, j).cloned().unwrap_or_else(|| CMat::identity(ch.rx_dim(), ch.rx_dim()));
        let mut streams: Vec<(usize, linalg::CVec)> = Vec::new();
        for i in 0..3 {
            if sol.demand[i] == 0 {
                continue;
            }
            let power = snr * t / sol.demand[i] as f64;
            let img = &q * ch.h(j, i);
            for col in sol.v[i].column_iter() {
                let n = col.norm();
                if n == 0.0 {
                    continue;
                }
                let g = &img * col * C64::new(power.sqrt() / n, 0.0);
                streams.push((i, g));
            }
        }
        let mut cov = &q * q.adjoint();
        for (_, g) in &streams {
            cov += g * g.adjoint();
        }
        for (i, g) in &streams {
            if *i != j {
                continue;
            }
            let rest = &cov - g * g.adjoint();
            let x = rest
                .lu()
                .solve(g)
                .ok_or_else(|| Error::DegenerateChannel("singular interference-plus-noise covariance".into()))?;
            let sinr = (g.adjoint() * x)[(0, 0)].re.max(0.0);
            total += (1.0 + sinr).log2();
        }
    }
    Ok(total / t)
}

/// Least-squares slope of the sum rate against `log2(snr)`. Works for any
/// solution; a scheme that fails verification shows up as a lower slope.
pub fn estimate_dof_slope(ch: &ChannelSet, sol: &BeamformingSolution, snr_db: &[f64]) -> Result<SlopeEstimate> {
    if snr_db.len() < 2 {
        return Err(Error::InvalidArgument("need at least two SNR points".into()));
    }
    let sum_rates = snr_db
        .iter()
        .map(|db| sum_rate(ch, sol, 10f64.powf(db / 10.0)))
        .collect::<Result<Vec<_>>>()?;
    let x: Vec<f64> = snr_db.iter().map(|db| db / 10.0 * 10f64.log2()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = sum_rates.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(&sum_rates).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    Ok(SlopeEstimate { snr_db: snr_db.to_vec(), sum_rates, slope: sxy / sxx })
}

/// Builds the scheme selected by `mode` on a fresh channel and verifies it.
pub fn construct_and_verify(
    cfg: AntennaConfig,
    mode: Mode,
    flavor: Flavor,
    seed: u64,
    rel_tol: f64,
) -> Result<(alignment::Construction, AlignmentReport)> {
    let ch = ChannelSet::generate(cfg.m_t(), cfg.m_r(), flavor, seed)?;
    let c = alignment::construct(&ch, mode, &BuildOptions { seed, rel_tol })?;
    let rep = verify_solution_with_tol(&c.channel, &c.solution, rel_tol)?;
    Ok((c, rep))
}
