//! Transmit beamformers built from subspace alignment chains.
//!
//! A chain of length `p` starting at transmitter `o` visits transmitters
//! `o, o-1, o-2, ...` (mod 3). Consecutive subspaces align at the receiver of
//! the third user, `tx + 1`, which gives the staircase system
//!
//! ```text
//! [ H_{r0,t0}  -H_{r0,t1}                ] [V_0]
//! [            H_{r1,t1}  -H_{r1,t2}     ] [V_1] = 0
//! [                          ...         ] [...]
//! ```
//!
//! whose null space holds the chain. Schemes are written for `m_t < m_r`;
//! the other orientation is solved on the reciprocal network and mapped
//! back through the reciprocal receive filters.

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelSet, Flavor, Links};
use crate::dof_core::{self, AntennaConfig, Branch, Segment};
use crate::linalg::{self, CMat, C64, DEFAULT_REL_TOL};
use crate::matrix_json::MatrixJson;
use crate::{Error, Result};

/// One subspace alignment chain.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub origin: usize,
    pub length: usize,
    pub sub_dim: usize,
    pub tx_seq: Vec<usize>,
    /// `rx_seq[r]` is where positions `r` and `r + 1` align.
    pub rx_seq: Vec<usize>,
}

/// Chain of length `p` starting at transmitter `origin` (0, 1 or 2) with
/// one-dimensional subspaces.
pub fn chain_spec(origin: usize, p: usize) -> Result<ChainSpec> {
    chain_spec_with_dim(origin, p, 1)
}

pub fn chain_spec_with_dim(origin: usize, p: usize, sub_dim: usize) -> Result<ChainSpec> {
    if origin > 2 {
        return Err(Error::InvalidArgument(format!("user index {origin} out of range")));
    }
    if p == 0 {
        return Err(Error::InvalidArgument("chain length must be positive".into()));
    }
    let mut tx_seq = vec![origin];
    for _ in 1..p {
        let t = *tx_seq.last().expect("nonempty");
        tx_seq.push((t + 2) % 3);
    }
    let rx_seq = tx_seq[..p - 1].iter().map(|t| (t + 1) % 3).collect();
    Ok(ChainSpec { origin, length: p, sub_dim, tx_seq, rx_seq })
}

/// Staircase matrix of one chain.
#[derive(Clone, Debug)]
pub struct StackedSystem {
    pub matrix: CMat,
    pub spec: ChainSpec,
    pub tx_dim: usize,
    pub rx_dim: usize,
    /// `(column offset, transmitter)` of each chain position.
    pub block_layout: Vec<(usize, usize)>,
}

fn link_dims(links: &Links) -> Result<(usize, usize)> {
    let (rows, cols) = links[0][0].shape();
    for row in links {
        for a in row {
            if a.shape() != (rows, cols) {
                return Err(Error::ShapeMismatch("links differ in shape".into()));
            }
        }
    }
    Ok((cols, rows))
}

pub fn build_stacked(links: &Links, spec: &ChainSpec) -> Result<StackedSystem> {
    if spec.length < 2 {
        return Err(Error::InvalidArgument("a stacked system needs a chain of length >= 2".into()));
    }
    let (t, r) = link_dims(links)?;
    let p = spec.length;
    let mut matrix = CMat::zeros((p - 1) * r, p * t);
    for k in 0..p - 1 {
        let rx = spec.rx_seq[k];
        matrix.view_mut((k * r, k * t), (r, t)).copy_from(&links[rx][spec.tx_seq[k]]);
        matrix
            .view_mut((k * r, (k + 1) * t), (r, t))
            .copy_from(&(-&links[rx][spec.tx_seq[k + 1]]));
    }
    let block_layout = (0..p).map(|k| (k * t, spec.tx_seq[k])).collect();
    Ok(StackedSystem { matrix, spec: spec.clone(), tx_dim: t, rx_dim: r, block_layout })
}

/// Null space of the staircase, mixed down to `d0` columns by a seeded
/// complex Gaussian combiner, then split into one `tx_dim x d0` block per
/// chain position.
pub fn solve_chain(sys: &StackedSystem, d0: usize, combiner_seed: u64, rel_tol: f64) -> Result<Vec<CMat>> {
    let basis = linalg::null_space_unscaled(&sys.matrix, rel_tol);
    if basis.ncols() < d0 {
        return Err(Error::InsufficientNullSpace { needed: d0, found: basis.ncols() });
    }
    let mut rng = linalg::rng_from(combiner_seed);
    let mix = linalg::complex_gaussian(&mut rng, basis.ncols(), d0);
    let x = basis * mix;
    Ok((0..sys.spec.length).map(|k| x.rows(k * sys.tx_dim, sys.tx_dim).into_owned()).collect())
}

/// Which construction produced a solution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    /// No streams requested.
    Trivial,
    Ratio,
    Spatial,
    TimeExtension,
    Feasibility,
    ZeroForcing,
    /// Closed-loop alignment for `m_t = m_r`.
    Square,
}

impl SchemeKind {
    pub fn name(&self) -> &'static str {
        match self {
            SchemeKind::Trivial => "none",
            SchemeKind::Ratio => "ratio",
            SchemeKind::Spatial => "spatial",
            SchemeKind::TimeExtension => "time",
            SchemeKind::Feasibility => "feasibility",
            SchemeKind::ZeroForcing => "zero-forcing",
            SchemeKind::Square => "square",
        }
    }
}

/// A family of three chains (one per origin) of equal length and subspace
/// dimension.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainFamily {
    pub length: usize,
    pub sub_dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeDescriptor {
    pub kind: SchemeKind,
    /// Chain length parameter of ratio-type schemes.
    pub p: Option<usize>,
    /// Subspace dimension of ratio-type schemes.
    pub q: Option<usize>,
    pub families: Vec<ChainFamily>,
    pub extension: usize,
    pub flavor: Flavor,
    /// Solved on the reciprocal network.
    pub reciprocal: bool,
    /// Receive antennas kept per receiver when trimmed.
    pub rx_kept: Option<usize>,
}

/// Columns `start..start+width` of the beamformer of transmitter `tx`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnBlock {
    pub tx: usize,
    pub start: usize,
    pub width: usize,
}

/// Two column blocks whose images must span the same subspace at `rx`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignedPair {
    pub rx: usize,
    pub a: ColumnBlock,
    pub b: ColumnBlock,
}

/// Transmit bases for the three users plus any projections.
#[derive(Clone, Debug, PartialEq)]
pub struct BeamformingSolution {
    /// `v[i]` is `tx_dim x demand[i]`, in the (extended) transmit space.
    pub v: [CMat; 3],
    pub demand: [usize; 3],
    pub scheme: SchemeDescriptor,
    /// Receive-side reduction `Q_j`, applied as `Q_j h[j][i]`.
    pub rx_projections: Option<[CMat; 3]>,
    /// Transmit-side reduction `P_i` already folded into `v[i]`.
    pub tx_projections: Option<[CMat; 3]>,
    pub aligned: Vec<AlignedPair>,
}

impl BeamformingSolution {
    /// Keeps the first `d` columns of every beamformer. Aligned pairs that
    /// lose columns are dropped.
    pub fn truncate(&self, d: usize) -> Self {
        let v = std::array::from_fn(|i| {
            let keep = d.min(self.v[i].ncols());
            self.v[i].columns(0, keep).into_owned()
        });
        let demand = std::array::from_fn(|i| d.min(self.demand[i]));
        let fits = |b: &ColumnBlock| b.start + b.width <= demand[b.tx];
        let aligned = self.aligned.iter().copied().filter(|p| fits(&p.a) && fits(&p.b)).collect();
        Self { v, demand, aligned, ..self.clone() }
    }

    pub fn to_json(&self) -> SolutionJson {
        let mats = |a: &[CMat; 3]| a.iter().map(MatrixJson::from_matrix).collect();
        SolutionJson {
            scheme: self.scheme.clone(),
            demand: self.demand,
            v: mats(&self.v),
            rx_projections: self.rx_projections.as_ref().map(mats),
            tx_projections: self.tx_projections.as_ref().map(mats),
            aligned: self.aligned.clone(),
        }
    }

    pub fn from_json(doc: &SolutionJson) -> Result<Self> {
        fn three(m: &[MatrixJson]) -> Result<[CMat; 3]> {
            if m.len() != 3 {
                return Err(Error::ShapeMismatch(format!("expected 3 matrices, got {}", m.len())));
            }
            Ok([m[0].to_matrix()?, m[1].to_matrix()?, m[2].to_matrix()?])
        }
        let v = three(&doc.v)?;
        for i in 0..3 {
            if v[i].ncols() != doc.demand[i] {
                return Err(Error::ShapeMismatch(format!(
                    "beamformer {i} has {} columns, demand is {}",
                    v[i].ncols(),
                    doc.demand[i]
                )));
            }
        }
        Ok(Self {
            v,
            demand: doc.demand,
            scheme: doc.scheme.clone(),
            rx_projections: doc.rx_projections.as_deref().map(three).transpose()?,
            tx_projections: doc.tx_projections.as_deref().map(three).transpose()?,
            aligned: doc.aligned.clone(),
        })
    }
}

/// JSON document for a [`BeamformingSolution`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionJson {
    pub scheme: SchemeDescriptor,
    pub demand: [usize; 3],
    pub v: Vec<MatrixJson>,
    pub rx_projections: Option<Vec<MatrixJson>>,
    pub tx_projections: Option<Vec<MatrixJson>>,
    pub aligned: Vec<AlignedPair>,
}

/// A channel together with beamformers designed for it. The channel may be
/// scaled, trimmed or extended relative to the request.
#[derive(Clone, Debug)]
pub struct Construction {
    pub channel: ChannelSet,
    pub solution: BeamformingSolution,
}

/// Seed for combiners and projections plus the rank threshold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BuildOptions {
    pub seed: u64,
    pub rel_tol: f64,
}

impl BuildOptions {
    pub fn new(seed: u64) -> Self {
        Self { seed, rel_tol: DEFAULT_REL_TOL }
    }

    fn sub_seed(&self, tag: u64) -> u64 {
        linalg::mix_seed(&[self.seed, 0xA11E, tag])
    }
}

/// Construction selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Auto,
    Ratio,
    Spatial,
    Time,
    Feasibility,
    Zf,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Mode::Auto),
            "ratio" => Ok(Mode::Ratio),
            "spatial" => Ok(Mode::Spatial),
            "time" => Ok(Mode::Time),
            "feasibility" => Ok(Mode::Feasibility),
            "zf" => Ok(Mode::Zf),
            other => Err(Error::InvalidArgument(format!("unknown mode {other:?}"))),
        }
    }
}

fn descriptor(kind: SchemeKind, flavor: Flavor) -> SchemeDescriptor {
    SchemeDescriptor {
        kind,
        p: None,
        q: None,
        families: Vec::new(),
        extension: 1,
        flavor,
        reciprocal: false,
        rx_kept: None,
    }
}

/// Beamformer columns collected per user.
struct Assembly {
    blocks: [Vec<CMat>; 3],
    used: [usize; 3],
    aligned: Vec<AlignedPair>,
}

impl Assembly {
    fn new() -> Self {
        Self { blocks: Default::default(), used: [0; 3], aligned: Vec::new() }
    }

    fn push(&mut self, tx: usize, block: CMat) -> ColumnBlock {
        let cb = ColumnBlock { tx, start: self.used[tx], width: block.ncols() };
        self.used[tx] += block.ncols();
        self.blocks[tx].push(block);
        cb
    }

    fn finish(self, tx_dim: usize) -> ([CMat; 3], [usize; 3], Vec<AlignedPair>) {
        let v = std::array::from_fn(|i| {
            let refs: Vec<&CMat> = self.blocks[i].iter().collect();
            linalg::hstack(tx_dim, &refs)
        });
        (v, self.used, self.aligned)
    }
}

/// Solves every family (three chains each) on `links` and stacks the chain
/// subspaces into per-user beamformers. Length-1 chains are random
/// directions.
fn solve_families(
    links: &Links,
    families: &[ChainFamily],
    opts: &BuildOptions,
) -> Result<([CMat; 3], [usize; 3], Vec<AlignedPair>)> {
    let (tx_dim, _) = link_dims(links)?;
    let mut asm = Assembly::new();
    for (f, fam) in families.iter().enumerate() {
        for origin in 0..3 {
            let seed = opts.sub_seed(((f as u64) << 8) | origin as u64);
            let spec = chain_spec_with_dim(origin, fam.length, fam.sub_dim)?;
            if fam.length == 1 {
                let mut rng = linalg::rng_from(seed);
                asm.push(origin, linalg::complex_gaussian(&mut rng, tx_dim, fam.sub_dim));
                continue;
            }
            let sys = build_stacked(links, &spec)?;
            let parts = solve_chain(&sys, fam.sub_dim, seed, opts.rel_tol)?;
            let cbs: Vec<ColumnBlock> = parts
                .into_iter()
                .zip(&spec.tx_seq)
                .map(|(block, &tx)| asm.push(tx, block))
                .collect();
            for (k, &rx) in spec.rx_seq.iter().enumerate() {
                asm.aligned.push(AlignedPair { rx, a: cbs[k], b: cbs[k + 1] });
            }
        }
    }
    Ok(asm.finish(tx_dim))
}

/// Applies receive projections `Q_j` and transmit projections `P_i`.
fn effective_links(links: &Links, rx: Option<&[CMat; 3]>, tx: Option<&[CMat; 3]>) -> Links {
    std::array::from_fn(|j| {
        std::array::from_fn(|i| {
            let mut a = links[j][i].clone();
            if let Some(q) = rx {
                a = &q[j] * a;
            }
            if let Some(p) = tx {
                a = a * &p[i];
            }
            a
        })
    })
}

/// Row selection keeping the first `keep` of `dim` coordinates.
fn leading_rows(keep: usize, dim: usize) -> CMat {
    CMat::from_fn(keep, dim, |r, c| if r == c { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
}

/// Maps a solution designed on `recip` (the reciprocal side) to the original
/// network. The original transmitter `j` sends along the conjugate of the
/// zero-forcing receive filter that reciprocal receiver `j` would use.
fn from_reciprocal(recip: &Construction, rel_tol: f64) -> Construction {
    let ch = &recip.channel;
    let sol = &recip.solution;
    let v = std::array::from_fn(|j| {
        let q = sol
            .rx_projections
            .as_ref()
            .map(|q| q[j].clone())
            .unwrap_or_else(|| CMat::identity(ch.rx_dim(), ch.rx_dim()));
        let desired = &q * ch.h(j, j) * &sol.v[j];
        let others: Vec<CMat> = (0..3).filter(|&i| i != j).map(|i| &q * ch.h(j, i) * &sol.v[i]).collect();
        let refs: Vec<&CMat> = others.iter().collect();
        let interference = linalg::hstack(q.nrows(), &refs);
        let basis = linalg::column_space(&interference, rel_tol);
        let filter = &desired - &basis * (basis.adjoint() * &desired);
        let mut u = q.adjoint() * filter;
        for mut col in u.column_iter_mut() {
            let n = col.norm();
            if n > 0.0 {
                col /= C64::new(n, 0.0);
            }
        }
        u.map(|x| x.conj())
    });
    let mut scheme = sol.scheme.clone();
    scheme.reciprocal = true;
    scheme.rx_kept = None;
    Construction {
        channel: ch.reciprocal(),
        solution: BeamformingSolution {
            v,
            demand: sol.demand,
            scheme,
            rx_projections: None,
            tx_projections: None,
            aligned: Vec::new(),
        },
    }
}

/// Runs `f` directly when `m_t <= m_r`, otherwise on the reciprocal network.
fn oriented(
    ch: &ChannelSet,
    opts: &BuildOptions,
    f: impl Fn(&ChannelSet, &BuildOptions) -> Result<Construction>,
) -> Result<Construction> {
    if ch.m_t() <= ch.m_r() {
        f(ch, opts)
    } else {
        Ok(from_reciprocal(&f(&ch.reciprocal(), opts)?, opts.rel_tol))
    }
}

/// `(p, q)` with `m = (2p-1) q` and `n = (2p+1) q`, if the ratio is exactly
/// `(2p-1)/(2p+1)`.
pub fn ratio_parameters(cfg: AntennaConfig) -> Option<(usize, usize)> {
    let (m, n) = (cfg.m(), cfg.n());
    if m == n || (n - m) % 2 != 0 {
        return None;
    }
    let q = (n - m) / 2;
    if m % q != 0 || (m / q) % 2 == 0 {
        return None;
    }
    Some(((m / q).div_ceil(2), q))
}

fn ratio_on_links(links: &Links, p: usize, q: usize, opts: &BuildOptions) -> Result<([CMat; 3], [usize; 3], Vec<AlignedPair>)> {
    solve_families(links, &[ChainFamily { length: p, sub_dim: q }], opts)
}

/// Three `q`-dimensional chains of length `p` on a `((2p-1)q, (2p+1)q)`
/// network; `pq` streams per user.
pub fn construct_ratio_scheme(ch: &ChannelSet, opts: &BuildOptions) -> Result<Construction> {
    oriented(ch, opts, |ch, opts| {
        let (p, q) = ratio_parameters(ch.config()).ok_or_else(|| {
            Error::Unsupported(format!("{} is not a (2p-1):(2p+1) network", ch.config()))
        })?;
        let (v, demand, aligned) = ratio_on_links(ch.links(), p, q, opts)?;
        let mut scheme = descriptor(SchemeKind::Ratio, ch.flavor());
        scheme.p = Some(p);
        scheme.q = Some(q);
        scheme.families = vec![ChainFamily { length: p, sub_dim: q }];
        scheme.extension = ch.extension();
        Ok(Construction {
            channel: ch.clone(),
            solution: BeamformingSolution { v, demand, scheme, rx_projections: None, tx_projections: None, aligned },
        })
    })
}

/// Scales both antenna counts by the spatial scale factor of `cfg`, drops
/// the redundant antennas to reach ratio `(2p-1):(2p+1)`, and runs the ratio
/// scheme. Each user gets `q * dof_star(cfg)` streams on the scaled network.
pub fn construct_spatial(cfg: AntennaConfig, flavor: Flavor, opts: &BuildOptions) -> Result<Construction> {
    if cfg.is_square() {
        return Err(Error::Unsupported("m_t = m_r has no alignment chain; use the square scheme".into()));
    }
    let scale = dof_core::spatial_scale_factor(cfg) as usize;
    let scaled = ChannelSet::generate(cfg.m_t() * scale, cfg.m_r() * scale, flavor, opts.seed)?;
    oriented(&scaled, opts, |ch, opts| {
        let (m, n) = (ch.m_t(), ch.m_r());
        let Segment { p, branch } = dof_core::segment(ch.config()).expect("m < n");
        let p = p as usize;
        let (keep_t, keep_r, q) = match branch {
            Branch::M => {
                let q = m / (2 * p - 1);
                (m, (2 * p + 1) * q, q)
            }
            Branch::N => {
                let q = n / (2 * p + 1);
                ((2 * p - 1) * q, n, q)
            }
        };
        let trimmed = ch.trim(keep_t, keep_r)?;
        let mut c = construct_ratio_scheme(&trimmed, opts)?;
        c.solution.scheme.kind = SchemeKind::Spatial;
        debug_assert_eq!(c.solution.scheme.q, Some(q));
        Ok(c)
    })
}

/// Zero forcing for `m/n <= 1/2`: every user sends `m` streams when
/// `3m <= n`, otherwise users 0 and 1 send `m` and user 2 sends `n - 2m`.
pub fn construct_zero_forcing(ch: &ChannelSet, opts: &BuildOptions) -> Result<Construction> {
    let (m, n) = (ch.config().m(), ch.config().n());
    if 2 * m > n {
        return Err(Error::Unsupported(format!("zero forcing needs m/n <= 1/2, got {}", ch.config())));
    }
    let demand = if 3 * m <= n { [m, m, m] } else { [m, m, n - 2 * m] };
    zero_forcing_with_demand(ch, demand, opts)
}

/// Random transmit directions with the given per-user stream counts; the
/// receivers separate them by zero forcing.
pub fn zero_forcing_with_demand(ch: &ChannelSet, demand: [usize; 3], opts: &BuildOptions) -> Result<Construction> {
    oriented(ch, opts, |ch, opts| {
        let tx_dim = ch.tx_dim();
        if demand.iter().any(|&d| d > tx_dim) {
            return Err(Error::InsufficientNullSpace { needed: *demand.iter().max().unwrap(), found: tx_dim });
        }
        let v = std::array::from_fn(|i| {
            let mut rng = linalg::rng_from(opts.sub_seed(0x2F00 + i as u64));
            linalg::complex_gaussian(&mut rng, tx_dim, demand[i])
        });
        let mut scheme = descriptor(SchemeKind::ZeroForcing, ch.flavor());
        scheme.families = vec![ChainFamily { length: 1, sub_dim: demand[0] }];
        scheme.extension = ch.extension();
        Ok(Construction {
            channel: ch.clone(),
            solution: BeamformingSolution {
                v,
                demand,
                scheme,
                rx_projections: None,
                tx_projections: None,
                aligned: Vec::new(),
            },
        })
    })
}

/// Symbol extension over `T = 2p+1` slots (N branch, random transmit
/// projections to `(2p-1) n` dimensions) or `T = 2p-1` slots (M branch,
/// random receive projections to `(2p+1) m` dimensions), followed by the
/// ratio scheme on the effective channel. Target: `T * dof_star` per user.
pub fn construct_time_extension(ch: &ChannelSet, opts: &BuildOptions) -> Result<Construction> {
    if ch.extension() != 1 {
        return Err(Error::InvalidArgument("time extension needs an unextended channel".into()));
    }
    if ch.config().is_square() {
        return Err(Error::Unsupported("m_t = m_r has no alignment chain".into()));
    }
    oriented(ch, opts, |ch, opts| {
        let (m, n) = (ch.m_t(), ch.m_r());
        let Segment { p, branch } = dof_core::segment(ch.config()).expect("m < n");
        let p = p as usize;
        let (t, q) = match branch {
            Branch::N => (2 * p + 1, n),
            Branch::M => (2 * p - 1, m),
        };
        let ext = ch.extend(t)?;
        let draw = |tag: u64, rows: usize, cols: usize| -> [CMat; 3] {
            std::array::from_fn(|k| {
                let mut rng = linalg::rng_from(opts.sub_seed(tag + k as u64));
                linalg::complex_gaussian(&mut rng, rows, cols)
            })
        };
        let (rx_proj, tx_proj) = match branch {
            Branch::N => (None, Some(draw(0x7100, t * m, (2 * p - 1) * n))),
            Branch::M => (Some(draw(0x7200, (2 * p + 1) * m, t * n)), None),
        };
        let eff = effective_links(ext.links(), rx_proj.as_ref(), tx_proj.as_ref());
        let (v_eff, demand, aligned) = ratio_on_links(&eff, p, q, opts)?;
        let v = match &tx_proj {
            Some(pm) => std::array::from_fn(|i| &pm[i] * &v_eff[i]),
            None => v_eff,
        };
        let mut scheme = descriptor(SchemeKind::TimeExtension, ch.flavor());
        scheme.p = Some(p);
        scheme.q = Some(q);
        scheme.families = vec![ChainFamily { length: p, sub_dim: q }];
        scheme.extension = t;
        Ok(Construction {
            channel: ext,
            solution: BeamformingSolution { v, demand, scheme, rx_projections: rx_proj, tx_projections: tx_proj, aligned },
        })
    })
}

/// Chain plan for demand `d` on an `m x n` network (`m < n`): families of
/// `(length, dimension)` and the number of receive antennas to keep.
///
/// First tries the primary family of length `p` and dimension `d0` plus one
/// secondary family of length `d - p d0` and dimension 1, where `d0 =
/// floor(n/(2p+1))` on the N branch and `floor(m/(2p-1))` on the M branch.
/// If its dimension counts do not close, falls back to a greedy packing
/// that takes the longest chains first.
pub fn chain_plan(m: usize, n: usize, d: usize) -> Option<(Vec<ChainFamily>, usize)> {
    let cfg = AntennaConfig::new(m, n).ok()?;
    let Segment { p, branch } = dof_core::segment(cfg)?;
    let p = p as usize;
    if d == 0 {
        return Some((Vec::new(), n));
    }
    let d0 = match branch {
        Branch::N => n / (2 * p + 1),
        Branch::M => m / (2 * p - 1),
    };
    let mut fams = Vec::new();
    if d0 > 0 && p * d0 <= d {
        fams.push(ChainFamily { length: p, sub_dim: d0 });
    }
    let used: usize = fams.iter().map(|f| f.length * f.sub_dim).sum();
    if d > used {
        fams.push(ChainFamily { length: d - used, sub_dim: 1 });
    }
    if let Some(kept) = plan_fits(m, n, &fams) {
        return Some((fams, kept));
    }
    greedy_plan(m, n, d, p)
}

fn null_dim(m: usize, kept: usize, length: usize) -> isize {
    if length == 1 {
        m as isize
    } else {
        (length * m) as isize - ((length - 1) * kept) as isize
    }
}

/// Receive antennas needed by a plan, if it fits: each length-`l` chain of
/// dimension `s` occupies `(2l+1) s` receive dimensions across the three
/// receivers' budgets, and every length needs a large enough null space.
fn plan_fits(m: usize, n: usize, fams: &[ChainFamily]) -> Option<usize> {
    let kept: usize = fams.iter().map(|f| (2 * f.length + 1) * f.sub_dim).sum();
    if kept > n || kept == 0 {
        return None;
    }
    let mut by_len = std::collections::BTreeMap::new();
    for f in fams {
        *by_len.entry(f.length).or_insert(0usize) += f.sub_dim;
    }
    for (&l, &s) in &by_len {
        if l > 1 && null_dim(m, kept, l) < s as isize {
            return None;
        }
        if l == 1 && s > m {
            return None;
        }
    }
    Some(kept)
}

fn greedy_plan(m: usize, n: usize, d: usize, p: usize) -> Option<(Vec<ChainFamily>, usize)> {
    for kept in (1..=n).rev() {
        let (mut rem, mut cap) = (d, kept);
        let mut fams = Vec::new();
        for l in (1..=p).rev() {
            let nd = null_dim(m, kept, l);
            if nd <= 0 {
                continue;
            }
            let s = (nd as usize).min(rem / l).min(cap / (2 * l + 1));
            if s > 0 {
                fams.push(ChainFamily { length: l, sub_dim: s });
                rem -= l * s;
                cap -= (2 * l + 1) * s;
            }
        }
        if rem == 0 {
            return Some((fams, kept));
        }
    }
    None
}

/// Construction without symbol extensions for `floor(dof_star)` streams per
/// user.
pub fn construct_feasibility(ch: &ChannelSet, opts: &BuildOptions) -> Result<Construction> {
    construct_feasibility_with_demand(ch, dof_core::dof_floor(ch.config()) as usize, opts)
}

/// Construction without symbol extensions for `d` streams per user: the
/// square scheme for `m_t = m_r`, zero forcing for `m/n <= 1/2`, otherwise
/// the chain plan of [`chain_plan`] on the leading receive antennas.
pub fn construct_feasibility_with_demand(ch: &ChannelSet, d: usize, opts: &BuildOptions) -> Result<Construction> {
    let cfg = ch.config();
    if d == 0 {
        return Ok(trivial(ch));
    }
    if cfg.is_square() {
        return construct_square_with_demand(ch, d, opts);
    }
    if 2 * cfg.m() <= cfg.n() {
        let mut c = zero_forcing_with_demand(ch, [d; 3], opts)?;
        c.solution.scheme.kind = SchemeKind::Feasibility;
        return Ok(c);
    }
    oriented(ch, opts, |ch, opts| {
        let (m, n) = (ch.m_t(), ch.m_r());
        let (fams, kept) = chain_plan(m, n, d)
            .ok_or_else(|| Error::Unsupported(format!("no chain plan for {d} streams on {m}x{n}")))?;
        let q = leading_rows(kept, n);
        let proj: [CMat; 3] = std::array::from_fn(|_| q.clone());
        let eff = effective_links(ch.links(), Some(&proj), None);
        let (v, demand, aligned) = solve_families(&eff, &fams, opts)?;
        let mut scheme = descriptor(SchemeKind::Feasibility, ch.flavor());
        scheme.families = fams;
        scheme.rx_kept = Some(kept);
        let rx_projections = if kept < n { Some(proj) } else { None };
        Ok(Construction {
            channel: ch.clone(),
            solution: BeamformingSolution { v, demand, scheme, rx_projections, tx_projections: None, aligned },
        })
    })
}

fn trivial(ch: &ChannelSet) -> Construction {
    Construction {
        channel: ch.clone(),
        solution: BeamformingSolution {
            v: std::array::from_fn(|_| CMat::zeros(ch.tx_dim(), 0)),
            demand: [0; 3],
            scheme: descriptor(SchemeKind::Trivial, ch.flavor()),
            rx_projections: None,
            tx_projections: None,
            aligned: Vec::new(),
        },
    }
}

/// Closed-loop alignment for `m_t = m_r = m` with `floor(m/2)` streams.
pub fn construct_square(ch: &ChannelSet, opts: &BuildOptions) -> Result<Construction> {
    construct_square_with_demand(ch, ch.m_t() / 2, opts)
}

/// Closed-loop alignment: `V_0` holds eigenvectors of
/// `H20^-1 H21 H01^-1 H02 H12^-1 H10`, then `V_2 = H12^-1 H10 V_0` and
/// `V_1 = H01^-1 H02 V_2`, so the interference aligns at every receiver.
pub fn construct_square_with_demand(ch: &ChannelSet, d: usize, opts: &BuildOptions) -> Result<Construction> {
    if ch.m_t() != ch.m_r() || ch.extension() != 1 {
        return Err(Error::ShapeMismatch("square scheme needs an unextended m x m network".into()));
    }
    let m = ch.m_t();
    if d == 0 {
        return Ok(trivial(ch));
    }
    if d > m {
        return Err(Error::InsufficientNullSpace { needed: d, found: m });
    }
    let inv = |j: usize, i: usize| -> Result<CMat> {
        ch.h(j, i)
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::DegenerateChannel(format!("link ({j},{i}) is singular")))
    };
    let to_2 = inv(1, 2)? * ch.h(1, 0);
    let to_1 = inv(0, 1)? * ch.h(0, 2);
    let closed = inv(2, 0)? * ch.h(2, 1) * &to_1 * &to_2;
    let eig = linalg::eigenvalues(&closed);
    let mut v0 = CMat::zeros(m, d);
    for (k, lambda) in eig.iter().take(d).enumerate() {
        let shifted = &closed - CMat::identity(m, m) * *lambda;
        let mut x = linalg::min_right_singular_vector(&shifted);
        linalg::canonical_unit(&mut x);
        v0.set_column(k, &x.column(0));
    }
    let v2 = &to_2 * &v0;
    let v1 = &to_1 * &v2;
    let _ = opts;
    let block = |tx| ColumnBlock { tx, start: 0, width: d };
    let aligned = vec![
        AlignedPair { rx: 1, a: block(0), b: block(2) },
        AlignedPair { rx: 0, a: block(2), b: block(1) },
        AlignedPair { rx: 2, a: block(1), b: block(0) },
    ];
    Ok(Construction {
        channel: ch.clone(),
        solution: BeamformingSolution {
            v: [v0, v1, v2],
            demand: [d; 3],
            scheme: descriptor(SchemeKind::Square, ch.flavor()),
            rx_projections: None,
            tx_projections: None,
            aligned,
        },
    })
}

/// Dispatches on `mode`. `Auto` picks the square scheme for `m_t = m_r`, zero
/// forcing for `m/n <= 1/2`, the feasibility construction when `dof_star`
/// is an integer and the spatial scheme otherwise.
pub fn construct(ch: &ChannelSet, mode: Mode, opts: &BuildOptions) -> Result<Construction> {
    let cfg = ch.config();
    match mode {
        Mode::Auto => {
            if cfg.is_square() {
                construct_square(ch, opts)
            } else if 2 * cfg.m() <= cfg.n() {
                construct_zero_forcing(ch, opts)
            } else if dof_core::dof_star(cfg).is_integer() {
                construct_feasibility(ch, opts)
            } else {
                construct_spatial(cfg, ch.flavor(), opts)
            }
        }
        Mode::Ratio => construct_ratio_scheme(ch, opts),
        Mode::Spatial => construct_spatial(cfg, ch.flavor(), opts),
        Mode::Time => construct_time_extension(ch, opts),
        Mode::Feasibility => construct_feasibility(ch, opts),
        Mode::Zf => construct_zero_forcing(ch, opts),
    }
}

/// The normalized `2 x 3` network over five slots: fixed 0/1 cross links,
/// generic direct links (repeated or redrawn per slot), and three streams
/// per user split across two chains, built from random `5 x 3` combiners.
pub fn g_matrix_construction(seed: u64, flavor: Flavor) -> Construction {
    const T: usize = 5;
    let one = C64::new(1.0, 0.0);
    let mut from_next = CMat::zeros(3, 2);
    from_next[(1, 0)] = one;
    from_next[(2, 1)] = one;
    let mut from_prev = CMat::zeros(3, 2);
    from_prev[(0, 0)] = one;
    from_prev[(1, 1)] = one;
    let base = ChannelSet::generate(2, 3, flavor, seed).expect("valid shape");
    let h: Links = std::array::from_fn(|j| {
        std::array::from_fn(|i| {
            if i == j {
                base.clone().extend(T).expect("unextended").h(j, j).clone()
            } else {
                let cross = if i == (j + 1) % 3 { &from_next } else { &from_prev };
                linalg::block_diag(&vec![cross.clone(); T])
            }
        })
    });
    let channel = ChannelSet::from_links(2, 3, flavor, seed, T, h).expect("block diagonal");

    let mut rng = linalg::rng_from(linalg::mix_seed(&[seed, 0x6A7]));
    let a = linalg::complex_gaussian(&mut rng, T, 3);
    let b = linalg::complex_gaussian(&mut rng, T, 3);
    let c = linalg::complex_gaussian(&mut rng, T, 3);
    // (I_T kron e_k) x: put the slot values of x on antenna k
    let spread = |x: &CMat, k: usize| -> CMat {
        let mut out = CMat::zeros(2 * T, x.ncols());
        for s in 0..T {
            out.row_mut(2 * s + k).copy_from(&x.row(s));
        }
        out
    };
    // user 0: chain b (antenna 1), chain c (antenna 0)
    // user 1: chain a (antenna 0), chain c (antenna 1)
    // user 2: chain a (antenna 1), chain b (antenna 0)
    let v0 = linalg::hstack(2 * T, &[&spread(&b, 1), &spread(&c, 0)]);
    let v1 = linalg::hstack(2 * T, &[&spread(&a, 0), &spread(&c, 1)]);
    let v2 = linalg::hstack(2 * T, &[&spread(&a, 1), &spread(&b, 0)]);
    let blk = |tx, start| ColumnBlock { tx, start, width: 3 };
    let aligned = vec![
        AlignedPair { rx: 0, a: blk(1, 0), b: blk(2, 0) },
        AlignedPair { rx: 1, a: blk(2, 3), b: blk(0, 0) },
        AlignedPair { rx: 2, a: blk(0, 3), b: blk(1, 3) },
    ];
    let mut scheme = descriptor(SchemeKind::TimeExtension, flavor);
    scheme.p = Some(2);
    scheme.extension = T;
    Construction {
        channel,
        solution: BeamformingSolution {
            v: [v0, v1, v2],
            demand: [6; 3],
            scheme,
            rx_projections: None,
            tx_projections: None,
            aligned,
        },
    }
}

/// `G` at receiver 0 of [`g_matrix_construction`]: desired images followed
/// by one copy of each interference direction (15 x 15).
pub fn g_matrix(construction: &Construction) -> CMat {
    let ch = &construction.channel;
    let v = &construction.solution.v;
    let d0 = ch.h(0, 0) * &v[0];
    let from_1 = ch.h(0, 1) * &v[1];
    let from_2 = ch.h(0, 2) * &v[2];
    // transmitter 2's first block aligns with transmitter 1's first block
    let last = from_2.columns(3, 3).into_owned();
    linalg::hstack(ch.rx_dim(), &[&d0, &from_1, &last])
}

/// Builds `G` for one seed and returns it with its numeric rank.
pub fn g_matrix_demo(seed: u64, flavor: Flavor, rel_tol: f64) -> (CMat, usize) {
    let g = g_matrix(&g_matrix_construction(seed, flavor));
    let r = linalg::rank(&g, rel_tol);
    (g, r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_based(v: &[usize]) -> Vec<usize> {
        v.iter().map(|x| x + 1).collect()
    }

    #[test]
    fn chain_sequences() {
        let c = chain_spec(0, 4).unwrap();
        assert_eq!(one_based(&c.tx_seq), vec![1, 3, 2, 1]);
        assert_eq!(one_based(&c.rx_seq), vec![2, 1, 3]);
        let c = chain_spec(1, 2).unwrap();
        assert_eq!(one_based(&c.tx_seq), vec![2, 1]);
        assert_eq!(one_based(&c.rx_seq), vec![3]);
        let c = chain_spec(2, 1).unwrap();
        assert_eq!(one_based(&c.tx_seq), vec![3]);
        assert!(c.rx_seq.is_empty());
        assert!(chain_spec(3, 2).is_err());
        assert!(chain_spec(0, 0).is_err());
    }

    #[test]
    fn aligning_receiver_is_the_third_user() {
        for origin in 0..3 {
            let c = chain_spec(origin, 7).unwrap();
            for r in 0..6 {
                assert_ne!(c.rx_seq[r], c.tx_seq[r]);
                assert_ne!(c.rx_seq[r], c.tx_seq[r + 1]);
                assert_ne!(c.tx_seq[r], c.tx_seq[r + 1]);
            }
        }
    }

    #[test]
    fn stacked_shapes() {
        let ch = ChannelSet::generate(3, 5, Flavor::Constant, 1).unwrap();
        let sys = build_stacked(ch.links(), &chain_spec(0, 2).unwrap()).unwrap();
        assert_eq!(sys.matrix.shape(), (5, 6));
        // [H_21 -H_23] in one-based labels
        assert_eq!(sys.matrix.columns(0, 3).into_owned(), *ch.h(1, 0));
        assert_eq!(sys.matrix.columns(3, 3).into_owned(), -ch.h(1, 2));
        let ch = ChannelSet::generate(5, 7, Flavor::Constant, 1).unwrap();
        let sys = build_stacked(ch.links(), &chain_spec(0, 3).unwrap()).unwrap();
        assert_eq!(sys.matrix.shape(), (14, 15));
        assert!(sys.matrix.view((0, 10), (7, 5)).iter().all(|x| x.norm() == 0.0));
        assert!(build_stacked(ch.links(), &chain_spec(0, 1).unwrap()).is_err());
    }

    #[test]
    fn null_dimension_law() {
        for p in 2..=5 {
            for (t, r) in [(3, 5), (5, 7), (4, 5), (6, 7), (7, 11), (2, 3)] {
                for seed in 0..5 {
                    let ch = ChannelSet::generate(t, r, Flavor::Constant, seed).unwrap();
                    let sys = build_stacked(ch.links(), &chain_spec((seed % 3) as usize, p).unwrap()).unwrap();
                    let want = (p * t).saturating_sub((p - 1) * r);
                    let got = linalg::null_space(&sys.matrix, DEFAULT_REL_TOL).ncols();
                    assert_eq!(got, want, "p={p} ({t},{r}) seed={seed}");
                }
            }
        }
    }

    #[test]
    fn solved_chain_aligns() {
        let ch = ChannelSet::generate(7, 11, Flavor::Constant, 3).unwrap();
        let spec = chain_spec(0, 2).unwrap();
        let sys = build_stacked(ch.links(), &spec).unwrap();
        let parts = solve_chain(&sys, 2, 9, DEFAULT_REL_TOL).unwrap();
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0].shape(), (7, 2));
        let lhs = ch.h(1, 0) * &parts[0];
        let rhs = ch.h(1, 2) * &parts[1];
        assert!((&lhs - &rhs).norm() <= 1e-10 * lhs.norm());
        assert!(matches!(
            solve_chain(&sys, 4, 9, DEFAULT_REL_TOL),
            Err(Error::InsufficientNullSpace { needed: 4, found: 3 })
        ));
    }

    #[test]
    fn ratio_parameter_detection() {
        let cfg = |a, b| AntennaConfig::new(a, b).unwrap();
        assert_eq!(ratio_parameters(cfg(3, 5)), Some((2, 1)));
        assert_eq!(ratio_parameters(cfg(6, 10)), Some((2, 2)));
        assert_eq!(ratio_parameters(cfg(5, 7)), Some((3, 1)));
        assert_eq!(ratio_parameters(cfg(1, 3)), Some((1, 1)));
        assert_eq!(ratio_parameters(cfg(35, 49)), Some((3, 7)));
        assert_eq!(ratio_parameters(cfg(2, 4)), None);
        assert_eq!(ratio_parameters(cfg(7, 10)), None);
        assert_eq!(ratio_parameters(cfg(4, 4)), None);
    }

    #[test]
    fn chain_plans_close() {
        assert_eq!(
            chain_plan(4, 5, 2),
            Some((vec![ChainFamily { length: 2, sub_dim: 1 }], 5))
        );
        let (f, kept) = chain_plan(5, 8, 3).unwrap();
        assert_eq!(f, vec![ChainFamily { length: 2, sub_dim: 1 }, ChainFamily { length: 1, sub_dim: 1 }]);
        assert_eq!(kept, 8);
        let (f, _) = chain_plan(7, 9, 4).unwrap();
        assert_eq!(f, vec![ChainFamily { length: 4, sub_dim: 1 }]);
        for n in 2..=64 {
            for m in (n / 2 + 1)..n {
                let d = dof_core::dof_floor(AntennaConfig::new(m, n).unwrap()) as usize;
                let (f, kept) = chain_plan(m, n, d).unwrap_or_else(|| panic!("({m},{n})"));
                assert_eq!(f.iter().map(|x| x.length * x.sub_dim).sum::<usize>(), d);
                assert!(kept <= n);
            }
        }
    }

    #[test]
    fn truncate_drops_broken_pairs() {
        let ch = ChannelSet::generate(6, 10, Flavor::Constant, 2).unwrap();
        let c = construct_ratio_scheme(&ch, &BuildOptions::new(1)).unwrap();
        assert_eq!(c.solution.demand, [4; 3]);
        let t = c.solution.truncate(2);
        assert_eq!(t.demand, [2; 3]);
        assert!(t.v.iter().all(|v| v.ncols() == 2));
        assert!(t.aligned.len() < c.solution.aligned.len());
    }

    #[test]
    fn solution_json_round_trip() {
        let ch = ChannelSet::generate(5, 3, Flavor::Constant, 2).unwrap();
        let c = construct_ratio_scheme(&ch, &BuildOptions::new(1)).unwrap();
        let text = serde_json::to_string(&c.solution.to_json()).unwrap();
        let doc: SolutionJson = serde_json::from_str(&text).unwrap();
        assert_eq!(BeamformingSolution::from_json(&doc).unwrap(), c.solution);
        let c = construct_time_extension(&ChannelSet::generate(7, 10, Flavor::Constant, 2).unwrap(), &BuildOptions::new(1)).unwrap();
        let doc = c.solution.to_json();
        assert_eq!(BeamformingSolution::from_json(&doc).unwrap(), c.solution);
    }

    #[test]
    fn zero_forcing_allocations() {
        let opts = BuildOptions::new(0);
        let zf = |a, b| {
            construct_zero_forcing(&ChannelSet::generate(a, b, Flavor::Constant, 1).unwrap(), &opts)
                .unwrap()
                .solution
                .demand
        };
        assert_eq!(zf(1, 3), [1, 1, 1]);
        assert_eq!(zf(2, 5), [2, 2, 1]);
        assert_eq!(zf(1, 2), [1, 1, 0]);
        assert_eq!(zf(5, 2), [2, 2, 1]);
        assert!(construct_zero_forcing(&ChannelSet::generate(2, 3, Flavor::Constant, 1).unwrap(), &opts).is_err());
    }

    #[test]
    fn spatial_shapes() {
        let opts = BuildOptions::new(4);
        let cfg = |a, b| AntennaConfig::new(a, b).unwrap();
        let c = construct_spatial(cfg(7, 10), Flavor::Constant, &opts).unwrap();
        assert_eq!((c.channel.m_t(), c.channel.m_r()), (35, 49));
        assert_eq!(c.solution.demand, [21; 3]);
        let c = construct_spatial(cfg(2, 3), Flavor::Constant, &opts).unwrap();
        assert_eq!((c.channel.m_t(), c.channel.m_r()), (9, 15));
        assert_eq!(c.solution.demand, [6; 3]);
        let c = construct_spatial(cfg(3, 5), Flavor::Constant, &opts).unwrap();
        assert_eq!((c.channel.m_t(), c.channel.m_r()), (3, 5));
        let c = construct_spatial(cfg(3, 2), Flavor::Constant, &opts).unwrap();
        assert_eq!((c.channel.m_t(), c.channel.m_r()), (15, 9));
        assert!(c.solution.scheme.reciprocal);
        assert!(construct_spatial(cfg(4, 4), Flavor::Constant, &opts).is_err());
    }

    #[test]
    fn time_extension_shapes() {
        let opts = BuildOptions::new(4);
        let ch = ChannelSet::generate(7, 10, Flavor::Constant, 1).unwrap();
        let c = construct_time_extension(&ch, &opts).unwrap();
        assert_eq!(c.channel.extension(), 5);
        assert_eq!(c.solution.demand, [21; 3]);
        assert_eq!(c.solution.rx_projections.as_ref().unwrap()[0].shape(), (49, 50));
        let ch = ChannelSet::generate(2, 3, Flavor::TimeVarying, 1).unwrap();
        let c = construct_time_extension(&ch, &opts).unwrap();
        assert_eq!(c.channel.extension(), 5);
        assert_eq!(c.solution.demand, [6; 3]);
        assert_eq!(c.solution.v[0].shape(), (10, 6));
    }

    #[test]
    fn g_matrix_shape_and_alignment() {
        let c = g_matrix_construction(1, Flavor::Constant);
        assert_eq!(g_matrix(&c).shape(), (15, 15));
        let ch = &c.channel;
        let v = &c.solution.v;
        for pair in &c.solution.aligned {
            let a = ch.h(pair.rx, pair.a.tx) * v[pair.a.tx].columns(pair.a.start, 3);
            let b = ch.h(pair.rx, pair.b.tx) * v[pair.b.tx].columns(pair.b.start, 3);
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("zf".parse::<Mode>().unwrap(), Mode::Zf);
        assert!("nope".parse::<Mode>().is_err());
    }
}
