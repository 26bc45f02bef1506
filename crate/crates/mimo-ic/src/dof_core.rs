//! Exact closed forms for the per-user DoF of the three-user `M_T x M_R`
//! MIMO interference channel.
//!
//! With `m = min(m_t, m_r)`, `n = max(m_t, m_r)` and the alignment chain
//! length `kappa = ceil(m / (n - m))`, the per-user DoF is
//! `min(kappa m / (2 kappa - 1), kappa n / (2 kappa + 1))`, and `m / 2` when
//! `m = n`. Everything here is exact rational arithmetic.

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Exact reduced fraction. `Ratio` keeps the denominator positive and the
/// fraction in lowest terms.
pub type Rational = Ratio<i64>;

/// Antenna counts per transmitter and per receiver.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AntennaConfig {
    m_t: usize,
    m_r: usize,
}

impl AntennaConfig {
    pub fn new(m_t: usize, m_r: usize) -> Result<Self> {
        if m_t == 0 || m_r == 0 {
            return Err(Error::InvalidConfig(format!(
                "antenna counts must be positive, got ({m_t}, {m_r})"
            )));
        }
        Ok(Self { m_t, m_r })
    }

    pub fn m_t(&self) -> usize {
        self.m_t
    }

    pub fn m_r(&self) -> usize {
        self.m_r
    }

    /// Smaller antenna count.
    pub fn m(&self) -> usize {
        self.m_t.min(self.m_r)
    }

    /// Larger antenna count.
    pub fn n(&self) -> usize {
        self.m_t.max(self.m_r)
    }

    pub fn is_square(&self) -> bool {
        self.m_t == self.m_r
    }

    /// Same network with transmitters and receivers swapped.
    pub fn reciprocal(&self) -> Self {
        Self { m_t: self.m_r, m_r: self.m_t }
    }

    /// Both counts multiplied by `q`.
    pub fn scaled(&self, q: usize) -> Self {
        Self { m_t: self.m_t * q, m_r: self.m_r * q }
    }
}

impl std::fmt::Display for AntennaConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.m_t, self.m_r)
    }
}

/// Length of the longest subspace alignment chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChainLength {
    Finite(u64),
    Infinite,
}

impl ChainLength {
    pub fn finite(&self) -> Option<u64> {
        match self {
            ChainLength::Finite(k) => Some(*k),
            ChainLength::Infinite => None,
        }
    }
}

impl std::fmt::Display for ChainLength {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ChainLength::Finite(k) => write!(f, "{k}"),
            ChainLength::Infinite => write!(f, "inf"),
        }
    }
}

/// Where the ratio `m/n` sits relative to the redundancy sets.
///
/// `SetA` is `{1/2, 2/3, 3/4, ...}`, `SetB` is `{1/3, 3/5, 5/7, ...}`.
/// Between them one side has spare antennas: `MBottleneck` means the DoF is
/// limited by `m` alone, `NBottleneck` by `n` alone.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Redundancy {
    SetA,
    SetB,
    MBottleneck,
    NBottleneck,
    Square,
}

/// Which bound is active on a segment of the piecewise form.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    /// `p m / (2p - 1)`
    M,
    /// `p n / (2p + 1)`
    N,
}

/// Segment of the piecewise DoF form containing `m/n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub p: u64,
    pub branch: Branch,
}

/// Everything the closed forms say about one antenna configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DofCharacterization {
    pub cfg: AntennaConfig,
    pub kappa: ChainLength,
    /// `None` when `m = n`.
    pub n_bound: Option<Rational>,
    pub m_bound: Option<Rational>,
    pub dof_star: Rational,
    pub scale_factor: u64,
    pub redundancy: Redundancy,
    /// `None` when `m = n`.
    pub segment: Option<Segment>,
}

/// Proper-system and linear-feasibility verdict for a per-user demand.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeasibilityVerdict {
    pub d: u64,
    pub proper: bool,
    pub strictly_proper: bool,
    pub info_bound: Rational,
    pub linear_feasible: bool,
}

fn rat(num: u64, den: u64) -> Rational {
    Rational::new(num as i64, den as i64)
}

/// Chain length `ceil(m / (n - m))`, infinite for `m = n`.
pub fn kappa(cfg: AntennaConfig) -> ChainLength {
    let (m, n) = (cfg.m() as u64, cfg.n() as u64);
    if m == n {
        ChainLength::Infinite
    } else {
        ChainLength::Finite(m.div_ceil(n - m))
    }
}

fn finite_kappa(cfg: AntennaConfig) -> Result<u64> {
    kappa(cfg).finite().ok_or_else(|| {
        Error::InvalidConfig(format!("{cfg}: bounds need m < n (chain length is infinite)"))
    })
}

/// `kappa n / (2 kappa + 1)`.
pub fn n_bound(cfg: AntennaConfig) -> Result<Rational> {
    let k = finite_kappa(cfg)?;
    Ok(rat(k * cfg.n() as u64, 2 * k + 1))
}

/// `kappa m / (2 kappa - 1)`.
pub fn m_bound(cfg: AntennaConfig) -> Result<Rational> {
    let k = finite_kappa(cfg)?;
    Ok(rat(k * cfg.m() as u64, 2 * k - 1))
}

/// Per-user DoF value.
pub fn dof_star(cfg: AntennaConfig) -> Rational {
    if cfg.is_square() {
        return rat(cfg.m() as u64, 2);
    }
    let nb = n_bound(cfg).expect("m < n");
    let mb = m_bound(cfg).expect("m < n");
    nb.min(mb)
}

/// Segment of the piecewise form that contains `m/n`. Boundary ratios go to
/// the lower `p`; the segment index always equals `kappa`.
pub fn segment(cfg: AntennaConfig) -> Option<Segment> {
    if cfg.is_square() {
        return None;
    }
    let (m, n) = (cfg.m() as u64, cfg.n() as u64);
    let r = rat(m, n);
    let mut p = 1u64;
    loop {
        // (p-1)/p <= r <= (2p-1)/(2p+1): M branch
        if r <= rat(2 * p - 1, 2 * p + 1) {
            return Some(Segment { p, branch: Branch::M });
        }
        // (2p-1)/(2p+1) <= r <= p/(p+1): N branch
        if r <= rat(p, p + 1) {
            return Some(Segment { p, branch: Branch::N });
        }
        p += 1;
    }
}

/// Per-user DoF evaluated through the piecewise form rather than the min of
/// the two bounds.
pub fn piecewise_dof(cfg: AntennaConfig) -> Rational {
    match segment(cfg) {
        None => rat(cfg.m() as u64, 2),
        Some(Segment { p, branch: Branch::M }) => rat(p * cfg.m() as u64, 2 * p - 1),
        Some(Segment { p, branch: Branch::N }) => rat(p * cfg.n() as u64, 2 * p + 1),
    }
}

/// Smallest `q` with `q * dof_star` integral.
pub fn spatial_scale_factor(cfg: AntennaConfig) -> u64 {
    *dof_star(cfg).denom() as u64
}

pub fn redundancy_class(cfg: AntennaConfig) -> Redundancy {
    if cfg.is_square() {
        return Redundancy::Square;
    }
    let (m, n) = (cfg.m() as u64, cfg.n() as u64);
    let nb = n_bound(cfg).expect("m < n");
    let mb = m_bound(cfg).expect("m < n");
    if nb == mb {
        Redundancy::SetB
    } else if m % (n - m) == 0 {
        // m/n = p/(p+1) exactly
        Redundancy::SetA
    } else if mb < nb {
        Redundancy::MBottleneck
    } else {
        Redundancy::NBottleneck
    }
}

/// Variable counting test for three users: proper iff `4d <= m_t + m_r`,
/// strictly proper iff equal.
pub fn is_proper(cfg: AntennaConfig, d: u64) -> (bool, bool) {
    let total = (cfg.m_t() + cfg.m_r()) as u64;
    (4 * d <= total, 4 * d == total)
}

/// Linear alignment with `d` streams per user is feasible without symbol
/// extensions iff `d <= floor(dof_star)`. `d = 0` is trivially feasible.
pub fn is_linear_feasible(cfg: AntennaConfig, d: u64) -> FeasibilityVerdict {
    let (proper, strictly_proper) = is_proper(cfg, d);
    let info_bound = dof_star(cfg);
    FeasibilityVerdict {
        d,
        proper,
        strictly_proper,
        info_bound,
        linear_feasible: d as i64 <= info_bound.floor().to_integer(),
    }
}

/// `dof_star - m n / (m + n)`: what MIMO processing gains over treating the
/// antennas as a single shared resource.
pub fn mimo_gain(cfg: AntennaConfig) -> Rational {
    let (m, n) = (cfg.m() as u64, cfg.n() as u64);
    dof_star(cfg) - rat(m * n, m + n)
}

pub fn characterize(cfg: AntennaConfig) -> DofCharacterization {
    DofCharacterization {
        cfg,
        kappa: kappa(cfg),
        n_bound: n_bound(cfg).ok(),
        m_bound: m_bound(cfg).ok(),
        dof_star: dof_star(cfg),
        scale_factor: spatial_scale_factor(cfg),
        redundancy: redundancy_class(cfg),
        segment: segment(cfg),
    }
}

/// `floor(dof_star)` as an unsigned count.
pub fn dof_floor(cfg: AntennaConfig) -> u64 {
    dof_star(cfg).floor().to_integer() as u64
}

/// Helper for printing: `a/b`, or `a` when integral.
pub fn fmt_rational(r: &Rational) -> String {
    if r.denom().is_one() {
        format!("{}", r.numer())
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// `gcd` on antenna counts, exposed for callers that reduce ratios.
pub fn reduced_ratio(cfg: AntennaConfig) -> (usize, usize) {
    let g = cfg.m().gcd(&cfg.n());
    (cfg.m() / g, cfg.n() / g)
}
