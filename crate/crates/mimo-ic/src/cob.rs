//! Layered change of basis for `(p, p+1)` networks.
//!
//! Each layer fixes two receive rows and two transmit columns per user:
//!
//! * receive row `a_d` of user `k` annihilates the core link from
//!   transmitter `k+1`, row `c_d` the core link from transmitter `k-1`;
//! * transmit column `a_d` of user `k` is silent at row `c_d` of receiver
//!   `k-1`, column `c_d` is silent at row `a_d` of receiver `k+1`;
//! * the remaining transmit directions are confined to the intersection of
//!   both null spaces, which becomes the core of the next layer.
//!
//! Rows of layer `d` are supported on receive antennas `d..=p-d` only, so
//! the core of the next layer drops the first and last receive coordinates.
//! Layers peel off until a `1 x 2` core (odd `p`, one middle transmit
//! column) or a `1 x 0` core (even `p`, one middle receive row set to a unit
//! coordinate) is left.
//!
//! Rows are placed at `d` (`a_d`) and `p-d` (`c_d`), columns at `d` (`a_d`)
//! and `p-1-d` (`c_d`); the middle column of odd `p` is `b`.

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelSet, Flavor};
use crate::linalg::{self, CMat, C64, DEFAULT_REL_TOL};
use crate::{Error, Result};

/// Default bound on the relative magnitude of entries required to vanish.
pub const DEFAULT_PATTERN_TOL: f64 = 1e-9;

/// Largest `p` with a built-in pattern.
pub const MAX_PATTERN_P: usize = 8;

/// Invertible transmit and receive transformations plus the transformed
/// channel `r_mats[j] * h[j][i] * t_mats[i]`.
#[derive(Clone, Debug)]
pub struct BasisChange {
    pub t_mats: [CMat; 3],
    pub r_mats: [CMat; 3],
    pub transformed: ChannelSet,
}

/// Required zeros of the transformed links. `zero[j][i]` is row-major over
/// the `rows x cols` link from transmitter `i` to receiver `j`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZeroMask {
    pub rows: usize,
    pub cols: usize,
    pub zero: Vec<Vec<Vec<bool>>>,
}

impl ZeroMask {
    pub fn is_zero(&self, j: usize, i: usize, r: usize, c: usize) -> bool {
        self.zero[j][i][r * self.cols + c]
    }

    /// Mask of the reciprocal network: link `(j, i)` becomes the transpose of
    /// link `(i, j)`.
    pub fn reciprocal(&self) -> Self {
        let zero = (0..3)
            .map(|j| {
                (0..3)
                    .map(|i| {
                        let mut out = vec![false; self.rows * self.cols];
                        for r in 0..self.cols {
                            for c in 0..self.rows {
                                out[r * self.rows + c] = self.is_zero(i, j, c, r);
                            }
                        }
                        out
                    })
                    .collect()
            })
            .collect();
        Self { rows: self.cols, cols: self.rows, zero }
    }

    pub fn count_zeros(&self) -> usize {
        self.zero.iter().flatten().flatten().filter(|&&z| z).count()
    }
}

/// Residuals on the entries a mask requires to vanish.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ZeroPatternReport {
    /// `residuals[j][i]` row-major; entries not required to vanish are 0.
    pub residuals: Vec<Vec<Vec<f64>>>,
    pub max_residual: f64,
    pub pattern_tol: f64,
    pub pass: bool,
}

/// Depth and role of a position along one side of a `(p, p+1)` link.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Role {
    A(usize),
    C(usize),
    B(usize),
}

fn role(index: usize, len: usize) -> Role {
    let mirror = len - 1 - index;
    match index.cmp(&mirror) {
        std::cmp::Ordering::Less => Role::A(index),
        std::cmp::Ordering::Greater => Role::C(mirror),
        std::cmp::Ordering::Equal => Role::B(index),
    }
}

fn depth(r: Role) -> usize {
    match r {
        Role::A(d) | Role::C(d) | Role::B(d) => d,
    }
}

/// Whether entry `(row, col)` of the link from transmitter `i` to receiver
/// `j` must vanish after the change of basis.
fn required_zero(p: usize, j: usize, i: usize, row: usize, col: usize) -> bool {
    if i == j {
        return false;
    }
    let next = (j + 1) % 3 == i;
    let col_role = role(col, p);
    let cd = depth(col_role);
    match role(row, p + 1) {
        Role::A(d) if next => cd >= d,
        Role::A(d) => cd > d || col_role == Role::C(d),
        Role::C(d) if !next => cd >= d,
        Role::C(d) => cd > d || col_role == Role::A(d),
        Role::B(_) => false,
    }
}

/// Zero mask of the transformed `(p, p+1)` network.
pub fn builtin_pattern(p: usize) -> Result<ZeroMask> {
    if !(2..=MAX_PATTERN_P).contains(&p) {
        return Err(Error::Unsupported(format!(
            "built-in patterns cover 2 <= p <= {MAX_PATTERN_P}, got p = {p}"
        )));
    }
    let (rows, cols) = (p + 1, p);
    let zero = (0..3)
        .map(|j| {
            (0..3)
                .map(|i| {
                    (0..rows * cols)
                        .map(|k| required_zero(p, j, i, k / cols, k % cols))
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(ZeroMask { rows, cols, zero })
}

fn unit_null_vector(a: &CMat, rel_tol: f64, what: &str) -> Result<CMat> {
    let ns = linalg::null_space(a, rel_tol);
    if ns.ncols() != 1 {
        return Err(Error::DegenerateChannel(format!(
            "{what}: null space has dimension {}, expected 1",
            ns.ncols()
        )));
    }
    let mut v = ns;
    linalg::canonical_unit(&mut v);
    Ok(v)
}

/// Row vector `x` with `x a = 0`, unique up to scale.
fn unit_left_null_row(a: &CMat, rel_tol: f64, what: &str) -> Result<CMat> {
    let col = unit_null_vector(&a.adjoint(), rel_tol, what)?;
    // canonicalize the row itself, not its conjugate
    let mut row = col.adjoint().transpose();
    linalg::canonical_unit(&mut row);
    Ok(row.transpose())
}

fn prev(k: usize) -> usize {
    (k + 2) % 3
}

fn next(k: usize) -> usize {
    (k + 1) % 3
}

/// Change of basis for the `2 x 3` network (two transmit, three receive
/// antennas).
pub fn cob_2x3(ch: &ChannelSet) -> Result<BasisChange> {
    if (ch.m_t(), ch.m_r()) != (2, 3) {
        return Err(Error::ShapeMismatch(format!(
            "cob_2x3 needs a 2x3 network, got {}x{}",
            ch.m_t(),
            ch.m_r()
        )));
    }
    cob_recursive(ch, 2)
}

/// Layered change of basis for a `(p, p+1)` network. A `(p+1, p)` network is
/// handled through its reciprocal; its zero mask is
/// `builtin_pattern(p)?.reciprocal()`.
pub fn cob_recursive(ch: &ChannelSet, p: usize) -> Result<BasisChange> {
    cob_recursive_with_tol(ch, p, DEFAULT_REL_TOL)
}

pub fn cob_recursive_with_tol(ch: &ChannelSet, p: usize, rel_tol: f64) -> Result<BasisChange> {
    if p < 2 {
        return Err(Error::Unsupported(format!("change of basis needs p >= 2, got {p}")));
    }
    if ch.extension() != 1 {
        return Err(Error::InvalidArgument("change of basis needs an unextended channel".into()));
    }
    match (ch.m_t(), ch.m_r()) {
        (t, r) if t == p && r == p + 1 => peel(ch, p, rel_tol),
        (t, r) if t == p + 1 && r == p => {
            let bc = peel(&ch.reciprocal(), p, rel_tol)?;
            let t_mats = std::array::from_fn(|k| bc.r_mats[k].transpose());
            let r_mats = std::array::from_fn(|k| bc.t_mats[k].transpose());
            let transformed = bc.transformed.reciprocal();
            Ok(BasisChange { t_mats, r_mats, transformed })
        }
        (t, r) => Err(Error::ShapeMismatch(format!("expected a {p}x{} network, got {t}x{r}", p + 1))),
    }
}

fn peel(ch: &ChannelSet, p: usize, rel_tol: f64) -> Result<BasisChange> {
    let n = p + 1;
    let mut t_mats: [CMat; 3] = std::array::from_fn(|_| CMat::zeros(p, p));
    let mut r_mats: [CMat; 3] = std::array::from_fn(|_| CMat::zeros(n, n));
    // columns span the transmit directions not yet assigned
    let mut basis: [CMat; 3] = std::array::from_fn(|_| CMat::identity(p, p));
    let mut d = 0;
    loop {
        let m_d = p - 2 * d;
        let n_d = m_d + 1;
        if m_d == 0 {
            for r in r_mats.iter_mut() {
                r[(d, d)] = C64::new(1.0, 0.0);
            }
            break;
        }
        let core: [[CMat; 3]; 3] = std::array::from_fn(|j| {
            std::array::from_fn(|i| ch.h(j, i).rows(d, n_d) * &basis[i])
        });
        let mut row_a = Vec::with_capacity(3);
        let mut row_c = Vec::with_capacity(3);
        for k in 0..3 {
            row_a.push(unit_left_null_row(&core[k][next(k)], rel_tol, "receive row a")?);
            row_c.push(unit_left_null_row(&core[k][prev(k)], rel_tol, "receive row c")?);
        }
        for k in 0..3 {
            r_mats[k].view_mut((d, d), (1, n_d)).copy_from(&row_a[k]);
            r_mats[k].view_mut((p - d, d), (1, n_d)).copy_from(&row_c[k]);
        }
        if m_d == 1 {
            for k in 0..3 {
                let mut b = basis[k].clone();
                linalg::canonical_unit(&mut b);
                t_mats[k].set_column(d, &b.column(0));
            }
            break;
        }
        for k in 0..3 {
            // silent at row c of receiver k-1 and at row a of receiver k+1
            let u = &row_c[prev(k)] * &core[prev(k)][k];
            let w = &row_a[next(k)] * &core[next(k)][k];
            let both = linalg::vstack(m_d, &[&u, &w]);
            let inner = linalg::null_space(&both, rel_tol);
            if inner.ncols() != m_d - 2 {
                return Err(Error::DegenerateChannel(format!(
                    "transmit intersection has dimension {}, expected {}",
                    inner.ncols(),
                    m_d - 2
                )));
            }
            let inner_h = inner.adjoint();
            let col_a = unit_null_vector(&linalg::vstack(m_d, &[&u, &inner_h]), rel_tol, "transmit column a")?;
            let col_c = unit_null_vector(&linalg::vstack(m_d, &[&w, &inner_h]), rel_tol, "transmit column c")?;
            t_mats[k].set_column(d, &(&basis[k] * col_a).column(0));
            t_mats[k].set_column(p - 1 - d, &(&basis[k] * col_c).column(0));
            basis[k] = &basis[k] * inner;
        }
        d += 1;
    }
    for k in 0..3 {
        let s = linalg::singular_values(&t_mats[k]);
        let s_r = linalg::singular_values(&r_mats[k]);
        for (what, s) in [("transmit", s), ("receive", s_r)] {
            let last = *s.last().expect("nonempty");
            if last <= rel_tol * s[0] {
                return Err(Error::DegenerateChannel(format!(
                    "{what} transformation of user {k} is not invertible"
                )));
            }
        }
    }
    let h = std::array::from_fn(|j| std::array::from_fn(|i| &r_mats[j] * ch.h(j, i) * &t_mats[i]));
    let transformed = ChannelSet::from_links(p, n, ch.flavor(), ch.seed(), 1, h)?;
    Ok(BasisChange { t_mats, r_mats, transformed })
}

/// Checks the transformed links against a zero mask. Residuals are entry
/// magnitudes relative to the largest transformed entry over all links.
pub fn verify_connectivity(bc: &BasisChange, mask: &ZeroMask, pattern_tol: f64) -> Result<ZeroPatternReport> {
    let ch = &bc.transformed;
    if (ch.rx_dim(), ch.tx_dim()) != (mask.rows, mask.cols) {
        return Err(Error::ShapeMismatch(format!(
            "mask is {}x{}, links are {}x{}",
            mask.rows,
            mask.cols,
            ch.rx_dim(),
            ch.tx_dim()
        )));
    }
    let scale = ch
        .links()
        .iter()
        .flatten()
        .flat_map(|a| a.iter().map(|x| x.norm()))
        .fold(0.0_f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut max_residual = 0.0_f64;
    let residuals = (0..3)
        .map(|j| {
            (0..3)
                .map(|i| {
                    let a = ch.h(j, i);
                    (0..mask.rows * mask.cols)
                        .map(|k| {
                            let (r, c) = (k / mask.cols, k % mask.cols);
                            if mask.is_zero(j, i, r, c) {
                                let v = a[(r, c)].norm() / scale;
                                max_residual = max_residual.max(v);
                                v
                            } else {
                                0.0
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(ZeroPatternReport { residuals, max_residual, pattern_tol, pass: max_residual <= pattern_tol })
}

/// The normalized `2 x 3` channel whose change of basis is the identity:
/// `H_{k-1,k} = [[0,0],[1,0],[0,1]]`, `H_{k+1,k} = [[1,0],[0,1],[0,0]]`,
/// direct links drawn from `seed`.
pub fn identity_check_channel(seed: u64) -> ChannelSet {
    let base = ChannelSet::generate(2, 3, Flavor::Constant, seed).expect("valid shape");
    let one = C64::new(1.0, 0.0);
    let mut from_next = CMat::zeros(3, 2);
    from_next[(1, 0)] = one;
    from_next[(2, 1)] = one;
    let mut from_prev = CMat::zeros(3, 2);
    from_prev[(0, 0)] = one;
    from_prev[(1, 1)] = one;
    let h = std::array::from_fn(|j| {
        std::array::from_fn(|i| {
            if i == j {
                base.h(j, i).clone()
            } else if i == next(j) {
                from_next.clone()
            } else {
                from_prev.clone()
            }
        })
    });
    ChannelSet::from_links(2, 3, Flavor::Constant, seed, 1, h).expect("valid shapes")
}

fn label(user: usize, r: Role) -> String {
    match r {
        Role::A(d) => format!("{}a{d}", user + 1),
        Role::C(d) => format!("{}c{d}", user + 1),
        Role::B(d) => format!("{}b{d}", user + 1),
    }
}

/// ASCII connectivity table: one row per receive antenna, one column per
/// transmit antenna of every user. `x` marks a nonzero entry, `.` an entry
/// below `pattern_tol` relative to the largest entry.
pub fn connectivity_table(bc: &BasisChange, pattern_tol: f64) -> String {
    let ch = &bc.transformed;
    let (rows, cols) = (ch.rx_dim(), ch.tx_dim());
    let p = rows.min(cols);
    let rx_role = |r: usize| if rows > cols { role(r, p + 1) } else { role(r, p) };
    let tx_role = |c: usize| if rows > cols { role(c, p) } else { role(c, p + 1) };
    let scale = ch
        .links()
        .iter()
        .flatten()
        .flat_map(|a| a.iter().map(|x| x.norm()))
        .fold(0.0_f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut out = String::new();
    out.push_str(&format!("{:>5} |", "rx"));
    for i in 0..3 {
        for c in 0..cols {
            out.push_str(&format!(" {:>4}", label(i, tx_role(c))));
        }
        out.push_str(" |");
    }
    out.push('\n');
    for j in 0..3 {
        for r in 0..rows {
            out.push_str(&format!("{:>5} |", label(j, rx_role(r))));
            for i in 0..3 {
                for c in 0..cols {
                    let v = ch.h(j, i)[(r, c)].norm() / scale;
                    out.push_str(&format!(" {:>4}", if v <= pattern_tol { "." } else { "x" }));
                }
                out.push_str(" |");
            }
            out.push('\n');
        }
    }
    out
}
