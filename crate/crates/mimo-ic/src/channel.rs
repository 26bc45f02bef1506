//! Seeded generic channels for the three-user network, symbol extensions and
//! reciprocal networks.
//!
//! Every link block is drawn from its own ChaCha stream whose seed mixes the
//! master seed with `(receiver, transmitter, block)`. Extending a channel
//! therefore keeps block 0 equal to the base matrix.

use serde::{Deserialize, Serialize};

use crate::dof_core::AntennaConfig;
use crate::linalg::{self, CMat};
use crate::matrix_json::MatrixJson;
use crate::{Error, Result};

/// Whether extended blocks repeat the base channel or are redrawn per slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    Constant,
    TimeVarying,
}

impl std::str::FromStr for Flavor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(Flavor::Constant),
            "varying" | "time_varying" | "time-varying" => Ok(Flavor::TimeVarying),
            other => Err(Error::InvalidArgument(format!("unknown flavor {other:?}"))),
        }
    }
}

/// Links of a three-user network: `h[j][i]` maps transmitter `i` to
/// receiver `j`.
pub type Links = [[CMat; 3]; 3];

/// The nine link matrices together with how they were produced.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSet {
    m_t: usize,
    m_r: usize,
    flavor: Flavor,
    seed: u64,
    extension: usize,
    h: Links,
}

fn link_seed(seed: u64, j: usize, i: usize, block: usize) -> u64 {
    linalg::mix_seed(&[seed, j as u64, i as u64, block as u64])
}

fn draw_block(seed: u64, j: usize, i: usize, block: usize, m_t: usize, m_r: usize) -> CMat {
    let mut rng = linalg::rng_from(link_seed(seed, j, i, block));
    linalg::complex_gaussian(&mut rng, m_r, m_t)
}

impl ChannelSet {
    /// Draws a generic channel with i.i.d. CN(0, 1) entries.
    pub fn generate(m_t: usize, m_r: usize, flavor: Flavor, seed: u64) -> Result<Self> {
        AntennaConfig::new(m_t, m_r)?;
        let h = std::array::from_fn(|j| std::array::from_fn(|i| draw_block(seed, j, i, 0, m_t, m_r)));
        Ok(Self { m_t, m_r, flavor, seed, extension: 1, h })
    }

    /// Wraps explicit matrices. Shapes must be `(extension m_r) x (extension
    /// m_t)` and, when extended, block diagonal (with identical blocks for the
    /// constant flavor).
    pub fn from_links(
        m_t: usize,
        m_r: usize,
        flavor: Flavor,
        seed: u64,
        extension: usize,
        h: Links,
    ) -> Result<Self> {
        AntennaConfig::new(m_t, m_r)?;
        if extension == 0 {
            return Err(Error::InvalidArgument("extension must be at least 1".into()));
        }
        let ch = Self { m_t, m_r, flavor, seed, extension, h };
        ch.validate()?;
        Ok(ch)
    }

    fn validate(&self) -> Result<()> {
        let (rows, cols) = (self.extension * self.m_r, self.extension * self.m_t);
        for j in 0..3 {
            for i in 0..3 {
                let a = &self.h[j][i];
                if a.shape() != (rows, cols) {
                    return Err(Error::ShapeMismatch(format!(
                        "link ({j},{i}) is {}x{}, expected {rows}x{cols}",
                        a.nrows(),
                        a.ncols()
                    )));
                }
                if !linalg::is_finite(a) {
                    return Err(Error::NonFinite);
                }
                if self.extension == 1 {
                    continue;
                }
                let base = self.block(j, i, 0);
                for b in 0..self.extension {
                    for c in 0..self.extension {
                        let blk = a.view((b * self.m_r, c * self.m_t), (self.m_r, self.m_t));
                        if b != c && blk.iter().any(|x| x.norm() != 0.0) {
                            return Err(Error::ShapeMismatch(format!(
                                "link ({j},{i}) is not block diagonal"
                            )));
                        }
                        if b == c && self.flavor == Flavor::Constant && blk != base {
                            return Err(Error::ShapeMismatch(format!(
                                "link ({j},{i}) has differing blocks under the constant flavor"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Base transmit antennas (per slot).
    pub fn m_t(&self) -> usize {
        self.m_t
    }

    /// Base receive antennas (per slot).
    pub fn m_r(&self) -> usize {
        self.m_r
    }

    pub fn config(&self) -> AntennaConfig {
        AntennaConfig::new(self.m_t, self.m_r).expect("validated")
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn extension(&self) -> usize {
        self.extension
    }

    /// Transmit dimension including the extension.
    pub fn tx_dim(&self) -> usize {
        self.m_t * self.extension
    }

    /// Receive dimension including the extension.
    pub fn rx_dim(&self) -> usize {
        self.m_r * self.extension
    }

    pub fn links(&self) -> &Links {
        &self.h
    }

    /// Link from transmitter `i` to receiver `j`.
    pub fn h(&self, j: usize, i: usize) -> &CMat {
        &self.h[j][i]
    }

    /// Diagonal block `b` of link `(j, i)`.
    pub fn block(&self, j: usize, i: usize, b: usize) -> CMat {
        self.h[j][i].view((b * self.m_r, b * self.m_t), (self.m_r, self.m_t)).into_owned()
    }

    /// Symbol extension over `t` slots. Constant channels repeat the base
    /// matrix; time-varying channels redraw every block after the first.
    pub fn extend(&self, t: usize) -> Result<Self> {
        if t == 0 {
            return Err(Error::InvalidArgument("extension must be at least 1".into()));
        }
        if self.extension != 1 {
            return Err(Error::InvalidArgument("channel is already extended".into()));
        }
        let h = std::array::from_fn(|j| {
            std::array::from_fn(|i| {
                let blocks: Vec<CMat> = (0..t)
                    .map(|b| match (self.flavor, b) {
                        (Flavor::Constant, _) | (_, 0) => self.h[j][i].clone(),
                        (Flavor::TimeVarying, _) => draw_block(self.seed, j, i, b, self.m_t, self.m_r),
                    })
                    .collect();
                linalg::block_diag(&blocks)
            })
        });
        Ok(Self { extension: t, h, ..self.clone() })
    }

    /// Network with transmitters and receivers swapped: `h'[j][i] = h[i][j]^T`.
    pub fn reciprocal(&self) -> Self {
        let h = std::array::from_fn(|j| std::array::from_fn(|i| self.h[i][j].transpose()));
        Self { m_t: self.m_r, m_r: self.m_t, h, ..self.clone() }
    }

    /// Keeps the leading `m_t` transmit and `m_r` receive antennas. Only for
    /// unextended channels.
    pub fn trim(&self, m_t: usize, m_r: usize) -> Result<Self> {
        if self.extension != 1 {
            return Err(Error::InvalidArgument("cannot trim an extended channel".into()));
        }
        if m_t == 0 || m_r == 0 || m_t > self.m_t || m_r > self.m_r {
            return Err(Error::InvalidArgument(format!(
                "cannot trim {}x{} to {m_t}x{m_r}",
                self.m_t, self.m_r
            )));
        }
        let h = std::array::from_fn(|j| {
            std::array::from_fn(|i| self.h[j][i].view((0, 0), (m_r, m_t)).into_owned())
        });
        Ok(Self { m_t, m_r, h, ..self.clone() })
    }

    pub fn to_json(&self) -> ChannelJson {
        ChannelJson {
            m_t: self.m_t,
            m_r: self.m_r,
            flavor: self.flavor,
            seed: self.seed,
            extension: self.extension,
            matrices: self
                .h
                .iter()
                .map(|row| row.iter().map(MatrixJson::from_matrix).collect())
                .collect(),
        }
    }

    pub fn from_json(doc: &ChannelJson) -> Result<Self> {
        if doc.matrices.len() != 3 || doc.matrices.iter().any(|r| r.len() != 3) {
            return Err(Error::ShapeMismatch("expected a 3x3 array of matrices".into()));
        }
        let mut mats = Vec::with_capacity(9);
        for row in &doc.matrices {
            for m in row {
                mats.push(m.to_matrix()?);
            }
        }
        let mut it = mats.into_iter();
        let h: Links = std::array::from_fn(|_| std::array::from_fn(|_| it.next().expect("9 matrices")));
        Self::from_links(doc.m_t, doc.m_r, doc.flavor, doc.seed, doc.extension, h)
    }
}

/// JSON document for a [`ChannelSet`]. `matrices[j][i]` is the link from
/// transmitter `i` to receiver `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelJson {
    pub m_t: usize,
    pub m_r: usize,
    pub flavor: Flavor,
    pub seed: u64,
    pub extension: usize,
    pub matrices: Vec<Vec<MatrixJson>>,
}
