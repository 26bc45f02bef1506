//! JSON form of complex matrices: shape plus row-major `[re, im]` pairs.

use serde::{Deserialize, Serialize};

use crate::linalg::{CMat, C64};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<[f64; 2]>,
}

impl MatrixJson {
    pub fn from_matrix(a: &CMat) -> Self {
        let mut data = Vec::with_capacity(a.len());
        for r in 0..a.nrows() {
            for c in 0..a.ncols() {
                let x = a[(r, c)];
                data.push([x.re, x.im]);
            }
        }
        Self { rows: a.nrows(), cols: a.ncols(), data }
    }

    pub fn to_matrix(&self) -> Result<CMat> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} matrix carries {} entries",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        if self.data.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(CMat::from_fn(self.rows, self.cols, |r, c| {
            let [re, im] = self.data[r * self.cols + c];
            C64::new(re, im)
        }))
    }
}
