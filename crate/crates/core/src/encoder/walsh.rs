//! Sylvester-Hadamard (Walsh) codes and the fast Walsh-Hadamard transform.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Dense `L x L` matrix of +-1 entries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WalshMatrix {
    order: usize,
    entries: Vec<i8>,
}

impl WalshMatrix {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn get(&self, row: usize, col: usize) -> i8 {
        self.entries[row * self.order + col]
    }

    pub fn row(&self, row: usize) -> &[i8] {
        &self.entries[row * self.order..(row + 1) * self.order]
    }
}

/// Builds `H_L` by doubling: `H_1 = [1]`, `H_2n = [[H_n, H_n], [H_n, -H_n]]`.
pub fn walsh_matrix(order: usize) -> Result<WalshMatrix> {
    if !order.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(order));
    }
    let mut entries = vec![1i8];
    let mut n = 1;
    while n < order {
        let m = 2 * n;
        let mut next = vec![0i8; m * m];
        for r in 0..n {
            for c in 0..n {
                let v = entries[r * n + c];
                next[r * m + c] = v;
                next[r * m + c + n] = v;
                next[(r + n) * m + c] = v;
                next[(r + n) * m + c + n] = -v;
            }
        }
        entries = next;
        n = m;
    }
    Ok(WalshMatrix { order, entries })
}

/// Entry `(row, col)` of the Sylvester matrix without building it:
/// `(-1)^popcount(row & col)`.
#[inline]
pub fn walsh_entry(row: usize, col: usize) -> i8 {
    if (row & col).count_ones().is_multiple_of(2) {
        1
    } else {
        -1
    }
}

/// In-place unnormalised fast Walsh-Hadamard transform, `x <- H x`.
pub fn fwht(data: &mut [f64]) -> Result<()> {
    let n = data.len();
    if !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    let mut half = 1;
    while half < n {
        for block in data.chunks_exact_mut(2 * half) {
            let (a, b) = block.split_at_mut(half);
            for (x, y) in a.iter_mut().zip(b.iter_mut()) {
                let (s, d) = (*x + *y, *x - *y);
                *x = s;
                *y = d;
            }
        }
        half *= 2;
    }
    Ok(())
}

/// Which Hadamard row codes each pixel. Row 0 (all ones) is never used: it
/// is pure DC and indistinguishable from background light.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalshAssignment {
    pub code_length: usize,
    /// Indexed by raster pixel id.
    pub pixel_to_row: Vec<usize>,
}

impl WalshAssignment {
    /// Pixel `i` gets row `i + 1`.
    pub fn raster(pixel_count: usize, code_length: usize) -> Result<Self> {
        Self::new(code_length, (1..=pixel_count).collect())
    }

    /// Smallest power-of-two code length with a row for every pixel.
    pub fn minimal(pixel_count: usize) -> Result<Self> {
        Self::raster(pixel_count, (pixel_count + 1).next_power_of_two())
    }

    pub fn new(code_length: usize, pixel_to_row: Vec<usize>) -> Result<Self> {
        if !code_length.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(code_length));
        }
        if code_length < pixel_to_row.len() + 1 {
            return Err(Error::InvalidParameter(format!(
                "code length {code_length} cannot code {} pixels",
                pixel_to_row.len()
            )));
        }
        let mut seen = vec![false; code_length];
        for &r in &pixel_to_row {
            if r == 0 || r >= code_length {
                return Err(Error::InvalidParameter(format!(
                    "code row {r} outside 1..{code_length}"
                )));
            }
            if std::mem::replace(&mut seen[r], true) {
                return Err(Error::InvalidParameter(format!(
                    "code row {r} assigned twice"
                )));
            }
        }
        Ok(Self {
            code_length,
            pixel_to_row,
        })
    }

    pub fn pixel_count(&self) -> usize {
        self.pixel_to_row.len()
    }
}
