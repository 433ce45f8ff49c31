//! Iterative radix-2 decimation-in-time FFT.
//!
//! Twiddles are computed directly with `sin`/`cos` for each index rather than
//! by repeated multiplication, which keeps the error at 65536 points near
//! machine precision. Plans are cached per thread.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::rc::Rc;

use num_complex::Complex64;

use crate::{Error, Result};

struct Plan {
    n: usize,
    /// `exp(-2 pi i k / n)` for `k < n / 2`.
    twiddles: Vec<Complex64>,
    bitrev: Vec<u32>,
}

impl Plan {
    fn new(n: usize) -> Self {
        let bits = n.trailing_zeros();
        let twiddles = (0..n / 2)
            .map(|k| {
                let theta = -2.0 * PI * k as f64 / n as f64;
                Complex64::new(theta.cos(), theta.sin())
            })
            .collect();
        let bitrev = (0..n as u32)
            .map(|i| {
                if bits == 0 {
                    0
                } else {
                    i.reverse_bits() >> (32 - bits)
                }
            })
            .collect();
        Self {
            n,
            twiddles,
            bitrev,
        }
    }

    fn run(&self, data: &mut [Complex64]) {
        let n = self.n;
        for i in 0..n {
            let j = self.bitrev[i] as usize;
            if i < j {
                data.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let stride = n / len;
            for block in data.chunks_exact_mut(len) {
                let (lo, hi) = block.split_at_mut(half);
                for (k, (a, b)) in lo.iter_mut().zip(hi.iter_mut()).enumerate() {
                    let t = *b * self.twiddles[k * stride];
                    *b = *a - t;
                    *a += t;
                }
            }
            len *= 2;
        }
    }
}

thread_local! {
    static PLANS: RefCell<HashMap<usize, Rc<Plan>>> = RefCell::new(HashMap::new());
}

fn plan(n: usize) -> Rc<Plan> {
    PLANS.with(|p| {
        p.borrow_mut()
            .entry(n)
            .or_insert_with(|| Rc::new(Plan::new(n)))
            .clone()
    })
}

/// Forward DFT in place: `X[k] = sum_n x[n] exp(-2 pi i n k / N)`.
pub fn fft_in_place(data: &mut [Complex64]) -> Result<()> {
    let n = data.len();
    if !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    plan(n).run(data);
    Ok(())
}

/// Inverse DFT in place, including the `1/N` factor.
pub fn ifft_in_place(data: &mut [Complex64]) -> Result<()> {
    for x in data.iter_mut() {
        *x = x.conj();
    }
    fft_in_place(data)?;
    let scale = 1.0 / data.len() as f64;
    for x in data.iter_mut() {
        *x = x.conj() * scale;
    }
    Ok(())
}

/// Forward transform of a real sequence.
pub fn fft_real(samples: &[f64]) -> Result<Vec<Complex64>> {
    let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft_in_place(&mut buf)?;
    Ok(buf)
}
