//! Minimal radix-2 FFT for symmetric-Toeplitz matrix-vector products.
//!
//! Used by the quadratic (`p = 2`) solver path on one-dimensional grids,
//! where the pair weights depend only on the integer node offset. The
//! Toeplitz product is embedded in a circulant of power-of-two length.

#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    #[inline]
    fn mul(self, other: Complex) -> Complex {
        Complex {
            re: self.re * other.re - self.im * other.im,
            im: self.re * other.im + self.im * other.re,
        }
    }
}

/// In-place iterative Cooley-Tukey; `invert` applies the conjugate transform
/// and the 1/len normalization.
pub(crate) fn fft(buf: &mut [Complex], invert: bool) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two());
    // bit reversal permutation
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            buf.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let ang = 2.0 * std::f64::consts::PI / len as f64 * if invert { -1.0 } else { 1.0 };
        let wlen = Complex {
            re: ang.cos(),
            im: ang.sin(),
        };
        let mut i = 0;
        while i < n {
            let mut w = Complex { re: 1.0, im: 0.0 };
            for k in 0..len / 2 {
                let u = buf[i + k];
                let v = buf[i + k + len / 2].mul(w);
                buf[i + k] = Complex {
                    re: u.re + v.re,
                    im: u.im + v.im,
                };
                buf[i + k + len / 2] = Complex {
                    re: u.re - v.re,
                    im: u.im - v.im,
                };
                w = w.mul(wlen);
            }
            i += len;
        }
        len <<= 1;
    }
    if invert {
        let inv = 1.0 / n as f64;
        for c in buf.iter_mut() {
            c.re *= inv;
            c.im *= inv;
        }
    }
}

/// Precomputed circulant embedding of a symmetric Toeplitz matrix
/// `T[i][j] = first_row[|i - j|]` of size `n`.
pub(crate) struct ToeplitzConv {
    n: usize,
    m: usize,
    spectrum: Vec<Complex>,
}

impl ToeplitzConv {
    pub(crate) fn new(first_row: &[f64]) -> ToeplitzConv {
        let n = first_row.len();
        let m = (2 * n).next_power_of_two();
        // circulant first column: [r0, r1, .., r_{n-1}, 0.., r_{n-1}, .., r1]
        let mut col = vec![Complex::default(); m];
        for (d, &v) in first_row.iter().enumerate() {
            col[d].re = v;
            if d > 0 {
                col[m - d].re = v;
            }
        }
        fft(&mut col, false);
        ToeplitzConv {
            n,
            m,
            spectrum: col,
        }
    }

    /// `out[i] = sum_j first_row[|i-j|] * x[j]`.
    pub(crate) fn apply(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        let mut buf = vec![Complex::default(); self.m];
        for (i, &v) in x.iter().enumerate() {
            buf[i].re = v;
        }
        fft(&mut buf, false);
        for (b, s) in buf.iter_mut().zip(&self.spectrum) {
            *b = b.mul(*s);
        }
        fft(&mut buf, true);
        for i in 0..self.n {
            out[i] = buf[i].re;
        }
    }
}
