//! Double-double matrix arithmetic for residuals and traces whose exact
//! value is far smaller than the rounding error of plain products.

use crate::model::Matrix;

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

#[inline]
fn fast_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi)/2` entrywise.
#[derive(Debug, Clone, PartialEq)]
pub struct DdMatrix {
    pub hi: Matrix,
    pub lo: Matrix,
}

impl DdMatrix {
    pub fn from_f64(m: &Matrix) -> Self {
        DdMatrix { hi: m.clone(), lo: Matrix::zeros(m.nrows(), m.ncols()) }
    }

    pub fn to_f64(&self) -> Matrix {
        &self.hi + &self.lo
    }

    pub fn shape(&self) -> (usize, usize) {
        self.hi.shape()
    }

    pub fn add(&self, other: &DdMatrix) -> DdMatrix {
        let (r, c) = self.shape();
        let mut out = DdMatrix { hi: Matrix::zeros(r, c), lo: Matrix::zeros(r, c) };
        for i in 0..r * c {
            let (s, e) = two_sum(self.hi[i], other.hi[i]);
            let (h, l) = fast_two_sum(s, e + self.lo[i] + other.lo[i]);
            out.hi[i] = h;
            out.lo[i] = l;
        }
        out
    }

    pub fn add_f64(&self, other: &Matrix) -> DdMatrix {
        self.add(&DdMatrix::from_f64(other))
    }

    pub fn transpose(&self) -> DdMatrix {
        DdMatrix { hi: self.hi.transpose(), lo: self.lo.transpose() }
    }

    /// `self * other` with compensated dot products: the `hi*hi` terms are
    /// accumulated exactly up to a final rounding, cross terms in plain
    /// precision.
    pub fn mul(&self, other: &DdMatrix) -> DdMatrix {
        let (n, k) = self.shape();
        let m = other.hi.ncols();
        assert_eq!(k, other.hi.nrows(), "inner dimensions differ");
        let mut out = DdMatrix { hi: Matrix::zeros(n, m), lo: Matrix::zeros(n, m) };
        for j in 0..m {
            for i in 0..n {
                let (mut s, mut c) = (0.0, 0.0);
                for l in 0..k {
                    let (ah, al) = (self.hi[(i, l)], self.lo[(i, l)]);
                    let (bh, bl) = (other.hi[(l, j)], other.lo[(l, j)]);
                    let (p, e) = two_prod(ah, bh);
                    let (t, f) = two_sum(s, p);
                    s = t;
                    c += f + e + ah * bl + al * bh;
                }
                let (h, l) = fast_two_sum(s, c);
                out.hi[(i, j)] = h;
                out.lo[(i, j)] = l;
            }
        }
        out
    }

    pub fn mul_f64(&self, other: &Matrix) -> DdMatrix {
        self.mul(&DdMatrix::from_f64(other))
    }

    pub fn trace(&self) -> f64 {
        let (mut s, mut c) = (0.0, 0.0);
        for i in 0..self.hi.nrows().min(self.hi.ncols()) {
            let (t, e) = two_sum(s, self.hi[(i, i)]);
            s = t;
            c += e + self.lo[(i, i)];
        }
        s + c
    }
}

pub fn lift(m: &Matrix) -> DdMatrix {
    DdMatrix::from_f64(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_recovers_cancellation() {
        // (1 + 2^-30)(1 - 2^-30) = 1 - 2^-60, lost in plain arithmetic
        let e = 2f64.powi(-30);
        let a = Matrix::from_row_slice(1, 2, &[1.0 + e, -1.0]);
        let b = Matrix::from_row_slice(2, 1, &[1.0 - e, 1.0]);
        let plain = (&a * &b)[(0, 0)];
        let dd = lift(&a).mul_f64(&b);
        assert_eq!(plain, 0.0);
        assert_eq!(dd.hi[(0, 0)], -2f64.powi(-60));
    }

    #[test]
    fn add_keeps_low_part() {
        let a = lift(&Matrix::from_element(1, 1, 1.0));
        let b = lift(&Matrix::from_element(1, 1, 1e-20));
        let s = a.add(&b);
        assert_eq!(s.hi[(0, 0)], 1.0);
        assert_eq!(s.lo[(0, 0)], 1e-20);
        assert_eq!(s.add_f64(&Matrix::from_element(1, 1, -1.0)).to_f64()[(0, 0)], 1e-20);
    }
}
