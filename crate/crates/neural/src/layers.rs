//! Parameter slots and the two trainable layer kinds.
//!
//! All parameters of a model live in one flat vector; a layer only records
//! where its weights and bias start. Gradients use the same layout.

use rand::Rng;

use crate::elem::{gemm, Elem};

/// A contiguous range of the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub offset: usize,
    pub len: usize,
}

impl Slot {
    pub fn get<'a, T>(&self, theta: &'a [T]) -> &'a [T] {
        &theta[self.offset..self.offset + self.len]
    }

    pub fn get_mut<'a, T>(&self, theta: &'a mut [T]) -> &'a mut [T] {
        &mut theta[self.offset..self.offset + self.len]
    }

    pub fn end(&self) -> usize {
        self.offset + self.len
    }
}

/// Hands out consecutive slots.
#[derive(Debug, Default)]
pub struct Allocator {
    next: usize,
}

impl Allocator {
    pub fn take(&mut self, len: usize) -> Slot {
        let s = Slot {
            offset: self.next,
            len,
        };
        self.next += len;
        s
    }

    pub fn total(&self) -> usize {
        self.next
    }
}

pub fn fill_uniform<T: Elem, R: Rng + ?Sized>(xs: &mut [T], bound: f64, rng: &mut R) {
    for x in xs {
        *x = T::of(rng.random_range(-bound..=bound));
    }
}

pub fn relu<T: Elem>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

/// Passes `d` where `pre > 0`, zero elsewhere.
pub fn relu_back<T: Elem>(pre: &[T], d: &mut [T]) {
    for (g, &p) in d.iter_mut().zip(pre) {
        if p <= T::zero() {
            *g = T::zero();
        }
    }
}

/// Affine map `y = W x + b` with `W` stored `n_out x n_in`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub n_in: usize,
    pub n_out: usize,
    pub w: Slot,
    pub b: Slot,
}

impl Linear {
    pub fn new(alloc: &mut Allocator, n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_out,
            w: alloc.take(n_in * n_out),
            b: alloc.take(n_out),
        }
    }

    /// `Y = X W^T + b` for a batch `X` of `rows x n_in`.
    pub fn forward<T: Elem>(&self, theta: &[T], x: &[T], rows: usize, y: &mut [T]) {
        let b = self.b.get(theta);
        for r in 0..rows {
            y[r * self.n_out..(r + 1) * self.n_out].copy_from_slice(b);
        }
        gemm(rows, self.n_in, self.n_out, x, false, self.w.get(theta), true, T::one(), y);
    }

    /// Accumulates parameter gradients and, if asked, writes `dX`.
    pub fn backward<T: Elem>(
        &self,
        theta: &[T],
        x: &[T],
        dy: &[T],
        rows: usize,
        grad: &mut [T],
        dx: Option<&mut [T]>,
    ) {
        gemm(self.n_out, rows, self.n_in, dy, true, x, false, T::one(), self.w.get_mut(grad));
        let db = self.b.get_mut(grad);
        for r in 0..rows {
            for (g, &d) in db.iter_mut().zip(&dy[r * self.n_out..(r + 1) * self.n_out]) {
                *g = *g + d;
            }
        }
        if let Some(dx) = dx {
            gemm(rows, self.n_out, self.n_in, dy, false, self.w.get(theta), false, T::zero(), dx);
        }
    }
}

/// Same-padded 1-D convolution; `W` is stored `c_out x (c_in * k)`.
#[derive(Debug, Clone, Copy)]
pub struct Conv1d {
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    pub w: Slot,
    pub b: Slot,
}

impl Conv1d {
    pub fn new(alloc: &mut Allocator, c_in: usize, c_out: usize, k: usize) -> Self {
        assert!(k % 2 == 1, "same padding needs an odd kernel");
        Self {
            c_in,
            c_out,
            k,
            w: alloc.take(c_out * c_in * k),
            b: alloc.take(c_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.c_in * self.k
    }

    fn im2col<T: Elem>(&self, x: &[T], len: usize, col: &mut Vec<T>) {
        let pad = self.k / 2;
        col.clear();
        col.resize(self.c_in * self.k * len, T::zero());
        for c in 0..self.c_in {
            let xc = &x[c * len..(c + 1) * len];
            for j in 0..self.k {
                let row = &mut col[(c * self.k + j) * len..(c * self.k + j + 1) * len];
                // row[t] = xc[t + j - pad]
                let lo = pad.saturating_sub(j);
                let hi = (len + pad).saturating_sub(j).min(len);
                for t in lo..hi {
                    row[t] = xc[t + j - pad];
                }
            }
        }
    }

    pub fn forward<T: Elem>(&self, theta: &[T], x: &[T], len: usize, col: &mut Vec<T>, y: &mut [T]) {
        self.im2col(x, len, col);
        for (o, &b) in self.b.get(theta).iter().enumerate() {
            y[o * len..(o + 1) * len].fill(b);
        }
        gemm(self.c_out, self.c_in * self.k, len, self.w.get(theta), false, col, false, T::one(), y);
    }

    /// Accumulates parameter gradients and, if asked, adds into `dx`.
    #[allow(clippy::too_many_arguments)]
    pub fn backward<T: Elem>(
        &self,
        theta: &[T],
        x: &[T],
        dy: &[T],
        len: usize,
        col: &mut Vec<T>,
        grad: &mut [T],
        dx: Option<&mut [T]>,
    ) {
        let rows = self.c_in * self.k;
        self.im2col(x, len, col);
        gemm(self.c_out, len, rows, dy, false, col, true, T::one(), self.w.get_mut(grad));
        for (o, g) in self.b.get_mut(grad).iter_mut().enumerate() {
            *g = dy[o * len..(o + 1) * len].iter().fold(*g, |a, &d| a + d);
        }
        if let Some(dx) = dx {
            gemm(rows, self.c_out, len, self.w.get(theta), true, dy, false, T::zero(), col);
            let pad = self.k / 2;
            for c in 0..self.c_in {
                for j in 0..self.k {
                    let row = &col[(c * self.k + j) * len..(c * self.k + j + 1) * len];
                    let lo = pad.saturating_sub(j);
                    let hi = (len + pad).saturating_sub(j).min(len);
                    let dxc = &mut dx[c * len..(c + 1) * len];
                    for t in lo..hi {
                        dxc[t + j - pad] = dxc[t + j - pad] + row[t];
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn conv_matches_direct_sum() {
        let mut alloc = Allocator::default();
        let conv = Conv1d::new(&mut alloc, 2, 3, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut theta = vec![0.0f64; alloc.total()];
        fill_uniform(&mut theta, 1.0, &mut rng);
        let len = 7;
        let x: Vec<f64> = (0..2 * len).map(|i| (i as f64 * 0.7).cos()).collect();
        let mut y = vec![0.0; 3 * len];
        conv.forward(&theta, &x, len, &mut Vec::new(), &mut y);
        let w = conv.w.get(&theta);
        for o in 0..3 {
            for t in 0..len {
                let mut s = conv.b.get(&theta)[o];
                for c in 0..2 {
                    for j in 0..5 {
                        let i = t as isize + j as isize - 2;
                        if (0..len as isize).contains(&i) {
                            s += w[o * 10 + c * 5 + j] * x[c * len + i as usize];
                        }
                    }
                }
                assert!((y[o * len + t] - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_backward_is_adjoint() {
        // <dy, conv(x)> is linear in x; its gradient must equal the backward dx
        let mut alloc = Allocator::default();
        let conv = Conv1d::new(&mut alloc, 3, 2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut theta = vec![0.0f64; alloc.total()];
        fill_uniform(&mut theta, 1.0, &mut rng);
        let len = 6;
        let mut x = vec![0.0; 3 * len];
        fill_uniform(&mut x, 1.0, &mut rng);
        let mut dy = vec![0.0; 2 * len];
        fill_uniform(&mut dy, 1.0, &mut rng);
        let mut dx = vec![0.0; 3 * len];
        let mut grad = vec![0.0; theta.len()];
        conv.backward(&theta, &x, &dy, len, &mut Vec::new(), &mut grad, Some(&mut dx));
        let f = |x: &[f64], theta: &[f64]| {
            let mut y = vec![0.0; 2 * len];
            conv.forward(theta, x, len, &mut Vec::new(), &mut y);
            y.iter().zip(&dy).map(|(a, b)| a * b).sum::<f64>()
        };
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += 1.0;
            assert!((f(&xp, &theta) - f(&x, &theta) - dx[i]).abs() < 1e-10);
        }
        for i in 0..theta.len() {
            let mut tp = theta.clone();
            tp[i] += 1e-6;
            let fd = (f(&x, &tp) - f(&x, &theta)) / 1e-6;
            assert!((fd - grad[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn linear_batch_backward() {
        let mut alloc = Allocator::default();
        let lin = Linear::new(&mut alloc, 4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut theta = vec![0.0f64; alloc.total()];
        fill_uniform(&mut theta, 1.0, &mut rng);
        let mut x = vec![0.0; 2 * 4];
        fill_uniform(&mut x, 1.0, &mut rng);
        let mut dy = vec![0.0; 2 * 3];
        fill_uniform(&mut dy, 1.0, &mut rng);
        let mut grad = vec![0.0; theta.len()];
        let mut dx = vec![0.0; 8];
        lin.backward(&theta, &x, &dy, 2, &mut grad, Some(&mut dx));
        let f = |x: &[f64], theta: &[f64]| {
            let mut y = vec![0.0; 6];
            lin.forward(theta, x, 2, &mut y);
            y.iter().zip(&dy).map(|(a, b)| a * b).sum::<f64>()
        };
        for i in 0..theta.len() {
            let mut tp = theta.clone();
            tp[i] += 1.0;
            assert!((f(&x, &tp) - f(&x, &theta) - grad[i]).abs() < 1e-10);
        }
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += 1.0;
            assert!((f(&xp, &theta) - f(&x, &theta) - dx[i]).abs() < 1e-10);
        }
    }
}
