//! Multi-scale residual trunk: one branch per kernel size, each a stem
//! convolution, pre-activation residual blocks, temporal average pooling and
//! a ReLU projection. Branch outputs are concatenated into the feature vector.

use rand::Rng;

use crate::elem::Elem;
use crate::layers::{fill_uniform, relu, relu_back, Allocator, Conv1d, Linear};
use crate::model::Dims;

#[derive(Debug, Clone)]
struct Block {
    conv1: Conv1d,
    conv2: Conv1d,
}

#[derive(Debug, Clone)]
struct Branch {
    stem: Conv1d,
    blocks: Vec<Block>,
    proj: Linear,
}

#[derive(Debug, Clone)]
pub struct Trunk {
    channels: usize,
    length: usize,
    width: usize,
    proj: usize,
    branches: Vec<Branch>,
}

/// Activations kept for the backward pass of one sample.
#[derive(Debug, Default)]
pub struct TrunkCache<T> {
    /// Per branch: block inputs `a_0..a_B` and the first convolution outputs.
    acts: Vec<Vec<Vec<T>>>,
    mids: Vec<Vec<Vec<T>>>,
    pooled: Vec<Vec<T>>,
    proj_pre: Vec<Vec<T>>,
}

impl Trunk {
    pub fn new(alloc: &mut Allocator, dims: &Dims) -> Self {
        let branches = dims
            .kernels
            .iter()
            .map(|&k| Branch {
                stem: Conv1d::new(alloc, dims.channels, dims.width, k),
                blocks: (0..dims.blocks)
                    .map(|_| Block {
                        conv1: Conv1d::new(alloc, dims.width, dims.width, k),
                        conv2: Conv1d::new(alloc, dims.width, dims.width, k),
                    })
                    .collect(),
                proj: Linear::new(alloc, dims.width, dims.proj),
            })
            .collect();
        Self {
            channels: dims.channels,
            length: dims.length,
            width: dims.width,
            proj: dims.proj,
            branches,
        }
    }

    pub fn features(&self) -> usize {
        self.proj * self.branches.len()
    }

    pub fn input_len(&self) -> usize {
        self.channels * self.length
    }

    pub fn init<T: Elem, R: Rng + ?Sized>(&self, theta: &mut [T], rng: &mut R) {
        for br in &self.branches {
            let he = |c: &Conv1d| (3.0 / c.fan_in() as f64).sqrt();
            fill_uniform(br.stem.w.get_mut(theta), he(&br.stem), rng);
            for b in &br.blocks {
                fill_uniform(b.conv1.w.get_mut(theta), he(&b.conv1), rng);
                // residual branches start small so the stack begins near identity
                fill_uniform(b.conv2.w.get_mut(theta), 0.25 * he(&b.conv2), rng);
            }
            fill_uniform(br.proj.w.get_mut(theta), (3.0 / br.proj.n_in as f64).sqrt(), rng);
        }
    }

    /// Feature vector of one `channels x length` input.
    pub fn forward<T: Elem>(&self, theta: &[T], x: &[T], cache: &mut TrunkCache<T>, out: &mut [T]) {
        assert_eq!(x.len(), self.input_len(), "trunk input shape");
        let (len, w) = (self.length, self.width);
        let mut col = Vec::new();
        cache.acts.clear();
        cache.mids.clear();
        cache.pooled.clear();
        cache.proj_pre.clear();
        for (bi, br) in self.branches.iter().enumerate() {
            let mut acts = Vec::with_capacity(br.blocks.len() + 1);
            let mut mids = Vec::with_capacity(br.blocks.len());
            let mut a = vec![T::zero(); w * len];
            br.stem.forward(theta, x, len, &mut col, &mut a);
            for blk in &br.blocks {
                let u: Vec<T> = a.iter().map(|&v| relu(v)).collect();
                let mut c1 = vec![T::zero(); w * len];
                blk.conv1.forward(theta, &u, len, &mut col, &mut c1);
                let v: Vec<T> = c1.iter().map(|&t| relu(t)).collect();
                let mut c2 = vec![T::zero(); w * len];
                blk.conv2.forward(theta, &v, len, &mut col, &mut c2);
                let next: Vec<T> = a.iter().zip(&c2).map(|(&p, &q)| p + q).collect();
                acts.push(a);
                mids.push(c1);
                a = next;
            }
            let inv = T::one() / T::of(len as f64);
            let pooled: Vec<T> = (0..w)
                .map(|c| a[c * len..(c + 1) * len].iter().fold(T::zero(), |s, &v| s + relu(v)) * inv)
                .collect();
            acts.push(a);
            let mut pre = vec![T::zero(); self.proj];
            br.proj.forward(theta, &pooled, 1, &mut pre);
            for (o, &p) in out[bi * self.proj..(bi + 1) * self.proj].iter_mut().zip(&pre) {
                *o = relu(p);
            }
            cache.acts.push(acts);
            cache.mids.push(mids);
            cache.pooled.push(pooled);
            cache.proj_pre.push(pre);
        }
    }

    /// Accumulates parameter gradients for upstream feature gradient `dout`.
    pub fn backward<T: Elem>(&self, theta: &[T], x: &[T], cache: &TrunkCache<T>, dout: &[T], grad: &mut [T]) {
        let (len, w) = (self.length, self.width);
        let mut col = Vec::new();
        let inv = T::one() / T::of(len as f64);
        for (bi, br) in self.branches.iter().enumerate() {
            let acts = &cache.acts[bi];
            let mids = &cache.mids[bi];
            let mut dpre = dout[bi * self.proj..(bi + 1) * self.proj].to_vec();
            relu_back(&cache.proj_pre[bi], &mut dpre);
            let mut dpooled = vec![T::zero(); w];
            br.proj.backward(theta, &cache.pooled[bi], &dpre, 1, grad, Some(&mut dpooled));
            let top = &acts[br.blocks.len()];
            let mut da = vec![T::zero(); w * len];
            for c in 0..w {
                let g = dpooled[c] * inv;
                for t in 0..len {
                    if top[c * len + t] > T::zero() {
                        da[c * len + t] = g;
                    }
                }
            }
            for (i, blk) in br.blocks.iter().enumerate().rev() {
                let a = &acts[i];
                let c1 = &mids[i];
                let v: Vec<T> = c1.iter().map(|&t| relu(t)).collect();
                let mut dv = vec![T::zero(); w * len];
                blk.conv2.backward(theta, &v, &da, len, &mut col, grad, Some(&mut dv));
                relu_back(c1, &mut dv);
                let u: Vec<T> = a.iter().map(|&t| relu(t)).collect();
                let mut du = vec![T::zero(); w * len];
                blk.conv1.backward(theta, &u, &dv, len, &mut col, grad, Some(&mut du));
                relu_back(a, &mut du);
                for (d, &g) in da.iter_mut().zip(&du) {
                    *d = *d + g;
                }
            }
            br.stem.backward(theta, x, &da, len, &mut col, grad, None);
        }
    }
}
