//! The full model: trunk, weight generator (or initial-state projection) and
//! decoder, with every trainable parameter in one flat vector.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use twoport_core::{Alignment, Component, ComponentType, Configuration, ValueGrid};

use crate::decoder::{self, DecoderDims, DecoderLayout, Token, TokenCounts, SequenceLoss};
use crate::elem::Elem;
use crate::error::{NeuralError, Result};
use crate::hypernet::{Trunk, TrunkCache};
use crate::layers::{fill_uniform, Allocator, Linear, Slot};

/// Architecture sizes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub channels: usize,
    pub length: usize,
    /// Channels of every convolution after the stem.
    pub width: usize,
    /// One branch per kernel size.
    pub kernels: Vec<usize>,
    pub blocks: usize,
    /// Per-branch projection size.
    pub proj: usize,
    pub decoder: DecoderDims,
    /// Decoding cap.
    pub max_len: usize,
}

impl Dims {
    /// Width 32, projection 256.
    pub fn full() -> Self {
        Self {
            channels: 4,
            length: 512,
            width: 32,
            kernels: vec![3, 5, 7],
            blocks: 3,
            proj: 256,
            decoder: DecoderDims::default(),
            max_len: 12,
        }
    }

    /// Narrower trunk for CPU training runs.
    pub fn desk() -> Self {
        Self {
            width: 16,
            proj: 64,
            ..Self::full()
        }
    }

    /// Tiny sizes for finite-difference checks.
    pub fn test_scale() -> Self {
        Self {
            channels: 4,
            length: 16,
            width: 8,
            kernels: vec![3, 5, 7],
            blocks: 3,
            proj: 4,
            decoder: DecoderDims {
                hidden: 8,
                emb_alignment: 2,
                emb_type: 3,
                emb_value: 3,
                n_types: 3,
                n_values: 5,
            },
            max_len: 12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.decoder;
        let ok = self.channels > 0
            && self.length > 0
            && self.width > 0
            && !self.kernels.is_empty()
            && self.kernels.iter().all(|k| k % 2 == 1)
            && self.proj > 0
            && d.hidden > 0
            && d.n_types > 0
            && d.n_values > 0
            && self.max_len > 0;
        if ok {
            Ok(())
        } else {
            Err(NeuralError::invalid(format!("unusable architecture {self:?}")))
        }
    }
}

/// Which decoder weights come from the hypernetwork.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// All of `W_g`.
    HyperFull,
    /// Only the GRU block; heads and tables are shared parameters.
    HyperGruOnly,
    /// None; the features set the initial hidden state instead.
    Vanilla,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::HyperFull, Mode::HyperGruOnly, Mode::Vanilla];

    pub fn name(self) -> &'static str {
        match self {
            Mode::HyperFull => "hyper-full",
            Mode::HyperGruOnly => "hyper-gru-only",
            Mode::Vanilla => "vanilla",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = NeuralError;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| NeuralError::invalid(format!("unknown mode `{s}` (hyper-full, hyper-gru-only, vanilla)")))
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A training or evaluation sample: normalized spectrum plus gold tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub spectrum: Vec<T>,
    pub tokens: Vec<Token>,
}

/// Decoder tokens of a configuration; values are quantized onto `grid`.
pub fn tokens_of(config: &Configuration, grid: &ValueGrid) -> Result<Vec<Token>> {
    config
        .components()
        .iter()
        .map(|c| {
            let bin = match c.bin {
                Some(b) => b,
                None => grid.quantize(c.value, c.ctype)?,
            };
            Ok(Token {
                alignment: c.alignment.index(),
                ctype: c.ctype.index(),
                value: bin as usize,
            })
        })
        .collect()
}

/// Configuration of decoded tokens with every value at its bin's grid point.
/// `None` for an empty sequence.
pub fn config_of(tokens: &[Token], grid: &ValueGrid) -> Result<Option<Configuration>> {
    if tokens.is_empty() {
        return Ok(None);
    }
    let comps = tokens
        .iter()
        .map(|t| {
            let a = Alignment::from_index(t.alignment);
            let c = ComponentType::from_index(t.ctype);
            match (a, c) {
                (Some(a), Some(c)) if t.value < grid.n_v() => Ok(Component::on_grid(a, c, t.value as u8, grid)),
                _ => Err(NeuralError::invalid(format!("token {t:?} is outside the vocabulary"))),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Some(Configuration::new(comps)?))
}

/// Parameter layout and sizes of a model; owns no weights.
#[derive(Debug, Clone)]
pub struct Architecture {
    pub dims: Dims,
    pub mode: Mode,
    pub layout: DecoderLayout,
    trunk: Trunk,
    /// Weight generator (hyper modes) or initial-state projection (vanilla).
    head: Linear,
    /// Decoder weights not produced by the generator: a suffix of `W_g`.
    shared: Slot,
    n_params: usize,
}

impl Architecture {
    pub fn new(dims: Dims, mode: Mode) -> Result<Self> {
        dims.validate()?;
        let layout = DecoderLayout::new(dims.decoder);
        let mut alloc = Allocator::default();
        let trunk = Trunk::new(&mut alloc, &dims);
        let features = trunk.features();
        let head = Linear::new(
            &mut alloc,
            features,
            match mode {
                Mode::HyperFull => layout.n_w,
                Mode::HyperGruOnly => layout.gru_len,
                Mode::Vanilla => dims.decoder.hidden,
            },
        );
        let generated = Self::generated_len(mode, &layout);
        let shared = alloc.take(layout.n_w - generated);
        // the split between generated prefix and shared suffix must cover W_g exactly
        assert_eq!(generated + shared.len, layout.n_w);
        Ok(Self {
            dims,
            mode,
            layout,
            trunk,
            head,
            shared,
            n_params: alloc.total(),
        })
    }

    fn generated_len(mode: Mode, layout: &DecoderLayout) -> usize {
        match mode {
            Mode::HyperFull => layout.n_w,
            Mode::HyperGruOnly => layout.gru_len,
            Mode::Vanilla => 0,
        }
    }

    /// Length of the decoder weight vector `W_g`.
    pub fn n_w(&self) -> usize {
        self.layout.n_w
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn features(&self) -> usize {
        self.trunk.features()
    }

    pub fn input_len(&self) -> usize {
        self.trunk.input_len()
    }

    fn generated(&self) -> usize {
        Self::generated_len(self.mode, &self.layout)
    }

    /// Fresh parameters. The generator starts with small weights and a bias
    /// equal to a standard decoder initialization, so the initial decoder is
    /// an ordinary randomly initialized GRU nudged by the spectrum.
    pub fn init<T: Elem>(&self, seed: u64) -> Vec<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta = vec![T::zero(); self.n_params];
        self.trunk.init(&mut theta, &mut rng);
        let mut w_g = vec![T::zero(); self.layout.n_w];
        self.layout.init(&mut w_g, &mut rng);
        let f = self.features() as f64;
        match self.mode {
            Mode::Vanilla => {
                fill_uniform(self.head.w.get_mut(&mut theta), (3.0 / f).sqrt(), &mut rng);
            }
            _ => {
                fill_uniform(self.head.w.get_mut(&mut theta), 0.1 / f.sqrt(), &mut rng);
                self.head.b.get_mut(&mut theta).copy_from_slice(&w_g[..self.generated()]);
            }
        }
        self.shared.get_mut(&mut theta).copy_from_slice(&w_g[self.generated()..]);
        theta
    }

    fn check_input<T>(&self, x: &[T]) -> Result<()> {
        if x.len() != self.input_len() {
            return Err(NeuralError::invalid(format!(
                "expected a {} x {} spectrum ({} values), got {}",
                self.dims.channels,
                self.dims.length,
                self.input_len(),
                x.len()
            )));
        }
        Ok(())
    }

    /// Trunk features of one input.
    pub fn features_of<T: Elem>(&self, theta: &[T], x: &[T]) -> Result<Vec<T>> {
        self.check_input(x)?;
        let mut out = vec![T::zero(); self.features()];
        self.trunk.forward(theta, x, &mut TrunkCache::default(), &mut out);
        Ok(out)
    }

    /// Decoder weights and initial hidden state for a batch of feature rows.
    fn conditioned<T: Elem>(&self, theta: &[T], feats: &[T], rows: usize) -> (Vec<Vec<T>>, Vec<Vec<T>>) {
        let n_out = self.head.n_out;
        let mut y = vec![T::zero(); rows * n_out];
        self.head.forward(theta, feats, rows, &mut y);
        let shared = self.shared.get(theta);
        let hd = self.dims.decoder.hidden;
        let mut ws = Vec::with_capacity(rows);
        let mut hs = Vec::with_capacity(rows);
        for r in 0..rows {
            let yr = &y[r * n_out..(r + 1) * n_out];
            match self.mode {
                Mode::Vanilla => {
                    ws.push(shared.to_vec());
                    hs.push(yr.iter().map(|v| v.tanh()).collect());
                }
                _ => {
                    let mut w = Vec::with_capacity(self.layout.n_w);
                    w.extend_from_slice(yr);
                    w.extend_from_slice(shared);
                    ws.push(w);
                    hs.push(vec![T::zero(); hd]);
                }
            }
        }
        (ws, hs)
    }

    /// Decoder weight vector `W_g` and initial hidden state for one input.
    pub fn decoder_weights<T: Elem>(&self, theta: &[T], x: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        let f = self.features_of(theta, x)?;
        let (mut ws, mut hs) = self.conditioned(theta, &f, 1);
        Ok((ws.pop().expect("one row"), hs.pop().expect("one row")))
    }

    /// Greedy decode of one input.
    pub fn decode<T: Elem>(&self, theta: &[T], x: &[T]) -> Result<decoder::Decoded<T>> {
        let (w, h0) = self.decoder_weights(theta, x)?;
        Ok(decoder::decode(&self.layout, &w, &h0, self.dims.max_len))
    }

    /// Summed losses and token counts of a batch, and, when `grad` is given,
    /// the gradient of the batch-mean total loss added into it. `force`
    /// decides teacher forcing step by step.
    pub fn batch<T: Elem>(
        &self,
        theta: &[T],
        samples: &[&Sample<T>],
        mut force: impl FnMut() -> bool,
        grad: Option<&mut [T]>,
    ) -> Result<(SequenceLoss, TokenCounts)> {
        let rows = samples.len();
        let nf = self.features();
        let mut feats = vec![T::zero(); rows * nf];
        let mut caches = Vec::with_capacity(rows);
        for (r, s) in samples.iter().enumerate() {
            self.check_input(&s.spectrum)?;
            self.check_tokens(&s.tokens)?;
            let mut cache = TrunkCache::default();
            self.trunk.forward(theta, &s.spectrum, &mut cache, &mut feats[r * nf..(r + 1) * nf]);
            caches.push(cache);
        }
        let (ws, hs) = self.conditioned(theta, &feats, rows);
        let mut loss = SequenceLoss::default();
        let mut counts = TokenCounts::default();
        let runs: Vec<_> = samples
            .iter()
            .zip(ws.iter().zip(&hs))
            .map(|(s, (w, h0))| {
                let run = decoder::run_supervised(&self.layout, w, h0, &s.tokens, &mut force);
                loss.add(&run.loss);
                counts.add(&run.counts);
                run
            })
            .collect();
        let Some(grad) = grad else {
            return Ok((loss, counts));
        };
        let scale = T::one() / T::of(rows as f64);
        let n_out = self.head.n_out;
        let mut dy = vec![T::zero(); rows * n_out];
        for (r, run) in runs.iter().enumerate() {
            let mut dw = vec![T::zero(); self.layout.n_w];
            let dh0 = decoder::run_back(&self.layout, &ws[r], &run.cache, scale, &mut dw);
            let g = self.generated();
            for (a, &b) in self.shared.get_mut(grad).iter_mut().zip(&dw[g..]) {
                *a = *a + b;
            }
            let dyr = &mut dy[r * n_out..(r + 1) * n_out];
            match self.mode {
                Mode::Vanilla => {
                    for ((d, &h), &gh) in dyr.iter_mut().zip(&hs[r]).zip(&dh0) {
                        *d = gh * (T::one() - h * h);
                    }
                }
                _ => dyr.copy_from_slice(&dw[..g]),
            }
        }
        let mut dfeat = vec![T::zero(); rows * nf];
        self.head.backward(theta, &feats, &dy, rows, grad, Some(&mut dfeat));
        for (r, s) in samples.iter().enumerate() {
            self.trunk.backward(theta, &s.spectrum, &caches[r], &dfeat[r * nf..(r + 1) * nf], grad);
        }
        Ok((loss, counts))
    }

    fn check_tokens(&self, tokens: &[Token]) -> Result<()> {
        let d = &self.dims.decoder;
        for t in tokens {
            if t.alignment >= decoder::N_ALIGNMENTS || t.ctype >= d.n_types || t.value >= d.n_values {
                return Err(NeuralError::invalid(format!("token {t:?} is outside the vocabulary")));
            }
        }
        Ok(())
    }
}

/// Architecture plus trained parameters.
#[derive(Debug, Clone)]
pub struct Model<T> {
    pub arch: Architecture,
    pub theta: Vec<T>,
}

impl<T: Elem> Model<T> {
    pub fn new(dims: Dims, mode: Mode, seed: u64) -> Result<Self> {
        let arch = Architecture::new(dims, mode)?;
        let theta = arch.init(seed);
        Ok(Self { arch, theta })
    }

    pub fn decode(&self, x: &[T]) -> Result<decoder::Decoded<T>> {
        self.arch.decode(&self.theta, x)
    }

    /// Losses and counts under full teacher forcing, summed over `samples`.
    pub fn score(&self, samples: &[Sample<T>]) -> Result<(SequenceLoss, TokenCounts)> {
        let mut loss = SequenceLoss::default();
        let mut counts = TokenCounts::default();
        for chunk in samples.chunks(64) {
            let refs: Vec<&Sample<T>> = chunk.iter().collect();
            let (l, c) = self.arch.batch(&self.theta, &refs, || true, None)?;
            loss.add(&l);
            counts.add(&c);
        }
        Ok((loss, counts))
    }
}

/// Draws a coin with probability `p` of heads.
pub fn coin<R: Rng + ?Sized>(rng: &mut R, p: f64) -> bool {
    p >= 1.0 || (p > 0.0 && rng.random::<f64>() < p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_size_weight_count() {
        let a = Architecture::new(Dims::full(), Mode::HyperFull).unwrap();
        assert_eq!(a.n_w(), 26085);
        assert_eq!(a.features(), 768);
        assert_eq!(a.input_len(), 4 * 512);
    }

    #[test]
    fn modes_share_the_trunk() {
        let sizes: Vec<usize> = Mode::ALL
            .iter()
            .map(|&m| Architecture::new(Dims::test_scale(), m).unwrap().n_params())
            .collect();
        let a = Architecture::new(Dims::test_scale(), Mode::HyperFull).unwrap();
        let f = a.features();
        let l = a.layout;
        let trunk = sizes[0] - (f + 1) * l.n_w;
        assert_eq!(sizes[1], trunk + (f + 1) * l.gru_len + (l.n_w - l.gru_len));
        assert_eq!(sizes[2], trunk + (f + 1) * l.dims.hidden + l.n_w);
    }

    #[test]
    fn output_length_and_non_constancy() {
        let a = Architecture::new(Dims::test_scale(), Mode::HyperFull).unwrap();
        let theta: Vec<f64> = a.init(1);
        let x1: Vec<f64> = (0..a.input_len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let x2: Vec<f64> = (0..a.input_len()).map(|i| (i as f64 * 0.11).cos()).collect();
        let (w1, h1) = a.decoder_weights(&theta, &x1).unwrap();
        let (w2, _) = a.decoder_weights(&theta, &x2).unwrap();
        assert_eq!(w1.len(), a.n_w());
        assert!(h1.iter().all(|h| *h == 0.0));
        assert!(w1.iter().zip(&w2).any(|(p, q)| p != q));
        assert!(a.decoder_weights(&theta, &x1[1..]).is_err());
    }

    #[test]
    fn zero_input_with_zero_bias_gives_zero_weights() {
        let a = Architecture::new(Dims::test_scale(), Mode::HyperFull).unwrap();
        let mut theta: Vec<f64> = a.init(2);
        a.head.b.get_mut(&mut theta).fill(0.0);
        let (w, _) = a.decoder_weights(&theta, &vec![0.0; a.input_len()]).unwrap();
        assert!(w.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn tokens_round_trip() {
        let grid = ValueGrid::default();
        let c: Configuration = "S:R:10;P:C:1m;S:L:100n".parse().unwrap();
        let t = tokens_of(&c, &grid).unwrap();
        assert_eq!(t[1], Token { alignment: 1, ctype: 1, value: 3 });
        let back = config_of(&t, &grid).unwrap().unwrap();
        assert!(back.equivalent(&c));
        assert!(config_of(&[], &grid).unwrap().is_none());
    }

    #[test]
    fn modes_parse() {
        for m in Mode::ALL {
            assert_eq!(m.name().parse::<Mode>().unwrap(), m);
        }
        assert!("hyper".parse::<Mode>().is_err());
    }
}
