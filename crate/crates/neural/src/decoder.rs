//! The recurrent decoder and the layout of its flat weight vector.
//!
//! Layout, in order: GRU input weights `W_ih` (`3H x I`), hidden weights
//! `W_hh` (`3H x H`), biases `b_ih`, `b_hh` (gates in reset, update,
//! candidate order); then the alignment, type and value heads (weights
//! `K x H` followed by `K` biases); then the alignment, type and value
//! embedding tables. The GRU block comes first so that a hypernetwork can
//! generate just that prefix.
//!
//! Type-head classes are the component types followed by EOS and one
//! reserved class that is never a target and never decoded. Type-table rows
//! are the component types followed by SOS and EOS; the value table has one
//! extra null row used by control tokens, which also get a zero alignment
//! embedding.

use serde::{Deserialize, Serialize};

use crate::elem::Elem;
use crate::layers::relu;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderDims {
    pub hidden: usize,
    pub emb_alignment: usize,
    pub emb_type: usize,
    pub emb_value: usize,
    pub n_types: usize,
    pub n_values: usize,
}

impl Default for DecoderDims {
    fn default() -> Self {
        Self {
            hidden: 64,
            emb_alignment: 2,
            emb_type: 31,
            emb_value: 31,
            n_types: 3,
            n_values: 5,
        }
    }
}

/// Offsets of every block inside a decoder weight vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecoderLayout {
    pub dims: DecoderDims,
    pub input: usize,
    pub w_ih: usize,
    pub w_hh: usize,
    pub b_ih: usize,
    pub b_hh: usize,
    pub head_alignment: usize,
    pub head_type: usize,
    pub head_value: usize,
    pub tab_alignment: usize,
    pub tab_type: usize,
    pub tab_value: usize,
    /// Length of the GRU prefix.
    pub gru_len: usize,
    /// Total weight count.
    pub n_w: usize,
}

pub const N_ALIGNMENTS: usize = 2;

impl DecoderLayout {
    pub fn new(dims: DecoderDims) -> Self {
        let h = dims.hidden;
        let input = dims.emb_alignment + dims.emb_type + dims.emb_value;
        let mut at = 0;
        let mut take = |n: usize| {
            let o = at;
            at += n;
            o
        };
        let w_ih = take(3 * h * input);
        let w_hh = take(3 * h * h);
        let b_ih = take(3 * h);
        let b_hh = take(3 * h);
        let gru_len = 6 * h + 3 * h * input + 3 * h * h;
        let head_alignment = take((h + 1) * N_ALIGNMENTS);
        let head_type = take((h + 1) * (dims.n_types + 2));
        let head_value = take((h + 1) * dims.n_values);
        let tab_alignment = take(N_ALIGNMENTS * dims.emb_alignment);
        let tab_type = take((dims.n_types + 2) * dims.emb_type);
        let tab_value = take((dims.n_values + 1) * dims.emb_value);
        let n_w = at;
        Self {
            dims,
            input,
            w_ih,
            w_hh,
            b_ih,
            b_hh,
            head_alignment,
            head_type,
            head_value,
            tab_alignment,
            tab_type,
            tab_value,
            gru_len,
            n_w,
        }
    }

    pub fn type_classes(&self) -> usize {
        self.dims.n_types + 2
    }

    pub fn eos_class(&self) -> usize {
        self.dims.n_types
    }

    fn sos_row(&self) -> usize {
        self.dims.n_types
    }

    fn eos_row(&self) -> usize {
        self.dims.n_types + 1
    }

    fn null_value(&self) -> usize {
        self.dims.n_values
    }

    /// Standard initialization of a decoder vector: gates and heads uniform in
    /// `±1/sqrt(H)`, embedding tables uniform in `±1`.
    pub fn init<T: Elem, R: rand::Rng + ?Sized>(&self, w: &mut [T], rng: &mut R) {
        let g = 1.0 / (self.dims.hidden as f64).sqrt();
        for (i, x) in w.iter_mut().enumerate() {
            let bound = if i < self.tab_alignment { g } else { 1.0 };
            *x = T::of(rng.random_range(-bound..=bound));
        }
    }
}

/// One component as the decoder sees it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub alignment: usize,
    pub ctype: usize,
    pub value: usize,
}

/// What is fed at a step: the start symbol, the end symbol or a component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Input {
    Sos,
    Eos,
    Token(Token),
}

/// Logits of the three heads at one step, and their greedy readout.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenStep<T> {
    pub alignment: Vec<T>,
    pub ctype: Vec<T>,
    pub value: Vec<T>,
}

pub fn argmax<T: Elem>(xs: &[T]) -> usize {
    // lowest index wins ties
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub fn softmax<T: Elem>(xs: &[T]) -> Vec<T> {
    let m = xs.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let e: Vec<T> = xs.iter().map(|&x| (x - m).exp()).collect();
    let s = e.iter().fold(T::zero(), |a, &b| a + b);
    e.into_iter().map(|x| x / s).collect()
}

/// Cross-entropy of `target` and its logit gradient, `softmax - onehot`.
fn cross_entropy<T: Elem>(logits: &[T], target: usize) -> (T, Vec<T>) {
    let m = logits.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let s = logits.iter().fold(T::zero(), |a, &x| a + (x - m).exp());
    let lse = m + s.ln();
    let mut g: Vec<T> = logits.iter().map(|&x| (x - lse).exp()).collect();
    g[target] = g[target] - T::one();
    (lse - logits[target], g)
}

impl<T: Elem> TokenStep<T> {
    /// Greedy readout; the reserved type class is never chosen.
    pub fn decision(&self, layout: &DecoderLayout) -> Input {
        let t = argmax(&self.ctype[..=layout.eos_class()]);
        if t == layout.eos_class() {
            return Input::Eos;
        }
        Input::Token(Token {
            alignment: argmax(&self.alignment),
            ctype: t,
            value: argmax(&self.value),
        })
    }
}

fn sigmoid<T: Elem>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Index rows of the three tables for an input.
fn rows(layout: &DecoderLayout, input: Input) -> (Option<usize>, usize, usize) {
    match input {
        Input::Sos => (None, layout.sos_row(), layout.null_value()),
        Input::Eos => (None, layout.eos_row(), layout.null_value()),
        Input::Token(t) => (Some(t.alignment), t.ctype, t.value),
    }
}

/// Pre-activation embedding of `input`; the GRU sees its ReLU.
pub fn embed_pre<T: Elem>(layout: &DecoderLayout, w: &[T], input: Input) -> Vec<T> {
    let d = &layout.dims;
    let (a, t, v) = rows(layout, input);
    let mut x = Vec::with_capacity(layout.input);
    match a {
        Some(a) => x.extend_from_slice(&w[layout.tab_alignment + a * d.emb_alignment..][..d.emb_alignment]),
        None => x.extend(std::iter::repeat_n(T::zero(), d.emb_alignment)),
    }
    x.extend_from_slice(&w[layout.tab_type + t * d.emb_type..][..d.emb_type]);
    x.extend_from_slice(&w[layout.tab_value + v * d.emb_value..][..d.emb_value]);
    x
}

/// ReLU of the concatenated embeddings.
pub fn embed<T: Elem>(layout: &DecoderLayout, w: &[T], input: Input) -> Vec<T> {
    embed_pre(layout, w, input).into_iter().map(relu).collect()
}

fn matvec<T: Elem>(m: &[T], rows: usize, cols: usize, x: &[T], out: &mut [T]) {
    for (r, o) in out.iter_mut().enumerate().take(rows) {
        *o = m[r * cols..(r + 1) * cols]
            .iter()
            .zip(x)
            .fold(*o, |a, (&p, &q)| a + p * q);
    }
}

/// Intermediate values of one GRU step.
#[derive(Debug, Clone)]
pub struct GruCache<T> {
    x: Vec<T>,
    h_prev: Vec<T>,
    r: Vec<T>,
    z: Vec<T>,
    n: Vec<T>,
    gh_n: Vec<T>,
}

/// One GRU step: `r, z = sigmoid(...)`, `n = tanh(W_in x + b_in + r (W_hn h + b_hn))`,
/// `h' = (1 - z) n + z h`.
pub fn gru_step<T: Elem>(layout: &DecoderLayout, w: &[T], x: &[T], h: &[T]) -> (Vec<T>, GruCache<T>) {
    let hd = layout.dims.hidden;
    let mut gi = w[layout.b_ih..layout.b_ih + 3 * hd].to_vec();
    let mut gh = w[layout.b_hh..layout.b_hh + 3 * hd].to_vec();
    matvec(&w[layout.w_ih..], 3 * hd, layout.input, x, &mut gi);
    matvec(&w[layout.w_hh..], 3 * hd, hd, h, &mut gh);
    let r: Vec<T> = (0..hd).map(|j| sigmoid(gi[j] + gh[j])).collect();
    let z: Vec<T> = (0..hd).map(|j| sigmoid(gi[hd + j] + gh[hd + j])).collect();
    let gh_n = gh[2 * hd..].to_vec();
    let n: Vec<T> = (0..hd).map(|j| (gi[2 * hd + j] + r[j] * gh_n[j]).tanh()).collect();
    let h_new = (0..hd).map(|j| (T::one() - z[j]) * n[j] + z[j] * h[j]).collect();
    (
        h_new,
        GruCache {
            x: x.to_vec(),
            h_prev: h.to_vec(),
            r,
            z,
            n,
            gh_n,
        },
    )
}

/// Backward of [`gru_step`]: accumulates weight gradients into `dw` and
/// returns `(dx, dh_prev)`.
pub fn gru_step_back<T: Elem>(layout: &DecoderLayout, w: &[T], c: &GruCache<T>, dh: &[T], dw: &mut [T]) -> (Vec<T>, Vec<T>) {
    let hd = layout.dims.hidden;
    let ni = layout.input;
    let one = T::one();
    let mut dgi = vec![T::zero(); 3 * hd];
    let mut dgh = vec![T::zero(); 3 * hd];
    let mut dh_prev = vec![T::zero(); hd];
    for j in 0..hd {
        let (r, z, n) = (c.r[j], c.z[j], c.n[j]);
        let dn = dh[j] * (one - z);
        let dz = dh[j] * (c.h_prev[j] - n);
        dh_prev[j] = dh[j] * z;
        let dn_pre = dn * (one - n * n);
        let dr = dn_pre * c.gh_n[j];
        let dr_pre = dr * r * (one - r);
        let dz_pre = dz * z * (one - z);
        dgi[j] = dr_pre;
        dgi[hd + j] = dz_pre;
        dgi[2 * hd + j] = dn_pre;
        dgh[j] = dr_pre;
        dgh[hd + j] = dz_pre;
        dgh[2 * hd + j] = dn_pre * r;
    }
    let mut dx = vec![T::zero(); ni];
    for row in 0..3 * hd {
        let g = dgi[row];
        let wr = &w[layout.w_ih + row * ni..][..ni];
        let dwr = &mut dw[layout.w_ih + row * ni..][..ni];
        for k in 0..ni {
            dwr[k] = dwr[k] + g * c.x[k];
            dx[k] = dx[k] + g * wr[k];
        }
        dw[layout.b_ih + row] = dw[layout.b_ih + row] + g;
        let g = dgh[row];
        let wr = &w[layout.w_hh + row * hd..][..hd];
        let dwr = &mut dw[layout.w_hh + row * hd..][..hd];
        for k in 0..hd {
            dwr[k] = dwr[k] + g * c.h_prev[k];
            dh_prev[k] = dh_prev[k] + g * wr[k];
        }
        dw[layout.b_hh + row] = dw[layout.b_hh + row] + g;
    }
    (dx, dh_prev)
}

fn head<T: Elem>(w: &[T], offset: usize, classes: usize, h: &[T]) -> Vec<T> {
    let hd = h.len();
    let mut out = w[offset + classes * hd..offset + classes * (hd + 1)].to_vec();
    matvec(&w[offset..], classes, hd, h, &mut out);
    out
}

fn head_back<T: Elem>(w: &[T], offset: usize, classes: usize, h: &[T], dlogits: &[T], dw: &mut [T], dh: &mut [T]) {
    let hd = h.len();
    for c in 0..classes {
        let g = dlogits[c];
        for k in 0..hd {
            dw[offset + c * hd + k] = dw[offset + c * hd + k] + g * h[k];
            dh[k] = dh[k] + g * w[offset + c * hd + k];
        }
        dw[offset + classes * hd + c] = dw[offset + classes * hd + c] + g;
    }
}

pub fn heads<T: Elem>(layout: &DecoderLayout, w: &[T], h: &[T]) -> TokenStep<T> {
    TokenStep {
        alignment: head(w, layout.head_alignment, N_ALIGNMENTS, h),
        ctype: head(w, layout.head_type, layout.type_classes(), h),
        value: head(w, layout.head_value, layout.dims.n_values, h),
    }
}

/// Per-term losses of one sequence, summed over steps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SequenceLoss {
    pub alignment: f64,
    pub ctype: f64,
    pub value: f64,
}

impl SequenceLoss {
    pub fn total(&self) -> f64 {
        self.alignment + self.ctype + self.value
    }

    /// Alignment plus type, the model-selection criterion.
    pub fn partial(&self) -> f64 {
        self.alignment + self.ctype
    }

    pub fn add(&mut self, o: &SequenceLoss) {
        self.alignment += o.alignment;
        self.ctype += o.ctype;
        self.value += o.value;
    }
}

/// Token-level agreement counts under the fed inputs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenCounts {
    pub correct: usize,
    pub total: usize,
}

impl TokenCounts {
    pub fn add(&mut self, o: &TokenCounts) {
        self.correct += o.correct;
        self.total += o.total;
    }

    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

/// Cross-entropy terms of precomputed steps against a gold sequence: one step
/// per component plus a final EOS step supervised through the type head
/// only. Returns the losses and the logit gradients of every step.
pub fn sequence_loss<T: Elem>(
    layout: &DecoderLayout,
    steps: &[TokenStep<T>],
    gold: &[Token],
) -> twoport_core::Result<(SequenceLoss, Vec<TokenStep<T>>)> {
    if steps.len() != gold.len() + 1 {
        return Err(twoport_core::Error::InvalidInput(format!(
            "{} steps for a gold sequence of {} components (expected one more)",
            steps.len(),
            gold.len()
        )));
    }
    let mut loss = SequenceLoss::default();
    let mut grads = Vec::with_capacity(steps.len());
    for (t, s) in steps.iter().enumerate() {
        let zero = |n: usize| vec![T::zero(); n];
        match gold.get(t) {
            Some(g) => {
                let (la, ga) = cross_entropy(&s.alignment, g.alignment);
                let (lt, gt) = cross_entropy(&s.ctype, g.ctype);
                let (lv, gv) = cross_entropy(&s.value, g.value);
                loss.alignment += la.to_f64().unwrap_or(f64::NAN);
                loss.ctype += lt.to_f64().unwrap_or(f64::NAN);
                loss.value += lv.to_f64().unwrap_or(f64::NAN);
                grads.push(TokenStep {
                    alignment: ga,
                    ctype: gt,
                    value: gv,
                });
            }
            None => {
                let (lt, gt) = cross_entropy(&s.ctype, layout.eos_class());
                loss.ctype += lt.to_f64().unwrap_or(f64::NAN);
                grads.push(TokenStep {
                    alignment: zero(s.alignment.len()),
                    ctype: gt,
                    value: zero(s.value.len()),
                });
            }
        }
    }
    Ok((loss, grads))
}

fn step_correct<T: Elem>(layout: &DecoderLayout, s: &TokenStep<T>, gold: Option<&Token>) -> bool {
    match (s.decision(layout), gold) {
        (Input::Eos, None) => true,
        (Input::Token(p), Some(g)) => p == *g,
        _ => false,
    }
}

/// Everything a teacher-forced run needs for its backward pass.
#[derive(Debug)]
pub struct RunCache<T> {
    inputs: Vec<Input>,
    pre: Vec<Vec<T>>,
    gru: Vec<GruCache<T>>,
    hs: Vec<Vec<T>>,
    dlogits: Vec<TokenStep<T>>,
}

/// Output of a supervised run over one sample.
#[derive(Debug)]
pub struct Run<T> {
    pub loss: SequenceLoss,
    pub counts: TokenCounts,
    pub cache: RunCache<T>,
}

/// Runs the decoder over `gold` plus a final EOS step. Before step `t + 1`
/// the gold token `t` is fed when `force()` says so, otherwise the model's
/// own greedy decision at step `t`.
pub fn run_supervised<T: Elem>(
    layout: &DecoderLayout,
    w: &[T],
    h0: &[T],
    gold: &[Token],
    mut force: impl FnMut() -> bool,
) -> Run<T> {
    let mut input = Input::Sos;
    let mut h = h0.to_vec();
    let n = gold.len() + 1;
    let mut cache = RunCache {
        inputs: Vec::with_capacity(n),
        pre: Vec::with_capacity(n),
        gru: Vec::with_capacity(n),
        hs: Vec::with_capacity(n),
        dlogits: Vec::new(),
    };
    let mut steps = Vec::with_capacity(n);
    let mut counts = TokenCounts::default();
    for t in 0..n {
        let pre = embed_pre(layout, w, input);
        let x: Vec<T> = pre.iter().map(|&v| relu(v)).collect();
        let (h_new, gc) = gru_step(layout, w, &x, &h);
        let s = heads(layout, w, &h_new);
        counts.total += 1;
        counts.correct += step_correct(layout, &s, gold.get(t)) as usize;
        cache.inputs.push(input);
        cache.pre.push(pre);
        cache.gru.push(gc);
        cache.hs.push(h_new.clone());
        if t < gold.len() {
            input = if force() { Input::Token(gold[t]) } else { s.decision(layout) };
        }
        steps.push(s);
        h = h_new;
    }
    let (loss, dlogits) = sequence_loss(layout, &steps, gold).expect("one step per token plus EOS");
    cache.dlogits = dlogits;
    Run { loss, counts, cache }
}

/// Backward of [`run_supervised`] for the total loss scaled by `scale`.
/// Accumulates into `dw` and returns the gradient of the initial hidden state.
pub fn run_back<T: Elem>(layout: &DecoderLayout, w: &[T], cache: &RunCache<T>, scale: T, dw: &mut [T]) -> Vec<T> {
    let d = &layout.dims;
    let hd = d.hidden;
    let mut dh_next = vec![T::zero(); hd];
    for t in (0..cache.inputs.len()).rev() {
        let h = &cache.hs[t];
        let g = &cache.dlogits[t];
        let mut dh = dh_next.clone();
        let sc = |v: &[T]| v.iter().map(|&x| x * scale).collect::<Vec<T>>();
        head_back(w, layout.head_alignment, N_ALIGNMENTS, h, &sc(&g.alignment), dw, &mut dh);
        head_back(w, layout.head_type, layout.type_classes(), h, &sc(&g.ctype), dw, &mut dh);
        head_back(w, layout.head_value, d.n_values, h, &sc(&g.value), dw, &mut dh);
        let (mut dx, dh_prev) = gru_step_back(layout, w, &cache.gru[t], &dh, dw);
        crate::layers::relu_back(&cache.pre[t], &mut dx);
        let (a, ty, v) = rows(layout, cache.inputs[t]);
        let (ea, et) = (d.emb_alignment, d.emb_type);
        if let Some(a) = a {
            for k in 0..ea {
                let i = layout.tab_alignment + a * ea + k;
                dw[i] = dw[i] + dx[k];
            }
        }
        for k in 0..et {
            let i = layout.tab_type + ty * et + k;
            dw[i] = dw[i] + dx[ea + k];
        }
        for k in 0..d.emb_value {
            let i = layout.tab_value + v * d.emb_value + k;
            dw[i] = dw[i] + dx[ea + et + k];
        }
        dh_next = dh_prev;
    }
    dh_next
}

/// Greedy decoding from SOS; stops at EOS or after `max_len` components.
#[derive(Debug, Clone)]
pub struct Decoded<T> {
    pub tokens: Vec<Token>,
    pub steps: Vec<TokenStep<T>>,
    /// Whether EOS was emitted before `max_len` ran out.
    pub terminated: bool,
}

impl<T> Decoded<T> {
    /// No component before EOS.
    pub fn is_degenerate(&self) -> bool {
        self.tokens.is_empty()
    }
}

pub fn decode<T: Elem>(layout: &DecoderLayout, w: &[T], h0: &[T], max_len: usize) -> Decoded<T> {
    let mut input = Input::Sos;
    let mut h = h0.to_vec();
    let mut out = Decoded {
        tokens: Vec::new(),
        steps: Vec::new(),
        terminated: false,
    };
    while out.tokens.len() < max_len {
        let x = embed(layout, w, input);
        h = gru_step(layout, w, &x, &h).0;
        let s = heads(layout, w, &h);
        let next = s.decision(layout);
        out.steps.push(s);
        match next {
            Input::Token(t) => {
                out.tokens.push(t);
                input = next;
            }
            _ => {
                out.terminated = true;
                break;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layout() -> DecoderLayout {
        DecoderLayout::new(DecoderDims::default())
    }

    #[test]
    fn weight_count() {
        let l = layout();
        // GRU 3*64*(64+64) + 6*64, heads 65*(2+5+5), tables 2*2 + 5*31 + 6*31
        assert_eq!(l.gru_len, 24960);
        assert_eq!(l.n_w, 24960 + 780 + 345);
        assert_eq!(l.input, 64);
    }

    #[test]
    fn embedding_examples() {
        let l = layout();
        let zeros = vec![0.0f64; l.n_w];
        assert!(embed(&l, &zeros, Input::Sos).iter().all(|x| *x == 0.0));
        let neg = vec![-1.0f64; l.n_w];
        let tok = Input::Token(Token {
            alignment: 1,
            ctype: 2,
            value: 4,
        });
        let e = embed(&l, &neg, tok);
        assert_eq!(e.len(), 64);
        assert!(e.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn zero_gru_stays_at_zero() {
        let l = layout();
        let w = vec![0.0f64; l.n_w];
        let (h, c) = gru_step(&l, &w, &[0.3; 64], &[0.0; 64]);
        assert!(h.iter().all(|x| *x == 0.0));
        assert!(c.z.iter().all(|z| *z == 0.5));
    }

    #[test]
    fn gates_stay_open_interval() {
        let l = layout();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut w = vec![0.0f64; l.n_w];
        l.init(&mut w, &mut rng);
        let x: Vec<f64> = (0..64).map(|i| (i as f64) / 10.0 - 3.0).collect();
        let (_, c) = gru_step(&l, &w, &x, &[0.9; 64]);
        assert!(c.r.iter().chain(&c.z).all(|g| *g > 0.0 && *g < 1.0));
        // far out the gates round to the endpoints but never leave [0, 1]
        let x: Vec<f64> = (0..64).map(|i| (i as f64 - 32.0) * 1e3).collect();
        let (h, c) = gru_step(&l, &w, &x, &[5.0; 64]);
        assert!(c.r.iter().chain(&c.z).all(|g| (0.0..=1.0).contains(g)));
        assert!(h.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn gru_jacobian_matches_differences() {
        let dims = DecoderDims {
            hidden: 4,
            emb_alignment: 2,
            emb_type: 2,
            emb_value: 2,
            n_types: 3,
            n_values: 5,
        };
        let l = DecoderLayout::new(dims);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut w = vec![0.0f64; l.n_w];
        l.init(&mut w, &mut rng);
        let x = [0.3, -0.2, 0.5, 0.1, 0.0, 0.7];
        let h = [0.1, -0.4, 0.2, 0.6];
        let probe = [0.7, -1.1, 0.4, 0.9];
        let f = |w: &[f64]| -> f64 {
            let (h2, _) = gru_step(&l, w, &x, &h);
            h2.iter().zip(&probe).map(|(a, b)| a * b).sum()
        };
        let (_, c) = gru_step(&l, &w, &x, &h);
        let mut dw = vec![0.0; l.n_w];
        gru_step_back(&l, &w, &c, &probe, &mut dw);
        for i in 0..l.gru_len {
            let mut p = w.clone();
            let mut m = w.clone();
            p[i] += 1e-6;
            m[i] -= 1e-6;
            let fd = (f(&p) - f(&m)) / 2e-6;
            assert!((fd - dw[i]).abs() <= 1e-5 * fd.abs().max(dw[i].abs()) + 1e-10, "{i}: {fd} vs {}", dw[i]);
        }
    }

    #[test]
    fn uniform_logits_cost_log_k() {
        let l = layout();
        let steps = vec![
            TokenStep {
                alignment: vec![0.0f64; 2],
                ctype: vec![0.0; 5],
                value: vec![0.0; 5],
            };
            2
        ];
        let gold = [Token {
            alignment: 0,
            ctype: 1,
            value: 2,
        }];
        let (loss, _) = sequence_loss(&l, &steps, &gold).unwrap();
        assert!((loss.alignment - 2f64.ln()).abs() < 1e-12);
        assert!((loss.ctype - 2.0 * 5f64.ln()).abs() < 1e-12);
        assert!((loss.value - 5f64.ln()).abs() < 1e-12);
        assert!(sequence_loss(&l, &steps[..1], &gold).is_err());
    }

    #[test]
    fn confident_predictions_cost_nothing() {
        let l = layout();
        let big = 1e3;
        let one_hot = |n: usize, k: usize| (0..n).map(|i| if i == k { big } else { -big }).collect::<Vec<f64>>();
        let steps = vec![
            TokenStep {
                alignment: one_hot(2, 1),
                ctype: one_hot(5, 0),
                value: one_hot(5, 3),
            },
            TokenStep {
                alignment: one_hot(2, 0),
                ctype: one_hot(5, l.eos_class()),
                value: one_hot(5, 0),
            },
        ];
        let gold = [Token {
            alignment: 1,
            ctype: 0,
            value: 3,
        }];
        let (loss, _) = sequence_loss(&l, &steps, &gold).unwrap();
        assert_eq!(loss.total(), 0.0);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let p = softmax(&[1e3f64, -2.0, 0.5, 700.0, 3.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eos_first_gives_empty_decode() {
        let l = layout();
        let mut w = vec![0.0f64; l.n_w];
        // bias the EOS class of the type head
        w[l.head_type + l.type_classes() * 64 + l.eos_class()] = 10.0;
        let d = decode(&l, &w, &[0.0; 64], 12);
        assert!(d.is_degenerate() && d.terminated);
        assert_eq!(d.steps.len(), 1);
    }

    #[test]
    fn decoding_halts_and_repeats() {
        let l = layout();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut w = vec![0.0f64; l.n_w];
        l.init(&mut w, &mut rng);
        // suppress EOS so the cap is what stops decoding
        w[l.head_type + l.type_classes() * 64 + l.eos_class()] = -100.0;
        let a = decode(&l, &w, &[0.0; 64], 7);
        let b = decode(&l, &w, &[0.0; 64], 7);
        assert_eq!(a.tokens, b.tokens);
        assert_eq!(a.tokens.len(), 7);
        assert!(!a.terminated);
    }
}
