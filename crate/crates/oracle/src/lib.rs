//! Modified nodal analysis of a ladder driven by an ideal 1 V source.
//!
//! Deliberately shares no code with the transfer-matrix simulator: the ladder
//! is turned into a netlist (source node, one new node per series element,
//! shunts to ground, optional load) and the stamped complex system is solved
//! by Gaussian elimination with partial pivoting in double-double precision,
//! so that cancellations between large admittances near resonance do not
//! limit the oracle's own accuracy.

use num_complex::Complex64 as C;
use std::f64::consts::PI;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoFloat {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> TwoFloat {
    let s = a + b;
    TwoFloat { hi: s, lo: b - (s - a) }
}

impl From<f64> for TwoFloat {
    fn from(x: f64) -> Self {
        TwoFloat { hi: x, lo: 0.0 }
    }
}

impl From<TwoFloat> for f64 {
    fn from(x: TwoFloat) -> f64 {
        x.hi + x.lo
    }
}

impl Add for TwoFloat {
    type Output = TwoFloat;
    fn add(self, o: TwoFloat) -> TwoFloat {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let r = quick_two_sum(s, e + t);
        quick_two_sum(r.hi, r.lo + f)
    }
}

impl Neg for TwoFloat {
    type Output = TwoFloat;
    fn neg(self) -> TwoFloat {
        TwoFloat { hi: -self.hi, lo: -self.lo }
    }
}

impl Sub for TwoFloat {
    type Output = TwoFloat;
    fn sub(self, o: TwoFloat) -> TwoFloat {
        self + -o
    }
}

impl Mul for TwoFloat {
    type Output = TwoFloat;
    fn mul(self, o: TwoFloat) -> TwoFloat {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p) + (self.hi * o.lo + self.lo * o.hi);
        quick_two_sum(p, e)
    }
}

impl Div for TwoFloat {
    type Output = TwoFloat;
    fn div(self, o: TwoFloat) -> TwoFloat {
        let q1 = self.hi / o.hi;
        let r = self - o * TwoFloat::from(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * TwoFloat::from(q2);
        let q3 = r.hi / o.hi;
        quick_two_sum(q1, q2) + TwoFloat::from(q3)
    }
}

/// Complex number over double-double reals.
#[derive(Debug, Clone, Copy)]
struct Dd {
    re: TwoFloat,
    im: TwoFloat,
}

impl Dd {
    fn zero() -> Self {
        Self::from(C::new(0.0, 0.0))
    }

    fn mag(&self) -> f64 {
        f64::from(self.re).abs() + f64::from(self.im).abs()
    }

    fn is_zero(&self) -> bool {
        self.re == TwoFloat::from(0.0) && self.im == TwoFloat::from(0.0)
    }

    fn recip(self) -> Self {
        let d = self.re * self.re + self.im * self.im;
        Self {
            re: self.re / d,
            im: -self.im / d,
        }
    }
}

impl From<C> for Dd {
    fn from(z: C) -> Self {
        Self {
            re: TwoFloat::from(z.re),
            im: TwoFloat::from(z.im),
        }
    }
}

impl From<Dd> for C {
    fn from(z: Dd) -> Self {
        C::new(f64::from(z.re), f64::from(z.im))
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        Dd { re: self.re + o.re, im: self.im + o.im }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        Dd { re: self.re - o.re, im: self.im - o.im }
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        Dd {
            re: self.re * o.re - self.im * o.im,
            im: self.re * o.im + self.im * o.re,
        }
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, o: Dd) -> Dd {
        self * o.recip()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kind {
    R,
    C,
    L,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Element {
    pub series: bool,
    pub kind: Kind,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Solution {
    pub v_out: C,
    /// Current leaving the source's positive terminal.
    pub i_in: C,
    /// Current into the load, zero for an open port.
    pub i_out: C,
}

fn admittance(kind: Kind, value: f64, omega: f64) -> Dd {
    let (v, w) = (TwoFloat::from(value), TwoFloat::from(omega));
    let (zero, one) = (TwoFloat::from(0.0), TwoFloat::from(1.0));
    match kind {
        Kind::R => Dd { re: one / v, im: zero },
        Kind::C => Dd { re: zero, im: w * v },
        Kind::L => Dd { re: zero, im: -(one / (w * v)) },
    }
}

/// Solves the ladder at `freq_hz`; `load` is the load resistance or `None` for an open port.
pub fn solve(chain: &[Element], freq_hz: f64, load: Option<f64>) -> Option<Solution> {
    let omega = 2.0 * PI * freq_hz;
    // with an open port, trailing series elements carry no current and pass
    // the voltage through unchanged
    let chain = match load {
        Some(_) => chain,
        None => {
            let keep = chain.iter().rposition(|e| !e.series).map_or(0, |i| i + 1);
            &chain[..keep]
        }
    };
    // node 0 is ground, node 1 the source terminal
    let mut edges: Vec<(usize, usize, Dd)> = Vec::new();
    let mut node = 1;
    let mut nodes = 1;
    for e in chain {
        let y = admittance(e.kind, e.value, omega);
        if e.series {
            nodes += 1;
            edges.push((node, nodes, y));
            node = nodes;
        } else {
            edges.push((node, 0, y));
        }
    }
    let out = node;
    if let Some(r) = load {
        edges.push((out, 0, Dd::from(C::new(1.0, 0.0)) / Dd::from(C::new(r, 0.0))));
    }
    // unknowns: v_1..v_nodes, then the source branch current
    let n = nodes + 1;
    let mut a = vec![vec![Dd::zero(); n]; n];
    let mut b = vec![Dd::zero(); n];
    let idx = |k: usize| k - 1;
    for &(p, q, y) in &edges {
        if p > 0 {
            a[idx(p)][idx(p)] = a[idx(p)][idx(p)] + y;
        }
        if q > 0 {
            a[idx(q)][idx(q)] = a[idx(q)][idx(q)] + y;
        }
        if p > 0 && q > 0 {
            a[idx(p)][idx(q)] = a[idx(p)][idx(q)] - y;
            a[idx(q)][idx(p)] = a[idx(q)][idx(p)] - y;
        }
    }
    // source from ground to node 1; its current j enters node 1
    let j = nodes;
    let one = Dd::from(C::new(1.0, 0.0));
    a[idx(1)][j] = a[idx(1)][j] - one;
    a[j][idx(1)] = one;
    b[j] = one;
    let x = gauss(a, b)?;
    let v_out = x[idx(out)];
    Some(Solution {
        v_out: v_out.into(),
        i_in: x[j].into(),
        i_out: match load {
            Some(r) => (v_out / Dd::from(C::new(r, 0.0))).into(),
            None => C::new(0.0, 0.0),
        },
    })
}

fn gauss(mut a: Vec<Vec<Dd>>, mut b: Vec<Dd>) -> Option<Vec<Dd>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &k| a[i][col].mag().total_cmp(&a[k][col].mag()))?;
        if a[piv][col].is_zero() {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            if a[r][col].is_zero() {
                continue;
            }
            let f = a[r][col] / a[col][col];
            for k in col..n {
                a[r][k] = a[r][k] - f * a[col][k];
            }
            b[r] = b[r] - f * b[col];
        }
    }
    let mut x = vec![Dd::zero(); n];
    for r in (0..n).rev() {
        let mut s = b[r];
        for k in r + 1..n {
            s = s - a[r][k] * x[k];
        }
        x[r] = s / a[r][r];
    }
    Some(x)
}
