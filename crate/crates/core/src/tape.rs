//! Tape-based reverse-mode automatic differentiation over real scalars.
//!
//! Every operation on a [`Var`] appends a node holding up to two parent
//! indices with the local partial derivative towards each. Nodes are stored
//! in evaluation order, so the tape is topologically sorted by construction
//! and the backward sweep is a single reverse pass over it.
//!
//! Constants (see [`Real::lift`]) carry no node: operations between a
//! constant and a variable record a one-parent node, and operations between
//! constants are not recorded at all.

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_traits::Float;

use crate::scalar::Real;

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
struct Node<T> {
    parents: [u32; 2],
    partials: [T; 2],
}

#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: RefCell<Vec<Node<T>>>,
}

impl<T: Float> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            nodes: RefCell::new(Vec::with_capacity(n)),
        }
    }

    /// A new leaf variable.
    pub fn var(&self, value: T) -> Var<'_, T> {
        let idx = self.push(Node {
            parents: [NONE, NONE],
            partials: [T::zero(), T::zero()],
        });
        Var {
            tape: Some(self),
            idx,
            val: value,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops every node, keeping the allocation. Existing variables become invalid.
    pub fn clear(&mut self) {
        self.nodes.get_mut().clear();
    }

    fn push(&self, node: Node<T>) -> u32 {
        let mut nodes = self.nodes.borrow_mut();
        let idx = nodes.len();
        assert!(idx < NONE as usize, "tape overflow");
        nodes.push(node);
        idx as u32
    }

    /// Adjoints of every node with respect to `output`.
    pub fn gradient(&self, output: Var<'_, T>) -> Gradients<T> {
        let nodes = self.nodes.borrow();
        let mut adj = vec![T::zero(); nodes.len()];
        if output.idx != NONE {
            adj[output.idx as usize] = T::one();
            for i in (0..=output.idx as usize).rev() {
                let a = adj[i];
                if a == T::zero() {
                    continue;
                }
                let node = &nodes[i];
                for k in 0..2 {
                    let p = node.parents[k];
                    if p != NONE {
                        adj[p as usize] = adj[p as usize] + a * node.partials[k];
                    }
                }
            }
        }
        Gradients { adj }
    }
}

#[derive(Debug, Clone)]
pub struct Gradients<T> {
    adj: Vec<T>,
}

impl<T: Float> Gradients<T> {
    /// Derivative of the output with respect to `v`; zero for constants.
    pub fn wrt(&self, v: &Var<'_, T>) -> T {
        if v.idx == NONE {
            T::zero()
        } else {
            self.adj[v.idx as usize]
        }
    }
}

/// A value on a tape, or a constant when it has no tape.
#[derive(Clone, Copy)]
pub struct Var<'t, T> {
    tape: Option<&'t Tape<T>>,
    idx: u32,
    val: T,
}

impl<T: Float + std::fmt::Debug> std::fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var({:?} @ {})", self.val, self.idx as i64)
    }
}

impl<'t, T: Float> Var<'t, T> {
    pub fn constant(val: T) -> Self {
        Self {
            tape: None,
            idx: NONE,
            val,
        }
    }

    pub fn val(&self) -> T {
        self.val
    }

    pub fn is_constant(&self) -> bool {
        self.idx == NONE
    }

    fn unary(self, val: T, d: T) -> Self {
        match self.tape {
            Some(t) if self.idx != NONE => Var {
                tape: Some(t),
                idx: t.push(Node {
                    parents: [self.idx, NONE],
                    partials: [d, T::zero()],
                }),
                val,
            },
            _ => Var { tape: self.tape, idx: NONE, val },
        }
    }

    fn binary(self, other: Self, val: T, da: T, db: T) -> Self {
        let tape = self.tape.or(other.tape);
        match tape {
            Some(t) if self.idx != NONE || other.idx != NONE => Var {
                tape,
                idx: t.push(Node {
                    parents: [self.idx, other.idx],
                    partials: [da, db],
                }),
                val,
            },
            _ => Var { tape, idx: NONE, val },
        }
    }
}

impl<'t, T: Float> Add for Var<'t, T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        self.binary(o, self.val + o.val, T::one(), T::one())
    }
}

impl<'t, T: Float> Sub for Var<'t, T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self.binary(o, self.val - o.val, T::one(), -T::one())
    }
}

impl<'t, T: Float> Mul for Var<'t, T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        self.binary(o, self.val * o.val, o.val, self.val)
    }
}

impl<'t, T: Float> Div for Var<'t, T> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let q = self.val / o.val;
        self.binary(o, q, T::one() / o.val, -q / o.val)
    }
}

impl<'t, T: Float> Neg for Var<'t, T> {
    type Output = Self;
    fn neg(self) -> Self {
        self.unary(-self.val, -T::one())
    }
}

impl<'t, T: Float + std::fmt::Debug> Real for Var<'t, T> {
    fn lift(self, c: f64) -> Self {
        Var {
            tape: self.tape,
            idx: NONE,
            val: T::from(c).expect("constant fits"),
        }
    }

    fn value(&self) -> f64 {
        self.val.to_f64().expect("finite")
    }

    fn exp(self) -> Self {
        let e = self.val.exp();
        self.unary(e, e)
    }

    fn tanh(self) -> Self {
        let t = self.val.tanh();
        self.unary(t, T::one() - t * t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule() {
        let tape = Tape::new();
        let x = tape.var(3.0);
        let y = tape.var(-2.0);
        let z = x * x * y + x / y;
        let g = tape.gradient(z);
        // dz/dx = 2xy + 1/y, dz/dy = x^2 - x/y^2
        assert!((g.wrt(&x) - (2.0 * 3.0 * -2.0 + 1.0 / -2.0)).abs() < 1e-15);
        assert!((g.wrt(&y) - (9.0 - 3.0 / 4.0)).abs() < 1e-15);
    }

    #[test]
    fn constants_are_not_recorded() {
        let tape = Tape::<f64>::new();
        let x = tape.var(0.5);
        let c = x.lift(0.5) * x.lift(0.5);
        assert!(c.is_constant());
        let before = tape.len();
        let y = (c * x).exp().tanh();
        assert_eq!(tape.len(), before + 3);
        let g = tape.gradient(y);
        let e = (0.25f64 * 0.5).exp();
        let want = (1.0 - e.tanh().powi(2)) * e * 0.25;
        assert!((g.wrt(&x) - want).abs() < 1e-12 * want.abs());
        assert_eq!(g.wrt(&c), 0.0);
    }

    #[test]
    fn backward_visits_each_node_once() {
        // a chain of n additions of x: dy/dx must be exactly n + 1
        let tape = Tape::new();
        let x = tape.var(1.0f64);
        let mut y = x;
        for _ in 0..1000 {
            y = y + x;
        }
        assert_eq!(tape.gradient(y).wrt(&x), 1001.0);
    }

    #[test]
    fn clear_reuses_storage() {
        let mut tape = Tape::<f64>::with_capacity(16);
        {
            let x = tape.var(1.0);
            let _ = x * x;
        }
        assert_eq!(tape.len(), 2);
        tape.clear();
        assert!(tape.is_empty());
    }
}
