//! Comparison of the transfer-matrix simulator with nodal analysis.

use num_complex::Complex64;
use twoport_core::sim::{default_grid, simulate};
use twoport_core::{Alignment, ComponentType, Configuration, Setup, Termination};
pub use twoport_oracle::solve;
use twoport_oracle::{Element, Kind};

pub fn netlist(c: &Configuration) -> Vec<Element> {
    c.components()
        .iter()
        .map(|x| Element {
            series: x.alignment == Alignment::Series,
            kind: match x.ctype {
                ComponentType::Resistor => Kind::R,
                ComponentType::Capacitor => Kind::C,
                ComponentType::Inductor => Kind::L,
            },
            value: x.value,
        })
        .collect()
}

/// Relative difference, with both sides exactly zero counting as agreement.
pub fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-30)
}

/// Worst relative error over the grid for V and the reported current.
pub fn worst(c: &Configuration, setup: &Setup) -> f64 {
    let grid = default_grid();
    let s = simulate(c, &grid, setup).unwrap();
    let load = match setup.termination {
        Termination::Load(r) => Some(r),
        Termination::OpenCircuit => None,
    };
    let net = netlist(c);
    let mut w: f64 = 0.0;
    for (k, &f) in grid.frequencies().iter().enumerate() {
        let o = solve(&net, f, load).expect("oracle solve");
        let i = if setup.reports_input_current() { o.i_in } else { o.i_out };
        w = w.max(rel(s.v[k], o.v_out)).max(rel(s.i[k], i));
    }
    w
}
