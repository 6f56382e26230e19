//! Two-port ladder circuits: components, configurations and canonical ordering.
//!
//! A configuration is a chain of components, each inserted either in series
//! with the signal path or in parallel (shunt) across it. Consecutive
//! components sharing an alignment can be permuted without changing the
//! port behaviour: series impedances add, shunt admittances add. The
//! canonical form sorts each maximal same-alignment run by `(type, value)`
//! ascending, resistors first, then capacitors, then inductors.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Alignment {
    Series,
    Parallel,
}

impl Alignment {
    pub const ALL: [Alignment; 2] = [Alignment::Series, Alignment::Parallel];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn flip(self) -> Self {
        match self {
            Alignment::Series => Alignment::Parallel,
            Alignment::Parallel => Alignment::Series,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Alignment::Series => 'S',
            Alignment::Parallel => 'P',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ComponentType {
    Resistor,
    Capacitor,
    Inductor,
}

impl ComponentType {
    pub const ALL: [ComponentType; 3] = [
        ComponentType::Resistor,
        ComponentType::Capacitor,
        ComponentType::Inductor,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn symbol(self) -> char {
        match self {
            ComponentType::Resistor => 'R',
            ComponentType::Capacitor => 'C',
            ComponentType::Inductor => 'L',
        }
    }

    /// The first `n_c` types in canonical order.
    pub fn universe(n_c: usize) -> Result<&'static [ComponentType]> {
        if n_c == 0 || n_c > Self::ALL.len() {
            return Err(Error::invalid(format!(
                "component type count must be in 1..=3, got {n_c}"
            )));
        }
        Ok(&Self::ALL[..n_c])
    }
}

/// One electric element of the chain.
///
/// `value` is in ohms, farads or henries depending on `ctype`. `bin` is the
/// quantized value index when the component comes from a value grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub alignment: Alignment,
    pub ctype: ComponentType,
    pub value: f64,
    pub bin: Option<u8>,
}

impl Component {
    pub fn new(alignment: Alignment, ctype: ComponentType, value: f64) -> Result<Self> {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::invalid(format!(
                "component value must be positive and finite, got {value}"
            )));
        }
        Ok(Self {
            alignment,
            ctype,
            value,
            bin: None,
        })
    }

    /// A component sitting exactly on a grid point.
    pub fn on_grid(alignment: Alignment, ctype: ComponentType, bin: u8, grid: &ValueGrid) -> Self {
        Self {
            alignment,
            ctype,
            value: grid.representative(ctype, bin),
            bin: Some(bin),
        }
    }

    /// Same component with a new value; the bin is recomputed if one was present.
    pub fn with_value(self, value: f64, grid: &ValueGrid) -> Result<Self> {
        let mut c = Component::new(self.alignment, self.ctype, value)?;
        if self.bin.is_some() {
            c.bin = Some(grid.quantize(value, self.ctype)?);
        }
        Ok(c)
    }

    fn sort_key_cmp(&self, other: &Self) -> Ordering {
        self.ctype
            .cmp(&other.ctype)
            .then_with(|| self.value.total_cmp(&other.value))
            .then_with(|| self.bin.cmp(&other.bin))
    }

    /// Value equality: bins when both sides carry one, exact reals otherwise.
    pub fn same_value(&self, other: &Self) -> bool {
        match (self.bin, other.bin) {
            (Some(a), Some(b)) => a == b,
            _ => self.value == other.value,
        }
    }

    pub fn same_kind(&self, other: &Self) -> bool {
        self.alignment == other.alignment && self.ctype == other.ctype
    }
}

/// Per-type grid of representative values, one decade apart.
///
/// With the default `n_v = 5`: resistors 0.1 Ω to 1 kΩ, capacitors 1 µF to
/// 10 mF, inductors 100 nH to 1 mH. Larger `n_v` extends each grid upward by
/// further decades.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueGrid {
    n_v: usize,
    values: [Vec<f64>; 3],
}

impl Default for ValueGrid {
    fn default() -> Self {
        Self::new(5).expect("default grid")
    }
}

impl ValueGrid {
    pub const DEFAULT_N_V: usize = 5;

    pub fn new(n_v: usize) -> Result<Self> {
        if n_v == 0 || n_v > u8::MAX as usize {
            return Err(Error::invalid(format!("value count must be in 1..=255, got {n_v}")));
        }
        let decades = |first: i32| -> Vec<f64> {
            (0..n_v as i32)
                .map(|k| format!("1e{}", first + k).parse::<f64>().expect("decade literal"))
                .collect()
        };
        Ok(Self {
            n_v,
            values: [decades(-1), decades(-6), decades(-7)],
        })
    }

    pub fn n_v(&self) -> usize {
        self.n_v
    }

    pub fn values(&self, ctype: ComponentType) -> &[f64] {
        &self.values[ctype.index()]
    }

    pub fn representative(&self, ctype: ComponentType, bin: u8) -> f64 {
        self.values[ctype.index()][bin as usize]
    }

    /// Index of the grid value nearest in log space; ties go to the lower index.
    pub fn quantize(&self, value: f64, ctype: ComponentType) -> Result<u8> {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::invalid(format!(
                "cannot quantize nonpositive or non-finite value {value}"
            )));
        }
        let lv = value.ln();
        let mut best = 0usize;
        let mut best_dist = f64::INFINITY;
        for (i, g) in self.values(ctype).iter().enumerate() {
            let d = (lv - g.ln()).abs();
            // distances within rounding noise count as a tie
            if d + 1e-12 < best_dist {
                best = i;
                best_dist = d;
            }
        }
        Ok(best as u8)
    }
}

/// An ordered, non-empty chain of components; element 0 sits next to the source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Component>", into = "Vec<Component>")]
pub struct Configuration {
    components: Vec<Component>,
}

impl TryFrom<Vec<Component>> for Configuration {
    type Error = Error;

    fn try_from(components: Vec<Component>) -> Result<Self> {
        Configuration::new(components)
    }
}

impl From<Configuration> for Vec<Component> {
    fn from(c: Configuration) -> Self {
        c.components
    }
}

impl Configuration {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("configuration must contain at least one component"));
        }
        for c in &components {
            if !(c.value > 0.0) || !c.value.is_finite() {
                return Err(Error::invalid(format!(
                    "component value must be positive and finite, got {}",
                    c.value
                )));
            }
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.value).collect()
    }

    pub fn into_components(self) -> Vec<Component> {
        self.components
    }

    /// Half-open index ranges of the maximal same-alignment runs.
    pub fn runs(&self) -> Vec<std::ops::Range<usize>> {
        alignment_runs(&self.components)
    }

    pub fn canonicalize(&self) -> Configuration {
        let mut components = self.components.clone();
        for run in alignment_runs(&components) {
            components[run].sort_by(Component::sort_key_cmp);
        }
        Configuration { components }
    }

    pub fn is_canonical(&self) -> bool {
        self.canonicalize() == *self
    }

    /// Equality up to permutations inside same-alignment runs.
    pub fn equivalent(&self, other: &Configuration) -> bool {
        if self.len() != other.len() {
            return false;
        }
        let a = self.canonicalize();
        let b = other.canonicalize();
        a.components
            .iter()
            .zip(&b.components)
            .all(|(x, y)| x.same_kind(y) && x.same_value(y))
    }

    /// Hashable key of the canonical form on `(alignment, type, bin)`.
    ///
    /// Components without a bin are quantized on `grid`.
    pub fn canonical_key(&self, grid: &ValueGrid) -> Result<Vec<(u8, u8, u8)>> {
        self.canonicalize()
            .components
            .iter()
            .map(|c| {
                let bin = match c.bin {
                    Some(b) => b,
                    None => grid.quantize(c.value, c.ctype)?,
                };
                Ok((c.alignment as u8, c.ctype as u8, bin))
            })
            .collect()
    }

    /// Total order used for deterministic tie-breaking: length, then componentwise.
    pub fn deterministic_cmp(&self, other: &Configuration) -> Ordering {
        self.len().cmp(&other.len()).then_with(|| {
            for (a, b) in self.components.iter().zip(&other.components) {
                let o = a
                    .alignment
                    .cmp(&b.alignment)
                    .then_with(|| a.sort_key_cmp(b));
                if o != Ordering::Equal {
                    return o;
                }
            }
            Ordering::Equal
        })
    }
}

pub(crate) fn alignment_runs(components: &[Component]) -> Vec<std::ops::Range<usize>> {
    let mut runs = Vec::new();
    let mut start = 0;
    for i in 1..=components.len() {
        if i == components.len() || components[i].alignment != components[start].alignment {
            runs.push(start..i);
            start = i;
        }
    }
    runs
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}:{}",
            self.alignment.symbol(),
            self.ctype.symbol(),
            self.value
        )
    }
}
