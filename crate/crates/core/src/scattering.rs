//! Propagation along an edge and scattering at junctions.
//!
//! A wave of frequency ω travelling a distance d along an edge picks up the
//! factor `exp(-i k d)` with `k = (ω / c)(1 - iη)`. At a junction the branch
//! admittances add in parallel (pressure continuity plus conservation of
//! volume velocity), which for two branches reduces to the familiar
//! `R = (z2 - z1) / (z2 + z1)`, `T = 1 + R`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::{Admittance, Lattice, Node};

/// Complex wavenumber `k = (ω / c)(1 - iη)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Wavenumber(pub Complex64);

impl Wavenumber {
    /// Wavenumber at a complex frequency `s = ω - iσ`. A positive σ damps
    /// every arrival by `exp(-σ t)`; the time transform undoes it.
    pub fn at(s: Complex64, speed: f64, loss_factor: f64) -> Self {
        Wavenumber(s / speed * Complex64::new(1.0, -loss_factor))
    }

    pub fn value(&self) -> Complex64 {
        self.0
    }
}

pub fn wavenumber(omega: f64, speed: f64, loss_factor: f64) -> Result<Wavenumber> {
    if !(speed > 0.0) {
        return Err(Error::Domain(format!(
            "wave speed must be positive, got {speed}"
        )));
    }
    if !(omega >= 0.0) {
        return Err(Error::Domain(format!(
            "frequency must be nonnegative, got {omega}"
        )));
    }
    Ok(Wavenumber::at(
        Complex64::new(omega, 0.0),
        speed,
        loss_factor,
    ))
}

/// `exp(-i k d)`.
pub fn propagator(k: Wavenumber, distance: f64) -> Complex64 {
    (Complex64::new(0.0, -distance) * k.0).exp()
}

/// Impedance seen by a wave arriving on one port of a junction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LoadImpedance {
    Finite(f64),
    /// Rigid end: a single port with no termination.
    Infinite,
}

impl LoadImpedance {
    /// Pressure reflection coefficient for an incoming wave on a branch of
    /// impedance `z`.
    pub fn reflection(self, z: f64) -> f64 {
        match self {
            LoadImpedance::Finite(zl) => (zl - z) / (zl + z),
            LoadImpedance::Infinite => 1.0,
        }
    }
}

/// Parallel combination of the termination and every branch other than
/// `incident_port`.
pub fn load_impedance(
    node: &Node,
    incident_port: usize,
    branch_impedances: &[f64],
) -> Result<LoadImpedance> {
    if incident_port >= node.ports.len() || branch_impedances.len() != node.ports.len() {
        return Err(Error::Usage(format!(
            "node {} has {} ports; got port {incident_port} and {} impedances",
            node.id,
            node.ports.len(),
            branch_impedances.len()
        )));
    }
    let y_t = match node.termination {
        Admittance::Infinite => return Ok(LoadImpedance::Finite(0.0)),
        Admittance::Finite(y) => y,
    };
    let y: f64 = y_t
        + branch_impedances
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != incident_port)
            .map(|(_, z)| 1.0 / z)
            .sum::<f64>();
    Ok(if y == 0.0 {
        LoadImpedance::Infinite
    } else {
        LoadImpedance::Finite(1.0 / y)
    })
}

/// Real, frequency-independent junction matrix. Column `q` holds the
/// outgoing pressure amplitudes produced by a unit wave arriving on port `q`.
#[derive(Clone, Debug, PartialEq)]
pub struct JunctionScattering {
    pub node: usize,
    dim: usize,
    entries: Vec<f64>,
}

impl JunctionScattering {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Outgoing amplitude on port `p` per unit incoming on port `q`.
    pub fn get(&self, p: usize, q: usize) -> f64 {
        self.entries[p * self.dim + q]
    }

    pub fn reflection(&self, q: usize) -> f64 {
        self.get(q, q)
    }
}

pub fn junction_matrix(node: &Node, branch_impedances: &[f64]) -> Result<JunctionScattering> {
    if let Some(z) = branch_impedances
        .iter()
        .find(|z| !(**z > 0.0 && z.is_finite()))
    {
        return Err(Error::Domain(format!(
            "branch impedance at node {} must be positive, got {z}",
            node.id
        )));
    }
    let dim = node.ports.len();
    let mut entries = vec![0.0; dim * dim];
    for q in 0..dim {
        let r = load_impedance(node, q, branch_impedances)?.reflection(branch_impedances[q]);
        for p in 0..dim {
            entries[p * dim + q] = if p == q { r } else { 1.0 + r };
        }
    }
    Ok(JunctionScattering {
        node: node.id,
        dim,
        entries,
    })
}

/// Characteristic impedances of a node's branches, in port order.
pub fn branch_impedances(lattice: &Lattice, node: &Node) -> Result<Vec<f64>> {
    node.ports
        .iter()
        .map(|p| lattice.edge(p.edge).map(|e| e.impedance()))
        .collect()
}

/// Junction matrices for every node of the lattice, in node order.
pub fn junctions(lattice: &Lattice) -> Result<Vec<JunctionScattering>> {
    lattice
        .nodes()
        .iter()
        .map(|n| junction_matrix(n, &branch_impedances(lattice, n)?))
        .collect()
}
