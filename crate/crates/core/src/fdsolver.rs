//! Frequency-domain solve of the coupled edge network.
//!
//! Every edge carries two travelling waves. The unknowns are the amplitudes
//! leaving each edge end, ordered `(edge, low)` then `(edge, high)` with edges
//! in id order. A wave leaving one end arrives at the other after the
//! propagator `P_e = exp(-i k_e L_e)` and is redistributed by the junction
//! matrix there, giving the dense system `(I - S P) a = S s_in`, where
//! `s_in` holds the two half-amplitude waves launched by the point drive and
//! propagated to the ends of its edge.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{End, Lattice, Port};
use crate::scattering::{junctions, propagator, Wavenumber};

/// Pivot ratio below which the factorization is treated as singular.
const SINGULAR_PIVOT_RATIO: f64 = 1e-13;

/// Relative residual a solve must reach to be accepted.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveSpec {
    pub edge: usize,
    /// Distance from the edge's low end.
    pub position: f64,
    #[serde(default = "unit")]
    pub amplitude: f64,
}

fn unit() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssessSpec {
    pub edge: usize,
    pub position: f64,
}

fn check_interior(lattice: &Lattice, what: &str, edge: usize, position: f64) -> Result<()> {
    let e = lattice.edge(edge)?;
    if !(position > 0.0 && position < e.length) {
        return Err(Error::config(
            format!("{what}.position"),
            format!(
                "{position} is not strictly inside edge {edge} of length {}",
                e.length
            ),
        ));
    }
    Ok(())
}

impl DriveSpec {
    pub fn check(&self, lattice: &Lattice) -> Result<()> {
        check_interior(lattice, "drive", self.edge, self.position)?;
        if !self.amplitude.is_finite() {
            return Err(Error::config("drive.amplitude", "must be finite"));
        }
        Ok(())
    }
}

impl AssessSpec {
    pub fn check(&self, lattice: &Lattice) -> Result<()> {
        check_interior(lattice, "assess", self.edge, self.position)
    }
}

/// Index of the unknown for the wave leaving `end` of the edge at `edge_index`.
pub fn unknown_index(edge_index: usize, end: End) -> usize {
    2 * edge_index
        + match end {
            End::Low => 0,
            End::High => 1,
        }
}

/// Frequency-independent part of the system: junction couplings in unknown
/// indices, built once per lattice.
#[derive(Clone, Debug)]
pub struct Network {
    edge_count: usize,
    speeds: Vec<f64>,
    lengths: Vec<f64>,
    losses: Vec<f64>,
    /// (row = outgoing unknown, incoming port's edge index, column = far-end unknown, S entry)
    couplings: Vec<(usize, usize, usize, f64)>,
    fingerprint: u64,
}

impl Network {
    pub fn new(lattice: &Lattice) -> Result<Self> {
        let edges = lattice.edges();
        let scattering = junctions(lattice)?;
        let mut couplings = Vec::new();
        for (node, s) in lattice.nodes().iter().zip(&scattering) {
            for (p, out) in node.ports.iter().enumerate() {
                let row = port_unknown(lattice, out)?;
                for (q, inc) in node.ports.iter().enumerate() {
                    let entry = s.get(p, q);
                    if entry == 0.0 {
                        continue;
                    }
                    let e = lattice
                        .edge_index(inc.edge)
                        .ok_or(Error::UnknownEdge(inc.edge))?;
                    // the wave arriving at `inc` left the opposite end of the same edge
                    couplings.push((row, e, unknown_index(e, inc.end.opposite()), entry));
                }
            }
        }
        Ok(Network {
            edge_count: edges.len(),
            speeds: edges.iter().map(|e| e.speed).collect(),
            lengths: edges.iter().map(|e| e.length).collect(),
            losses: edges.iter().map(|e| e.loss_factor).collect(),
            couplings,
            fingerprint: fingerprint(lattice),
        })
    }

    pub fn unknowns(&self) -> usize {
        2 * self.edge_count
    }

    fn wavenumber(&self, e: usize, s: Complex64) -> Wavenumber {
        Wavenumber::at(s, self.speeds[e], self.losses[e])
    }

    /// `I - S P` at complex frequency `s`.
    pub fn matrix(&self, s: Complex64) -> DMatrix<Complex64> {
        let n = self.unknowns();
        let mut a = DMatrix::<Complex64>::identity(n, n);
        let transit: Vec<Complex64> = (0..self.edge_count)
            .map(|e| propagator(self.wavenumber(e, s), self.lengths[e]))
            .collect();
        for &(row, e, col, entry) in &self.couplings {
            a[(row, col)] -= transit[e] * entry;
        }
        a
    }

    /// Right-hand side `S s_in` for a drive.
    fn source(
        &self,
        lattice: &Lattice,
        drive: &DriveSpec,
        s: Complex64,
    ) -> Result<DVector<Complex64>> {
        let e = lattice
            .edge_index(drive.edge)
            .ok_or(Error::UnknownEdge(drive.edge))?;
        let k = self.wavenumber(e, s);
        let half = 0.5 * drive.amplitude;
        let mut incoming = vec![Complex64::new(0.0, 0.0); self.unknowns()];
        // indexed by the arrival port: the leftward wave reaches the low end
        incoming[unknown_index(e, End::Low)] = half * propagator(k, drive.position);
        incoming[unknown_index(e, End::High)] =
            half * propagator(k, self.lengths[e] - drive.position);
        let mut rhs = DVector::<Complex64>::zeros(self.unknowns());
        for &(row, ce, col, entry) in &self.couplings {
            // `col` is the far-end unknown; the arrival port is its opposite
            let arrival = col ^ 1;
            debug_assert_eq!(arrival / 2, ce);
            rhs[row] += incoming[arrival] * entry;
        }
        Ok(rhs)
    }
}

fn port_unknown(lattice: &Lattice, port: &Port) -> Result<usize> {
    let e = lattice
        .edge_index(port.edge)
        .ok_or(Error::UnknownEdge(port.edge))?;
    Ok(unknown_index(e, port.end))
}

fn fingerprint(lattice: &Lattice) -> u64 {
    use std::hash::{Hash, Hasher};
    let mut h = std::collections::hash_map::DefaultHasher::new();
    for e in lattice.edges() {
        e.id.hash(&mut h);
        e.length.to_bits().hash(&mut h);
        e.speed.to_bits().hash(&mut h);
        e.density.to_bits().hash(&mut h);
        e.loss_factor.to_bits().hash(&mut h);
    }
    lattice.nodes().len().hash(&mut h);
    h.finish()
}

/// Assembled system at one frequency.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    pub matrix: DMatrix<Complex64>,
    /// `ordering[i]` is the (edge id, end) whose departing wave is unknown `i`.
    pub ordering: Vec<(usize, End)>,
}

pub fn assemble(lattice: &Lattice, omega: f64) -> Result<LinearSystem> {
    if omega == 0.0 {
        return Err(Error::Numerical {
            omega,
            message: "the static system is singular; the zero-frequency bin is defined as 0".into(),
        });
    }
    if !(omega > 0.0) {
        return Err(Error::Domain(format!(
            "omega must be positive, got {omega}"
        )));
    }
    let network = Network::new(lattice)?;
    Ok(LinearSystem {
        matrix: network.matrix(Complex64::new(omega, 0.0)),
        ordering: lattice
            .edges()
            .iter()
            .flat_map(|e| [(e.id, End::Low), (e.id, End::High)])
            .collect(),
    })
}

/// Solved departing-wave amplitudes at one frequency.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveState {
    pub frequency: Complex64,
    pub amplitudes: Vec<Complex64>,
    /// `|A a - b| / |b|`, zero when the right-hand side vanishes.
    pub residual: f64,
    fingerprint: u64,
}

impl WaveState {
    pub fn amplitude(&self, lattice: &Lattice, edge: usize, end: End) -> Result<Complex64> {
        let e = lattice.edge_index(edge).ok_or(Error::UnknownEdge(edge))?;
        Ok(self.amplitudes[unknown_index(e, end)])
    }
}

pub fn solve_frequency(lattice: &Lattice, drive: &DriveSpec, omega: f64) -> Result<WaveState> {
    if !(omega > 0.0) {
        return Err(Error::Numerical {
            omega,
            message: "frequency must be positive".into(),
        });
    }
    let network = Network::new(lattice)?;
    solve_with(&network, lattice, drive, Complex64::new(omega, 0.0))
}

/// Solve at a complex frequency using a prebuilt [`Network`].
pub fn solve_with(
    network: &Network,
    lattice: &Lattice,
    drive: &DriveSpec,
    s: Complex64,
) -> Result<WaveState> {
    drive.check(lattice)?;
    let a = network.matrix(s);
    let b = network.source(lattice, drive, s)?;
    let numerical = |message: String| Error::Numerical {
        omega: s.re,
        message,
    };

    let lu = a.clone().lu();
    let pivots = lu.u().diagonal();
    let (min, max) = pivots
        .iter()
        .map(|p| p.norm())
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
    if !(min > SINGULAR_PIVOT_RATIO * max) {
        return Err(numerical(format!(
            "system is numerically singular (pivot ratio {:e}); this happens at an exact \
             resonance of a lossless lattice, use a loss factor > 0",
            min / max
        )));
    }
    let x = lu
        .solve(&b)
        .ok_or_else(|| numerical("LU solve failed".into()))?;

    let b_norm = b.norm();
    let residual = if b_norm == 0.0 {
        0.0
    } else {
        (&a * &x - &b).norm() / b_norm
    };
    if !(residual <= RESIDUAL_TOLERANCE) {
        return Err(numerical(format!(
            "residual {residual:e} exceeds {RESIDUAL_TOLERANCE:e}"
        )));
    }
    Ok(WaveState {
        frequency: s,
        amplitudes: x.iter().copied().collect(),
        residual,
        fingerprint: network.fingerprint,
    })
}

/// Field at the assessment point: both travelling waves on its edge plus the
/// direct wave from the drive when both lie on the same edge.
pub fn field_at(
    state: &WaveState,
    lattice: &Lattice,
    drive: &DriveSpec,
    point: &AssessSpec,
) -> Result<Complex64> {
    if state.fingerprint != fingerprint(lattice)
        || state.amplitudes.len() != 2 * lattice.edges().len()
    {
        return Err(Error::Usage(
            "wave state was solved for a different lattice".into(),
        ));
    }
    point.check(lattice)?;
    let e = lattice
        .edge_index(point.edge)
        .ok_or(Error::UnknownEdge(point.edge))?;
    let edge = &lattice.edges()[e];
    let k = Wavenumber::at(state.frequency, edge.speed, edge.loss_factor);
    let u = point.position;
    let mut psi = state.amplitudes[unknown_index(e, End::Low)] * propagator(k, u)
        + state.amplitudes[unknown_index(e, End::High)] * propagator(k, edge.length - u);
    if drive.edge == point.edge {
        psi += 0.5 * drive.amplitude * propagator(k, (u - drive.position).abs());
    }
    Ok(psi)
}

/// Uniform frequency grid `omega_m = m * delta_omega`, `m = 0..bins`, each
/// evaluated at `omega_m - i * damping`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub delta_omega: f64,
    pub bins: usize,
    #[serde(default)]
    pub damping: f64,
}

impl FrequencyGrid {
    pub fn omega(&self, m: usize) -> f64 {
        m as f64 * self.delta_omega
    }

    pub fn complex_frequency(&self, m: usize) -> Complex64 {
        Complex64::new(self.omega(m), -self.damping)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.delta_omega > 0.0 && self.delta_omega.is_finite()) {
            return Err(Error::config(
                "sweep.delta_omega",
                format!("{} must be positive", self.delta_omega),
            ));
        }
        if self.bins < 2 {
            return Err(Error::config(
                "sweep.bins",
                format!("{} must be at least 2", self.bins),
            ));
        }
        if !(self.damping >= 0.0 && self.damping.is_finite()) {
            return Err(Error::config(
                "sweep.damping",
                format!("{} must be nonnegative", self.damping),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyResponse {
    pub grid: FrequencyGrid,
    pub values: Vec<Complex64>,
}

impl FrequencyResponse {
    pub fn omegas(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(|m| self.grid.omega(m))
    }
}

/// Sweep the grid. Bins are independent and evaluated on the ambient rayon
/// pool; results come back in grid order regardless of scheduling. On the
/// real axis the zero-frequency bin is 0 by definition; with damping it is
/// evaluated at `-i * damping` like any other bin.
pub fn frequency_response(
    lattice: &Lattice,
    drive: &DriveSpec,
    assess: &AssessSpec,
    grid: &FrequencyGrid,
) -> Result<FrequencyResponse> {
    grid.check()?;
    drive.check(lattice)?;
    assess.check(lattice)?;
    let network = Network::new(lattice)?;
    let values = (0..grid.bins)
        .into_par_iter()
        .map(|m| {
            if m == 0 && grid.damping == 0.0 {
                return Ok(Complex64::new(0.0, 0.0));
            }
            let s = grid.complex_frequency(m);
            let state = solve_with(&network, lattice, drive, s).map_err(|e| match e {
                Error::Numerical { message, .. } => Error::Numerical {
                    omega: grid.omega(m),
                    message: format!("bin {m}: {message}"),
                },
                other => other,
            })?;
            field_at(&state, lattice, drive, assess)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FrequencyResponse {
        grid: *grid,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{
        generate, Admittance, GeneratorSettings, Lattice, Node, Provenance, Role, WaveguideEdge,
    };
    use approx::assert_abs_diff_eq;

    fn single_edge(termination: Admittance, loss: f64) -> Lattice {
        let edge = WaveguideEdge {
            id: 1,
            length: 1.0,
            speed: 1.0,
            density: 1.0,
            loss_factor: loss,
            role: Role::Generator,
            level: 1,
        };
        let nodes = vec![
            Node {
                id: 0,
                ports: vec![Port {
                    edge: 1,
                    end: End::Low,
                }],
                termination,
            },
            Node {
                id: 1,
                ports: vec![Port {
                    edge: 1,
                    end: End::High,
                }],
                termination,
            },
        ];
        Lattice::from_parts(1, 0, Provenance::Generated, vec![edge], nodes)
    }

    /// Unit-impedance edge terminated in its own impedance at both ends.
    fn matched_edge() -> Lattice {
        single_edge(Admittance::Finite(1.0), 0.0)
    }

    const DRIVE: DriveSpec = DriveSpec {
        edge: 1,
        position: 0.2,
        amplitude: 1.0,
    };
    const ASSESS: AssessSpec = AssessSpec {
        edge: 1,
        position: 0.7,
    };

    #[test]
    fn system_sizes() {
        let l1 = generate(1, &GeneratorSettings::default(), 1).unwrap();
        assert_eq!(assemble(&l1, 1.0).unwrap().matrix.shape(), (2, 2));
        let l4 = generate(4, &GeneratorSettings::default(), 1).unwrap();
        let sys = assemble(&l4, 1.0).unwrap();
        assert_eq!(sys.matrix.shape(), (64, 64));
        assert_eq!(sys.ordering[0], (1, End::Low));
        assert_eq!(sys.ordering[63], (32, End::High));
    }

    #[test]
    fn matched_edge_system_is_identity() {
        let sys = assemble(&matched_edge(), 3.7).unwrap();
        assert_eq!(sys.matrix, DMatrix::identity(2, 2));
    }

    #[test]
    fn zero_frequency_is_flagged() {
        assert!(matches!(
            assemble(&matched_edge(), 0.0),
            Err(Error::Numerical { .. })
        ));
    }

    #[test]
    fn matched_edge_has_only_the_direct_wave() {
        let l = matched_edge();
        let omega = 5.0;
        let state = solve_frequency(&l, &DRIVE, omega).unwrap();
        assert!(state.amplitudes.iter().all(|a| a.norm() == 0.0));
        let psi = field_at(&state, &l, &DRIVE, &ASSESS).unwrap();
        let expected = 0.5 * Complex64::new(0.0, -0.5 * omega).exp();
        assert_abs_diff_eq!((psi - expected).norm(), 0.0, epsilon = 1e-15);

        let same = AssessSpec {
            edge: 1,
            position: 0.2,
        };
        assert_abs_diff_eq!(
            (field_at(&state, &l, &DRIVE, &same).unwrap() - 0.5).norm(),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn lossless_resonance_is_singular() {
        // pressure-release string resonates at omega = pi
        let l = single_edge(Admittance::Infinite, 0.0);
        match solve_frequency(&l, &DRIVE, std::f64::consts::PI) {
            Err(Error::Numerical { message, .. }) => assert!(message.contains("loss factor")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn response_scales_with_amplitude() {
        let l = generate(3, &GeneratorSettings::default(), 4).unwrap();
        let twice = DriveSpec {
            amplitude: 2.0,
            ..DRIVE
        };
        for omega in [0.7, 13.1, 250.0] {
            let a = solve_frequency(&l, &DRIVE, omega).unwrap();
            let b = solve_frequency(&l, &twice, omega).unwrap();
            for (x, y) in a.amplitudes.iter().zip(&b.amplitudes) {
                assert!(
                    (2.0 * x - y).norm() <= 1e-12 * x.norm().max(1e-300),
                    "{x} {y}"
                );
            }
        }
    }

    #[test]
    fn residual_is_small() {
        let l = generate(4, &GeneratorSettings::default(), 2).unwrap();
        for omega in [0.1, 3.3, 1000.0] {
            assert!(solve_frequency(&l, &DRIVE, omega).unwrap().residual <= 1e-10);
        }
    }

    #[test]
    fn state_from_other_lattice_is_rejected() {
        let l1 = generate(2, &GeneratorSettings::default(), 1).unwrap();
        let l2 = generate(2, &GeneratorSettings::default(), 2).unwrap();
        let state = solve_frequency(&l1, &DRIVE, 2.0).unwrap();
        assert!(matches!(
            field_at(&state, &l2, &DRIVE, &ASSESS),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn matched_edge_sweep_is_flat() {
        let grid = FrequencyGrid {
            delta_omega: 0.5,
            bins: 64,
            damping: 0.0,
        };
        let r = frequency_response(&matched_edge(), &DRIVE, &ASSESS, &grid).unwrap();
        assert_eq!(r.values[0], Complex64::new(0.0, 0.0));
        for v in &r.values[1..] {
            assert_abs_diff_eq!(v.norm(), 0.5, epsilon = 1e-14);
        }
    }

    #[test]
    fn bad_drive_position_is_rejected() {
        let l = matched_edge();
        let d = DriveSpec {
            position: 1.0,
            ..DRIVE
        };
        assert!(matches!(
            solve_frequency(&l, &d, 1.0),
            Err(Error::Config { .. })
        ));
    }
}
