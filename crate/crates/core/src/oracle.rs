//! Reverberation paths, enumerated one by one.
//!
//! An independent predictor of the pulse train: starting from the two
//! half-amplitude waves launched at the drive point, walk every sequence of
//! reflections and transmissions through the lattice, multiplying the
//! junction coefficients along the way, and emit an arrival each time a walk
//! crosses the assessment point. Walks are pruned once they are later than
//! `t_max` or weaker than `amplitude_floor`; paths may revisit edges any
//! number of times.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fdsolver::{AssessSpec, DriveSpec, FrequencyResponse};
use crate::lattice::{End, Lattice, Port};
use crate::scattering::{junctions, JunctionScattering};
use crate::tdtransform::{to_time, SweepConfig, TimeResponse};

/// One reverberation path ending at the assessment point.
#[derive(Clone, Debug, PartialEq)]
pub struct PathArrival {
    pub time: f64,
    /// Launch amplitude times the product of junction coefficients; carries
    /// no propagation loss.
    pub amplitude: f64,
    /// Loss exponent `Σ η d / c`: the path is attenuated by `exp(-ω Λ)`.
    pub loss: f64,
    pub reflections: usize,
    /// Edges traversed, in order, starting with the drive edge.
    pub edges: Vec<usize>,
}

impl PathArrival {
    pub fn touches(&self, pred: impl Fn(usize) -> bool) -> bool {
        self.edges.iter().any(|&e| pred(e))
    }
}

/// Paths that arrive within the merge tolerance of one another.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleArrival {
    pub time: f64,
    pub amplitude: f64,
    pub paths: Vec<PathArrival>,
}

impl OracleArrival {
    pub fn is_degenerate(&self) -> bool {
        self.paths.len() > 1
    }
}

/// Per-edge data in edge-index order plus the node each end attaches to.
struct Graph<'a> {
    lattice: &'a Lattice,
    scattering: Vec<JunctionScattering>,
    /// For edge index e and end, (node index, port position within node).
    attach: Vec<[(usize, usize); 2]>,
}

impl<'a> Graph<'a> {
    fn new(lattice: &'a Lattice) -> Result<Self> {
        let scattering = junctions(lattice)?;
        let mut attach = vec![[(usize::MAX, 0); 2]; lattice.edges().len()];
        for (ni, node) in lattice.nodes().iter().enumerate() {
            for (pi, port) in node.ports.iter().enumerate() {
                let e = lattice
                    .edge_index(port.edge)
                    .ok_or(Error::UnknownEdge(port.edge))?;
                attach[e][end_slot(port.end)] = (ni, pi);
            }
        }
        if let Some(e) = attach
            .iter()
            .position(|a| a.iter().any(|s| s.0 == usize::MAX))
        {
            return Err(Error::Usage(format!(
                "edge {} has an unattached end",
                lattice.edges()[e].id
            )));
        }
        Ok(Graph {
            lattice,
            scattering,
            attach,
        })
    }

    fn port(&self, node: usize, slot: usize) -> Port {
        self.lattice.nodes()[node].ports[slot]
    }

    fn index(&self, edge: usize) -> usize {
        self.lattice
            .edge_index(edge)
            .expect("edge checked at construction")
    }
}

fn end_slot(end: End) -> usize {
    match end {
        End::Low => 0,
        End::High => 1,
    }
}

/// A wave travelling along edge index `edge` away from `from`.
#[derive(Clone)]
struct Front {
    edge: usize,
    from: End,
    /// Position where the current segment starts; an end or the drive point.
    start: f64,
    time: f64,
    loss: f64,
    amplitude: f64,
    reflections: usize,
}

struct Search<'g, 'a> {
    graph: &'g Graph<'a>,
    assess_edge: usize,
    assess_pos: f64,
    t_max: f64,
    floor: f64,
    out: Vec<PathArrival>,
    trail: Vec<usize>,
}

impl Search<'_, '_> {
    fn walk(&mut self, f: Front) {
        let edge = &self.graph.lattice.edges()[f.edge];
        self.trail.push(edge.id);

        let end_pos = match f.from {
            End::Low => edge.length,
            End::High => 0.0,
        };
        if f.edge == self.assess_edge {
            let ahead = match f.from {
                End::Low => self.assess_pos >= f.start,
                End::High => self.assess_pos < f.start,
            };
            if ahead {
                let d = (self.assess_pos - f.start).abs();
                let time = f.time + d / edge.speed;
                if time <= self.t_max {
                    self.out.push(PathArrival {
                        time,
                        amplitude: f.amplitude,
                        loss: f.loss + edge.loss_factor * d / edge.speed,
                        reflections: f.reflections,
                        edges: self.trail.clone(),
                    });
                }
            }
        }

        let d = (end_pos - f.start).abs();
        let time = f.time + d / edge.speed;
        if time <= self.t_max {
            let loss = f.loss + edge.loss_factor * d / edge.speed;
            let arrive = f.from.opposite();
            let (node, q) = self.graph.attach[f.edge][end_slot(arrive)];
            let s = &self.graph.scattering[node];
            for p in 0..s.dim() {
                let amplitude = f.amplitude * s.get(p, q);
                if amplitude.abs() < self.floor {
                    continue;
                }
                let port = self.graph.port(node, p);
                let next = self.graph.index(port.edge);
                let next_len = self.graph.lattice.edges()[next].length;
                self.walk(Front {
                    edge: next,
                    from: port.end,
                    start: match port.end {
                        End::Low => 0.0,
                        End::High => next_len,
                    },
                    time,
                    loss,
                    amplitude,
                    reflections: f.reflections + usize::from(p == q),
                });
            }
        }
        self.trail.pop();
    }
}

fn launches(lattice: &Lattice, drive: &DriveSpec) -> Result<[Front; 2]> {
    let e = lattice
        .edge_index(drive.edge)
        .ok_or(Error::UnknownEdge(drive.edge))?;
    let half = 0.5 * drive.amplitude;
    let front = |from| Front {
        edge: e,
        from,
        start: drive.position,
        time: 0.0,
        loss: 0.0,
        amplitude: half,
        reflections: 0,
    };
    // heading toward the high end means travelling away from the low end
    Ok([front(End::Low), front(End::High)])
}

/// Every path arriving at the assessment point by `t_max`, sorted by time.
/// When the two points coincide the direct arrival is counted once, on the
/// launch heading toward the high end.
pub fn enumerate_paths(
    lattice: &Lattice,
    drive: &DriveSpec,
    assess: &AssessSpec,
    t_max: f64,
    amplitude_floor: f64,
) -> Result<Vec<PathArrival>> {
    if !(t_max > 0.0) {
        return Err(Error::Domain(format!(
            "t_max must be positive, got {t_max}"
        )));
    }
    if !(amplitude_floor > 0.0) {
        return Err(Error::Domain(format!(
            "amplitude floor must be positive, got {amplitude_floor}"
        )));
    }
    drive.check(lattice)?;
    assess.check(lattice)?;
    let graph = Graph::new(lattice)?;
    let assess_edge = graph.index(assess.edge);

    let [rightward, leftward] = launches(lattice, drive)?;
    let run = |front: Front, strict_left: bool| {
        let mut search = Search {
            graph: &graph,
            assess_edge,
            assess_pos: assess.position,
            t_max,
            floor: amplitude_floor,
            out: Vec::new(),
            trail: Vec::new(),
        };
        if front.amplitude.abs() >= amplitude_floor {
            search.walk(front);
        }
        if strict_left {
            // the leftward launch must not re-emit the coincident direct arrival
            search
                .out
                .retain(|p| !(p.edges.len() == 1 && p.time == 0.0 && assess.edge == drive.edge));
        }
        search.out
    };
    let (mut a, b) = rayon::join(|| run(rightward, false), || run(leftward, true));
    a.extend(b);
    a.sort_by(|x, y| {
        x.time
            .total_cmp(&y.time)
            .then_with(|| x.edges.cmp(&y.edges))
            .then_with(|| x.amplitude.total_cmp(&y.amplitude))
    });
    Ok(a)
}

/// Group time-sorted paths whose arrival times lie within `merge_tolerance`
/// of the group's first member; amplitudes add.
pub fn coalesce(paths: &[PathArrival], merge_tolerance: f64) -> Vec<OracleArrival> {
    let mut out: Vec<OracleArrival> = Vec::new();
    let mut group_start = f64::NEG_INFINITY;
    for p in paths {
        match out.last_mut() {
            Some(last) if p.time - group_start <= merge_tolerance => {
                last.amplitude += p.amplitude;
                last.paths.push(p.clone());
                let n = last.paths.len() as f64;
                last.time += (p.time - last.time) / n;
            }
            _ => {
                group_start = p.time;
                out.push(OracleArrival {
                    time: p.time,
                    amplitude: p.amplitude,
                    paths: vec![p.clone()],
                });
            }
        }
    }
    out
}

/// Enumerate and coalesce degenerate arrivals.
pub fn enumerate_arrivals(
    lattice: &Lattice,
    drive: &DriveSpec,
    assess: &AssessSpec,
    t_max: f64,
    amplitude_floor: f64,
    merge_tolerance: f64,
) -> Result<Vec<OracleArrival>> {
    let paths = enumerate_paths(lattice, drive, assess, t_max, amplitude_floor)?;
    Ok(coalesce(&paths, merge_tolerance))
}

/// Default merge tolerance for a sweep: a quarter of its time step.
pub fn merge_tolerance(sweep: &SweepConfig) -> f64 {
    0.25 * sweep.time_step()
}

/// Outcome of the earliest-arrival search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FirstArrival {
    At(f64),
    BeyondHorizon,
}

impl FirstArrival {
    pub fn time(self) -> Option<f64> {
        match self {
            FirstArrival::At(t) => Some(t),
            FirstArrival::BeyondHorizon => None,
        }
    }
}

#[derive(PartialEq)]
struct Tick(f64);

impl Eq for Tick {}

impl PartialOrd for Tick {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Tick {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Earliest arrival, within `horizon`, of any path that traverses at least
/// one connector created at `level`. Runs a shortest-time search over
/// (edge, direction, touched-connector) states, following only nonzero
/// junction coefficients.
pub fn first_connector_arrival(
    lattice: &Lattice,
    drive: &DriveSpec,
    assess: &AssessSpec,
    level: usize,
    horizon: f64,
) -> Result<FirstArrival> {
    let is_connector = |idx: usize| lattice.edges()[idx].is_connector_at(level);
    if !(0..lattice.edges().len()).any(is_connector) {
        return Err(Error::Usage(format!("no connector edges at level {level}")));
    }
    drive.check(lattice)?;
    assess.check(lattice)?;
    let graph = Graph::new(lattice)?;
    let assess_edge = graph.index(assess.edge);
    let edges = lattice.edges();

    // state: (edge index, departed end, flag); time measured at the departed end
    let state_id =
        |e: usize, from: End, flag: bool| (e * 2 + end_slot(from)) * 2 + usize::from(flag);
    let mut settled = vec![f64::INFINITY; edges.len() * 4];
    let mut heap: BinaryHeap<Reverse<(Tick, usize, End, bool)>> = BinaryHeap::new();
    let mut best = f64::INFINITY;

    let consider = |e: usize, from: End, start: f64, t: f64, flag: bool, best: &mut f64| {
        if e == assess_edge && flag {
            let ahead = match from {
                End::Low => assess.position >= start,
                End::High => assess.position < start,
            };
            if ahead {
                *best = best.min(t + (assess.position - start).abs() / edges[e].speed);
            }
        }
    };
    let scatter = |e: usize,
                   arrive: End,
                   t: f64,
                   flag: bool,
                   heap: &mut BinaryHeap<Reverse<(Tick, usize, End, bool)>>| {
        let (node, q) = graph.attach[e][end_slot(arrive)];
        let s = &graph.scattering[node];
        for p in 0..s.dim() {
            if s.get(p, q) == 0.0 {
                continue;
            }
            let port = graph.port(node, p);
            let next = graph.index(port.edge);
            heap.push(Reverse((
                Tick(t),
                next,
                port.end,
                flag || is_connector(next),
            )));
        }
    };

    let d = graph.index(drive.edge);
    let flag0 = is_connector(d);
    for from in [End::Low, End::High] {
        consider(d, from, drive.position, 0.0, flag0, &mut best);
        let to_end =
            (from.opposite().distance_to(drive.position, edges[d].length)) / edges[d].speed;
        if to_end <= horizon {
            scatter(d, from.opposite(), to_end, flag0, &mut heap);
        }
    }
    while let Some(Reverse((Tick(t), e, from, flag))) = heap.pop() {
        if t >= best || t > horizon {
            break;
        }
        let id = state_id(e, from, flag);
        if settled[id] <= t {
            continue;
        }
        settled[id] = t;
        let start = match from {
            End::Low => 0.0,
            End::High => edges[e].length,
        };
        consider(e, from, start, t, flag, &mut best);
        let t_end = t + edges[e].travel_time();
        if t_end <= horizon {
            scatter(e, from.opposite(), t_end, flag, &mut heap);
        }
    }
    Ok(if best <= horizon {
        FirstArrival::At(best)
    } else {
        FirstArrival::BeyondHorizon
    })
}

/// Render the path sum through the same sampled spectrum and time transform
/// the solver output goes through: `H_m = Σ_p A_p exp(-i s_m τ_p - s_m Λ_p)`
/// with `s_m = ω_m - iσ`; the zero-frequency bin follows the solver's rule.
pub fn render(paths: &[PathArrival], sweep: &SweepConfig) -> Result<TimeResponse> {
    sweep.check()?;
    let grid = sweep.grid();
    let bins = sweep.bins;
    // chunks are summed in order afterwards so the result is bit-reproducible
    let partial: Vec<Vec<Complex64>> = paths
        .par_chunks(256)
        .map(|chunk| {
            let mut acc = vec![Complex64::new(0.0, 0.0); bins];
            for p in chunk {
                // term_m = C z^m with the damping folded into C
                let z =
                    Complex64::new(-grid.delta_omega * p.loss, -grid.delta_omega * p.time).exp();
                let c = p.amplitude
                    * Complex64::new(-grid.damping * p.time, grid.damping * p.loss).exp();
                let mut term = c;
                for slot in acc.iter_mut() {
                    *slot += term;
                    term *= z;
                }
            }
            acc
        })
        .collect();
    let mut values = vec![Complex64::new(0.0, 0.0); bins];
    for acc in partial {
        for (x, y) in values.iter_mut().zip(acc) {
            *x += y;
        }
    }
    if grid.damping == 0.0 {
        values[0] = Complex64::new(0.0, 0.0);
    }
    to_time(&FrequencyResponse { grid, values }, sweep)
}

/// Total power `Σ |a|² / z` carried by every wavefront in flight at time `t`,
/// with no pruning. Exponential in `t`; meant for short audits.
pub fn wavefront_power(lattice: &Lattice, drive: &DriveSpec, t: f64) -> Result<f64> {
    drive.check(lattice)?;
    let graph = Graph::new(lattice)?;
    let mut total = 0.0;
    let mut stack: Vec<Front> = launches(lattice, drive)?.into();
    while let Some(f) = stack.pop() {
        let edge = &lattice.edges()[f.edge];
        let end_pos = match f.from {
            End::Low => edge.length,
            End::High => 0.0,
        };
        let t_end = f.time + (end_pos - f.start).abs() / edge.speed;
        if t_end > t {
            total += f.amplitude.powi(2) / edge.impedance();
            continue;
        }
        let arrive = f.from.opposite();
        let (node, q) = graph.attach[f.edge][end_slot(arrive)];
        let s = &graph.scattering[node];
        for p in 0..s.dim() {
            let amplitude = f.amplitude * s.get(p, q);
            if amplitude == 0.0 {
                continue;
            }
            let port = graph.port(node, p);
            let next = graph.index(port.edge);
            stack.push(Front {
                edge: next,
                from: port.end,
                start: match port.end {
                    End::Low => 0.0,
                    End::High => lattice.edges()[next].length,
                },
                time: t_end,
                loss: 0.0,
                amplitude,
                reflections: 0,
            });
        }
    }
    Ok(total)
}
