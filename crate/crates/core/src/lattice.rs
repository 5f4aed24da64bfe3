//! Hypercube lattices of 1-D waveguides.
//!
//! A lattice of dimension N+1 is built from the N-dimensional one by
//! translating it along a new orthogonal direction: the original becomes the
//! *generator*, the translated copy the *image*, and every generator vertex is
//! joined to its image by a *connector* edge. Starting from a single edge this
//! reproduces the hypercube skeleton with `n_{N+1} = 2 n_N + 2^N` edges.
//!
//! Edge numbering follows the usual figure convention: the generator keeps
//! its ids, image ids are offset by the generator's edge count and connectors
//! are numbered last. The 1-D to 2-D step is the one exception, where the
//! square is numbered around its perimeter (1 bottom, 2 right, 3 top, 4 left).

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Loss factor of the reference edge and the default for generated edges.
pub const DEFAULT_LOSS_FACTOR: f64 = 0.003;

/// Default minimum spacing between the round-trip times of any two edges.
pub const DEFAULT_ROUND_TRIP_SEPARATION: f64 = 0.02;

const MAX_RESAMPLE_ATTEMPTS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Generator,
    Image,
    Connector,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum End {
    Low,
    High,
}

impl End {
    pub fn opposite(self) -> End {
        match self {
            End::Low => End::High,
            End::High => End::Low,
        }
    }

    /// Distance from this end to a point at `position` (measured from the low end).
    pub fn distance_to(self, position: f64, length: f64) -> f64 {
        match self {
            End::Low => position,
            End::High => length - position,
        }
    }
}

impl fmt::Display for End {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            End::Low => "low",
            End::High => "high",
        })
    }
}

/// One 1-D wave-bearing system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveguideEdge {
    pub id: usize,
    pub length: f64,
    pub speed: f64,
    pub density: f64,
    pub loss_factor: f64,
    pub role: Role,
    /// Dimension step at which the edge was created (1 for the original edge).
    pub level: usize,
}

impl WaveguideEdge {
    /// Characteristic impedance `rho * c`.
    pub fn impedance(&self) -> f64 {
        self.density * self.speed
    }

    /// One-way travel time.
    pub fn travel_time(&self) -> f64 {
        self.length / self.speed
    }

    pub fn is_connector_at(&self, level: usize) -> bool {
        self.role == Role::Connector && self.level == level
    }
}

/// Lumped termination admittance at a node. `Infinite` is a pressure-release
/// (zero impedance) end; `Finite(0.0)` means no lumped load at all.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Admittance {
    Finite(f64),
    Infinite,
}

impl Admittance {
    pub const NONE: Admittance = Admittance::Finite(0.0);

    pub fn is_none(&self) -> bool {
        matches!(self, Admittance::Finite(y) if *y == 0.0)
    }
}

impl Serialize for Admittance {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Admittance::Finite(y) => s.serialize_f64(*y),
            Admittance::Infinite => s.serialize_str("infinite"),
        }
    }
}

impl<'de> Deserialize<'de> for Admittance {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(y) => Ok(Admittance::Finite(y)),
            Raw::Int(y) => Ok(Admittance::Finite(y as f64)),
            Raw::Text(t) if t == "infinite" => Ok(Admittance::Infinite),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "expected a number or \"infinite\", got {t:?}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Port {
    pub edge: usize,
    pub end: End,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub ports: Vec<Port>,
    #[serde(default = "no_termination")]
    pub termination: Admittance,
}

fn no_termination() -> Admittance {
    Admittance::NONE
}

/// How a lattice came to be; variants relax some of the structural rules.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    #[default]
    Generated,
    InVivo {
        level: usize,
        time_window: f64,
    },
    InVitro {
        level: usize,
    },
    /// Hand-built; lumped terminations are allowed on any node.
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    dimension: usize,
    seed: u64,
    #[serde(default)]
    provenance: Provenance,
    edges: Vec<WaveguideEdge>,
    nodes: Vec<Node>,
}

impl Lattice {
    /// Assemble a lattice from raw parts without checking invariants; use
    /// [`validate`] to audit the result. Edges are kept sorted by id.
    pub fn from_parts(
        dimension: usize,
        seed: u64,
        provenance: Provenance,
        mut edges: Vec<WaveguideEdge>,
        nodes: Vec<Node>,
    ) -> Self {
        edges.sort_by_key(|e| e.id);
        Lattice {
            dimension,
            seed,
            provenance,
            edges,
            nodes,
        }
    }

    pub fn into_parts(self) -> (usize, u64, Provenance, Vec<WaveguideEdge>, Vec<Node>) {
        (
            self.dimension,
            self.seed,
            self.provenance,
            self.edges,
            self.nodes,
        )
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn edges(&self) -> &[WaveguideEdge] {
        &self.edges
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Position of an edge in [`Lattice::edges`].
    pub fn edge_index(&self, id: usize) -> Option<usize> {
        self.edges.binary_search_by_key(&id, |e| e.id).ok()
    }

    pub fn edge(&self, id: usize) -> Result<&WaveguideEdge> {
        self.edge_index(id)
            .map(|i| &self.edges[i])
            .ok_or(Error::UnknownEdge(id))
    }

    /// Maps every attached edge end to the index of its node in [`Lattice::nodes`].
    pub fn port_map(&self) -> BTreeMap<Port, usize> {
        let mut map = BTreeMap::new();
        for (i, node) in self.nodes.iter().enumerate() {
            for port in &node.ports {
                map.entry(*port).or_insert(i);
            }
        }
        map
    }

    /// Edges of the top translation step that carry the given role relative
    /// to that step: edges created earlier count as generator edges.
    pub fn edges_with_role_at(&self, level: usize, role: Role) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|e| match role {
                Role::Generator => e.level < level,
                _ => e.level == level && e.role == role,
            })
            .map(|e| e.id)
            .collect()
    }

    pub(crate) fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub(crate) fn edges_mut(&mut self) -> &mut [WaveguideEdge] {
        &mut self.edges
    }

    pub(crate) fn nodes_mut(&mut self) -> &mut [Node] {
        &mut self.nodes
    }
}

/// `n_N`, the number of edges in the N-dimensional lattice.
pub fn edge_count(dimension: usize) -> Result<u64> {
    if dimension < 1 {
        return Err(Error::Domain(format!(
            "dimension must be at least 1, got {dimension}"
        )));
    }
    let mut n: u64 = 1;
    for step in 1..dimension {
        n = n
            .checked_mul(2)
            .and_then(|v| 1u64.checked_shl(step as u32).and_then(|p| v.checked_add(p)))
            .ok_or_else(|| {
                Error::Domain(format!("edge count overflows for dimension {dimension}"))
            })?;
    }
    Ok(n)
}

/// A positive-valued distribution for edge parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sampler {
    Fixed { value: f64 },
    Uniform { low: f64, high: f64 },
}

impl Sampler {
    pub fn check(&self, field: &str) -> Result<()> {
        match *self {
            Sampler::Fixed { value } if !(value.is_finite() && value > 0.0) => Err(Error::config(
                field,
                format!("fixed value {value} must be positive"),
            )),
            Sampler::Uniform { low, .. } if !(low.is_finite() && low > 0.0) => Err(Error::config(
                field,
                format!("lower bound {low} must be positive"),
            )),
            Sampler::Uniform { low, high } if !(high.is_finite() && high >= low) => {
                Err(Error::config(
                    field,
                    format!("upper bound {high} must be >= lower bound {low}"),
                ))
            }
            _ => Ok(()),
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            Sampler::Fixed { value } => value,
            Sampler::Uniform { low, high } if high > low => rng.random_range(low..high),
            Sampler::Uniform { low, .. } => low,
        }
    }
}

/// A lossless unit edge terminated in its own impedance at both ends, so
/// nothing is ever reflected.
pub fn matched_edge() -> Lattice {
    let edge = WaveguideEdge {
        id: 1,
        length: 1.0,
        speed: 1.0,
        density: 1.0,
        loss_factor: 0.0,
        role: Role::Generator,
        level: 1,
    };
    let end = |id, end| Node {
        id,
        ports: vec![Port { edge: 1, end }],
        termination: Admittance::Finite(1.0),
    };
    Lattice::from_parts(
        1,
        0,
        Provenance::Custom,
        vec![edge],
        vec![end(0, End::Low), end(1, End::High)],
    )
}

/// Parameters of the randomization applied to every edge except edge 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSettings {
    pub length: Sampler,
    /// Characteristic impedance; realized through the density since all
    /// speeds are unity.
    pub impedance: Sampler,
    pub loss_factor: f64,
    /// Resample edges whose round-trip times fall within this of another
    /// edge's. `None` disables the rejection step.
    pub separation: Option<f64>,
}

impl Default for GeneratorSettings {
    fn default() -> Self {
        GeneratorSettings {
            length: Sampler::Uniform {
                low: 0.7,
                high: 1.3,
            },
            impedance: Sampler::Uniform {
                low: 0.7,
                high: 1.3,
            },
            loss_factor: DEFAULT_LOSS_FACTOR,
            separation: Some(DEFAULT_ROUND_TRIP_SEPARATION),
        }
    }
}

impl GeneratorSettings {
    pub fn check(&self) -> Result<()> {
        self.length.check("samplers.length")?;
        self.impedance.check("samplers.impedance")?;
        if !(self.loss_factor.is_finite() && self.loss_factor >= 0.0) {
            return Err(Error::config(
                "samplers.loss_factor",
                format!("{} must be nonnegative", self.loss_factor),
            ));
        }
        if let Some(sep) = self.separation {
            if !(sep.is_finite() && sep >= 0.0) {
                return Err(Error::config(
                    "samplers.separation",
                    format!("{sep} must be nonnegative"),
                ));
            }
        }
        Ok(())
    }
}

struct Draft {
    edges: Vec<WaveguideEdge>,
    /// (low node, high node) per edge, parallel to `edges`.
    ends: Vec<(usize, usize)>,
}

impl Draft {
    fn round_trips(&self) -> impl Iterator<Item = f64> + '_ {
        self.edges.iter().map(|e| 2.0 * e.travel_time())
    }
}

/// Build the N-dimensional lattice. Edge 1 is the unit reference system;
/// every other edge draws its length and impedance from `settings`.
pub fn generate(dimension: usize, settings: &GeneratorSettings, seed: u64) -> Result<Lattice> {
    edge_count(dimension)?;
    settings.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut draft = Draft {
        edges: vec![WaveguideEdge {
            id: 1,
            length: 1.0,
            speed: 1.0,
            density: 1.0,
            loss_factor: settings.loss_factor,
            role: Role::Generator,
            level: 1,
        }],
        ends: vec![(0, 1)],
    };

    for step in 2..=dimension {
        let n_prev = draft.edges.len();
        let v_prev = 1usize << (step - 1);
        let mut created: Vec<(usize, Role, (usize, usize))> = Vec::new();
        for i in 0..n_prev {
            let id = if step == 2 {
                3
            } else {
                draft.edges[i].id + n_prev
            };
            let (lo, hi) = draft.ends[i];
            created.push((id, Role::Image, (lo + v_prev, hi + v_prev)));
        }
        for v in 0..v_prev {
            let id = if step == 2 {
                // right-hand side first, then left
                if v == 1 {
                    2
                } else {
                    4
                }
            } else {
                2 * n_prev + v + 1
            };
            created.push((id, Role::Connector, (v, v + v_prev)));
        }
        for (id, role, ends) in created {
            let (length, impedance) = sample_edge(&draft, settings, &mut rng);
            draft.edges.push(WaveguideEdge {
                id,
                length,
                speed: 1.0,
                density: impedance,
                loss_factor: settings.loss_factor,
                role,
                level: step,
            });
            draft.ends.push(ends);
        }
    }

    let node_count = 1usize << dimension;
    let termination = if dimension == 1 {
        Admittance::Infinite
    } else {
        Admittance::NONE
    };
    let mut nodes: Vec<Node> = (0..node_count)
        .map(|id| Node {
            id,
            ports: Vec::new(),
            termination,
        })
        .collect();
    for (edge, &(lo, hi)) in draft.edges.iter().zip(&draft.ends) {
        nodes[lo].ports.push(Port {
            edge: edge.id,
            end: End::Low,
        });
        nodes[hi].ports.push(Port {
            edge: edge.id,
            end: End::High,
        });
    }
    for node in &mut nodes {
        node.ports.sort();
    }

    Ok(Lattice::from_parts(
        dimension,
        seed,
        Provenance::Generated,
        draft.edges,
        nodes,
    ))
}

fn sample_edge<R: Rng>(draft: &Draft, settings: &GeneratorSettings, rng: &mut R) -> (f64, f64) {
    let draw = |rng: &mut R| (settings.length.sample(rng), settings.impedance.sample(rng));
    let Some(sep) = settings.separation else {
        return draw(rng);
    };
    let clearance = |length: f64| {
        draft
            .round_trips()
            .map(|rt| (2.0 * length - rt).abs())
            .fold(f64::INFINITY, f64::min)
    };
    let mut best = draw(rng);
    let mut best_clearance = clearance(best.0);
    let mut attempts = 1;
    while best_clearance < sep && attempts < MAX_RESAMPLE_ATTEMPTS {
        let candidate = draw(rng);
        let c = clearance(candidate.0);
        if c > best_clearance {
            best = candidate;
            best_clearance = c;
        }
        attempts += 1;
    }
    best
}

/// Per-edge parameter substitution; `None` keeps the current value.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeOverride {
    pub length: Option<f64>,
    pub density: Option<f64>,
    pub speed: Option<f64>,
    pub loss_factor: Option<f64>,
}

/// Apply parameter overrides, leaving topology untouched.
pub fn override_parameters(
    lattice: &Lattice,
    assignments: &BTreeMap<usize, EdgeOverride>,
) -> Result<Lattice> {
    let mut out = lattice.clone();
    for (&id, ov) in assignments {
        let idx = out.edge_index(id).ok_or(Error::UnknownEdge(id))?;
        let edge = &mut out.edges_mut()[idx];
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(v)
            } else {
                Err(Error::config(
                    format!("overrides.{id}.{name}"),
                    format!("{v} must be positive"),
                ))
            }
        };
        if let Some(v) = ov.length {
            edge.length = positive("length", v)?;
        }
        if let Some(v) = ov.density {
            edge.density = positive("density", v)?;
        }
        if let Some(v) = ov.speed {
            edge.speed = positive("speed", v)?;
        }
        if let Some(v) = ov.loss_factor {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(
                    format!("overrides.{id}.loss_factor"),
                    format!("{v} must be nonnegative"),
                ));
            }
            edge.loss_factor = v;
        }
    }
    Ok(out)
}

/// One failed invariant; `entity` names what it concerns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub entity: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.entity, self.message)
    }
}

/// Audit every structural and parametric invariant. An empty list means the
/// lattice is a well-formed hypercube skeleton.
pub fn validate(lattice: &Lattice) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |entity: String, message: String| out.push(Violation { entity, message });
    let n = lattice.dimension();

    if n < 1 {
        push("lattice".into(), format!("dimension {n} is below 1"));
    }

    let mut ids = BTreeSet::new();
    for e in lattice.edges() {
        let entity = format!("edge {}", e.id);
        if !ids.insert(e.id) {
            push(entity.clone(), "duplicate edge id".into());
        }
        for (name, v) in [
            ("length", e.length),
            ("speed", e.speed),
            ("density", e.density),
        ] {
            if !(v.is_finite() && v > 0.0) {
                push(entity.clone(), format!("{name} {v} must be positive"));
            }
        }
        if !(e.loss_factor.is_finite() && e.loss_factor >= 0.0) {
            push(
                entity.clone(),
                format!("loss factor {} must be nonnegative", e.loss_factor),
            );
        }
    }

    if (1..64).contains(&n) {
        if let Ok(expected) = edge_count(n) {
            if lattice.edges().len() as u64 != expected {
                push(
                    "lattice".into(),
                    format!(
                        "has {} edges but the recurrence n_(N+1) = 2 n_N + 2^N requires {expected} for N = {n}",
                        lattice.edges().len()
                    ),
                );
            }
        }
        let expected_nodes = 1usize << n;
        if lattice.nodes().len() != expected_nodes {
            push(
                "lattice".into(),
                format!(
                    "has {} nodes, expected 2^{n} = {expected_nodes}",
                    lattice.nodes().len()
                ),
            );
        }
    }

    let mut seen: BTreeMap<Port, usize> = BTreeMap::new();
    let in_vitro_level = match lattice.provenance() {
        Provenance::InVitro { level } => Some(level),
        _ => None,
    };
    let free_terminations = lattice.provenance() == Provenance::Custom;
    for node in lattice.nodes() {
        let entity = format!("node {}", node.id);
        if node.ports.is_empty() {
            push(entity.clone(), "has no ports".into());
        }
        for port in &node.ports {
            if !ids.contains(&port.edge) {
                push(
                    entity.clone(),
                    format!("port references unknown edge {}", port.edge),
                );
            }
            if let Some(other) = seen.insert(*port, node.id) {
                push(
                    format!("edge {} {} end", port.edge, port.end),
                    format!("attached to both node {other} and node {}", node.id),
                );
            }
        }
        if let Admittance::Finite(y) = node.termination {
            if !(y.is_finite() && y >= 0.0) {
                push(
                    entity.clone(),
                    format!("termination admittance {y} must be nonnegative"),
                );
            }
        }
        if n == 1 {
            if node.ports.len() != 1 {
                push(
                    entity.clone(),
                    format!("degree {} but a 1-D lattice needs 1", node.ports.len()),
                );
            }
            if node.termination != Admittance::Infinite && !free_terminations {
                push(
                    entity.clone(),
                    "1-D ends must be pressure-release (infinite admittance)".into(),
                );
            }
        } else if n >= 2 {
            if node.ports.len() != n {
                push(
                    entity.clone(),
                    format!("degree {} but dimension is {n}", node.ports.len()),
                );
            }
            let touches_decoupled = in_vitro_level.is_some_and(|level| {
                node.ports
                    .iter()
                    .any(|p| lattice.edge(p.edge).is_ok_and(|e| e.is_connector_at(level)))
            });
            if !node.termination.is_none() && !touches_decoupled && !free_terminations {
                push(entity.clone(), "carries a lumped termination".into());
            }
        }
    }
    for e in lattice.edges() {
        for end in [End::Low, End::High] {
            if !seen.contains_key(&Port { edge: e.id, end }) {
                push(
                    format!("edge {} {end} end", e.id),
                    "dangling: not attached to any node".into(),
                );
            }
        }
    }

    check_connected_bipartite(lattice, &mut push);
    out
}

fn check_connected_bipartite(lattice: &Lattice, push: &mut impl FnMut(String, String)) {
    let nodes = lattice.nodes();
    if nodes.is_empty() {
        return;
    }
    let port_map = lattice.port_map();
    let mut adjacency = vec![Vec::new(); nodes.len()];
    for e in lattice.edges() {
        let lo = port_map.get(&Port {
            edge: e.id,
            end: End::Low,
        });
        let hi = port_map.get(&Port {
            edge: e.id,
            end: End::High,
        });
        if let (Some(&a), Some(&b)) = (lo, hi) {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
    }
    let mut colour: Vec<Option<bool>> = vec![None; nodes.len()];
    let mut queue = VecDeque::from([0usize]);
    colour[0] = Some(false);
    let mut odd_cycle = None;
    while let Some(a) = queue.pop_front() {
        let c = colour[a].unwrap_or(false);
        for &b in &adjacency[a] {
            match colour[b] {
                None => {
                    colour[b] = Some(!c);
                    queue.push_back(b);
                }
                Some(cb) if cb == c && odd_cycle.is_none() => odd_cycle = Some((a, b)),
                _ => {}
            }
        }
    }
    let unreached: Vec<usize> = colour
        .iter()
        .enumerate()
        .filter(|(_, c)| c.is_none())
        .map(|(i, _)| nodes[i].id)
        .collect();
    if !unreached.is_empty() {
        push(
            "lattice".into(),
            format!("not connected; unreachable nodes {unreached:?}"),
        );
    }
    if let Some((a, b)) = odd_cycle {
        push(
            "lattice".into(),
            format!(
                "not bipartite; nodes {} and {} share a colour",
                nodes[a].id, nodes[b].id
            ),
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lattice(n: usize) -> Lattice {
        generate(n, &GeneratorSettings::default(), 7).unwrap()
    }

    #[test]
    fn edge_count_matches_table() {
        let got: Vec<u64> = (1..=4).map(|n| edge_count(n).unwrap()).collect();
        assert_eq!(got, vec![1, 4, 12, 32]);
        assert_eq!(edge_count(5).unwrap(), 80);
        assert!(matches!(edge_count(0), Err(Error::Domain(_))));
    }

    #[test]
    fn square_follows_figure_numbering() {
        let l = lattice(2);
        let role = |id| l.edge(id).unwrap().role;
        assert_eq!(role(1), Role::Generator);
        assert_eq!(role(3), Role::Image);
        assert_eq!(role(2), Role::Connector);
        assert_eq!(role(4), Role::Connector);
        // edge 2 hangs off the high (right) end of edge 1, edge 4 off the low end
        let pm = l.port_map();
        let right = pm[&Port {
            edge: 1,
            end: End::High,
        }];
        let left = pm[&Port {
            edge: 1,
            end: End::Low,
        }];
        assert!(l.nodes()[right].ports.iter().any(|p| p.edge == 2));
        assert!(l.nodes()[left].ports.iter().any(|p| p.edge == 4));
        // edge 3 closes the square
        let top = pm[&Port {
            edge: 2,
            end: End::High,
        }];
        assert!(l.nodes()[top].ports.iter().any(|p| p.edge == 3));
    }

    #[test]
    fn single_edge_has_pressure_release_ends() {
        let l = lattice(1);
        assert_eq!(l.edges().len(), 1);
        assert_eq!(l.nodes().len(), 2);
        for node in l.nodes() {
            assert_eq!(node.ports.len(), 1);
            assert_eq!(node.termination, Admittance::Infinite);
        }
        let e = &l.edges()[0];
        assert_eq!((e.length, e.speed, e.density), (1.0, 1.0, 1.0));
    }

    #[test]
    fn cube_has_uniform_degree_three() {
        let l = lattice(3);
        assert_eq!(l.edges().len(), 12);
        assert_eq!(l.nodes().len(), 8);
        assert!(l.nodes().iter().all(|n| n.ports.len() == 3));
        assert_eq!(l.edges_with_role_at(3, Role::Image), vec![5, 6, 7, 8]);
        assert_eq!(
            l.edges_with_role_at(3, Role::Connector),
            vec![9, 10, 11, 12]
        );
    }

    #[test]
    fn generated_lattices_validate() {
        for n in 1..=6 {
            let v = validate(&lattice(n));
            assert!(v.is_empty(), "N = {n}: {v:?}");
        }
    }

    #[test]
    fn role_partition_follows_recurrence() {
        for n in 2..=6 {
            let l = lattice(n);
            let prev = edge_count(n - 1).unwrap() as usize;
            assert_eq!(l.edges_with_role_at(n, Role::Generator).len(), prev);
            assert_eq!(l.edges_with_role_at(n, Role::Image).len(), prev);
            assert_eq!(l.edges_with_role_at(n, Role::Connector).len(), 1 << (n - 1));
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let s = GeneratorSettings::default();
        assert_eq!(generate(4, &s, 11).unwrap(), generate(4, &s, 11).unwrap());
        assert_ne!(generate(4, &s, 11).unwrap(), generate(4, &s, 12).unwrap());
    }

    #[test]
    fn rejection_separates_round_trips() {
        let l = lattice(4);
        let mut rts: Vec<f64> = l.edges().iter().map(|e| 2.0 * e.travel_time()).collect();
        rts.sort_by(f64::total_cmp);
        for w in rts.windows(2) {
            assert!(w[1] - w[0] >= DEFAULT_ROUND_TRIP_SEPARATION, "{w:?}");
        }
    }

    #[test]
    fn bad_sampler_is_config_error_naming_field() {
        let s = GeneratorSettings {
            length: Sampler::Uniform {
                low: -1.0,
                high: 1.0,
            },
            ..Default::default()
        };
        match generate(2, &s, 1) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "samplers.length"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overrides_install_published_impedances() {
        let l = lattice(2);
        let map = BTreeMap::from([
            (
                2,
                EdgeOverride {
                    density: Some(1.7),
                    speed: Some(1.0),
                    ..Default::default()
                },
            ),
            (
                4,
                EdgeOverride {
                    density: Some(1.8),
                    speed: Some(1.0),
                    ..Default::default()
                },
            ),
        ]);
        let o = override_parameters(&l, &map).unwrap();
        assert_eq!(o.edge(2).unwrap().impedance(), 1.7);
        assert_eq!(o.edge(4).unwrap().impedance(), 1.8);
        assert_eq!(o.nodes(), l.nodes());
        assert_eq!(override_parameters(&l, &BTreeMap::new()).unwrap(), l);
    }

    #[test]
    fn override_rejects_unknown_and_nonpositive() {
        let l = lattice(2);
        let bad_id = BTreeMap::from([(9, EdgeOverride::default())]);
        assert!(matches!(
            override_parameters(&l, &bad_id),
            Err(Error::UnknownEdge(9))
        ));
        let bad_val = BTreeMap::from([(
            2,
            EdgeOverride {
                length: Some(0.0),
                ..Default::default()
            },
        )]);
        assert!(matches!(
            override_parameters(&l, &bad_val),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn deleted_port_is_reported_as_dangling() {
        let (n, seed, p, edges, mut nodes) = lattice(3).into_parts();
        let removed = nodes[5].ports.remove(0);
        let l = Lattice::from_parts(n, seed, p, edges, nodes);
        let v = validate(&l);
        let needle = format!("edge {} {} end", removed.edge, removed.end);
        assert!(
            v.iter()
                .any(|x| x.entity == needle && x.message.contains("dangling")),
            "{v:?}"
        );
    }

    #[test]
    fn extra_edge_cites_edge_count() {
        let (n, seed, p, mut edges, nodes) = lattice(2).into_parts();
        let mut extra = edges[0].clone();
        extra.id = 5;
        edges.push(extra);
        let v = validate(&Lattice::from_parts(n, seed, p, edges, nodes));
        assert!(v.iter().any(|x| x.message.contains("requires 4")), "{v:?}");
    }
}
