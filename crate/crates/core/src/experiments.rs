//! Canonical scenarios and the dimension-isolating variants.
//!
//! Every scenario drives edge 1 at x' = 0.2 and listens on edge 1 at
//! x = 0.7. The in-vivo variant stretches the connectors of one translation
//! step past the observation window, keeping every junction as it was, so
//! that subtracting it from the total leaves only the returns that used
//! those connectors. The in-vitro variant instead shorts the connectors,
//! which turns every junction they touch into a pressure-release end.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::fdsolver::{frequency_response, AssessSpec, DriveSpec, FrequencyResponse};
use crate::lattice::{
    generate, override_parameters, Admittance, EdgeOverride, GeneratorSettings, Lattice,
    Provenance, Role,
};
use crate::oracle::{self, FirstArrival, PathArrival};
use crate::tdtransform::{find_arrivals, to_time, Arrival, SweepConfig, TimeResponse};

pub const DRIVE_POINT: DriveSpec = DriveSpec {
    edge: 1,
    position: 0.2,
    amplitude: 1.0,
};

pub const ASSESS_POINT: AssessSpec = AssessSpec {
    edge: 1,
    position: 0.7,
};

/// Relative envelope threshold for arrival picking.
pub const ARRIVAL_THRESHOLD: f64 = 1e-3;

/// Everything one frequency sweep needs.
#[derive(Clone, Debug, PartialEq)]
pub struct RunInputs {
    pub lattice: Lattice,
    pub drive: DriveSpec,
    pub assess: AssessSpec,
    pub sweep: SweepConfig,
}

pub fn canonical_scenario(
    dimension: usize,
    seed: u64,
    overrides: &BTreeMap<usize, EdgeOverride>,
) -> Result<RunInputs> {
    canonical_scenario_with(dimension, seed, &GeneratorSettings::default(), overrides)
}

pub fn canonical_scenario_with(
    dimension: usize,
    seed: u64,
    settings: &GeneratorSettings,
    overrides: &BTreeMap<usize, EdgeOverride>,
) -> Result<RunInputs> {
    let lattice = generate(dimension, settings, seed)?;
    let lattice = override_parameters(&lattice, overrides)?;
    Ok(RunInputs {
        lattice,
        drive: DRIVE_POINT,
        assess: ASSESS_POINT,
        sweep: SweepConfig::standard(),
    })
}

fn connectors(lattice: &Lattice, level: usize) -> Result<Vec<usize>> {
    let ids = lattice.edges_with_role_at(level, Role::Connector);
    if ids.is_empty() {
        return Err(Error::Usage(format!(
            "level {level} has no connector edges in a {}-dimensional lattice",
            lattice.dimension()
        )));
    }
    Ok(ids)
}

/// Lengthen the connectors of `level` so that even a one-way traversal takes
/// longer than `time_window`. Impedances, and so every junction, are kept.
pub fn in_vivo_variant(lattice: &Lattice, level: usize, time_window: f64) -> Result<Lattice> {
    if !(time_window > 0.0 && time_window.is_finite()) {
        return Err(Error::Domain(format!(
            "time window must be positive, got {time_window}"
        )));
    }
    let ids = connectors(lattice, level)?;
    let mut out = lattice.clone();
    for id in ids {
        let idx = out.edge_index(id).ok_or(Error::UnknownEdge(id))?;
        let edge = &mut out.edges_mut()[idx];
        // strictly longer, so nothing lands exactly on the window edge
        edge.length = edge.length.max(edge.speed * time_window * (1.0 + 1e-9));
    }
    Ok(out.with_provenance(Provenance::InVivo { level, time_window }))
}

/// Short the connectors of `level`: every node they touch becomes a
/// zero-impedance junction that reflects with R = -1 and transmits nothing.
pub fn in_vitro_variant(lattice: &Lattice, level: usize) -> Result<Lattice> {
    let ids = connectors(lattice, level)?;
    let mut out = lattice.clone();
    for node in out.nodes_mut() {
        if node.ports.iter().any(|p| ids.contains(&p.edge)) {
            node.termination = Admittance::Infinite;
        }
    }
    Ok(out.with_provenance(Provenance::InVitro { level }))
}

/// Pointwise `total - in_vivo`.
pub fn excess_response(total: &TimeResponse, in_vivo: &TimeResponse) -> Result<TimeResponse> {
    total.difference(in_vivo)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum VariantTag {
    Total,
    InVivo,
    InVitro,
    Excess,
}

impl VariantTag {
    pub fn name(self) -> &'static str {
        match self {
            VariantTag::Total => "total",
            VariantTag::InVivo => "in_vivo",
            VariantTag::InVitro => "in_vitro",
            VariantTag::Excess => "excess",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ScenarioResult {
    pub variant: VariantTag,
    pub lattice: Lattice,
    pub frequency: FrequencyResponse,
    pub time: TimeResponse,
    pub arrivals: Vec<Arrival>,
}

/// Sweep, transform and pick arrivals.
pub fn simulate(inputs: &RunInputs, variant: VariantTag, threshold: f64) -> Result<ScenarioResult> {
    let frequency = frequency_response(
        &inputs.lattice,
        &inputs.drive,
        &inputs.assess,
        &inputs.sweep.grid(),
    )?;
    let time = to_time(&frequency, &inputs.sweep)?;
    let arrivals = find_arrivals(&time, threshold)?;
    Ok(ScenarioResult {
        variant,
        lattice: inputs.lattice.clone(),
        frequency,
        time,
        arrivals,
    })
}

/// Same drive, assessment and sweep on a different lattice.
pub fn with_lattice(inputs: &RunInputs, lattice: Lattice) -> RunInputs {
    RunInputs {
        lattice,
        ..inputs.clone()
    }
}

/// Total, in-vivo and excess runs for the top translation step, plus the
/// earliest connector arrival they are judged against.
#[derive(Clone, Debug)]
pub struct InVivoStudy {
    pub level: usize,
    pub total: ScenarioResult,
    pub in_vivo: ScenarioResult,
    pub excess: ScenarioResult,
    pub first_connector: FirstArrival,
}

pub fn in_vivo_study(inputs: &RunInputs, threshold: f64) -> Result<InVivoStudy> {
    let level = inputs.lattice.dimension();
    let window = inputs.sweep.time_window();
    let vivo_inputs = with_lattice(inputs, in_vivo_variant(&inputs.lattice, level, window)?);
    let (total, in_vivo) = rayon::join(
        || simulate(inputs, VariantTag::Total, threshold),
        || simulate(&vivo_inputs, VariantTag::InVivo, threshold),
    );
    let (total, in_vivo) = (total?, in_vivo?);
    let time = excess_response(&total.time, &in_vivo.time)?;
    let frequency = FrequencyResponse {
        grid: total.frequency.grid,
        values: total
            .frequency
            .values
            .iter()
            .zip(&in_vivo.frequency.values)
            .map(|(a, b)| a - b)
            .collect(),
    };
    let arrivals = find_arrivals(&time, threshold)?;
    let first_connector = oracle::first_connector_arrival(
        &inputs.lattice,
        &inputs.drive,
        &inputs.assess,
        level,
        window,
    )?;
    Ok(InVivoStudy {
        level,
        excess: ScenarioResult {
            variant: VariantTag::Excess,
            lattice: inputs.lattice.clone(),
            frequency,
            time,
            arrivals,
        },
        total,
        in_vivo,
        first_connector,
    })
}

/// How far before `t_star` the excess is expected to be silent: two samples,
/// or ten loss half-widths of an arrival at `t_star`, whichever is larger.
/// A lossy arrival is a Lorentzian of half-width `η t`, so at ten half-widths
/// its tail is down to 1% of its own peak.
pub fn null_guard(sweep: &SweepConfig, loss_factor: f64, t_star: f64) -> f64 {
    (2.0 * sweep.time_step()).max(10.0 * loss_factor * t_star)
}

/// Peak excess before the first connector arrival, relative to the peak total.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NullCheck {
    pub t_star: f64,
    pub guard: f64,
    pub max_excess: f64,
    pub max_total: f64,
}

impl NullCheck {
    pub fn ratio(&self) -> f64 {
        self.max_excess / self.max_total
    }
}

pub fn null_check(study: &InVivoStudy, sweep: &SweepConfig) -> NullCheck {
    let t_star = study.first_connector.time().unwrap_or(sweep.time_window());
    let eta = study
        .total
        .lattice
        .edges()
        .iter()
        .map(|e| e.loss_factor)
        .fold(0.0, f64::max);
    let guard = null_guard(sweep, eta, t_star);
    let limit = t_star - guard;
    let max_excess = study
        .excess
        .time
        .values
        .iter()
        .enumerate()
        .filter(|&(n, _)| study.excess.time.time(n) < limit)
        .map(|(_, v)| v.abs())
        .fold(0.0, f64::max);
    let max_total = study
        .total
        .time
        .values
        .iter()
        .map(|v| v.abs())
        .fold(0.0, f64::max);
    NullCheck {
        t_star,
        guard,
        max_excess,
        max_total,
    }
}

/// Oracle paths for a run, and their rendering through the run's sweep.
#[derive(Clone, Debug)]
pub struct OracleReference {
    pub paths: Vec<PathArrival>,
    pub time: TimeResponse,
    pub arrivals: Vec<Arrival>,
}

/// Enumerate paths up to `t_max` above `floor`, render them, and pick the
/// rendered peaks at `threshold`.
pub fn oracle_reference(
    inputs: &RunInputs,
    t_max: f64,
    floor: f64,
    threshold: f64,
) -> Result<OracleReference> {
    let paths =
        oracle::enumerate_paths(&inputs.lattice, &inputs.drive, &inputs.assess, t_max, floor)?;
    let time = oracle::render(&paths, &inputs.sweep)?;
    let arrivals = find_arrivals(&time, threshold)?;
    Ok(OracleReference {
        paths,
        time,
        arrivals,
    })
}
