//! Config and lattice documents (TOML) and tabular outputs (CSV).
//!
//! A run config has the top-level keys `dimension`, `seed`, `samplers`,
//! `overrides`, `drive`, `assess`, `sweep`, `variant`, `oracle`, `output`
//! and optionally `lattice`, which supplies a ready-made lattice (inline, or
//! as a path to a lattice document) instead of generating one:
//!
//! ```toml
//! dimension = 2
//! seed = 1
//!
//! [samplers]
//! length = { kind = "uniform", low = 0.7, high = 1.3 }
//! impedance = { kind = "uniform", low = 0.7, high = 1.3 }
//! loss_factor = 0.003
//! separation = 0.02
//!
//! [[overrides]]
//! edge = 2
//! impedance = 1.7
//!
//! [drive]
//! edge = 1
//! position = 0.2
//!
//! [assess]
//! edge = 1
//! position = 0.7
//!
//! [sweep]
//! delta_omega = 0.6283185307179586
//! bins = 4096
//! window = "raised_cosine"
//! damping = 0.9210340371976183
//! threshold = 0.001
//!
//! [variant]
//! kind = "excess"   # total | in_vivo | in_vitro | excess
//!
//! [oracle]
//! floor = 0.0001
//!
//! [output]
//! plot = true
//! ```
//!
//! Every file is written to a temporary sibling first and renamed into place.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{
    in_vitro_variant, in_vivo_variant, RunInputs, ARRIVAL_THRESHOLD, ASSESS_POINT, DRIVE_POINT,
};
use crate::fdsolver::{AssessSpec, DriveSpec, FrequencyResponse};
use crate::lattice::{
    generate, override_parameters, validate, EdgeOverride, GeneratorSettings, Lattice,
};
use crate::oracle::PathArrival;
use crate::tdtransform::{envelope, Arrival, SweepConfig, TimeResponse, Window};

/// Oracle amplitude floor used by runs unless configured otherwise.
pub const DEFAULT_ORACLE_FLOOR: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub samplers: GeneratorSettings,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub overrides: Vec<OverrideEntry>,
    #[serde(default = "default_drive")]
    pub drive: DriveSpec,
    #[serde(default = "default_assess")]
    pub assess: AssessSpec,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub variant: VariantSection,
    #[serde(default)]
    pub oracle: OracleSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<LatticeSource>,
}

fn default_drive() -> DriveSpec {
    DRIVE_POINT
}

fn default_assess() -> AssessSpec {
    ASSESS_POINT
}

/// Parameter substitution for one edge. `impedance` is realized through the
/// density at the edge's (possibly overridden) speed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverrideEntry {
    pub edge: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub impedance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_factor: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub delta_omega: f64,
    pub bins: usize,
    pub window: Window,
    pub damping: f64,
    /// Relative envelope threshold for arrival picking.
    pub threshold: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection::from(SweepConfig::standard())
    }
}

impl From<SweepConfig> for SweepSection {
    fn from(s: SweepConfig) -> Self {
        SweepSection {
            delta_omega: s.delta_omega,
            bins: s.bins,
            window: s.window,
            damping: s.damping,
            threshold: ARRIVAL_THRESHOLD,
        }
    }
}

impl SweepSection {
    pub fn config(&self) -> SweepConfig {
        SweepConfig {
            delta_omega: self.delta_omega,
            bins: self.bins,
            window: self.window,
            damping: self.damping,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantKind {
    #[default]
    Total,
    InVivo,
    InVitro,
    Excess,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VariantSection {
    pub kind: VariantKind,
    /// Translation step whose connectors are altered; the top one by default.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<usize>,
    /// In-vivo observation window; the sweep's window by default.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSection {
    /// Enumeration horizon; the sweep's time window by default.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    pub floor: f64,
}

impl Default for OracleSection {
    fn default() -> Self {
        OracleSection {
            t_max: None,
            floor: DEFAULT_ORACLE_FLOOR,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    pub plot: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LatticeSource {
    File(PathBuf),
    Inline(Lattice),
}

impl RunConfig {
    /// Generated lattice of the given dimension with every default.
    pub fn new(dimension: usize) -> Self {
        RunConfig {
            dimension: Some(dimension),
            seed: 0,
            samplers: GeneratorSettings::default(),
            overrides: Vec::new(),
            drive: DRIVE_POINT,
            assess: ASSESS_POINT,
            sweep: SweepSection::default(),
            variant: VariantSection::default(),
            oracle: OracleSection::default(),
            output: OutputSection::default(),
            lattice: None,
        }
    }

    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })
    }

    /// Read a config file; a relative lattice path is taken relative to it.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text, &path.display().to_string())?;
        if let Some(LatticeSource::File(p)) = &mut cfg.lattice {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Usage(format!("cannot serialize config: {e}")))
    }

    pub fn sweep_config(&self) -> SweepConfig {
        self.sweep.config()
    }

    pub fn check(&self) -> Result<()> {
        self.samplers.check()?;
        self.sweep_config().check()?;
        let t = self.sweep.threshold;
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::config(
                "sweep.threshold",
                format!("{t} must lie in (0, 1)"),
            ));
        }
        if !(self.oracle.floor > 0.0) {
            return Err(Error::config(
                "oracle.floor",
                format!("{} must be positive", self.oracle.floor),
            ));
        }
        if let Some(t) = self.oracle.t_max {
            if !(t > 0.0) {
                return Err(Error::config(
                    "oracle.t_max",
                    format!("{t} must be positive"),
                ));
            }
        }
        if let Some(w) = self.variant.window {
            if !(w > 0.0) {
                return Err(Error::config(
                    "variant.window",
                    format!("{w} must be positive"),
                ));
            }
        }
        match (self.dimension, &self.lattice) {
            (None, None) => Err(Error::config(
                "dimension",
                "required unless a lattice is given",
            )),
            (Some(0), _) => Err(Error::config("dimension", "must be at least 1")),
            _ => Ok(()),
        }
    }

    pub fn oracle_horizon(&self) -> f64 {
        self.oracle
            .t_max
            .unwrap_or_else(|| self.sweep_config().time_window())
    }

    /// The base lattice: loaded or generated, then overridden and validated.
    pub fn build_lattice(&self) -> Result<Lattice> {
        self.check()?;
        let base = match &self.lattice {
            Some(LatticeSource::Inline(l)) => l.clone(),
            Some(LatticeSource::File(p)) => read_lattice(p)?,
            None => generate(self.dimension.unwrap_or(1), &self.samplers, self.seed)?,
        };
        if let (Some(n), Some(_)) = (self.dimension, &self.lattice) {
            if n != base.dimension() {
                return Err(Error::config(
                    "dimension",
                    format!(
                        "{n} does not match the supplied lattice's {}",
                        base.dimension()
                    ),
                ));
            }
        }
        let lattice = override_parameters(&base, &self.edge_overrides(&base)?)?;
        let violations = validate(&lattice);
        if !violations.is_empty() {
            let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
            return Err(Error::config("lattice", list.join("; ")));
        }
        Ok(lattice)
    }

    fn edge_overrides(&self, lattice: &Lattice) -> Result<BTreeMap<usize, EdgeOverride>> {
        let mut out = BTreeMap::new();
        for o in &self.overrides {
            let edge = lattice.edge(o.edge)?;
            let density = match (o.density, o.impedance) {
                (Some(_), Some(_)) => {
                    return Err(Error::config(
                        format!("overrides.{}", o.edge),
                        "give density or impedance, not both",
                    ))
                }
                (Some(d), None) => Some(d),
                (None, Some(z)) => Some(z / o.speed.unwrap_or(edge.speed)),
                (None, None) => None,
            };
            let previous = out.insert(
                o.edge,
                EdgeOverride {
                    length: o.length,
                    density,
                    speed: o.speed,
                    loss_factor: o.loss_factor,
                },
            );
            if previous.is_some() {
                return Err(Error::config(
                    format!("overrides.{}", o.edge),
                    "edge listed more than once",
                ));
            }
        }
        Ok(out)
    }

    /// Inputs for the base lattice, before any variant is applied.
    pub fn build_inputs(&self) -> Result<RunInputs> {
        let lattice = self.build_lattice()?;
        self.drive.check(&lattice)?;
        self.assess.check(&lattice)?;
        Ok(RunInputs {
            lattice,
            drive: self.drive,
            assess: self.assess,
            sweep: self.sweep_config(),
        })
    }

    pub fn variant_level(&self, lattice: &Lattice) -> usize {
        self.variant.level.unwrap_or(lattice.dimension())
    }

    pub fn variant_window(&self) -> f64 {
        self.variant
            .window
            .unwrap_or_else(|| self.sweep_config().time_window())
    }

    /// The lattice the configured variant runs on (the excess variant's
    /// subtrahend is built separately).
    pub fn variant_lattice(&self, base: &Lattice) -> Result<Lattice> {
        match self.variant.kind {
            VariantKind::Total | VariantKind::Excess => Ok(base.clone()),
            VariantKind::InVivo => {
                in_vivo_variant(base, self.variant_level(base), self.variant_window())
            }
            VariantKind::InVitro => in_vitro_variant(base, self.variant_level(base)),
        }
    }
}

/// Named scenarios. Each pins the dimension, the published overrides and
/// the variant to run; the seed defaults to 1.
pub const PRESETS: &[&str] = &[
    "paper-1d",
    "paper-2d",
    "paper-3d",
    "paper-4d",
    "matched-edge",
];

pub fn preset(name: &str) -> Result<RunConfig> {
    let mut cfg = match name {
        "paper-1d" => RunConfig::new(1),
        "paper-2d" => {
            let mut c = RunConfig::new(2);
            c.overrides = vec![
                OverrideEntry {
                    edge: 2,
                    impedance: Some(1.7),
                    ..Default::default()
                },
                OverrideEntry {
                    edge: 4,
                    impedance: Some(1.8),
                    ..Default::default()
                },
            ];
            c
        }
        "paper-3d" => RunConfig::new(3),
        "paper-4d" => RunConfig::new(4),
        "matched-edge" => {
            let mut c = RunConfig::new(1);
            c.lattice = Some(LatticeSource::Inline(crate::lattice::matched_edge()));
            c
        }
        _ => {
            return Err(Error::config(
                "preset",
                format!(
                    "unknown preset `{name}`; expected one of {}",
                    PRESETS.join(", ")
                ),
            ))
        }
    };
    cfg.seed = 1;
    if name.starts_with("paper-") && name != "paper-1d" {
        cfg.variant.kind = VariantKind::Excess;
    }
    cfg.output.plot = true;
    Ok(cfg)
}

pub fn lattice_to_toml(lattice: &Lattice) -> Result<String> {
    toml::to_string(lattice).map_err(|e| Error::Usage(format!("cannot serialize lattice: {e}")))
}

pub fn lattice_from_toml(text: &str, origin: &str) -> Result<Lattice> {
    toml::from_str(text).map_err(|e| Error::Parse {
        path: origin.to_string(),
        message: e.to_string(),
    })
}

pub fn read_lattice(path: &Path) -> Result<Lattice> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    lattice_from_toml(&text, &path.display().to_string())
}

/// Write via a temporary sibling and rename, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| Error::Usage(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".{}.tmp", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

fn csv_bytes<R: Serialize>(rows: impl IntoIterator<Item = R>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)
            .map_err(|e| Error::Usage(format!("cannot encode CSV row: {e}")))?;
    }
    w.into_inner()
        .map_err(|e| Error::Usage(format!("cannot flush CSV: {e}")))
}

#[derive(Serialize)]
struct FrequencyRow {
    omega: f64,
    re: f64,
    im: f64,
}

#[derive(Serialize)]
struct TimeRow {
    t: f64,
    value: f64,
    envelope: f64,
}

#[derive(Serialize)]
struct PathRow {
    time: f64,
    amplitude: f64,
    n_reflections: usize,
    edge_sequence: String,
}

pub fn frequency_csv(response: &FrequencyResponse) -> Result<Vec<u8>> {
    csv_bytes(
        response
            .omegas()
            .zip(&response.values)
            .map(|(omega, v)| FrequencyRow {
                omega,
                re: v.re,
                im: v.im,
            }),
    )
}

pub fn time_csv(tr: &TimeResponse) -> Result<Vec<u8>> {
    let env = envelope(tr);
    csv_bytes(
        tr.times()
            .zip(&tr.values)
            .zip(env)
            .map(|((t, &value), envelope)| TimeRow { t, value, envelope }),
    )
}

pub fn arrivals_csv(arrivals: &[Arrival]) -> Result<Vec<u8>> {
    csv_bytes(arrivals)
}

pub fn paths_csv(paths: &[PathArrival]) -> Result<Vec<u8>> {
    csv_bytes(paths.iter().map(|p| {
        PathRow {
            time: p.time,
            amplitude: p.amplitude,
            n_reflections: p.reflections,
            edge_sequence: p
                .edges
                .iter()
                .map(|e| e.to_string())
                .collect::<Vec<_>>()
                .join(";"),
        }
    }))
}

#[derive(Deserialize)]
struct ArrivalRecord {
    time: f64,
    amplitude: f64,
    #[serde(default)]
    prominence: f64,
}

/// Read `time` and `amplitude` (and `prominence` when present) from an
/// arrivals CSV or an oracle path CSV.
pub fn read_arrivals(path: &Path) -> Result<Vec<Arrival>> {
    let parse = |e: csv::Error| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        },
        _ => parse(e),
    })?;
    reader
        .deserialize::<ArrivalRecord>()
        .map(|r| {
            r.map(|a| Arrival {
                time: a.time,
                amplitude: a.amplitude,
                prominence: a.prominence,
            })
            .map_err(parse)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Admittance;

    #[test]
    fn default_config_round_trips() {
        let cfg = preset("paper-2d").unwrap();
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text, "mem").unwrap(), cfg);
        let inline = preset("matched-edge").unwrap();
        let text = inline.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text, "mem").unwrap(), inline);
    }

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = RunConfig::from_toml_str("dimension = 3\nseed = 7\n", "mem").unwrap();
        assert_eq!(cfg.sweep_config(), SweepConfig::standard());
        assert_eq!(cfg.drive, DRIVE_POINT);
        assert_eq!(cfg.variant.kind, VariantKind::Total);
        assert_eq!(cfg.build_lattice().unwrap().edges().len(), 12);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            RunConfig::from_toml_str("dimension = 2\ncolour = 3\n", "mem"),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn bad_sampler_names_field() {
        let text =
            "dimension = 2\n[samplers]\nlength = { kind = \"uniform\", low = 2.0, high = 1.0 }\n";
        let cfg = RunConfig::from_toml_str(text, "mem").unwrap();
        match cfg.build_lattice() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "samplers.length"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn paper_2d_overrides_set_impedances() {
        let l = preset("paper-2d").unwrap().build_lattice().unwrap();
        assert_eq!(l.edge(2).unwrap().impedance(), 1.7);
        assert_eq!(l.edge(4).unwrap().impedance(), 1.8);
    }

    #[test]
    fn override_conflicts() {
        let mut cfg = RunConfig::new(2);
        cfg.overrides = vec![OverrideEntry {
            edge: 9,
            length: Some(1.0),
            ..Default::default()
        }];
        assert!(matches!(cfg.build_lattice(), Err(Error::UnknownEdge(9))));
        cfg.overrides = vec![OverrideEntry {
            edge: 2,
            density: Some(1.0),
            impedance: Some(1.0),
            ..Default::default()
        }];
        assert!(matches!(cfg.build_lattice(), Err(Error::Config { .. })));
    }

    #[test]
    fn lattice_document_round_trips_exactly() {
        for n in 1..=4 {
            let l = generate(n, &GeneratorSettings::default(), 17).unwrap();
            let text = lattice_to_toml(&l).unwrap();
            assert_eq!(lattice_from_toml(&text, "mem").unwrap(), l);
        }
        let vitro =
            in_vitro_variant(&generate(2, &GeneratorSettings::default(), 3).unwrap(), 2).unwrap();
        let back = lattice_from_toml(&lattice_to_toml(&vitro).unwrap(), "mem").unwrap();
        assert_eq!(back, vitro);
        assert!(back
            .nodes()
            .iter()
            .all(|n| n.termination == Admittance::Infinite));
    }

    #[test]
    fn csv_layouts() {
        let paths = vec![
            PathArrival {
                time: 0.5,
                amplitude: 0.5,
                loss: 0.0,
                reflections: 0,
                edges: vec![1],
            },
            PathArrival {
                time: 2.5,
                amplitude: -0.25,
                loss: 0.0,
                reflections: 2,
                edges: vec![1, 4, 1],
            },
        ];
        let text = String::from_utf8(paths_csv(&paths).unwrap()).unwrap();
        assert_eq!(
            text,
            "time,amplitude,n_reflections,edge_sequence\n0.5,0.5,0,1\n2.5,-0.25,2,1;4;1\n"
        );
        let arrivals = vec![Arrival {
            time: 0.5,
            amplitude: 1.5,
            prominence: 0.25,
        }];
        let text = String::from_utf8(arrivals_csv(&arrivals).unwrap()).unwrap();
        assert_eq!(text, "time,amplitude,prominence\n0.5,1.5,0.25\n");
        let tr = TimeResponse::from_samples(0.5, vec![0.0, 1.0]);
        let text = String::from_utf8(time_csv(&tr).unwrap()).unwrap();
        assert!(text.starts_with("t,value,envelope\n0.0,0.0,"));
    }

    #[test]
    fn arrivals_read_back_from_either_layout() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let arrivals = vec![Arrival {
            time: 0.5,
            amplitude: 1.5,
            prominence: 0.25,
        }];
        write_atomic(&a, &arrivals_csv(&arrivals).unwrap()).unwrap();
        assert_eq!(read_arrivals(&a).unwrap(), arrivals);
        let p = dir.path().join("p.csv");
        let paths = vec![PathArrival {
            time: 0.9,
            amplitude: -0.5,
            loss: 0.0,
            reflections: 1,
            edges: vec![1, 1],
        }];
        write_atomic(&p, &paths_csv(&paths).unwrap()).unwrap();
        let back = read_arrivals(&p).unwrap();
        assert_eq!((back[0].time, back[0].amplitude), (0.9, -0.5));
        assert!(matches!(
            read_arrivals(&dir.path().join("missing.csv")),
            Err(Error::Io { .. })
        ));
        // no temporary files are left behind
        let names: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(names.len(), 2);
    }
}
