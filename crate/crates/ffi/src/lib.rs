//! C interface to the hyperlattice simulator.
//!
//! Lattices and simulation runs live behind opaque handles. Every fallible
//! call returns an [`HlStatus`]; on failure the message is kept per thread
//! and can be fetched with [`hl_last_error_message`]. Strings handed out by
//! this library must be released with [`hl_string_free`].

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hyperlattice::experiments::{
    simulate, RunInputs, ScenarioResult, VariantTag, ARRIVAL_THRESHOLD,
};
use hyperlattice::fdsolver::{frequency_response, AssessSpec, DriveSpec, FrequencyGrid};
use hyperlattice::io::{lattice_from_toml, lattice_to_toml};
use hyperlattice::lattice::{
    edge_count, generate, override_parameters, EdgeOverride, GeneratorSettings,
};
use hyperlattice::oracle::enumerate_paths;
use hyperlattice::tdtransform::SweepConfig;
use hyperlattice::{Error, Lattice};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Numerical = 4,
    Io = 5,
    Parse = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Opaque lattice handle.
pub struct HlLattice(Lattice);

/// Opaque handle to a finished simulation.
pub struct HlRun(ScenarioResult);

/// A point on an edge. `amplitude` is ignored for assessment points.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct HlPoint {
    pub edge: usize,
    pub position: f64,
    pub amplitude: f64,
}

/// Parameter substitution for one edge. NaN keeps the current value; a
/// finite `impedance` sets the density to `impedance / speed`.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct HlEdgeOverride {
    pub length: f64,
    pub speed: f64,
    pub impedance: f64,
    pub loss_factor: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HlArrival {
    pub time: f64,
    pub amplitude: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> HlStatus {
    match e {
        Error::Domain(_) | Error::Usage(_) | Error::UnknownEdge(_) => HlStatus::InvalidArgument,
        Error::Config { .. } => HlStatus::Config,
        Error::Numerical { .. } => HlStatus::Numerical,
        Error::Io { .. } => HlStatus::Io,
        Error::Parse { .. } => HlStatus::Parse,
    }
}

struct Fail(HlStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(HlStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> HlStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HlStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            HlStatus::Panic
        }
    }
}

unsafe fn lattice_ref<'a>(l: *const HlLattice) -> Result<&'a Lattice, Fail> {
    l.as_ref().map(|h| &h.0).ok_or_else(|| null("lattice"))
}

fn drive_of(p: HlPoint) -> DriveSpec {
    DriveSpec {
        edge: p.edge,
        position: p.position,
        amplitude: p.amplitude,
    }
}

fn assess_of(p: HlPoint) -> AssessSpec {
    AssessSpec {
        edge: p.edge,
        position: p.position,
    }
}

fn keep(v: f64) -> Option<f64> {
    (!v.is_nan()).then_some(v)
}

/// Copy `items` into `out` (capacity `cap`) and report the full count in
/// `total`. Fails with `BufferTooSmall` when they do not all fit; the first
/// `cap` are written regardless.
unsafe fn fill<T: Copy>(
    items: &[T],
    out: *mut T,
    cap: usize,
    total: *mut usize,
) -> Result<(), Fail> {
    if total.is_null() {
        return Err(null("total"));
    }
    *total = items.len();
    let n = items.len().min(cap);
    if n > 0 {
        if out.is_null() {
            return Err(null("output buffer"));
        }
        ptr::copy_nonoverlapping(items.as_ptr(), out, n);
    }
    if n < items.len() {
        return Err(Fail(
            HlStatus::BufferTooSmall,
            format!("{} items do not fit in {cap}", items.len()),
        ));
    }
    Ok(())
}

/// Message for the last failed call on this thread, or null. Release with
/// [`hl_string_free`].
#[no_mangle]
pub extern "C" fn hl_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| {
        e.borrow()
            .as_ref()
            .map_or(ptr::null_mut(), |c| c.clone().into_raw())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Number of edges of the `dimension`-cube lattice.
///
/// # Safety
/// `out` must be null or point to writable memory for one `u64`.
#[no_mangle]
pub unsafe extern "C" fn hl_edge_count(dimension: usize, out: *mut u64) -> HlStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = edge_count(dimension)?;
        Ok(())
    })
}

/// Generate a lattice with the default samplers.
///
/// # Safety
/// `out` must be null or point to writable memory for one handle pointer.
#[no_mangle]
pub unsafe extern "C" fn hl_lattice_generate(
    dimension: usize,
    seed: u64,
    out: *mut *mut HlLattice,
) -> HlStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let l = generate(dimension, &GeneratorSettings::default(), seed)?;
        *out = Box::into_raw(Box::new(HlLattice(l)));
        Ok(())
    })
}

/// Parse a lattice document.
///
/// # Safety
/// `text` must be null or a NUL-terminated string; `out` must be null or
/// writable.
#[no_mangle]
pub unsafe extern "C" fn hl_lattice_from_toml(
    text: *const c_char,
    out: *mut *mut HlLattice,
) -> HlStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        if text.is_null() {
            return Err(null("text"));
        }
        let text = CStr::from_ptr(text).to_str().map_err(|e| {
            Fail(
                HlStatus::Parse,
                format!("lattice document is not UTF-8: {e}"),
            )
        })?;
        let l = lattice_from_toml(text, "<ffi>")?;
        *out = Box::into_raw(Box::new(HlLattice(l)));
        Ok(())
    })
}

/// Serialize a lattice. Release the string with [`hl_string_free`].
///
/// # Safety
/// `lattice` must be null or a live handle; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn hl_lattice_to_toml(
    lattice: *const HlLattice,
    out: *mut *mut c_char,
) -> HlStatus {
    guard(|| {
        let l = lattice_ref(lattice)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let text = lattice_to_toml(l)?;
        *out = CString::new(text)
            .map_err(|e| Fail(HlStatus::Parse, e.to_string()))?
            .into_raw();
        Ok(())
    })
}

/// # Safety
/// `lattice` must be null or a live handle, which is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn hl_lattice_free(lattice: *mut HlLattice) {
    if !lattice.is_null() {
        drop(Box::from_raw(lattice));
    }
}

/// Number of edges, or 0 for a null handle.
///
/// # Safety
/// `lattice` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hl_lattice_edges(lattice: *const HlLattice) -> usize {
    lattice.as_ref().map_or(0, |h| h.0.edges().len())
}

/// Replace parameters of edge `edge` in place. The lattice is unchanged on
/// failure.
///
/// # Safety
/// `lattice` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hl_lattice_override(
    lattice: *mut HlLattice,
    edge: usize,
    values: HlEdgeOverride,
) -> HlStatus {
    guard(|| {
        let h = lattice.as_mut().ok_or_else(|| null("lattice"))?;
        let current = h.0.edge(edge)?;
        let speed = keep(values.speed).unwrap_or(current.speed);
        let ov = EdgeOverride {
            length: keep(values.length),
            speed: keep(values.speed),
            density: keep(values.impedance).map(|z| z / speed),
            loss_factor: keep(values.loss_factor),
        };
        h.0 = override_parameters(&h.0, &BTreeMap::from([(edge, ov)]))?;
        Ok(())
    })
}

/// Response at `assess` to the source at `drive` on the grid
/// `omega_m = m * delta_omega`, `m < bins`, shifted by `-i * damping`. Writes
/// `bins` values to each of `re` and `im`.
///
/// # Safety
/// `lattice` must be null or a live handle; `re` and `im` must be null or
/// hold `bins` doubles each.
#[no_mangle]
pub unsafe extern "C" fn hl_frequency_response(
    lattice: *const HlLattice,
    drive: HlPoint,
    assess: HlPoint,
    delta_omega: f64,
    bins: usize,
    damping: f64,
    re: *mut f64,
    im: *mut f64,
) -> HlStatus {
    guard(|| {
        let l = lattice_ref(lattice)?;
        if re.is_null() || im.is_null() {
            return Err(null("output buffer"));
        }
        let grid = FrequencyGrid {
            delta_omega,
            bins,
            damping,
        };
        let r = frequency_response(l, &drive_of(drive), &assess_of(assess), &grid)?;
        for (m, v) in r.values.iter().enumerate() {
            *re.add(m) = v.re;
            *im.add(m) = v.im;
        }
        Ok(())
    })
}

/// Run the standard sweep, transform and arrival picking.
///
/// # Safety
/// `lattice` must be null or a live handle; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn hl_run_simulate(
    lattice: *const HlLattice,
    drive: HlPoint,
    assess: HlPoint,
    out: *mut *mut HlRun,
) -> HlStatus {
    guard(|| {
        let l = lattice_ref(lattice)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let inputs = RunInputs {
            lattice: l.clone(),
            drive: drive_of(drive),
            assess: assess_of(assess),
            sweep: SweepConfig::standard(),
        };
        let r = simulate(&inputs, VariantTag::Total, ARRIVAL_THRESHOLD)?;
        *out = Box::into_raw(Box::new(HlRun(r)));
        Ok(())
    })
}

/// # Safety
/// `run` must be null or a live handle, which is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn hl_run_free(run: *mut HlRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Detected arrivals in time order. `total` receives the count; pass a null
/// buffer with `capacity` 0 to query it.
///
/// # Safety
/// `run` must be null or a live handle; `out` must hold `capacity` entries;
/// `total` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hl_run_arrivals(
    run: *const HlRun,
    out: *mut HlArrival,
    capacity: usize,
    total: *mut usize,
) -> HlStatus {
    guard(|| {
        let r = run.as_ref().ok_or_else(|| null("run"))?;
        let items: Vec<HlArrival> =
            r.0.arrivals
                .iter()
                .map(|a| HlArrival {
                    time: a.time,
                    amplitude: a.amplitude,
                })
                .collect();
        fill(&items, out, capacity, total)
    })
}

/// Time-domain samples at spacing `dt`, starting at t = 0.
///
/// # Safety
/// `run` must be null or a live handle; `out` must hold `capacity` doubles;
/// `total` and `dt` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hl_run_samples(
    run: *const HlRun,
    out: *mut f64,
    capacity: usize,
    total: *mut usize,
    dt: *mut f64,
) -> HlStatus {
    guard(|| {
        let r = run.as_ref().ok_or_else(|| null("run"))?;
        *dt.as_mut().ok_or_else(|| null("dt"))? = r.0.time.dt;
        fill(&r.0.time.values, out, capacity, total)
    })
}

/// Ray paths from `drive` to `assess` arriving by `t_max` with loss-free
/// amplitude at least `floor`, in time order.
///
/// # Safety
/// `lattice` must be null or a live handle; `out` must hold `capacity`
/// entries; `total` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hl_oracle_paths(
    lattice: *const HlLattice,
    drive: HlPoint,
    assess: HlPoint,
    t_max: f64,
    floor: f64,
    out: *mut HlArrival,
    capacity: usize,
    total: *mut usize,
) -> HlStatus {
    guard(|| {
        let l = lattice_ref(lattice)?;
        let paths = enumerate_paths(l, &drive_of(drive), &assess_of(assess), t_max, floor)?;
        let items: Vec<HlArrival> = paths
            .iter()
            .map(|p| HlArrival {
                time: p.time,
                amplitude: p.amplitude,
            })
            .collect();
        fill(&items, out, capacity, total)
    })
}
