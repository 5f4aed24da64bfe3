//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line for
//! each, and exits nonzero if any failed.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use hyperlattice::compare::{compare, Tolerances};
use hyperlattice::experiments::{
    canonical_scenario, in_vitro_variant, in_vivo_study, null_check, simulate, with_lattice,
    RunInputs, VariantTag, ARRIVAL_THRESHOLD,
};
use hyperlattice::fdsolver::{frequency_response, AssessSpec, DriveSpec, FrequencyGrid};
use hyperlattice::io::{read_arrivals, RunConfig};
use hyperlattice::lattice::{
    edge_count, generate, validate, Admittance, EdgeOverride, End, GeneratorSettings, Node, Port,
};
use hyperlattice::oracle::{coalesce, enumerate_paths, merge_tolerance, render};
use hyperlattice::scattering::{junction_matrix, propagator, wavenumber};
use hyperlattice::tdtransform::Arrival;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_hyperlattice")
}

fn cli(args: &[&str]) -> (i32, String) {
    let out = Command::new(bin()).args(args).output().expect("spawn cli");
    let text = format!(
        "{}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    (out.status.code().unwrap_or(-1), text)
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(f)
}

fn near(arrivals: &[Arrival], t: f64, tol: f64) -> Option<Arrival> {
    arrivals
        .iter()
        .filter(|a| (a.time - t).abs() <= tol)
        .max_by(|a, b| a.amplitude.abs().total_cmp(&b.amplitude.abs()))
        .copied()
}

fn paper_1d_arrivals() -> Result<(Vec<Arrival>, Duration), String> {
    let inputs = canonical_scenario(1, 1, &BTreeMap::new()).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let run = single_threaded(|| simulate(&inputs, VariantTag::Total, ARRIVAL_THRESHOLD))
        .map_err(|e| e.to_string())?;
    Ok((run.arrivals, start.elapsed()))
}

const PAPER_1D_TIMES: [f64; 7] = [0.5, 0.9, 1.1, 1.5, 2.5, 2.9, 3.1];

fn c1_arrival_times() -> Outcome {
    let (arrivals, elapsed) = paper_1d_arrivals()?;
    let mut found = Vec::new();
    for t in PAPER_1D_TIMES {
        let a = near(&arrivals, t, 0.01).ok_or_else(|| format!("no arrival within 0.01 of {t}"))?;
        found.push(format!("{:.4}", a.time));
    }
    ensure(elapsed < Duration::from_secs(5), || {
        format!("took {elapsed:?} single-threaded")
    })?;
    Ok(format!(
        "{} in {:.0?} single-threaded",
        found.join(" "),
        elapsed
    ))
}

fn c2_sign_pattern() -> Outcome {
    let (arrivals, _) = paper_1d_arrivals()?;
    let amp = |t| {
        near(&arrivals, t, 0.01)
            .map(|a| a.amplitude)
            .ok_or(format!("missing {t}"))
    };
    let direct = amp(0.5)?.signum();
    for t in [0.9, 1.1] {
        ensure(amp(t)?.signum() == -direct, || {
            format!("{t} has the direct arrival's sign")
        })?;
    }
    for t in [1.5, 2.5] {
        ensure(amp(t)?.signum() == direct, || {
            format!("{t} has the opposite sign")
        })?;
    }
    Ok("0.9, 1.1 opposite; 1.5, 2.5 same as 0.5".into())
}

fn c3_oracle_equivalence() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut notes = Vec::new();
    for n in 2..=4usize {
        let mut slowest = Duration::ZERO;
        for seed in 1..=3u64 {
            let mut cfg = RunConfig::new(n);
            cfg.seed = seed;
            let run_dir = dir.path().join(format!("n{n}s{seed}"));
            let cfg_path = dir.path().join(format!("n{n}s{seed}.toml"));
            std::fs::write(&cfg_path, cfg.to_toml().map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
            let start = Instant::now();
            let (code, text) = cli(&["run", "--config", path(&cfg_path), "--out", path(&run_dir)]);
            ensure(code == 0, || {
                format!("run N={n} seed={seed} exited {code}: {text}")
            })?;
            let (code, text) = cli(&[
                "compare",
                path(&run_dir.join("arrivals.csv")),
                path(&run_dir.join("oracle_peaks.csv")),
                "--config",
                path(&cfg_path),
            ]);
            slowest = slowest.max(start.elapsed());
            ensure(code == 0, || {
                format!("compare N={n} seed={seed} exited {code}:\n{text}")
            })?;
            let peaks = read_arrivals(&run_dir.join("arrivals.csv")).map_err(|e| e.to_string())?;
            ensure(!peaks.is_empty(), || {
                format!("N={n} seed={seed} has no peaks")
            })?;
        }
        if n == 4 {
            ensure(slowest < Duration::from_secs(60), || {
                format!("N=4 took {slowest:?}")
            })?;
        }
        notes.push(format!("N={n} ok ({slowest:.1?} max)"));
    }
    Ok(notes.join(", "))
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn c4_in_vivo_null() -> Outcome {
    let mut worst: f64 = 0.0;
    for n in 2..=4usize {
        for seed in 1..=3u64 {
            let inputs =
                canonical_scenario(n, seed, &BTreeMap::new()).map_err(|e| e.to_string())?;
            let study = in_vivo_study(&inputs, ARRIVAL_THRESHOLD).map_err(|e| e.to_string())?;
            ensure(study.first_connector.time().is_some(), || {
                format!("N={n} seed={seed}: no connector arrival")
            })?;
            let check = null_check(&study, &inputs.sweep);
            ensure(check.ratio() <= 0.01, || {
                format!(
                    "N={n} seed={seed}: excess {:.3e} of {:.3e} before t* = {:.4} (guard {:.4})",
                    check.max_excess, check.max_total, check.t_star, check.guard
                )
            })?;
            worst = worst.max(check.ratio());
        }
    }
    Ok(format!(
        "worst ratio {:.2e} over N = 2..4, three seeds each",
        worst
    ))
}

/// Square whose two connectors both return to x at t = 2.5, together with the
/// generator path x' -> high end -> low end -> x.
fn degenerate_square() -> Result<RunInputs, String> {
    let ov = |length, impedance| EdgeOverride {
        length: Some(length),
        density: Some(impedance),
        ..Default::default()
    };
    let overrides = BTreeMap::from([(2, ov(0.7, 1.7)), (3, ov(1.0, 1.0)), (4, ov(0.8, 1.8))]);
    canonical_scenario(2, 1, &overrides).map_err(|e| e.to_string())
}

fn c5_degeneracy() -> Outcome {
    let inputs = degenerate_square()?;
    let connector = |e: usize| e == 2 || e == 4;
    let paths = enumerate_paths(&inputs.lattice, &inputs.drive, &inputs.assess, 10.0, 1e-4)
        .map_err(|e| e.to_string())?;
    let merged = coalesce(&paths, merge_tolerance(&inputs.sweep));
    let group = merged
        .iter()
        .find(|g| (g.time - 2.5).abs() < 1e-9)
        .ok_or("no oracle arrival at 2.5")?;
    let with = group.paths.iter().filter(|p| p.touches(connector)).count();
    let without = group.paths.len() - with;
    ensure(with >= 2 && without >= 1, || {
        format!("arrival at 2.5 has {with} connector and {without} generator path(s)")
    })?;

    let study = in_vivo_study(&inputs, ARRIVAL_THRESHOLD).map_err(|e| e.to_string())?;
    let dt = inputs.sweep.time_step();
    let peak = near(&study.excess.arrivals, 2.5, 2.0 * dt).ok_or("no excess peak at 2.5")?;

    // the excess peak should be the connector paths' combined pulse, bigger
    // than either of them alone
    let rendered_peak = |ps: Vec<_>| -> Result<f64, String> {
        let tr = render(&ps, &inputs.sweep).map_err(|e| e.to_string())?;
        Ok(tr.value_at(peak.time))
    };
    let connector_paths: Vec<_> = group
        .paths
        .iter()
        .filter(|p| p.touches(connector))
        .cloned()
        .collect();
    let combined = rendered_peak(connector_paths.clone())?;
    let single = connector_paths
        .iter()
        .map(|p| rendered_peak(vec![p.clone()]).map(f64::abs))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .fold(0.0, f64::max);
    ensure(
        (peak.amplitude - combined).abs() <= 0.1 * combined.abs(),
        || {
            format!(
                "excess peak {:.4} vs connector paths {:.4}",
                peak.amplitude, combined
            )
        },
    )?;
    ensure(peak.amplitude.abs() >= 1.5 * single, || {
        format!(
            "excess peak {:.4} not enlarged over single path {:.4}",
            peak.amplitude, single
        )
    })?;
    Ok(format!(
        "{} paths coalesce at t = 2.5 ({with} via connectors); excess peak {:.3} vs {:.3} for one path",
        group.paths.len(),
        peak.amplitude,
        single
    ))
}

fn c6_topology() -> Outcome {
    let counts: Vec<u64> = (1..=4).map(|n| edge_count(n).unwrap()).collect();
    ensure(counts == [1, 4, 12, 32], || {
        format!("edge counts {counts:?}")
    })?;
    for n in 1..=6 {
        let l = generate(n, &GeneratorSettings::default(), 42).map_err(|e| e.to_string())?;
        let v = validate(&l);
        ensure(v.is_empty(), || format!("N={n}: {:?}", v))?;
        ensure(l.edges().len() as u64 == edge_count(n).unwrap(), || {
            format!("N={n} edge count")
        })?;
    }
    Ok("edge counts 1, 4, 12, 32; N = 1..6 validate".into())
}

fn c7_physics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    let mut worst_power: f64 = 0.0;
    for _ in 0..1000 {
        let degree = rng.random_range(1..=6usize);
        let zs: Vec<f64> = (0..degree).map(|_| rng.random_range(0.05..20.0)).collect();
        let node = Node {
            id: 0,
            ports: (1..=degree)
                .map(|edge| Port {
                    edge,
                    end: End::Low,
                })
                .collect(),
            termination: Admittance::NONE,
        };
        let s = junction_matrix(&node, &zs).map_err(|e| e.to_string())?;
        for q in 0..degree {
            let out: f64 = (0..degree).map(|p| s.get(p, q).powi(2) / zs[p]).sum();
            worst_power = worst_power.max((out - 1.0 / zs[q]).abs() * zs[q]);
        }
    }
    ensure(worst_power <= 1e-12, || {
        format!("power error {worst_power:e}")
    })?;

    let mut worst_recip: f64 = 0.0;
    for case in 0..20u64 {
        let n = 2 + (case % 3) as usize;
        let l =
            generate(n, &GeneratorSettings::default(), 100 + case).map_err(|e| e.to_string())?;
        let pick = |rng: &mut ChaCha8Rng| {
            let e = &l.edges()[rng.random_range(0..l.edges().len())];
            (e.id, rng.random_range(0.1..0.9) * e.length, e.impedance())
        };
        let (ea, xa, za) = pick(&mut rng);
        let (eb, xb, zb) = pick(&mut rng);
        let grid = FrequencyGrid {
            delta_omega: 0.37,
            bins: 24,
            damping: 0.0,
        };
        let h = |(e1, x1): (usize, f64), (e2, x2): (usize, f64)| {
            frequency_response(
                &l,
                &DriveSpec {
                    edge: e1,
                    position: x1,
                    amplitude: 1.0,
                },
                &AssessSpec {
                    edge: e2,
                    position: x2,
                },
                &grid,
            )
        };
        let ab = h((ea, xa), (eb, xb)).map_err(|e| e.to_string())?;
        let ba = h((eb, xb), (ea, xa)).map_err(|e| e.to_string())?;
        for (u, v) in ab.values.iter().zip(&ba.values).skip(1) {
            let lhs = u * za;
            let rhs = v * zb;
            worst_recip =
                worst_recip.max((lhs - rhs).norm() / lhs.norm().max(rhs.norm()).max(1e-300));
        }
    }
    ensure(worst_recip <= 1e-9, || {
        format!("reciprocity error {worst_recip:e}")
    })?;

    let mut worst_semigroup: f64 = 0.0;
    for _ in 0..1000 {
        let k = wavenumber(
            rng.random_range(0.0..std::f64::consts::TAU),
            1.0,
            rng.random_range(0.0..0.05),
        )
        .map_err(|e| e.to_string())?;
        let (d1, d2) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        worst_semigroup = worst_semigroup
            .max((propagator(k, d1) * propagator(k, d2) - propagator(k, d1 + d2)).norm());
    }
    ensure(worst_semigroup <= 1e-14, || {
        format!("semigroup error {worst_semigroup:e}")
    })?;

    let inputs = canonical_scenario(3, 5, &BTreeMap::new()).map_err(|e| e.to_string())?;
    let grid = FrequencyGrid {
        delta_omega: 0.41,
        bins: 64,
        damping: 0.2,
    };
    let resp = |amplitude| {
        frequency_response(
            &inputs.lattice,
            &DriveSpec {
                amplitude,
                ..inputs.drive
            },
            &inputs.assess,
            &grid,
        )
    };
    let one = resp(1.0).map_err(|e| e.to_string())?;
    let four = resp(4.0).map_err(|e| e.to_string())?;
    let scaled: Vec<Complex64> = one.values.iter().map(|v| v * 4.0).collect();
    ensure(scaled == four.values, || {
        "scaling the drive by 4 is not exact".into()
    })?;

    Ok(format!(
        "power {worst_power:.1e}, reciprocity {worst_recip:.1e}, semigroup {worst_semigroup:.1e}, linearity exact"
    ))
}

fn c8_in_vitro() -> Outcome {
    let square = canonical_scenario(2, 1, &BTreeMap::new()).map_err(|e| e.to_string())?;
    let vitro = with_lattice(
        &square,
        in_vitro_variant(&square.lattice, 2).map_err(|e| e.to_string())?,
    );
    let line = canonical_scenario(1, 1, &BTreeMap::new()).map_err(|e| e.to_string())?;
    let a = simulate(&vitro, VariantTag::InVitro, ARRIVAL_THRESHOLD).map_err(|e| e.to_string())?;
    let b = simulate(&line, VariantTag::Total, ARRIVAL_THRESHOLD).map_err(|e| e.to_string())?;
    let tol = Tolerances {
        time: 2.0 * square.sweep.time_step(),
        amplitude: 0.02,
    };
    let forward = compare(&a.arrivals, &b.arrivals, tol);
    let backward = compare(&b.arrivals, &a.arrivals, tol);
    ensure(forward.passed() && backward.passed(), || {
        format!("in vitro vs 1-D:\n{forward}")
    })?;
    Ok(format!("{} arrivals coincide", forward.matched.len()))
}

fn c9_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut compared = 0;
    for preset in ["paper-1d", "paper-2d"] {
        let a = dir.path().join(format!("{preset}-a"));
        let b = dir.path().join(format!("{preset}-b"));
        let (ca, ta) = cli(&["--jobs", "1", "run", "--preset", preset, "--out", path(&a)]);
        let (cb, tb) = cli(&["--jobs", "4", "run", "--preset", preset, "--out", path(&b)]);
        ensure(ca == 0 && cb == 0, || format!("{preset}: {ta} {tb}"))?;
        for entry in std::fs::read_dir(&a).map_err(|e| e.to_string())? {
            let name = entry.map_err(|e| e.to_string())?.file_name();
            if !name.to_string_lossy().ends_with(".csv") {
                continue;
            }
            let x = std::fs::read(a.join(&name)).map_err(|e| e.to_string())?;
            let y = std::fs::read(b.join(&name)).map_err(|e| e.to_string())?;
            ensure(x == y, || {
                format!("{preset}: {} differs", name.to_string_lossy())
            })?;
            compared += 1;
        }
    }
    Ok(format!(
        "{compared} CSV files byte-identical across runs and thread counts"
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 one-dimensional arrival times", c1_arrival_times),
        ("2 reflection sign pattern", c2_sign_pattern),
        ("3 oracle equivalence", c3_oracle_equivalence),
        ("4 in-vivo null", c4_in_vivo_null),
        ("5 degenerate arrival", c5_degeneracy),
        ("6 topology", c6_topology),
        ("7 physics properties", c7_physics),
        ("8 in-vitro reduction", c8_in_vitro),
        ("9 determinism", c9_determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS  criterion {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  criterion {name}: {why}");
            }
        }
    }
    println!("{} of 9 criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
