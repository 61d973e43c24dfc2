//! The four subcommands: run, sweep, check, demag-kernel.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::sync::Arc;

use micromag::acceptance::{run_suite, Suite};
use micromag::demag::build_kernel_jobs;
use micromag::diagnostics::EnergyLedger;
use micromag::grid::{build_basis, Boundary, BoxDomain};
use micromag::solver::{
    cfl_probe, evolve_recording, initial_state, space_time_l2_distance, RunOutput, Scheme,
};

use crate::config::{parse_config, CompiledRun};
use crate::error::{CliError, Result};
use crate::formats::{write_snapshot, write_vtk};

pub struct GlobalOpts {
    pub jobs: usize,
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
    pub quiet: bool,
}

/// One summary entry: a named defect against its tolerance.
struct Defect {
    name: &'static str,
    measured: f64,
    tolerance: f64,
}

impl Defect {
    fn pass(&self) -> bool {
        self.measured.is_finite() && self.measured < self.tolerance
    }

    fn json(&self) -> serde_json::Value {
        serde_json::json!({
            "name": self.name,
            "measured": self.measured,
            "tolerance": self.tolerance,
            "pass": self.pass(),
        })
    }
}

fn defect_table(ledger: &EnergyLedger, scheme: Scheme) -> Vec<Defect> {
    let rows = ledger.rows();
    // The decay identity is exact for the midpoint stage; for the explicit
    // scheme the Simpson stage bookkeeping leaves an O(dt^4) remainder, so
    // its gate is a sanity bound rather than a roundoff one.
    let identity_tol = match scheme {
        Scheme::ImplicitMidpoint => 1e-6,
        Scheme::Rk4 => 1e-4,
    };
    let dissipation = ledger.l2_dissipation_defect().unwrap_or(0.0);
    let volume_identity = match (rows.first(), rows.last()) {
        (Some(first), Some(last)) => {
            (last.l2_sq + 2.0 * ledger.epsilon() * ledger.stage_grad_time_integral() - first.l2_sq)
                .abs()
        }
        _ => 0.0,
    };
    let modulus_excess =
        rows.iter().map(|r| r.max_modulus - 1.0).fold(f64::NEG_INFINITY, f64::max).max(0.0);
    let q_growth = rows
        .windows(2)
        .map(|w| w[1].q_monitor - w[0].q_monitor)
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0);
    vec![
        Defect { name: "l2_dissipation_identity", measured: dissipation, tolerance: identity_tol },
        Defect { name: "volume_identity", measured: volume_identity, tolerance: identity_tol },
        Defect { name: "modulus_excess", measured: modulus_excess, tolerance: 1e-3 },
        Defect { name: "q_monitor_growth", measured: q_growth, tolerance: 1e-8 },
    ]
}

fn write_error_record(dir: &Path, err: &CliError) {
    let record = serde_json::json!({ "error": err.to_string(), "kind": err.kind() });
    // Failing to persist the record must not mask the original error.
    let _ = fs::create_dir_all(dir);
    let _ = fs::write(dir.join("error.json"), format!("{record:#}\n"));
}

fn save_ledger(dir: &Path, ledger: &EnergyLedger) -> Result<()> {
    let mut buf = Vec::new();
    ledger.to_csv(&mut buf)?;
    fs::write(dir.join("ledger.csv"), buf)?;
    Ok(())
}

fn save_snapshots(dir: &Path, run: &RunOutput, stride: usize, vtk: bool) -> Result<usize> {
    let mut written = 0;
    for (i, (field, &t)) in run.fields.iter().zip(&run.times).enumerate() {
        let keep = i % stride == 0 || i + 1 == run.fields.len();
        if !keep {
            continue;
        }
        let mut f = fs::File::create(dir.join(format!("snap_{written:06}.llgf")))?;
        write_snapshot(&mut f, field, t)?;
        if vtk {
            let mut v = fs::File::create(dir.join(format!("snap_{written:06}.vtk")))?;
            write_vtk(&mut v, field, &format!("magnetization at t = {t}"))?;
        }
        written += 1;
    }
    Ok(written)
}

pub fn cmd_run(config_path: &Path, opts: &GlobalOpts) -> Result<()> {
    let mut cfg = parse_config(config_path)?;
    if let Some(seed) = opts.seed {
        cfg.run.seed = seed;
    }
    let compiled = cfg.compile(opts.jobs)?;
    let out_dir = opts
        .output
        .clone()
        .or_else(|| compiled.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&out_dir)?;
    // The run is reproducible from the artifacts alone, so persist the
    // config with every default made explicit.
    fs::write(out_dir.join("config.toml"), cfg.serialize())?;

    let state = initial_state(&compiled.initial, &compiled.basis, compiled.model.clone())?;
    let dt_max = cfl_probe(&state)?;
    if compiled.stepper.dt > dt_max && !opts.quiet {
        eprintln!(
            "warning: dt = {} exceeds the stability probe {:.3e}; expect step rejections",
            compiled.stepper.dt, dt_max
        );
    }
    let mut ledger = EnergyLedger::new(compiled.model.epsilon);
    let run = match evolve_recording(
        state,
        &compiled.stepper,
        compiled.horizon,
        &mut ledger,
        compiled.snapshot_every,
    ) {
        Ok(run) => run,
        Err(e) => {
            let err = CliError::from(e);
            write_error_record(&out_dir, &err);
            return Err(err);
        }
    };

    save_ledger(&out_dir, &ledger)?;
    let snapshots = save_snapshots(&out_dir, &run, 1, compiled.vtk)?;

    let defects = defect_table(&ledger, compiled.stepper.scheme);
    let last = ledger.rows().last().expect("runs always record rows");
    let summary = serde_json::json!({
        "config": config_path.display().to_string(),
        "seed": compiled.seed,
        "steps": ledger.rows().len() - 1,
        "snapshots": snapshots,
        "final": {
            "t": last.t,
            "l2_sq": last.l2_sq,
            "grad_l2_sq": last.grad_l2_sq,
            "energy_total": last.energy_total,
            "max_modulus": last.max_modulus,
            "q_monitor": last.q_monitor,
        },
        "defects": defects.iter().map(Defect::json).collect::<Vec<_>>(),
    });
    fs::write(out_dir.join("summary.json"), format!("{summary:#}\n"))?;

    if !opts.quiet {
        println!("run: {} steps to t = {}, artifacts in {}", ledger.rows().len() - 1, last.t, out_dir.display());
        for d in &defects {
            println!(
                "  {:<26} {:>13.6e} < {:>8.1e}  {}",
                d.name,
                d.measured,
                d.tolerance,
                if d.pass() { "pass" } else { "FAIL" }
            );
        }
    }
    Ok(())
}

#[derive(Debug)]
struct SweepEntry {
    modes: usize,
    epsilon: f64,
}

fn parse_schedule(path: &Path) -> Result<Vec<SweepEntry>> {
    let src = fs::read_to_string(path)?;
    let root: toml::Table = toml::from_str(&src).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        line: 1,
        col: 1,
        message: e.message().to_string(),
    })?;
    let invalid = |key: &str, message: &str| CliError::Validation {
        key: key.to_string(),
        message: message.to_string(),
    };
    let mut entries = Vec::new();
    for (key, value) in root {
        if key != "entry" {
            return Err(invalid(&key, "schedules hold a list of [[entry]] tables only"));
        }
        let toml::Value::Array(items) = value else {
            return Err(invalid("entry", "must be an array of tables"));
        };
        for item in items {
            let toml::Value::Table(mut t) = item else {
                return Err(invalid("entry", "must be an array of tables"));
            };
            let modes = match t.remove("modes") {
                Some(toml::Value::Integer(v)) if v > 0 => v as usize,
                _ => return Err(invalid("entry.modes", "must be a positive integer")),
            };
            let epsilon = match t.remove("epsilon") {
                Some(toml::Value::Float(v)) => v,
                Some(toml::Value::Integer(v)) => v as f64,
                _ => return Err(invalid("entry.epsilon", "must be a number")),
            };
            if !(epsilon > 0.0 && epsilon <= 1.0) {
                return Err(invalid("entry.epsilon", "must lie in (0, 1]"));
            }
            if let Some(stray) = t.keys().next() {
                return Err(invalid(&format!("entry.{stray}"), "unknown key"));
            }
            entries.push(SweepEntry { modes, epsilon });
        }
    }
    if entries.is_empty() {
        return Err(invalid("entry", "the schedule needs at least one entry"));
    }
    for w in entries.windows(2) {
        if w[1].modes < w[0].modes {
            return Err(invalid("entry.modes", "must be nondecreasing along the schedule"));
        }
        if w[1].epsilon > w[0].epsilon {
            return Err(invalid("entry.epsilon", "must be nonincreasing along the schedule"));
        }
    }
    Ok(entries)
}

struct EntryOutcome {
    run: RunOutput,
    ledger: EnergyLedger,
}

fn run_entry(
    compiled: &CompiledRun,
    entry: &SweepEntry,
    dir: &Path,
) -> Result<EntryOutcome> {
    fs::create_dir_all(dir)?;
    let basis = Arc::new(
        build_basis(&compiled.domain, entry.modes).map_err(|e| CliError::Validation {
            key: "entry.modes".into(),
            message: e.to_string(),
        })?,
    );
    let mut model = compiled.model.clone();
    model.epsilon = entry.epsilon;
    let state = initial_state(&compiled.initial, &basis, model)?;
    let mut ledger = EnergyLedger::new(entry.epsilon);
    // Record every step so runs can be compared in the space-time norm.
    let outcome = evolve_recording(state, &compiled.stepper, compiled.horizon, &mut ledger, 1);
    let run = match outcome {
        Ok(run) => run,
        Err(e) => {
            let err = CliError::from(e);
            write_error_record(dir, &err);
            return Err(err);
        }
    };
    save_ledger(dir, &ledger)?;
    save_snapshots(dir, &run, compiled.snapshot_every, compiled.vtk)?;
    Ok(EntryOutcome { run, ledger })
}

pub fn cmd_sweep(config_path: &Path, schedule_path: &Path, opts: &GlobalOpts) -> Result<()> {
    let mut cfg = parse_config(config_path)?;
    if let Some(seed) = opts.seed {
        cfg.run.seed = seed;
    }
    let compiled = cfg.compile(opts.jobs)?;
    let entries = parse_schedule(schedule_path)?;
    let out_dir = opts
        .output
        .clone()
        .or_else(|| compiled.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&out_dir)?;
    fs::write(out_dir.join("config.toml"), cfg.serialize())?;

    let dirs: Vec<PathBuf> =
        (0..entries.len()).map(|i| out_dir.join(format!("entry_{i:02}"))).collect();

    let workers = opts.jobs.clamp(1, entries.len());
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let next = &next;
            let entries = &entries;
            let dirs = &dirs;
            let compiled = &compiled;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= entries.len() {
                    break;
                }
                let outcome = run_entry(compiled, &entries[i], &dirs[i]);
                if tx.send((i, outcome)).is_err() {
                    break;
                }
            });
        }
    });
    drop(tx);

    let mut slots: Vec<Option<Result<EntryOutcome>>> =
        (0..entries.len()).map(|_| None).collect();
    for (i, outcome) in rx {
        slots[i] = Some(outcome);
    }
    let mut outcomes = Vec::with_capacity(entries.len());
    for slot in slots {
        outcomes.push(slot.expect("every entry was scheduled")?);
    }

    let vol = compiled.domain.volume();
    struct SweepRow {
        modes: usize,
        epsilon: f64,
        volume_defect: f64,
        unit_gap: f64,
        cauchy: Option<f64>,
    }
    let mut rows = Vec::new();
    for (i, (entry, outcome)) in entries.iter().zip(&outcomes).enumerate() {
        let ledger_rows = outcome.ledger.rows();
        let first = ledger_rows.first().expect("entries record rows");
        let last = ledger_rows.last().expect("entries record rows");
        rows.push(SweepRow {
            modes: entry.modes,
            epsilon: entry.epsilon,
            volume_defect: (last.l2_sq
                + 2.0 * entry.epsilon * outcome.ledger.stage_grad_time_integral()
                - first.l2_sq)
                .abs(),
            unit_gap: (vol - last.l2_sq) / vol,
            cauchy: (i > 0).then(|| space_time_l2_distance(&outcomes[i - 1].run, &outcome.run)),
        });
    }

    let report = serde_json::json!({
        "config": config_path.display().to_string(),
        "entries": rows
            .iter()
            .enumerate()
            .map(|(i, r)| serde_json::json!({
                "modes": r.modes,
                "epsilon": r.epsilon,
                "dir": dirs[i].display().to_string(),
                "volume_identity_defect": r.volume_defect,
                "final_mean_unit_gap": r.unit_gap,
                "distance_to_previous": r.cauchy,
            }))
            .collect::<Vec<_>>(),
    });
    fs::write(out_dir.join("sweep.json"), format!("{report:#}\n"))?;

    if !opts.quiet {
        println!(
            "{:>3} {:>6} {:>9} {:>14} {:>14} {:>14}",
            "#", "modes", "epsilon", "cauchy", "vol defect", "unit gap"
        );
        for (i, r) in rows.iter().enumerate() {
            let cauchy = r.cauchy.map_or("-".to_string(), |c| format!("{c:.6e}"));
            println!(
                "{:>3} {:>6} {:>9} {:>14} {:>14.6e} {:>14.6e}",
                i, r.modes, r.epsilon, cauchy, r.volume_defect, r.unit_gap,
            );
        }
    }
    Ok(())
}

pub fn cmd_check(suite_name: &str, opts: &GlobalOpts) -> Result<()> {
    let suite = Suite::parse(suite_name).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown check suite '{suite_name}' (expected IDENTITIES, DEMAG, WEAKFORM, or ALL)"
        ))
    })?;
    let results = run_suite(suite, opts.jobs)?;
    let failures = results.iter().filter(|r| !r.pass).count();
    if !opts.quiet {
        for r in &results {
            println!("{}", r.line());
        }
        println!(
            "{} of {} checks passed",
            results.len() - failures,
            results.len()
        );
    }
    if failures > 0 {
        return Err(CliError::ChecksFailed(failures));
    }
    Ok(())
}

pub fn cmd_demag_kernel(config_path: &Path, cache_path: &Path, opts: &GlobalOpts) -> Result<()> {
    let cfg = parse_config(config_path)?;
    if cfg.domain.lengths.len() != 3 {
        return Err(CliError::Validation {
            key: "domain".into(),
            message: "the stray-field kernel requires dim=3".into(),
        });
    }
    let domain =
        BoxDomain::new(cfg.domain.lengths.clone(), cfg.domain.resolution.clone(), Boundary::Neumann)
            .map_err(|e| CliError::Validation { key: "domain".into(), message: e.to_string() })?;
    let kernel = build_kernel_jobs(&domain, opts.jobs)?;
    if let Some(parent) = cache_path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut f = fs::File::create(cache_path)?;
    kernel.save_cache(&mut f)?;
    if !opts.quiet {
        println!(
            "kernel for {:?} cached at {}",
            domain.resolution(),
            cache_path.display()
        );
    }
    Ok(())
}
