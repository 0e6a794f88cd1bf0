//! The three subcommands: check-suite verification, flow traces with
//! snapshots, and the large-N convergence study.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use riccilab::approx::{convergence_study, sample_f, ConvergenceSample, FKind};
use riccilab::flow::{
    build_deturck_family, perturbed_flat, random_sym_field, slice_jets, write_snapshot, GridSpec,
    GridState, SliceSel,
};
use riccilab::harnack::{linear_trace_z, HarnackFrame};
use riccilab::jets::CotensorJet;
use riccilab::riemann::{build_geometry, build_geometry_jets, ricci_cotensor};
use riccilab::spacetime::extend_h;
use riccilab::verify::{check_seed, run_suite, LabEnv};
use riccilab::Mutation;

use crate::config::{ConfigError, RunConfig, FLOW_GRID_PROVIDER, SCHEMA_VERSION};

/// Exit codes: 0 all checks pass, 1 at least one check failed, 2 invalid
/// configuration, 3 runtime error (CFL violation, I/O failure, …).
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } | CliError::Runtime(_) => 3,
        }
    }
}

fn rt(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    println!("wrote {}", path.display());
    Ok(())
}

fn ensure_out_dir(cfg: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.out_dir).map_err(|source| CliError::Io {
        path: cfg.out_dir.clone(),
        source,
    })
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

pub fn cmd_verify(cfg: &RunConfig) -> Result<u8, CliError> {
    ensure_out_dir(cfg)?;
    let env = LabEnv::with_options(cfg.seed_u64(), cfg.mutation(), cfg.grid_params());
    let ids: Option<Vec<&str>> = cfg
        .checks
        .as_ref()
        .map(|v| v.iter().map(String::as_str).collect());
    let report = run_suite(&env, ids.as_deref(), cfg.provider.as_deref()).map_err(rt)?;
    if cfg.wants("json") {
        write_file(&cfg.out_dir.join("verify_report.json"), &report.json())?;
    }
    if cfg.wants("csv") {
        write_file(&cfg.out_dir.join("verify_report.csv"), &report.csv())?;
    }
    print!("{}", report.summary());
    Ok(if !report.errors.is_empty() {
        3
    } else if report.all_pass {
        0
    } else {
        1
    })
}

// ---------------------------------------------------------------------------
// flow
// ---------------------------------------------------------------------------

/// One emitted time: extremes of tR over the sampled points or grid nodes,
/// and the minimum of the trace quantity Z over the sampled frames (absent
/// at t = 0 and at slices where no stencil fits).
#[derive(Debug, Serialize)]
struct TraceRow {
    t: f64,
    tr_min: f64,
    tr_max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    z_min: Option<f64>,
}

#[derive(Serialize)]
struct FlowTrace<'a> {
    schema_version: i64,
    provider: &'a str,
    seed: u64,
    rows: &'a [TraceRow],
}

const FLOW_POINTS: usize = 16;
const FLOW_Z_POINTS: usize = 4;
const FLOW_FRAMES: usize = 2;

pub fn cmd_flow(cfg: &RunConfig) -> Result<u8, CliError> {
    ensure_out_dir(cfg)?;
    let rows = if cfg.flow.provider == FLOW_GRID_PROVIDER {
        flow_grid(cfg)?
    } else {
        flow_analytic(cfg)?
    };
    if cfg.wants("csv") {
        let mut csv = String::from("t,tr_min,tr_max,z_min\n");
        for r in &rows {
            let z = r.z_min.map(|z| format!("{z:.12e}")).unwrap_or_default();
            writeln!(csv, "{:.12e},{:.12e},{:.12e},{z}", r.t, r.tr_min, r.tr_max).unwrap();
        }
        write_file(&cfg.out_dir.join("flow_trace.csv"), &csv)?;
    }
    if cfg.wants("json") {
        let trace = FlowTrace {
            schema_version: SCHEMA_VERSION,
            provider: &cfg.flow.provider,
            seed: cfg.seed_u64(),
            rows: &rows,
        };
        let json = serde_json::to_string_pretty(&trace).expect("trace serializes");
        write_file(&cfg.out_dir.join("flow_trace.json"), &json)?;
    }
    for r in &rows {
        match r.z_min {
            Some(z) => println!(
                "t = {:8.5}  tR in [{:+.6e}, {:+.6e}]  min Z = {:+.6e}",
                r.t, r.tr_min, r.tr_max, z
            ),
            None => println!("t = {:8.5}  tR in [{:+.6e}, {:+.6e}]", r.t, r.tr_min, r.tr_max),
        }
    }
    Ok(0)
}

/// Samples an analytic family at `steps` uniform times in (0, t_max]: tR from
/// the exact scalar curvature, Z for `h = Rc` over a few random frames.
fn flow_analytic(cfg: &RunConfig) -> Result<Vec<TraceRow>, CliError> {
    let seed = cfg.seed_u64();
    let env = LabEnv::new(seed);
    let prov = env.provider(&cfg.flow.provider).expect("validated");
    let mut rng = ChaCha8Rng::seed_from_u64(check_seed(seed, "flow", prov.id()));
    let steps = cfg.flow.steps as usize;
    let mut rows = Vec::with_capacity(steps);
    for k in 1..=steps {
        let t = cfg.flow.t_max * k as f64 / steps as f64;
        let mut tr_min = f64::INFINITY;
        let mut tr_max = f64::NEG_INFINITY;
        let mut z_min = f64::INFINITY;
        for i in 0..FLOW_POINTS {
            let mut p = prov.sample(&mut rng);
            p.t = t;
            let mj = prov.metric_jet(&p, 4).map_err(rt)?;
            let geom = build_geometry_jets(&mj, Mutation::None).map_err(rt)?;
            let tr = t * geom.scal.value();
            tr_min = tr_min.min(tr);
            tr_max = tr_max.max(tr);
            if i < FLOW_Z_POINTS {
                let rc = ricci_cotensor(&geom);
                let ht = extend_h(&geom, &rc, Mutation::None).map_err(rt)?;
                for _ in 0..FLOW_FRAMES {
                    let frame = HarnackFrame::random(geom.n, &mut rng);
                    let z = linear_trace_z(&geom, &rc, &ht, &frame, t, true).map_err(rt)?;
                    z_min = z_min.min(z.value);
                }
            }
        }
        rows.push(TraceRow {
            t,
            tr_min,
            tr_max,
            z_min: Some(z_min),
        });
    }
    Ok(rows)
}

/// Evolves a randomly perturbed flat torus metric, writing one snapshot file
/// per stored slice. tR extremes come from the whole grid; Z is sampled at
/// random interior-slice nodes with the evolved linearized solution as `h`.
/// No sign of Z is claimed here — the initial data is generic.
fn flow_grid(cfg: &RunConfig) -> Result<Vec<TraceRow>, CliError> {
    let seed = cfg.seed_u64();
    let fl = &cfg.flow;
    let spec = GridSpec::new(fl.resolution as usize, fl.resolution as usize, fl.order as usize);
    let g0 = perturbed_flat(spec, fl.amp, check_seed(seed, "flow-grid", "g"));
    let h0 = random_sym_field(spec, fl.amp, check_seed(seed, "flow-grid", "h"));
    // The Δt rule is the CFL bound at t = 0; the horizon then fixes the step
    // count. Probe the bound through the same constructor the run uses.
    let probe = GridState::new(spec, g0.clone(), h0.clone(), None, fl.cfl).map_err(rt)?;
    let steps = (fl.t_max / probe.dt).ceil() as i64;
    if steps > 100_000 {
        return Err(CliError::Config(ConfigError {
            field: "flow.t_max".to_string(),
            message: format!(
                "horizon needs {steps} steps of the CFL-bounded dt = {:.3e} (limit 100000); \
                 lower t_max, coarsen the grid, or raise cfl",
                probe.dt
            ),
        }));
    }
    // A CFL violation aborts here; the error names the offending step.
    let fam = build_deturck_family(spec, g0, h0, fl.s0, steps as usize, fl.cfl).map_err(rt)?;
    let mut rng = ChaCha8Rng::seed_from_u64(check_seed(seed, "flow-grid", "frames"));
    let last = fam.snaps.len() - 1;
    // Thin the stored slices to at most `snapshots` files, endpoints kept;
    // Z is sampled at the interior slices that carry a file.
    let stride = (last.max(1)).div_ceil(fl.snapshots.max(2) as usize - 1).max(1);
    let keep = |k: usize| k == last || k % stride == 0;
    let mut rows = Vec::with_capacity(fam.snaps.len());
    for (k, snap) in fam.snaps.iter().enumerate() {
        let geom = build_geometry(2, snap.base.clone(), Mutation::None);
        let mut r_min = f64::INFINITY;
        let mut r_max = f64::NEG_INFINITY;
        for &r in &geom.scal.a {
            r_min = r_min.min(r);
            r_max = r_max.max(r);
        }
        let z_min = if k > 0 && k < last && keep(k) {
            let slice = slice_jets(&fam, k, SliceSel::Base).map_err(rt)?;
            let mut zm = f64::INFINITY;
            for _ in 0..FLOW_Z_POINTS {
                let node = (rng.gen_range(0..spec.nx), rng.gen_range(0..spec.ny));
                let geomj = slice.geometry_at(node, Mutation::None);
                let h = slice.h_at(node).expect("base slice carries h");
                let hco = CotensorJet::rank2(2, h);
                let ht = extend_h(&geomj, &hco, Mutation::None).map_err(rt)?;
                for _ in 0..FLOW_FRAMES {
                    let frame = HarnackFrame::random(2, &mut rng);
                    let z = linear_trace_z(&geomj, &hco, &ht, &frame, slice.t, true).map_err(rt)?;
                    zm = zm.min(z.value);
                }
            }
            Some(zm)
        } else {
            None
        };
        rows.push(TraceRow {
            t: snap.t,
            tr_min: snap.t * r_min,
            tr_max: snap.t * r_max,
            z_min,
        });
        if keep(k) {
            let state = GridState {
                spec: fam.spec,
                t: snap.t,
                dt: fam.dt,
                cfl: fam.cfl,
                g: snap.base.clone(),
                h: snap.h.clone(),
                v: None,
            };
            let path = cfg.out_dir.join(format!("snapshot_{k:04}.bin"));
            write_snapshot(&path, &state).map_err(rt)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// convergence
// ---------------------------------------------------------------------------

pub fn cmd_convergence(cfg: &RunConfig) -> Result<u8, CliError> {
    ensure_out_dir(cfg)?;
    let seed = cfg.seed_u64();
    let env = LabEnv::new(seed);
    let order = 6;
    println!("{:<20} {:>12} {:>12} {:>12}", "provider", "slope_metric", "slope_conn", "slope_curv");
    for id in &cfg.convergence.providers {
        let prov = env.provider(id).expect("validated");
        let mut rng = ChaCha8Rng::seed_from_u64(check_seed(seed, "convergence", id));
        let mut samples = Vec::new();
        for k in 0..cfg.convergence.samples as usize {
            let p = prov.sample(&mut rng);
            let mj = prov.metric_jet(&p, order).map_err(rt)?;
            let geom = build_geometry_jets(&mj, cfg.mutation()).map_err(rt)?;
            let v = prov.flow_vector(&p, order).map_err(rt)?;
            let fk = match k % 3 {
                0 => FKind::PolyBump,
                1 => FKind::GaussianBump,
                _ => FKind::Zero,
            };
            let f = sample_f(geom.scal.space(), &p, fk, &mut rng);
            samples.push(ConvergenceSample { geom, v, f });
        }
        let rep = convergence_study(&samples, &cfg.convergence.n_grid).map_err(rt)?;
        if cfg.wants("csv") {
            write_file(&cfg.out_dir.join(format!("convergence_{id}.csv")), &rep.csv())?;
        }
        if cfg.wants("json") {
            let json = serde_json::json!({
                "schema_version": SCHEMA_VERSION,
                "provider": id,
                "seed": seed,
                "n_grid": rep.n_grid,
                "res_metric": rep.res_metric,
                "res_conn": rep.res_conn,
                "res_curv": rep.res_curv,
                "res_n_g00": rep.res_n_g00,
                "slope_metric": rep.slope_metric,
                "slope_conn": rep.slope_conn,
                "slope_curv": rep.slope_curv,
            });
            let text = serde_json::to_string_pretty(&json).expect("report serializes");
            write_file(&cfg.out_dir.join(format!("convergence_{id}.json")), &text)?;
        }
        let fmt = |s: Option<f64>| s.map(|v| format!("{v:12.4}")).unwrap_or_else(|| format!("{:>12}", "n/a"));
        println!(
            "{:<20} {} {} {}",
            id,
            fmt(rep.slope_metric),
            fmt(rep.slope_conn),
            fmt(rep.slope_curv)
        );
    }
    Ok(0)
}
