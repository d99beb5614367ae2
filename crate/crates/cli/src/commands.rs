use std::io::Write;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use rpca::data::io::{load_mask, load_matrix, save_binary, ColumnStream};
use rpca::data::{
    add_noise, mask_adjoint, mask_apply, subsample_mask, synth_instance, synth_stream, MaskedColumn, MaskedObservation,
    DEFAULT_AMPLITUDE,
};
use rpca::geometry::StiefelBasis;
use rpca::solver::robust_pca;
use rpca::tracking::{subspace_angle, tracker_init, tracker_step, StepRule};
use rpca::{Matrix, Vector};

use crate::args::{output_file, DecomposeArgs, NoiseArgs, PhaseArgs, SolverArgs, TrackArgs};
use crate::report::{is_success, ConfigEcho, RunReport};

/// Result of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    RecoveryFailed,
}

// Seeds derived from the instance seed for the noise and the sampling mask.
fn noise_seed(seed: u64) -> u64 {
    seed ^ 0x6e6f_6973_6500_0000
}

fn mask_seed(seed: u64) -> u64 {
    seed ^ 0x6d61_736b_0000_0000
}

fn rel_error(truth: &Matrix, estimate: &Matrix) -> Option<f64> {
    let norm = truth.norm();
    (norm > 0.0).then(|| (truth - estimate).norm() / norm)
}

fn write_csv<T: Serialize>(rows: &[T], out: Option<&Path>, name: &str) -> Result<()> {
    let sink: Box<dyn Write> = match out {
        Some(dir) => {
            let path = output_file(dir, name)?;
            Box::new(std::fs::File::create(&path).with_context(|| format!("cannot create {}", path.display()))?)
        }
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs.unwrap_or(0)).build()?)
}

pub fn decompose(args: &DecomposeArgs) -> Result<Outcome> {
    let s = &args.solver;
    let (data, truth, rank, source) = match (&args.synth, &args.input) {
        (Some(spec), _) => {
            spec.check_keys(&["m", "n", "k", "rho"])?;
            let m: usize = spec.require("m")?;
            let n: usize = spec.get("n")?.unwrap_or(m);
            let k: usize = spec.require("k")?;
            let rho: f64 = spec.require("rho")?;
            let inst = synth_instance(m, n, k, rho, DEFAULT_AMPLITUDE, s.seed)?;
            let x = match args.snr {
                Some(snr) => add_noise(&inst.x, snr, noise_seed(s.seed), Some(&inst.l))?,
                None => inst.x.clone(),
            };
            let data = match args.sample {
                Some(f) => mask_apply(&x, &subsample_mask(m, n, f, mask_seed(s.seed))?)?,
                None => MaskedObservation::full(x),
            };
            (data, Some((inst.l, inst.s)), s.rank.unwrap_or(k), format!("synth m={m},n={n},k={k},rho={rho}"))
        }
        (None, Some(path)) => {
            let x = load_matrix(path)?;
            let (m, n) = x.shape();
            let data = match &args.mask {
                Some(mp) => mask_apply(&x, &load_mask(mp, m, n)?)?,
                None => MaskedObservation::full(x.clone()),
            };
            let truth = match &args.truth {
                Some(tp) => {
                    let l = load_matrix(tp)?;
                    if l.shape() != (m, n) {
                        bail!("truth {} is {}x{}, data is {m}x{n}", tp.display(), l.nrows(), l.ncols());
                    }
                    let s_true = &x - &l;
                    Some((l, s_true))
                }
                None => None,
            };
            let rank = s.rank.context("--rank is required with --input")?;
            (data, truth, rank, path.display().to_string())
        }
        (None, None) => bail!("one of --input or --synth is required"),
    };
    let cfg = s.config(rank)?;
    let start = Instant::now();
    let result = robust_pca(&data, &cfg)?;
    let wall = start.elapsed().as_secs_f64();

    let (err_l, err_s) = match &truth {
        Some((l, s_true)) => {
            let s_observed = mask_adjoint(&mask_apply(s_true, data.mask())?);
            (Some(result.relative_error(l)), rel_error(&s_observed, &result.s_hat))
        }
        None => (None, None),
    };
    let echo = ConfigEcho::new(&cfg, data.shape(), data.mask().len(), source);
    let report = RunReport::new(echo, s.seed, &result, err_l, err_s, wall);
    let json = serde_json::to_string_pretty(&report)?;
    if let Some(dir) = &args.out {
        save_binary(&output_file(dir, "l_hat.bin")?, &result.l_hat)?;
        save_binary(&output_file(dir, "s_hat.bin")?, &result.s_hat)?;
        save_binary(&output_file(dir, "u.bin")?, result.basis.matrix())?;
        save_binary(&output_file(dir, "y.bin")?, &result.y)?;
        std::fs::write(output_file(dir, "report.json")?, &json)?;
    }
    writeln!(std::io::stdout(), "{json}")?;
    Ok(match report.success {
        Some(false) => Outcome::RecoveryFailed,
        _ => Outcome::Done,
    })
}

#[derive(Debug, Serialize)]
struct TrackRow {
    index: usize,
    residual_sparsity: f64,
    angle_to_initial: f64,
    angle_to_truth: Option<f64>,
    seconds: f64,
}

#[derive(Debug, Serialize)]
struct TrackSummary {
    init_count: usize,
    samples: usize,
    /// Angle between the initialized basis and the basis generating the last
    /// initialization sample.
    initial_angle_to_truth: Option<f64>,
    final_angle_to_truth: Option<f64>,
    final_angle_to_initial: Option<f64>,
}

/// Samples from a file or a synthetic generator, with the generating basis
/// for each sample when it is known.
enum Samples {
    File(ColumnStream<std::io::BufReader<std::fs::File>>),
    Synth { x: Matrix, truth: Vec<StiefelBasis>, next: usize },
}

impl Samples {
    fn len(&self) -> usize {
        match self {
            Samples::File(s) => s.len(),
            Samples::Synth { x, .. } => x.ncols(),
        }
    }

    fn dim(&self) -> usize {
        match self {
            Samples::File(s) => s.dim(),
            Samples::Synth { x, .. } => x.nrows(),
        }
    }

    fn truth_at(&self, j: usize) -> Option<StiefelBasis> {
        match self {
            Samples::File(_) => None,
            Samples::Synth { truth, .. } => truth.get(j).cloned(),
        }
    }

    fn next(&mut self) -> Result<Option<(Vector, Option<StiefelBasis>)>> {
        match self {
            Samples::File(s) => Ok(s.next_column()?.map(|c| (c, None))),
            Samples::Synth { x, truth, next } => {
                if *next >= x.ncols() {
                    return Ok(None);
                }
                let j = *next;
                *next += 1;
                Ok(Some((x.column(j).clone_owned(), Some(truth[j].clone()))))
            }
        }
    }
}

pub fn track(args: &TrackArgs) -> Result<Outcome> {
    let s = &args.solver;
    let (mut samples, rank) = match (&args.synth, &args.stream) {
        (Some(spec), _) => {
            spec.check_keys(&["m", "n", "k", "rho", "switch"])?;
            let m: usize = spec.require("m")?;
            let n: usize = spec.require("n")?;
            let k: usize = spec.require("k")?;
            let rho: f64 = spec.get("rho")?.unwrap_or(0.05);
            let switch: Option<usize> = spec.get("switch")?;
            let stream = synth_stream(m, k, n, rho, DEFAULT_AMPLITUDE, switch, s.seed)?;
            let before = StiefelBasis::new(stream.basis_before.clone())?;
            let after = StiefelBasis::new(stream.basis_after.clone())?;
            let truth =
                (0..n).map(|j| if switch.is_some_and(|sw| j >= sw) { after.clone() } else { before.clone() }).collect();
            (Samples::Synth { x: stream.x, truth, next: 0 }, s.rank.unwrap_or(k))
        }
        (None, Some(path)) => {
            (Samples::File(ColumnStream::open(path)?), s.rank.context("--rank is required with --stream")?)
        }
        (None, None) => bail!("one of --stream or --synth is required"),
    };
    if args.init_count < rank {
        bail!("invalid parameter: --init-count {} is below the rank {rank}", args.init_count);
    }
    if samples.len() < args.init_count {
        bail!("stream has {} samples, fewer than --init-count {}", samples.len(), args.init_count);
    }
    let cfg = s.config(rank)?;
    let m = samples.dim();
    let mut batch = Matrix::zeros(m, args.init_count);
    for j in 0..args.init_count {
        let (col, _) = samples.next()?.context("stream ended during initialization")?;
        batch.set_column(j, &col);
    }
    let mut state = tracker_init(&MaskedObservation::full(batch), &cfg, args.w)?;
    state.set_step_rule(StepRule::Fixed(args.step))?;
    let initial = state.basis();
    let initial_truth = samples.truth_at(args.init_count - 1);
    let initial_angle = initial_truth.map(|t| subspace_angle(&initial, &t)).transpose()?;

    let mut rows = Vec::new();
    let mut index = args.init_count;
    while let Some((col, truth)) = samples.next()? {
        let start = Instant::now();
        let out = tracker_step(&mut state, &MaskedColumn::full(col.clone()))?;
        let seconds = start.elapsed().as_secs_f64();
        let tol = args.sparsity_tol * col.amax();
        let outliers = col.iter().zip(out.l.iter()).filter(|(x, l)| (*x - *l).abs() > tol).count();
        let basis = state.basis();
        rows.push(TrackRow {
            index,
            residual_sparsity: outliers as f64 / m as f64,
            angle_to_initial: subspace_angle(&basis, &initial)?,
            angle_to_truth: truth.map(|t| subspace_angle(&basis, &t)).transpose()?,
            seconds,
        });
        index += 1;
    }
    write_csv(&rows, args.out.as_deref(), "track.csv")?;
    if let Some(dir) = &args.out {
        save_binary(&output_file(dir, "u_final.bin")?, state.basis().matrix())?;
        let summary = TrackSummary {
            init_count: args.init_count,
            samples: rows.len(),
            initial_angle_to_truth: initial_angle,
            final_angle_to_truth: rows.last().and_then(|r| r.angle_to_truth),
            final_angle_to_initial: rows.last().map(|r| r.angle_to_initial),
        };
        std::fs::write(output_file(dir, "track_summary.json")?, serde_json::to_string_pretty(&summary)?)?;
    }
    Ok(Outcome::Done)
}

#[derive(Debug, Serialize)]
struct PhaseRow {
    k_over_m: f64,
    rho: f64,
    seed: u64,
    m: usize,
    k: usize,
    rel_error_l: f64,
    success: bool,
    seconds: f64,
}

fn run_synthetic(solver: &SolverArgs, m: usize, k: usize, rho: f64, seed: u64, snr: Option<f64>) -> Result<(f64, f64)> {
    let inst = synth_instance(m, m, k, rho, DEFAULT_AMPLITUDE, seed)?;
    let x = match snr {
        Some(snr) => add_noise(&inst.x, snr, noise_seed(seed), Some(&inst.l))?,
        None => inst.x.clone(),
    };
    let cfg = solver.config(k)?;
    let start = Instant::now();
    let result = robust_pca(&MaskedObservation::full(x), &cfg)?;
    Ok((result.relative_error(&inst.l), start.elapsed().as_secs_f64()))
}

pub fn phase(args: &PhaseArgs) -> Result<Outcome> {
    let s = &args.solver;
    if s.rank.is_some() {
        bail!("--rank is not used by phase; the rank bound is k = (k/m)·m per cell");
    }
    if args.m < 2 || args.seeds == 0 {
        bail!("invalid parameter: phase needs --m >= 2 and --seeds >= 1");
    }
    let mut cells = Vec::new();
    for &r in &args.ranks {
        let k = ((r * args.m as f64).round() as usize).max(1);
        if !(r > 0.0) || k >= args.m {
            bail!("invalid parameter: relative rank {r} gives k = {k} for m = {}", args.m);
        }
        for &rho in &args.rhos {
            if !(0.0..=1.0).contains(&rho) {
                bail!("invalid parameter: outlier density {rho} outside [0, 1]");
            }
            for seed in 0..args.seeds {
                cells.push((r, k, rho, s.seed + seed));
            }
        }
    }
    s.config(1)?;
    let rows = thread_pool(s.jobs)?.install(|| {
        cells
            .par_iter()
            .map(|&(r, k, rho, seed)| {
                let (err, seconds) = run_synthetic(s, args.m, k, rho, seed, None)?;
                Ok(PhaseRow {
                    k_over_m: r,
                    rho,
                    seed,
                    m: args.m,
                    k,
                    rel_error_l: err,
                    success: is_success(err),
                    seconds,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    write_csv(&rows, args.out.as_deref(), "phase.csv")?;
    Ok(Outcome::Done)
}

#[derive(Debug, Serialize)]
struct NoiseRow {
    snr_db: f64,
    seed: u64,
    rel_error_l: f64,
    success: bool,
    seconds: f64,
}

pub fn noise(args: &NoiseArgs) -> Result<Outcome> {
    let s = &args.solver;
    if s.rank.is_some() {
        bail!("--rank is not used by noise; the rank bound is k = 0.1·m");
    }
    let k = ((0.1 * args.m as f64).round() as usize).max(1);
    if k >= args.m || args.seeds == 0 {
        bail!("invalid parameter: noise needs --m >= 2 and --seeds >= 1");
    }
    if let Some(bad) = args.snr.iter().find(|v| v.is_nan()) {
        bail!("invalid parameter: SNR {bad}");
    }
    s.config(k)?;
    let cells: Vec<(f64, u64)> =
        args.snr.iter().flat_map(|&snr| (0..args.seeds).map(move |i| (snr, s.seed + i))).collect();
    let rows = thread_pool(s.jobs)?.install(|| {
        cells
            .par_iter()
            .map(|&(snr, seed)| {
                let noise = snr.is_finite().then_some(snr);
                let (err, seconds) = run_synthetic(s, args.m, k, 0.1, seed, noise)?;
                Ok(NoiseRow { snr_db: snr, seed, rel_error_l: err, success: is_success(err), seconds })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    write_csv(&rows, args.out.as_deref(), "noise.csv")?;
    Ok(Outcome::Done)
}
