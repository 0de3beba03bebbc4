//! `vflow` command-line front-end.
//!
//! Exit codes: 0 on success, 1 when the problem has no feasible solution,
//! 2 for invalid input or any other failure.

mod config;

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use serde_json::json;

use vflow::bnb::{solve, SolveStatus, SolverConfig};
use vflow::features::{add_image_noise, box_histogram, generate_synthetic, load_image, SyntheticSpec, DEFAULT_BINS};
use vflow::flow::validate;
use vflow::graph_json::GraphJson;
use vflow::lp::export_lp;
use vflow::methods::{MethodOptions, MethodRegistry};
use vflow::metrics::{idsw_norm, write_sweep_csv};
use vflow::mot::io::{
    join_features, read_features, read_mot, read_tracks, to_detection, write_features, write_mot, write_tracks, MotRow,
};
use vflow::mot::{batch_d, Detection, GraphParams};
use vflow::pipeline::track_sequence;
use vflow::scalar::Similarity;
use vflow::sweep::{run_sweep, write_rows, SweepPlan};

#[derive(Parser)]
#[command(
    name = "vflow",
    version,
    about = "Exact non-separable vector flow solver and tracking pipeline"
)]
struct Cli {
    /// File of `key = value` lines supplying defaults for any flag; flags given on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Seed for every random choice (noise, synthetic data).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads. Results do not depend on this value.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args, Clone)]
struct SolverArgs {
    /// Wall-clock limit per solve, in seconds.
    #[arg(long, default_value_t = 600.0)]
    time_limit: f64,
    /// Maximum number of search nodes per solve.
    #[arg(long)]
    node_limit: Option<u64>,
}

#[derive(clap::Args, Clone)]
struct GraphArgs {
    /// Largest frame gap a transition may bridge.
    #[arg(long, default_value_t = 3)]
    dt: u32,
    /// Drop transitions whose box centers are farther apart than GATE pixels per frame of gap.
    #[arg(long)]
    gate: Option<f64>,
    /// Solve in consecutive windows of this many frames and stitch the tracks.
    #[arg(long)]
    batch: Option<u32>,
    /// Number of tracks; defaults to the number of ground-truth identities.
    #[arg(long)]
    d: Option<usize>,
}

#[derive(clap::Args, Clone)]
struct MethodArgs {
    /// Scalar baseline similarity: cosine or intersection.
    #[arg(long, default_value = "cosine")]
    similarity: Similarity,
    /// Scalar baseline cost of starting or ending a track.
    #[arg(long, default_value_t = vflow::scalar::DEFAULT_BETA)]
    beta: f64,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve a flow network given as JSON and print the solution with its validation.
    Solve {
        #[arg(long, value_name = "FILE")]
        graph: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        /// Stop after the greedy incumbent.
        #[arg(long)]
        greedy_only: bool,
        /// Also write the JSON report to this file.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Track detections and write `frame,track_id,det_id` rows.
    Track {
        /// MOT-style CSV: frame,id,left,top,width,height[,conf,class,visibility].
        #[arg(long, value_name = "CSV")]
        dets: PathBuf,
        /// Feature CSV: frame,id,f1..fk, joined on (frame, id).
        #[arg(long, value_name = "CSV")]
        features: Option<PathBuf>,
        /// Directory of frame images named <frame:06>.{png,ppm,jpg}; used when no feature file is given.
        #[arg(long, value_name = "DIR")]
        images: Option<PathBuf>,
        /// Histogram bins per color channel for image features.
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
        /// Gaussian pixel noise (intensity units) added to images before feature extraction.
        #[arg(long, default_value_t = 0.0)]
        image_noise: f64,
        #[command(flatten)]
        graph: GraphArgs,
        /// Association method: vector, scalar, greedy or oracle.
        #[arg(long, default_value = "vector")]
        method: String,
        #[command(flatten)]
        method_args: MethodArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, value_name = "CSV")]
        out: PathBuf,
    },
    /// Score tracks against ground truth and print the metrics report.
    Eval {
        /// MOT-style ground-truth CSV (the same file tracked).
        #[arg(long, value_name = "CSV")]
        gt: PathBuf,
        #[arg(long, value_name = "CSV")]
        tracks: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Generate synthetic sequences over a noise grid, track them with each method and tabulate.
    Synth {
        /// Synthetic sequence description (JSON); its sigma and seed are overridden by the sweep.
        #[arg(long, value_name = "JSON")]
        spec: PathBuf,
        /// Feature-noise levels, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        sigma_grid: Vec<f64>,
        /// Number of seeds per noise level, starting at --seed.
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        /// Methods to compare, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "vector,scalar")]
        methods: Vec<String>,
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        method_args: MethodArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Also write each generated sequence as dets.csv and features.csv.
        #[arg(long)]
        write_sequences: bool,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Write the flow network's MIP in LP format.
    ExportLp {
        #[arg(long, value_name = "FILE")]
        graph: PathBuf,
        #[arg(long, value_name = "LP")]
        out: PathBuf,
    },
}

/// A run that completed but found no feasible solution.
#[derive(Debug)]
struct Infeasible(String);

impl std::fmt::Display for Infeasible {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "infeasible: {}", self.0)
    }
}

impl std::error::Error for Infeasible {}

/// An error whose message has already been printed.
#[derive(Debug)]
struct Reported;

impl std::fmt::Display for Reported {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("invalid arguments")
    }
}

impl std::error::Error for Reported {}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if e.downcast_ref::<Reported>().is_none() {
                eprintln!("error: {e:#}");
            }
            if e.downcast_ref::<Infeasible>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn run() -> Result<()> {
    let mut args: Vec<OsString> = std::env::args_os().collect();
    let cmd = Cli::command();
    if let Some(path) = config::config_path(&args) {
        let text = fs::read_to_string(&path).with_context(|| format!("reading config {}", path.to_string_lossy()))?;
        args = config::apply(&cmd, args, &config::parse(&text)?)?;
    }
    let matches = match cmd.try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) if !e.use_stderr() => {
            e.print()?;
            return Ok(());
        }
        Err(e) => {
            e.print()?;
            return Err(Reported.into());
        }
    };
    let cli = Cli::from_arg_matches(&matches)?;
    if cli.jobs == 0 {
        bail!("--jobs must be at least 1");
    }
    match &cli.command {
        Cmd::Solve {
            graph,
            solver,
            greedy_only,
            out,
        } => cmd_solve(&cli, graph, solver, *greedy_only, out.as_deref()),
        Cmd::Track { .. } => cmd_track(&cli),
        Cmd::Eval { gt, tracks, out } => cmd_eval(gt, tracks, out.as_deref()),
        Cmd::Synth { .. } => cmd_synth(&cli),
        Cmd::ExportLp { graph, out } => {
            let net = read_graph(graph)?;
            let text = export_lp(&net)?;
            write_atomic(out, text.as_bytes())
        }
    }
}

/// Writes through a temporary file in the target directory and renames it.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("writing into {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("replacing {}", path.display()))?;
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_graph(path: &Path) -> Result<vflow::flow::FlowNetwork> {
    let g = GraphJson::parse(&read_text(path)?).with_context(|| path.display().to_string())?;
    g.to_network().with_context(|| path.display().to_string())
}

fn solver_config(s: &SolverArgs, jobs: usize) -> SolverConfig {
    SolverConfig {
        time_limit: Some(s.time_limit),
        node_limit: s.node_limit,
        jobs,
        ..Default::default()
    }
}

fn status_json(status: &SolveStatus) -> serde_json::Value {
    serde_json::to_value(status).expect("status serializes")
}

fn cmd_solve(cli: &Cli, graph: &Path, s: &SolverArgs, greedy_only: bool, out: Option<&Path>) -> Result<()> {
    let net = read_graph(graph)?;
    let cfg = SolverConfig {
        greedy_only,
        ..solver_config(s, cli.jobs)
    };
    let result = solve(&net, &cfg)?;
    let name = |v: usize| net.name(v).to_string();
    // `status` plus `upper_bound` when a limit stopped the search.
    let mut report = status_json(&result.status);
    report["objective"] = json!(result.objective());
    report["gap"] = json!(result.gap());
    report["nodes"] = json!(result.nodes);
    if let (Some(sol), Some(cover)) = (&result.solution, &result.cover) {
        let violations = validate(&net, sol)?;
        let flows: Vec<_> = net
            .edges()
            .iter()
            .enumerate()
            .filter(|(i, _)| sol.active[*i])
            .map(|(i, e)| json!({"from": name(e.from), "to": name(e.to), "flow": sol.flows[i]}))
            .collect();
        let paths: Vec<Vec<String>> = cover
            .paths()
            .iter()
            .map(|p| p.iter().map(|&v| name(v)).collect())
            .collect();
        report["paths"] = json!(paths);
        report["flows"] = json!(flows);
        report["violations"] = json!(violations.iter().map(|v| v.to_string()).collect::<Vec<_>>());
        if !violations.is_empty() {
            bail!("internal error: solution fails validation: {}", report["violations"]);
        }
    }
    let text = serde_json::to_string_pretty(&report)? + "\n";
    print!("{text}");
    if let Some(out) = out {
        write_atomic(out, text.as_bytes())?;
    }
    if result.status == SolveStatus::Infeasible {
        return Err(Infeasible(format!("no cover of {} paths exists", net.d())).into());
    }
    Ok(())
}

fn frame_image(dir: &Path, frame: u32) -> Result<PathBuf> {
    for ext in ["png", "ppm", "jpg", "jpeg"] {
        let p = dir.join(format!("{frame:06}.{ext}"));
        if p.exists() {
            return Ok(p);
        }
    }
    bail!("no image for frame {frame} in {}", dir.display())
}

fn image_features(rows: &[MotRow], dir: &Path, bins: usize, noise: f64, seed: u64) -> Result<Vec<Detection>> {
    let mut by_frame: std::collections::BTreeMap<u32, Vec<&MotRow>> = Default::default();
    for r in rows {
        by_frame.entry(r.frame).or_default().push(r);
    }
    let mut dets = Vec::with_capacity(rows.len());
    for (frame, rs) in by_frame {
        let path = frame_image(dir, frame)?;
        let mut img = load_image(&path).with_context(|| path.display().to_string())?;
        if noise > 0.0 {
            img = add_image_noise(&img, noise, seed.wrapping_add(u64::from(frame)));
        }
        for r in rs {
            let h = box_histogram(&img, &r.bbox, bins)
                .with_context(|| format!("detection {} in {}", r.det_id, path.display()))?;
            dets.push(to_detection(r, h));
        }
    }
    dets.sort_by_key(|d| d.id);
    Ok(dets)
}

fn graph_params(g: &GraphArgs, dets: &[Detection]) -> Result<GraphParams> {
    let d = match g.d {
        Some(d) => d,
        None => match batch_d(dets, 0) {
            0 => bail!("--d is required when detections carry no ground-truth identities"),
            d => d,
        },
    };
    Ok(GraphParams {
        dt: g.dt,
        gate: g.gate,
        batch: g.batch,
        d,
    })
}

fn method_options(m: &MethodArgs) -> MethodOptions {
    MethodOptions {
        similarity: m.similarity,
        beta: m.beta,
        ..Default::default()
    }
}

fn cmd_track(cli: &Cli) -> Result<()> {
    let Cmd::Track {
        dets,
        features,
        images,
        bins,
        image_noise,
        graph,
        method,
        method_args,
        solver,
        out,
    } = &cli.command
    else {
        unreachable!()
    };
    let rows = read_mot(fs::File::open(dets).with_context(|| format!("opening {}", dets.display()))?)
        .with_context(|| dets.display().to_string())?;
    let detections = match (features, images) {
        (Some(f), _) => {
            let feats = read_features(fs::File::open(f).with_context(|| format!("opening {}", f.display()))?)
                .with_context(|| f.display().to_string())?;
            join_features(&rows, &feats)?
        }
        (None, Some(dir)) => image_features(&rows, dir, *bins, *image_noise, cli.seed)?,
        (None, None) => bail!("either --features or --images is required"),
    };
    let params = graph_params(graph, &detections)?;
    let registry = MethodRegistry::default();
    let m = registry.create(method, &method_options(method_args))?;
    let batches = if graph.batch.is_some() { cli.jobs } else { 1 };
    let cfg = solver_config(solver, if graph.batch.is_some() { 1 } else { cli.jobs });
    let result = match track_sequence(&detections, &params, m.as_ref(), &cfg, batches) {
        Ok(r) => r,
        Err(e @ vflow::pipeline::PipelineError::Infeasible { .. }) => return Err(Infeasible(e.to_string()).into()),
        Err(e) => return Err(e.into()),
    };
    let mut buf = Vec::new();
    write_tracks(&mut buf, &result.tracks)?;
    write_atomic(out, &buf)?;
    for (i, b) in result.batches.iter().enumerate() {
        eprintln!(
            "batch {i}: frames {}-{}, {} detections, d = {}, {}",
            b.first_frame,
            b.last_frame,
            b.detections,
            b.d,
            status_json(&b.status)["status"].as_str().unwrap_or("?")
        );
    }
    Ok(())
}

fn cmd_eval(gt: &Path, tracks: &Path, out: Option<&Path>) -> Result<()> {
    let rows = read_mot(fs::File::open(gt).with_context(|| format!("opening {}", gt.display()))?)
        .with_context(|| gt.display().to_string())?;
    let dets: Vec<Detection> = rows.iter().map(|r| to_detection(r, Vec::new())).collect();
    let pred = read_tracks(fs::File::open(tracks).with_context(|| format!("opening {}", tracks.display()))?)
        .with_context(|| tracks.display().to_string())?;
    let report = idsw_norm(&dets, &pred)?;
    let text = serde_json::to_string_pretty(&report)? + "\n";
    print!("{text}");
    if let Some(out) = out {
        write_atomic(out, text.as_bytes())?;
    }
    Ok(())
}

fn cmd_synth(cli: &Cli) -> Result<()> {
    let Cmd::Synth {
        spec,
        sigma_grid,
        seeds,
        methods,
        graph,
        method_args,
        solver,
        write_sequences,
        out,
    } = &cli.command
    else {
        unreachable!()
    };
    let spec: SyntheticSpec =
        serde_json::from_str(&read_text(spec)?).with_context(|| format!("parsing {}", spec.display()))?;
    if *seeds == 0 {
        bail!("--seeds must be at least 1");
    }
    if sigma_grid.iter().any(|s| s.is_nan() || *s < 0.0) {
        bail!("noise levels must be non-negative");
    }
    let registry = MethodRegistry::default();
    let opts = method_options(method_args);
    let created = methods
        .iter()
        .map(|m| registry.create(m, &opts))
        .collect::<Result<Vec<_>, _>>()?;
    let params = GraphParams {
        dt: graph.dt,
        gate: graph.gate,
        batch: graph.batch,
        d: graph.d.unwrap_or(spec.objects.len()),
    };
    params.validate()?;
    let plan = SweepPlan {
        spec: spec.clone(),
        sigmas: sigma_grid.clone(),
        seeds: *seeds,
        base_seed: cli.seed,
        params,
        solver: solver_config(solver, 1),
        methods: created.iter().map(|m| m.as_ref()).collect(),
    };
    let result = run_sweep(&plan, cli.jobs)?;

    let mut files: Vec<(PathBuf, Vec<u8>)> = Vec::new();
    let mut buf = Vec::new();
    write_sweep_csv(&mut buf, &result.table)?;
    files.push((out.join("sweep.csv"), buf));
    files.push((
        out.join("sweep.json"),
        (serde_json::to_string_pretty(&result.table)? + "\n").into_bytes(),
    ));
    let mut buf = Vec::new();
    write_rows(&mut buf, &result.runs)?;
    files.push((out.join("runs.csv"), buf));
    let mut buf = Vec::new();
    write_rows(&mut buf, &result.selection)?;
    files.push((out.join("selection.csv"), buf));
    if *write_sequences {
        for &sigma in sigma_grid {
            for seed in cli.seed..cli.seed + seeds {
                let seq = generate_synthetic(&SyntheticSpec {
                    sigma,
                    seed,
                    ..spec.clone()
                })?;
                let dir = out.join(format!("sigma_{sigma}_seed_{seed}"));
                let (mut mot, mut feat) = (Vec::new(), Vec::new());
                write_mot(&mut mot, &seq.detections)?;
                write_features(&mut feat, &seq.detections)?;
                files.push((dir.join("dets.csv"), mot));
                files.push((dir.join("features.csv"), feat));
            }
        }
    }
    for (path, bytes) in files {
        write_atomic(&path, &bytes)?;
    }
    eprintln!("wrote {} ({} runs)", out.display(), result.runs.len());
    print!("{}", fs::read_to_string(out.join("sweep.csv"))?);
    Ok(())
}
