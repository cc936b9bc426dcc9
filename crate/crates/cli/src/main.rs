use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use inhand::io::{
    read_ground_truth, write_csv, write_json, write_mesh, write_sequence, write_trajectory, write_tsdf, PlyFormat,
    SequenceManifest,
};
use inhand::metrics::{compare_energies, energy_rows, pose_errors, run_gamma_sweep, SweepInput};
use inhand::pipeline::reconstruct;
use inhand::synth::{generate_sequence, Shape, SynthConfig, SyntheticObjectSpec};
use inhand::Error;

/// Rotation span below which a reconstruction is flagged as collapsed.
const COLLAPSE_SPAN: f64 = 0.3;

#[derive(Parser, Debug)]
#[command(name = "inhand", version, about = "In-hand object scanning with contact-augmented registration")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads; 0 uses all cores. Outputs do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic in-hand sequence with ground truth.
    Synth(SynthArgs),
    /// Register, fuse and mesh a sequence.
    Reconstruct(ReconstructArgs),
    /// Evaluate sequences: γ sweep and/or hand-energy comparison.
    Eval(EvalArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ShapeArg {
    Sphere,
    WaterBottle,
    SmallBottle,
    BowlingPin,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, value_enum, default_value = "sphere")]
    shape: ShapeArg,
    /// Sphere or bottle diameter, mm.
    #[arg(long, allow_hyphen_values = true)]
    diameter: Option<f64>,
    /// Bottle or pin height, mm.
    #[arg(long, allow_hyphen_values = true)]
    height: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    head_diameter: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    body_diameter: Option<f64>,
    #[arg(long, default_value_t = 24)]
    frames: usize,
    #[arg(long, default_value_t = 6.0, allow_hyphen_values = true)]
    deg_per_frame: f64,
    /// Depth noise standard deviation, mm.
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    noise: f64,
    /// Dimple-and-sticker texture features painted on the object.
    #[arg(long, default_value_t = 0)]
    texture_features: usize,
    /// Write ASCII PLY instead of binary.
    #[arg(long)]
    ascii: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReconstructArgs {
    manifest: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    gamma_t: Option<f64>,
    /// Drop the hand term (γ = 0).
    #[arg(long, conflicts_with = "use_detector")]
    no_contact: bool,
    /// Use detector-box correspondences instead of contacts.
    #[arg(long)]
    use_detector: bool,
    #[arg(long)]
    no_icp: bool,
    /// Output directory; defaults to the manifest's directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    ascii: bool,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(required = true)]
    manifests: Vec<PathBuf>,
    /// Comma-separated γ values, strictly increasing.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    sweep_gammas: Option<Vec<f64>>,
    #[arg(long)]
    compare_energies: bool,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) => match e {
                Error::TooManySkips { .. }
                | Error::SparseUnderConstrained { .. }
                | Error::IcpDivergence { .. }
                | Error::UnderConstrained { .. }
                | Error::DegenerateConfiguration { .. }
                | Error::NoContact { .. } => 4,
                Error::EmptyMesh | Error::OpenMesh { .. } => 5,
                _ => 3,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Core(e) => e.fmt(f),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn object_spec(args: &SynthArgs) -> SyntheticObjectSpec {
    let mut spec = match args.shape {
        ShapeArg::Sphere => SyntheticObjectSpec::sphere(70.0),
        ShapeArg::WaterBottle => SyntheticObjectSpec::water_bottle(),
        ShapeArg::SmallBottle => SyntheticObjectSpec::small_bottle(),
        ShapeArg::BowlingPin => SyntheticObjectSpec::bowling_pin(),
    };
    spec.shape = match spec.shape {
        Shape::Sphere { diameter } => Shape::Sphere {
            diameter: args.diameter.unwrap_or(diameter),
        },
        Shape::CapsuleBottle { diameter, height } => Shape::CapsuleBottle {
            diameter: args.diameter.unwrap_or(diameter),
            height: args.height.unwrap_or(height),
        },
        Shape::BowlingPin {
            head_diameter,
            body_diameter,
            height,
        } => Shape::BowlingPin {
            head_diameter: args.head_diameter.unwrap_or(head_diameter),
            body_diameter: args.body_diameter.unwrap_or(body_diameter),
            height: args.height.unwrap_or(height),
        },
    };
    spec
}

fn cmd_synth(args: &SynthArgs, seed: u64) -> CliResult<()> {
    let mut config = SynthConfig {
        object: object_spec(args),
        seed,
        texture_features: args.texture_features,
        ..SynthConfig::default()
    };
    config.motion.frames = args.frames;
    config.motion.deg_per_frame = args.deg_per_frame;
    config.motion.noise_sigma = args.noise;
    let sequence = generate_sequence(&config).map_err(|e| match e {
        Error::InvalidParameter { .. } => CliError::Usage(e.to_string()),
        e => CliError::Core(e),
    })?;
    let format = if args.ascii { PlyFormat::Ascii } else { PlyFormat::BinaryLittleEndian };
    let manifest = write_sequence(&args.out, &sequence, format)?;
    println!(
        "{} frames of {} written; manifest {}",
        sequence.frames.len(),
        config.object.name(),
        manifest.display()
    );
    Ok(())
}

fn manifest_dir(path: &Path) -> &Path {
    match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    }
}

fn cmd_reconstruct(args: &ReconstructArgs) -> CliResult<()> {
    let started = Instant::now();
    let manifest = SequenceManifest::load(&args.manifest)?;
    let base = manifest_dir(&args.manifest);
    let mut config = manifest.pipeline_config();
    if let Some(g) = args.gamma_t {
        config.registration.gamma_t = g;
    }
    if args.no_contact {
        config.registration.gamma_t = 0.0;
    }
    config.registration.use_detector |= args.use_detector;
    config.registration.use_icp &= !args.no_icp;
    config.registration.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let reg = &config.registration;
    log::info!(
        "gamma_t {} icp {} detector {}, {} frames",
        reg.gamma_t,
        reg.use_icp,
        reg.use_detector,
        manifest.frames.len()
    );
    let frames = manifest.load_frames(base, reg.gamma_t > 0.0 && !reg.use_detector)?;
    let ground_truth = read_ground_truth(&args.manifest, &manifest)?;

    let result = reconstruct(frames.clone(), &config, &manifest.probes)?;
    let out = args.out.clone().unwrap_or_else(|| base.to_path_buf());
    let format = if args.ascii { PlyFormat::Ascii } else { PlyFormat::BinaryLittleEndian };
    let paths = &manifest.outputs;
    write_mesh(&out.join(&paths.mesh), &result.mesh, format)?;
    write_trajectory(&out.join(&paths.trajectory), &result.trajectory.poses)?;
    if let Some(p) = &paths.tsdf {
        write_tsdf(&out.join(p), &result.volume)?;
    }

    let poses = &result.trajectory.poses;
    let mean = |f: &dyn Fn(&inhand::register::FramePose) -> f64| {
        let rest = &poses[1.min(poses.len())..];
        if rest.is_empty() {
            0.0
        } else {
            rest.iter().map(f).sum::<f64>() / rest.len() as f64
        }
    };
    let stats = result.mesh.edge_stats();
    let measurements: Vec<_> = result
        .measurements
        .iter()
        .map(|m| {
            let gt = manifest.probes.iter().find(|p| p.name == m.name).and_then(|p| p.ground_truth);
            json!({
                "name": m.name,
                "value": m.value,
                "ground_truth": gt,
                "abs_error": gt.map(|g| (m.value - g).abs()),
            })
        })
        .collect();
    let pose = match ground_truth {
        Some(gt) => {
            let seq = gt.into_sequence(frames)?;
            let r = pose_errors(&seq, &result.trajectory)?;
            json!({
                "mean_rotation_deg": r.mean_rotation_deg(),
                "mean_translation_mm": r.mean_translation(),
                "mean_add_mm": r.mean_add(),
                "rotation_span": r.rotation_span,
                "collapse_suspected": r.rotation_span < COLLAPSE_SPAN,
            })
        }
        None => serde_json::Value::Null,
    };
    let report = json!({
        "frames": manifest.frames.len(),
        "registered": poses.len(),
        "skipped": result.trajectory.skipped,
        "gamma_t": reg.gamma_t,
        "use_icp": reg.use_icp,
        "use_detector": reg.use_detector,
        "sparse_fallbacks": poses.iter().filter(|p| p.sparse_fallback).count(),
        "mean_sparse_residual_mm": mean(&|p| p.sparse_residual),
        "mean_icp_residual_mm": mean(&|p| p.icp_residual),
        "mesh": {
            "vertices": result.mesh.vertices.len(),
            "triangles": result.mesh.triangles.len(),
            "boundary_edges": stats.boundary,
            "non_manifold_edges": stats.non_manifold,
            "euler_characteristic": result.mesh.euler_characteristic(),
        },
        "measurements": measurements,
        "unmeasured": result.unmeasured.iter().map(|(n, r)| json!({"name": n, "reason": r})).collect::<Vec<_>>(),
        "pose_error": pose,
    });
    write_json(&out.join(&paths.report), &report)?;

    println!(
        "registered {}/{} frames (skipped {:?}), mesh {} vertices {} triangles, euler {}",
        poses.len(),
        manifest.frames.len(),
        result.trajectory.skipped,
        result.mesh.vertices.len(),
        result.mesh.triangles.len(),
        result.mesh.euler_characteristic()
    );
    for m in &result.measurements {
        println!("  {:<28} {:>12.3}", m.name, m.value);
    }
    for (n, r) in &result.unmeasured {
        println!("  {n:<28} unavailable: {r}");
    }
    if let Some(p) = report["pose_error"].as_object() {
        println!(
            "  per-pair error {:.3} deg / {:.3} mm, rotation span {:.3}{}",
            p["mean_rotation_deg"].as_f64().unwrap_or(f64::NAN),
            p["mean_translation_mm"].as_f64().unwrap_or(f64::NAN),
            p["rotation_span"].as_f64().unwrap_or(f64::NAN),
            if p["collapse_suspected"].as_bool() == Some(true) { " (collapse suspected)" } else { "" }
        );
    }
    println!("  done in {:.1} s; outputs in {}", started.elapsed().as_secs_f64(), out.display());
    Ok(())
}

fn sequence_name(path: &Path, index: usize) -> String {
    manifest_dir(path)
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| format!("sequence{index}"))
}

fn cmd_eval(args: &EvalArgs) -> CliResult<()> {
    if args.sweep_gammas.is_none() && !args.compare_energies {
        return Err(CliError::Usage("eval needs --sweep-gammas and/or --compare-energies".into()));
    }
    if let Some(g) = &args.sweep_gammas {
        if g.is_empty() {
            return Err(CliError::Usage("--sweep-gammas needs at least one value".into()));
        }
        if g.windows(2).any(|w| !(w[0] < w[1])) || g.iter().any(|x| !(*x >= 0.0)) {
            return Err(CliError::Usage("--sweep-gammas must be nonnegative and strictly increasing".into()));
        }
    }
    let mut loaded = Vec::new();
    for (i, path) in args.manifests.iter().enumerate() {
        let manifest = SequenceManifest::load(path)?;
        let needs_hand = args.compare_energies || args.sweep_gammas.iter().flatten().any(|g| *g > 0.0);
        let frames = manifest.load_frames(manifest_dir(path), needs_hand)?;
        let gt = read_ground_truth(path, &manifest)?;
        let name = gt
            .as_ref()
            .map(|g| g.config.object.name().to_string())
            .unwrap_or_else(|| sequence_name(path, i));
        loaded.push((name, manifest, frames, gt));
    }

    if let Some(gammas) = &args.sweep_gammas {
        let inputs: Vec<SweepInput> = loaded
            .iter()
            .map(|(name, m, frames, _)| SweepInput {
                name: name.clone(),
                frames: frames.clone(),
                probes: m.probes.clone(),
            })
            .collect();
        let config = loaded[0].1.pipeline_config();
        let sweep = run_gamma_sweep(&inputs, gammas, &config)?;
        write_csv(&args.out.join("sweep.csv"), &sweep.probe_rows())?;
        write_csv(&args.out.join("sweep_summary.csv"), &sweep.summary_rows())?;
        println!("gamma  normalized error");
        for (g, e) in sweep.gammas.iter().zip(&sweep.normalized) {
            println!("{g:>5}  {e:.5}");
        }
        for c in sweep.cells.iter().filter(|c| c.failure.is_some()) {
            println!("  failed: gamma {} {}: {}", c.gamma, c.object, c.failure.as_deref().unwrap_or(""));
        }
    }

    if args.compare_energies {
        let mut rows = vec![vec!["sequence".to_string(), "config".into(), "statistic".into(), "value".into()]];
        for (name, manifest, frames, gt) in &loaded {
            let gt = gt.as_ref().ok_or_else(|| {
                CliError::Core(Error::Manifest(format!("{name}: --compare-energies needs ground-truth annotations")))
            })?;
            let mut reg = manifest.pipeline_config().registration;
            if reg.gamma_t == 0.0 {
                reg.gamma_t = 15.0;
            }
            let table = compare_energies(frames, &gt.annotations, &reg)?;
            for r in &table {
                println!(
                    "{name:<14} {:<16} {}",
                    r.config.name(),
                    match (r.mean, r.stdev) {
                        (Some(m), Some(s)) => format!("{m:.3} ± {s:.3} mm over {} pairs", r.pairs),
                        _ => r.note.clone().unwrap_or_else(|| "unavailable".into()),
                    }
                );
            }
            rows.extend(energy_rows(&table).into_iter().skip(1).map(|mut row| {
                row.insert(0, name.clone());
                row
            }));
        }
        write_csv(&args.out.join("energies.csv"), &rows)?;
    }
    Ok(())
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a, cli.seed),
        Command::Reconstruct(a) => cmd_reconstruct(a),
        Command::Eval(a) => cmd_eval(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("INHAND_LOG", "warn")).init();
    let cli = Cli::parse();
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    };
    match pool.install(|| run(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
