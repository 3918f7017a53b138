use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use posegen::gateway::client::HttpBackend;
use posegen::gateway::mock::MockBackend;
use posegen::gateway::server::{serve, ServeOptions};
use posegen::gateway::Backend;
use posegen::pipeline::prompt::{build_prompt, PromptParts, DEFAULT_DESCRIPTOR, DEFAULT_PERSON, DEFAULT_TEMPLATE};
use posegen::pipeline::{self, Input, Models, PersonPolicy, PipelineConfig};
use posegen::report::{self, EvalOptions, JointSelection};
use posegen::{formats, models};
use posegen_core::depth::render_depth;
use posegen_core::pose_prior::{difficulty_score, is_hard_pose, LatentMode, DEFAULT_TAU};
use posegen_core::{BodyModelSpec, PoseParams, ShapeParams, WeakPerspectiveCamera};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "posegen", version, about = "Synthetic human images with paired body-model ground truth")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset from prompts or real images.
    Generate(GenerateArgs),
    /// Print the pose-prior difficulty score of a pose.
    ScorePose(ScorePoseArgs),
    /// Render the depth map of a posed body.
    RenderDepth(RenderDepthArgs),
    /// Compare predicted joints with ground truth.
    Evaluate(EvaluateArgs),
    /// Serve the deterministic mock backend over HTTP.
    ServeMock(ServeMockArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    HighestConfidence,
    All,
}

#[derive(Args)]
struct GenerateArgs {
    /// Literal prompt; may be repeated.
    #[arg(long)]
    prompt: Vec<String>,
    /// File with one prompt per line; blank lines and `#` comments skipped.
    #[arg(long)]
    prompt_file: Option<PathBuf>,
    /// Action filled into --template; one prompt per occurrence.
    #[arg(long)]
    category: Vec<String>,
    /// Directory of real `.png` images to rectify instead of generating.
    #[arg(long)]
    real_dir: Option<PathBuf>,
    /// Template for --category and --real-dir prompts.
    #[arg(long, default_value = DEFAULT_TEMPLATE)]
    template: String,
    /// `{person}` in the template.
    #[arg(long, default_value = DEFAULT_PERSON)]
    person_phrase: String,
    /// `{descriptor}` in the template.
    #[arg(long, default_value = DEFAULT_DESCRIPTOR)]
    descriptor: String,
    #[arg(long)]
    out: PathBuf,
    /// Backend base URL, or `mock` for the in-process mock.
    #[arg(long, env = "HPC_BACKEND_URL")]
    backend: String,
    /// JSON pipeline config; explicit flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Difficulty threshold [default: 30]. `inf` disables rectification.
    #[arg(long, allow_negative_numbers = true)]
    tau: Option<f64>,
    /// Rectified samples per hard input [default: 3].
    #[arg(long)]
    augs: Option<u32>,
    /// Latent augmentation scale s [default: 0.1].
    #[arg(long, allow_negative_numbers = true)]
    aug_scale: Option<f64>,
    /// Noise level of the depth-conditioned regeneration [default: 0.8].
    #[arg(long, allow_negative_numbers = true)]
    strength: Option<f64>,
    /// Denoising steps [default: 50].
    #[arg(long)]
    steps: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// Depth map side in pixels; images are 8x larger [default: 64].
    #[arg(long)]
    depth_size: Option<u32>,
    /// Concurrent inputs [default: 4].
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, value_enum)]
    person_policy: Option<PolicyArg>,
    /// Score and augment with sampled latents instead of the mean.
    #[arg(long)]
    sampled: bool,
    /// Drop inputs whose pose is not hard instead of emitting them as-is.
    #[arg(long)]
    no_ungated: bool,
    /// Exit 0 even when nothing was emitted.
    #[arg(long)]
    allow_empty: bool,
    /// Body-model container [default: bundled toy model].
    #[arg(long)]
    model: Option<PathBuf>,
    /// Pose-prior container [default: bundled toy prior].
    #[arg(long)]
    vae: Option<PathBuf>,
}

#[derive(Args)]
struct ScorePoseArgs {
    /// Pose-prior container [default: bundled toy prior].
    #[arg(long)]
    vae: Option<PathBuf>,
    /// Pose JSON: `{"global_orient": [x, y, z], "body_pose": [[x, y, z], ...]}`, radians.
    #[arg(long)]
    pose: PathBuf,
    /// Score the posterior mean instead of a seeded sample.
    #[arg(long)]
    mean: bool,
    #[arg(long, default_value_t = DEFAULT_TAU, allow_negative_numbers = true)]
    tau: f64,
    /// Seed for the sampled latent.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RenderDepthArgs {
    /// Body-model container [default: bundled toy model].
    #[arg(long)]
    model: Option<PathBuf>,
    /// Pose JSON, radians. Zero pose when omitted.
    #[arg(long)]
    pose: Option<PathBuf>,
    /// Shape JSON: `{"betas": [...]}`. Zero shape when omitted.
    #[arg(long)]
    shape: Option<PathBuf>,
    /// Camera JSON: `{"scale": s, "tx": x, "ty": y}`.
    #[arg(long)]
    cam: PathBuf,
    #[arg(long, default_value_t = 64)]
    size: u32,
    /// `.png` writes a 16-bit visualisation, anything else raw `.bin`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Fixed PCK threshold in pixels, used when no torso threshold applies.
    #[arg(long, allow_negative_numbers = true)]
    pck_thresh: Option<f64>,
    /// Torso-length multiple for the torso-relative PCK threshold.
    #[arg(long, default_value_t = report::DEFAULT_TORSO_FACTOR)]
    torso_factor: f64,
    /// Joint subset JSON: an index array, or `{"indices": [...], "torso": {...}}`.
    #[arg(long)]
    joints: Option<PathBuf>,
    /// Measure MPJPE without aligning the root joint first.
    #[arg(long)]
    no_root_align: bool,
    /// Report JSONL path [default: stdout only].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeMockArgs {
    #[arg(long, default_value_t = 8000)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 4)]
    workers: usize,
    /// Body joints in mock HMR output [default: the bundled toy model's].
    #[arg(long)]
    body_joints: Option<usize>,
    #[arg(long)]
    betas: Option<usize>,
}

enum Failure {
    /// Bad arguments or unreadable inputs: exit 2.
    Usage(String),
    /// Exit 1.
    Runtime(String),
}

type CliResult = Result<(), Failure>;

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::ScorePose(a) => cmd_score_pose(a),
        Command::RenderDepth(a) => cmd_render_depth(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::ServeMock(a) => cmd_serve_mock(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

fn load_body(path: &Option<PathBuf>) -> Result<BodyModelSpec, Failure> {
    match path {
        Some(p) => models::load_body_model(p).map_err(usage),
        None => Ok(models::bundled_body_model()),
    }
}

fn load_prior(path: &Option<PathBuf>) -> Result<posegen_core::pose_prior::PosePriorVAE, Failure> {
    match path {
        Some(p) => models::load_pose_prior(p).map_err(usage),
        None => Ok(models::bundled_pose_prior()),
    }
}

fn collect_inputs(a: &GenerateArgs) -> Result<Vec<Input>, Failure> {
    let mut inputs: Vec<Input> = a.prompt.iter().map(|p| Input::Text { prompt: p.clone() }).collect();
    if let Some(f) = &a.prompt_file {
        let text = std::fs::read_to_string(f).map_err(|e| usage(format!("{}: {e}", f.display())))?;
        inputs.extend(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(|l| Input::Text { prompt: l.to_string() }),
        );
    }
    let fill = |action: &str| {
        build_prompt(
            &a.template,
            &PromptParts {
                action,
                person: &a.person_phrase,
                descriptor: &a.descriptor,
            },
        )
        .map_err(usage)
    };
    if a.real_dir.is_none() {
        for c in &a.category {
            inputs.push(Input::Text { prompt: fill(c)? });
        }
    }
    if let Some(dir) = &a.real_dir {
        let category = match a.category.as_slice() {
            [one] => one.as_str(),
            [] => return Err(usage("--real-dir needs --category to build the prompt")),
            _ => return Err(usage("--real-dir takes a single --category")),
        };
        inputs.extend(pipeline::real_inputs(dir, &fill(category)?).map_err(usage)?);
    }
    if a.prompt.is_empty() && a.prompt_file.is_none() && a.category.is_empty() && a.real_dir.is_none() {
        return Err(usage("give at least one of --prompt, --prompt-file, --category or --real-dir"));
    }
    Ok(inputs)
}

fn pipeline_config(a: &GenerateArgs) -> Result<PipelineConfig, Failure> {
    let mut cfg: PipelineConfig = match &a.config {
        Some(p) => formats::read_json(p).map_err(usage)?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = a.tau {
        cfg.tau = v;
    }
    if let Some(v) = a.augs {
        cfg.augmentations_per_input = v;
    }
    if let Some(v) = a.aug_scale {
        cfg.aug_scale = v;
    }
    if let Some(v) = a.strength {
        cfg.strength = v;
    }
    if let Some(v) = a.steps {
        cfg.num_steps = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.depth_size {
        cfg.depth_size = v;
    }
    if let Some(v) = a.jobs {
        cfg.jobs = v;
    }
    if let Some(p) = a.person_policy {
        cfg.person_policy = match p {
            PolicyArg::HighestConfidence => PersonPolicy::HighestConfidence,
            PolicyArg::All => PersonPolicy::All,
        };
    }
    if a.sampled {
        cfg.latent_mode = LatentMode::Sampled;
    }
    if a.no_ungated {
        cfg.emit_ungated = false;
    }
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn cmd_generate(a: GenerateArgs) -> CliResult {
    let cfg = pipeline_config(&a)?;
    let inputs = collect_inputs(&a)?;
    let body = load_body(&a.model)?;
    let prior = load_prior(&a.vae)?;
    if prior.pose_joints() > body.body_joint_count() {
        return Err(usage(format!(
            "pose prior reads {} body joints but the body model has {}",
            prior.pose_joints(),
            body.body_joint_count()
        )));
    }
    let backend: Box<dyn Backend> = if a.backend == "mock" {
        Box::new(MockBackend::new(body.body_joint_count(), body.num_betas()))
    } else {
        Box::new(
            HttpBackend::new(&a.backend)
                .map_err(usage)?
                .with_body_joints(body.body_joint_count()),
        )
    };
    let models = Models {
        body: &body,
        prior: &prior,
        backend: backend.as_ref(),
    };
    let (out, manifest) = pipeline::generate(&inputs, &cfg, &models, &a.out).map_err(runtime)?;
    let c = &out.counts;
    let gate_rate = if c.inputs > 0 { c.hard_inputs as f64 / c.inputs as f64 } else { 0.0 };
    println!(
        "inputs {}  samples {} (gated {}, ungated {})  rejected {}  failed {}  gate rate {:.3}",
        c.inputs, c.samples, c.gated, c.ungated, c.rejected, c.failed_inputs, gate_rate
    );
    println!("manifest {}", manifest.display());
    if c.inputs > 0 && c.failed_inputs == c.inputs {
        return Err(runtime("the backend failed on every input"));
    }
    if c.samples == 0 && !a.allow_empty {
        return Err(runtime("no samples emitted (pass --allow-empty to accept)"));
    }
    Ok(())
}

fn read_input_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    formats::read_json(path).map_err(usage)
}

fn cmd_score_pose(a: ScorePoseArgs) -> CliResult {
    if !(a.tau >= 0.0) {
        return Err(usage(format!("--tau must be >= 0, got {}", a.tau)));
    }
    let prior = load_prior(&a.vae)?;
    let pose: PoseParams = read_input_json(&a.pose)?;
    let mode = if a.mean { LatentMode::Mean } else { LatentMode::Sampled };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let score = difficulty_score(&prior, &pose, mode, &mut rng).map_err(usage)?;
    let verdict = if is_hard_pose(score, a.tau) { "hard" } else { "easy" };
    let mode_name = if a.mean { "mean" } else { "sampled" };
    println!("score {score}");
    println!("verdict {verdict} (tau {}, {mode_name})", a.tau);
    Ok(())
}

#[derive(Deserialize)]
struct CameraFile {
    scale: f64,
    tx: f64,
    ty: f64,
}

fn cmd_render_depth(a: RenderDepthArgs) -> CliResult {
    if a.size == 0 {
        return Err(usage("--size must be positive"));
    }
    let body = load_body(&a.model)?;
    let pose = match &a.pose {
        Some(p) => read_input_json(p)?,
        None => PoseParams::zeros(body.body_joint_count()),
    };
    let shape = match &a.shape {
        Some(p) => read_input_json(p)?,
        None => ShapeParams::zeros(body.num_betas()),
    };
    let c: CameraFile = read_input_json(&a.cam)?;
    let cam = WeakPerspectiveCamera::new(c.scale, c.tx, c.ty, a.size, a.size).map_err(usage)?;
    let mesh = body.forward(&pose, &shape).map_err(usage)?;
    let depth = render_depth(&mesh, &cam, a.size, a.size).map_err(runtime)?;
    formats::write_depth(&depth, &a.out).map_err(runtime)?;
    println!(
        "wrote {} ({}x{}, {} foreground pixels)",
        a.out.display(),
        depth.width,
        depth.height,
        depth.foreground_count()
    );
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> CliResult {
    let pred = report::read_records(&a.pred).map_err(usage)?;
    let gt = report::read_records(&a.gt).map_err(usage)?;
    let selection = match &a.joints {
        Some(p) => JointSelection::read(p).map_err(usage)?,
        None => JointSelection::default(),
    };
    if let Some(t) = a.pck_thresh {
        if !(t >= 0.0) {
            return Err(usage(format!("--pck-thresh must be >= 0, got {t}")));
        }
    }
    if let Some(m) = report::id_mismatch(&pred, &gt) {
        let mut msg = String::from("sample ids differ between --pred and --gt");
        for id in &m.only_in_pred {
            msg.push_str(&format!("\n  only in pred: {id}"));
        }
        for id in &m.only_in_gt {
            msg.push_str(&format!("\n  only in gt: {id}"));
        }
        return Err(runtime(msg));
    }
    let opts = EvalOptions {
        pck_thresh: a.pck_thresh,
        torso_factor: a.torso_factor,
        selection,
        root_aligned: !a.no_root_align,
    };
    let rep = report::evaluate(&pred, &gt, &opts).map_err(runtime)?;
    let text = rep.to_jsonl();
    match &a.out {
        Some(p) => std::fs::write(p, &text).map_err(|e| runtime(format!("{}: {e}", p.display())))?,
        None => print!("{text}"),
    }
    let s = &rep.summary;
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.3}"));
    eprintln!(
        "samples {}  MPJPE {} mm  PA-MPJPE {} mm  PCK {}",
        s.samples,
        fmt(s.mean_mpjpe_mm),
        fmt(s.mean_pa_mpjpe_mm),
        fmt(s.mean_pck)
    );
    Ok(())
}

fn cmd_serve_mock(a: ServeMockArgs) -> CliResult {
    let toy = models::bundled_body_model();
    let mock = MockBackend::new(
        a.body_joints.unwrap_or(toy.body_joint_count()),
        a.betas.unwrap_or(toy.num_betas()),
    );
    let opts = ServeOptions {
        workers: a.workers.max(1),
        ..ServeOptions::default()
    };
    let handle = serve(Arc::new(mock), &format!("{}:{}", a.host, a.port), opts).map_err(runtime)?;
    println!("listening on {}", handle.url());
    std::io::stdout().flush().map_err(runtime)?;
    handle.join();
    Ok(())
}
