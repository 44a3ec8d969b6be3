use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use liquidhike::config::{ConfigError, RunConfig};
use liquidhike::dataset::{read_dataset, write_dataset, DatasetError};
use liquidhike::eval::{
    frequency_shift_suite, hike_batch, renderer_shift_suite, rows_to_csv, run_single_target, single_target_batch,
    to_json_lines, AttemptLog, EvalConfig, HikeLog, NetworkPolicy, SuccessSummary, SuiteRow, TraceLog,
};
use liquidhike::expert::{generate_trajectory, sample_init, training_scene, InitMode, SamplingMode, Trajectory};
use liquidhike::nn::checkpoint::{load_checkpoint, save_checkpoint};
use liquidhike::nn::model::{PolicyModel, Variant};
use liquidhike::plots::{emit_plots, PlotError};
use liquidhike::scene::TargetColor;
use liquidhike::splat::{Renderer, RendererKind};
use liquidhike::train::fit;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_RUNTIME: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_CONFIG: u8 = 3;
const EXIT_MISSING_INPUT: u8 = 4;
const EXIT_EMPTY_RESULTS: u8 = 5;

/// Quadrotor hike navigation: expert data, CfC/LSTM training, closed-loop evaluation.
#[derive(Debug, Parser)]
#[command(name = "liquidhike", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Args)]
struct Global {
    /// TOML run configuration; omitted keys take built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config file and LIQUIDHIKE_SEED).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Single-threaded, fixed-order execution.
    #[arg(long, global = true, default_value_t = false)]
    deterministic: bool,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Inspect the configuration.
    Config {
        /// Print the full default configuration as TOML.
        #[arg(long, default_value_t = false)]
        print_defaults: bool,
    },
    /// Generate expert trajectories into <output_dir>/data.
    GenData {
        /// Number of trajectories [default: expert.n_traj].
        #[arg(long)]
        n_traj: Option<usize>,
        /// `irregular` or `fixed:<hz>` [default: expert.mode].
        #[arg(long)]
        mode: Option<SamplingMode>,
        /// full-window | half-window | uniform | corner [default: expert.init.mode].
        #[arg(long)]
        init_mode: Option<InitMode>,
        /// plain | splat [default: expert.renderer].
        #[arg(long)]
        renderer: Option<String>,
    },
    /// Train a policy on a generated dataset.
    Train {
        /// Dataset directory [default: <output_dir>/data].
        #[arg(long)]
        data: Option<PathBuf>,
        /// liquid | liquid-fixed | lstm | lstm-dt [default: model.variant].
        #[arg(long)]
        variant: Option<Variant>,
        /// Sequence-phase epochs [default: train.epochs].
        #[arg(long)]
        epochs: Option<usize>,
        /// Checkpoint path [default: <output_dir>/model.ckpt].
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Single-target success rate.
    EvalSingle(EvalArgs),
    /// Target-in-corner recovery suite.
    EvalCorner(EvalArgs),
    /// Hike length over generated courses.
    EvalHike {
        #[command(flatten)]
        eval: EvalArgs,
        /// Targets per course [default: eval.hike_targets].
        #[arg(long)]
        steps: Option<usize>,
        /// Number of courses [default: eval.courses].
        #[arg(long)]
        courses: Option<usize>,
    },
    /// Frequency- or renderer-shift table over several checkpoints.
    EvalShift {
        /// Checkpoints to compare (repeatable).
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
        /// frequency | renderer
        #[arg(long, default_value = "frequency")]
        kind: String,
        /// Inference rates for the frequency suite.
        #[arg(long, value_delimiter = ',', default_value = "3,9")]
        rates: Vec<f64>,
        /// Attempts per cell [default: eval.attempts].
        #[arg(long)]
        attempts: Option<usize>,
    },
    /// Render sample frames as PPM images.
    RenderPreview {
        /// plain | splat
        #[arg(long, default_value = "plain")]
        renderer: String,
        /// red | blue
        #[arg(long, default_value = "red")]
        color: String,
        /// Number of frames.
        #[arg(long, default_value_t = 4)]
        count: usize,
    },
    /// Emit SVG plots and CSV tables from result JSON lines.
    Plot {
        /// Results directory [default: <output_dir>/results].
        #[arg(long)]
        results: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Model checkpoint [default: <output_dir>/model.ckpt].
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Decision rate in Hz [default: eval.inference_hz].
    #[arg(long)]
    inference_hz: Option<f64>,
    /// plain | splat
    #[arg(long, default_value = "plain")]
    renderer: String,
    /// Attempts [default: eval.attempts].
    #[arg(long)]
    attempts: Option<usize>,
    /// Also store the first N rollouts as traces for XY plots.
    #[arg(long, default_value_t = 0)]
    traces: usize,
}

/// Input the command needs is absent.
#[derive(Debug, thiserror::Error)]
#[error("missing input: {0}")]
struct MissingInput(String);

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return EXIT_CONFIG;
        }
        if cause.is::<MissingInput>() {
            return EXIT_MISSING_INPUT;
        }
        if let Some(PlotError::Empty(_)) = cause.downcast_ref::<PlotError>() {
            return EXIT_EMPTY_RESULTS;
        }
        if let Some(DatasetError::Io { source, .. }) = cause.downcast_ref::<DatasetError>() {
            if source.kind() == std::io::ErrorKind::NotFound {
                return EXIT_MISSING_INPUT;
            }
        }
    }
    EXIT_RUNTIME
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            report("usage", &e.kind().to_string(), EXIT_USAGE);
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            let kind = match code {
                EXIT_CONFIG => "config",
                EXIT_MISSING_INPUT => "missing-input",
                EXIT_EMPTY_RESULTS => "empty-results",
                _ => "runtime",
            };
            report(kind, &format!("{e:#}"), code);
            ExitCode::from(code)
        }
    }
}

/// One JSON object on stderr describing the failure.
fn report(kind: &str, message: &str, code: u8) {
    eprintln!("{}", serde_json::json!({ "error": kind, "message": message, "exit_code": code }));
}

fn load_config(g: &Global) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Ok(s) = std::env::var("LIQUIDHIKE_SEED") {
        cfg.master_seed = s
            .trim()
            .parse()
            .map_err(|_| ConfigError::Invalid(format!("LIQUIDHIKE_SEED={s:?} is not an unsigned integer")))?;
    }
    if let Some(s) = g.seed {
        cfg.master_seed = s;
    }
    if let Some(d) = &g.output_dir {
        cfg.output_dir = d.clone();
    }
    Ok(cfg)
}

fn setup_threads(g: &Global) -> Result<()> {
    let n = if g.deterministic { 1 } else { g.threads };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the worker pool")
}

fn run(cli: Cli) -> Result<()> {
    setup_threads(&cli.global)?;
    if let Cmd::Config { print_defaults } = &cli.cmd {
        if *print_defaults {
            print!("{}", RunConfig::default().to_toml());
        } else {
            print!("{}", load_config(&cli.global)?.to_toml());
        }
        return Ok(());
    }
    let cfg = load_config(&cli.global)?;
    std::fs::create_dir_all(&cfg.output_dir).with_context(|| format!("creating {}", cfg.output_dir.display()))?;
    match cli.cmd {
        Cmd::Config { .. } => unreachable!(),
        Cmd::GenData {
            n_traj,
            mode,
            init_mode,
            renderer,
        } => {
            let mut cfg = cfg;
            if let Some(n) = n_traj {
                cfg.expert.n_traj = n;
            }
            if let Some(m) = mode {
                cfg.expert.mode = m;
            }
            if let Some(m) = init_mode {
                cfg.expert.init.mode = m;
            }
            if let Some(r) = renderer {
                cfg.expert.renderer = parse_renderer(&r)?;
            }
            cfg.validate()?;
            gen_data(&cfg)
        }
        Cmd::Train {
            data,
            variant,
            epochs,
            checkpoint,
        } => {
            let mut cfg = cfg;
            if let Some(v) = variant {
                cfg.model.variant = v;
            }
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            cfg.validate()?;
            let data = data.unwrap_or_else(|| cfg.output_dir.join("data"));
            let ckpt = checkpoint.unwrap_or_else(|| cfg.output_dir.join("model.ckpt"));
            train(&cfg, &data, &ckpt)
        }
        Cmd::EvalSingle(a) => eval_single(&cfg, &a, InitMode::FullWindow, "single"),
        Cmd::EvalCorner(a) => eval_single(&cfg, &a, InitMode::Corner, "corner"),
        Cmd::EvalHike { eval, steps, courses } => eval_hike(&cfg, &eval, steps, courses),
        Cmd::EvalShift {
            checkpoints,
            kind,
            rates,
            attempts,
        } => eval_shift(&cfg, &checkpoints, &kind, &rates, attempts),
        Cmd::RenderPreview { renderer, color, count } => render_preview(&cfg, &renderer, &color, count),
        Cmd::Plot { results } => {
            let dir = results.unwrap_or_else(|| cfg.output_dir.join("results"));
            if !dir.is_dir() {
                return Err(MissingInput(format!("results directory {}", dir.display())).into());
            }
            let files = emit_plots(&dir, &cfg.output_dir.join("plots"))?;
            for f in files {
                println!("{}", f.display());
            }
            Ok(())
        }
    }
}

fn parse_renderer(s: &str) -> Result<RendererKind> {
    RendererKind::parse(s).with_context(|| format!("unknown renderer {s:?} (expected plain or splat)"))
}

fn write(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    if let Some(p) = path.parent() {
        std::fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))?;
    }
    std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn gen_data(cfg: &RunConfig) -> Result<()> {
    let req = cfg.gen_request();
    let trajs: Vec<Trajectory> = (0..cfg.expert.n_traj)
        .into_par_iter()
        .map(|i| generate_trajectory(&req, i))
        .collect::<Result<_, _>>()?;
    let dir = cfg.output_dir.join("data");
    let manifest = write_dataset(&dir, &trajs)?;
    let frames: usize = trajs.iter().map(|t| t.len()).sum();
    log::info!("wrote {} trajectories ({frames} frames) to {}", manifest.trajectories.len(), dir.display());
    write(&cfg.output_dir.join("config.toml"), cfg.to_toml())
}

fn train(cfg: &RunConfig, data: &Path, ckpt: &Path) -> Result<()> {
    if !data.join("manifest.json").is_file() {
        return Err(MissingInput(format!("dataset manifest in {}", data.display())).into());
    }
    let (_, trajs) = read_dataset(data)?;
    let mut mcfg = cfg.model.clone();
    mcfg.init_seed = mcfg.init_seed.wrapping_add(cfg.master_seed);
    let mut tcfg = cfg.train;
    tcfg.seed = tcfg.seed.wrapping_add(cfg.master_seed);
    let mut model = PolicyModel::<f32>::new(&mcfg)?;
    log::info!("training {} ({} params) on {} trajectories", mcfg.variant, model.param_count(), trajs.len());
    let mut lines = String::new();
    let rep = fit(&mut model, &trajs, &tcfg, |e| {
        let line = serde_json::to_string(e).expect("epoch log serialises");
        log::info!("{line}");
        lines.push_str(&line);
        lines.push('\n');
    })?;
    write(&cfg.output_dir.join("train_log.jsonl"), lines)?;
    let meta = vec![
        ("best_epoch".to_string(), rep.best_epoch.to_string()),
        ("best_val_mse".to_string(), rep.best_val.to_string()),
        ("train_windows".to_string(), rep.train_windows.to_string()),
        ("batches_per_epoch".to_string(), rep.batches_per_epoch.to_string()),
        ("master_seed".to_string(), cfg.master_seed.to_string()),
        ("data".to_string(), data.display().to_string()),
    ];
    write(ckpt, save_checkpoint(&model, &meta)?)?;
    log::info!("best epoch {} val mse {:.6}; checkpoint {}", rep.best_epoch, rep.best_val, ckpt.display());
    Ok(())
}

fn load_model(cfg: &RunConfig, path: Option<&PathBuf>) -> Result<(String, PolicyModel<f32>)> {
    let path = path.cloned().unwrap_or_else(|| cfg.output_dir.join("model.ckpt"));
    if !path.is_file() {
        return Err(MissingInput(format!("checkpoint {}", path.display())).into());
    }
    let bytes = std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
    let ck = load_checkpoint(&bytes).with_context(|| format!("loading {}", path.display()))?;
    let (h, w) = ck.model.input_hw();
    if (h, w) != (cfg.scene.camera.height, cfg.scene.camera.width) {
        bail!("checkpoint expects {w}x{h} frames but the camera renders {}x{}", cfg.scene.camera.width, cfg.scene.camera.height);
    }
    let name = path.file_stem().map_or_else(|| "model".to_string(), |s| s.to_string_lossy().into_owned());
    Ok((name, ck.model))
}

fn eval_config(cfg: &RunConfig, a: &EvalArgs) -> Result<EvalConfig> {
    let mut ev = cfg.eval;
    if let Some(hz) = a.inference_hz {
        ev.inference_hz = hz;
    }
    if let Some(n) = a.attempts {
        ev.attempts = n;
    }
    ev.validate(&cfg.sim)?;
    Ok(ev)
}

fn eval_single(cfg: &RunConfig, a: &EvalArgs, init: InitMode, suite: &str) -> Result<()> {
    let (name, model) = load_model(cfg, a.checkpoint.as_ref())?;
    let ev = eval_config(cfg, a)?;
    let kind = parse_renderer(&a.renderer)?;
    let h = cfg.harness(&ev);
    let limits = cfg.sim.limits;
    let logs = single_target_batch(&h, || NetworkPolicy::new(&model, limits), &name, suite, kind, init, ev.attempts, cfg.master_seed)?;
    let results = cfg.output_dir.join("results");
    write(&results.join(format!("{suite}_{name}_{}_{}hz.jsonl", kind.name(), ev.inference_hz)), to_json_lines(&logs))?;
    if a.traces > 0 {
        let traces: Vec<TraceLog> = (0..a.traces)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(liquidhike::expert::trajectory_seed(cfg.master_seed, i, 3));
                let color = if i % 2 == 0 { TargetColor::Red } else { TargetColor::Blue };
                let mut p = NetworkPolicy::new(&model, limits);
                let rec = run_single_target(&h, &mut p, color, kind, init, &mut rng)?;
                Ok(TraceLog {
                    model: name.clone(),
                    label: format!("{suite} #{i} {} {:?}", color.name(), rec.outcome),
                    trace: rec.trace,
                })
            })
            .collect::<Result<_, liquidhike::eval::EvalError>>()?;
        write(&results.join(format!("traces_{suite}_{name}.jsonl")), to_json_lines(&traces))?;
    }
    print_summary(&name, &SuccessSummary::from_logs(&logs));
    Ok(())
}

fn print_summary(name: &str, s: &SuccessSummary) {
    println!(
        "{}",
        serde_json::json!({
            "model": name,
            "attempts": s.attempts,
            "success_rate": s.rate(),
            "red_rate": s.red_rate(),
            "blue_rate": s.blue_rate(),
            "outcomes": s.outcomes,
        })
    );
}

fn eval_hike(cfg: &RunConfig, a: &EvalArgs, steps: Option<usize>, courses: Option<usize>) -> Result<()> {
    let (name, model) = load_model(cfg, a.checkpoint.as_ref())?;
    let ev = eval_config(cfg, a)?;
    let kind = parse_renderer(&a.renderer)?;
    let h = cfg.harness(&ev);
    let limits = cfg.sim.limits;
    let n = steps.unwrap_or(ev.hike_targets);
    let courses = courses.unwrap_or(ev.courses);
    let res = hike_batch(&h, || NetworkPolicy::new(&model, limits), n, kind, courses, cfg.master_seed)?;
    let logs: Vec<HikeLog> = res
        .iter()
        .enumerate()
        .map(|(c, r)| HikeLog {
            model: name.clone(),
            renderer: kind,
            inference_hz: ev.inference_hz,
            course: c,
            completed: r.completed,
        })
        .collect();
    let results = cfg.output_dir.join("results");
    write(&results.join(format!("hike_{name}_{}_{}hz.jsonl", kind.name(), ev.inference_hz)), to_json_lines(&logs))?;
    if a.traces > 0 {
        let traces: Vec<TraceLog> = res
            .iter()
            .take(a.traces)
            .enumerate()
            .map(|(c, r)| TraceLog {
                model: name.clone(),
                label: format!("course {c}: {} targets", r.completed),
                trace: r.records.iter().flat_map(|rec| rec.trace.iter().copied()).collect(),
            })
            .collect();
        write(&results.join(format!("traces_hike_{name}.jsonl")), to_json_lines(&traces))?;
    }
    let lengths: Vec<usize> = logs.iter().map(|l| l.completed).collect();
    let mean = lengths.iter().sum::<usize>() as f64 / lengths.len().max(1) as f64;
    println!("{}", serde_json::json!({ "model": name, "hike_lengths": lengths, "mean": mean }));
    Ok(())
}

fn eval_shift(cfg: &RunConfig, paths: &[PathBuf], kind: &str, rates: &[f64], attempts: Option<usize>) -> Result<()> {
    let models: Vec<(String, PolicyModel<f32>)> = paths.iter().map(|p| load_model(cfg, Some(p))).collect::<Result<_>>()?;
    let refs: Vec<(String, &PolicyModel<f32>)> = models.iter().map(|(n, m)| (n.clone(), m)).collect();
    let n = attempts.unwrap_or(cfg.eval.attempts);
    let h = cfg.harness(&cfg.eval);
    let (logs, rows): (Vec<AttemptLog>, Vec<SuiteRow>) = match kind {
        "frequency" => frequency_shift_suite(&h, &refs, rates, RendererKind::Plain, n, cfg.master_seed)?,
        "renderer" => renderer_shift_suite(&h, &refs, &[RendererKind::Plain, RendererKind::Splat], n, cfg.master_seed)?,
        other => bail!("unknown shift kind {other:?} (expected frequency or renderer)"),
    };
    let results = cfg.output_dir.join("results");
    write(&results.join(format!("shift_{kind}.jsonl")), to_json_lines(&logs))?;
    let table = rows_to_csv(&rows)?;
    write(&cfg.output_dir.join(format!("shift_{kind}.csv")), &table)?;
    print!("{table}");
    Ok(())
}

fn render_preview(cfg: &RunConfig, renderer: &str, color: &str, count: usize) -> Result<()> {
    let kind = parse_renderer(renderer)?;
    let color = TargetColor::parse(color).with_context(|| format!("unknown color {color:?} (expected red or blue)"))?;
    let scene = training_scene(color, &cfg.scene.target);
    let r = Renderer::for_scene(kind, &scene, &cfg.splat.style, &cfg.splat.render);
    let dir = cfg.output_dir.join("preview");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.master_seed);
    for i in 0..count {
        let state = sample_init(&cfg.expert.init, &mut rng);
        let img = r.render(&scene, &state, &cfg.scene.camera);
        let mut buf = Vec::new();
        img.write_ppm(&mut buf)?;
        let p = dir.join(format!("{}_{}_{i:02}.ppm", kind.name(), color.name()));
        write(&p, buf)?;
        println!("{}", p.display());
    }
    Ok(())
}
