//! Command-line front end: corpus generation, keyframes, baselines, the full
//! pipeline, evaluation and comparison tables.
//!
//! Every command reads a [`CliConfig`] (`--config`, then flag overrides) and
//! writes JSON sidecars that embed the effective config and seed.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::CliConfig;
use crate::denoise::{AnalyticDenoiser, LinearGaussianPrior};
use crate::error::{Error, Result};
use crate::experiment::{compare, evaluate, run_method, run_seed, Corpus, ItemResult, Method};
use crate::latent::LatentVideo;
use crate::metrics::MetricReport;
use crate::pipeline::{generate_keyframes, RunConfig, RunTrace};
use crate::rng::NoiseSeed;
use crate::synthetic::{build_prior, CorpusSpec};
use crate::tensor_io::{read_latent, write_latent};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "diffuseslide",
    version,
    about = "High frame-rate refinement of video latents"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// JSON config file; flags below override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print results (and errors, on stderr) as JSON.
    #[arg(long, global = true)]
    pub json: bool,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub factor: Option<usize>,
    #[arg(long, global = true)]
    pub tau: Option<usize>,
    #[arg(long, global = true)]
    pub delta: Option<usize>,
    /// Re-injection iterations per step.
    #[arg(long = "m", global = true)]
    pub m_iters: Option<usize>,
    #[arg(long, global = true)]
    pub window: Option<usize>,
    #[arg(long, global = true)]
    pub stride: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of corpus items.
    #[arg(long, global = true)]
    pub seeds: Option<usize>,
    /// `analytic` or `host:port` of a denoiser server.
    #[arg(long, global = true)]
    pub denoiser: Option<String>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Draw a synthetic corpus (keyframes and ground truth per item).
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample new keyframe sequences from each item's first frame.
    Keyframes {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Linear-interpolation baseline.
    Interp {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full refinement pipeline.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Metrics for the outputs of one method.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory holding `item_NNNN_<method>.lvt` files.
        #[arg(long)]
        outputs: PathBuf,
        #[arg(long, default_value = "diffuseslide")]
        method: String,
        /// Report directory (defaults to `--outputs`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run direct, interp and diffuseslide on one corpus and rank them.
    Compare {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the analytic denoiser over TCP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7341")]
        listen: String,
    },
}

/// What a command reports back: a JSON summary and its human rendering.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub summary: Value,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestItem {
    pub index: usize,
    pub seed: u64,
    pub low: String,
    pub truth: Option<String>,
}

/// Corpus description written by `synth` and `keyframes`. Paths are relative
/// to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub source: String,
    pub config: CliConfig,
    pub corpus: CorpusSpec,
    pub gram_condition: f64,
    pub items: Vec<ManifestItem>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::invalid(format!("cannot read manifest {}: {e}", path.display())))?;
        let m: Manifest = serde_json::from_str(&text)?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((m, dir))
    }

    fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        write_json(&path, self)?;
        Ok(path)
    }
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(v)? + "\n")?;
    Ok(())
}

pub fn item_file(index: usize, what: &str) -> String {
    format!("item_{index:04}_{what}.lvt")
}

fn sidecar_file(index: usize, what: &str) -> String {
    format!("item_{index:04}_{what}.json")
}

/// File config with flag overrides applied, validated.
pub fn effective_config(g: &GlobalArgs) -> Result<CliConfig> {
    let mut c = match &g.config {
        Some(p) => CliConfig::load(p)?,
        None => CliConfig::default(),
    };
    macro_rules! over {
        ($($flag:ident => $field:ident),*) => {$(
            if let Some(v) = g.$flag.clone() {
                c.$field = v.into();
            }
        )*};
    }
    over!(factor => factor, tau => tau, delta => delta, m_iters => m_iters, seed => seed,
          seeds => n_videos, denoiser => denoiser);
    if let Some(t) = g.threads {
        c.threads = Some(t);
    }
    if let Some(w) = g.window {
        c.window = Some(w);
    }
    if let Some(s) = g.stride {
        c.stride = Some(s);
    }
    c.validate()?;
    Ok(c)
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let json = cli.global.json;
    match run(&cli) {
        Ok(out) => {
            if json {
                println!("{}", out.summary);
            } else {
                print!("{}", out.text);
            }
            EXIT_OK
        }
        Err(e) => {
            let code = exit_code(&e);
            if json {
                eprintln!(
                    "{}",
                    json!({"error": e.kind(), "message": e.to_string(), "exit_code": code})
                );
            } else {
                eprintln!("error: {e}");
            }
            code
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::Config(_) => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

/// Runs a parsed command, inside a capped worker pool when `threads` is set.
pub fn run(cli: &Cli) -> Result<Outcome> {
    let cfg = effective_config(&cli.global)?;
    match cfg.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("cannot build a {n}-thread pool: {e}")))?;
            pool.install(|| dispatch(&cli.command, &cfg))
        }
        None => dispatch(&cli.command, &cfg),
    }
}

fn dispatch(cmd: &Command, cfg: &CliConfig) -> Result<Outcome> {
    match cmd {
        Command::Synth { out } => cmd_synth(cfg, out),
        Command::Keyframes { manifest, out } => cmd_keyframes(cfg, manifest, out),
        Command::Interp { manifest, out } => cmd_method(cfg, Method::Interp, manifest, out),
        Command::Run { manifest, out } => cmd_method(cfg, Method::DiffuseSlide, manifest, out),
        Command::Eval {
            manifest,
            outputs,
            method,
            out,
        } => cmd_eval(cfg, manifest, outputs, &Method::parse(method)?, out.as_deref()),
        Command::Compare { out } => cmd_compare(cfg, out.as_deref()),
        Command::Serve { listen } => cmd_serve(cfg, listen),
    }
}

pub fn cmd_synth(cfg: &CliConfig, out: &Path) -> Result<Outcome> {
    let corpus = Corpus::generate(&cfg.corpus_spec())?;
    fs::create_dir_all(out)?;
    let mut items = Vec::new();
    for item in &corpus.items {
        let low = item_file(item.index, "low");
        let truth = item_file(item.index, "truth");
        write_latent(out.join(&low), &item.low)?;
        write_latent(out.join(&truth), &item.truth)?;
        items.push(ManifestItem {
            index: item.index,
            seed: item.seed.0,
            low,
            truth: Some(truth),
        });
    }
    let manifest = Manifest {
        source: "synth".into(),
        config: cfg.clone(),
        corpus: corpus.spec.clone(),
        gram_condition: corpus.prior.gram_condition(),
        items,
    };
    let path = manifest.write(out)?;
    Ok(Outcome {
        text: format!("wrote {} items to {}\n", manifest.items.len(), path.display()),
        summary: json!({"command": "synth", "manifest": path, "items": manifest.items.len()}),
    })
}

struct Loaded {
    manifest: Manifest,
    dir: PathBuf,
    prior: Arc<LinearGaussianPrior>,
}

fn load_manifest(path: &Path) -> Result<Loaded> {
    let (manifest, dir) = Manifest::load(path)?;
    let prior = Arc::new(build_prior(&manifest.corpus)?);
    Ok(Loaded { manifest, dir, prior })
}

fn item_run_config(cfg: &CliConfig, item_seed: u64) -> RunConfig {
    RunConfig {
        seed: run_seed(NoiseSeed(item_seed), cfg.seed).0,
        ..cfg.run_config()
    }
}

pub fn cmd_keyframes(cfg: &CliConfig, manifest: &Path, out: &Path) -> Result<Outcome> {
    if !cfg.is_analytic() {
        return Err(Error::Unsupported(
            "keyframe generation needs the analytic prior-backed denoiser".into(),
        ));
    }
    let src = load_manifest(manifest)?;
    let plan = src.manifest.corpus.plan()?;
    let key_prior = Arc::new(src.prior.select_frames(&plan.keyframe_indices())?);
    let d = AnalyticDenoiser::new(Arc::clone(&key_prior), cfg.cond_precision, plan.n_keyframes())?;
    fs::create_dir_all(out)?;
    let mut items = Vec::new();
    for it in &src.manifest.items {
        let given = read_latent(src.dir.join(&it.low))?;
        let run = item_run_config(cfg, it.seed);
        let keys = generate_keyframes(&run, &d, &given.frame(0)?, plan.n_keyframes(), NoiseSeed(run.seed))?;
        let truth = src.prior.video(key_prior.coefficients(&keys)?.as_slice())?;
        let low = item_file(it.index, "keyframes");
        let truth_name = item_file(it.index, "keyframes_truth");
        write_latent(out.join(&low), &keys)?;
        write_latent(out.join(&truth_name), &truth)?;
        items.push(ManifestItem {
            index: it.index,
            seed: run.seed,
            low,
            truth: Some(truth_name),
        });
    }
    let manifest = Manifest {
        source: "keyframes".into(),
        config: cfg.clone(),
        corpus: src.manifest.corpus.clone(),
        gram_condition: src.manifest.gram_condition,
        items,
    };
    let path = manifest.write(out)?;
    Ok(Outcome {
        text: format!(
            "generated {} keyframe sequences, manifest {}\n",
            manifest.items.len(),
            path.display()
        ),
        summary: json!({"command": "keyframes", "manifest": path, "items": manifest.items.len()}),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RunSidecar {
    method: Method,
    index: usize,
    seed: u64,
    config: CliConfig,
    wall_ms: f64,
    trace: Option<RunTrace>,
}

pub fn cmd_method(cfg: &CliConfig, method: Method, manifest: &Path, out: &Path) -> Result<Outcome> {
    let src = load_manifest(manifest)?;
    let d = if method == Method::DiffuseSlide {
        Some(cfg.denoiser(&src.prior)?)
    } else {
        None
    };
    fs::create_dir_all(out)?;
    let mut rounds = 0;
    let mut lines = String::new();
    for it in &src.manifest.items {
        let low = read_latent(src.dir.join(&it.low))?;
        let run = item_run_config(cfg, it.seed);
        let res = run_method(method, &low, &run, d.as_deref(), &src.prior)?;
        write_latent(out.join(item_file(it.index, method.name())), &res.video)?;
        if let Some(t) = &res.trace {
            rounds += t.total_denoise_rounds;
        }
        write_json(
            &out.join(sidecar_file(it.index, method.name())),
            &RunSidecar {
                method,
                index: it.index,
                seed: run.seed,
                config: cfg.clone(),
                wall_ms: res.wall_ms,
                trace: res.trace,
            },
        )?;
        lines += &format!(
            "item {:>4}: {} frames, {:.1} ms\n",
            it.index,
            res.video.frames(),
            res.wall_ms
        );
    }
    let n = src.manifest.items.len();
    Ok(Outcome {
        text: lines + &format!("{} outputs written to {}\n", method.name(), out.display()),
        summary: json!({"command": method.name(), "out": out, "items": n, "denoise_rounds": rounds}),
    })
}

/// One line of the `eval` report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRecord {
    pub method: Method,
    pub index: usize,
    pub seed: u64,
    pub factor: usize,
    pub wall_ms: Option<f64>,
    pub report: MetricReport,
    pub config: CliConfig,
}

pub const EVAL_CSV_HEADER: &str = "seed,factor,psnr_keyframes,ssim_keyframes,psnr_vs_truth,manifold_residual,wall_ms";

fn csv_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

pub fn cmd_eval(
    cfg: &CliConfig,
    manifest: &Path,
    outputs: &Path,
    method: &Method,
    out: Option<&Path>,
) -> Result<Outcome> {
    let src = load_manifest(manifest)?;
    let plan = src.manifest.corpus.plan()?;
    let out = out.unwrap_or(outputs);
    fs::create_dir_all(out)?;
    let mut records = Vec::new();
    for it in &src.manifest.items {
        let low = read_latent(src.dir.join(&it.low))?;
        let high = read_latent(outputs.join(item_file(it.index, method.name())))?;
        let truth = it.truth.as_ref().map(|t| read_latent(src.dir.join(t))).transpose()?;
        let report = evaluate(&low, &high, truth.as_ref(), Some(&src.prior), &plan, cfg.ssim_params())?;
        let sidecar: Option<RunSidecar> = fs::read_to_string(outputs.join(sidecar_file(it.index, method.name())))
            .ok()
            .and_then(|s| serde_json::from_str(&s).ok());
        records.push(EvalRecord {
            method: *method,
            index: it.index,
            seed: sidecar.as_ref().map_or(it.seed, |s| s.seed),
            factor: plan.factor(),
            wall_ms: sidecar.map(|s| s.wall_ms),
            report,
            config: cfg.clone(),
        });
    }
    let jsonl: String = records
        .iter()
        .map(|r| serde_json::to_string(r).map(|s| s + "\n"))
        .collect::<std::result::Result<_, _>>()?;
    let jsonl_path = out.join(format!("eval_{}.jsonl", method.name()));
    fs::write(&jsonl_path, jsonl)?;
    let mut csv = String::from(EVAL_CSV_HEADER) + "\n";
    let mut text = format!(
        "{:>6} {:>10} {:>10} {:>10} {:>12}\n",
        "item", "psnr_kf", "ssim_kf", "psnr_gt", "residual"
    );
    for r in &records {
        csv += &format!(
            "{},{},{},{},{},{},{}\n",
            r.seed,
            r.factor,
            r.report.psnr_keyframes,
            r.report.ssim_keyframes,
            csv_opt(r.report.psnr_vs_truth),
            csv_opt(r.report.manifold_residual),
            csv_opt(r.wall_ms)
        );
        text += &format!(
            "{:>6} {:>10.2} {:>10.4} {:>10.2} {:>12.3e}\n",
            r.index,
            r.report.psnr_keyframes,
            r.report.ssim_keyframes,
            r.report.psnr_vs_truth.unwrap_or(f64::NAN),
            r.report.manifold_residual.unwrap_or(f64::NAN)
        );
    }
    let csv_path = out.join(format!("eval_{}.csv", method.name()));
    fs::write(&csv_path, csv)?;
    Ok(Outcome {
        summary: json!({"command": "eval", "method": method, "jsonl": jsonl_path, "csv": csv_path, "records": records}),
        text,
    })
}

pub fn cmd_compare(cfg: &CliConfig, out: Option<&Path>) -> Result<Outcome> {
    let corpus = Corpus::generate(&cfg.corpus_spec())?;
    let d = cfg.denoiser(&corpus.prior)?;
    let cmp = compare(&corpus, &cfg.run_config(), d.as_ref(), &Method::ALL)?;
    let report = json!({
        "command": "compare",
        "config": cfg,
        "ranking": cmp.ranking,
        "items": cmp.items,
    });
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        write_json(&dir.join("compare.json"), &report)?;
        let mut csv = String::from("method,") + EVAL_CSV_HEADER + "\n";
        for r in &cmp.items {
            csv += &item_csv(r, cfg.factor);
        }
        fs::write(dir.join("compare.csv"), csv)?;
    }
    Ok(Outcome {
        text: cmp.table(),
        summary: report,
    })
}

fn item_csv(r: &ItemResult, factor: usize) -> String {
    format!(
        "{},{},{},{},{},{},{},{}\n",
        r.method.name(),
        r.seed,
        factor,
        r.report.psnr_keyframes,
        r.report.ssim_keyframes,
        csv_opt(r.report.psnr_vs_truth),
        csv_opt(r.report.manifold_residual),
        r.wall_ms
    )
}

pub fn cmd_serve(cfg: &CliConfig, listen: &str) -> Result<Outcome> {
    let prior = Arc::new(build_prior(&cfg.corpus_spec())?);
    let backend = Arc::new(AnalyticDenoiser::new(prior, cfg.cond_precision, cfg.capability)?);
    let listener = std::net::TcpListener::bind(listen)?;
    let handle = crate::remote::serve(listener, backend, Default::default())?;
    log::info!("serving analytic denoiser on {}", handle.address());
    eprintln!("listening on {}", handle.address());
    loop {
        std::thread::park();
    }
}

/// Reads an output tensor written by `interp` or `run`.
pub fn read_output(dir: &Path, index: usize, method: Method) -> Result<LatentVideo> {
    read_latent(dir.join(item_file(index, method.name())))
}
