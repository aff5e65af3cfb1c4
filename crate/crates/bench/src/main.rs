use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use surf_core::discovery::Importance;
use surf_core::surrogates::{self, MlpSharing, SurrogateSpec, SurrogateTag};

use surf_bench::bundle::{read_bundle, write_bundle};
use surf_bench::manifest::{self, check_roundtrip, Manifest, EXPORT_TOLERANCE};
use surf_bench::pipeline::{self, evaluate_bundle, fit_explanation, FitOptions, MethodSpec};
use surf_bench::report_io::{self, sanity_text, stamp, write_csv, write_json};
use surf_bench::sweep::{run_sweep, write_sweep};
use surf_bench::synthetic::{gen_synthetic, SynthConfig};
use surf_bench::{BenchError, Result};

#[derive(Parser)]
#[command(name = "surf", version, about = "Concept-explanation faithfulness toolkit")]
struct Cli {
    /// Base seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file or directory (depends on the command).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Repeat for more log output on stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic head with train and test embeddings.
    Gen(GenArgs),
    /// Fit an explanation on a training manifest and write a bundle.
    Fit(FitArgs),
    /// Evaluate surrogates on a test manifest.
    Eval(EvalArgs),
    /// Perfect / rand-imp / full-rand comparison.
    Sanity(SanityArgs),
    /// Evaluate one method over a list of concept counts.
    Sweep(SweepArgs),
    /// Print surrogate inference FLOPs (or learnt parameters).
    Flops(FlopsArgs),
    /// Recompute a manifest's reference logits from its head and embeddings.
    Check(CheckArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 101)]
    classes: usize,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 20)]
    per_class: usize,
    #[arg(long, default_value_t = 20)]
    test_per_class: usize,
    #[arg(long, default_value_t = 1.0)]
    mean_scale: f64,
    #[arg(long, default_value_t = 0.3)]
    noise: f64,
    /// Keep negative embedding entries.
    #[arg(long)]
    no_rectify: bool,
}

#[derive(Args, Clone)]
struct FitOpts {
    /// Subspace dimension for mcd-lite.
    #[arg(long, default_value_t = 2)]
    subspace_dim: usize,
    /// Global pool size for cshap-lite.
    #[arg(long, default_value_t = 100)]
    pool_size: usize,
    /// head-projection, gradient, sobol or shapley.
    #[arg(long)]
    importance: Option<String>,
    #[arg(long, default_value_t = 200)]
    sae_epochs: usize,
    #[arg(long, default_value_t = 200)]
    permutations: usize,
}

impl FitOpts {
    fn options(&self) -> Result<FitOptions> {
        Ok(FitOptions {
            subspace_dim: self.subspace_dim,
            pool_size: self.pool_size,
            importance: self.importance.as_deref().map(str::parse::<Importance>).transpose()?,
            sae_epochs: self.sae_epochs,
            shapley_permutations: self.permutations,
        })
    }
}

#[derive(Args, Clone)]
struct SurrogateOpts {
    /// Comma-separated: surf, ice-eval, cshap-eval-cel, cshap-eval-l1.
    #[arg(long, default_value = "surf,ice-eval")]
    surrogates: String,
    /// shared or per-class reconstruction MLPs for cshap-eval.
    #[arg(long, default_value = "shared")]
    mlp_sharing: String,
    /// Override the cshap-eval training epochs.
    #[arg(long)]
    cshap_epochs: Option<usize>,
}

impl SurrogateOpts {
    fn specs(&self) -> Result<Vec<SurrogateSpec>> {
        let sharing = match self.mlp_sharing.as_str() {
            "shared" => MlpSharing::Shared,
            "per-class" => MlpSharing::PerClass,
            other => return Err(BenchError::Usage(format!("unknown MLP sharing `{other}`"))),
        };
        split_list(&self.surrogates)
            .map(|s| {
                let mut spec = SurrogateSpec::parse(s, sharing)?;
                if let (SurrogateSpec::CshapEval(cfg), Some(e)) = (&mut spec, self.cshap_epochs) {
                    cfg.train.max_epochs = e;
                }
                Ok(spec)
            })
            .collect()
    }
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    method: String,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[command(flatten)]
    fit: FitOpts,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Evaluate a bundle written by `fit` instead of fitting here.
    #[arg(long, conflicts_with = "methods")]
    bundle: Option<PathBuf>,
    /// Comma-separated discovery methods (or `oracle`).
    #[arg(long)]
    methods: Option<String>,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[command(flatten)]
    fit: FitOpts,
    #[command(flatten)]
    surrogate: SurrogateOpts,
}

#[derive(Args)]
struct SanityArgs {
    /// Evaluation data.
    #[arg(long)]
    manifest: PathBuf,
    /// Data for trainable surrogates; defaults to the evaluation data.
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    seeds: usize,
    #[command(flatten)]
    surrogate: SurrogateOpts,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, default_value = "mcd-lite")]
    method: String,
    #[arg(long, default_value = "1,2,4,8,16,32")]
    ks: String,
    #[command(flatten)]
    fit: FitOpts,
}

#[derive(Args)]
struct FlopsArgs {
    #[arg(long)]
    surrogate: String,
    #[arg(long)]
    k: u64,
    #[arg(long)]
    c: Option<u64>,
    #[arg(long)]
    d: Option<u64>,
    #[arg(long, default_value_t = surrogates::DEFAULT_HIDDEN as u64)]
    hidden: u64,
    /// Print learnt parameters of one reconstruction MLP instead.
    #[arg(long)]
    params: bool,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = EXPORT_TOLERANCE)]
    tol: f64,
}

fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty())
}

fn out_path(cli: &Cli, default: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn need<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| BenchError::Usage(format!("--{flag} is required here")))
}

fn gen(cli: &Cli, a: &GenArgs) -> Result<()> {
    let cfg = SynthConfig {
        classes: a.classes,
        dim: a.dim,
        per_class: a.per_class,
        test_per_class: a.test_per_class,
        mean_scale: a.mean_scale,
        noise: a.noise,
        rectify: !a.no_rectify,
        ..SynthConfig::default()
    };
    let s = gen_synthetic(&cfg, cli.seed)?;
    let smallest = (0..cfg.classes).map(|c| (s.train.members(c).len(), c)).min();
    match smallest {
        // discovery needs at least K predicted members in every class
        Some((n, c)) if n < 5 => tracing::warn!("training class {c} has only {n} predicted members"),
        Some((n, c)) => tracing::info!("smallest training class is {c} with {n} predicted members"),
        None => {}
    }
    let dir = out_path(cli, "data");
    let prov = format!(
        "synthetic C={} D={} n={}/{} noise={} seed={}",
        cfg.classes, cfg.dim, cfg.per_class, cfg.test_per_class, cfg.noise, cli.seed
    );
    let ytr = s.head.forward(s.train.embeddings.view())?;
    let yte = s.head.forward(s.test.embeddings.view())?;
    let tr = manifest::save(&dir, "train", &s.head, &s.train, Some(&ytr), &prov)?;
    let te = manifest::save(&dir, "test", &s.head, &s.test, Some(&yte), &prov)?;
    println!("{}\n{}", tr.display(), te.display());
    Ok(())
}

fn fit(cli: &Cli, a: &FitArgs) -> Result<()> {
    let train = Manifest::load(&a.manifest)?;
    let method: MethodSpec = a.method.parse()?;
    let bundle = fit_explanation(method, a.k, &a.fit.options()?, cli.seed, &train.data, &train.head)?;
    let dir = out_path(cli, "bundle");
    write_bundle(&dir, &bundle)?;
    println!("{}", dir.display());
    Ok(())
}

fn write_reports(cli: &Cli, mut reports: Vec<surf_core::report::EvalReport>) -> Result<()> {
    stamp(&mut reports);
    match &cli.out {
        Some(p) => {
            write_json(p, &reports)?;
            write_csv(&p.with_extension("csv"), &reports)?;
            println!("{}", p.display());
        }
        None => print!("{}", report_io::reports_csv(&reports)),
    }
    Ok(())
}

fn eval(cli: &Cli, a: &EvalArgs) -> Result<()> {
    let train = Manifest::load(&a.train)?;
    let test = Manifest::load(&a.test)?;
    let specs = a.surrogate.specs()?;
    let reports = match (&a.bundle, &a.methods) {
        (Some(dir), _) => {
            let b = read_bundle(dir)?;
            evaluate_bundle(&b, &train.data, &test.data, &test.head, &specs)?
        }
        (None, Some(m)) => {
            let methods = split_list(m).map(str::parse).collect::<Result<Vec<MethodSpec>>>()?;
            pipeline::run_benchmark(
                &train.data,
                &test.data,
                &train.head,
                &methods,
                a.k,
                &a.fit.options()?,
                &specs,
                cli.seed,
            )?
        }
        (None, None) => return Err(BenchError::Usage("eval needs --bundle or --methods".into())),
    };
    write_reports(cli, reports)
}

fn sanity(cli: &Cli, a: &SanityArgs) -> Result<()> {
    let eval = Manifest::load(&a.manifest)?;
    let train = match &a.train {
        Some(p) => Manifest::load(p)?,
        None => eval.clone(),
    };
    let specs = a.surrogate.specs()?;
    let mut table = pipeline::run_sanity(&eval.head, &train.data, &eval.data, &specs, a.seeds, cli.seed)?;
    stamp(&mut table.rows);
    let text = sanity_text(&table);
    print!("{text}");
    if let Some(p) = &cli.out {
        write_json(p, &table)?;
        write_csv(&p.with_extension("csv"), &table.rows)?;
        std::fs::write(p.with_extension("txt"), &text).map_err(|e| BenchError::io(p, e))?;
    }
    Ok(())
}

fn sweep(cli: &Cli, a: &SweepArgs) -> Result<()> {
    let train = Manifest::load(&a.train)?;
    let test = Manifest::load(&a.test)?;
    let ks = split_list(&a.ks)
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| BenchError::Usage(format!("bad K `{s}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    let method: MethodSpec = a.method.parse()?;
    let mut result = run_sweep(
        &train.data,
        &test.data,
        &train.head,
        method,
        &ks,
        &a.fit.options()?,
        cli.seed,
    )?;
    for p in &mut result.points {
        stamp(std::slice::from_mut(&mut p.report));
    }
    let dir = out_path(cli, "sweep");
    write_sweep(&dir, &mut result)?;
    for p in &result.points {
        println!(
            "K={:<4} surf_mae={:.6e} surf_emd={:.6e}",
            p.k,
            p.report.metric("surf_mae").unwrap_or(f64::NAN),
            p.report.metric("surf_emd").unwrap_or(f64::NAN)
        );
    }
    println!("{}", dir.display());
    match result.failure {
        Some(f) => Err(BenchError::Usage(format!(
            "sweep stopped early (partial results saved): {f}"
        ))),
        None => Ok(()),
    }
}

fn flops(a: &FlopsArgs) -> Result<()> {
    let tag: SurrogateTag = a.surrogate.parse()?;
    if a.params {
        let d = if tag == SurrogateTag::CshapEval {
            need(a.d, "d")?
        } else {
            a.d.unwrap_or(0)
        };
        println!("{}", surrogates::param_count(tag, a.k, d, a.hidden));
        return Ok(());
    }
    let c = need(a.c, "c")?;
    let d = match tag {
        SurrogateTag::Surf => a.d.unwrap_or(0),
        _ => need(a.d, "d")?,
    };
    println!("{}", surrogates::flops(tag, a.k, c, d, a.hidden));
    Ok(())
}

fn check(a: &CheckArgs) -> Result<()> {
    let loaded = Manifest::load(&a.manifest)?;
    let rt = check_roundtrip(&loaded)?;
    println!(
        "rows={} max_abs_diff={:.3e} label_mismatches={}",
        rt.rows, rt.max_abs_diff, rt.label_mismatches
    );
    if rt.passes(a.tol) {
        Ok(())
    } else {
        Err(BenchError::Manifest {
            path: a.manifest.clone(),
            reason: format!("reference logits do not round-trip within {}", a.tol),
        })
    }
}

fn run(cli: &Cli) -> Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| BenchError::Internal(e.to_string()))?;
    }
    match &cli.command {
        Command::Gen(a) => gen(cli, a),
        Command::Fit(a) => fit(cli, a),
        Command::Eval(a) => eval(cli, a),
        Command::Sanity(a) => sanity(cli, a),
        Command::Sweep(a) => sweep(cli, a),
        Command::Flops(a) => flops(a),
        Command::Check(a) => check(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => tracing::Level::WARN,
        1 => tracing::Level::INFO,
        _ => tracing::Level::DEBUG,
    };
    tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .without_time()
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
