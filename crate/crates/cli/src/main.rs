use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context as _, Result};
use clap::{Args, Parser, Subcommand};

use pdlab::config::{apply_overrides, emit_config, parse_config, short_hash};
use pdlab::datagen::TruthKind;
use pdlab::harness::{sweep, ExperimentConfig, SweepReport, Variant, FULL_EVAL};
use pdlab::metrics::{weight_pairs_export, write_weight_pairs};
use pdlab::nnet::{checkpoint, Network};
use pdlab::plot::render_figures;
use pdlab::report::{self, create_file, read_sweep_csv, run_dir, write_text, RunManifest};
use pdlab::stream::FULL_EXAMPLES;

#[derive(Parser)]
#[command(name = "pdlab", version, about = "Paired-training laboratory for prediction differences")]
struct Cli {
    /// Upper bound on worker threads (default: all cores).
    #[arg(long, global = true, env = "PDLAB_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a ground truth and save it.
    Truth {
        #[arg(long, default_value = "linear")]
        kind: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one experiment.
    Run(RunArgs),
    /// Run every variant at every window size.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated log2 z values.
        #[arg(long, value_delimiter = ',', required = true)]
        log2z: Vec<u32>,
        /// Overrides defining one variant, as `key=value;key=value`.
        /// Repeat for several variants; without any, the config itself is
        /// the only variant.
        #[arg(long)]
        variant: Vec<String>,
    },
    /// Warm-start protocol: train (or load) a teacher, then warm and cold
    /// pairs side by side.
    Warmstart {
        #[command(flatten)]
        run: RunArgs,
        /// Teacher checkpoint; trained from the config when absent.
        #[arg(long)]
        teacher: Option<PathBuf>,
        #[arg(long)]
        lr_ratio: Option<f64>,
        /// Skip the cold-start comparison.
        #[arg(long)]
        no_cold: bool,
    },
    /// Draw figures from a sweep table.
    Plot {
        #[arg(long)]
        sweep: PathBuf,
        /// Output directory; defaults to the table's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export side-by-side parameters of two checkpoints.
    InspectWeights {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Clone)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding `stream.master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Root directory for run outputs.
    #[arg(long, env = report::OUT_ROOT_ENV)]
    out_root: Option<PathBuf>,
    /// Full-scale stream, evaluation set and pair count.
    #[arg(long)]
    full_scale: bool,
    /// Save every trained network.
    #[arg(long)]
    checkpoints: bool,
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                parse_config(&text).with_context(|| format!("in {}", p.display()))?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.stream.master_seed = s;
        }
        if self.full_scale {
            cfg.stream.total_examples = FULL_EXAMPLES;
            cfg.eval_size = FULL_EVAL;
            cfg.pairs = 16;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

fn save_checkpoints(dir: &Path, report: &SweepReport) -> Result<()> {
    let dir = dir.join("checkpoints");
    fs::create_dir_all(&dir)?;
    for exp in &report.experiments {
        let stem = format!("{}-z{}", slug(&exp.row.variant), exp.config.stream.log2_z);
        for (p, (a, b)) in exp.pairs.iter().zip(&exp.networks) {
            checkpoint::save(a, &dir.join(format!("{stem}-p{}-a.ckpt", p.pair_index)))?;
            checkpoint::save(b, &dir.join(format!("{stem}-p{}-b.ckpt", p.pair_index)))?;
        }
        if let Some(t) = &exp.teacher {
            checkpoint::save(t, &dir.join(format!("{}-teacher.ckpt", slug(&exp.row.variant))))?;
        }
    }
    Ok(())
}

/// Runs `variants` over `zs` and writes the full set of outputs.
fn execute(args: &RunArgs, identity: &str, seed: u64, variants: &[Variant], zs: &[u32]) -> Result<PathBuf> {
    let hash = short_hash(identity);
    let dir = run_dir(args.out_root.as_deref(), &hash, seed);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    write_text(&dir.join("config.cfg"), identity)?;
    let mut manifest = RunManifest::new(&hash, seed);
    log::info!("writing to {}", dir.display());

    let report = sweep(variants, zs)?;
    manifest.record(&report.experiments);
    report::write_pairs_csv(&report.experiments, create_file(&dir.join("pairs.csv"))?)?;
    report::write_sweep_csv(&report.rows, create_file(&dir.join("sweep.csv"))?)?;
    for (name, svg) in render_figures(&report.rows, Some(&hash)) {
        write_text(&dir.join(name), &svg)?;
    }
    if args.checkpoints {
        save_checkpoints(&dir, &report)?;
    }
    manifest.finish();
    write_text(&dir.join("manifest.txt"), &manifest.to_text())?;
    for r in &report.rows {
        println!(
            "{}\tlog2z={}\tpd={:.4e}±{:.1e}\tloss={:.4e}±{:.1e}\tstuck={}/{}",
            r.variant, r.log2_z, r.mean_pd, r.se_pd, r.mean_loss, r.se_loss, r.stuck, r.completed
        );
    }
    println!("{}", dir.display());
    Ok(dir)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Truth { kind, seed, out } => {
            let truth_kind = TruthKind::parse(&kind)
                .with_context(|| format!("unknown truth kind `{kind}`"))?;
            let mut cfg = ExperimentConfig {
                truth_kind,
                ..ExperimentConfig::default()
            };
            cfg.stream.master_seed = seed;
            cfg.truth()?.save(&out)?;
            println!("{}", out.display());
        }
        Command::Run(args) => {
            let cfg = args.config()?;
            let identity = emit_config(&cfg);
            let seed = cfg.stream.master_seed;
            let z = cfg.stream.log2_z;
            execute(&args, &identity, seed, &[Variant::new(cfg)], &[z])?;
        }
        Command::Sweep { run: args, log2z, variant } => {
            let base = args.config()?;
            let variants = if variant.is_empty() {
                vec![Variant::new(base.clone())]
            } else {
                variant
                    .iter()
                    .map(|v| {
                        apply_overrides(&base, v)
                            .map(Variant::new)
                            .with_context(|| format!("variant `{v}`"))
                    })
                    .collect::<Result<_>>()?
            };
            let mut zs = log2z.clone();
            zs.sort_unstable();
            zs.dedup();
            let mut identity = emit_config(&base);
            identity.push_str(&format!(
                "# log2z {}\n",
                zs.iter().map(|z| z.to_string()).collect::<Vec<_>>().join(",")
            ));
            for v in &variant {
                identity.push_str(&format!("# variant {v}\n"));
            }
            execute(&args, &identity, base.stream.master_seed, &variants, &zs)?;
        }
        Command::Warmstart { run: args, teacher, lr_ratio, no_cold } => {
            let mut cold = args.config()?;
            let mut ws = cold.warm_start.take().unwrap_or_default();
            if teacher.is_some() {
                ws.checkpoint = teacher;
            }
            if let Some(r) = lr_ratio {
                ws.lr_ratio = r;
            }
            let warm = ExperimentConfig {
                warm_start: Some(ws),
                ..cold.clone()
            };
            warm.validate()?;
            let mut variants = vec![Variant::new(warm.clone())];
            if !no_cold {
                variants.push(Variant::new(cold.clone()));
            }
            let identity = format!("{}# warmstart cold={}\n", emit_config(&warm), !no_cold);
            let z = cold.stream.log2_z;
            execute(&args, &identity, cold.stream.master_seed, &variants, &[z])?;
        }
        Command::Plot { sweep: path, out } => {
            let file = fs::File::open(&path).with_context(|| format!("opening {}", path.display()))?;
            let rows = read_sweep_csv(file)?;
            if rows.is_empty() {
                bail!("{} has no rows", path.display());
            }
            let dir = out.unwrap_or_else(|| path.parent().map(Path::to_path_buf).unwrap_or_default());
            let hash = dir
                .file_name()
                .and_then(|n| n.to_str())
                .and_then(|n| n.split("-s").next())
                .map(str::to_string);
            for (name, svg) in render_figures(&rows, hash.as_deref()) {
                let p = dir.join(name);
                write_text(&p, &svg)?;
                println!("{}", p.display());
            }
        }
        Command::InspectWeights { a, b, out } => {
            let na: Network<f64> = checkpoint::load(&a)?;
            let nb: Network<f64> = checkpoint::load(&b)?;
            let rows = weight_pairs_export(&na, &nb)?;
            write_weight_pairs(&rows, create_file(&out)?)?;
            let max = rows
                .iter()
                .map(|r| (r.value_a - r.value_b).abs())
                .fold(0.0, f64::max);
            println!("{} parameters, max |a-b| = {max:.3e}", rows.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
