use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pyramid_core::arch::{build_network, load_checkpoint, save_checkpoint, ArchKind, ExtractorKind};
use pyramid_core::harness::{
    compare_architectures, evaluate, run_principle_verification, sweep, train, ExperimentConfig, SweepAxis,
};
use pyramid_core::sim::{build_dataset, import_csv, load_dataset, save_dataset, CaseKind, Dataset, SplitName};
use pyramid_core::{Error, Result};
use serde_json::json;

const EVAL_SCHEMA_VERSION: u32 = 1;

/// Pyramid sequence networks for hysteretic response modelling.
#[derive(Parser)]
#[command(name = "pyramid", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a case and write a normalized dataset directory.
    GenData {
        /// boucwen, gmp_1..gmp_4 or brace_like.
        #[arg(long)]
        case: String,
        /// Train,valid,test sample counts.
        #[arg(long, value_delimiter = ',')]
        counts: Option<Vec<usize>>,
        /// Time steps per sample.
        #[arg(long)]
        length: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Import `<name>_input.csv` / `<name>_output.csv` pairs as a dataset.
    ImportCsv {
        #[arg(long)]
        from: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        counts: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one network and save its best-validation checkpoint.
    Train {
        /// Overrides `arch.kind` from the config.
        #[arg(long)]
        arch: Option<String>,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides both the initialisation and the batch-order seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Output MSE of a checkpoint on one split.
    Evaluate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Probe feature quality by depth with the separated network.
    VerifyPrinciple {
        #[arg(long, default_value = "lstm")]
        extractor: String,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Extractor depth; 3 unless the config sets one.
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Train one network per decay factor or architecture variant.
    Sweep {
        /// p (decay factor) or variant.
        #[arg(long)]
        axis: String,
        #[arg(long)]
        values: String,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        arch: Option<String>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Capacity-matched comparison over cases and seeds.
    Compare {
        #[arg(long, value_delimiter = ',', required = true)]
        archs: Vec<String>,
        /// Dataset directories or case names generated on the fly.
        #[arg(long, value_delimiter = ',', required = true)]
        cases: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Split counts for generated cases.
        #[arg(long, value_delimiter = ',')]
        counts: Option<Vec<usize>>,
        /// Series length for generated cases.
        #[arg(long)]
        length: Option<usize>,
        /// Simulation seed for generated cases.
        #[arg(long, default_value_t = 0)]
        data_seed: u64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn triple(v: &[usize]) -> Result<(usize, usize, usize)> {
    match *v {
        [a, b, c] => Ok((a, b, c)),
        _ => Err(Error::Config(format!("--counts needs train,valid,test; got {v:?}"))),
    }
}

fn counts_of(v: &Option<Vec<usize>>, case: CaseKind) -> Result<(usize, usize, usize)> {
    v.as_deref().map(triple).unwrap_or(Ok(case.default_counts()))
}

fn open_dataset(dir: &Path) -> Result<Dataset> {
    if !dir.is_dir() {
        return Err(Error::Config(format!("dataset directory {} does not exist", dir.display())));
    }
    load_dataset(dir)
}

fn load_config(path: &Option<PathBuf>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn fit(cfg: &mut ExperimentConfig, ds: &Dataset) {
    cfg.arch.d_in = ds.input_channels();
    cfg.arch.d_out = ds.output_channels();
}

fn emit(text: &str, path: &Option<PathBuf>) -> Result<()> {
    match path {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData {
            case,
            counts,
            length,
            seed,
            out,
        } => {
            let case: CaseKind = case.parse()?;
            let ds = build_dataset(case, counts_of(&counts, case)?, length.unwrap_or(case.default_length()), seed)?;
            save_dataset(&ds, &out)?;
            let (a, b, c) = ds.counts();
            eprintln!("{case}: {a}/{b}/{c} samples of length {} -> {}", ds.length(), out.display());
        }
        Command::ImportCsv { from, counts, seed, out } => {
            let ds = import_csv(&from, triple(&counts)?, seed)?;
            save_dataset(&ds, &out)?;
            eprintln!("imported {} samples -> {}", counts.iter().sum::<usize>(), out.display());
        }
        Command::Train {
            arch,
            dataset,
            config,
            seed,
            out,
            metrics,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(a) = arch {
                cfg.arch.kind = a.parse()?;
            }
            if let Some(s) = seed {
                cfg = cfg.with_seed(s);
            }
            let ds = open_dataset(&dataset)?;
            fit(&mut cfg, &ds);
            let mut net = build_network::<f64>(&cfg.arch)?;
            let m = train(net.as_mut(), &ds, &cfg.train)?;
            save_checkpoint(net.as_ref(), &out)?;
            eprintln!(
                "{} on {}: best epoch {}, valid {:.4e}, test {:.4e}, {} params, {:.1}s",
                m.arch, m.case, m.best_epoch, m.best_valid_loss, m.test_mse, m.param_count, m.wall_clock_seconds
            );
            emit(&m.to_json()?, &metrics)?;
        }
        Command::Evaluate {
            ckpt,
            dataset,
            split,
            out,
        } => {
            let split: SplitName = split.parse()?;
            let net = load_checkpoint::<f64>(&ckpt)?;
            let ds = open_dataset(&dataset)?;
            let mse = evaluate(net.as_ref(), ds.split(split))?;
            let doc = json!({
                "schema_version": EVAL_SCHEMA_VERSION,
                "arch": net.spec().kind.to_string(),
                "case": ds.case,
                "split": split.as_str(),
                "samples": ds.split(split).samples(),
                "mse": mse,
            });
            emit(&(serde_json::to_string_pretty(&doc)? + "\n"), &out)?;
        }
        Command::VerifyPrinciple {
            extractor,
            dataset,
            seeds,
            config,
            depth,
            report,
        } => {
            let extractor: ExtractorKind = extractor.parse()?;
            let mut cfg = load_config(&config)?;
            cfg.arch.depth = Some(depth.or(cfg.arch.depth).unwrap_or(3));
            let ds = open_dataset(&dataset)?;
            let r = run_principle_verification(extractor, &ds, &seeds, &cfg)?;
            for (j, row) in r.table().iter().enumerate() {
                let name = if j < r.depth { format!("L{}", j + 1) } else { "multi".into() };
                let cells: Vec<String> = row.iter().map(|v| format!("{v:.4e}")).collect();
                eprintln!("{name:>6} {}", cells.join(" "));
            }
            eprintln!(
                "deepest beats shallowest in {}/{} seeds; multi-level within best single in {}/{}",
                r.deepest_beats_shallowest,
                seeds.len(),
                r.multi_within_best_single,
                seeds.len()
            );
            emit(&r.to_json()?, &report)?;
        }
        Command::Sweep {
            axis,
            values,
            dataset,
            config,
            arch,
            report,
        } => {
            let axis = SweepAxis::parse(&axis, &values)?;
            let mut cfg = load_config(&config)?;
            if let Some(a) = arch {
                cfg.arch.kind = a.parse()?;
            }
            let ds = open_dataset(&dataset)?;
            let r = sweep(&axis, &cfg, &ds)?;
            for row in &r.rows {
                eprintln!("{:>16} test {:.4e} normalized {:.4}", row.label, row.test_mse, row.normalized_loss);
            }
            emit(&r.to_json()?, &report)?;
        }
        Command::Compare {
            archs,
            cases,
            seeds,
            config,
            counts,
            length,
            data_seed,
            report,
        } => {
            let kinds = archs.iter().map(|a| a.parse()).collect::<Result<Vec<ArchKind>>>()?;
            let cfg = load_config(&config)?;
            let datasets = cases
                .iter()
                .map(|c| {
                    let dir = Path::new(c);
                    if dir.is_dir() {
                        return open_dataset(dir);
                    }
                    let case: CaseKind = c.parse()?;
                    build_dataset(case, counts_of(&counts, case)?, length.unwrap_or(case.default_length()), data_seed)
                })
                .collect::<Result<Vec<Dataset>>>()?;
            let r = compare_architectures(&kinds, &datasets, &seeds, &cfg)?;
            for p in &r.pairs {
                eprintln!(
                    "{} vs {}: {}/{} wins, mean relative reduction {:+.1}%",
                    p.pyramid,
                    p.serial,
                    p.wins,
                    p.trials,
                    100.0 * p.mean_relative_reduction
                );
            }
            emit(&r.to_json()?, &report)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::try_parse().unwrap_or_else(|e| e.exit());
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    e.exit_code().clamp(1, 255) as u8
}
