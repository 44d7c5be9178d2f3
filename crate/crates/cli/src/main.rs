use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use neck_core::analysis::{
    bench_neck, bench_neck_pair, count_config, delta_report, gradcheck_suite, BenchOptions, MIN_ITERS,
};
use neck_core::io::{
    load_checkpoint, load_image_pnm, read_tensor_file, save_checkpoint, write_atomic, write_tensor_file,
};
use neck_core::pyramid::NeckModel;
use neck_core::{GradcheckOptions, NeckConfig, OpKind, Scalar, SeedStream, Tensor};

mod manifest;

use manifest::{InputSource, RunManifest};

#[derive(Parser)]
#[command(
    name = "neck",
    version,
    about = "Attention-sampling feature pyramid neck: forward, gradcheck, count, bench"
)]
struct Cli {
    /// JSON config file; built-in defaults otherwise.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Precision::F32)]
    precision: Precision,
    /// Also write the report as JSON to this path.
    #[arg(long, global = true)]
    json: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Precision {
    F32,
    F64,
}

#[derive(Subcommand)]
enum Command {
    /// Run backbone stub and neck, writing n3/n4/n5 tensors and a manifest.
    Forward {
        /// PGM/PPM image or AFT1 tensor of shape (N,3,H,W).
        #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
        input: Option<PathBuf>,
        /// Seeded uniform noise image, e.g. 1x320x320.
        #[arg(long)]
        synthetic: Option<String>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        save_checkpoint: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Finite-difference gradient check of every op and block (double precision).
    Gradcheck {
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
        #[arg(long, hide = true)]
        corrupt_backward: Option<OpKind>,
    },
    /// Parameter and FLOP counts, or deltas against a baseline.
    Count {
        /// Report deltas against this baseline config file.
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Report deltas against the same config with every toggle off.
        #[arg(long, conflicts_with = "baseline")]
        derived_baseline: bool,
        #[arg(long)]
        input_size: Option<usize>,
    },
    /// Neck forward latency.
    Bench {
        #[arg(long, default_value_t = 30)]
        iters: usize,
        #[arg(long, default_value_t = 5)]
        warmup: usize,
        /// Use all cores instead of one thread.
        #[arg(long)]
        parallel: bool,
        /// Also time the config with CSP-PAC off, interleaved with the main run.
        #[arg(long)]
        compare_csp_pac: bool,
    },
    /// Print the effective config as JSON.
    DumpConfig,
}

/// Distinguishes verification failures (exit 1) from usage errors (exit 2).
struct Verdict(bool);

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Verdict(true)) => ExitCode::SUCCESS,
        Ok(Verdict(false)) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load_config(cli: &Cli, fallback: NeckConfig) -> anyhow::Result<NeckConfig> {
    let mut cfg = match &cli.config {
        Some(path) => NeckConfig::load(path)?,
        None => fallback,
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Writes the `--json` report, if requested, plus its manifest.
fn write_json(cli: &Cli, cfg: &NeckConfig, precision: &str, text: &str) -> anyhow::Result<()> {
    let Some(path) = &cli.json else { return Ok(()) };
    write_atomic(path, format!("{text}\n").as_bytes())?;
    let mut manifest = RunManifest::new(cfg, precision, None);
    manifest.outputs.push(path.clone());
    manifest.write_beside(path)?;
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<Verdict> {
    match &cli.command {
        Command::Forward {
            input,
            synthetic,
            checkpoint,
            save_checkpoint,
            out_dir,
        } => {
            let cfg = load_config(cli, NeckConfig::default())?;
            let job = ForwardJob {
                cfg: &cfg,
                input: input.as_deref(),
                synthetic: synthetic.as_deref(),
                checkpoint: checkpoint.as_deref(),
                save_checkpoint: save_checkpoint.as_deref(),
                out_dir,
            };
            let manifest = match cli.precision {
                Precision::F32 => job.run::<f32>("f32")?,
                Precision::F64 => job.run::<f64>("f64")?,
            };
            let path = manifest.write(out_dir)?;
            for out in &manifest.outputs {
                println!("wrote {}", out.display());
            }
            println!("wrote {}", path.display());
            if let Some(path) = &cli.json {
                write_atomic(
                    path,
                    format!("{}\n", serde_json::to_string_pretty(&manifest)?).as_bytes(),
                )?;
            }
            Ok(Verdict(true))
        }
        Command::Gradcheck {
            tol,
            eps,
            corrupt_backward,
        } => {
            let cfg = load_config(cli, NeckConfig::tiny())?;
            let opts = GradcheckOptions {
                tol: *tol,
                eps: *eps,
                fault: *corrupt_backward,
                ..Default::default()
            };
            let entries = gradcheck_suite(&cfg, &opts)?;
            println!("gradcheck (f64)  eps {eps:e}  tol {tol:e}  hidden {}", cfg.hidden_dim);
            println!("{:<22} {:>12} {:>8}  status", "block", "max rel err", "coords");
            for e in &entries {
                let coords: usize = e.report.inputs.iter().map(|i| i.checked).sum();
                let status = if e.passed() { "ok" } else { "FAIL" };
                println!(
                    "{:<22} {:>12.3e} {:>8}  {status}",
                    e.name,
                    e.report.max_rel_error(),
                    coords
                );
            }
            let failed: Vec<&str> = entries
                .iter()
                .filter(|e| !e.passed())
                .map(|e| e.name.as_str())
                .collect();
            if failed.is_empty() {
                println!("all {} passed", entries.len());
            } else {
                println!("failed: {}", failed.join(", "));
            }
            write_json(cli, &cfg, "f64", &serde_json::to_string_pretty(&entries)?)?;
            Ok(Verdict(failed.is_empty()))
        }
        Command::Count {
            baseline,
            derived_baseline,
            input_size,
        } => {
            let mut cfg = load_config(cli, NeckConfig::default())?;
            if let Some(size) = input_size {
                cfg.input_size = *size;
                cfg.validate()?;
            }
            let base = match baseline {
                Some(path) => Some(NeckConfig::load(path)?),
                None => derived_baseline.then(|| cfg.clone().baseline()),
            };
            match base {
                None => {
                    let report = count_config(&cfg)?;
                    println!("{report}");
                    write_json(cli, &cfg, "f32", &report.to_json())?;
                }
                Some(base) => {
                    let report = delta_report(&base, &cfg, *input_size)?;
                    println!("{report}");
                    write_json(cli, &cfg, "f32", &report.to_json())?;
                }
            }
            Ok(Verdict(true))
        }
        Command::Bench {
            iters,
            warmup,
            parallel,
            compare_csp_pac,
        } => {
            if *iters < MIN_ITERS {
                bail!("--iters must be at least {MIN_ITERS}, got {iters}");
            }
            let cfg = load_config(cli, NeckConfig::default())?;
            let opts = BenchOptions {
                iters: *iters,
                warmup: *warmup,
                parallel: *parallel,
            };
            let results = if *compare_csp_pac {
                let on = cfg.clone().with_toggles(cfg.use_au, cfg.use_ad, true);
                let off = cfg.clone().with_toggles(cfg.use_au, cfg.use_ad, false);
                bench_neck_pair([&on, &off], opts)?.to_vec()
            } else {
                vec![bench_neck(&cfg, opts)?]
            };
            for r in &results {
                println!("{r}");
            }
            if let [on, off] = results.as_slice() {
                println!("csp_pac on - off median: {:+.3} ms", on.median_ms - off.median_ms);
            }
            write_json(cli, &cfg, "f32", &serde_json::to_string_pretty(&results)?)?;
            Ok(Verdict(true))
        }
        Command::DumpConfig => {
            let cfg = load_config(cli, NeckConfig::default())?;
            let text = cfg.to_json();
            println!("{text}");
            write_json(cli, &cfg, "f32", &text)?;
            Ok(Verdict(true))
        }
    }
}

struct ForwardJob<'a> {
    cfg: &'a NeckConfig,
    input: Option<&'a Path>,
    synthetic: Option<&'a str>,
    checkpoint: Option<&'a Path>,
    save_checkpoint: Option<&'a Path>,
    out_dir: &'a Path,
}

impl ForwardJob<'_> {
    fn run<T: Scalar>(&self, precision: &str) -> anyhow::Result<RunManifest> {
        let (image, source) = self.image::<T>()?;
        let mut model = NeckModel::<T>::build(self.cfg)?;
        let mut manifest = RunManifest::new(self.cfg, precision, source);
        if let Some(path) = self.checkpoint {
            load_checkpoint(path, &mut model).with_context(|| format!("loading checkpoint {}", path.display()))?;
            manifest.checkpoint = Some(path.to_owned());
        }
        let levels = model.forward_image(&image)?;
        std::fs::create_dir_all(self.out_dir).with_context(|| format!("creating {}", self.out_dir.display()))?;
        for (name, t) in ["n3", "n4", "n5"].iter().zip(&levels) {
            let path = self.out_dir.join(format!("{name}.aft"));
            write_tensor_file(&path, t)?;
            manifest.outputs.push(path);
        }
        if let Some(path) = self.save_checkpoint {
            save_checkpoint(path, &model)?;
            manifest.outputs.push(path.to_owned());
        }
        Ok(manifest)
    }

    fn image<T: Scalar>(&self) -> anyhow::Result<(Tensor<T>, Option<InputSource>)> {
        if let Some(spec) = self.synthetic {
            let dims = parse_synthetic(spec)?;
            let t = SeedStream::new(self.cfg.seed).uniform("synthetic", dims, 0.0, 1.0);
            return Ok((t, Some(InputSource::Synthetic { spec: spec.to_owned() })));
        }
        let path = self
            .input
            .ok_or_else(|| anyhow!("one of --input or --synthetic is required"))?;
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        let t = match ext {
            "pgm" | "ppm" | "pnm" => load_image_pnm(path)?,
            _ => read_tensor_file(path)?.cast(),
        };
        Ok((t, Some(InputSource::File { path: path.to_owned() })))
    }
}

/// `NxHxW` with three channels implied.
fn parse_synthetic(spec: &str) -> anyhow::Result<[usize; 4]> {
    let parts: Vec<usize> = spec
        .split(['x', 'X'])
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| anyhow!("bad --synthetic `{spec}`, expected NxHxW"))?;
    let [n, h, w] = parts[..] else {
        bail!("bad --synthetic `{spec}`, expected NxHxW");
    };
    if n == 0 || h == 0 || w == 0 {
        bail!("bad --synthetic `{spec}`: zero dimension");
    }
    Ok([n, 3, h, w])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_specs() {
        assert_eq!(parse_synthetic("1x320x320").unwrap(), [1, 3, 320, 320]);
        assert_eq!(parse_synthetic("2X64x96").unwrap(), [2, 3, 64, 96]);
        assert!(parse_synthetic("320x320").is_err());
        assert!(parse_synthetic("1x0x32").is_err());
        assert!(parse_synthetic("axbxc").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
