use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pyramid::{NeckConfig, NeckGraph};
use crate::rng::SeedStream;
use crate::tensor::{Dims, Tensor};

pub const MIN_ITERS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchOptions {
    pub iters: usize,
    pub warmup: usize,
    /// Let kernels use the global rayon pool instead of a single thread.
    pub parallel: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            iters: 30,
            warmup: 5,
            parallel: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchResult {
    pub name: String,
    pub input_dims: Vec<Dims>,
    pub iterations: usize,
    pub warmup: usize,
    pub parallel: bool,
    pub min_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub mean_ms: f64,
    /// Input scalars processed per second at the median time.
    pub scalars_per_sec: f64,
}

impl BenchResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bench result serialises")
    }
}

impl std::fmt::Display for BenchResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let dims: Vec<String> = self.input_dims.iter().map(Dims::to_string).collect();
        write!(
            f,
            "{}  inputs {}  iters {} (warmup {}, {})\n  min {:.3} ms  median {:.3} ms  p95 {:.3} ms  mean {:.3} ms  {:.3e} scalars/s",
            self.name,
            dims.join(" "),
            self.iterations,
            self.warmup,
            if self.parallel { "parallel" } else { "1 thread" },
            self.min_ms,
            self.median_ms,
            self.p95_ms,
            self.mean_ms,
            self.scalars_per_sec
        )
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Nearest-rank percentile.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = (p / 100.0 * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

type Job<'a> = &'a mut (dyn FnMut() -> Result<()> + Send);

/// Runs every job once per round, round-robin, so slow drift in machine state
/// lands on all of them alike. Returns sorted times in ms per job.
fn measure(opts: BenchOptions, jobs: &mut [Job<'_>]) -> Result<Vec<Vec<f64>>> {
    if opts.iters < MIN_ITERS {
        return Err(Error::Config(format!(
            "iters must be at least {MIN_ITERS}, got {}",
            opts.iters
        )));
    }
    let mut run = || -> Result<Vec<Vec<f64>>> {
        for _ in 0..opts.warmup {
            for f in jobs.iter_mut() {
                f()?;
            }
        }
        let mut times = vec![Vec::with_capacity(opts.iters); jobs.len()];
        for _ in 0..opts.iters {
            for (f, t) in jobs.iter_mut().zip(&mut times) {
                let start = Instant::now();
                f()?;
                t.push(start.elapsed().as_secs_f64() * 1e3);
            }
        }
        Ok(times)
    };
    let mut times = if opts.parallel {
        run()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| Error::Config(format!("cannot build benchmark thread pool: {e}")))?;
        pool.install(run)?
    };
    for t in &mut times {
        t.sort_by(f64::total_cmp);
    }
    Ok(times)
}

fn summarize(name: String, input_dims: Vec<Dims>, opts: BenchOptions, times: &[f64]) -> BenchResult {
    let med = median(times);
    let scalars: usize = input_dims.iter().map(Dims::numel).sum();
    BenchResult {
        name,
        input_dims,
        iterations: opts.iters,
        warmup: opts.warmup,
        parallel: opts.parallel,
        min_ms: times[0],
        median_ms: med,
        p95_ms: percentile(times, 95.0),
        mean_ms: times.iter().sum::<f64>() / times.len() as f64,
        scalars_per_sec: if med > 0.0 {
            scalars as f64 / (med * 1e-3)
        } else {
            f64::INFINITY
        },
    }
}

/// Times `f` `opts.iters` times after `opts.warmup` untimed calls.
pub fn bench_fn<F>(name: &str, input_dims: Vec<Dims>, opts: BenchOptions, mut f: F) -> Result<BenchResult>
where
    F: FnMut() -> Result<()> + Send,
{
    let times = measure(opts, &mut [&mut f])?;
    Ok(summarize(name.to_owned(), input_dims, opts, &times[0]))
}

struct NeckJob {
    name: String,
    dims: [Dims; 3],
    neck: NeckGraph<f32>,
    levels: [Tensor<f32>; 3],
}

impl NeckJob {
    fn new(config: &NeckConfig) -> Result<Self> {
        let neck = NeckGraph::<f32>::build(config)?;
        let rng = SeedStream::new(config.seed);
        let dims = config.level_dims(1);
        let levels = [0, 1, 2].map(|i| rng.uniform(&format!("bench.p{}", i + 3), dims[i], 0.0, 1.0));
        let name = format!(
            "neck hidden {} input {} au={} ad={} csp_pac={}",
            config.hidden_dim, config.input_size, config.use_au, config.use_ad, config.use_csp_pac
        );
        Ok(NeckJob {
            name,
            dims,
            neck,
            levels,
        })
    }

    fn run(&self) -> Result<()> {
        let [a, b, c] = &self.levels;
        self.neck.run([a, b, c]).map(drop)
    }
}

/// Neck forward latency in single precision on seeded uniform backbone features.
pub fn bench_neck(config: &NeckConfig, opts: BenchOptions) -> Result<BenchResult> {
    let job = NeckJob::new(config)?;
    let times = measure(opts, &mut [&mut || job.run()])?;
    Ok(summarize(job.name, job.dims.to_vec(), opts, &times[0]))
}

/// Like [`bench_neck`] for two configs, with their iterations interleaved.
pub fn bench_neck_pair(configs: [&NeckConfig; 2], opts: BenchOptions) -> Result<[BenchResult; 2]> {
    let [a, b] = [NeckJob::new(configs[0])?, NeckJob::new(configs[1])?];
    let times = measure(opts, &mut [&mut || a.run(), &mut || b.run()])?;
    Ok([
        summarize(a.name, a.dims.to_vec(), opts, &times[0]),
        summarize(b.name, b.dims.to_vec(), opts, &times[1]),
    ])
}
