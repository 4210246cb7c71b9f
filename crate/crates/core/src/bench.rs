//! Synthetic particle generators and an end-to-end benchmark harness.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{GpzError, Result};
use crate::metrics::{evaluate, Psnr};
use crate::model::{CompressConfig, Dataset, MAX_DIMS};
use crate::pipeline::{compress, decompress_as};
use crate::scalar::Coordinate;

#[derive(Debug, Clone, PartialEq)]
pub enum GenKind {
    /// Independent uniform coordinates in `[0, extent)` per axis.
    UniformBox,
    /// Mixture of isotropic Gaussians around uniformly placed centers.
    GaussianClusters { clusters: usize, sigma: f64 },
    /// Regular grid of pitch `pitch`, each point moved by up to `jitter`.
    JitteredLattice { pitch: f64, jitter: f64 },
}

impl GenKind {
    pub fn name(&self) -> &'static str {
        match self {
            GenKind::UniformBox => "uniform",
            GenKind::GaussianClusters { .. } => "clusters",
            GenKind::JitteredLattice { .. } => "lattice",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenSpec {
    pub kind: GenKind,
    pub count: usize,
    pub dims: usize,
    pub seed: u64,
    /// Side length of the bounding box.
    pub extent: f64,
}

impl GenSpec {
    pub fn new(kind: GenKind, count: usize, dims: usize, seed: u64) -> Self {
        GenSpec { kind, count, dims, seed, extent: 1.0 }
    }

    pub fn with_extent(mut self, extent: f64) -> Self {
        self.extent = extent;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(GpzError::domain("generator count must be positive"));
        }
        if self.dims == 0 || self.dims > MAX_DIMS {
            return Err(GpzError::domain(format!("dims must be 1..=3, got {}", self.dims)));
        }
        if !(self.extent > 0.0 && self.extent.is_finite()) {
            return Err(GpzError::domain("extent must be positive"));
        }
        match self.kind {
            GenKind::GaussianClusters { clusters, sigma } if clusters == 0 || !(sigma >= 0.0) => {
                Err(GpzError::domain("clusters need a positive count and non-negative sigma"))
            }
            GenKind::JitteredLattice { pitch, jitter } if !(pitch > 0.0) || !(jitter >= 0.0) => {
                Err(GpzError::domain("lattice needs positive pitch and non-negative jitter"))
            }
            _ => Ok(()),
        }
    }
}

fn draw_centers(rng: &mut ChaCha8Rng, spec: &GenSpec, clusters: usize) -> Vec<[f64; MAX_DIMS]> {
    (0..clusters)
        .map(|_| {
            let mut c = [0.0; MAX_DIMS];
            for v in c.iter_mut().take(spec.dims) {
                *v = rng.gen_range(0.0..spec.extent);
            }
            c
        })
        .collect()
}

/// Cluster centers a `GaussianClusters` spec generates around.
pub fn cluster_centers(spec: &GenSpec) -> Vec<[f64; MAX_DIMS]> {
    match spec.kind {
        GenKind::GaussianClusters { clusters, .. } => {
            draw_centers(&mut ChaCha8Rng::seed_from_u64(spec.seed), spec, clusters)
        }
        _ => Vec::new(),
    }
}

/// Generates a dataset; identical specs give identical output.
pub fn generate<T: Coordinate>(spec: &GenSpec) -> Result<Dataset<T>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut axes = vec![Vec::with_capacity(spec.count); spec.dims];
    match spec.kind {
        GenKind::UniformBox => {
            for _ in 0..spec.count {
                for axis in axes.iter_mut() {
                    axis.push(rng.gen_range(0.0..spec.extent));
                }
            }
        }
        GenKind::GaussianClusters { clusters, sigma } => {
            let centers = draw_centers(&mut rng, spec, clusters);
            let noise = Normal::new(0.0, sigma).map_err(|e| GpzError::domain(e.to_string()))?;
            for _ in 0..spec.count {
                let c = &centers[rng.gen_range(0..clusters)];
                for (a, axis) in axes.iter_mut().enumerate() {
                    axis.push(c[a] + noise.sample(&mut rng));
                }
            }
        }
        GenKind::JitteredLattice { pitch, jitter } => {
            let side = (spec.count as f64).powf(1.0 / spec.dims as f64).ceil() as usize;
            for i in 0..spec.count {
                let mut rest = i;
                for axis in axes.iter_mut() {
                    let cell = rest % side;
                    rest /= side;
                    let j = if jitter > 0.0 { rng.gen_range(-jitter..=jitter) } else { 0.0 };
                    axis.push((cell as f64 + 0.5) * pitch + j);
                }
            }
        }
    }
    Dataset::new(axes.into_iter().map(|a: Vec<f64>| a.into_iter().map(T::narrow).collect()).collect())
}

/// Timing source for the harness. The measured window is everything between
/// `start` and `stop`.
pub trait Stopwatch {
    fn start(&mut self);
    fn stop(&mut self) -> Duration;
}

#[derive(Debug, Default)]
pub struct WallClock {
    started: Option<Instant>,
}

impl Stopwatch for WallClock {
    fn start(&mut self) {
        self.started = Some(Instant::now());
    }

    fn stop(&mut self) -> Duration {
        self.started.take().map_or(Duration::ZERO, |t| t.elapsed())
    }
}

/// Times one complete call of `f`, including dropping whatever it built.
pub fn timed<R>(clock: &mut impl Stopwatch, f: impl FnOnce() -> R) -> (R, Duration) {
    clock.start();
    let r = f();
    let d = clock.stop();
    (r, d)
}

fn median(mut v: Vec<Duration>) -> Duration {
    v.sort();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub kind: &'static str,
    pub count: usize,
    pub dims: usize,
    pub seed: u64,
    pub eb: f64,
    pub cr: f64,
    pub bitrate: f64,
    pub psnr: Psnr,
    pub comp_gbps: f64,
    pub decomp_gbps: f64,
}

pub fn run_bench<T: Coordinate>(
    spec: &GenSpec,
    eb_list: &[f64],
    cfg: &CompressConfig,
    repetitions: usize,
) -> Result<Vec<BenchRow>> {
    run_bench_with::<T>(spec, eb_list, cfg, repetitions, &mut WallClock::default())
}

/// [`run_bench`] with a caller-supplied clock.
pub fn run_bench_with<T: Coordinate>(
    spec: &GenSpec,
    eb_list: &[f64],
    cfg: &CompressConfig,
    repetitions: usize,
    clock: &mut impl Stopwatch,
) -> Result<Vec<BenchRow>> {
    if repetitions == 0 {
        return Err(GpzError::domain("at least one repetition is required"));
    }
    let ds = generate::<T>(spec)?;
    let input_bytes = ds.byte_size() as f64;
    let mut rows = Vec::with_capacity(eb_list.len());
    for &eb in eb_list {
        let cfg = CompressConfig { error_bound: eb, ..cfg.clone() };
        let bytes = compress(&ds, &cfg)?;
        let recon = decompress_as::<T>(&bytes)?;
        let rd = evaluate(&ds, &recon, bytes.len() as u64, &cfg)?;
        drop(recon);

        let mut comp = Vec::with_capacity(repetitions);
        let mut decomp = Vec::with_capacity(repetitions);
        for _ in 0..repetitions {
            let (r, d) = timed(clock, || compress(&ds, &cfg).map(|out| out.len()));
            r?;
            comp.push(d);
            let (r, d) = timed(clock, || decompress_as::<T>(&bytes).map(|out| out.len()));
            r?;
            decomp.push(d);
        }
        let gbps = |d: Duration| input_bytes / d.as_secs_f64().max(1e-12) / 1e9;
        rows.push(BenchRow {
            kind: spec.kind.name(),
            count: spec.count,
            dims: spec.dims,
            seed: spec.seed,
            eb,
            cr: rd.cr,
            bitrate: rd.bitrate,
            psnr: rd.psnr,
            comp_gbps: gbps(median(comp)),
            decomp_gbps: gbps(median(decomp)),
        });
    }
    Ok(rows)
}

pub fn write_bench_csv(rows: &[BenchRow], sink: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    for row in rows {
        w.serialize(row).map_err(|e| std::io::Error::other(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
