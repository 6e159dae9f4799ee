//! Model load time, single-image latency and peak memory.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::weights::load_weights;
use crate::zoo::{Architecture, ModelGraph, INPUT_SHAPE};

pub const DEFAULT_WARMUP: usize = 3;
pub const DEFAULT_RUNS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub model: String,
    pub load_ms: f64,
    /// Timed runs only; warmups are excluded.
    pub latencies_ms: Vec<f64>,
    pub median_ms: f64,
    pub p95_ms: f64,
    /// Peak resident set size of the whole process, where the platform
    /// reports it.
    pub peak_rss_bytes: Option<u64>,
    pub macs: u64,
}

pub const CSV_HEADER: &str = "model,load_ms,median_ms,p95_ms,peak_rss_bytes,macs,runs";

impl BenchReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.3},{:.3},{:.3},{},{},{}",
            self.model,
            self.load_ms,
            self.median_ms,
            self.p95_ms,
            self.peak_rss_bytes.map(|b| b.to_string()).unwrap_or_default(),
            self.macs,
            self.latencies_ms.len()
        )
    }
}

/// Median of a non-empty sample (mean of the middle pair for even sizes).
pub fn median(samples: &[f64]) -> f64 {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Nearest-rank percentile, `q` in `(0, 1]`.
pub fn percentile(samples: &[f64], q: f64) -> f64 {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = (q * v.len() as f64).ceil() as usize;
    v[rank.clamp(1, v.len()) - 1]
}

/// `VmHWM` from `/proc/self/status`; `None` elsewhere.
pub fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

/// Times `runs` forward passes of an already built model after `warmup`
/// discarded ones. Every pass must produce bit-identical logits.
pub fn bench_loaded(model: &ModelGraph, input: &Tensor, runs: usize, warmup: usize, load_ms: f64) -> Result<BenchReport> {
    if runs == 0 {
        return Err(Error::usage("benchmark needs at least one timed run"));
    }
    let reference = model.forward(input)?;
    for _ in 0..warmup {
        std::hint::black_box(model.forward(input)?);
    }
    let mut latencies_ms = Vec::with_capacity(runs);
    for run in 0..runs {
        let start = Instant::now();
        let logits = model.forward(std::hint::black_box(input))?;
        latencies_ms.push(start.elapsed().as_secs_f64() * 1e3);
        let same = logits
            .data()
            .iter()
            .zip(reference.data())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        if !same {
            return Err(Error::Data(format!("logits changed between runs (run {run})")));
        }
    }
    Ok(BenchReport {
        model: model.arch().id().to_string(),
        load_ms,
        median_ms: median(&latencies_ms),
        p95_ms: percentile(&latencies_ms, 0.95),
        latencies_ms,
        peak_rss_bytes: peak_rss_bytes(),
        macs: model.count_macs(INPUT_SHAPE)?.total().get(),
    })
}

/// Loads `weights` (timed) and benchmarks `arch` on `input`.
pub fn bench_model(
    weights: impl AsRef<Path>,
    arch: Architecture,
    input: &Tensor,
    runs: usize,
    warmup: usize,
) -> Result<BenchReport> {
    if runs == 0 {
        return Err(Error::usage("benchmark needs at least one timed run"));
    }
    let start = Instant::now();
    let store = load_weights(weights)?;
    let model = ModelGraph::build(arch, &store)?;
    let load_ms = start.elapsed().as_secs_f64() * 1e3;
    bench_loaded(&model, input, runs, warmup, load_ms)
}
