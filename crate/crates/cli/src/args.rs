//! Command-line flags and their mapping onto [`RunConfig`].

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use plrdiff_core::VjpMode;

use crate::config::{PredictorKind, RunConfig};
use crate::error::Result;

#[derive(Debug, Parser)]
#[command(
    name = "plrdiff",
    version,
    about = "Diffusion pansharpening in a low-rank spectral subspace"
)]
pub struct Cli {
    /// Log more (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Blur, decimate and spectrally project an HRMS into LRMS and PAN.
    Degrade(RunArgs),
    /// Restore an HRMS from LRMS and PAN by guided sampling.
    Pansharpen(RunArgs),
    /// MSE over a grid of guidance weights.
    SweepEta {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.5, 1.0, 2.0])]
        eta1_grid: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 1.0, 2.0, 4.0])]
        eta2_grid: Vec<f64>,
    },
    /// MSE for several band selections (each list is comma separated, 1-based).
    SweepBands {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long = "indices")]
        index_lists: Vec<IndexList>,
    },
    /// MSE and wall-clock time for several step counts.
    SweepSteps {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [300, 600, 1000])]
        steps_list: Vec<usize>,
    },
    /// Train the small convolutional noise predictor.
    TrainDenoiser {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Quality indices between `--reference` and `--input`.
    Metrics {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        input: PathBuf,
    },
    /// One band as an 8-bit grayscale PGM.
    ExportBand {
        #[arg(long)]
        input: PathBuf,
        /// 0-based band index.
        #[arg(long)]
        band: usize,
        #[arg(long)]
        output: PathBuf,
    },
    /// Write an exactly low-rank synthetic HRMS.
    Synthesize {
        #[arg(long, default_value_t = 64)]
        height: usize,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 8)]
        bands: usize,
        #[arg(long, default_value_t = 3)]
        rank: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
}

/// Comma-separated 1-based band indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexList(pub Vec<usize>);

impl std::str::FromStr for IndexList {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        s.split(',')
            .map(|p| p.trim().parse::<usize>().map_err(|e| format!("`{p}`: {e}")))
            .collect::<std::result::Result<_, _>>()
            .map(IndexList)
    }
}

/// Flags shared by every configurable command; each overrides the same
/// field of the config file.
#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// TOML or JSON config file.
    #[arg(long)]
    pub config: Option<PathBuf>,

    #[arg(long)]
    pub hrms: Option<PathBuf>,
    #[arg(long)]
    pub lrms: Option<PathBuf>,
    #[arg(long)]
    pub pan: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// TinyDenoiser weight file.
    #[arg(long)]
    pub weights: Option<PathBuf>,

    #[arg(long)]
    pub scale: Option<usize>,
    #[arg(long)]
    pub kernel_size: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Uniform PAN response over bands FIRST,LAST (1-based, inclusive).
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub response_range: Option<Vec<usize>>,
    /// Explicit PAN response weights, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub response: Option<Vec<f64>>,

    /// Number of base bands.
    #[arg(long)]
    pub rank: Option<usize>,
    /// Explicit 1-based band indices, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub band_indices: Option<Vec<usize>>,

    /// Diffusion steps T.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub beta_start: Option<f64>,
    #[arg(long)]
    pub beta_end: Option<f64>,
    #[arg(long)]
    pub eta1: Option<f64>,
    #[arg(long)]
    pub eta2: Option<f64>,
    /// `full` or `stop_gradient`.
    #[arg(long)]
    pub vjp_mode: Option<VjpMode>,
    #[arg(long)]
    pub seed: Option<u64>,

    /// `gaussian` or `tiny`.
    #[arg(long)]
    pub predictor: Option<PredictorKind>,
    /// Gaussian prior mean as an s-band array file.
    #[arg(long)]
    pub prior_mean: Option<PathBuf>,
    /// Constant Gaussian prior mean.
    #[arg(long)]
    pub prior_mean_value: Option<f64>,
    #[arg(long)]
    pub prior_variance: Option<f64>,

    #[arg(long)]
    pub peak: Option<f64>,
    #[arg(long)]
    pub q2n_block: Option<usize>,

    /// Sweep worker threads.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Use the base seed at every sweep point.
    #[arg(long)]
    pub shared_seed: bool,
}

#[derive(Debug, Default, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train_steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub holdout_fraction: Option<f64>,
    /// Training arrays, comma separated; synthetic textures when absent.
    #[arg(long, value_delimiter = ',')]
    pub data: Option<Vec<PathBuf>>,
    #[arg(long)]
    pub synthetic_count: Option<usize>,
    #[arg(long)]
    pub synthetic_size: Option<usize>,
    #[arg(long)]
    pub synthetic_bands: Option<usize>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_opt<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

impl RunArgs {
    /// Loads `--config` (or defaults) and applies every given flag.
    pub fn resolve(self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        let p = &mut cfg.paths;
        set_opt(&mut p.hrms, self.hrms);
        set_opt(&mut p.lrms, self.lrms);
        set_opt(&mut p.pan, self.pan);
        set_opt(&mut p.output, self.output);
        set_opt(&mut p.reference, self.reference);
        set_opt(&mut p.weights, self.weights);

        let d = &mut cfg.degradation;
        set(&mut d.scale, self.scale);
        set(&mut d.kernel_size, self.kernel_size);
        set_opt(&mut d.sigma, self.sigma);
        if let Some(r) = self.response_range {
            d.response.range = Some([r[0], r[1]]);
            d.response.weights = None;
        }
        if let Some(w) = self.response {
            d.response.weights = Some(w);
            d.response.range = None;
        }

        if let Some(ix) = self.band_indices {
            cfg.subspace.rank = ix.len();
            cfg.subspace.indices = Some(ix);
        }
        set(&mut cfg.subspace.rank, self.rank);

        let s = &mut cfg.sampler;
        set(&mut s.steps, self.steps);
        set_opt(&mut s.beta_start, self.beta_start);
        set_opt(&mut s.beta_end, self.beta_end);
        set(&mut s.eta1, self.eta1);
        set(&mut s.eta2, self.eta2);
        set(&mut s.vjp_mode, self.vjp_mode);
        set(&mut s.seed, self.seed);

        let pr = &mut cfg.predictor;
        set(&mut pr.kind, self.predictor);
        set_opt(&mut pr.mean, self.prior_mean);
        set_opt(&mut pr.mean_value, self.prior_mean_value);
        set(&mut pr.variance, self.prior_variance);

        set(&mut cfg.metrics.peak, self.peak);
        set(&mut cfg.metrics.q2n_block, self.q2n_block);
        set_opt(&mut cfg.sweep.workers, self.workers);
        if self.shared_seed {
            cfg.sweep.shared_seed = true;
        }
        Ok(cfg)
    }
}

impl TrainArgs {
    pub fn apply(self, cfg: &mut RunConfig) {
        let t = &mut cfg.train;
        set(&mut t.steps, self.train_steps);
        set(&mut t.batch_size, self.batch_size);
        set(&mut t.learning_rate, self.learning_rate);
        set(&mut t.momentum, self.momentum);
        set(&mut t.hidden, self.hidden);
        set(&mut t.holdout_fraction, self.holdout_fraction);
        set(&mut t.data, self.data);
        set(&mut t.synthetic_count, self.synthetic_count);
        set(&mut t.synthetic_size, self.synthetic_size);
        set_opt(&mut t.synthetic_bands, self.synthetic_bands);
    }
}
