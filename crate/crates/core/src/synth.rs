//! Deterministic pseudo-synthesis: an analytic cost model standing in for
//! HLS + logic synthesis, and random / grid architecture generators that
//! produce labeled, schema-compliant datasets without vendor tools.
//!
//! Cost model (per MAC layer with fan-in `m`, fan-out `n`, bit width `b`,
//! reuse `r`; sums run over MAC layers only):
//!
//! ```text
//! DSP    = sum ceil(m*n / r)            if b >= 10, else 0
//! LUT    = sum ceil(m*n*b^2 / (64*r)) + 40*n
//! FF     = sum ceil(m*n*b / (8*r)) + 2*n*b
//! BRAM   = sum ceil(m*n*b / 36864)      if r > 1, else 0
//! cycles = sum (r + ceil(log2 m) + 3)   resource strategy
//!          sum (ceil(log2 m) + 3)       latency strategy
//! II     = max r (resource) or 1 (latency)
//! ```

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{Activation, ArchBuilder, Family, LayerKind, NetworkArchitecture, Padding};
use crate::config::{HlsConfig, IoType, Strategy, PART_U250};
use crate::dataset::{Dataset, Split};
use crate::exec::Exec;
use crate::sample::{GroupTag, LatencyReport, MetaData, ResourceReport, Sample};
use crate::targets::TargetVector;

/// Recorded in `meta_data.cost_model_version` of every generated sample.
pub const COST_MODEL_VERSION: &str = "wahls-pseudo-synth/1";

#[derive(Debug, Error, PartialEq)]
pub enum GenError {
    #[error("family mix fractions must be non-negative and sum to 1 (got {0:?})")]
    BadMix([f64; 3]),
    #[error("invalid generation range: {0}")]
    BadRange(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModelParams {
    pub dsp_min_bits: f64,
    pub lut_mac_divisor: f64,
    pub lut_per_output: f64,
    pub ff_mac_divisor: f64,
    pub ff_per_output_bit: f64,
    pub bram_block_bits: f64,
    pub pipeline_overhead: f64,
}

impl Default for CostModelParams {
    fn default() -> Self {
        Self {
            dsp_min_bits: 10.0,
            lut_mac_divisor: 64.0,
            lut_per_output: 40.0,
            ff_mac_divisor: 8.0,
            ff_per_output_bit: 2.0,
            bram_block_bits: 36864.0,
            pipeline_overhead: 3.0,
        }
    }
}

impl CostModelParams {
    pub fn is_valid(&self) -> bool {
        [
            self.dsp_min_bits,
            self.lut_mac_divisor,
            self.lut_per_output,
            self.ff_mac_divisor,
            self.ff_per_output_bit,
            self.bram_block_bits,
            self.pipeline_overhead,
        ]
        .iter()
        .all(|&c| c > 0.0 && c.is_finite())
    }
}

fn ceil_div(num: u128, den: u128) -> u128 {
    num.div_ceil(den)
}

fn ceil_log2(m: u64) -> u64 {
    if m <= 1 {
        0
    } else {
        64 - (m - 1).leading_zeros() as u64
    }
}

/// Labels a design with the default cost model.
pub fn pseudo_synthesize(a: &NetworkArchitecture, c: &HlsConfig) -> TargetVector {
    pseudo_synthesize_with(a, c, &CostModelParams::default())
}

pub fn pseudo_synthesize_with(a: &NetworkArchitecture, c: &HlsConfig, p: &CostModelParams) -> TargetVector {
    let b = c.precision_total_bits as u128;
    let as_int = |x: f64| x.round() as u128;
    let (mut dsp, mut lut, mut ff, mut bram, mut cycles) = (0u128, 0u128, 0u128, 0u128, 0u128);
    let mut ii = 1u128;
    let mut any = false;
    for (idx, layer) in a.layers.iter().enumerate() {
        let Some((m, n)) = layer.mac_geometry() else { continue };
        any = true;
        let r = c.reuse_for_layer(idx).max(1) as u128;
        let (m128, n128) = (m as u128, n as u128);
        let macs = m128 * n128;
        if b as f64 >= p.dsp_min_bits {
            dsp += ceil_div(macs, r);
        }
        lut += ceil_div(macs * b * b, as_int(p.lut_mac_divisor) * r) + as_int(p.lut_per_output) * n128;
        ff += ceil_div(macs * b, as_int(p.ff_mac_divisor) * r) + as_int(p.ff_per_output_bit) * n128 * b;
        if r > 1 {
            bram += ceil_div(macs * b, as_int(p.bram_block_bits));
        }
        let overhead = ceil_log2(m) as u128 + as_int(p.pipeline_overhead);
        match c.strategy {
            Strategy::Resource => {
                cycles += r + overhead;
                ii = ii.max(r);
            }
            Strategy::Latency => cycles += overhead,
        }
    }
    if !any {
        ii = 0;
    }
    TargetVector {
        bram: bram as f64,
        dsp: dsp as f64,
        ff: ff as f64,
        lut: lut as f64,
        cycles: cycles as f64,
        ii: ii as f64,
    }
}

/// Post-HLS estimate derived from the "post-synthesis" labels: HLS tends to
/// over-report fabric usage.
fn hls_estimate(t: &TargetVector) -> ResourceReport {
    ResourceReport {
        bram: t.bram,
        dsp: t.dsp,
        ff: (t.ff * 1.1).ceil(),
        lut: (t.lut * 1.25).ceil(),
    }
}

/// Builds a labeled sample for a design.
pub fn label_sample(id: &str, arch: NetworkArchitecture, cfg: HlsConfig, group: GroupTag) -> Sample {
    let t = pseudo_synthesize(&arch, &cfg);
    Sample {
        meta: MetaData {
            id: id.to_string(),
            model_name: arch.name.clone(),
            artifact_tarball_name: format!("{id}.tar.gz"),
            cost_model_version: Some(COST_MODEL_VERSION.to_string()),
        },
        architecture: arch,
        hls_config: cfg,
        resource_report: ResourceReport { bram: t.bram, dsp: t.dsp, ff: t.ff, lut: t.lut },
        hls_resource_report: hls_estimate(&t),
        latency_report: LatencyReport { cycles: t.cycles, ii: t.ii },
        group,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenRanges {
    /// Dense layer count for fully-connected models.
    pub dense_layers: (usize, usize),
    /// Layer count (conv, pool, flatten, dense) for convolutional models.
    pub conv_layers: (usize, usize),
    pub neurons: (u64, u64),
    /// Width step for the 2/3-layer grid subsets.
    pub grid_step: u64,
    pub conv1d_length: (u64, u64),
    pub conv2d_side: (u64, u64),
    pub conv_channels: (u64, u64),
    pub filters: (u64, u64),
    pub kernel_sizes: Vec<u64>,
    pub grid_precisions: Vec<u32>,
    pub random_precisions: Vec<u32>,
    pub dense_reuse: (u64, u64),
    pub conv_reuse: (u64, u64),
    pub activations: Vec<Activation>,
    /// Share of 3-7 layer dense models converted with the latency strategy.
    pub latency_fraction: f64,
}

impl Default for GenRanges {
    fn default() -> Self {
        Self {
            dense_layers: (2, 7),
            conv_layers: (3, 7),
            neurons: (8, 128),
            grid_step: 8,
            conv1d_length: (32, 128),
            conv2d_side: (8, 32),
            conv_channels: (1, 3),
            filters: (8, 64),
            kernel_sizes: vec![1, 3, 5],
            grid_precisions: (1..=8).map(|i| 2 * i).collect(),
            random_precisions: vec![4, 8, 16],
            dense_reuse: (1, 4093),
            conv_reuse: (8192, 32795),
            activations: vec![Activation::Relu, Activation::Tanh, Activation::Sigmoid],
            latency_fraction: 0.25,
        }
    }
}

impl GenRanges {
    pub fn check(&self) -> Result<(), GenError> {
        let pairs = [
            (self.neurons.0 as f64, self.neurons.1 as f64, "neurons"),
            (self.conv1d_length.0 as f64, self.conv1d_length.1 as f64, "conv1d_length"),
            (self.conv2d_side.0 as f64, self.conv2d_side.1 as f64, "conv2d_side"),
            (self.conv_channels.0 as f64, self.conv_channels.1 as f64, "conv_channels"),
            (self.filters.0 as f64, self.filters.1 as f64, "filters"),
            (self.dense_reuse.0 as f64, self.dense_reuse.1 as f64, "dense_reuse"),
            (self.conv_reuse.0 as f64, self.conv_reuse.1 as f64, "conv_reuse"),
            (self.dense_layers.0 as f64, self.dense_layers.1 as f64, "dense_layers"),
            (self.conv_layers.0 as f64, self.conv_layers.1 as f64, "conv_layers"),
        ];
        for (lo, hi, name) in pairs {
            if lo < 1.0 || lo > hi {
                return Err(GenError::BadRange(name));
            }
        }
        if self.conv_layers.0 < 3 {
            return Err(GenError::BadRange("conv_layers"));
        }
        if self.kernel_sizes.is_empty() || self.kernel_sizes.contains(&0) {
            return Err(GenError::BadRange("kernel_sizes"));
        }
        if self.grid_precisions.is_empty() || self.random_precisions.is_empty() {
            return Err(GenError::BadRange("precisions"));
        }
        if self.activations.is_empty() {
            return Err(GenError::BadRange("activations"));
        }
        if self.grid_step == 0 || self.neurons.1 < self.grid_step {
            return Err(GenError::BadRange("grid_step"));
        }
        Ok(())
    }
}

/// Family fractions for dataset generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyMix {
    pub dense: f64,
    pub conv1d: f64,
    pub conv2d: f64,
}

impl Default for FamilyMix {
    fn default() -> Self {
        Self { dense: 0.6, conv1d: 0.2, conv2d: 0.2 }
    }
}

impl FamilyMix {
    pub fn new(dense: f64, conv1d: f64, conv2d: f64) -> Result<Self, GenError> {
        let v = [dense, conv1d, conv2d];
        if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || (v.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(GenError::BadMix(v));
        }
        Ok(Self { dense, conv1d, conv2d })
    }

    pub fn only(family: Family) -> Self {
        match family {
            Family::Dense => Self { dense: 1.0, conv1d: 0.0, conv2d: 0.0 },
            Family::Conv1d => Self { dense: 0.0, conv1d: 1.0, conv2d: 0.0 },
            Family::Conv2d => Self { dense: 0.0, conv1d: 0.0, conv2d: 1.0 },
        }
    }

    fn pick(&self, u: f64) -> Family {
        let weights = [(Family::Dense, self.dense), (Family::Conv1d, self.conv1d), (Family::Conv2d, self.conv2d)];
        let mut acc = 0.0;
        let mut last = Family::Dense;
        for (family, w) in weights {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            last = family;
            if u < acc {
                return family;
            }
        }
        last
    }
}

impl std::str::FromStr for FamilyMix {
    type Err = String;

    /// `dense,conv1d,conv2d` fractions, e.g. `0.6,0.2,0.2`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Result<Vec<f64>, _> = s.split(',').map(|p| p.trim().parse::<f64>()).collect();
        match parts.map_err(|e| e.to_string())?.as_slice() {
            [d, c1, c2] => FamilyMix::new(*d, *c1, *c2).map_err(|e| e.to_string()),
            _ => Err("expected three comma-separated fractions".into()),
        }
    }
}

/// A generated design before labeling.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub architecture: NetworkArchitecture,
    pub config: HlsConfig,
    pub group: GroupTag,
}

fn range<R: Rng>(rng: &mut R, (lo, hi): (u64, u64)) -> u64 {
    rng.gen_range(lo..=hi)
}

fn log_uniform<R: Rng>(rng: &mut R, (lo, hi): (u64, u64)) -> u64 {
    let (a, b) = ((lo as f64).ln(), (hi as f64 + 1.0).ln());
    (rng.gen_range(a..b).exp().floor() as u64).clamp(lo, hi)
}

fn generated_config<R: Rng>(rng: &mut R, bits: u32, reuse: u64, strategy: Strategy, io: IoType) -> HlsConfig {
    HlsConfig {
        precision_total_bits: bits,
        precision_int_bits: 1,
        reuse_factor: reuse,
        strategy,
        io_type: io,
        target_part: PART_U250.to_string(),
        clock_ns: 5.0,
        vivado_version: ["2023.2", "2024.2"][rng.gen_range(0..2)].to_string(),
        hls4ml_version: "0.8.1".to_string(),
        layer_reuse_factors: Vec::new(),
    }
}

fn dense_design<R: Rng>(rng: &mut R, ranges: &GenRanges) -> Design {
    let depth = rng.gen_range(ranges.dense_layers.0..=ranges.dense_layers.1);
    let grid = depth <= 3 && (depth == 2 || rng.gen_bool(0.5));
    if grid {
        let steps = ranges.neurons.1 / ranges.grid_step;
        let lo_step = ranges.neurons.0.div_ceil(ranges.grid_step).max(1);
        let mut width = || rng.gen_range(lo_step..=steps) * ranges.grid_step;
        let input = width();
        let widths: Vec<u64> = (0..depth).map(|_| width()).collect();
        let arch = widths
            .iter()
            .fold(ArchBuilder::flat(input), |b, &w| b.dense(w, Activation::Linear))
            .build(format!("dense_grid_{depth}l"));
        let bits = *ranges.grid_precisions.choose(rng).expect("nonempty");
        let reuse = log_uniform(rng, ranges.dense_reuse);
        let group = if depth == 2 { GroupTag::TwoLayer } else { GroupTag::ThreeLayer };
        let config = generated_config(rng, bits, reuse, Strategy::Resource, IoType::IoParallel);
        return Design { architecture: arch, config, group };
    }
    let input = range(rng, ranges.neurons);
    let mut b = ArchBuilder::flat(input);
    for _ in 0..depth {
        let act = *ranges.activations.choose(rng).expect("nonempty");
        b = b.dense(range(rng, ranges.neurons), act);
    }
    let arch = b.build(format!("dense_random_{depth}l"));
    let latency = rng.gen_bool(ranges.latency_fraction);
    let (strategy, group) = if latency {
        (Strategy::Latency, GroupTag::Latency)
    } else {
        (Strategy::Resource, GroupTag::Resource)
    };
    let bits = *ranges.random_precisions.choose(rng).expect("nonempty");
    let reuse = log_uniform(rng, ranges.dense_reuse);
    let config = generated_config(rng, bits, reuse, strategy, IoType::IoParallel);
    Design { architecture: arch, config, group }
}

fn conv_design<R: Rng>(rng: &mut R, family: Family, ranges: &GenRanges) -> Design {
    let two_d = family == Family::Conv2d;
    let channels = range(rng, ranges.conv_channels);
    let mut b = if two_d {
        let side = range(rng, ranges.conv2d_side);
        ArchBuilder::image(side, side, channels)
    } else {
        ArchBuilder::seq(range(rng, ranges.conv1d_length), channels)
    };
    let total = rng.gen_range(ranges.conv_layers.0..=ranges.conv_layers.1);
    let n_dense = rng.gen_range(1..=2.min(total - 2));
    let body = total - 1 - n_dense;
    let (pool_kind, conv_kind) = if two_d {
        ([LayerKind::MaxPool2d, LayerKind::AvgPool2d], LayerKind::Conv2d)
    } else {
        ([LayerKind::MaxPool1d, LayerKind::AvgPool1d], LayerKind::Conv1d)
    };
    let mut prev_conv = false;
    for slot in 0..body {
        let spatial = b.shape()[0];
        if slot > 0 && prev_conv && spatial >= 4 && rng.gen_bool(0.4) {
            b = b.pool(*pool_kind.choose(rng).expect("two kinds"), 2);
            prev_conv = false;
            continue;
        }
        let filters = range(rng, ranges.filters);
        let kernel = *ranges.kernel_sizes.choose(rng).expect("nonempty");
        let padding = if rng.gen_bool(0.5) && spatial >= kernel { Padding::Valid } else { Padding::Same };
        let act = *ranges.activations.choose(rng).expect("nonempty");
        let mut layer = ArchBuilder::blank(conv_kind, filters);
        layer.kernel_size = kernel;
        layer.stride = 1;
        layer.padding = padding;
        layer.activation = act;
        b = b.try_push(layer).expect("padding chosen to fit");
        prev_conv = true;
    }
    b = b.flatten();
    for _ in 0..n_dense {
        let act = *ranges.activations.choose(rng).expect("nonempty");
        b = b.dense(range(rng, ranges.neurons), act);
    }
    let arch = b.build(format!("{}_{total}l", family.as_str()));
    let bits = *ranges.random_precisions.choose(rng).expect("nonempty");
    let reuse = range(rng, ranges.conv_reuse);
    let config = generated_config(rng, bits, reuse, Strategy::Resource, IoType::IoStream);
    let group = if two_d { GroupTag::Conv2d } else { GroupTag::Conv1d };
    Design { architecture: arch, config, group }
}

/// Random design for `family`, deterministic in `seed`.
pub fn generate_design(seed: u64, family: Family, ranges: &GenRanges) -> Design {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match family {
        Family::Dense => dense_design(&mut rng, ranges),
        Family::Conv1d | Family::Conv2d => conv_design(&mut rng, family, ranges),
    }
}

pub fn generate_architecture(seed: u64, family: Family, ranges: &GenRanges) -> NetworkArchitecture {
    generate_design(seed, family, ranges).architecture
}

/// SplitMix64 finaliser, used to derive independent per-sample seeds.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x6A09_E667_F3BC_C909);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `n` labeled samples, deterministic in `seed`.
pub fn generate_dataset(seed: u64, n: usize, mix: &FamilyMix) -> Dataset {
    generate_dataset_with(seed, n, mix, &GenRanges::default(), Split::Train, Exec::default())
}

pub fn generate_dataset_with(
    seed: u64,
    n: usize,
    mix: &FamilyMix,
    ranges: &GenRanges,
    split: Split,
    exec: Exec,
) -> Dataset {
    let samples = exec.map_range(n, |i| {
        let s = mix_seed(seed, i as u64);
        let mut pick = ChaCha8Rng::seed_from_u64(s ^ 0xF00D);
        let family = mix.pick(pick.gen::<f64>());
        let d = generate_design(s, family, ranges);
        label_sample(&format!("pseudo-{seed}-{i:07}"), d.architecture, d.config, d.group)
    });
    Dataset::new(split, samples).expect("generated ids are unique")
}

/// Exhaustive grid over `depth`-layer linear dense models (2 or 3 layers):
/// widths on the grid step, every grid precision, power-of-two reuse.
pub fn grid_designs(depth: usize, ranges: &GenRanges) -> impl Iterator<Item = Design> + '_ {
    let lo = ranges.neurons.0.div_ceil(ranges.grid_step).max(1);
    let hi = ranges.neurons.1 / ranges.grid_step;
    let widths: Vec<u64> = (lo..=hi).map(|k| k * ranges.grid_step).collect();
    let reuses: Vec<u64> = (0..)
        .map(|p| 1u64 << p)
        .take_while(|r| *r <= ranges.dense_reuse.1)
        .filter(|r| *r >= ranges.dense_reuse.0)
        .collect();
    let group = if depth == 2 { GroupTag::TwoLayer } else { GroupTag::ThreeLayer };
    let n_w = widths.len();
    let shapes = n_w.pow(depth as u32 + 1);
    (0..shapes).flat_map(move |code| {
        let mut c = code;
        let mut dims = Vec::with_capacity(depth + 1);
        for _ in 0..=depth {
            dims.push(widths[c % n_w]);
            c /= n_w;
        }
        let arch = dims[1..]
            .iter()
            .fold(ArchBuilder::flat(dims[0]), |b, &w| b.dense(w, Activation::Linear))
            .build(format!("dense_grid_{depth}l"));
        let reuses = reuses.clone();
        ranges.grid_precisions.iter().flat_map(move |&bits| {
            let arch = arch.clone();
            reuses.clone().into_iter().map(move |r| Design {
                architecture: arch.clone(),
                config: HlsConfig {
                    precision_total_bits: bits,
                    precision_int_bits: 1,
                    reuse_factor: r,
                    strategy: Strategy::Resource,
                    io_type: IoType::IoParallel,
                    target_part: PART_U250.to_string(),
                    ..HlsConfig::default()
                },
                group,
            })
        })
    })
}

/// Labels every entry of the exemplar sweep.
pub fn exemplar_dataset() -> Dataset {
    let samples = crate::fixtures::exemplar_sweep()
        .into_iter()
        .enumerate()
        .map(|(i, (arch, cfg))| {
            let id = format!("exemplar-{}-{i:04}", arch.name);
            label_sample(&id, arch, cfg, GroupTag::Exemplar)
        })
        .collect();
    Dataset::new(Split::ExemplarTest, samples).expect("exemplar ids are unique")
}
