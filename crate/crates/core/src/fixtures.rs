//! The seven exemplar benchmark architectures and their synthesis sweep.

use crate::arch::{Activation, ArchBuilder, NetworkArchitecture};
use crate::config::{HlsConfig, IoType, Strategy, PART_U200, PART_U250};

#[derive(Debug, Clone, PartialEq)]
pub struct Exemplar {
    pub name: &'static str,
    /// Model size as published alongside the architecture.
    pub reported_size: u64,
    pub architecture: NetworkArchitecture,
}

use Activation::{Relu, Sigmoid, Softmax};

/// (name, aliases, reported size, input width, [(units, activation)])
type Row = (&'static str, &'static [&'static str], u64, u64, &'static [(u64, Activation)]);

const ROWS: [Row; 7] = [
    ("Jet", &[], 2821, 16, &[(32, Relu), (32, Relu), (32, Relu), (5, Softmax)]),
    ("Quarks", &["Top Quarks"], 385, 10, &[(32, Relu), (1, Sigmoid)]),
    ("Anomaly", &[], 2864, 128, &[(8, Relu), (4, Relu), (128, Relu), (4, Relu), (128, Softmax)]),
    ("BiPC", &[], 7776, 36, &[(36, Relu), (36, Relu), (36, Relu), (36, Relu), (36, Relu)]),
    ("CookieBox", &["Cookie"], 3433, 512, &[(4, Relu), (32, Relu), (32, Relu), (5, Softmax)]),
    ("AutoMLP", &[], 534, 7, &[(12, Relu), (16, Relu), (12, Relu), (2, Softmax)]),
    ("ParticleTracking", &["Particle Tracking"], 2691, 14, &[(32, Relu), (32, Relu), (32, Relu), (3, Softmax)]),
];

pub fn exemplars() -> Vec<Exemplar> {
    ROWS.iter()
        .map(|&(name, _, size, input, layers)| {
            let arch = layers
                .iter()
                .fold(ArchBuilder::flat(input), |b, &(units, act)| b.dense(units, act))
                .build(name);
            Exemplar { name, reported_size: size, architecture: arch }
        })
        .collect()
}

/// `(name, architecture)` pairs in table order.
pub fn exemplar_fixtures() -> Vec<(&'static str, NetworkArchitecture)> {
    exemplars().into_iter().map(|e| (e.name, e.architecture)).collect()
}

/// Looks up an exemplar by name or alias (case-insensitive).
pub fn exemplar(name: &str) -> Option<NetworkArchitecture> {
    let idx = ROWS.iter().position(|(n, aliases, ..)| {
        n.eq_ignore_ascii_case(name) || aliases.iter().any(|a| a.eq_ignore_ascii_case(name))
    })?;
    exemplars().into_iter().nth(idx).map(|e| e.architecture)
}

pub const SWEEP_PRECISIONS: [(u32, u32); 3] = [(2, 1), (8, 3), (16, 6)];
pub const SWEEP_STRATEGIES: [Strategy; 2] = [Strategy::Latency, Strategy::Resource];
pub const SWEEP_REUSE: [u64; 3] = [1, 128, 1024];
pub const SWEEP_PARTS: [&str; 2] = [PART_U200, PART_U250];
pub const SWEEP_CLOCKS_NS: [f64; 2] = [5.0, 10.0];
pub const SWEEP_VIVADO: [&str; 2] = ["2019.1", "2020.1"];
pub const EXEMPLAR_HLS4ML_VERSION: &str = "0.8.1";

/// Every synthesis configuration of the exemplar sweep for one model.
pub fn sweep_configs() -> Vec<HlsConfig> {
    let mut out = Vec::with_capacity(144);
    for (total, int) in SWEEP_PRECISIONS {
        for strategy in SWEEP_STRATEGIES {
            for reuse in SWEEP_REUSE {
                for part in SWEEP_PARTS {
                    for clock in SWEEP_CLOCKS_NS {
                        for vivado in SWEEP_VIVADO {
                            out.push(HlsConfig {
                                precision_total_bits: total,
                                precision_int_bits: int,
                                reuse_factor: reuse,
                                strategy,
                                io_type: IoType::IoParallel,
                                target_part: part.to_string(),
                                clock_ns: clock,
                                vivado_version: vivado.to_string(),
                                hls4ml_version: EXEMPLAR_HLS4ML_VERSION.to_string(),
                                layer_reuse_factors: Vec::new(),
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

/// Cartesian product of the sweep over the seven exemplar models.
pub fn exemplar_sweep() -> Vec<(NetworkArchitecture, HlsConfig)> {
    let configs = sweep_configs();
    exemplars()
        .into_iter()
        .flat_map(|e| configs.iter().map(move |c| (e.architecture.clone(), c.clone())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_rows() {
        let jet = exemplar("Jet").unwrap();
        assert_eq!(jet.layers[0].out_shape, [16, 1, 1]);
        let widths: Vec<u64> = jet.mac_layers().map(|l| l.units).collect();
        assert_eq!(widths, [32, 32, 32, 5]);
        assert_eq!(jet.layers.last().unwrap().activation, Activation::Softmax);

        let q = exemplar("top quarks").unwrap();
        assert_eq!(q.layers[0].out_shape, [10, 1, 1]);
        assert_eq!(q.mac_layers().map(|l| l.units).collect::<Vec<_>>(), [32, 1]);
        assert_eq!(q.layers[2].activation, Activation::Sigmoid);

        let a = exemplar("AutoMLP").unwrap();
        assert_eq!(a.layers[0].out_shape, [7, 1, 1]);
        assert_eq!(a.mac_layers().map(|l| l.units).collect::<Vec<_>>(), [12, 16, 12, 2]);
        assert!(exemplar("Foo").is_none());
    }

    #[test]
    fn param_counts_for_spot_rows() {
        assert_eq!(exemplar("Jet").unwrap().param_count(), 2821);
        assert_eq!(exemplar("Quarks").unwrap().param_count(), 385);
        assert_eq!(exemplar("AutoMLP").unwrap().param_count(), 534);
    }

    #[test]
    fn sweep_size() {
        assert_eq!(sweep_configs().len(), 144);
        let all = exemplar_sweep();
        assert_eq!(all.len(), 1008);
        assert!(all
            .iter()
            .all(|(_, c)| SWEEP_PRECISIONS.contains(&(c.precision_total_bits, c.precision_int_bits))));
    }
}
