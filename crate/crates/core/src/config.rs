//! hls4ml conversion settings attached to every synthesis record.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Latency,
    #[default]
    Resource,
}

impl Strategy {
    pub const ALL: [Strategy; 2] = [Strategy::Latency, Strategy::Resource];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "latency" => Some(Strategy::Latency),
            "resource" => Some(Strategy::Resource),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IoType {
    #[default]
    IoParallel,
    IoStream,
}

impl IoType {
    pub const ALL: [IoType; 2] = [IoType::IoParallel, IoType::IoStream];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "io_parallel" => Some(IoType::IoParallel),
            "io_stream" => Some(IoType::IoStream),
            _ => None,
        }
    }
}

/// Known FPGA parts, in ordinal-code order. Codes are stable across releases;
/// new parts are only ever appended.
pub const KNOWN_PARTS: [&str; 2] = ["xcu200-fsgd2104-2-e", "xcu250-figd2104-2L-e"];

pub const PART_U200: &str = KNOWN_PARTS[0];
pub const PART_U250: &str = KNOWN_PARTS[1];

/// Ordinal code of a target part; unknown parts map to `KNOWN_PARTS.len()`.
pub fn part_code(part: &str) -> usize {
    KNOWN_PARTS
        .iter()
        .position(|p| p.eq_ignore_ascii_case(part))
        .unwrap_or(KNOWN_PARTS.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HlsConfig {
    /// X in `ap_fixed<X, I>`.
    pub precision_total_bits: u32,
    /// I in `ap_fixed<X, I>`.
    pub precision_int_bits: u32,
    /// Model-level target reuse factor.
    pub reuse_factor: u64,
    pub strategy: Strategy,
    pub io_type: IoType,
    pub target_part: String,
    pub clock_ns: f64,
    pub vivado_version: String,
    pub hls4ml_version: String,
    /// Optional per-layer target reuse overrides, indexed like the layer list.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub layer_reuse_factors: Vec<Option<u64>>,
}

impl Default for HlsConfig {
    fn default() -> Self {
        Self {
            precision_total_bits: 16,
            precision_int_bits: 6,
            reuse_factor: 1,
            strategy: Strategy::Resource,
            io_type: IoType::IoParallel,
            target_part: PART_U250.to_string(),
            clock_ns: 5.0,
            vivado_version: "2020.1".to_string(),
            hls4ml_version: "0.8.1".to_string(),
            layer_reuse_factors: Vec::new(),
        }
    }
}

impl HlsConfig {
    pub fn precision_string(&self) -> String {
        format!("ap_fixed<{},{}>", self.precision_total_bits, self.precision_int_bits)
    }

    /// Target reuse for layer `index`, honouring per-layer overrides.
    pub fn reuse_for_layer(&self, index: usize) -> u64 {
        self.layer_reuse_factors
            .get(index)
            .copied()
            .flatten()
            .unwrap_or(self.reuse_factor)
    }
}

/// Parses `ap_fixed<X,I>` / `ap_int<X>` style precision strings.
pub fn parse_precision(s: &str) -> Option<(u32, u32)> {
    let s = s.trim();
    let open = s.find('<')?;
    let close = s.rfind('>')?;
    let head = &s[..open];
    let args: Vec<&str> = s[open + 1..close].split(',').map(str::trim).collect();
    let total: u32 = args.first()?.parse().ok()?;
    match head {
        "ap_fixed" | "ap_ufixed" | "fixed" | "ufixed" => {
            let int = args.get(1)?.parse().ok()?;
            Some((total, int))
        }
        "ap_int" | "ap_uint" | "int" | "uint" => Some((total, total)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precision_strings() {
        assert_eq!(parse_precision("ap_fixed<16,6>"), Some((16, 6)));
        assert_eq!(parse_precision(" ap_fixed<8, 3> "), Some((8, 3)));
        assert_eq!(parse_precision("ap_int<4>"), Some((4, 4)));
        assert_eq!(parse_precision("float"), None);
        let c = HlsConfig::default();
        assert_eq!(parse_precision(&c.precision_string()), Some((16, 6)));
    }

    #[test]
    fn part_codes_stable() {
        assert_eq!(part_code("xcu200-fsgd2104-2-e"), 0);
        assert_eq!(part_code("XCU250-FIGD2104-2L-E"), 1);
        assert_eq!(part_code("xc7z020"), KNOWN_PARTS.len());
    }

    #[test]
    fn layer_reuse_override() {
        let mut c = HlsConfig { reuse_factor: 4, ..HlsConfig::default() };
        c.layer_reuse_factors = vec![None, Some(16)];
        assert_eq!(c.reuse_for_layer(0), 4);
        assert_eq!(c.reuse_for_layer(1), 16);
        assert_eq!(c.reuse_for_layer(7), 4);
    }
}
