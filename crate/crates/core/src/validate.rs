//! Invariant checks over a parsed [`Sample`]. Never fails; reports.

use serde::Serialize;

use crate::arch::{LayerKind, NetworkArchitecture, Padding};
use crate::config::HlsConfig;
use crate::sample::Sample;
use crate::targets::Target;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    EmptyArchitecture,
    /// Output of `layer` does not match the input of `layer + 1`.
    ShapeChain { layer: usize },
    NonPositiveDim { layer: usize },
    /// Declared output shape disagrees with the one implied by the layer.
    LayerGeometry { layer: usize },
    DenseHyperparams { layer: usize },
    NegativeTarget { target: Target, value: f64 },
    NonFiniteTarget { target: Target },
    PrecisionBounds { total: u32, int: u32 },
    ReuseFactor { value: u64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_sample(s: &Sample) -> ValidationReport {
    let mut violations = validate_design(&s.architecture, &s.hls_config).violations;
    for (t, v) in s.targets().iter() {
        if !v.is_finite() {
            violations.push(Violation::NonFiniteTarget { target: t });
        } else if v < 0.0 {
            violations.push(Violation::NegativeTarget { target: t, value: v });
        }
    }
    ValidationReport { violations }
}

/// Architecture + configuration checks, shared by records and estimate
/// requests (which carry no ground truth).
pub fn validate_design(a: &NetworkArchitecture, c: &HlsConfig) -> ValidationReport {
    let mut violations = validate_architecture(a);
    if c.precision_int_bits < 1 || c.precision_int_bits > c.precision_total_bits {
        violations.push(Violation::PrecisionBounds { total: c.precision_total_bits, int: c.precision_int_bits });
    }
    if c.reuse_factor < 1 || c.layer_reuse_factors.iter().flatten().any(|&r| r < 1) {
        violations.push(Violation::ReuseFactor { value: c.reuse_factor });
    }
    ValidationReport { violations }
}

pub fn validate_architecture(a: &NetworkArchitecture) -> Vec<Violation> {
    let mut v = Vec::new();
    if a.layers.is_empty() {
        v.push(Violation::EmptyArchitecture);
        return v;
    }
    for (i, l) in a.layers.iter().enumerate() {
        let dims_ok = l.in_shape.iter().chain(l.out_shape.iter()).all(|&d| d >= 1)
            && l.units >= 1
            && l.kernel_size >= 1
            && l.stride >= 1;
        if !dims_ok {
            v.push(Violation::NonPositiveDim { layer: i });
            continue;
        }
        if l.kind == LayerKind::Dense && (l.kernel_size != 1 || l.stride != 1 || l.padding != Padding::None) {
            v.push(Violation::DenseHyperparams { layer: i });
        }
        if l.expected_out_shape() != Some(l.out_shape) {
            v.push(Violation::LayerGeometry { layer: i });
        }
    }
    for (i, pair) in a.layers.windows(2).enumerate() {
        if pair[0].out_shape != pair[1].in_shape {
            v.push(Violation::ShapeChain { layer: i });
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn jet_sample() -> Sample {
        let arch = fixtures::exemplar("Jet").unwrap();
        crate::synth::label_sample("jet-0", arch, HlsConfig::default(), crate::sample::GroupTag::Exemplar)
    }

    #[test]
    fn jet_is_valid() {
        assert!(validate_sample(&jet_sample()).is_valid());
    }

    #[test]
    fn shape_chain_violation() {
        let mut s = jet_sample();
        // change the declared output of layer 1 only; layer 2 still expects 32
        s.architecture.layers[1].out_shape = [33, 1, 1];
        s.architecture.layers[1].units = 33;
        let r = validate_sample(&s);
        assert_eq!(r.violations, vec![Violation::ShapeChain { layer: 1 }]);
    }

    #[test]
    fn negative_target() {
        let mut s = jet_sample();
        s.resource_report.dsp = -3.0;
        let r = validate_sample(&s);
        assert_eq!(r.violations, vec![Violation::NegativeTarget { target: Target::Dsp, value: -3.0 }]);
    }

    #[test]
    fn precision_bounds() {
        let mut s = jet_sample();
        s.hls_config.precision_int_bits = 20;
        assert!(matches!(validate_sample(&s).violations[..], [Violation::PrecisionBounds { .. }]));
        s.hls_config.precision_int_bits = 0;
        assert!(matches!(validate_sample(&s).violations[..], [Violation::PrecisionBounds { .. }]));
    }

    #[test]
    fn dense_with_stride_flagged() {
        let mut s = jet_sample();
        s.architecture.layers[2].stride = 2;
        assert!(validate_sample(&s).violations.contains(&Violation::DenseHyperparams { layer: 2 }));
    }
}
