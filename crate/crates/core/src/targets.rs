use serde::{Deserialize, Serialize};

/// The six regression targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Bram,
    Dsp,
    Ff,
    Lut,
    Cycles,
    Ii,
}

impl Target {
    pub const ALL: [Target; 6] = [
        Target::Bram,
        Target::Dsp,
        Target::Ff,
        Target::Lut,
        Target::Cycles,
        Target::Ii,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Target::Bram => "bram",
            Target::Dsp => "dsp",
            Target::Ff => "ff",
            Target::Lut => "lut",
            Target::Cycles => "cycles",
            Target::Ii => "ii",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Target::ALL.into_iter().find(|t| t.as_str().eq_ignore_ascii_case(s))
    }
}

impl std::fmt::Display for Target {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Resource counts and timing in raw units (components, clock cycles).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TargetVector {
    pub bram: f64,
    pub dsp: f64,
    pub ff: f64,
    pub lut: f64,
    pub cycles: f64,
    pub ii: f64,
}

impl TargetVector {
    pub fn from_array(v: [f64; 6]) -> Self {
        Self { bram: v[0], dsp: v[1], ff: v[2], lut: v[3], cycles: v[4], ii: v[5] }
    }

    pub fn to_array(self) -> [f64; 6] {
        [self.bram, self.dsp, self.ff, self.lut, self.cycles, self.ii]
    }

    pub fn get(&self, t: Target) -> f64 {
        self.to_array()[t.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (Target, f64)> {
        let a = self.to_array();
        Target::ALL.into_iter().map(move |t| (t, a[t.index()]))
    }
}
