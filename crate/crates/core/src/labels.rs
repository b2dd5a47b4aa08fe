//! The 14 chest-radiograph finding categories used as the classification
//! target space.

use std::fmt;

use serde::{Deserialize, Serialize};

pub const NUM_LABELS: usize = 14;

pub const LABEL_NAMES: [&str; NUM_LABELS] = [
    "No Finding",
    "Enlarged Cardiomediastinum",
    "Cardiomegaly",
    "Lung Opacity",
    "Lung Lesion",
    "Edema",
    "Consolidation",
    "Pneumonia",
    "Atelectasis",
    "Pneumothorax",
    "Pleural Effusion",
    "Pleural Other",
    "Fracture",
    "Support Devices",
];

/// Binary multi-label target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Labels(pub [bool; NUM_LABELS]);

impl Labels {
    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn set(&mut self, i: usize, on: bool) {
        self.0[i] = on;
    }

    pub fn to_f64(&self) -> [f64; NUM_LABELS] {
        self.0.map(|b| if b { 1.0 } else { 0.0 })
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|b| **b).count()
    }

    /// Parses `0,1,0,...` with exactly 14 entries.
    pub fn parse(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != NUM_LABELS {
            return Err(format!("expected {NUM_LABELS} labels, got {}", parts.len()));
        }
        let mut out = [false; NUM_LABELS];
        for (slot, p) in out.iter_mut().zip(parts) {
            *slot = match p {
                "0" => false,
                "1" => true,
                other => return Err(format!("label value {other:?} is not 0 or 1")),
            };
        }
        Ok(Self(out))
    }
}

impl fmt::Display for Labels {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, b) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            f.write_str(if *b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_display_round_trip() {
        let s = "1,0,0,0,0,0,0,0,0,0,1,0,0,1";
        let l = Labels::parse(s).unwrap();
        assert_eq!(l.count(), 3);
        assert_eq!(l.to_string(), s);
        assert!(Labels::parse("1,0").is_err());
        assert!(Labels::parse("1,0,0,0,0,0,0,0,0,0,2,0,0,1").is_err());
    }
}
