use serde::{Deserialize, Serialize};

/// Per-frame tracking mode. Ordered by severity: stable < ambiguous < recovery.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackingMode {
    Stable,
    Ambiguous,
    Recovery,
}

impl TrackingMode {
    pub fn is_stable(self) -> bool {
        self == TrackingMode::Stable
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TrackingMode::Stable => "stable",
            TrackingMode::Ambiguous => "ambiguous",
            TrackingMode::Recovery => "recovery",
        }
    }
}

impl std::fmt::Display for TrackingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}
