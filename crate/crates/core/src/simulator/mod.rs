//! Seeded two-robot rendezvous scenarios and the staged localization
//! pipeline run over them.
//!
//! The image-based stages are replaced by surrogates: the coarse estimate
//! is the true relative pose plus Gaussian noise, and refinement is the
//! damped noisy oracle from [`crate::refinement`].

mod config;
mod pipeline;
mod scenario;

use std::fmt;
use std::str::FromStr;

pub use config::{
    DirectionPolicy, FieldOfView, ImlNoise, IrConfig, OdometryNoise, OutlierConfig, ScenarioConfig, TiltAxis,
    Trajectory,
};
pub use pipeline::{
    run_pipeline, run_pipeline_with_model, ErrorRow, Measurement, SimulationTrace, StageTrace,
};
pub use scenario::{curve_positions, generate_scenario, in_field_of_view, Scenario};

use crate::posegraph::PoseGraphError;
use crate::refinement::RefineError;

/// Random stream ids; each purpose draws from its own generator.
pub(crate) mod streams {
    pub const WOBBLE: u64 = 1;
    pub const ODOM_A: u64 = 2;
    pub const ODOM_B: u64 = 3;
    pub const IML: u64 = 4;
    pub const IR: u64 = 5;
    pub const OUTLIER: u64 = 6;
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimulationError {
    #[error("invalid config ({field}): {message}")]
    Config { field: String, message: String },
    #[error("infeasible scenario: {0}")]
    InfeasibleScenario(String),
    #[error("refinement failed at rendezvous {index}: {source}")]
    Refinement {
        index: usize,
        #[source]
        source: RefineError,
    },
    #[error("pose graph failed at rendezvous {index}: {source}")]
    PoseGraph {
        index: usize,
        #[source]
        source: PoseGraphError,
    },
    #[error("unknown stage '{0}'")]
    UnknownStage(String),
    #[error("i/o: {0}")]
    Io(String),
}

/// Which components of the pipeline are enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Iml,
    ImlIr,
    ImlPgo,
    Full,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Iml, Stage::ImlIr, Stage::ImlPgo, Stage::Full];

    pub fn uses_ir(self) -> bool {
        matches!(self, Stage::ImlIr | Stage::Full)
    }

    pub fn uses_pgo(self) -> bool {
        matches!(self, Stage::ImlPgo | Stage::Full)
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Iml => "iml",
            Stage::ImlIr => "iml+ir",
            Stage::ImlPgo => "iml+pgo",
            Stage::Full => "full",
        }
    }

    /// Comma-separated list such as `iml,iml+ir,full`.
    pub fn parse_list(s: &str) -> Result<Vec<Stage>, SimulationError> {
        let mut out: Vec<Stage> = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let stage = part.parse()?;
            if !out.contains(&stage) {
                out.push(stage);
            }
        }
        if out.is_empty() {
            return Err(SimulationError::UnknownStage(s.to_string()));
        }
        Ok(out)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = SimulationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "iml" => Ok(Stage::Iml),
            "iml+ir" => Ok(Stage::ImlIr),
            "iml+pgo" => Ok(Stage::ImlPgo),
            "full" | "iml+ir+pgo" => Ok(Stage::Full),
            _ => Err(SimulationError::UnknownStage(s.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_round_trip() {
        for s in Stage::ALL {
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
        }
        assert_eq!(Stage::parse_list("iml, full,iml+ir+pgo").unwrap(), vec![Stage::Iml, Stage::Full]);
        assert!(Stage::parse_list("iml,bogus").is_err());
        assert!(Stage::parse_list("").is_err());
    }
}
