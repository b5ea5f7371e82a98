use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gelsim::rng::split_seed;
use gelsim::DistSpec;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ExperimentId {
    E1,
    E2,
    E3,
    E4,
    E5,
    E6,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 6] = [Self::E1, Self::E2, Self::E3, Self::E4, Self::E5, Self::E6];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::E1 => "E1",
            Self::E2 => "E2",
            Self::E3 => "E3",
            Self::E4 => "E4",
            Self::E5 => "E5",
            Self::E6 => "E6",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Self::E1 => "first gelation time scaling",
            Self::E2 => "cluster mass tail exponents",
            Self::E3 => "Monte Carlo census against the rate equations",
            Self::E4 => "largest components in the critical window",
            Self::E5 => "typical clusters against delayed Galton-Watson trees",
            Self::E6 => "final census against limiting concentrations",
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentId {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|id| id.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                HarnessError::Config(format!("unknown experiment {s:?}, expected E1..E6"))
            })
    }
}

/// How the freezing threshold depends on `N`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaRule {
    /// `alpha = ceil(N^e)`.
    Exponent(f64),
    Explicit(u64),
}

impl AlphaRule {
    pub fn resolve(self, n: usize) -> Result<u64> {
        let alpha = match self {
            Self::Exponent(e) => {
                if !(e > 0.0 && e <= 1.0) {
                    return Err(HarnessError::Config(format!(
                        "alpha exponent {e} must lie in (0, 1]"
                    )));
                }
                (n as f64).powf(e).ceil() as u64
            }
            Self::Explicit(a) => a,
        };
        if alpha < 2 || alpha > n as u64 {
            return Err(HarnessError::Config(format!(
                "alpha = {alpha} must lie in [2, N] for N = {n}"
            )));
        }
        Ok(alpha)
    }
}

/// A fully resolved experiment configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub dist: DistSpec,
    pub n: Vec<usize>,
    pub alpha: AlphaRule,
    pub replicates: usize,
    pub seed: u64,
    pub out: PathBuf,
    /// Observation times (E2, E3, E5) or the final time (E6).
    pub times: Vec<f64>,
    /// Typical clusters sampled per time (E5).
    pub samples: usize,
    /// Rate-equation mass window (E3).
    pub m_max: usize,
}

impl ExperimentConfig {
    /// Defaults of each experiment: Poisson(2) (Poisson(1.05) for E4),
    /// `N = 10^6` and `alpha = 10^5`.
    pub fn defaults(id: ExperimentId) -> Self {
        let mut c = Self {
            experiment: id,
            dist: DistSpec::Poisson(2.0),
            n: vec![1_000_000],
            alpha: AlphaRule::Explicit(100_000),
            replicates: 1,
            seed: 20_240_601,
            out: PathBuf::from("out").join(id.as_str()),
            times: Vec::new(),
            samples: 20_000,
            m_max: gelsim::smoluchowski::DEFAULT_M_MAX,
        };
        match id {
            ExperimentId::E1 => {
                c.n = vec![100_000, 300_000, 1_000_000];
                c.alpha = AlphaRule::Exponent(0.85);
                c.replicates = 10;
            }
            ExperimentId::E2 => c.times = vec![0.4, 1.2],
            ExperimentId::E3 => c.times = vec![0.3, 0.6],
            ExperimentId::E4 => {
                c.dist = DistSpec::Poisson(1.05);
                c.n = vec![100_000];
                c.replicates = 50;
            }
            ExperimentId::E5 => c.times = vec![0.4, 2.0],
            ExperimentId::E6 => c.times = vec![15.0],
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.replicates == 0 {
            return bad("replicate count must be at least 1".into());
        }
        if self.n.is_empty() || self.n.contains(&0) {
            return bad("need at least one positive N".into());
        }
        if self.experiment != ExperimentId::E4 {
            for &n in &self.n {
                self.alpha.resolve(n)?;
            }
        }
        if self.times.iter().any(|&t| !(t.is_finite() && t >= 0.0)) {
            return bad("observation times must be finite and non-negative".into());
        }
        let needs_times = matches!(
            self.experiment,
            ExperimentId::E2 | ExperimentId::E3 | ExperimentId::E5 | ExperimentId::E6
        );
        if needs_times && self.times.is_empty() {
            return bad(format!("{} needs at least one time", self.experiment));
        }
        if self.experiment == ExperimentId::E5 && self.samples == 0 {
            return bad("E5 needs a positive sample count".into());
        }
        if self.experiment == ExperimentId::E3 && self.m_max < 6 {
            return bad("E3 needs m_max >= 6".into());
        }
        self.dist
            .to_pmf()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }

    /// Seed of replicate `index`: `hash64(master_seed, experiment_id, index)`.
    pub fn replicate_seed(&self, index: usize) -> u64 {
        split_seed(self.seed, self.experiment.as_str(), index as u64)
    }

    /// Applies the values present in `file`.
    pub fn merge(&mut self, file: ConfigFile) {
        if let Some(v) = file.dist {
            self.dist = v;
        }
        if let Some(v) = file.n {
            self.n = v;
        }
        if let Some(v) = file.alpha {
            self.alpha = v;
        }
        if let Some(v) = file.replicates {
            self.replicates = v;
        }
        if let Some(v) = file.seed {
            self.seed = v;
        }
        if let Some(v) = file.out {
            self.out = v;
        }
        if let Some(v) = file.times {
            self.times = v;
        }
        if let Some(v) = file.samples {
            self.samples = v;
        }
        if let Some(v) = file.m_max {
            self.m_max = v;
        }
    }
}

/// Partial configuration read from a JSON file; absent keys keep the
/// experiment defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub experiment: Option<ExperimentId>,
    pub dist: Option<DistSpec>,
    pub n: Option<Vec<usize>>,
    pub alpha: Option<AlphaRule>,
    pub replicates: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub times: Option<Vec<f64>>,
    pub samples: Option<usize>,
    pub m_max: Option<usize>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_rules() {
        assert_eq!(
            AlphaRule::Exponent(0.85).resolve(1_000_000).unwrap(),
            125_893
        );
        assert_eq!(
            AlphaRule::Explicit(100_000).resolve(1_000_000).unwrap(),
            100_000
        );
        assert!(AlphaRule::Explicit(11).resolve(10).is_err());
        assert!(AlphaRule::Explicit(1).resolve(10).is_err());
        assert!(AlphaRule::Exponent(1.5).resolve(10).is_err());
    }

    #[test]
    fn defaults_validate() {
        for id in ExperimentId::ALL {
            ExperimentConfig::defaults(id).validate().unwrap();
        }
        let mut c = ExperimentConfig::defaults(ExperimentId::E1);
        c.replicates = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn ids_parse() {
        assert_eq!("e3".parse::<ExperimentId>().unwrap(), ExperimentId::E3);
        assert!("E7".parse::<ExperimentId>().is_err());
    }

    #[test]
    fn file_values_override_defaults() {
        let file: ConfigFile = serde_json::from_str(
            r#"{"dist": "poisson:1.5", "n": [1000], "alpha": {"explicit": 50}}"#,
        )
        .unwrap();
        let mut c = ExperimentConfig::defaults(ExperimentId::E2);
        c.merge(file);
        assert_eq!(c.dist, DistSpec::Poisson(1.5));
        assert_eq!(c.n, vec![1000]);
        assert_eq!(c.alpha, AlphaRule::Explicit(50));
        assert_eq!(c.times, vec![0.4, 1.2]);
        assert!(serde_json::from_str::<ConfigFile>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn replicate_seeds_differ_by_index_and_experiment() {
        let a = ExperimentConfig::defaults(ExperimentId::E1);
        let mut b = a.clone();
        b.experiment = ExperimentId::E2;
        assert_ne!(a.replicate_seed(0), a.replicate_seed(1));
        assert_ne!(a.replicate_seed(0), b.replicate_seed(0));
        assert_eq!(a.replicate_seed(3), split_seed(a.seed, "E1", 3));
    }
}
