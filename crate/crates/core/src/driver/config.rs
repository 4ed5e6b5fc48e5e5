use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coupler::{Attachment, CoSimOptions, CoSimSystem};
use crate::error::{Error, Result};
use crate::feeder::{load_feeder, FeederModel};
use crate::fixtures;
use crate::netmodel::{load_network, TransmissionNetwork};
use crate::oracle::OracleOptions;
use crate::scenarios::{load_profile, GenerationProfile, PlacementMode, RatingFactors};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Cosim,
    Oracle,
    Both,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosim" => Ok(Mode::Cosim),
            "oracle" => Ok(Mode::Oracle),
            "both" => Ok(Mode::Both),
            other => Err(Error::Config(format!("unknown mode `{other}`; expected cosim, oracle or both"))),
        }
    }
}

/// Feeder copies at one transmission bus, split into `groups` attachments
/// with rotating phase order and independent PV scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttachmentSpec {
    pub bus: i64,
    pub copies: usize,
    #[serde(default = "one")]
    pub groups: usize,
}

fn one() -> usize {
    1
}

fn default_attachments() -> Vec<AttachmentSpec> {
    fixtures::DESK_COPIES
        .iter()
        .map(|&(bus, copies)| AttachmentSpec {
            bus,
            copies,
            groups: fixtures::DESK_GROUPS,
        })
        .collect()
}

fn default_levels() -> Vec<u32> {
    (1..=10).map(|l| l * 10).collect()
}

fn default_hours() -> Vec<usize> {
    vec![12]
}

fn default_scenarios() -> usize {
    100
}

fn default_threshold() -> f64 {
    1e-3
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_true() -> bool {
    true
}

/// Everything one sweep needs. Data paths are relative to the config file;
/// omitted paths select the bundled fixtures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub network: Option<PathBuf>,
    #[serde(default)]
    pub feeder: Option<PathBuf>,
    #[serde(default)]
    pub profile: Option<PathBuf>,
    #[serde(default = "default_attachments")]
    pub attachments: Vec<AttachmentSpec>,
    #[serde(default = "default_levels")]
    pub levels: Vec<u32>,
    #[serde(default = "default_scenarios")]
    pub n_scenarios: usize,
    #[serde(default = "default_hours")]
    pub hours: Vec<usize>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    /// Worker threads; 0 picks the number of cores.
    #[serde(default)]
    pub jobs: usize,
    #[serde(default)]
    pub placement: PlacementMode,
    #[serde(default)]
    pub factors: RatingFactors,
    #[serde(default)]
    pub cosim: CoSimOptions,
    #[serde(default)]
    pub oracle: OracleOptions,
    /// Largest co-simulation vs oracle PCC voltage difference accepted, pu.
    #[serde(default = "default_threshold")]
    pub compare_threshold: f64,
    /// Write the per-iteration boundary trace.
    #[serde(default = "default_true")]
    pub trace: bool,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config uses defaults")
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn read(&self, p: &Option<PathBuf>, bundled: &'static str) -> Result<String> {
        match p {
            Some(p) => {
                let path = self.resolve(p);
                std::fs::read_to_string(&path).map_err(|e| Error::io(path, e))
            }
            None => Ok(bundled.to_string()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::Config("levels must not be empty".into()));
        }
        if let Some(l) = self.levels.iter().find(|&&l| l == 0 || l > 100) {
            return Err(Error::Config(format!("level {l} is outside 1..=100")));
        }
        if self.hours.is_empty() {
            return Err(Error::Config("hours must not be empty".into()));
        }
        if let Some(&h) = self.hours.iter().find(|&&h| h > 23) {
            return Err(Error::HourOutOfRange(h));
        }
        if self.n_scenarios == 0 {
            return Err(Error::Config("n_scenarios must be positive".into()));
        }
        if self.attachments.is_empty() {
            return Err(Error::Config("at least one attachment is required".into()));
        }
        for a in &self.attachments {
            if a.groups == 0 || a.copies < a.groups {
                return Err(Error::Config(format!(
                    "attachment at bus {} needs 1 <= groups <= copies",
                    a.bus
                )));
            }
        }
        for p in [&self.network, &self.feeder, &self.profile].into_iter().flatten() {
            let path = self.resolve(p);
            if !path.is_file() {
                return Err(Error::Config(format!("file {} does not exist", path.display())));
            }
        }
        self.cosim.validate()?;
        self.factors.validate()
    }

    pub fn load_inputs(&self) -> Result<Inputs> {
        self.validate()?;
        let network = load_network(&self.read(&self.network, fixtures::IEEE9_JSON)?)?;
        let feeder = load_feeder(&self.read(&self.feeder, fixtures::IEEE13_JSON)?)?;
        let profile = load_profile(&self.read(&self.profile, fixtures::PV_PROFILE_JSON)?)?;
        let mut atts = Vec::new();
        for spec in &self.attachments {
            for (g, copies) in fixtures::split_copies(spec.copies, spec.groups).into_iter().enumerate() {
                atts.push(Attachment::new(spec.bus, feeder.clone(), copies).rotated(g % 3));
            }
        }
        let system = CoSimSystem::new(&network, atts)?;
        Ok(Inputs {
            network,
            feeder,
            profile,
            system,
        })
    }
}

/// Parsed and validated data files.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub network: TransmissionNetwork,
    pub feeder: FeederModel,
    pub profile: GenerationProfile,
    pub system: CoSimSystem,
}

/// Parses `"10,20,30"`, `"10-100"` (step 1) or `"10-100:10"`.
pub fn parse_list(text: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let bad = || Error::Config(format!("cannot parse `{part}` as a number or range"));
        let (range, step) = match part.split_once(':') {
            Some((r, s)) => (r, s.parse::<u64>().map_err(|_| bad())?),
            None => (part, 1),
        };
        match range.split_once('-') {
            Some((a, b)) => {
                let (a, b) = (a.parse::<u64>().map_err(|_| bad())?, b.parse::<u64>().map_err(|_| bad())?);
                if step == 0 || a > b {
                    return Err(bad());
                }
                out.extend((a..=b).step_by(step as usize));
            }
            None => out.push(range.parse().map_err(|_| bad())?),
        }
    }
    Ok(out)
}
