//! Monte Carlo PV deployment scenarios and hourly generation profiles.
//!
//! Sampling uses ChaCha20 with hand-written index sampling so that a given
//! `(master_seed, scenario_id, level)` yields the same placements on every
//! platform and crate version.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feeder::{Customer, CustomerClass, FeederModel, PvUnit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationProfile {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub notes: String,
    #[serde(default)]
    pub daily_energy_kwh_per_kw: Option<f64>,
    pub hourly: [f64; 24],
}

impl GenerationProfile {
    pub fn validate(&self) -> Result<()> {
        if let Some(h) = self.hourly.iter().position(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::Validation(format!("profile factor at hour {h} is outside [0, 1]")));
        }
        Ok(())
    }

    /// Energy of one kW of rating over the day, kWh.
    pub fn daily_energy(&self) -> f64 {
        self.hourly.iter().sum()
    }
}

pub fn load_profile(text: &str) -> Result<GenerationProfile> {
    let p: GenerationProfile = serde_json::from_str(text).map_err(Error::from_json)?;
    p.validate()?;
    Ok(p)
}

pub fn profile_value(profile: &GenerationProfile, hour: usize) -> Result<f64> {
    profile.hourly.get(hour).copied().ok_or(Error::HourOutOfRange(hour))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlacementMode {
    /// Each level extends the previous level's customer set.
    #[default]
    Incremental,
    /// Every level is sampled afresh.
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RatingFactors {
    pub residential: f64,
    pub commercial: f64,
    /// Relative half-width of a uniform random size multiplier; 0 gives the
    /// plain class rating.
    pub spread: f64,
}

impl Default for RatingFactors {
    fn default() -> Self {
        Self {
            residential: 1.0,
            commercial: 3.0,
            spread: 0.0,
        }
    }
}

impl RatingFactors {
    pub fn validate(&self) -> Result<()> {
        if !(self.residential > 0.0 && self.commercial > 0.0) || !(0.0..1.0).contains(&self.spread) {
            return Err(Error::Validation("rating factors must be positive and spread in [0, 1)".into()));
        }
        Ok(())
    }
}

/// PV rating for one customer, kW.
pub fn pv_rating(class: CustomerClass, feeder_peak_kw: f64, customer_count: usize, factors: &RatingFactors) -> f64 {
    let share = feeder_peak_kw / customer_count as f64;
    match class {
        CustomerClass::Residential => share * factors.residential,
        CustomerClass::Commercial => share * factors.commercial,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvScenario {
    pub scenario_id: usize,
    pub penetration_pct: u32,
    pub seed: u64,
    pub placements: Vec<PvUnit>,
}

impl PvScenario {
    pub fn empty(scenario_id: usize) -> Self {
        Self {
            scenario_id,
            penetration_pct: 0,
            seed: 0,
            placements: Vec::new(),
        }
    }

    pub fn total_rating(&self) -> f64 {
        self.placements.iter().map(|u| u.rating_kw).sum()
    }
}

/// Replayable collection of scenarios for one feeder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub master_seed: u64,
    pub levels: Vec<u32>,
    pub n_scenarios: usize,
    pub mode: PlacementMode,
    pub factors: RatingFactors,
    pub customer_count: usize,
    pub scenarios: Vec<PvScenario>,
}

impl ScenarioSet {
    pub fn get(&self, scenario_id: usize, level: u32) -> Option<&PvScenario> {
        self.scenarios
            .iter()
            .find(|s| s.scenario_id == scenario_id && s.penetration_pct == level)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(Error::from_json)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic seed derivation from a parent seed and a label.
pub fn derive_seed(parent: u64, label: u64) -> u64 {
    splitmix64(parent ^ splitmix64(label))
}

/// Uniform integer in `0..n` by rejection, free of modulo bias.
fn below(rng: &mut ChaCha20Rng, n: u64) -> u64 {
    let zone = u64::MAX - u64::MAX % n;
    loop {
        let x = rng.next_u64();
        if x < zone {
            return x % n;
        }
    }
}

fn unit_interval(rng: &mut ChaCha20Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn shuffled(n: usize, rng: &mut ChaCha20Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = below(rng, i as u64 + 1) as usize;
        idx.swap(i, j);
    }
    idx
}

/// Number of customers hosting PV at a penetration level.
pub fn placement_count(level: u32, customer_count: usize) -> usize {
    (level as f64 / 100.0 * customer_count as f64).round() as usize
}

fn make_unit(c: &Customer, rating_kw: f64) -> PvUnit {
    PvUnit {
        node: c.node.clone(),
        phases: c.phases,
        rating_kw,
        profile_id: None,
    }
}

/// Generates `n_scenarios × levels.len()` scenarios, ordered by scenario id
/// and then by level as given.
pub fn generate(
    feeder: &FeederModel,
    levels: &[u32],
    n_scenarios: usize,
    master_seed: u64,
    mode: PlacementMode,
    factors: &RatingFactors,
) -> Result<ScenarioSet> {
    factors.validate()?;
    let customers = feeder.customers();
    if customers.is_empty() {
        return Err(Error::Validation(format!("feeder `{}` has no customers", feeder.name)));
    }
    if let Some(l) = levels.iter().find(|&&l| l > 100) {
        return Err(Error::Validation(format!("penetration level {l}% exceeds 100%")));
    }
    let n = customers.len();
    let base: Vec<f64> = customers
        .iter()
        .map(|c| pv_rating(c.class, feeder.peak_kw, n, factors))
        .collect();

    let draw = |seed: u64| -> (Vec<usize>, Vec<f64>) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let order = shuffled(n, &mut rng);
        let scale: Vec<f64> = (0..n)
            .map(|_| {
                let u = unit_interval(&mut rng);
                1.0 + factors.spread * (2.0 * u - 1.0)
            })
            .collect();
        (order, scale)
    };

    let mut scenarios = Vec::with_capacity(n_scenarios * levels.len());
    for sid in 0..n_scenarios {
        let scenario_seed = derive_seed(master_seed, sid as u64);
        let shared = draw(scenario_seed);
        for &level in levels {
            let seed = match mode {
                PlacementMode::Incremental => scenario_seed,
                PlacementMode::Independent => derive_seed(scenario_seed, level as u64 + 1),
            };
            let fresh;
            let (order, scale) = match mode {
                PlacementMode::Incremental => &shared,
                PlacementMode::Independent => {
                    fresh = draw(seed);
                    &fresh
                }
            };
            let k = placement_count(level, n);
            let placements = order[..k]
                .iter()
                .map(|&c| make_unit(&customers[c], base[c] * scale[c]))
                .collect();
            scenarios.push(PvScenario {
                scenario_id: sid,
                penetration_pct: level,
                seed,
                placements,
            });
        }
    }
    Ok(ScenarioSet {
        master_seed,
        levels: levels.to_vec(),
        n_scenarios,
        mode,
        factors: *factors,
        customer_count: n,
        scenarios,
    })
}
