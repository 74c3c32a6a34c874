//! Run settings from flags and an optional JSON config file, and the inputs
//! they point at.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::FixedOffset;
use clap::Args;
use keyshare::contract::{read_price_table, Contracts};
use keyshare::keygen::{generate_keys, read_explicit_keys, KeyStrategy};
use keyshare::metering::{ingest_dual, ingest_signed, parse_zone};
use keyshare::{ContractSet, Keys, PeriodGrid, Series, SolveStrategy};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::output::Manifest;

/// Settings shared by the commands that read meter data. Every field can
/// also come from the config file; flags win.
#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Settings {
    /// Meter CSV: consumption, or signed readings with --signed.
    #[arg(long, visible_alias = "consumption", value_name = "CSV")]
    pub meters: Option<PathBuf>,
    /// Production CSV for dual-channel input.
    #[arg(long, value_name = "CSV")]
    pub production: Option<PathBuf>,
    /// Read --meters as one signed channel, positive for net consumption.
    #[arg(long, num_args = 0, default_missing_value = "true")]
    pub signed: Option<bool>,
    /// JSON map from member to {buy, sell, local_buy, local_sell, deviation} in €/MWh.
    #[arg(long, value_name = "JSON")]
    pub prices: Option<PathBuf>,
    /// uniform, proportional-static, proportional-dynamic or explicit:<csv>.
    #[arg(long, value_name = "STRATEGY")]
    pub keys: Option<String>,
    /// Largest allowed deviation from the initial keys, in [0, 1].
    #[arg(long, value_name = "X")]
    pub max_deviation: Option<f64>,
    /// Self-sufficiency floor for every member, in [0, 1].
    #[arg(long, value_name = "FRACTION")]
    pub ssr_floor: Option<f64>,
    /// Per-member floors; config file only. Members listed here override --ssr-floor.
    #[arg(skip)]
    pub ssr_floors: Option<BTreeMap<String, f64>>,
    /// auto, monolithic, decomposed or column-generation.
    #[arg(long)]
    pub strategy: Option<String>,
    /// Zone for timestamps without an offset: UTC or a fixed offset like +01:00.
    #[arg(long, value_name = "ZONE")]
    pub tz: Option<String>,
    /// Metering period length.
    #[arg(long, value_name = "SECONDS")]
    pub cadence: Option<i64>,
    /// Accept deviation prices above the default cap.
    #[arg(long, num_args = 0, default_missing_value = "true")]
    pub uncapped_deviation: Option<bool>,
}

pub const DEFAULT_KEYS: &str = "proportional-static";

impl Settings {
    /// Fields set in `self` win over those in `base`.
    pub fn over(self, base: Settings) -> Settings {
        Settings {
            meters: self.meters.or(base.meters),
            production: self.production.or(base.production),
            signed: self.signed.or(base.signed),
            prices: self.prices.or(base.prices),
            keys: self.keys.or(base.keys),
            max_deviation: self.max_deviation.or(base.max_deviation),
            ssr_floor: self.ssr_floor.or(base.ssr_floor),
            ssr_floors: self.ssr_floors.or(base.ssr_floors),
            strategy: self.strategy.or(base.strategy),
            tz: self.tz.or(base.tz),
            cadence: self.cadence.or(base.cadence),
            uncapped_deviation: self.uncapped_deviation.or(base.uncapped_deviation),
        }
    }

    /// Applies the config file, if any, underneath the flags.
    pub fn resolve(self, config: Option<&Path>, manifest: &mut Manifest) -> Result<Settings, CliError> {
        let Some(path) = config else { return Ok(self) };
        let bytes = read_input(path, "config", manifest)?;
        let base: Settings = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Ok(self.over(base))
    }

    pub fn zone(&self) -> Result<Option<FixedOffset>, CliError> {
        self.tz.as_deref().map(parse_zone).transpose().map_err(CliError::Config)
    }

    pub fn strategy(&self) -> Result<SolveStrategy, CliError> {
        self.strategy
            .as_deref()
            .map_or(Ok(SolveStrategy::Auto), str::parse)
            .map_err(CliError::Config)
    }

    pub fn key_strategy(&self) -> Result<KeyStrategy, CliError> {
        Ok(self.keys.as_deref().unwrap_or(DEFAULT_KEYS).parse()?)
    }

    pub fn max_deviation(&self) -> Result<f64, CliError> {
        let x = self.max_deviation.unwrap_or(1.0);
        unit_interval("--max-deviation", x)
    }

    pub fn series(&self, manifest: &mut Manifest) -> Result<Series, CliError> {
        let zone = self.zone()?;
        let cadence = self.cadence.unwrap_or(PeriodGrid::DEFAULT_CADENCE);
        let meters = self
            .meters
            .as_deref()
            .ok_or_else(|| CliError::Config("no meter file; pass --meters".into()))?;
        let data = read_input(meters, "meters", manifest)?;
        let at = |path: &Path| {
            let path = path.to_path_buf();
            move |source| CliError::Meter { path, source }
        };
        let grid = PeriodGrid::infer(data.as_slice(), cadence, zone).map_err(at(meters))?;
        if self.signed.unwrap_or(false) {
            if self.production.is_some() {
                return Err(CliError::Config("--production cannot be combined with --signed".into()));
            }
            return ingest_signed(data.as_slice(), &grid, zone).map_err(at(meters));
        }
        let production = self.production.as_deref().ok_or_else(|| {
            CliError::Config("dual-channel input needs --production; pass --signed for one signed channel".into())
        })?;
        let prod = read_input(production, "production", manifest)?;
        ingest_dual(data.as_slice(), prod.as_slice(), &grid, zone).map_err(at(production))
    }

    /// Initial keys. Explicit key files are hashed into the manifest.
    pub fn initial_keys(&self, series: &Series, manifest: &mut Manifest) -> Result<Keys, CliError> {
        let strategy = self.key_strategy()?;
        if let KeyStrategy::Explicit(path) = &strategy {
            let path = Path::new(path);
            let data = read_input(path, "keys", manifest)?;
            return Ok(read_explicit_keys(data.as_slice(), series, self.zone()?)?);
        }
        Ok(generate_keys(&strategy, series, self.zone()?)?)
    }

    pub fn contracts(&self, series: &Series, manifest: &mut Manifest) -> Result<ContractSet, CliError> {
        let path = self
            .prices
            .as_deref()
            .ok_or_else(|| CliError::Config("no price table; pass --prices".into()))?;
        let data = read_input(path, "prices", manifest)?;
        let table = read_price_table(data.as_slice())?;
        let floor = unit_interval("--ssr-floor", self.ssr_floor.unwrap_or(0.0))?;
        let cap = !self.uncapped_deviation.unwrap_or(false);
        let contracts = Contracts::from_price_table(&table, series, self.max_deviation()?, floor, cap)?;
        let Some(per_member) = &self.ssr_floors else {
            return Ok(contracts);
        };
        let mut floors = contracts.floors();
        for (name, &value) in per_member {
            let i = series
                .member_index(name)
                .ok_or_else(|| CliError::Config(format!("ssr_floors names unknown member `{name}`")))?;
            floors[i] = unit_interval("ssr_floors", value)?;
        }
        Ok(contracts.with_floors(&floors))
    }
}

fn unit_interval(name: &str, x: f64) -> Result<f64, CliError> {
    if (0.0..=1.0).contains(&x) {
        Ok(x)
    } else {
        Err(CliError::Config(format!("{name} must be in [0, 1], got {x}")))
    }
}

/// Reads a file and records its hash under `role`.
pub fn read_input(path: &Path, role: &str, manifest: &mut Manifest) -> Result<Vec<u8>, CliError> {
    let data = fs::read(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    manifest.input(role, path, &data);
    Ok(data)
}
