use std::io;
use std::path::PathBuf;

use keyshare::bench::BenchError;
use keyshare::billing::BillingError;
use keyshare::contract::ContractError;
use keyshare::keygen::KeyError;
use keyshare::metering::MeterError;
use keyshare::oracle::OracleError;
use keyshare::SettlementError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Read { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Write { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Meter { path: PathBuf, source: MeterError },
    #[error(transparent)]
    Keys(#[from] KeyError),
    #[error(transparent)]
    Contract(#[from] ContractError),
    #[error(transparent)]
    Settlement(#[from] SettlementError),
    #[error(transparent)]
    Billing(#[from] BillingError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Bench(#[from] BenchError),
}

impl CliError {
    /// Prefix category for `ERROR:<category>:` lines.
    pub fn category(&self) -> &'static str {
        match self {
            Self::Usage(_) => "usage",
            Self::Config(_) | Self::Contract(_) | Self::Keys(KeyError::UnknownStrategy(_)) => "config",
            Self::Read { .. } | Self::Meter { .. } | Self::Keys(_) | Self::Billing(_) => "input",
            Self::Write { .. } => "io",
            Self::Settlement(e) | Self::Bench(BenchError::Settlement(e)) => settlement_category(e),
            Self::Oracle(_) => "oracle",
            Self::Bench(BenchError::Size { .. }) => "config",
            Self::Bench(_) => "input",
        }
    }

    /// 2 for infeasible floors, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        if self.category() == "infeasible" {
            2
        } else {
            1
        }
    }
}

fn settlement_category(e: &SettlementError) -> &'static str {
    match e {
        SettlementError::Infeasible(_) => "infeasible",
        SettlementError::Shape(_) => "input",
        _ => "solver",
    }
}
