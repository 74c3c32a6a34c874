//! Ex-post settlement for renewable energy communities.
//!
//! Given metered consumption and production per member, per-member tariffs
//! and initial repartition keys, the engine finds the keys that minimize the
//! community's total electricity bill while staying within each member's
//! tolerance and self-sufficiency floor, then bills every member.
//!
//! The pipeline is [`metering`] → [`keygen`] → [`settlement`] → [`billing`],
//! with [`feasibility`] searching for the largest uniform floor and
//! [`oracle`] providing a brute-force reference for tiny instances. All of it
//! is generic over [`Scalar`]; the aliases below fix it to `f64`.

pub mod bench;
pub mod billing;
pub mod contract;
pub mod feasibility;
pub mod keygen;
pub mod metering;
pub mod oracle;
pub mod report;
pub mod settlement;
pub mod synthetic;
pub mod table;

pub use keyshare_lp::Scalar;

pub use billing::{baseline_bill, bill, bill_flows, savings_report, BillLine, Bills};
pub use contract::{Contracts, MemberContract, Prices};
pub use feasibility::{max_uniform_ssr, priority_floors, FloorSearch};
pub use keygen::{KeyMatrix, KeyStrategy};
pub use metering::{MeterSeries, PeriodGrid};
pub use settlement::{settle, SettleOptions, SettlementError, SettlementResult, SolveStrategy};
pub use table::PeriodTable;

pub type Series = MeterSeries<f64>;
pub type Keys = KeyMatrix<f64>;
pub type ContractSet = Contracts<f64>;
pub type Settlement = SettlementResult<f64>;
pub type Options = SettleOptions<f64>;
