use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, ValueEnum};
use keyshare::bench::{run_bench, BenchConfig, FloorPlan};
use keyshare::billing::{bill_flows, Bills};
use keyshare::metering::read_matrix;
use keyshare::oracle::grid_search_settle;
use keyshare::report::{fmt_fixed, fmt_money, fmt_quantity, round_to, write_bills, write_matrix, SettlementSummary};
use keyshare::settlement::{build_lp, literal_size};
use keyshare::{
    baseline_bill, bill, max_uniform_ssr, savings_report, settle, ContractSet, Keys, Options, PeriodTable, Series,
    Settlement, SettlementError,
};
use keyshare_lp::mps::write_fixed_mps;
use serde::Serialize;

use crate::error::CliError;
use crate::output::{Manifest, Outputs};
use crate::settings::{read_input, Settings};

/// Where a command reads its config and writes its artifacts.
pub struct Run<'a> {
    pub config: Option<&'a Path>,
    pub out: &'a Path,
}

fn matrix(table: &PeriodTable<f64>, series: &Series) -> Vec<u8> {
    let mut buf = Vec::new();
    write_matrix(table, series, &mut buf).expect("writing to memory");
    buf
}

fn bills_csv(bills: &Bills<f64>, series: &Series) -> Vec<u8> {
    let mut buf = Vec::new();
    write_bills(bills, series, &mut buf).expect("writing to memory");
    buf
}

fn options(settings: &Settings) -> Result<Options, CliError> {
    Ok(Options::default().with_strategy(settings.strategy()?))
}

fn report_timing(what: &str, result: &Settlement) {
    let s = &result.statistics;
    eprintln!(
        "{what}: {} strategy, {} rows, build {:.3} s, solve {:.3} s",
        result.strategy, s.rows, s.build_seconds, s.solve_seconds
    );
}

#[derive(Args, Debug)]
pub struct SettleArgs {
    #[command(flatten)]
    pub settings: Settings,
    /// Also run the grid-search oracle and write oracle.json (tiny inputs only).
    #[arg(long)]
    pub oracle: bool,
    /// Oracle grid step.
    #[arg(long, default_value_t = 0.01, value_name = "STEP")]
    pub step: f64,
    /// Write the full linear program as model.mps.
    #[arg(long)]
    pub dump_mps: bool,
}

#[derive(Serialize)]
struct SettleRecord<'a> {
    #[serde(flatten)]
    settings: &'a Settings,
    oracle_step: Option<f64>,
    dump_mps: bool,
}

pub fn cmd_settle(args: SettleArgs, run: Run) -> Result<(), CliError> {
    let mut manifest = Manifest::new("settle");
    let settings = args.settings.resolve(run.config, &mut manifest)?;
    manifest.settings(&SettleRecord {
        settings: &settings,
        oracle_step: args.oracle.then_some(args.step),
        dump_mps: args.dump_mps,
    });
    let series = settings.series(&mut manifest)?;
    let keys = settings.initial_keys(&series, &mut manifest)?;
    let contracts = settings.contracts(&series, &mut manifest)?;
    let mut outputs = Outputs::new(run.out);
    outputs.add("initial_keys.csv", matrix(keys.table(), &series));
    if args.dump_mps {
        let lp = build_lp(&series, &contracts, &keys)?;
        let mut buf = Vec::new();
        write_fixed_mps(&lp.model, "KEYSHARE", &mut buf).expect("writing to memory");
        outputs.add("model.mps", buf);
    }

    let result = match settle(&series, &contracts, &keys, &options(&settings)?) {
        Ok(r) => r,
        Err(SettlementError::Infeasible(report)) => {
            outputs.add_json("infeasibility.json", &report);
            outputs.finish(manifest, "infeasible")?;
            return Err(SettlementError::Infeasible(report).into());
        }
        Err(e) => return Err(e.into()),
    };
    report_timing("settle", &result);
    let bills = bill(&series, &contracts, &result)?;
    let baseline = baseline_bill(&series, &contracts);
    let savings = savings_report(&series, &bills, &baseline)?;
    let full = literal_size(&series, &contracts, &keys)?;
    let summary = SettlementSummary::new(
        &series,
        &contracts.floors(),
        &result,
        contracts.total_deviation_price(),
        &savings,
        full,
    );
    outputs.add("keys.csv", matrix(&result.keys, &series));
    outputs.add("allocations.csv", matrix(&result.allocated, &series));
    outputs.add("verified.csv", matrix(&result.verified, &series));
    outputs.add("local_sales.csv", matrix(&result.local_sales, &series));
    outputs.add("bills.csv", bills_csv(&bills, &series));
    outputs.add_json("summary.json", &summary);
    if args.oracle {
        let (report, _) = oracle_check(&series, &contracts, &keys, args.step, &result)?;
        outputs.add_json("oracle.json", &report);
    }
    println!(
        "objective {} €, community bills {} €, baseline {} €",
        fmt_money(summary.objective),
        fmt_money(summary.community_total),
        fmt_money(summary.baseline_total)
    );
    outputs.finish(manifest, "optimal")
}

#[derive(Debug, Serialize)]
struct OracleReport {
    step: f64,
    oracle_objective: f64,
    lp_objective: f64,
    /// Oracle minus LP objective, €.
    gap: f64,
    lipschitz: f64,
    /// `lipschitz · step`, the largest gap a correct LP optimum allows.
    bound: f64,
    evaluated: usize,
    consistent: bool,
}

fn oracle_check(
    series: &Series,
    contracts: &ContractSet,
    keys: &Keys,
    step: f64,
    lp: &Settlement,
) -> Result<(OracleReport, PeriodTable<f64>), CliError> {
    let oracle = grid_search_settle(series, contracts, keys, step)?;
    let gap = oracle.objective - lp.objective;
    let bound = oracle.lipschitz * step;
    let report = OracleReport {
        step,
        oracle_objective: oracle.objective,
        lp_objective: lp.objective,
        gap,
        lipschitz: oracle.lipschitz,
        bound,
        evaluated: oracle.evaluated,
        consistent: gap >= -1e-6 && gap <= bound + 1e-9,
    };
    Ok((report, oracle.keys))
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[command(flatten)]
    pub settings: Settings,
    /// Grid step; must divide 1.
    #[arg(long, default_value_t = 0.01, value_name = "STEP")]
    pub step: f64,
}

pub fn cmd_oracle(args: OracleArgs, run: Run) -> Result<(), CliError> {
    let mut manifest = Manifest::new("oracle");
    let settings = args.settings.resolve(run.config, &mut manifest)?;
    manifest.settings(&SettleRecord {
        settings: &settings,
        oracle_step: Some(args.step),
        dump_mps: false,
    });
    let series = settings.series(&mut manifest)?;
    let keys = settings.initial_keys(&series, &mut manifest)?;
    let contracts = settings.contracts(&series, &mut manifest)?;
    let lp = settle(&series, &contracts, &keys, &options(&settings)?)?;
    let started = Instant::now();
    let (report, best) = oracle_check(&series, &contracts, &keys, args.step, &lp)?;
    eprintln!(
        "oracle: {} grid points in {:.3} s",
        report.evaluated,
        started.elapsed().as_secs_f64()
    );
    println!("oracle objective {:.6} €", report.oracle_objective);
    println!("lp objective     {:.6} €", report.lp_objective);
    println!("gap {:.3e} €, bound {:.3e} €, consistent {}", report.gap, report.bound, report.consistent);
    let mut outputs = Outputs::new(run.out);
    outputs.add("oracle_keys.csv", matrix(&best, &series));
    outputs.add_json("oracle.json", &report);
    outputs.finish(manifest, "optimal")
}

#[derive(Args, Debug)]
pub struct KeysArgs {
    #[command(flatten)]
    pub settings: Settings,
}

pub fn cmd_keys(args: KeysArgs, run: Run) -> Result<(), CliError> {
    let mut manifest = Manifest::new("keys");
    let settings = args.settings.resolve(run.config, &mut manifest)?;
    manifest.settings(&settings);
    let series = settings.series(&mut manifest)?;
    let keys = settings.initial_keys(&series, &mut manifest)?;
    let mut outputs = Outputs::new(run.out);
    outputs.add("keys.csv", matrix(keys.table(), &series));
    println!(
        "{} keys for {} members over {} periods",
        settings.key_strategy()?,
        series.num_members(),
        series.num_periods()
    );
    outputs.finish(manifest, "optimal")
}

#[derive(Args, Debug)]
pub struct BillArgs {
    #[command(flatten)]
    pub settings: Settings,
    /// Directory holding verified.csv and local_sales.csv from a settlement.
    #[arg(long, value_name = "DIR")]
    pub settlement: PathBuf,
}

#[derive(Serialize)]
struct BillRecord<'a> {
    #[serde(flatten)]
    settings: &'a Settings,
    settlement: &'a Path,
}

#[derive(Serialize)]
struct BillSummary {
    community_total: f64,
    baseline_total: f64,
    per_member: Vec<keyshare::billing::MemberSavings>,
}

pub fn cmd_bill(args: BillArgs, run: Run) -> Result<(), CliError> {
    let mut manifest = Manifest::new("bill");
    let settings = args.settings.resolve(run.config, &mut manifest)?;
    manifest.settings(&BillRecord {
        settings: &settings,
        settlement: &args.settlement,
    });
    let series = settings.series(&mut manifest)?;
    let contracts = settings.contracts(&series, &mut manifest)?;
    let zone = settings.zone()?;
    let mut load = |name: &str, role: &str| -> Result<PeriodTable<f64>, CliError> {
        let path = args.settlement.join(name);
        let data = read_input(&path, role, &mut manifest)?;
        read_matrix(data.as_slice(), &series, zone).map_err(|source| CliError::Meter { path, source })
    };
    let verified = load("verified.csv", "verified")?;
    let local_sales = load("local_sales.csv", "local_sales")?;
    let bills = bill_flows(&series, &contracts, &verified, &local_sales)?;
    let baseline = baseline_bill(&series, &contracts);
    let savings = savings_report(&series, &bills, &baseline)?;
    let money = |x: f64| round_to(x, 4);
    let summary = BillSummary {
        community_total: money(bills.total()),
        baseline_total: money(baseline.total()),
        per_member: savings
            .into_iter()
            .map(|mut s| {
                s.community_total = money(s.community_total);
                s.baseline_total = money(s.baseline_total);
                s.delta_percent = s.delta_percent.map(|d| round_to(d, 2));
                s
            })
            .collect(),
    };
    println!(
        "community bills {} €, baseline {} €",
        fmt_money(summary.community_total),
        fmt_money(summary.baseline_total)
    );
    let mut outputs = Outputs::new(run.out);
    outputs.add("bills.csv", bills_csv(&bills, &series));
    outputs.add("baseline_bills.csv", bills_csv(&baseline, &series));
    outputs.add_json("savings.json", &summary);
    outputs.finish(manifest, "optimal")
}

#[derive(Args, Debug)]
pub struct FeasibilityArgs {
    #[command(flatten)]
    pub settings: Settings,
    /// Stop once the feasible and infeasible probes are this close.
    #[arg(long, default_value_t = 1e-4, value_name = "GAP")]
    pub tolerance: f64,
}

#[derive(Serialize)]
struct FeasibilityRecord<'a> {
    #[serde(flatten)]
    settings: &'a Settings,
    tolerance: f64,
}

#[derive(Serialize)]
struct MemberSsr {
    member: String,
    ssr: f64,
}

#[derive(Serialize)]
struct FeasibilityReport {
    floor: f64,
    infeasible_at: Option<f64>,
    probes: usize,
    objective: f64,
    ssr: Vec<MemberSsr>,
}

pub fn cmd_feasibility(args: FeasibilityArgs, run: Run) -> Result<(), CliError> {
    let mut manifest = Manifest::new("feasibility");
    let settings = args.settings.resolve(run.config, &mut manifest)?;
    manifest.settings(&FeasibilityRecord {
        settings: &settings,
        tolerance: args.tolerance,
    });
    if !(args.tolerance > 0.0 && args.tolerance < 1.0) {
        return Err(CliError::Config(format!("--tolerance must be in (0, 1), got {}", args.tolerance)));
    }
    let series = settings.series(&mut manifest)?;
    let keys = settings.initial_keys(&series, &mut manifest)?;
    let contracts = settings.contracts(&series, &mut manifest)?;
    let options = options(&settings)?;
    let started = Instant::now();
    let search = max_uniform_ssr(&series, &contracts, &keys, args.tolerance, &options)?;
    eprintln!("feasibility: {} probes in {:.3} s", search.probes, started.elapsed().as_secs_f64());
    let at = settle(&series, &contracts.with_uniform_floor(search.floor), &keys, &options)?;
    report_timing("settle at s*", &at);
    let report = FeasibilityReport {
        floor: search.floor,
        infeasible_at: search.infeasible_at,
        probes: search.probes,
        objective: round_to(at.objective, 4),
        ssr: series
            .members()
            .iter()
            .zip(&at.ssr)
            .map(|(m, &s)| MemberSsr {
                member: m.clone(),
                ssr: round_to(s, 6),
            })
            .collect(),
    };
    println!("s* = {}", fmt_quantity(report.floor));
    println!("probes = {}", report.probes);
    for m in &report.ssr {
        println!("{} {}", m.member, fmt_quantity(m.ssr));
    }
    let mut outputs = Outputs::new(run.out);
    outputs.add_json("feasibility.json", &report);
    outputs.finish(manifest, "optimal")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParameter {
    MaxDeviation,
    SsrFloor,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub settings: Settings,
    #[arg(long, value_enum)]
    pub parameter: SweepParameter,
    /// Explicit grid, comma separated; overrides --from/--to/--step.
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    pub values: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.0)]
    pub from: f64,
    #[arg(long, default_value_t = 1.0)]
    pub to: f64,
    #[arg(long, default_value_t = 0.1)]
    pub step: f64,
}

#[derive(Serialize)]
struct SweepRecord<'a> {
    #[serde(flatten)]
    settings: &'a Settings,
    parameter: SweepParameter,
    grid: &'a [f64],
}

/// Points of a sweep; an empty grid is an error.
pub fn sweep_grid(values: Option<&[f64]>, from: f64, to: f64, step: f64) -> Result<Vec<f64>, CliError> {
    let grid = match values {
        Some(v) => v.to_vec(),
        None => {
            if !(step > 0.0) || !step.is_finite() {
                return Err(CliError::Config(format!("--step must be positive, got {step}")));
            }
            if !(to >= from) {
                return Err(empty_grid());
            }
            let n = ((to - from) / step + 1e-9).floor() as usize + 1;
            (0..n).map(|k| round_to(from + k as f64 * step, 9)).collect()
        }
    };
    if grid.is_empty() {
        return Err(empty_grid());
    }
    if let Some(x) = grid.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(CliError::Config(format!("sweep value {x} is outside [0, 1]")));
    }
    Ok(grid)
}

fn empty_grid() -> CliError {
    CliError::Config("sweep grid is empty".into())
}

pub fn cmd_sweep(args: SweepArgs, run: Run) -> Result<(), CliError> {
    let mut manifest = Manifest::new("sweep");
    let settings = args.settings.resolve(run.config, &mut manifest)?;
    let grid = sweep_grid(args.values.as_deref(), args.from, args.to, args.step)?;
    manifest.settings(&SweepRecord {
        settings: &settings,
        parameter: args.parameter,
        grid: &grid,
    });
    let series = settings.series(&mut manifest)?;
    let keys = settings.initial_keys(&series, &mut manifest)?;
    let contracts = settings.contracts(&series, &mut manifest)?;
    let options = options(&settings)?;
    let baseline = baseline_bill(&series, &contracts).total();
    let consumers: Vec<usize> = (0..series.num_members())
        .filter(|&i| series.consumption().column_sum(i) > 0.0)
        .collect();

    let mut csv = String::from("value,status,objective,community_total,baseline_total,mean_ssr,min_ssr\n");
    for &value in &grid {
        let varied = match args.parameter {
            SweepParameter::MaxDeviation => contracts.with_uniform_tolerance(value),
            SweepParameter::SsrFloor => contracts.with_uniform_floor(value),
        };
        let value_text = fmt_fixed(value, 6);
        match settle(&series, &varied, &keys, &options) {
            Ok(result) => {
                report_timing(&format!("sweep {value_text}"), &result);
                let bills = bill(&series, &varied, &result)?;
                let ssr: Vec<f64> = consumers.iter().map(|&i| result.ssr[i]).collect();
                let mean = if ssr.is_empty() { 1.0 } else { ssr.iter().sum::<f64>() / ssr.len() as f64 };
                let min = ssr.iter().copied().fold(1.0, f64::min);
                csv.push_str(&format!(
                    "{value_text},optimal,{},{},{},{},{}\n",
                    fmt_money(result.objective),
                    fmt_money(bills.total()),
                    fmt_money(baseline),
                    fmt_quantity(mean),
                    fmt_quantity(min)
                ));
            }
            Err(SettlementError::Infeasible(_)) => {
                eprintln!("sweep {value_text}: infeasible");
                csv.push_str(&format!("{value_text},infeasible,,,{},,\n", fmt_money(baseline)));
            }
            Err(e) => return Err(e.into()),
        }
    }
    print!("{csv}");
    let mut outputs = Outputs::new(run.out);
    outputs.add("sweep.csv", csv.into_bytes());
    outputs.finish(manifest, "optimal")
}

#[derive(Args, Debug, Serialize)]
pub struct BenchArgs {
    /// Number of periods.
    #[arg(long, value_name = "T")]
    pub periods: usize,
    /// Number of members.
    #[arg(long, value_name = "I")]
    pub members: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Key tolerance for every member.
    #[arg(long, default_value_t = 1.0, value_name = "X")]
    pub max_deviation: f64,
    /// none, or priority:<share> to give floors to the least self-sufficient share of consumers.
    #[arg(long, default_value = "none", value_name = "PLAN")]
    pub floors: String,
    #[arg(long, default_value = "auto")]
    pub strategy: String,
}

fn floor_plan(text: &str) -> Result<FloorPlan, CliError> {
    if text == "none" {
        return Ok(FloorPlan::None);
    }
    text.strip_prefix("priority:")
        .and_then(|s| s.parse::<f64>().ok())
        .filter(|s| *s > 0.0 && *s <= 1.0)
        .map(FloorPlan::Priority)
        .ok_or_else(|| CliError::Config(format!("unknown floor plan `{text}`; use none or priority:<share in (0, 1]>")))
}

pub const BENCH_HEADER: &str =
    "periods,members,rows,columns,nonzeros,build_s,solve_s,setup_s,strategy,binding_floors,objective";

pub fn cmd_bench(args: BenchArgs, run: Run) -> Result<(), CliError> {
    let mut manifest = Manifest::new("bench");
    manifest.settings(&args);
    let mut config = BenchConfig::new(args.periods, args.members);
    config.seed = args.seed;
    config.tolerance = args.max_deviation;
    config.floors = floor_plan(&args.floors)?;
    config.options = config.options.with_strategy(args.strategy.parse().map_err(CliError::Config)?);
    let row = run_bench(&config)?;
    let line = format!(
        "{},{},{},{},{},{:.3},{:.3},{:.3},{},{},{}",
        row.periods,
        row.members,
        row.rows,
        row.columns,
        row.nonzeros,
        row.build_seconds,
        row.solve_seconds,
        row.setup_seconds,
        row.strategy,
        row.binding_floors,
        fmt_money(row.objective)
    );
    println!("{BENCH_HEADER}\n{line}");
    let mut outputs = Outputs::new(run.out);
    outputs.add("bench.csv", format!("{BENCH_HEADER}\n{line}\n").into_bytes());
    outputs.finish(manifest, "optimal")
}
