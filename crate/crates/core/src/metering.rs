//! Metering time series: ingestion, validation and netting of behind-the-meter
//! flows.
//!
//! Energies are kWh. Timestamps are normalized to UTC; inputs without an
//! explicit offset are rejected unless the caller supplies a zone.

use std::io::{Read, Write};

use chrono::{DateTime, FixedOffset, NaiveDateTime, TimeZone, Utc};
use keyshare_lp::Scalar;
use thiserror::Error;

use crate::table::PeriodTable;

#[derive(Debug, Error)]
pub enum MeterError {
    #[error("schema error at line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("parse error at line {line}, column `{column}`: {message}")]
    Parse {
        line: usize,
        column: String,
        message: String,
    },
    #[error("invalid value for member `{member}` at period {period}: {message}")]
    Value {
        member: String,
        period: usize,
        message: String,
    },
    #[error("invalid period grid: {0}")]
    Grid(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Consecutive metering periods of equal length.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PeriodGrid {
    start: DateTime<Utc>,
    cadence_seconds: i64,
    count: usize,
}

impl PeriodGrid {
    pub const DEFAULT_CADENCE: i64 = 900;

    pub fn new(start: DateTime<Utc>, cadence_seconds: i64, count: usize) -> Result<Self, MeterError> {
        if count == 0 {
            return Err(MeterError::Grid("period count must be at least 1".into()));
        }
        if cadence_seconds <= 0 {
            return Err(MeterError::Grid("cadence must be positive".into()));
        }
        Ok(Self {
            start,
            cadence_seconds,
            count,
        })
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    pub fn cadence_seconds(&self) -> i64 {
        self.cadence_seconds
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn timestamp(&self, t: usize) -> DateTime<Utc> {
        self.start + chrono::Duration::seconds(self.cadence_seconds * t as i64)
    }

    /// Period index of `ts`, if it lies exactly on the grid.
    pub fn index_of(&self, ts: DateTime<Utc>) -> Option<usize> {
        let offset = (ts - self.start).num_seconds();
        if offset < 0 || offset % self.cadence_seconds != 0 {
            return None;
        }
        let t = (offset / self.cadence_seconds) as usize;
        (t < self.count && self.timestamp(t) == ts).then_some(t)
    }

    /// Grid starting at the first timestamp of a CSV table, one period per data row.
    pub fn infer<R: Read>(
        reader: R,
        cadence_seconds: i64,
        zone: Option<FixedOffset>,
    ) -> Result<Self, MeterError> {
        let table = RawTable::read(reader, zone)?;
        let first = *table.timestamps.first().ok_or(MeterError::Schema {
            line: 2,
            message: "no data rows".into(),
        })?;
        Self::new(first, cadence_seconds, table.timestamps.len())
    }
}

/// Formats a timestamp the way every CSV writer in this crate does.
pub fn format_timestamp(ts: DateTime<Utc>) -> String {
    ts.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

pub fn parse_timestamp(text: &str, zone: Option<FixedOffset>) -> Result<DateTime<Utc>, String> {
    let text = text.trim();
    if let Ok(ts) = DateTime::parse_from_rfc3339(text) {
        return Ok(ts.with_timezone(&Utc));
    }
    const NAIVE: [&str; 4] = [
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%d %H:%M",
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%dT%H:%M",
    ];
    let naive = NAIVE
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(text, f).ok())
        .ok_or_else(|| format!("unrecognized timestamp `{text}`"))?;
    let zone = zone.ok_or_else(|| format!("timestamp `{text}` has no UTC offset and no zone was given"))?;
    zone.from_local_datetime(&naive)
        .single()
        .map(|ts| ts.with_timezone(&Utc))
        .ok_or_else(|| format!("timestamp `{text}` is ambiguous in the given zone"))
}

/// Parses a zone flag: `UTC`, `Z`, or a fixed offset such as `+01:00`.
pub fn parse_zone(text: &str) -> Result<FixedOffset, String> {
    let text = text.trim();
    if text.eq_ignore_ascii_case("utc") || text == "Z" {
        return Ok(FixedOffset::east_opt(0).expect("zero offset"));
    }
    let (sign, rest) = match text.as_bytes().first() {
        Some(b'+') => (1, &text[1..]),
        Some(b'-') => (-1, &text[1..]),
        _ => return Err(format!("unrecognized zone `{text}`")),
    };
    let (h, m) = rest.split_once(':').unwrap_or((rest, "0"));
    let h: i32 = h.parse().map_err(|_| format!("unrecognized zone `{text}`"))?;
    let m: i32 = m.parse().map_err(|_| format!("unrecognized zone `{text}`"))?;
    FixedOffset::east_opt(sign * (h * 3600 + m * 60)).ok_or_else(|| format!("zone `{text}` out of range"))
}

pub(crate) struct RawTable {
    pub(crate) members: Vec<String>,
    pub(crate) timestamps: Vec<DateTime<Utc>>,
    pub(crate) values: Vec<Vec<f64>>,
}

impl RawTable {
    pub(crate) fn read<R: Read>(reader: R, zone: Option<FixedOffset>) -> Result<Self, MeterError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 2 || !headers[0].eq_ignore_ascii_case("timestamp") {
            return Err(MeterError::Schema {
                line: 1,
                message: "header must be `timestamp,<member>,...`".into(),
            });
        }
        let members: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
        let mut sorted = members.clone();
        sorted.sort();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(MeterError::Schema {
                line: 1,
                message: format!("duplicate member `{}`", w[0]),
            });
        }
        let mut timestamps = Vec::new();
        let mut values = Vec::new();
        for (k, record) in rdr.records().enumerate() {
            let line = k + 2;
            let record = record.map_err(|e| MeterError::Schema {
                line,
                message: e.to_string(),
            })?;
            if record.len() != headers.len() {
                return Err(MeterError::Schema {
                    line,
                    message: format!("expected {} cells, found {}", headers.len(), record.len()),
                });
            }
            let ts = parse_timestamp(&record[0], zone).map_err(|message| MeterError::Parse {
                line,
                column: "timestamp".into(),
                message,
            })?;
            let mut row = Vec::with_capacity(members.len());
            for (c, cell) in record.iter().skip(1).enumerate() {
                if cell.is_empty() {
                    return Err(MeterError::Parse {
                        line,
                        column: members[c].clone(),
                        message: "missing value".into(),
                    });
                }
                let v: f64 = cell.parse().map_err(|_| MeterError::Parse {
                    line,
                    column: members[c].clone(),
                    message: format!("`{cell}` is not a number"),
                })?;
                if !v.is_finite() {
                    return Err(MeterError::Parse {
                        line,
                        column: members[c].clone(),
                        message: format!("`{cell}` is not finite"),
                    });
                }
                row.push(v);
            }
            timestamps.push(ts);
            values.push(row);
        }
        Ok(Self {
            members,
            timestamps,
            values,
        })
    }

    /// Checks that row `k` carries timestamp `grid.timestamp(k)` for every row.
    pub(crate) fn align(&self, grid: &PeriodGrid) -> Result<(), MeterError> {
        for (k, ts) in self.timestamps.iter().enumerate() {
            let line = k + 2;
            if k >= grid.len() {
                return Err(MeterError::Schema {
                    line,
                    message: format!("extra row beyond the {} periods of the grid", grid.len()),
                });
            }
            let expected = grid.timestamp(k);
            if *ts != expected {
                let message = if k > 0 && *ts == self.timestamps[k - 1] {
                    format!("duplicate timestamp {}", format_timestamp(*ts))
                } else if *ts > expected {
                    format!(
                        "gap: expected {}, found {}",
                        format_timestamp(expected),
                        format_timestamp(*ts)
                    )
                } else {
                    format!(
                        "misaligned timestamp: expected {}, found {}",
                        format_timestamp(expected),
                        format_timestamp(*ts)
                    )
                };
                return Err(MeterError::Schema { line, message });
            }
        }
        if self.timestamps.len() < grid.len() {
            return Err(MeterError::Schema {
                line: self.timestamps.len() + 2,
                message: format!(
                    "missing rows: grid has {} periods, file has {}",
                    grid.len(),
                    self.timestamps.len()
                ),
            });
        }
        Ok(())
    }
}

/// Per-member, per-period consumption and production with netted channels.
#[derive(Clone, Debug, PartialEq)]
pub struct MeterSeries<F> {
    grid: PeriodGrid,
    members: Vec<String>,
    consumption: PeriodTable<F>,
    production: PeriodTable<F>,
    net_consumption: PeriodTable<F>,
    net_production: PeriodTable<F>,
}

impl<F: Scalar> MeterSeries<F> {
    /// Builds a series from raw channels and nets them.
    pub fn from_channels(
        grid: PeriodGrid,
        members: Vec<String>,
        consumption: PeriodTable<F>,
        production: PeriodTable<F>,
    ) -> Result<Self, MeterError> {
        let (t_len, i_len) = (grid.len(), members.len());
        for table in [&consumption, &production] {
            if table.periods() != t_len || table.members() != i_len {
                return Err(MeterError::Grid(format!(
                    "channel shape {}x{} does not match {} periods x {} members",
                    table.periods(),
                    table.members(),
                    t_len,
                    i_len
                )));
            }
        }
        for t in 0..t_len {
            for i in 0..i_len {
                for (name, v) in [("consumption", consumption.get(t, i)), ("production", production.get(t, i))] {
                    if !v.is_finite() || v < F::zero() {
                        return Err(MeterError::Value {
                            member: members[i].clone(),
                            period: t,
                            message: format!("{name} {v} must be finite and non-negative"),
                        });
                    }
                }
            }
        }
        let net_consumption = PeriodTable::from_fn(t_len, i_len, |t, i| {
            (consumption.get(t, i) - production.get(t, i)).max(F::zero())
        });
        let net_production = PeriodTable::from_fn(t_len, i_len, |t, i| {
            (production.get(t, i) - consumption.get(t, i)).max(F::zero())
        });
        Ok(Self {
            grid,
            members,
            consumption,
            production,
            net_consumption,
            net_production,
        })
    }

    /// Builds a series from signed single-channel readings (positive for
    /// consumption, negative for production).
    pub fn from_signed(grid: PeriodGrid, members: Vec<String>, signed: &PeriodTable<F>) -> Result<Self, MeterError> {
        let c = signed.map(|x| x.max(F::zero()));
        let p = signed.map(|x| (-x).max(F::zero()));
        Self::from_channels(grid, members, c, p)
    }

    pub fn grid(&self) -> &PeriodGrid {
        &self.grid
    }

    pub fn members(&self) -> &[String] {
        &self.members
    }

    pub fn member_index(&self, name: &str) -> Option<usize> {
        self.members.iter().position(|m| m == name)
    }

    pub fn num_periods(&self) -> usize {
        self.grid.len()
    }

    pub fn num_members(&self) -> usize {
        self.members.len()
    }

    pub fn consumption(&self) -> &PeriodTable<F> {
        &self.consumption
    }

    pub fn production(&self) -> &PeriodTable<F> {
        &self.production
    }

    pub fn net_consumption(&self) -> &PeriodTable<F> {
        &self.net_consumption
    }

    pub fn net_production(&self) -> &PeriodTable<F> {
        &self.net_production
    }

    /// `(Σᵢ Cⁿ[t][i], Σᵢ Pⁿ[t][i])`.
    pub fn totals(&self, t: usize) -> (F, F) {
        (self.net_consumption.row_sum(t), self.net_production.row_sum(t))
    }

    /// Restriction to the periods in `range`.
    pub fn slice_periods(&self, range: std::ops::Range<usize>) -> Result<Self, MeterError> {
        let grid = PeriodGrid::new(self.grid.timestamp(range.start), self.grid.cadence_seconds, range.len())?;
        let pick = |tab: &PeriodTable<F>| {
            PeriodTable::from_fn(range.len(), self.members.len(), |t, i| tab.get(range.start + t, i))
        };
        Self::from_channels(grid, self.members.clone(), pick(&self.consumption), pick(&self.production))
    }
}

/// Reads a signed single-channel CSV (`timestamp,<member>,...`).
pub fn ingest_signed<F: Scalar, R: Read>(
    reader: R,
    grid: &PeriodGrid,
    zone: Option<FixedOffset>,
) -> Result<MeterSeries<F>, MeterError> {
    let raw = RawTable::read(reader, zone)?;
    raw.align(grid)?;
    let signed = to_table(&raw);
    MeterSeries::from_signed(grid.clone(), raw.members, &signed)
}

/// Reads separate consumption and production CSVs with identical headers.
pub fn ingest_dual<F: Scalar, R1: Read, R2: Read>(
    consumption: R1,
    production: R2,
    grid: &PeriodGrid,
    zone: Option<FixedOffset>,
) -> Result<MeterSeries<F>, MeterError> {
    let c = RawTable::read(consumption, zone)?;
    let p = RawTable::read(production, zone)?;
    if c.members != p.members {
        return Err(MeterError::Schema {
            line: 1,
            message: format!(
                "member sets differ between consumption {:?} and production {:?}",
                c.members, p.members
            ),
        });
    }
    c.align(grid)?;
    p.align(grid)?;
    for (raw, what) in [(&c, "consumption"), (&p, "production")] {
        for (k, row) in raw.values.iter().enumerate() {
            if let Some(col) = row.iter().position(|v| *v < 0.0) {
                return Err(MeterError::Parse {
                    line: k + 2,
                    column: raw.members[col].clone(),
                    message: format!("negative {what} is only allowed in signed input"),
                });
            }
        }
    }
    MeterSeries::from_channels(grid.clone(), c.members.clone(), to_table(&c), to_table(&p))
}

/// Reads a per-member matrix in the meter layout, such as a saved allocation,
/// checking its members and timestamps against `series`.
pub fn read_matrix<F: Scalar, R: Read>(
    reader: R,
    series: &MeterSeries<F>,
    zone: Option<FixedOffset>,
) -> Result<PeriodTable<F>, MeterError> {
    let raw = RawTable::read(reader, zone)?;
    if raw.members != series.members {
        return Err(MeterError::Schema {
            line: 1,
            message: format!("members {:?} do not match meter members {:?}", raw.members, series.members),
        });
    }
    raw.align(&series.grid)?;
    Ok(to_table(&raw))
}

fn to_table<F: Scalar>(raw: &RawTable) -> PeriodTable<F> {
    PeriodTable::from_fn(raw.values.len(), raw.members.len(), |t, i| F::lit(raw.values[t][i]))
}

/// Writes the series as signed single-channel CSV, `Cⁿ − Pⁿ` per cell.
pub fn export_signed<F: Scalar, W: Write>(series: &MeterSeries<F>, out: W) -> Result<(), MeterError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["timestamp".to_string()];
    header.extend(series.members.iter().cloned());
    w.write_record(&header)?;
    for t in 0..series.num_periods() {
        let mut rec = vec![format_timestamp(series.grid.timestamp(t))];
        for i in 0..series.num_members() {
            let x = series.net_consumption.get(t, i) - series.net_production.get(t, i);
            rec.push(format!("{x}"));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
