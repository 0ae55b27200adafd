//! Telemetry ingestion, steady-state detection and error statistics.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, SecondsFormat, TimeDelta, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attmath::{error_quaternion, Quaternion, Vec3};
use crate::safety::CageVerdict;

/// Allowed deviation from unit norm of telemetry quaternions.
pub const QUAT_NORM_TOL: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing mandatory column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: cannot parse `{column}` value {value:?}")]
    Parse { row: usize, column: String, value: String },
    #[error("row {row}: duplicate timestamp")]
    DuplicateTimestamp { row: usize },
    #[error("row {row}: timestamp goes backwards")]
    NonMonotone { row: usize },
    #[error("row {row}: quaternion norm {norm:.6} is not unit")]
    NonUnitQuaternion { row: usize, norm: f64 },
    #[error("empty window")]
    EmptyWindow,
    #[error("no data rows")]
    Empty,
    #[error("mapping file: {0}")]
    Mapping(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRow {
    /// Seconds since the series epoch.
    pub t: f64,
    pub q: Quaternion,
    /// deg/s
    pub rate: Vec3,
    /// rpm
    pub rw_speed: Vec3,
    /// rpm/s
    pub rw_cmd: Vec3,
    /// A·m²
    pub mt_cmd: Option<Vec3>,
    /// µT
    pub mag: Option<Vec3>,
    pub maneuver: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySeries {
    pub epoch: DateTime<Utc>,
    pub rows: Vec<TelemetryRow>,
}

/// Epoch used for simulated series.
pub fn default_epoch() -> DateTime<Utc> {
    DateTime::parse_from_rfc3339("2025-01-01T00:00:00Z")
        .expect("valid literal")
        .with_timezone(&Utc)
}

impl TelemetrySeries {
    pub fn new(epoch: DateTime<Utc>) -> Self {
        Self { epoch, rows: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn time_of(&self, t: f64) -> DateTime<Utc> {
        self.epoch + TimeDelta::microseconds((t * 1e6).round() as i64)
    }

    pub fn offset_of(&self, ts: DateTime<Utc>) -> f64 {
        (ts - self.epoch).num_microseconds().unwrap_or(i64::MAX) as f64 * 1e-6
    }

    pub fn format_time(&self, t: f64) -> String {
        self.time_of(t).to_rfc3339_opts(SecondsFormat::AutoSi, true)
    }

    fn has_mt(&self) -> bool {
        self.rows.iter().any(|r| r.mt_cmd.is_some())
    }

    fn has_mag(&self) -> bool {
        self.rows.iter().any(|r| r.mag.is_some())
    }

    /// Writes the series in the canonical CSV schema.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), TelemetryError> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<&str> = vec![
            "timestamp", "q0", "q1", "q2", "q3", "wx", "wy", "wz", "rw1", "rw2", "rw3", "cmd1", "cmd2", "cmd3",
        ];
        let (mt, mag) = (self.has_mt(), self.has_mag());
        if mt {
            header.extend(["mt1", "mt2", "mt3"]);
        }
        if mag {
            header.extend(["bx", "by", "bz"]);
        }
        header.push("maneuver");
        out.write_record(&header)?;
        let mut rec: Vec<String> = Vec::with_capacity(header.len());
        for r in &self.rows {
            rec.clear();
            rec.push(self.format_time(r.t));
            rec.extend(r.q.to_array().iter().map(f64::to_string));
            for v in [r.rate, r.rw_speed, r.rw_cmd] {
                rec.extend(v.iter().map(|c| c.to_string()));
            }
            if mt {
                rec.extend(r.mt_cmd.unwrap_or_default().iter().map(|c| c.to_string()));
            }
            if mag {
                rec.extend(r.mag.unwrap_or_default().iter().map(|c| c.to_string()));
            }
            rec.push(r.maneuver.map(|m| m.to_string()).unwrap_or_default());
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RateUnit {
    #[default]
    DegPerS,
    RadPerS,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FieldUnit {
    #[default]
    MicroTesla,
    NanoTesla,
    Tesla,
}

/// Accepted header names for each logical column. Matching ignores case and
/// surrounding whitespace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ColumnMapping {
    pub timestamp: Vec<String>,
    pub q: [Vec<String>; 4],
    pub rate: [Vec<String>; 3],
    pub rw_speed: [Vec<String>; 3],
    pub rw_cmd: [Vec<String>; 3],
    pub mt_cmd: [Vec<String>; 3],
    pub mag: [Vec<String>; 3],
    pub maneuver: Vec<String>,
    pub rate_unit: RateUnit,
    pub mag_unit: FieldUnit,
    /// Scale applied to wheel command columns to obtain rpm/s.
    pub rw_cmd_scale: f64,
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

impl Default for ColumnMapping {
    fn default() -> Self {
        Self {
            timestamp: names(&["timestamp", "time", "utc", "datetime", "time_utc"]),
            q: [
                names(&["q0", "qw", "q_0", "quat_0", "att_q0"]),
                names(&["q1", "qx", "q_1", "quat_1", "att_q1"]),
                names(&["q2", "qy", "q_2", "quat_2", "att_q2"]),
                names(&["q3", "qz", "q_3", "quat_3", "att_q3"]),
            ],
            rate: [
                names(&["wx", "rate_x", "omega_x", "w1"]),
                names(&["wy", "rate_y", "omega_y", "w2"]),
                names(&["wz", "rate_z", "omega_z", "w3"]),
            ],
            rw_speed: [
                names(&["rw1", "rw_x", "rw_speed_x", "rwx"]),
                names(&["rw2", "rw_y", "rw_speed_y", "rwy"]),
                names(&["rw3", "rw_z", "rw_speed_z", "rwz"]),
            ],
            rw_cmd: [
                names(&["cmd1", "rw_cmd_x", "torque_x", "cmdx"]),
                names(&["cmd2", "rw_cmd_y", "torque_y", "cmdy"]),
                names(&["cmd3", "rw_cmd_z", "torque_z", "cmdz"]),
            ],
            mt_cmd: [names(&["mt1", "mt_x"]), names(&["mt2", "mt_y"]), names(&["mt3", "mt_z"])],
            mag: [names(&["bx", "mag_x"]), names(&["by", "mag_y"]), names(&["bz", "mag_z"])],
            maneuver: names(&["maneuver", "maneuver_id"]),
            rate_unit: RateUnit::DegPerS,
            mag_unit: FieldUnit::MicroTesla,
            rw_cmd_scale: 1.0,
        }
    }
}

impl ColumnMapping {
    pub fn from_toml(text: &str) -> Result<Self, TelemetryError> {
        toml::from_str(text).map_err(|e| TelemetryError::Mapping(e.to_string().replace('\n', " ")))
    }

    pub fn from_path(path: &Path) -> Result<Self, TelemetryError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

fn find(headers: &[String], aliases: &[String]) -> Option<usize> {
    aliases
        .iter()
        .find_map(|a| headers.iter().position(|h| h == &a.trim().to_ascii_lowercase()))
}

fn find3(headers: &[String], aliases: &[Vec<String>; 3]) -> Option<[usize; 3]> {
    Some([
        find(headers, &aliases[0])?,
        find(headers, &aliases[1])?,
        find(headers, &aliases[2])?,
    ])
}

/// Parses an ISO-8601 / RFC 3339 timestamp (UTC assumed without offset) or
/// Unix seconds.
pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s.trim_end_matches('Z'), fmt) {
            return Some(t.and_utc());
        }
    }
    let secs: f64 = s.parse().ok()?;
    if !secs.is_finite() {
        return None;
    }
    DateTime::from_timestamp_micros((secs * 1e6).round() as i64)
}

/// Reads a telemetry CSV.
pub fn ingest_csv<R: Read>(reader: R, mapping: &ColumnMapping) -> Result<TelemetrySeries, TelemetryError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_ascii_lowercase()).collect();
    let ts_col = find(&headers, &mapping.timestamp).ok_or_else(|| TelemetryError::MissingColumn("timestamp".into()))?;
    let mut q_cols = [0; 4];
    for (k, aliases) in mapping.q.iter().enumerate() {
        q_cols[k] = find(&headers, aliases).ok_or_else(|| TelemetryError::MissingColumn(format!("q{k}")))?;
    }
    let rate_cols = find3(&headers, &mapping.rate);
    let rw_cols = find3(&headers, &mapping.rw_speed);
    let cmd_cols = find3(&headers, &mapping.rw_cmd);
    let mt_cols = find3(&headers, &mapping.mt_cmd);
    let mag_cols = find3(&headers, &mapping.mag);
    let man_col = find(&headers, &mapping.maneuver);
    let rate_scale = match mapping.rate_unit {
        RateUnit::DegPerS => 1.0,
        RateUnit::RadPerS => 180.0 / std::f64::consts::PI,
    };
    let mag_scale = match mapping.mag_unit {
        FieldUnit::MicroTesla => 1.0,
        FieldUnit::NanoTesla => 1e-3,
        FieldUnit::Tesla => 1e6,
    };

    let mut series: Option<TelemetrySeries> = None;
    let mut last_t: Option<f64> = None;
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let cell = |c: usize| rec.get(c).unwrap_or("");
        let num = |c: usize| -> Result<f64, TelemetryError> {
            cell(c).parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| TelemetryError::Parse {
                row,
                column: headers[c].clone(),
                value: cell(c).to_string(),
            })
        };
        let vec3 = |cols: Option<[usize; 3]>, scale: f64| -> Result<Option<Vec3>, TelemetryError> {
            match cols {
                None => Ok(None),
                Some([a, b, c]) => Ok(Some(Vec3::new(num(a)?, num(b)?, num(c)?) * scale)),
            }
        };
        let ts = parse_timestamp(cell(ts_col)).ok_or_else(|| TelemetryError::Parse {
            row,
            column: headers[ts_col].clone(),
            value: cell(ts_col).to_string(),
        })?;
        let s = series.get_or_insert_with(|| TelemetrySeries::new(ts));
        let t = s.offset_of(ts);
        if let Some(prev) = last_t {
            if t == prev {
                return Err(TelemetryError::DuplicateTimestamp { row });
            }
            if t < prev {
                return Err(TelemetryError::NonMonotone { row });
            }
        }
        last_t = Some(t);
        let q = Quaternion::new(num(q_cols[0])?, num(q_cols[1])?, num(q_cols[2])?, num(q_cols[3])?);
        let norm = q.norm();
        if (norm - 1.0).abs() > QUAT_NORM_TOL {
            return Err(TelemetryError::NonUnitQuaternion { row, norm });
        }
        let maneuver = match man_col {
            Some(c) if !cell(c).is_empty() => Some(cell(c).parse::<u32>().map_err(|_| TelemetryError::Parse {
                row,
                column: headers[c].clone(),
                value: cell(c).to_string(),
            })?),
            _ => None,
        };
        s.rows.push(TelemetryRow {
            t,
            q: q.normalized(),
            rate: vec3(rate_cols, rate_scale)?.unwrap_or_default(),
            rw_speed: vec3(rw_cols, 1.0)?.unwrap_or_default(),
            rw_cmd: vec3(cmd_cols, mapping.rw_cmd_scale)?.unwrap_or_default(),
            mt_cmd: vec3(mt_cols, 1.0)?,
            mag: vec3(mag_cols, mag_scale)?,
            maneuver,
        });
    }
    series.ok_or(TelemetryError::Empty)
}

pub fn ingest_path(path: &Path, mapping: &ColumnMapping) -> Result<TelemetrySeries, TelemetryError> {
    ingest_csv(std::fs::File::open(path)?, mapping)
}

/// Per-axis attitude error, degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EulerErrors {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
    /// Pitch within 0.1° of ±90°, where yaw and roll are not separable.
    pub gimbal_lock: bool,
}

impl EulerErrors {
    pub fn max_abs(&self) -> f64 {
        self.yaw.abs().max(self.pitch.abs()).max(self.roll.abs())
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.yaw, self.pitch, self.roll]
    }
}

/// Z-Y-X intrinsic angles of a rotation, degrees.
pub fn quat_to_euler_zyx(q: Quaternion) -> EulerErrors {
    let Quaternion { w, x, y, z } = q;
    let sp = (2.0 * (w * y - z * x)).clamp(-1.0, 1.0);
    EulerErrors {
        yaw: (2.0 * (w * z + x * y)).atan2(1.0 - 2.0 * (y * y + z * z)).to_degrees(),
        pitch: sp.asin().to_degrees(),
        roll: (2.0 * (w * x + y * z)).atan2(1.0 - 2.0 * (x * x + y * y)).to_degrees(),
        gimbal_lock: sp.abs() > (89.9f64).to_radians().sin(),
    }
}

/// Inverse of [`quat_to_euler_zyx`].
pub fn euler_zyx_to_quat(yaw: f64, pitch: f64, roll: f64) -> Quaternion {
    let qz = Quaternion::from_axis_angle(Vec3::new(0.0, 0.0, 1.0), yaw.to_radians());
    let qy = Quaternion::from_axis_angle(Vec3::new(0.0, 1.0, 0.0), pitch.to_radians());
    let qx = Quaternion::from_axis_angle(Vec3::new(1.0, 0.0, 0.0), roll.to_radians());
    qz * qy * qx
}

/// Yaw, pitch and roll of the error quaternion `goal⁻¹ ⊗ q`.
pub fn euler_errors(q: Quaternion, goal: Quaternion) -> EulerErrors {
    match error_quaternion(goal.normalized(), q.normalized()) {
        Ok(dq) => quat_to_euler_zyx(dq),
        Err(_) => EulerErrors {
            yaw: f64::NAN,
            pitch: f64::NAN,
            roll: f64::NAN,
            gimbal_lock: true,
        },
    }
}

fn within(e: &EulerErrors, threshold: f64) -> bool {
    !e.gimbal_lock && e.max_abs() < threshold
}

/// Closed time interval `[start, end]` in series seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

/// Earliest run inside `[from, until)` during which every axis error stays
/// below `threshold_deg` for at least `hold_s`. The window ends at the last
/// sample of the run.
pub fn steady_state_window(
    series: &TelemetrySeries,
    goal: Quaternion,
    threshold_deg: f64,
    hold_s: f64,
    from: f64,
    until: f64,
) -> Option<Window> {
    let mut run: Option<(f64, f64)> = None;
    let mut found: Option<Window> = None;
    for r in series.rows.iter().filter(|r| r.t >= from && r.t < until) {
        if within(&euler_errors(r.q, goal), threshold_deg) {
            let start = run.map_or(r.t, |(s, _)| s);
            run = Some((start, r.t));
            if found.is_none() && r.t - start >= hold_s {
                found = Some(Window { start, end: r.t });
            }
            if let Some(w) = found.as_mut() {
                w.end = r.t;
            }
        } else {
            if found.is_some() {
                break;
            }
            run = None;
        }
    }
    found
}

/// Start of the first qualifying steady-state run.
pub fn detect_steady_state(series: &TelemetrySeries, goal: Quaternion, threshold_deg: f64, hold_s: f64) -> Option<f64> {
    steady_state_window(series, goal, threshold_deg, hold_s, f64::NEG_INFINITY, f64::INFINITY).map(|w| w.start)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StdKind {
    #[default]
    Population,
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AxisStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
}

fn axis_stats(v: &[f64], kind: StdKind) -> AxisStats {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let ss: f64 = v.iter().map(|x| (x - mean).powi(2)).sum();
    let denom = match kind {
        StdKind::Population => n,
        StdKind::Sample => (n - 1.0).max(1.0),
    };
    AxisStats {
        min: v.iter().copied().fold(f64::INFINITY, f64::min),
        max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        // keep min ≤ mean ≤ max under rounding
        mean: mean.clamp(
            v.iter().copied().fold(f64::INFINITY, f64::min),
            v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ),
        std: (ss / denom).sqrt(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateStats {
    pub yaw: AxisStats,
    pub pitch: AxisStats,
    pub roll: AxisStats,
    pub start: f64,
    pub end: f64,
    pub duration: f64,
    pub samples: usize,
}

/// Error statistics over the rows inside `window` (both ends included).
pub fn steady_state_stats(
    series: &TelemetrySeries,
    goal: Quaternion,
    window: Window,
    kind: StdKind,
) -> Result<SteadyStateStats, TelemetryError> {
    let errs: Vec<EulerErrors> = series
        .rows
        .iter()
        .filter(|r| r.t >= window.start && r.t <= window.end)
        .map(|r| euler_errors(r.q, goal))
        .collect();
    if errs.is_empty() {
        return Err(TelemetryError::EmptyWindow);
    }
    let col = |f: fn(&EulerErrors) -> f64| errs.iter().map(f).collect::<Vec<_>>();
    Ok(SteadyStateStats {
        yaw: axis_stats(&col(|e| e.yaw), kind),
        pitch: axis_stats(&col(|e| e.pitch), kind),
        roll: axis_stats(&col(|e| e.roll), kind),
        start: window.start,
        end: window.end,
        duration: window.end - window.start,
        samples: errs.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManeuverRecord {
    pub index: usize,
    pub command_time: f64,
    pub goal: Quaternion,
    pub steady_state_start: Option<f64>,
    /// Seconds from command to steady-state start.
    pub settling: Option<f64>,
    pub stats: Option<SteadyStateStats>,
    pub verdicts: Vec<CageVerdict>,
}

impl ManeuverRecord {
    pub fn attained(&self) -> bool {
        self.steady_state_start.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisParams {
    pub threshold_deg: f64,
    pub hold_s: f64,
    pub std_kind: StdKind,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        Self {
            threshold_deg: 1.0,
            hold_s: 15.0,
            std_kind: StdKind::Population,
        }
    }
}

/// Steady-state records for maneuvers commanded at `command_times`. Each
/// maneuver is searched up to the next command.
pub fn analyze_maneuvers(
    series: &TelemetrySeries,
    goal: Quaternion,
    command_times: &[f64],
    params: &AnalysisParams,
) -> Vec<ManeuverRecord> {
    command_times
        .iter()
        .enumerate()
        .map(|(i, &cmd)| {
            let until = command_times.get(i + 1).copied().unwrap_or(f64::INFINITY);
            let window = steady_state_window(series, goal, params.threshold_deg, params.hold_s, cmd, until);
            let stats = window.and_then(|w| steady_state_stats(series, goal, w, params.std_kind).ok());
            ManeuverRecord {
                index: i + 1,
                command_time: cmd,
                goal,
                steady_state_start: window.map(|w| w.start),
                settling: window.map(|w| w.start - cmd),
                stats,
                verdicts: Vec::new(),
            }
        })
        .collect()
}

/// First sample time of each value of the maneuver column.
pub fn command_times_from_column(series: &TelemetrySeries) -> Vec<f64> {
    let mut out = Vec::new();
    let mut last = None;
    for r in &series.rows {
        if r.maneuver.is_some() && r.maneuver != last {
            out.push(r.t);
            last = r.maneuver;
        }
    }
    out
}

/// Command times inferred from attitude resets: consecutive samples whose
/// attitude differs by more than the body rates can explain.
pub fn command_times_from_resets(series: &TelemetrySeries, min_jump_deg: f64) -> Vec<f64> {
    let mut out = Vec::new();
    if let Some(first) = series.rows.first() {
        out.push(first.t);
    }
    for w in series.rows.windows(2) {
        let dt = w[1].t - w[0].t;
        let angle = error_quaternion(w[0].q, w[1].q).map(|d| d.angle().to_degrees()).unwrap_or(0.0);
        let explained = w[0].rate.norm().max(w[1].rate.norm()) * dt * 1.5;
        if angle > min_jump_deg && angle > explained {
            out.push(w[1].t);
        }
    }
    out
}

/// Text table with Min/Max/Mean/Std rows per axis.
pub fn format_stats_table(stats: &SteadyStateStats) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<6}{:>8}{:>8}{:>8}{:>8}", "Axis", "Min", "Max", "Mean", "Std");
    for (name, a) in [("Yaw", stats.yaw), ("Pitch", stats.pitch), ("Roll", stats.roll)] {
        let _ = writeln!(s, "{:<6}{:>8.2}{:>8.2}{:>8.2}{:>8.2}", name, a.min, a.max, a.mean, a.std);
    }
    s
}

/// Human-readable maneuver report.
pub fn format_report(series: &TelemetrySeries, records: &[ManeuverRecord]) -> String {
    let mut s = String::new();
    for r in records {
        let _ = write!(s, "Maneuver {}: command {}", r.index, series.format_time(r.command_time));
        match (&r.stats, r.settling) {
            (Some(st), Some(settle)) => {
                let _ = writeln!(
                    s,
                    ", steady state {} to {} ({:.1} s), settling {:.1} s",
                    series.format_time(st.start),
                    series.format_time(st.end),
                    st.duration,
                    settle
                );
                s.push_str(&format_stats_table(st));
            }
            _ => {
                let _ = writeln!(s, ", not attained");
            }
        }
        for v in &r.verdicts {
            if let (Some(rule), Some(t)) = (v.rule, v.timestamp) {
                let _ = writeln!(s, "  cage trip: {} at {}", rule, series.format_time(t));
            }
        }
    }
    s
}

/// One CSV line per maneuver.
pub fn report_csv(series: &TelemetrySeries, records: &[ManeuverRecord]) -> String {
    let mut s = String::from(
        "maneuver,command_time,attained,steady_state_start,steady_state_end,duration_s,settling_s,\
yaw_min,yaw_max,yaw_mean,yaw_std,pitch_min,pitch_max,pitch_mean,pitch_std,roll_min,roll_max,roll_mean,roll_std\n",
    );
    for r in records {
        let _ = write!(s, "{},{},{}", r.index, series.format_time(r.command_time), r.attained());
        match (&r.stats, r.settling) {
            (Some(st), Some(settle)) => {
                let _ = write!(
                    s,
                    ",{},{},{},{}",
                    series.format_time(st.start),
                    series.format_time(st.end),
                    st.duration,
                    settle
                );
                for a in [st.yaw, st.pitch, st.roll] {
                    let _ = write!(s, ",{},{},{},{}", a.min, a.max, a.mean, a.std);
                }
                s.push('\n');
            }
            _ => {
                s.push_str(&",".repeat(16));
                s.push('\n');
            }
        }
    }
    s
}

/// Euler-error columns for plotting.
pub fn euler_error_csv(series: &TelemetrySeries, goal: Quaternion) -> String {
    let mut s = String::from("timestamp,t,yaw,pitch,roll,gimbal_lock\n");
    for r in &series.rows {
        let e = euler_errors(r.q, goal);
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            series.format_time(r.t),
            r.t,
            e.yaw,
            e.pitch,
            e.roll,
            e.gimbal_lock
        );
    }
    s
}

/// Groups rows by maneuver number.
pub fn rows_by_maneuver(series: &TelemetrySeries) -> BTreeMap<u32, Vec<&TelemetryRow>> {
    let mut m: BTreeMap<u32, Vec<&TelemetryRow>> = BTreeMap::new();
    for r in &series.rows {
        if let Some(k) = r.maneuver {
            m.entry(k).or_default().push(r);
        }
    }
    m
}
