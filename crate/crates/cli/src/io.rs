//! CSV formats. Poses are written in mm and degrees, joint quantities in rad;
//! everything is converted back to m and rad on read.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use gptrack_core::reference::CHANNEL_NAMES;
use gptrack_core::sim::LogRow;
use gptrack_core::{PoseSample, N_CHANNELS, N_JOINTS};

use crate::error::CliError;

pub const TRACKING_HEADER: [&str; 7] = ["t", "x", "y", "z", "roll", "pitch", "yaw"];

/// Factor from internal units (m, rad) to I/O units (mm, deg) per channel.
pub fn io_scale(channel: usize) -> f64 {
    if channel < 3 {
        1e3
    } else {
        180.0 / std::f64::consts::PI
    }
}

pub fn unit_name(channel: usize) -> &'static str {
    if channel < 3 {
        "mm"
    } else {
        "deg"
    }
}

pub fn to_io(pose: &[f64; N_CHANNELS]) -> [f64; N_CHANNELS] {
    std::array::from_fn(|c| pose[c] * io_scale(c))
}

pub fn from_io(pose: &[f64; N_CHANNELS]) -> [f64; N_CHANNELS] {
    std::array::from_fn(|c| pose[c] / io_scale(c))
}

fn variance_to_io(v: &[f64; N_CHANNELS]) -> [f64; N_CHANNELS] {
    std::array::from_fn(|c| v[c] * io_scale(c).powi(2))
}

fn variance_from_io(v: &[f64; N_CHANNELS]) -> [f64; N_CHANNELS] {
    std::array::from_fn(|c| v[c] / io_scale(c).powi(2))
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(file)))
}

fn finish(path: &Path, w: csv::Writer<BufWriter<File>>) -> Result<(), CliError> {
    w.into_inner()
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        .flush()
        .map_err(|e| CliError::io(path, e))
}

fn reader(path: &Path) -> Result<csv::Reader<File>, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::ReaderBuilder::new().flexible(false).from_reader(file))
}

fn check_header(
    path: &Path,
    r: &mut csv::Reader<File>,
    expected: &[String],
) -> Result<(), CliError> {
    let got = r.headers().map_err(|e| csv_error(path, e))?;
    if got.iter().ne(expected.iter().map(String::as_str)) {
        return Err(CliError::Input(format!(
            "{}: unexpected header, expected `{}`",
            path.display(),
            expected.join(",")
        )));
    }
    Ok(())
}

fn parse_f64(path: &Path, line: u64, column: &str, s: &str) -> Result<f64, CliError> {
    s.trim().parse::<f64>().map_err(|_| {
        CliError::Input(format!(
            "{}: line {line}: column `{column}`: `{s}` is not a number",
            path.display()
        ))
    })
}

/// Reads a tracking CSV; rows must have strictly increasing timestamps.
pub fn read_tracking(path: &Path) -> Result<Vec<PoseSample>, CliError> {
    let mut r = reader(path)?;
    let header: Vec<String> = TRACKING_HEADER.iter().map(|s| s.to_string()).collect();
    check_header(path, &mut r, &header)?;
    let mut out: Vec<PoseSample> = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let mut v = [0.0; 7];
        for (i, s) in record.iter().enumerate() {
            v[i] = parse_f64(path, line, TRACKING_HEADER[i], s)?;
        }
        let pose: [f64; N_CHANNELS] = std::array::from_fn(|c| v[c + 1]);
        let sample = PoseSample::new(v[0], from_io(&pose))
            .map_err(|e| CliError::Input(format!("{}: line {line}: {e}", path.display())))?;
        if let Some(last) = out.last() {
            if sample.t <= last.t {
                return Err(CliError::Input(format!(
                    "{}: line {line}: timestamp {} does not increase",
                    path.display(),
                    v[0]
                )));
            }
        }
        out.push(sample);
    }
    if out.is_empty() {
        return Err(CliError::Input(format!(
            "{}: tracking CSV has 0 data rows",
            path.display()
        )));
    }
    Ok(out)
}

pub fn write_tracking(path: &Path, samples: &[PoseSample]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    let err = |e| csv_error(path, e);
    w.write_record(TRACKING_HEADER).map_err(err)?;
    for s in samples {
        let mut rec = vec![fmt_f64(s.t)];
        rec.extend(to_io(&s.pose).iter().map(|v| fmt_f64(*v)));
        w.write_record(&rec).map_err(err)?;
    }
    finish(path, w)
}

fn pose_columns(prefix: &str, header: &mut Vec<String>, unit_suffix: bool, squared: bool) {
    for (c, name) in CHANNEL_NAMES.iter().enumerate() {
        let unit = match (unit_suffix, squared) {
            (false, _) => String::new(),
            (true, false) => format!("_{}", unit_name(c)),
            (true, true) => format!("_{}2", unit_name(c)),
        };
        header.push(format!("{prefix}_{name}{unit}"));
    }
}

fn joint_columns(prefix: &str, unit: &str, header: &mut Vec<String>) {
    for j in 1..=N_JOINTS {
        header.push(format!("{prefix}{j}_{unit}"));
    }
}

/// Column names of the log CSV.
pub fn log_header() -> Vec<String> {
    let mut h = vec!["t".to_string()];
    pose_columns("truth", &mut h, true, false);
    h.push("sensor_tick".into());
    pose_columns("meas", &mut h, true, false);
    pose_columns("one_step", &mut h, true, false);
    pose_columns("gp_mean", &mut h, true, false);
    pose_columns("gp_var", &mut h, true, true);
    pose_columns("flag", &mut h, false, false);
    pose_columns("ref", &mut h, true, false);
    pose_columns("tool", &mut h, true, false);
    joint_columns("q_ref", "rad", &mut h);
    joint_columns("qd_ref", "rad_s", &mut h);
    joint_columns("q", "rad", &mut h);
    joint_columns("qd", "rad_s", &mut h);
    joint_columns("u", "rad_s2", &mut h);
    h.extend(
        [
            "qp_iterations",
            "qp_primal_residual",
            "qp_dual_residual",
            "qp_capped",
            "clik_error",
        ]
        .map(String::from),
    );
    h
}

fn push_all(rec: &mut Vec<String>, values: &[f64]) {
    rec.extend(values.iter().map(|v| fmt_f64(*v)));
}

fn push_opt(rec: &mut Vec<String>, values: Option<[f64; N_CHANNELS]>) {
    match values {
        Some(v) => push_all(rec, &to_io(&v)),
        None => rec.extend(std::iter::repeat_n(String::new(), N_CHANNELS)),
    }
}

fn bool_str(b: bool) -> String {
    (b as u8).to_string()
}

pub fn log_record(row: &LogRow) -> Vec<String> {
    let mut rec = vec![fmt_f64(row.t)];
    push_all(&mut rec, &to_io(&row.truth));
    rec.push(bool_str(row.sensor_tick));
    push_opt(&mut rec, row.measurement);
    push_opt(&mut rec, row.one_step);
    push_all(&mut rec, &to_io(&row.gp_mean));
    push_all(&mut rec, &variance_to_io(&row.gp_variance));
    rec.extend(row.safety_flags.iter().map(|f| bool_str(*f)));
    push_all(&mut rec, &to_io(&row.reference));
    push_all(&mut rec, &to_io(&row.tool));
    for j in [&row.q_ref, &row.qd_ref, &row.q, &row.qd, &row.u] {
        push_all(&mut rec, j);
    }
    rec.push(row.qp_iterations.to_string());
    rec.push(fmt_f64(row.qp_primal_residual));
    rec.push(fmt_f64(row.qp_dual_residual));
    rec.push(bool_str(row.qp_capped));
    rec.push(fmt_f64(row.clik_error));
    rec
}

pub fn write_log(path: &Path, rows: &[LogRow]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    let err = |e| csv_error(path, e);
    w.write_record(log_header()).map_err(err)?;
    for row in rows {
        w.write_record(log_record(row)).map_err(err)?;
    }
    finish(path, w)
}

/// Sequential field parser for one log record.
struct Fields<'a> {
    path: &'a Path,
    line: u64,
    header: &'a [String],
    record: &'a csv::StringRecord,
    next: usize,
}

impl Fields<'_> {
    fn raw(&mut self) -> (&str, &str) {
        let i = self.next;
        self.next += 1;
        (&self.header[i], &self.record[i])
    }

    fn f64(&mut self) -> Result<f64, CliError> {
        let (path, line) = (self.path, self.line);
        let (col, s) = self.raw();
        parse_f64(path, line, col, s)
    }

    fn usize(&mut self) -> Result<usize, CliError> {
        let (path, line) = (self.path, self.line);
        let (col, s) = self.raw();
        s.parse().map_err(|_| {
            CliError::Input(format!(
                "{}: line {line}: column `{col}`: `{s}` is not a count",
                path.display()
            ))
        })
    }

    fn bool(&mut self) -> Result<bool, CliError> {
        let (path, line) = (self.path, self.line);
        let (col, s) = self.raw();
        match s {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(CliError::Input(format!(
                "{}: line {line}: column `{col}`: `{s}` is not 0 or 1",
                path.display()
            ))),
        }
    }

    fn array<const K: usize>(&mut self) -> Result<[f64; K], CliError> {
        let mut out = [0.0; K];
        for v in &mut out {
            *v = self.f64()?;
        }
        Ok(out)
    }

    fn pose(&mut self) -> Result<[f64; N_CHANNELS], CliError> {
        Ok(from_io(&self.array()?))
    }

    fn optional_pose(&mut self) -> Result<Option<[f64; N_CHANNELS]>, CliError> {
        let start = self.next;
        let empty = (start..start + N_CHANNELS)
            .filter(|&i| self.record[i].is_empty())
            .count();
        match empty {
            0 => self.pose().map(Some),
            N_CHANNELS => {
                self.next += N_CHANNELS;
                Ok(None)
            }
            _ => Err(CliError::Input(format!(
                "{}: line {}: columns `{}` are partially empty",
                self.path.display(),
                self.line,
                self.header[start]
            ))),
        }
    }
}

/// Reads a log CSV written by [`write_log`].
pub fn read_log(path: &Path) -> Result<Vec<LogRow>, CliError> {
    let mut r = reader(path)?;
    let header = log_header();
    check_header(path, &mut r, &header)?;
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let mut f = Fields {
            path,
            line: record.position().map_or(0, |p| p.line()),
            header: &header,
            record: &record,
            next: 0,
        };
        let t = f.f64()?;
        let truth = f.pose()?;
        let sensor_tick = f.bool()?;
        let measurement = f.optional_pose()?;
        let one_step = f.optional_pose()?;
        let gp_mean = f.pose()?;
        let gp_variance = variance_from_io(&f.array()?);
        let mut safety_flags = [false; N_CHANNELS];
        for flag in &mut safety_flags {
            *flag = f.bool()?;
        }
        let reference = f.pose()?;
        let tool = f.pose()?;
        rows.push(LogRow {
            t,
            truth,
            sensor_tick,
            measurement,
            one_step,
            gp_mean,
            gp_variance,
            safety_flags,
            reference,
            tool,
            q_ref: f.array()?,
            qd_ref: f.array()?,
            q: f.array()?,
            qd: f.array()?,
            u: f.array()?,
            qp_iterations: f.usize()?,
            qp_primal_residual: f.f64()?,
            qp_dual_residual: f.f64()?,
            qp_capped: f.bool()?,
            clik_error: f.f64()?,
        });
    }
    if rows.is_empty() {
        return Err(CliError::Input(format!(
            "{}: log has no data rows",
            path.display()
        )));
    }
    Ok(rows)
}
