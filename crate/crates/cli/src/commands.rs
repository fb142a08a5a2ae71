use std::path::{Path, PathBuf};
use std::time::Instant;

use gptrack_core::gp::optimize_hyperparams;
use gptrack_core::reference::{predict_reference, CHANNEL_NAMES};
use gptrack_core::sim::{compute_metrics, run, LogRow};
use gptrack_core::{ObservationWindow, PoseSample, N_CHANNELS};

use crate::config::{PlotKind, ScenarioConfig};
use crate::error::CliError;
use crate::hyper::{ChannelHyper, HyperparameterFile};
use crate::io::{self, fmt_f64, io_scale, unit_name};
use crate::plot;
use crate::report::MetricsReport;

/// Below this many tracking rows `fit-hyper` warns.
pub const RECOMMENDED_ROWS: usize = 200;

/// Flags shared by all subcommands.
#[derive(Debug, Clone, Default)]
pub struct Globals {
    pub seed: Option<u64>,
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub quiet: bool,
}

impl Globals {
    /// Scenario from `--config`, or the built-in default, with `--seed` applied.
    pub fn scenario(&self) -> Result<ScenarioConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => ScenarioConfig::load(p)?,
            None => ScenarioConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.apply_seed(seed);
        }
        Ok(cfg)
    }

    fn out_dir(&self, cfg: &ScenarioConfig) -> Result<PathBuf, CliError> {
        let dir = self.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(dir)
    }

    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }
}

fn windows_from(samples: &[PoseSample], capacity: usize) -> [ObservationWindow; N_CHANNELS] {
    let start = samples.len().saturating_sub(capacity);
    std::array::from_fn(|_| {
        let mut w = ObservationWindow::new(capacity);
        for s in &samples[start..] {
            w.push(*s).expect("tracking rows are strictly increasing");
        }
        w
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Offline hyperparameter optimization on the last window of a tracking CSV.
pub fn fit_hyper(
    g: &Globals,
    tracking: &Path,
    output: Option<&Path>,
) -> Result<(PathBuf, HyperparameterFile), CliError> {
    let cfg = g.scenario()?;
    let samples = io::read_tracking(tracking)?;
    if samples.len() < RECOMMENDED_ROWS {
        eprintln!(
            "warning: {} has {} rows; at least {RECOMMENDED_ROWS} are recommended",
            tracking.display(),
            samples.len()
        );
    }
    let gp = &cfg.scenario.gp;
    let windows = windows_from(&samples, gp.window);
    let mut channels = Vec::with_capacity(N_CHANNELS);
    for (c, w) in windows.iter().enumerate() {
        let noise = cfg.scenario.sensor.noise_std[c].powi(2).max(1e-12);
        let data = w.training_set(c, noise)?;
        let fitted = optimize_hyperparams(&gp.kernel, &data, &gp.optimizer)?;
        g.say(format!(
            "{:<6} log marginal likelihood {:>14.6}  noise σ {:.6} {}",
            CHANNEL_NAMES[c],
            fitted.log_likelihood,
            fitted.noise_variance.sqrt() * io_scale(c),
            unit_name(c)
        ));
        channels.push(ChannelHyper::new(c, &fitted, w));
    }
    let file = HyperparameterFile {
        seed: gp.optimizer.seed,
        window: gp.window,
        channels,
    };
    let path = match output {
        Some(p) => p.to_path_buf(),
        None => g.out_dir(&cfg)?.join("hyper.json"),
    };
    write_text(&path, &file.to_json())?;
    g.say(format!("wrote {}", path.display()));
    Ok((path, file))
}

/// Horizon forecast from the last window of a tracking CSV.
#[derive(Debug, Clone)]
pub struct PredictArgs<'a> {
    pub tracking: &'a Path,
    pub hyper: &'a Path,
    /// Defaults to the last sample time.
    pub t_now: Option<f64>,
    /// Defaults to the scenario's control period.
    pub ts: Option<f64>,
    /// Defaults to the scenario's horizon.
    pub horizon: Option<usize>,
    pub output: Option<&'a Path>,
}

pub fn prediction_header() -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for (c, name) in CHANNEL_NAMES.iter().enumerate() {
        let u = unit_name(c);
        h.push(format!("{name}_mean_{u}"));
        h.push(format!("{name}_vel_{u}_s"));
        h.push(format!("{name}_var_{u}2"));
    }
    h
}

pub fn predict(g: &Globals, args: &PredictArgs) -> Result<PathBuf, CliError> {
    let cfg = g.scenario()?;
    let samples = io::read_tracking(args.tracking)?;
    let hyper = HyperparameterFile::load(args.hyper)?;
    let last = samples.last().expect("non-empty").t;
    let t_now = args.t_now.unwrap_or(last);
    if !(t_now >= last) {
        return Err(CliError::Contract(format!(
            "t_now = {t_now} lies before the last sample at t = {last}"
        )));
    }
    let ts = args.ts.unwrap_or(cfg.scenario.ts);
    let n = args.horizon.unwrap_or(cfg.scenario.horizon);
    let windows = windows_from(&samples, cfg.scenario.gp.window);
    let pred = predict_reference(
        &windows,
        &hyper.models(),
        t_now,
        ts,
        n,
        &cfg.scenario.gp.variance_thresholds,
    )?;

    let path = match args.output {
        Some(p) => p.to_path_buf(),
        None => g.out_dir(&cfg)?.join("prediction.csv"),
    };
    let mut text = prediction_header().join(",");
    text.push('\n');
    for (i, t) in pred.grid.iter().enumerate() {
        let mut rec = vec![fmt_f64(*t)];
        for c in 0..N_CHANNELS {
            let s = io_scale(c);
            rec.push(fmt_f64(pred.pose_mean[i][c] * s));
            rec.push(fmt_f64(pred.pose_velocity[i][c] * s));
            rec.push(fmt_f64(pred.pose_variance[i][c] * s * s));
        }
        text.push_str(&rec.join(","));
        text.push('\n');
    }
    write_text(&path, &text)?;
    for (c, flag) in pred.safety_flags.iter().enumerate() {
        if *flag {
            eprintln!(
                "warning: {} variance exceeds its safety threshold",
                CHANNEL_NAMES[c]
            );
        }
    }
    g.say(format!(
        "wrote {} ({} rows)",
        path.display(),
        pred.grid.len()
    ));
    Ok(path)
}

/// Files written by `simulate` and `report`.
#[derive(Debug, Clone)]
pub struct Outputs {
    pub log: Option<PathBuf>,
    pub measurements: Option<PathBuf>,
    pub metrics: PathBuf,
    pub plots: Vec<PathBuf>,
    pub report: MetricsReport,
}

fn write_plots(rows: &[LogRow], kinds: &[PlotKind], dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut kinds = kinds.to_vec();
    kinds.sort();
    kinds.dedup();
    kinds
        .into_iter()
        .map(|k| {
            let path = dir.join(k.file_name());
            plot::render(k, rows, &path).map(|_| path)
        })
        .collect()
}

fn summary(r: &MetricsReport) -> String {
    let mut s = String::new();
    s.push_str(&format!("ticks                {}\n", r.ticks));
    s.push_str(&format!(
        "position error       max {:.6} mm   rms {:.6} mm\n",
        r.max_pos_err_mm, r.rms_pos_err_mm
    ));
    s.push_str(&format!(
        "orientation error    max {:.6} deg  rms {:.6} deg\n",
        r.max_ori_err_deg, r.rms_ori_err_deg
    ));
    s.push_str("one-step GP error    channel    rms          max          n\n");
    for ch in &r.one_step {
        s.push_str(&format!(
            "                     {:<6} {:>12.6} {:>12.6} {:>6} {}\n",
            ch.channel, ch.rms, ch.max, ch.count, ch.unit
        ));
    }
    s.push_str(&format!(
        "sensor ticks         {}  dropouts {}\n",
        r.sensor_ticks, r.dropout_count
    ));
    s.push_str(&format!(
        "QP iterations        mean {:.2}  max {}  capped ticks {}\n",
        r.mean_qp_iterations, r.max_qp_iterations, r.qp_capped_ticks
    ));
    s.push_str(&format!("safety flag ticks    {}", r.safety_flag_ticks));
    s
}

/// Runs the closed loop and writes the log, measurements, metrics and plots.
/// Outputs are written before the assertion block is checked.
pub fn simulate(g: &Globals) -> Result<Outputs, CliError> {
    let cfg = g.scenario()?;
    let dir = g.out_dir(&cfg)?;
    let start = Instant::now();
    let log = run(&cfg.scenario)?;
    let elapsed = start.elapsed();
    let metrics = compute_metrics(&log.rows)?;
    let report = MetricsReport::from(&metrics);

    let log_path = dir.join(&cfg.output.log);
    io::write_log(&log_path, &log.rows)?;
    let meas_path = dir.join(&cfg.output.measurements);
    let mut samples = log.warmup_samples.clone();
    samples.extend(
        log.rows
            .iter()
            .filter_map(|r| r.measurement.map(|m| PoseSample { t: r.t, pose: m })),
    );
    io::write_tracking(&meas_path, &samples)?;
    let metrics_path = dir.join(&cfg.output.metrics);
    report.write(&metrics_path)?;
    let plots = write_plots(&log.rows, &cfg.output.plots, &dir)?;

    g.say(summary(&report));
    g.say(format!(
        "runtime              {:.1} s",
        elapsed.as_secs_f64()
    ));
    g.say(format!("wrote {}", dir.display()));

    let violations = cfg
        .assertions
        .check(&report, &cfg.scenario.sensor.noise_std);
    if !violations.is_empty() {
        return Err(CliError::Assertion(violations.join("; ")));
    }
    Ok(Outputs {
        log: Some(log_path),
        measurements: Some(meas_path),
        metrics: metrics_path,
        plots,
        report,
    })
}

/// Recomputes metrics and plots from a log CSV alone.
pub fn report(
    g: &Globals,
    log: &Path,
    plots: Option<&[PlotKind]>,
    expect: Option<&Path>,
) -> Result<Outputs, CliError> {
    let cfg = g.scenario()?;
    let rows = io::read_log(log)?;
    let dir = g.out_dir(&cfg)?;
    let report = MetricsReport::from(&compute_metrics(&rows)?);
    let metrics_path = dir.join(&cfg.output.metrics);
    report.write(&metrics_path)?;
    let kinds = plots.unwrap_or(&cfg.output.plots);
    let plots = write_plots(&rows, kinds, &dir)?;
    g.say(summary(&report));
    if let Some(expected) = expect {
        let diffs = MetricsReport::load(expected)?.differences(&report, 1e-12);
        if !diffs.is_empty() {
            return Err(CliError::Assertion(format!(
                "recomputed metrics differ from {}: {}",
                expected.display(),
                diffs.join("; ")
            )));
        }
        g.say(format!("metrics match {}", expected.display()));
    }
    Ok(Outputs {
        log: None,
        measurements: None,
        metrics: metrics_path,
        plots,
        report,
    })
}
