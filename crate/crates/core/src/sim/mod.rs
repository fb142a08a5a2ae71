//! Deterministic closed-loop simulation in virtual time.
//!
//! Simulation time starts at 0 with a warm-up phase in which only the sensor
//! runs; its samples feed the offline hyperparameter fit. The online loop then
//! runs on the control lattice `warmup + k·T_s`: ingest the sensor sample due
//! at the tick, forecast the relative pose over the horizon, compose it with the
//! planned insertion path, map the horizon to joint space with CLIK, solve the
//! MPC and apply the first input to the double-integrator plant.

mod metrics;
mod motion;
mod path;

pub use metrics::{compute_metrics, tracking_errors, ChannelErrorStats, Metrics};
pub use motion::{breathing_pose, BreathingConfig, ChannelMotion, Sensor, SensorConfig};
pub use path::{plan_insertion_path, solve_ik, InsertionConfig, PlannedPath, WAYPOINT_TOLERANCE};

use nalgebra::{DMatrix, DVector, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gp::{optimize_hyperparams, GpError, KernelSpec, OptimizeOptions};
use crate::kinematics::{
    clik_step, forward_kinematics, DhTable, IkConfig, JointVector, KinematicsError, PoseEuler,
};
use crate::mpc::{
    shift_warm_start, Bounds, CondensedMpc, JointReferenceTrajectory, LtiModel, MpcError,
    MpcWeights, QpSettings,
};
use crate::reference::{
    default_variance_thresholds, ChannelModel, ObservationWindow, PoseSample, ReferenceError,
    ReferenceGenerator, WINDOW_CAPACITY,
};
use crate::{N_CHANNELS, N_JOINTS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("no warm-up samples for channel {channel}")]
    NoWarmupData { channel: usize },
    #[error("hyperparameter fit for channel {channel}: {source}")]
    HyperparameterFit {
        channel: usize,
        #[source]
        source: GpError,
    },
    #[error("insertion path unreachable (waypoint residual {residual:e})")]
    PathUnreachable { residual: f64 },
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Reference(#[from] ReferenceError),
    #[error(transparent)]
    Mpc(#[from] MpcError),
    #[error("at t = {t} s: {source}")]
    Tick {
        t: f64,
        #[source]
        source: Box<SimError>,
    },
    #[error("log is empty")]
    EmptyLog,
}

impl SimError {
    fn at(self, t: f64) -> Self {
        SimError::Tick {
            t,
            source: Box::new(self),
        }
    }
}

/// How the MPC input reference is built from the joint velocity reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InputReference {
    #[default]
    ForwardDifference,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpConfig {
    /// Kernel structure shared by all channels; its values only matter when
    /// hyperparameters are not refit.
    pub kernel: KernelSpec,
    pub window: usize,
    pub optimizer: OptimizeOptions,
    pub variance_thresholds: [f64; N_CHANNELS],
    /// Fixed per-channel models; skips the offline fit when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub models: Option<[ChannelModel; N_CHANNELS]>,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            kernel: KernelSpec::quasi_periodic(1e-5, 20.0, 1.0, 4.0),
            window: WINDOW_CAPACITY,
            // The data-derived first start is already near the optimum for
            // breathing-like signals; random restarts mostly add runtime.
            optimizer: OptimizeOptions {
                n_starts: 1,
                ..OptimizeOptions::default()
            },
            variance_thresholds: default_variance_thresholds(),
            models: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QpConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for QpConfig {
    fn default() -> Self {
        let s = QpSettings::default();
        Self {
            tolerance: s.tolerance,
            max_iterations: s.max_iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub dh: DhTable,
    /// Absolute needle-tip goal pose (m, rad).
    pub p_goal: PoseEuler,
    /// Initial guess for the inverse kinematics of the first path waypoint.
    pub ik_seed: [f64; N_JOINTS],
    pub insertion: InsertionConfig,
    /// Sensor-only phase before the online loop, s.
    pub warmup: f64,
    /// Online run length, s.
    pub duration: f64,
    /// Control period T_s, s.
    pub ts: f64,
    /// MPC horizon N.
    pub horizon: usize,
    pub breathing: BreathingConfig,
    pub sensor: SensorConfig,
    pub gp: GpConfig,
    pub weights: MpcWeights,
    pub bounds: Bounds,
    pub ik: IkConfig,
    pub qp: QpConfig,
    pub input_reference: InputReference,
    /// Offset added to the plant's initial joint angles, rad.
    pub initial_joint_offset: [f64; N_JOINTS],
    /// Bound of a uniform random input disturbance, rad/s².
    pub input_disturbance: f64,
    pub disturbance_seed: u64,
    /// Ticks between stored horizon snapshots; 0 stores none.
    pub snapshot_stride: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dh: DhTable::default(),
            p_goal: PoseEuler {
                position: [0.671, -0.005, 0.47],
                euler: [2.86, 0.39, 2.69],
            },
            ik_seed: [0.1, 0.6, -0.2, -1.3, 0.3, 0.8, 0.2],
            insertion: InsertionConfig::default(),
            warmup: 20.0,
            duration: 60.0,
            ts: 0.005,
            horizon: 30,
            breathing: BreathingConfig::default(),
            sensor: SensorConfig::default(),
            gp: GpConfig::default(),
            weights: MpcWeights::default(),
            bounds: Bounds::default(),
            ik: IkConfig::default(),
            qp: QpConfig::default(),
            input_reference: InputReference::ForwardDifference,
            initial_joint_offset: [0.0; N_JOINTS],
            input_disturbance: 0.0,
            disturbance_seed: 0,
            snapshot_stride: 200,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        self.dh.validate()?;
        self.ik.validate()?;
        if !(self.ts > 0.0 && self.ts.is_finite()) {
            return bad("ts must be positive".into());
        }
        if !(self.warmup > 0.0 && self.warmup.is_finite()) {
            return bad("warmup must be positive".into());
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad("duration must be positive".into());
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if self.gp.window == 0 {
            return bad("GP window must hold at least one sample".into());
        }
        if (self.ik.dt - self.ts).abs() > 1e-12 {
            return bad("CLIK dt must equal the control period".into());
        }
        if self.sensor.rate_hz * self.ts > 1.0 + 1e-9 {
            return bad("sensor rate must not exceed the control rate".into());
        }
        if !(self.input_disturbance >= 0.0 && self.input_disturbance.is_finite()) {
            return bad("input disturbance bound must be non-negative".into());
        }
        if self.initial_joint_offset.iter().any(|v| !v.is_finite()) {
            return bad("initial joint offset must be finite".into());
        }
        self.breathing.validate().map_err(SimError::InvalidConfig)?;
        self.sensor.validate().map_err(SimError::InvalidConfig)?;
        self.insertion.validate().map_err(SimError::InvalidConfig)?;
        self.weights.validate(2 * N_JOINTS, N_JOINTS)?;
        self.bounds.validate(N_JOINTS)?;
        // Rejects a goal orientation at the Euler singularity.
        PoseSample::new(0.0, to_array(self.p_goal.to_vector().iter().copied()))?;
        Ok(())
    }

    /// Number of online control ticks.
    pub fn ticks(&self) -> usize {
        (self.duration / self.ts).round() as usize
    }
}

/// One control tick. Poses are `[x, y, z, roll, pitch, yaw]` in m and rad.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    /// Noiseless relative target pose.
    pub truth: [f64; N_CHANNELS],
    /// True when a sensor sample was due at this tick.
    pub sensor_tick: bool,
    /// The sample ingested at this tick, if any.
    pub measurement: Option<[f64; N_CHANNELS]>,
    /// Forecast of this tick made one sensor period earlier; present only at
    /// ticks with a measurement.
    pub one_step: Option<[f64; N_CHANNELS]>,
    pub gp_mean: [f64; N_CHANNELS],
    pub gp_variance: [f64; N_CHANNELS],
    pub safety_flags: [bool; N_CHANNELS],
    /// Composed absolute reference pose at horizon index 0.
    pub reference: [f64; N_CHANNELS],
    /// Needle-tip pose of the plant, FK of the plant joint angles.
    pub tool: [f64; N_CHANNELS],
    pub q_ref: [f64; N_JOINTS],
    pub qd_ref: [f64; N_JOINTS],
    pub q: [f64; N_JOINTS],
    pub qd: [f64; N_JOINTS],
    /// Input applied to the plant (MPC output plus disturbance), rad/s².
    pub u: [f64; N_JOINTS],
    pub qp_iterations: usize,
    pub qp_primal_residual: f64,
    pub qp_dual_residual: f64,
    /// True when the QP hit its iteration cap and the last iterate was used.
    pub qp_capped: bool,
    /// Infinity norm of the CLIK pose error at horizon index 0.
    pub clik_error: f64,
}

/// GP forecast over a full horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonSnapshot {
    pub t: f64,
    pub grid: Vec<f64>,
    pub mean: Vec<[f64; N_CHANNELS]>,
    pub variance: Vec<[f64; N_CHANNELS]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimLog {
    pub ts: f64,
    /// Sensor samples taken during the warm-up phase.
    pub warmup_samples: Vec<PoseSample>,
    pub rows: Vec<LogRow>,
    pub snapshots: Vec<HorizonSnapshot>,
    /// Channel models used online.
    pub models: [ChannelModel; N_CHANNELS],
    /// Hyperparameter refits during the online loop.
    pub refits: usize,
}

fn to_array<const N: usize>(v: impl IntoIterator<Item = f64>) -> [f64; N] {
    let mut out = [0.0; N];
    for (o, x) in out.iter_mut().zip(v) {
        *o = x;
    }
    out
}

/// Sensor schedule `j / rate` mapped onto the control lattice.
struct Schedule {
    rate: f64,
    next: u64,
}

impl Schedule {
    fn time(&self, j: u64) -> f64 {
        j as f64 / self.rate
    }

    /// Consumes the sample due at or before `t`, if any.
    fn due(&mut self, t: f64) -> bool {
        if self.time(self.next) <= t + 1e-9 {
            self.next += 1;
            true
        } else {
            false
        }
    }
}

/// Samples the sensor over the warm-up phase.
fn warmup_windows(
    cfg: &SimConfig,
    sensor: &mut Sensor,
    schedule: &mut Schedule,
    samples: &mut Vec<PoseSample>,
) -> Vec<ObservationWindow> {
    let mut windows: Vec<ObservationWindow> = (0..N_CHANNELS)
        .map(|_| ObservationWindow::new(cfg.gp.window))
        .collect();
    while schedule.time(schedule.next) < cfg.warmup - 1e-9 {
        let t = schedule.time(schedule.next);
        schedule.next += 1;
        if let Some(sample) = sensor.sense(t, &breathing_pose(&cfg.breathing, t)) {
            for w in &mut windows {
                w.push(sample).expect("schedule times increase");
            }
            samples.push(sample);
        }
    }
    windows
}

/// Offline hyperparameter fit on the warm-up windows.
pub fn fit_channel_models(
    cfg: &GpConfig,
    windows: &[ObservationWindow; N_CHANNELS],
    noise_guess: &[f64; N_CHANNELS],
) -> Result<[ChannelModel; N_CHANNELS], SimError> {
    let mut models = Vec::with_capacity(N_CHANNELS);
    for (c, w) in windows.iter().enumerate() {
        if w.is_empty() {
            return Err(SimError::NoWarmupData { channel: c });
        }
        let data = w
            .training_set(c, noise_guess[c].max(1e-12))
            .map_err(SimError::Reference)?;
        let fitted = optimize_hyperparams(&cfg.kernel, &data, &cfg.optimizer)
            .map_err(|source| SimError::HyperparameterFit { channel: c, source })?;
        models.push(ChannelModel {
            kernel: fitted.kernel,
            noise_variance: fitted.noise_variance,
        });
    }
    Ok(models.try_into().expect("six channels"))
}

/// Runs the full offline and online pipeline.
pub fn run(cfg: &SimConfig) -> Result<SimLog, SimError> {
    cfg.validate()?;
    let mut sensor = Sensor::new(&cfg.sensor);
    let mut schedule = Schedule {
        rate: cfg.sensor.rate_hz,
        next: 0,
    };

    // Offline: warm-up sensing, hyperparameters, path.
    let mut warmup_samples = Vec::new();
    let windows: [ObservationWindow; N_CHANNELS] =
        warmup_windows(cfg, &mut sensor, &mut schedule, &mut warmup_samples)
            .try_into()
            .expect("six channels");
    let models = match &cfg.gp.models {
        Some(m) => m.clone(),
        None => {
            let guess = cfg.sensor.noise_std.map(|s| s * s);
            fit_channel_models(&cfg.gp, &windows, &guess)?
        }
    };
    let mut windows = windows;
    let t0 = cfg.warmup;
    let ts = cfg.ts;
    let n = cfg.horizon;
    let ticks = cfg.ticks();
    let path = plan_insertion_path(
        &cfg.dh,
        &cfg.p_goal,
        &cfg.insertion,
        &JointVector::from(cfg.ik_seed),
        &cfg.ik,
        t0,
        ts,
    )?;

    let mut generator =
        ReferenceGenerator::new(models.clone(), cfg.gp.variance_thresholds, t0, ts)?;
    generator.refit(&windows)?;
    let model = LtiModel::double_integrator(N_JOINTS, ts)?;
    let settings = QpSettings {
        tolerance: cfg.qp.tolerance,
        max_iterations: cfg.qp.max_iterations,
        ..QpSettings::default()
    };
    let mut mpc = CondensedMpc::new(&model, &cfg.weights, &cfg.bounds, n, settings)?;
    let mut disturbance_rng = ChaCha8Rng::seed_from_u64(cfg.disturbance_seed);

    // Synchronized start: the joint reference begins on the composed pose.
    let first = generator.predict(0, n)?;
    let (p_plan, _, _) = path.at(t0);
    let mut q_r = solve_ik(
        &cfg.dh,
        &(p_plan + first.pose_mean[0]),
        &path.joint_at(t0),
        &cfg.ik,
        200,
    )
    .map_err(|e| e.at(t0))?;
    let mut x = DVector::<f64>::zeros(2 * N_JOINTS);
    let mut warm: Option<DVector<f64>> = None;
    // Forecast of the first online sensor tick from the warm-up data.
    let mut pending: Option<[f64; N_CHANNELS]> = Some(
        generator
            .evaluate(t0)
            .map_err(|e| SimError::from(e).at(t0))?
            .map(|(m, _, _)| m),
    );

    let mut rows = Vec::with_capacity(ticks);
    let mut snapshots = Vec::new();
    let mut q_h = DMatrix::<f64>::zeros(N_JOINTS, n + 1);
    let mut qd_h = DMatrix::<f64>::zeros(N_JOINTS, n + 1);

    for k in 0..ticks {
        let t = generator.lattice_time(k as i64);
        let fail = |e: SimError| e.at(t);
        let truth = breathing_pose(&cfg.breathing, t);

        // Sensor.
        let sensor_tick = schedule.due(t);
        let mut measurement = None;
        let mut one_step = None;
        if sensor_tick {
            if let Some(sample) = sensor.sense(t, &truth) {
                let sample = PoseSample { t, ..sample };
                for w in &mut windows {
                    w.push(sample).map_err(|e| fail(e.into()))?;
                }
                generator.refit(&windows).map_err(|e| fail(e.into()))?;
                measurement = Some(sample.pose);
                one_step = pending;
            }
            let next_t = schedule.time(schedule.next);
            let next_k = (((next_t - t0) / ts) - 1e-6).ceil().max(k as f64 + 1.0) as i64;
            let forecast = generator
                .evaluate(generator.lattice_time(next_k))
                .map_err(|e| fail(e.into()))?;
            pending = Some(forecast.map(|(m, _, _)| m));
        }

        // Horizon forecast composed with the planned path, mapped to joints.
        let pred = generator.predict(k as i64, n).map_err(|e| fail(e.into()))?;
        let mut q = q_r;
        let mut reference0 = Vector6::zeros();
        let mut clik_error = 0.0;
        for i in 0..=n {
            let (p_plan, v_plan, qd_path) = path.at(pred.grid[i]);
            let p = p_plan + pred.pose_mean[i];
            let pdot = v_plan + pred.pose_velocity[i];
            let step =
                clik_step(&cfg.dh, &q, &qd_path, &p, &pdot, &cfg.ik).map_err(|e| fail(e.into()))?;
            q_h.set_column(i, &DVector::from_column_slice(q.as_slice()));
            qd_h.set_column(i, &DVector::from_column_slice(step.qdot.as_slice()));
            if i == 0 {
                reference0 = p;
                clik_error = step.error.amax();
            }
            q = step.q_next;
        }
        q_r = JointVector::from_iterator(q_h.column(1).iter().copied());

        let mut reference = JointReferenceTrajectory::from_joint_path(&q_h, &qd_h, ts);
        if cfg.input_reference == InputReference::Zero {
            reference.u_r.fill(0.0);
        }
        if k == 0 {
            for j in 0..N_JOINTS {
                x[j] = q_h[(j, 0)] + cfg.initial_joint_offset[j];
                x[N_JOINTS + j] = qd_h[(j, 0)];
            }
        }

        let (u0, stacked, iterations, prim, dual, capped) =
            match mpc.solve(&x, &reference, warm.as_ref()) {
                Ok(sol) => {
                    let stacked = sol.stacked_inputs();
                    let u0 = sol.inputs.column(0).into_owned();
                    (
                        u0,
                        stacked,
                        sol.iterations,
                        sol.primal_residual,
                        sol.dual_residual,
                        false,
                    )
                }
                Err(MpcError::MaxIterations { solution }) => {
                    let u0 = solution.x.rows(0, N_JOINTS).into_owned();
                    (
                        u0,
                        solution.x.clone(),
                        solution.iterations,
                        solution.primal_residual,
                        solution.dual_residual,
                        true,
                    )
                }
                Err(e) => return Err(fail(e.into())),
            };
        warm = Some(shift_warm_start(&stacked, N_JOINTS));

        let mut applied = u0;
        if cfg.input_disturbance > 0.0 {
            for v in applied.iter_mut() {
                *v += disturbance_rng.random_range(-cfg.input_disturbance..=cfg.input_disturbance);
            }
        }

        let q_plant = JointVector::from_iterator(x.rows(0, N_JOINTS).iter().copied());
        let tool = forward_kinematics(&cfg.dh, &q_plant)
            .map_err(|e| fail(e.into()))?
            .to_vector();

        if cfg.snapshot_stride > 0 && k % cfg.snapshot_stride == 0 {
            snapshots.push(HorizonSnapshot {
                t,
                grid: pred.grid.clone(),
                mean: pred
                    .pose_mean
                    .iter()
                    .map(|v| to_array(v.iter().copied()))
                    .collect(),
                variance: pred
                    .pose_variance
                    .iter()
                    .map(|v| to_array(v.iter().copied()))
                    .collect(),
            });
        }
        rows.push(LogRow {
            t,
            truth,
            sensor_tick,
            measurement,
            one_step,
            gp_mean: to_array(pred.pose_mean[0].iter().copied()),
            gp_variance: to_array(pred.pose_variance[0].iter().copied()),
            safety_flags: pred.safety_flags,
            reference: to_array(reference0.iter().copied()),
            tool: to_array(tool.iter().copied()),
            q_ref: to_array(q_h.column(0).iter().copied()),
            qd_ref: to_array(qd_h.column(0).iter().copied()),
            q: to_array(x.rows(0, N_JOINTS).iter().copied()),
            qd: to_array(x.rows(N_JOINTS, N_JOINTS).iter().copied()),
            u: to_array(applied.iter().copied()),
            qp_iterations: iterations,
            qp_primal_residual: prim,
            qp_dual_residual: dual,
            qp_capped: capped,
            clik_error,
        });

        x = model.step(&x, &applied);
    }

    Ok(SimLog {
        ts,
        warmup_samples,
        rows,
        snapshots,
        models,
        refits: generator.refits(),
    })
}
