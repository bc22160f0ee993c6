//! The virtual crane: one task owning the plant, fed by a command queue.

use std::sync::Arc;
use std::time::Duration;

use chrono::Utc;
use crane_twin_bus::{topics, BusClient};
use crane_twin_core::{Axis, CraneState, PlantInput, ProfileMode, TraceKind, Trajectory};
use crane_twin_historian::{Historian, RunRecord, RunStatus, TraceWriter};
use tokio::sync::{mpsc, oneshot, watch};
use tokio::task::JoinHandle;
use tokio::time::MissedTickBehavior;

use crate::config::{MotionConfig, SharedConfig, TwinConfig};
use crate::error::{Result, ServiceError};
use crate::generator::TrajectoryClient;
use crate::payloads::{new_id, RunCompleted, RunHandle, RunStarted, StatusSnapshot, TrajectoryRequest};
use crate::plant::{FaultSpec, Plant};

type Reply<T> = oneshot::Sender<Result<T>>;

enum Command {
    Move {
        axis: Axis,
        target: f64,
        mode: ProfileMode,
        reply: Reply<RunHandle>,
    },
    Home(Reply<()>),
    Zero(Reply<()>),
    Magnet(bool, Reply<()>),
    Fault(FaultSpec, Reply<()>),
}

/// Handle to the crane task. Cheap to clone.
#[derive(Clone)]
pub struct VirtualCrane {
    commands: mpsc::Sender<Command>,
    status: watch::Receiver<StatusSnapshot>,
}

impl VirtualCrane {
    /// Starts the crane task around `plant`.
    pub async fn spawn(
        plant: Plant,
        config: &SharedConfig,
        bus: BusClient,
        historian: Arc<Historian>,
    ) -> Result<(VirtualCrane, JoinHandle<()>)> {
        let cfg = config.read().unwrap().clone();
        let trajectories = TrajectoryClient::new(bus.clone()).await?;
        let mut exec = Executor {
            status: watch::channel(StatusSnapshot {
                state: CraneState::default(),
                homed: false,
                busy: false,
                fault_active: false,
                fault: FaultSpec::default(),
                run_id: None,
            })
            .0,
            plant,
            ratio: cfg.sample_ratio(),
            time_scale: cfg.time_scale,
            motion_cfg: cfg.motion,
            cfg,
            bus,
            trajectories,
            historian,
            motion: None,
        };
        let first = exec.plant.measure();
        exec.publish_status(first, None);
        let status = exec.status.subscribe();
        let (tx, rx) = mpsc::channel(64);
        let task = tokio::spawn(exec.run(rx));
        Ok((VirtualCrane { commands: tx, status }, task))
    }

    async fn call<R>(&self, make: impl FnOnce(Reply<R>) -> Command) -> Result<R> {
        let (tx, rx) = oneshot::channel();
        self.commands
            .send(make(tx))
            .await
            .map_err(|_| ServiceError::Internal("crane task stopped".into()))?;
        rx.await
            .map_err(|_| ServiceError::Internal("crane task stopped".into()))?
    }

    /// Starts a cart run to `target_x`. Returns once the run has started.
    pub async fn move_to(&self, target_x: f64, mode: ProfileMode) -> Result<RunHandle> {
        self.call(|reply| Command::Move {
            axis: Axis::Cart,
            target: target_x,
            mode,
            reply,
        })
        .await
    }

    /// Starts a hoist run to rope length `target_l`.
    pub async fn hoist_to(&self, target_l: f64) -> Result<RunHandle> {
        self.call(|reply| Command::Move {
            axis: Axis::Hoist,
            target: target_l,
            mode: ProfileMode::Trapezoid,
            reply,
        })
        .await
    }

    /// Drives the cart to x = 0 at reduced speed. Returns when homed.
    pub async fn home(&self) -> Result<()> {
        self.call(Command::Home).await
    }

    /// Recalibrates the swing encoder so the settled payload reads zero.
    pub async fn zero(&self) -> Result<()> {
        self.call(Command::Zero).await
    }

    pub async fn set_magnet(&self, on: bool) -> Result<()> {
        self.call(|r| Command::Magnet(on, r)).await
    }

    /// Overrides plant and sensor behavior until replaced. A fault with
    /// `active = false` restores nominal behavior.
    pub async fn inject_fault(&self, spec: FaultSpec) -> Result<()> {
        spec.validate()?;
        self.call(|r| Command::Fault(spec, r)).await
    }

    /// Latest snapshot; never blocks.
    pub fn status(&self) -> StatusSnapshot {
        self.status.borrow().clone()
    }

    pub fn watch(&self) -> watch::Receiver<StatusSnapshot> {
        self.status.clone()
    }

    /// Waits until no motion is in progress.
    pub async fn wait_idle(&self) -> Result<StatusSnapshot> {
        let mut rx = self.status.clone();
        let s = rx
            .wait_for(|s| !s.busy)
            .await
            .map_err(|_| ServiceError::Internal("crane task stopped".into()))?;
        Ok(s.clone())
    }
}

enum Purpose {
    Home(Option<Reply<()>>),
    Run { run_id: String, writer: TraceWriter },
}

struct Motion {
    traj: Trajectory,
    step: usize,
    purpose: Purpose,
}

impl Motion {
    fn done(&self) -> bool {
        self.step >= self.traj.num_cells()
    }

    fn run_id(&self) -> Option<String> {
        match &self.purpose {
            Purpose::Run { run_id, .. } => Some(run_id.clone()),
            Purpose::Home(_) => None,
        }
    }
}

struct Executor {
    plant: Plant,
    cfg: TwinConfig,
    motion_cfg: MotionConfig,
    ratio: usize,
    time_scale: f64,
    bus: BusClient,
    trajectories: TrajectoryClient,
    historian: Arc<Historian>,
    status: watch::Sender<StatusSnapshot>,
    motion: Option<Motion>,
}

impl Executor {
    async fn run(mut self, mut rx: mpsc::Receiver<Command>) {
        if self.time_scale > 0.0 {
            let period = Duration::from_secs_f64(self.cfg.sensors.sample_period / self.time_scale);
            let mut ticker = tokio::time::interval(period);
            ticker.set_missed_tick_behavior(MissedTickBehavior::Delay);
            loop {
                tokio::select! {
                    biased;
                    cmd = rx.recv() => match cmd {
                        Some(cmd) => self.handle(cmd).await,
                        None => break,
                    },
                    _ = ticker.tick() => self.sample(),
                }
            }
        } else {
            loop {
                if self.motion.is_some() {
                    while let Ok(cmd) = rx.try_recv() {
                        self.handle(cmd).await;
                    }
                    self.sample();
                    tokio::task::yield_now().await;
                } else {
                    match rx.recv().await {
                        Some(cmd) => self.handle(cmd).await,
                        None => break,
                    }
                }
            }
        }
        if let Some(m) = self.motion.take() {
            self.abort(m, "crane stopped");
        }
    }

    fn snapshot(&self, state: CraneState, run_id: Option<String>) -> StatusSnapshot {
        let fault = self.plant.fault();
        StatusSnapshot {
            state,
            homed: self.plant.is_homed(),
            busy: self.motion.is_some(),
            fault_active: fault.active,
            fault,
            run_id,
        }
    }

    fn publish_status(&self, state: CraneState, run_id: Option<String>) {
        let snap = self.snapshot(state, run_id);
        if let Err(e) = self.bus.publish_json(topics::CRANE_STATE, &snap) {
            tracing::warn!("cannot publish crane state: {e}");
        }
        self.status.send_replace(snap);
    }

    /// Re-publishes the latest measurement with current flags.
    fn refresh_status(&self) {
        let state = self.status.borrow().state;
        let mut snap = self.snapshot(state, self.motion.as_ref().and_then(Motion::run_id));
        snap.state.magnet_on = self.plant.true_state().magnet_on;
        self.status.send_replace(snap);
    }

    async fn handle(&mut self, cmd: Command) {
        match cmd {
            Command::Move {
                axis,
                target,
                mode,
                reply,
            } => {
                let r = self.start_run(axis, target, mode).await;
                let _ = reply.send(r);
            }
            Command::Home(reply) => {
                if let Some(reply) = self.start_homing(reply).await {
                    reply.0.send(reply.1).ok();
                }
            }
            Command::Zero(reply) => {
                let r = if self.motion.is_some() {
                    Err(ServiceError::busy())
                } else {
                    self.plant.zero(self.motion_cfg.zero_rate_threshold)
                };
                if r.is_ok() {
                    let m = self.plant.measure();
                    self.publish_status(m, None);
                }
                let _ = reply.send(r);
            }
            Command::Magnet(on, reply) => {
                self.plant.set_magnet(on);
                self.refresh_status();
                let _ = reply.send(Ok(()));
            }
            Command::Fault(spec, reply) => {
                let r = self.plant.inject_fault(spec);
                self.refresh_status();
                let _ = reply.send(r);
            }
        }
    }

    async fn plan(&mut self, req: TrajectoryRequest) -> Result<Trajectory> {
        let timeout = Duration::from_secs_f64(self.motion_cfg.trajectory_timeout);
        self.trajectories.request(req, timeout).await
    }

    /// Starts homing, or returns the reply to send right away.
    async fn start_homing(&mut self, reply: Reply<()>) -> Option<(Reply<()>, Result<()>)> {
        if self.motion.is_some() {
            return Some((reply, Err(ServiceError::busy())));
        }
        let s = *self.plant.true_state();
        if s.x.abs() < 1e-9 && s.v == 0.0 {
            self.plant.finish_homing();
            self.refresh_status();
            return Some((reply, Ok(())));
        }
        let p = self.cfg.params;
        let f = self.motion_cfg.home_speed_fraction;
        let req = TrajectoryRequest {
            request_id: new_id(),
            axis: Axis::Cart,
            mode: ProfileMode::ZvShaped,
            p0: s.x,
            p1: 0.0,
            v_max: Some(p.cart_v_max * f),
            a_max: Some(p.cart_a_max * f),
            rope_length: Some(s.l),
            damping_ratio: Some(self.cfg.nominal_damping_ratio(s.l)),
            dt: self.cfg.plant_dt,
        };
        match self.plan(req).await {
            Ok(traj) => {
                // Homing ends settled so the encoder can be zeroed right away.
                let traj = traj.with_hold(self.motion_cfg.settle_time);
                self.motion = Some(Motion {
                    traj,
                    step: 0,
                    purpose: Purpose::Home(Some(reply)),
                });
                self.refresh_status();
                None
            }
            Err(e) => Some((reply, Err(e))),
        }
    }

    async fn start_run(&mut self, axis: Axis, target: f64, mode: ProfileMode) -> Result<RunHandle> {
        if self.motion.is_some() {
            return Err(ServiceError::busy());
        }
        if !self.plant.is_homed() {
            return Err(ServiceError::State("crane is not homed".into()));
        }
        let p = self.cfg.params;
        let (lo, hi, name) = match axis {
            Axis::Cart => (0.0, p.cart_travel_max, "target_x"),
            Axis::Hoist => (p.rope_length_min, p.rope_length_max, "target_l"),
        };
        if !(target.is_finite() && (lo..=hi).contains(&target)) {
            return Err(ServiceError::BadRequest(format!(
                "{name} {target} outside [{lo}, {hi}]"
            )));
        }
        let s = *self.plant.true_state();
        let p0 = match axis {
            Axis::Cart => s.x,
            Axis::Hoist => s.l,
        };
        let mode = if axis == Axis::Hoist {
            ProfileMode::Trapezoid
        } else {
            mode
        };
        let null_move = (target - p0).abs() < 1e-9;
        let req = TrajectoryRequest {
            request_id: new_id(),
            axis,
            mode,
            p0,
            p1: if null_move { p0 } else { target },
            v_max: None,
            a_max: None,
            rope_length: Some(s.l),
            damping_ratio: Some(self.cfg.shaper_damping_ratio(s.l)),
            dt: self.cfg.plant_dt,
        };
        let mut traj = self.plan(req).await?;
        let logger = self.historian.logger_config();
        if !null_move {
            // Pad with rest so residual swing is recorded and the run ends on
            // a stored sample.
            let block = self.ratio * logger.writeout_decimation;
            let n = traj.num_cells();
            let settle = (self.motion_cfg.settle_time / self.cfg.plant_dt).ceil() as usize;
            let total = (n + settle).div_ceil(block) * block;
            traj = traj.with_hold((total - n) as f64 * self.cfg.plant_dt);
        }

        let run_id = new_id();
        let fault = self.plant.fault();
        let mut record = RunRecord::new(run_id.clone(), axis, mode, fault.active);
        record.trajectory_id = traj.id.clone();
        self.historian.create_run(&record)?;
        if let Err(e) = self.historian.write_trajectory(&run_id, &traj) {
            let _ = self.historian.complete_run(&run_id, RunStatus::Aborted);
            return Err(e.into());
        }
        let sample_period = self.cfg.sensors.sample_period;
        let mut writer = match self.historian.trace_writer_with(
            &run_id,
            TraceKind::Measured,
            sample_period,
            logger,
        ) {
            Ok(w) => w,
            Err(e) => {
                let _ = self.historian.complete_run(&run_id, RunStatus::Aborted);
                return Err(e.into());
            }
        };
        let initial = self.plant.measure();
        if let Err(e) = writer.append(&initial) {
            let _ = self.historian.complete_run(&run_id, RunStatus::Aborted);
            return Err(e.into());
        }
        let started = RunStarted {
            run_id: run_id.clone(),
            trajectory: traj.clone(),
            initial,
            plant_dt: self.cfg.plant_dt,
            sample_period: sample_period * logger.writeout_decimation as f64,
            fault_active: fault.active,
            started_at: record.started_at,
        };
        self.bus.publish_json(topics::RUN_STARTED, &started)?;
        let handle = RunHandle {
            run_id: run_id.clone(),
            trajectory_id: traj.id.clone(),
            started_at: record.started_at,
            status: RunStatus::Running,
        };
        let motion = Motion {
            traj,
            step: 0,
            purpose: Purpose::Run {
                run_id: run_id.clone(),
                writer,
            },
        };
        self.motion = Some(motion);
        self.publish_status(initial, Some(run_id));
        if null_move {
            let m = self.motion.take().unwrap();
            self.finish(m, initial);
        }
        Ok(handle)
    }

    /// Advances the plant by one sensor sample period.
    fn sample(&mut self) {
        for _ in 0..self.ratio {
            let input = match &mut self.motion {
                Some(m) if !m.done() => {
                    let i = m.traj.input_for_cell(m.step);
                    m.step += 1;
                    i
                }
                _ => PlantInput::zero(),
            };
            if let Err(e) = self.plant.step(&input) {
                tracing::error!("{e}");
                if let Some(m) = self.motion.take() {
                    self.abort(m, &e.to_string());
                }
                return;
            }
        }
        let measured = self.plant.measure();
        let Some(mut m) = self.motion.take() else {
            self.publish_status(measured, None);
            return;
        };
        if let Purpose::Run { writer, .. } = &mut m.purpose {
            if let Err(e) = writer.append(&measured) {
                self.abort(m, &e.to_string());
                return;
            }
        }
        if m.done() {
            self.finish(m, measured);
        } else {
            let run_id = m.run_id();
            self.motion = Some(m);
            self.publish_status(measured, run_id);
        }
    }

    fn finish(&mut self, m: Motion, last: CraneState) {
        match m.purpose {
            Purpose::Home(reply) => {
                self.plant.finish_homing();
                let state = self.plant.measure();
                self.publish_status(state, None);
                if let Some(r) = reply {
                    let _ = r.send(Ok(()));
                }
            }
            Purpose::Run { run_id, writer } => {
                let stored = writer.finish();
                let status = if stored.is_ok() {
                    RunStatus::Completed
                } else {
                    RunStatus::Aborted
                };
                self.complete(&run_id, status, stored.unwrap_or(0), last);
            }
        }
    }

    fn abort(&mut self, m: Motion, reason: &str) {
        match m.purpose {
            Purpose::Home(reply) => {
                if let Some(r) = reply {
                    let _ = r.send(Err(ServiceError::Internal(reason.to_string())));
                }
            }
            Purpose::Run { run_id, writer } => {
                let stored = writer.finish().unwrap_or(0);
                let last = *self.plant.true_state();
                self.complete(&run_id, RunStatus::Aborted, stored, last);
            }
        }
        self.refresh_status();
    }

    fn complete(&mut self, run_id: &str, status: RunStatus, samples: usize, last: CraneState) {
        let completed_at = match self.historian.complete_run(run_id, status) {
            Ok(r) => r.completed_at.unwrap_or_else(Utc::now),
            Err(e) => {
                tracing::error!("cannot complete run {run_id}: {e}");
                Utc::now()
            }
        };
        let done = RunCompleted {
            run_id: run_id.to_string(),
            status,
            completed_at,
            samples,
            final_state: last,
        };
        self.publish_status(last, None);
        if let Err(e) = self.bus.publish_json(topics::RUN_COMPLETED, &done) {
            tracing::warn!("cannot publish run completion: {e}");
        }
    }
}
