//! All services wired together in one process.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use crane_twin_bus::{Broker, BrokerServer, BusClient};
use crane_twin_historian::Historian;
use tokio::task::JoinHandle;

use crate::calibration::{calibrate, seeded_plant, Calibration};
use crate::config::{shared, SharedConfig, TwinConfig};
use crate::crane::VirtualCrane;
use crate::error::{Result, ServiceError};
use crate::validation::Validator;
use crate::{generator, logger, simulator};

#[derive(Debug, Clone, Default)]
pub struct StackOptions {
    /// Accept TCP bus clients on the configured broker address.
    pub listen_broker: bool,
    /// Where calibrated thresholds and configuration updates are saved.
    pub config_path: Option<PathBuf>,
}

pub struct Stack {
    config: SharedConfig,
    config_path: Option<PathBuf>,
    broker: Arc<Broker>,
    broker_server: Option<BrokerServer>,
    historian: Arc<Historian>,
    crane: VirtualCrane,
    validator: Validator,
    calibration: Option<Calibration>,
    readiness: Vec<String>,
    tasks: Vec<JoinHandle<()>>,
}

impl Stack {
    /// Starts the broker, historian, trajectory generator, simulation and
    /// validation services, the live logger and the virtual crane.
    /// Thresholds missing from the configuration are calibrated first.
    pub async fn start(mut config: TwinConfig, opts: StackOptions) -> Result<Stack> {
        config.validate()?;
        let mut readiness = Vec::new();

        let broker = Broker::new();
        let broker_server = if opts.listen_broker {
            let addr: SocketAddr = config.broker_addr.parse().expect("validated address");
            let server = BrokerServer::bind(addr, broker.clone()).await.map_err(|e| {
                ServiceError::Internal(format!("broker cannot listen on port {}: {e}", addr.port()))
            })?;
            readiness.push(format!("broker listening on {}", server.local_addr()));
            Some(server)
        } else {
            readiness.push("broker ready (in-process)".to_string());
            None
        };

        let historian = Arc::new(Historian::open(&config.data_dir, config.logger)?);
        readiness.push(format!("historian ready at {}", config.data_dir.display()));

        let mut calibration = None;
        if config.thresholds.is_none() {
            let cal = calibrate(&config, &config.data_dir.join("calibration")).await?;
            config.thresholds = Some(cal.thresholds);
            if let Some(path) = &opts.config_path {
                config.save(path)?;
            }
            readiness.push(format!("thresholds calibrated from run {}", cal.run_id));
            calibration = Some(cal);
        }

        let config = shared(config);
        let bus = BusClient::loopback(&broker);
        let mut tasks = Vec::new();
        tasks.push(generator::spawn(bus.clone(), config.clone()).await?);
        readiness.push("trajectory generator ready".to_string());
        tasks.push(simulator::spawn(bus.clone(), config.clone(), historian.clone()).await?);
        readiness.push("simulation service ready".to_string());
        let validator = Validator::new(historian.clone(), config.clone(), bus.clone());
        tasks.push(validator.clone().spawn().await?);
        readiness.push("validation service ready".to_string());
        tasks.push(logger::spawn(bus.clone(), historian.clone()).await?);
        readiness.push("logger ready".to_string());
        let plant = seeded_plant(&config.read().unwrap())?;
        let (crane, crane_task) = VirtualCrane::spawn(plant, &config, bus, historian.clone()).await?;
        tasks.push(crane_task);
        readiness.push("virtual crane ready".to_string());

        Ok(Stack {
            config,
            config_path: opts.config_path,
            broker,
            broker_server,
            historian,
            crane,
            validator,
            calibration,
            readiness,
            tasks,
        })
    }

    pub fn config(&self) -> TwinConfig {
        self.config.read().unwrap().clone()
    }

    pub fn shared_config(&self) -> &SharedConfig {
        &self.config
    }

    /// Applies a JSON merge patch to the running configuration, atomically.
    pub fn update_config(&self, patch: &serde_json::Value) -> Result<TwinConfig> {
        let mut cfg = self.config.write().unwrap();
        let next = cfg.patched(patch)?;
        self.historian.set_logger_config(next.logger)?;
        if let Some(path) = &self.config_path {
            next.save(path)?;
        }
        *cfg = next.clone();
        Ok(next)
    }

    pub fn broker(&self) -> &Arc<Broker> {
        &self.broker
    }

    /// New in-process bus connection.
    pub fn bus(&self) -> BusClient {
        BusClient::loopback(&self.broker)
    }

    pub fn broker_addr(&self) -> Option<SocketAddr> {
        self.broker_server.as_ref().map(BrokerServer::local_addr)
    }

    pub fn historian(&self) -> &Arc<Historian> {
        &self.historian
    }

    pub fn crane(&self) -> &VirtualCrane {
        &self.crane
    }

    pub fn validator(&self) -> &Validator {
        &self.validator
    }

    /// Result of the calibration performed during this start, if any.
    pub fn calibration(&self) -> Option<&Calibration> {
        self.calibration.as_ref()
    }

    /// One line per started service.
    pub fn readiness(&self) -> &[String] {
        &self.readiness
    }

    pub fn shutdown(&mut self) {
        for t in self.tasks.drain(..) {
            t.abort();
        }
        if let Some(s) = &self.broker_server {
            s.shutdown();
        }
        let _ = self.historian.flush_live();
    }
}

impl Drop for Stack {
    fn drop(&mut self) {
        self.shutdown();
    }
}
