//! Gateway and command-line front end of the crane twin.
//!
//! [`Twin::up`] starts the whole stack in one process: bus broker,
//! historian, trajectory generator, simulation and validation services,
//! live logger, virtual crane and the HTTP gateway. The gateway API is
//! listed in [`gateway`]; [`client::Client`] is a blocking client for it.

pub mod api;
pub mod client;
pub mod export;
pub mod gateway;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use crane_twin_services::{ServiceError, Stack, StackOptions, TwinConfig};

pub use api::{ApiError, ErrorCode};
pub use gateway::{Gateway, GatewayOptions};

#[derive(Debug, Clone, Default)]
pub struct UpOptions {
    /// Where calibrated thresholds are written back.
    pub config_path: Option<PathBuf>,
    /// Serve the API only, even when an HMI bundle is configured.
    pub headless: bool,
    pub gateway: GatewayOptions,
}

/// A running twin.
pub struct Twin {
    stack: Arc<Stack>,
    gateway: Gateway,
    readiness: Vec<String>,
}

impl Twin {
    /// Starts everything. Both listening ports are claimed before the
    /// services start, so a port in use fails fast and names the port.
    pub async fn up(config: TwinConfig, opts: UpOptions) -> Result<Twin, ServiceError> {
        config.validate()?;
        let addr: SocketAddr = config
            .gateway_addr
            .parse()
            .map_err(|e| ServiceError::BadRequest(format!("gateway address: {e}")))?;
        let listener = Gateway::bind(addr).await?;
        let hmi_dir = config.hmi_dir.clone();
        let stack = Stack::start(
            config,
            StackOptions {
                listen_broker: true,
                config_path: opts.config_path,
            },
        )
        .await?;
        let mut readiness = stack.readiness().to_vec();

        let mut gw = opts.gateway;
        if opts.headless {
            gw.static_dir = None;
        } else if gw.static_dir.is_none() {
            gw.static_dir = hmi_dir.filter(|d| d.is_dir());
        }
        let hmi_line = match &gw.static_dir {
            Some(dir) => format!("hmi served from {}", dir.display()),
            None => "hmi not served (api only)".to_string(),
        };
        let stack = Arc::new(stack);
        let gateway = Gateway::serve(listener, stack.clone(), gw).await?;
        readiness.push(format!("gateway listening on {}", gateway.url()));
        readiness.push(hmi_line);
        Ok(Twin {
            stack,
            gateway,
            readiness,
        })
    }

    pub fn stack(&self) -> &Arc<Stack> {
        &self.stack
    }

    pub fn gateway_url(&self) -> String {
        self.gateway.url()
    }

    pub fn gateway_addr(&self) -> SocketAddr {
        self.gateway.local_addr()
    }

    /// One line per started service.
    pub fn readiness(&self) -> &[String] {
        &self.readiness
    }

    pub async fn shutdown(self) {
        self.gateway.shutdown().await;
        drop(self.stack);
    }
}
