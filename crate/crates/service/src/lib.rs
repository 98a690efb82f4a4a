//! HTTP front end for the gait classifier: upload frames or an energy
//! image, get a prediction and a session id, then explore the network's
//! layers and explanations for that upload.

pub mod config;
pub mod error;
pub mod ingest;
pub mod mail;
mod routes;
pub mod session;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::{Arc, Weak};
use std::time::Duration;

use gaitworks_core::classifier::{load_model, GaitModel};
use gaitworks_core::gait_repr::{resample_grid, EnergyImage, ENERGY_SIZE};
use gaitworks_core::Representation;
use tokio::net::TcpListener;

pub use config::Config;
pub use error::{ApiError, StartupError};
pub use mail::{Mailer, SmtpMailer};
pub use routes::router;
pub use session::{Session, SessionStore};

pub(crate) struct Inner {
    pub config: Config,
    pub models: BTreeMap<&'static str, (Representation, Arc<GaitModel>)>,
    pub sessions: SessionStore,
    pub mailer: Option<Arc<dyn Mailer>>,
}

/// Shared, read-only server state: the loaded models, the session store and
/// the optional mail relay.
#[derive(Clone)]
pub struct AppState(pub(crate) Arc<Inner>);

impl AppState {
    /// Loads the configured models and opens the session store. Fails when
    /// no model is configured or a model file cannot be read.
    pub fn from_config(config: Config) -> Result<Self, StartupError> {
        let mut models = Vec::new();
        for (rep, path) in [
            (Representation::Gei, &config.model_gei),
            (Representation::Sei, &config.model_sei),
        ] {
            let Some(path) = path else { continue };
            let model = load_model(path).map_err(|source| StartupError::Model {
                kind: rep.name(),
                path: path.clone(),
                source,
            })?;
            if model.representation != rep {
                return Err(StartupError::ModelKind {
                    path: path.clone(),
                    expected: rep.name(),
                    found: model.representation.name(),
                });
            }
            models.push(model);
        }
        let mailer = match &config.smtp_url {
            Some(url) => Some(Arc::new(SmtpMailer::from_url(url)?) as Arc<dyn Mailer>),
            None => None,
        };
        Self::new(config, models, mailer)
    }

    /// State from already-loaded models, one per representation.
    pub fn new(
        config: Config,
        models: Vec<GaitModel>,
        mailer: Option<Arc<dyn Mailer>>,
    ) -> Result<Self, StartupError> {
        if models.is_empty() {
            return Err(StartupError::NoModel);
        }
        let models = models
            .into_iter()
            .map(|m| (m.representation.name(), (m.representation, Arc::new(m))))
            .collect();
        let sessions = SessionStore::open(config.session_dir.as_deref(), config.session_ttl)?;
        Ok(Self(Arc::new(Inner {
            config,
            models,
            sessions,
            mailer,
        })))
    }

    pub fn config(&self) -> &Config {
        &self.0.config
    }

    pub fn sessions(&self) -> &SessionStore {
        &self.0.sessions
    }

    pub fn model(&self, representation: Representation) -> Option<Arc<GaitModel>> {
        self.0.models.get(representation.name()).map(|(_, m)| m.clone())
    }

    pub fn representations(&self) -> Vec<Representation> {
        self.0.models.values().map(|(r, _)| *r).collect()
    }
}

/// Energy-image pixels at the model's input resolution.
pub fn model_pixels(model: &GaitModel, energy: &EnergyImage) -> Vec<f32> {
    let [h, w, _] = model.network.config().input_shape;
    if h == ENERGY_SIZE && w == ENERGY_SIZE {
        energy.data().to_vec()
    } else {
        resample_grid(energy.data(), ENERGY_SIZE, ENERGY_SIZE, w, h)
    }
}

fn sweep_period(ttl: Duration) -> Duration {
    ttl.clamp(Duration::from_millis(100), Duration::from_secs(60))
}

fn spawn_sweeper(state: Weak<Inner>, period: Duration) {
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(period);
        tick.tick().await;
        loop {
            tick.tick().await;
            let Some(inner) = state.upgrade() else { break };
            let removed = tokio::task::spawn_blocking(move || inner.sessions.sweep())
                .await
                .unwrap_or(0);
            if removed > 0 {
                tracing::debug!(removed, "expired sessions swept");
            }
        }
    });
}

/// Serves `state` on an already-bound listener until the server stops.
pub async fn run(listener: TcpListener, state: AppState) -> Result<(), StartupError> {
    spawn_sweeper(Arc::downgrade(&state.0), sweep_period(state.config().session_ttl));
    axum::serve(listener, router(state))
        .await
        .map_err(StartupError::Serve)
}

/// Loads everything from `config`, binds its address and serves forever.
pub async fn serve(config: Config) -> Result<(), StartupError> {
    let addr = SocketAddr::new(config.host, config.port);
    let state = AppState::from_config(config)?;
    let listener = TcpListener::bind(addr).await.map_err(|source| StartupError::Bind {
        addr: addr.to_string(),
        source,
    })?;
    tracing::info!(%addr, models = ?state.representations(), "gaitworks service listening");
    run(listener, state).await
}

/// Starts a server for `state` on an ephemeral localhost port in the
/// background and returns its address.
pub async fn spawn_local(state: AppState) -> Result<SocketAddr, StartupError> {
    let listener = TcpListener::bind("127.0.0.1:0")
        .await
        .map_err(|source| StartupError::Bind {
            addr: "127.0.0.1:0".into(),
            source,
        })?;
    let addr = listener.local_addr().map_err(StartupError::Serve)?;
    tokio::spawn(async move {
        if let Err(e) = run(listener, state).await {
            tracing::error!("server stopped: {e}");
        }
    });
    Ok(addr)
}
