use std::net::{IpAddr, Ipv4Addr};
use std::path::PathBuf;
use std::time::Duration;

use crate::error::StartupError;

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_SESSION_TTL: Duration = Duration::from_secs(3600);
pub const DEFAULT_MAX_UPLOAD_MB: f64 = 64.0;
pub const DEFAULT_MAIL_FROM: &str = "gaitworks@localhost";

/// Runtime settings, normally read from `GAITWORKS_*` environment variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub host: IpAddr,
    pub port: u16,
    pub model_gei: Option<PathBuf>,
    pub model_sei: Option<PathBuf>,
    pub session_ttl: Duration,
    pub max_upload_bytes: usize,
    pub smtp_url: Option<String>,
    pub mail_from: String,
    /// Shell command run for uploads that are neither PNG nor ZIP. `{input}`
    /// and `{output}` are replaced by the uploaded file and a directory that
    /// should receive numbered PNG frames.
    pub decoder_cmd: Option<String>,
    /// Session root; a temporary directory is used when unset.
    pub session_dir: Option<PathBuf>,
    /// Static files (a built web UI) served under `/`.
    pub static_dir: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            host: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: DEFAULT_PORT,
            model_gei: None,
            model_sei: None,
            session_ttl: DEFAULT_SESSION_TTL,
            max_upload_bytes: (DEFAULT_MAX_UPLOAD_MB * 1024.0 * 1024.0) as usize,
            smtp_url: None,
            mail_from: DEFAULT_MAIL_FROM.to_string(),
            decoder_cmd: None,
            session_dir: None,
            static_dir: None,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, StartupError> {
    value.trim().parse().map_err(|_| StartupError::Config {
        key: key.to_string(),
        value: value.to_string(),
    })
}

fn positive(key: &str, value: &str) -> Result<f64, StartupError> {
    let v: f64 = parse(key, value)?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(StartupError::Config {
            key: key.to_string(),
            value: value.to_string(),
        })
    }
}

impl Config {
    pub fn from_env() -> Result<Self, StartupError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    /// Builds a config from an arbitrary key lookup. Empty values count as unset.
    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, StartupError> {
        let get = |k: &str| lookup(k).filter(|v| !v.trim().is_empty());
        let mut c = Config::default();
        if let Some(v) = get("GAITWORKS_HOST") {
            c.host = parse("GAITWORKS_HOST", &v)?;
        }
        if let Some(v) = get("GAITWORKS_PORT") {
            c.port = parse("GAITWORKS_PORT", &v)?;
        }
        c.model_gei = get("GAITWORKS_MODEL_GEI").map(PathBuf::from);
        c.model_sei = get("GAITWORKS_MODEL_SEI").map(PathBuf::from);
        if let Some(v) = get("GAITWORKS_SESSION_TTL_SECS") {
            c.session_ttl = Duration::from_secs_f64(positive("GAITWORKS_SESSION_TTL_SECS", &v)?);
        }
        if let Some(v) = get("GAITWORKS_MAX_UPLOAD_MB") {
            c.max_upload_bytes = (positive("GAITWORKS_MAX_UPLOAD_MB", &v)? * 1024.0 * 1024.0) as usize;
        }
        c.smtp_url = get("GAITWORKS_SMTP_URL");
        if let Some(v) = get("GAITWORKS_MAIL_FROM") {
            c.mail_from = v;
        }
        c.decoder_cmd = get("GAITWORKS_DECODER_CMD");
        c.session_dir = get("GAITWORKS_SESSION_DIR").map(PathBuf::from);
        c.static_dir = get("GAITWORKS_STATIC_DIR").map(PathBuf::from);
        Ok(c)
    }

    pub fn max_upload_mb(&self) -> f64 {
        self.max_upload_bytes as f64 / (1024.0 * 1024.0)
    }
}
