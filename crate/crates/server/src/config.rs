use std::net::SocketAddr;
use std::path::PathBuf;

use examlab_core::gateway::ProviderRegistry;
use examlab_core::{Error, Platform, PlatformConfig};

/// Service configuration, read from `EXAMLAB_*` environment variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerConfig {
    pub bind: SocketAddr,
    pub store: PathBuf,
    pub admin_token: Option<String>,
    /// Provider registry file (TOML).
    pub providers: Option<PathBuf>,
    pub salt: Option<String>,
    pub live_provider: Option<String>,
    /// Origin allowed by CORS; none disables cross-origin access.
    pub ui_origin: Option<String>,
}

impl ServerConfig {
    pub fn from_env() -> Result<Self, String> {
        Self::from_vars(|k| std::env::var(k).ok())
    }

    pub fn from_vars(get: impl Fn(&str) -> Option<String>) -> Result<Self, String> {
        let get = |k: &str| get(k).filter(|v| !v.trim().is_empty());
        let bind = get("EXAMLAB_BIND").unwrap_or_else(|| "127.0.0.1:8080".into());
        Ok(Self {
            bind: bind
                .parse()
                .map_err(|e| format!("EXAMLAB_BIND={bind}: {e}"))?,
            store: get("EXAMLAB_STORE")
                .unwrap_or_else(|| "examlab-data".into())
                .into(),
            admin_token: get("EXAMLAB_ADMIN_TOKEN"),
            providers: get("EXAMLAB_PROVIDERS").map(PathBuf::from),
            salt: get("EXAMLAB_SALT"),
            live_provider: get("EXAMLAB_LIVE_PROVIDER"),
            ui_origin: get("EXAMLAB_UI_ORIGIN"),
        })
    }

    pub fn platform_config(&self) -> PlatformConfig {
        let mut config = PlatformConfig {
            live_provider: self.live_provider.clone(),
            ..Default::default()
        };
        if let Some(salt) = &self.salt {
            config.salt = salt.as_bytes().to_vec();
        }
        config
    }

    pub fn open_platform(&self) -> Result<Platform, Error> {
        let platform = Platform::open_dir(&self.store, self.platform_config())?;
        if let Some(path) = &self.providers {
            platform.register_providers(&ProviderRegistry::load(path)?)?;
        }
        Ok(platform)
    }
}
