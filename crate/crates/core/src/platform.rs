//! Wiring of every module over one store, shared by the HTTP service and
//! the command-line tool so both paths make the same core calls.

use std::sync::Arc;

use crate::assessment::{Assessor, Language};
use crate::clock::{Clock, SystemClock};
use crate::corpus::{Corpus, CorpusConfig, GradingScheme};
use crate::dataset::{Dataset, ExportFilter};
use crate::error::Error;
use crate::gateway::{Gateway, GatewaySettings, ProviderRegistry};
use crate::harness::Harness;
use crate::session::{identify, Sessions, StudentKey};
use crate::store::{DocumentStore, FileStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Principal {
    Student,
    Admin,
}

impl Principal {
    pub fn require_admin(self) -> Result<(), Error> {
        match self {
            Principal::Admin => Ok(()),
            Principal::Student => Err(Error::Forbidden),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlatformConfig {
    /// Deployment salt for student keys.
    pub salt: Vec<u8>,
    pub corpus: CorpusConfig,
    pub gateway: GatewaySettings,
    /// Provider used to assess open answers on submit.
    pub live_provider: Option<String>,
    pub language: Language,
}

impl Default for PlatformConfig {
    fn default() -> Self {
        Self {
            salt: b"examlab-default-salt".to_vec(),
            corpus: CorpusConfig::default(),
            gateway: GatewaySettings::default(),
            live_provider: None,
            language: Language::Ro,
        }
    }
}

#[derive(Clone)]
pub struct Platform {
    pub store: Arc<dyn DocumentStore>,
    pub clock: Arc<dyn Clock>,
    pub corpus: Corpus,
    pub sessions: Sessions,
    pub gateway: Arc<Gateway>,
    pub assessor: Assessor,
    pub harness: Harness,
    pub dataset: Dataset,
    salt: Arc<Vec<u8>>,
}

impl Platform {
    pub fn new(
        store: Arc<dyn DocumentStore>,
        clock: Arc<dyn Clock>,
        config: PlatformConfig,
    ) -> Self {
        let corpus = Corpus::new(store.clone(), config.corpus.clone());
        let sessions = Sessions::new(store.clone(), corpus.clone(), clock.clone());
        let gateway = Arc::new(Gateway::new(clock.clone(), config.gateway.clone()));
        let assessor = Assessor::new(
            store.clone(),
            corpus.clone(),
            sessions.clone(),
            gateway.clone(),
            clock.clone(),
            config.live_provider.clone(),
        )
        .with_language(config.language);
        let harness = Harness::new(
            store.clone(),
            corpus.clone(),
            sessions.clone(),
            gateway.clone(),
            clock.clone(),
        );
        let dataset = Dataset::new(store.clone(), corpus.clone(), sessions.clone());
        Self {
            store,
            clock,
            corpus,
            sessions,
            gateway,
            assessor,
            harness,
            dataset,
            salt: Arc::new(config.salt),
        }
    }

    /// Platform over a directory-backed store and the system clock.
    pub fn open_dir(
        root: impl AsRef<std::path::Path>,
        config: PlatformConfig,
    ) -> Result<Self, Error> {
        let store = FileStore::open(root)?;
        Ok(Self::new(Arc::new(store), Arc::new(SystemClock), config))
    }

    /// Register every provider of a registry file.
    pub fn register_providers(&self, registry: &ProviderRegistry) -> Result<Vec<String>, Error> {
        registry
            .providers
            .iter()
            .map(|p| {
                self.gateway
                    .register_provider(p.clone())
                    .map_err(Error::from)
            })
            .collect()
    }

    pub fn identify(&self, email: &str) -> Result<StudentKey, Error> {
        Ok(identify(email, &self.salt)?)
    }

    pub fn scheme(&self, principal: Principal, exam_id: &str) -> Result<GradingScheme, Error> {
        principal.require_admin()?;
        Ok(self.corpus.get_scheme(exam_id)?)
    }

    pub fn export_dataset(
        &self,
        principal: Principal,
        filter: &ExportFilter,
    ) -> Result<Vec<u8>, Error> {
        principal.require_admin()?;
        Ok(self.dataset.export(filter)?)
    }
}
