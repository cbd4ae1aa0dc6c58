use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::assessment::{emit_score_block, scheme_points, PromptDocument};
use crate::util::fnv1a;

use super::{ProviderAdapter, ProviderConfig, ProviderKind, TransportError};

/// What an unscripted prompt gets back.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MockBehavior {
    /// This exact text, whatever the prompt.
    Text {
        text: String,
    },
    /// A score block awarding every criterion in full.
    FullMarks,
    ZeroMarks,
    /// A score block with per-criterion awards derived from the prompt hash.
    Hashed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MockReply {
    Text(String),
    Fail(TransportError),
}

type CallHook = Box<dyn Fn(u64) + Send + Sync>;
type ScriptFn = Box<dyn Fn(&str, &PromptDocument) -> Option<MockReply> + Send + Sync>;

/// Deterministic, network-free provider.
///
/// Replies can be scripted per prompt hash as a sequence; each call consumes
/// one reply and the last one repeats. A function script, when set, sees
/// every prompt not covered by a sequence.
pub struct MockProvider {
    fallback: MockBehavior,
    scripts: Mutex<HashMap<String, VecDeque<MockReply>>>,
    function: Option<ScriptFn>,
    calls: AtomicU64,
    calls_by_hash: Mutex<HashMap<String, u64>>,
    on_call: Option<CallHook>,
    latency: Option<Duration>,
}

impl MockProvider {
    pub fn new(fallback: MockBehavior) -> Self {
        Self {
            fallback,
            scripts: Mutex::new(HashMap::new()),
            function: None,
            calls: AtomicU64::new(0),
            calls_by_hash: Mutex::new(HashMap::new()),
            on_call: None,
            latency: None,
        }
    }

    pub fn with_function(
        mut self,
        f: impl Fn(&str, &PromptDocument) -> Option<MockReply> + Send + Sync + 'static,
    ) -> Self {
        self.function = Some(Box::new(f));
        self
    }

    /// Invoked after each call with the running call count.
    pub fn with_call_hook(mut self, hook: impl Fn(u64) + Send + Sync + 'static) -> Self {
        self.on_call = Some(Box::new(hook));
        self
    }

    /// Block each call for `d` of real time.
    pub fn with_latency(mut self, d: Duration) -> Self {
        self.latency = Some(d);
        self
    }

    pub fn script(&self, prompt_hash: &str, replies: Vec<MockReply>) {
        self.scripts
            .lock()
            .unwrap()
            .insert(prompt_hash.to_string(), replies.into());
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn calls_for(&self, prompt_hash: &str) -> u64 {
        self.calls_by_hash
            .lock()
            .unwrap()
            .get(prompt_hash)
            .copied()
            .unwrap_or(0)
    }

    /// A registrable config for a mock provider.
    pub fn config(provider_id: &str, rpm_limit: u32) -> ProviderConfig {
        ProviderConfig {
            provider_id: provider_id.to_string(),
            kind: ProviderKind::Mock,
            endpoint: format!("mock://{provider_id}"),
            model_name: "mock".to_string(),
            auth_env: None,
            rpm_limit,
            timeout_secs: 30,
            max_retries: 2,
            temperature: None,
            mock: None,
        }
    }

    fn fallback_text(&self, hash: &str, prompt: &PromptDocument) -> String {
        let points = scheme_points(prompt);
        let awards: Vec<i64> = match &self.fallback {
            MockBehavior::Text { text } => return text.clone(),
            MockBehavior::FullMarks => points.iter().map(|&p| i64::from(p)).collect(),
            MockBehavior::ZeroMarks => vec![0; points.len()],
            MockBehavior::Hashed => points
                .iter()
                .enumerate()
                .map(|(i, &p)| {
                    let h = fnv1a(format!("{hash}:{i}").as_bytes());
                    (h % (u64::from(p) + 1)) as i64
                })
                .collect(),
        };
        let total = awards.iter().sum();
        format!(
            "Evaluare generată automat (mock).\n{}",
            emit_score_block(&awards, total)
        )
    }
}

impl ProviderAdapter for MockProvider {
    fn send(
        &self,
        _config: &ProviderConfig,
        prompt: &PromptDocument,
    ) -> Result<String, TransportError> {
        let hash = prompt.hash();
        if let Some(d) = self.latency {
            std::thread::sleep(d);
        }
        let scripted = {
            let mut scripts = self.scripts.lock().unwrap();
            scripts.get_mut(&hash).map(|q| {
                if q.len() > 1 {
                    q.pop_front().unwrap()
                } else {
                    q.front().cloned().unwrap()
                }
            })
        };
        let reply = scripted
            .or_else(|| self.function.as_ref().and_then(|f| f(&hash, prompt)))
            .unwrap_or_else(|| MockReply::Text(self.fallback_text(&hash, prompt)));

        *self.calls_by_hash.lock().unwrap().entry(hash).or_default() += 1;
        let n = self.calls.fetch_add(1, Ordering::SeqCst) + 1;
        if let Some(hook) = &self.on_call {
            hook(n);
        }
        match reply {
            MockReply::Text(t) => Ok(t),
            MockReply::Fail(e) => Err(e),
        }
    }
}
