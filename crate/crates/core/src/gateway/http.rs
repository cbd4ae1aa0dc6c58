use serde_json::{json, Value};

use crate::assessment::PromptDocument;

use super::{ProviderAdapter, ProviderConfig, TransportError};

const BODY_EXCERPT: usize = 300;

/// Generic chat-completion adapter: `POST endpoint` with
/// `{model, messages: [system, user], temperature}` and a bearer key read
/// from the configured environment variable; reply text is taken from
/// `choices[0].message.content`.
pub struct HttpChatAdapter {
    client: reqwest::blocking::Client,
}

impl Default for HttpChatAdapter {
    fn default() -> Self {
        Self::new()
    }
}

impl HttpChatAdapter {
    pub fn new() -> Self {
        Self {
            client: reqwest::blocking::Client::new(),
        }
    }
}

fn redact(text: &str, secret: Option<&str>) -> String {
    let mut out: String = text.chars().take(BODY_EXCERPT).collect();
    if let Some(s) = secret.filter(|s| !s.is_empty()) {
        out = out.replace(s, "[redacted]");
    }
    out
}

impl ProviderAdapter for HttpChatAdapter {
    fn send(
        &self,
        config: &ProviderConfig,
        prompt: &PromptDocument,
    ) -> Result<String, TransportError> {
        let secret = match &config.auth_env {
            Some(var) => match std::env::var(var) {
                Ok(v) => Some(v),
                Err(_) => {
                    return Err(TransportError::Client {
                        status: 0,
                        message: format!("credential variable {var} is not set"),
                    })
                }
            },
            None => None,
        };
        let body = json!({
            "model": config.model_name,
            "messages": [
                {"role": "system", "content": prompt.system_instruction},
                {"role": "user", "content": prompt.user_message()},
            ],
            "temperature": config.temperature.unwrap_or(0.0),
        });
        let mut req = self
            .client
            .post(&config.endpoint)
            .timeout(config.timeout())
            .json(&body);
        if let Some(key) = &secret {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Network {
                    message: redact(&e.to_string(), secret.as_deref()),
                }
            }
        })?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Network {
                    message: redact(&e.to_string(), secret.as_deref()),
                }
            }
        })?;
        match status {
            200..=299 => {}
            429 => return Err(TransportError::RateLimited),
            408 => return Err(TransportError::Timeout),
            500..=599 => {
                return Err(TransportError::Server {
                    status,
                    message: redact(&text, secret.as_deref()),
                })
            }
            _ => {
                return Err(TransportError::Client {
                    status,
                    message: redact(&text, secret.as_deref()),
                })
            }
        }
        let v: Value = serde_json::from_str(&text).map_err(|e| TransportError::Server {
            status,
            message: format!("unreadable response body: {e}"),
        })?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| TransportError::Server {
                status,
                message: "response has no choices[0].message.content".to_string(),
            })
    }
}
