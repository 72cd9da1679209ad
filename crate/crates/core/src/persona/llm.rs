use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("LLM transport failure: {0}")]
    Transport(String),
    #[error("LLM response malformed: {0}")]
    BadResponse(String),
    #[error("LLM configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub system_prompt: String,
    pub user_prompt: String,
    pub max_output_tokens: u32,
    /// Caller tag ("T2", "reaction", ...) used for latency accounting.
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmReply {
    pub text: String,
    /// Seconds. Simulated for mocks, measured for network clients.
    pub latency: f64,
}

pub trait LlmClient: Send {
    fn complete(&mut self, req: &LlmRequest) -> Result<LlmReply, LlmError>;
}

/// Latency distribution in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "model")]
pub enum LatencyModel {
    Fixed {
        secs: f64,
    },
    /// Lognormal with the given median and 95th percentile.
    LogNormal {
        p50: f64,
        p95: f64,
    },
    /// Lognormal per request label; `fallback` for unknown labels.
    PerLabel {
        table: Vec<(String, f64, f64)>,
        fallback: (f64, f64),
    },
}

const Z95: f64 = 1.644_853_626_951_472_2;

impl LatencyModel {
    pub fn zero() -> Self {
        LatencyModel::Fixed { secs: 0.0 }
    }

    /// Per-segment LLM latency: (label, p50, p95) in seconds.
    pub fn llm_reference() -> Self {
        LatencyModel::PerLabel {
            table: vec![
                ("T1a".into(), 0.82, 1.65),
                ("T1b".into(), 0.64, 1.38),
                ("T2".into(), 0.91, 1.92),
                ("T3".into(), 0.87, 1.81),
                ("T4".into(), 0.88, 1.84),
                ("reaction".into(), 0.91, 1.92),
            ],
            fallback: (0.91, 1.92),
        }
    }

    /// Per-segment TTS latency. Only p95 is pinned; the median is taken as
    /// half of it.
    pub fn tts_reference() -> Self {
        let row = |l: &str, p95: f64| (l.to_string(), p95 / 2.0, p95);
        LatencyModel::PerLabel {
            table: vec![
                row("T1a", 0.38),
                row("T1b", 0.29),
                row("T2", 0.42),
                row("T3", 0.39),
                row("T4", 0.40),
                row("reaction", 0.42),
                row("urgent", 0.42),
            ],
            fallback: (0.21, 0.42),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, label: &str, rng: &mut R) -> f64 {
        let lognormal = |p50: f64, p95: f64, rng: &mut R| {
            if p50 <= 0.0 {
                return 0.0;
            }
            let sigma = (p95 / p50).ln().max(0.0) / Z95;
            LogNormal::new(p50.ln(), sigma).map(|d| d.sample(rng)).unwrap_or(p50)
        };
        match self {
            LatencyModel::Fixed { secs } => *secs,
            LatencyModel::LogNormal { p50, p95 } => lognormal(*p50, *p95, rng),
            LatencyModel::PerLabel { table, fallback } => {
                let (p50, p95) = table
                    .iter()
                    .find(|(l, _, _)| l == label)
                    .map(|&(_, a, b)| (a, b))
                    .unwrap_or(*fallback);
                lognormal(p50, p95, rng)
            }
        }
    }
}

const MOCK_LINES: [&str; 6] = [
    "夜色慢慢落下来，这首歌刚好接住了今天的疲惫。",
    "有些话说不出口，就交给旋律替我们说吧。",
    "如果你也在路上，希望这段旋律能陪你走一小段。",
    "写这首歌的时候，我改了很多遍副歌，最后留下了最笨拙的那一版。",
    "谢谢还在的你们，留言告诉我你此刻在做什么。",
    "再听一遍前奏，好像能闻到那年夏天的雨。",
];

/// Deterministic offline LLM: picks a canned line per request and reports a
/// latency drawn from `latency`. The prompt is never echoed back, so lyric
/// text cannot reach speech through the mock.
#[derive(Debug, Clone)]
pub struct MockLlm {
    rng: ChaCha8Rng,
    latency: LatencyModel,
    failure_rate: f64,
    calls: u64,
}

impl MockLlm {
    pub fn new(seed: u64, latency: LatencyModel) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            latency,
            failure_rate: 0.0,
            calls: 0,
        }
    }

    /// Fraction of calls that fail with a transport error.
    pub fn with_failure_rate(mut self, rate: f64) -> Self {
        self.failure_rate = rate.clamp(0.0, 1.0);
        self
    }

    pub fn calls(&self) -> u64 {
        self.calls
    }
}

impl LlmClient for MockLlm {
    fn complete(&mut self, req: &LlmRequest) -> Result<LlmReply, LlmError> {
        self.calls += 1;
        let latency = self.latency.sample(&req.label, &mut self.rng);
        if self.failure_rate > 0.0 && self.rng.gen::<f64>() < self.failure_rate {
            return Err(LlmError::Transport(format!("injected failure on call {}", self.calls)));
        }
        let line = MOCK_LINES[self.rng.gen_range(0..MOCK_LINES.len())];
        let text: String = line.chars().take(req.max_output_tokens.max(1) as usize).collect();
        Ok(LlmReply { text, latency })
    }
}

#[cfg(feature = "http-llm")]
mod http {
    use std::time::{Duration, Instant};

    use serde::{Deserialize, Serialize};
    use serde_json::json;

    use super::{LlmClient, LlmError, LlmReply, LlmRequest};

    /// OpenAI-style chat-completions endpoint.
    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct HttpLlmConfig {
        /// e.g. `https://host/v1`; `/chat/completions` is appended.
        pub base_url: String,
        pub model: String,
        /// Name of the environment variable holding the bearer token.
        pub api_key_env: String,
        #[serde(default = "default_timeout")]
        pub timeout_secs: f64,
    }

    fn default_timeout() -> f64 {
        10.0
    }

    pub struct HttpLlmClient {
        cfg: HttpLlmConfig,
        api_key: Option<String>,
        agent: ureq::Agent,
    }

    impl HttpLlmClient {
        pub fn new(cfg: HttpLlmConfig) -> Result<Self, LlmError> {
            if cfg.base_url.is_empty() || cfg.model.is_empty() {
                return Err(LlmError::Config("base_url and model are required".into()));
            }
            let api_key = std::env::var(&cfg.api_key_env).ok();
            let agent = ureq::Agent::config_builder()
                .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_secs)))
                .http_status_as_error(false)
                .build()
                .into();
            Ok(Self { cfg, api_key, agent })
        }
    }

    impl LlmClient for HttpLlmClient {
        fn complete(&mut self, req: &LlmRequest) -> Result<LlmReply, LlmError> {
            let url = format!("{}/chat/completions", self.cfg.base_url.trim_end_matches('/'));
            let body = json!({
                "model": self.cfg.model,
                "max_tokens": req.max_output_tokens,
                "messages": [
                    {"role": "system", "content": req.system_prompt},
                    {"role": "user", "content": req.user_prompt},
                ],
            });
            let started = Instant::now();
            let mut call = self.agent.post(&url);
            if let Some(key) = &self.api_key {
                call = call.header("Authorization", &format!("Bearer {key}"));
            }
            let mut resp = call.send_json(&body).map_err(|e| LlmError::Transport(e.to_string()))?;
            let status = resp.status();
            if !status.is_success() {
                return Err(LlmError::Transport(format!("HTTP {status}")));
            }
            let value: serde_json::Value = resp
                .body_mut()
                .read_json()
                .map_err(|e| LlmError::BadResponse(e.to_string()))?;
            let latency = started.elapsed().as_secs_f64();
            let text = value["choices"][0]["message"]["content"]
                .as_str()
                .ok_or_else(|| LlmError::BadResponse("missing choices[0].message.content".into()))?
                .to_string();
            Ok(LlmReply { text, latency })
        }
    }
}

#[cfg(feature = "http-llm")]
pub use http::{HttpLlmClient, HttpLlmConfig};
