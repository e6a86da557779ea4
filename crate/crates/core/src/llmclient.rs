//! Chat-completion client: drives any endpoint speaking the de-facto
//! chat-completions JSON protocol, with exponential-backoff retries, a
//! content-addressed response cache, bounded concurrency, fine-tune dataset
//! export, and fine-tune job management.
//!
//! The cache is a directory of files keyed by a digest of
//! (model, conversation, temperature), written atomically via
//! write-then-rename so interrupted runs resume cleanly and re-scoring
//! never re-queries a paid API.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::annotate::LabelRecord;
use crate::corpus::ContractSample;
use crate::error::{Error, Result};
use crate::prompts::{render_gold, Conversation, Message, Role};

/// Connection and sampling parameters for one endpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    /// Read from the environment, never from config files.
    #[serde(skip)]
    pub api_key: Option<String>,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub request_timeout: Duration,
    pub max_retries: u32,
    pub max_in_flight: usize,
    /// Base delay for exponential backoff between retries.
    pub retry_backoff: Duration,
    /// Reject conversations whose total content exceeds this many
    /// characters. `None` means unlimited.
    pub max_input_chars: Option<usize>,
    /// Opt-in: clip the final user message instead of rejecting oversize
    /// input.
    pub truncate_oversize: bool,
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> EndpointConfig {
        EndpointConfig {
            base_url: base_url.into(),
            model: model.into(),
            api_key: std::env::var("OPENAI_API_KEY").ok(),
            temperature: 0.0,
            max_output_tokens: 256,
            request_timeout: Duration::from_secs(60),
            max_retries: 3,
            max_in_flight: 4,
            retry_backoff: Duration::from_millis(250),
            max_input_chars: None,
            truncate_oversize: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(Error::InvalidConfig(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_in_flight < 1 {
            return Err(Error::InvalidConfig("max_in_flight must be >= 1".into()));
        }
        if self.base_url.is_empty() {
            return Err(Error::InvalidConfig("base_url is empty".into()));
        }
        Ok(())
    }
}

/// Result of one chat completion, with provenance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatOutcome {
    pub content: String,
    pub retries: u32,
    pub from_cache: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    model: String,
    temperature: f64,
    response: String,
}

pub struct ChatClient {
    config: EndpointConfig,
    cache_dir: Option<PathBuf>,
    agent: ureq::Agent,
}

impl ChatClient {
    pub fn new(config: EndpointConfig, cache_dir: Option<PathBuf>) -> Result<ChatClient> {
        config.validate()?;
        if let Some(dir) = &cache_dir {
            std::fs::create_dir_all(dir)?;
        }
        let agent = ureq::AgentBuilder::new()
            .timeout(config.request_timeout)
            .build();
        Ok(ChatClient {
            config,
            cache_dir,
            agent,
        })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    /// Cache key: digest over (model, temperature, serialized conversation).
    pub fn cache_key(&self, conversation: &Conversation) -> String {
        let payload =
            serde_json::to_string(&(&self.config.model, self.config.temperature, conversation))
                .expect("conversation serializes");
        let digest = Sha256::digest(payload.as_bytes());
        let mut hex = String::with_capacity(64);
        for byte in digest {
            use std::fmt::Write;
            let _ = write!(hex, "{byte:02x}");
        }
        hex
    }

    fn cache_path(&self, key: &str) -> Option<PathBuf> {
        self.cache_dir
            .as_ref()
            .map(|dir| dir.join(format!("{key}.json")))
    }

    fn cache_read(&self, key: &str) -> Option<String> {
        let path = self.cache_path(key)?;
        let text = std::fs::read_to_string(path).ok()?;
        let entry: CacheEntry = serde_json::from_str(&text).ok()?;
        Some(entry.response)
    }

    fn cache_write(&self, key: &str, response: &str) -> Result<()> {
        let Some(path) = self.cache_path(key) else {
            return Ok(());
        };
        let entry = CacheEntry {
            model: self.config.model.clone(),
            temperature: self.config.temperature,
            response: response.to_string(),
        };
        let tmp = path.with_extension(format!("tmp.{:x}", rand::random::<u64>()));
        std::fs::write(&tmp, serde_json::to_string(&entry)?)?;
        std::fs::rename(&tmp, &path)?;
        Ok(())
    }

    fn enforce_size_limit(&self, conversation: &Conversation) -> Result<Conversation> {
        let Some(limit) = self.config.max_input_chars else {
            return Ok(conversation.clone());
        };
        let total: usize = conversation
            .messages
            .iter()
            .map(|m| m.content.chars().count())
            .sum();
        if total <= limit {
            return Ok(conversation.clone());
        }
        if !self.config.truncate_oversize {
            return Err(Error::InputTooLarge { limit, got: total });
        }
        let mut clipped = conversation.clone();
        let overshoot = total - limit;
        let last = clipped
            .messages
            .last_mut()
            .ok_or(Error::InputTooLarge { limit, got: total })?;
        let keep = last.content.chars().count().saturating_sub(overshoot);
        if keep == 0 {
            return Err(Error::InputTooLarge { limit, got: total });
        }
        last.content = last.content.chars().take(keep).collect();
        Ok(clipped)
    }

    /// Send one conversation, replaying from cache when possible.
    ///
    /// HTTP 429 and 5xx are retried with exponential backoff up to
    /// `max_retries`; other failures surface immediately.
    pub fn chat_complete(&self, conversation: &Conversation) -> Result<ChatOutcome> {
        let conversation = self.enforce_size_limit(conversation)?;
        let key = self.cache_key(&conversation);
        if let Some(content) = self.cache_read(&key) {
            return Ok(ChatOutcome {
                content,
                retries: 0,
                from_cache: true,
            });
        }

        let body = serde_json::json!({
            "model": self.config.model,
            "messages": conversation.messages,
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_output_tokens,
        });
        let (value, retries) = self.request_json("POST", "chat/completions", Some(&body))?;
        let content = value
            .get("choices")
            .and_then(|c| c.get(0))
            .and_then(|c| c.get("message"))
            .and_then(|m| m.get("content"))
            .and_then(|c| c.as_str())
            .ok_or_else(|| Error::Protocol("response has no choices[0].message.content".into()))?
            .to_string();
        self.cache_write(&key, &content)?;
        Ok(ChatOutcome {
            content,
            retries,
            from_cache: false,
        })
    }

    /// Run many conversations with at most `max_in_flight` requests
    /// outstanding. Results are returned in input order.
    pub fn complete_batch(&self, conversations: &[Conversation]) -> Vec<Result<ChatOutcome>> {
        let n = conversations.len();
        let workers = self.config.max_in_flight.min(n.max(1));
        let next = Mutex::new(0usize);
        let slots: Vec<Mutex<Option<Result<ChatOutcome>>>> =
            (0..n).map(|_| Mutex::new(None)).collect();

        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let index = {
                        let mut guard = next.lock().unwrap();
                        if *guard >= n {
                            break;
                        }
                        let i = *guard;
                        *guard += 1;
                        i
                    };
                    let outcome = self.chat_complete(&conversations[index]);
                    *slots[index].lock().unwrap() = Some(outcome);
                });
            }
        });

        slots
            .into_iter()
            .map(|slot| {
                slot.into_inner()
                    .unwrap()
                    .expect("worker filled every slot")
            })
            .collect()
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.config.base_url.trim_end_matches('/'), path)
    }

    /// Shared request machinery: retry on 429/5xx, parse JSON, surface
    /// endpoint rejections with their message.
    fn request_json(
        &self,
        method: &str,
        path: &str,
        body: Option<&serde_json::Value>,
    ) -> Result<(serde_json::Value, u32)> {
        let url = self.url(path);
        let mut attempt: u32 = 0;
        loop {
            let mut request = match method {
                "GET" => self.agent.get(&url),
                _ => self.agent.post(&url),
            };
            if let Some(key) = &self.config.api_key {
                request = request.set("Authorization", &format!("Bearer {key}"));
            }
            let sent = match body {
                Some(json) => request.send_json(json),
                None => request.call(),
            };
            match sent {
                Ok(response) => {
                    let value: serde_json::Value = response
                        .into_json()
                        .map_err(|e| Error::Protocol(format!("non-JSON body: {e}")))?;
                    return Ok((value, attempt));
                }
                Err(ureq::Error::Status(code, response)) if code == 429 || code >= 500 => {
                    if attempt >= self.config.max_retries {
                        return Err(Error::Transport {
                            retries: attempt,
                            message: format!("HTTP {code} after exhausting retries"),
                        });
                    }
                    drop(response);
                    let delay = self.config.retry_backoff * 2u32.saturating_pow(attempt);
                    std::thread::sleep(delay);
                    attempt += 1;
                }
                Err(ureq::Error::Status(code, response)) => {
                    let message =
                        endpoint_message(response).unwrap_or_else(|| format!("HTTP {code}"));
                    return Err(Error::Endpoint(message));
                }
                Err(ureq::Error::Transport(transport)) => {
                    return Err(Error::Transport {
                        retries: attempt,
                        message: transport.to_string(),
                    });
                }
            }
        }
    }
}

fn endpoint_message(response: ureq::Response) -> Option<String> {
    let text = response.into_string().ok()?;
    if let Ok(value) = serde_json::from_str::<serde_json::Value>(&text) {
        if let Some(message) = value
            .get("error")
            .and_then(|e| e.get("message"))
            .and_then(|m| m.as_str())
        {
            return Some(message.to_string());
        }
    }
    Some(text)
}

/// One fine-tune training example: exactly system + user + assistant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FineTuneRecord {
    pub messages: Vec<Message>,
}

impl FineTuneRecord {
    pub fn new(system: &str, user: &str, assistant: &str) -> FineTuneRecord {
        FineTuneRecord {
            messages: vec![
                Message::system(system),
                Message::user(user),
                Message::assistant(assistant),
            ],
        }
    }
}

/// Export labeled samples as fine-tune JSONL: one conversation per line with
/// the contract source as the user turn and the rendered gold answer as the
/// assistant turn. Returns the number of lines written. Serialization key
/// order is stable, so parse + re-export is byte-identical.
pub fn export_finetune_jsonl(
    samples: &[ContractSample],
    labels: &HashMap<&str, &LabelRecord>,
    system_prompt: &str,
    path: &Path,
) -> Result<usize> {
    let mut out = String::new();
    for sample in samples {
        let label = labels
            .get(sample.id.as_str())
            .ok_or_else(|| Error::UnlabeledSample(sample.id.clone()))?;
        let record = FineTuneRecord::new(system_prompt, &sample.normalized, &render_gold(label));
        out.push_str(&serde_json::to_string(&record)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(samples.len())
}

/// Parse a fine-tune JSONL file back into records.
pub fn read_finetune_jsonl(path: &Path) -> Result<Vec<FineTuneRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: FineTuneRecord = serde_json::from_str(line)
            .map_err(|e| Error::malformed(path, idx + 1, e.to_string()))?;
        let roles: Vec<Role> = record.messages.iter().map(|m| m.role).collect();
        if roles != [Role::System, Role::User, Role::Assistant] {
            return Err(Error::malformed(
                path,
                idx + 1,
                format!("expected system/user/assistant messages, got {roles:?}"),
            ));
        }
        records.push(record);
    }
    Ok(records)
}

/// Training steps for a dataset of `n` samples:
/// ceil(n / (per_device_batch * grad_accum)) * epochs.
pub fn total_steps(n: u64, per_device_batch: u64, grad_accum: u64, epochs: u64) -> Result<u64> {
    if n == 0 || per_device_batch == 0 || grad_accum == 0 || epochs == 0 {
        return Err(Error::Config(
            "total_steps arguments must all be >= 1".into(),
        ));
    }
    let effective = per_device_batch * grad_accum;
    Ok(n.div_ceil(effective) * epochs)
}

/// LoRA fine-tune configuration recorded with every hosted job and run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTuneHyperparams {
    pub lora_alpha: u32,
    pub lora_dropout: f64,
    pub lora_rank: u32,
    pub bias: u32,
    pub optimizer: String,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub fp16: bool,
    pub max_grad_norm: f64,
    pub max_steps: u32,
    pub warmup_ratio: f64,
    pub scheduler: String,
    pub log_steps: u32,
}

impl Default for FineTuneHyperparams {
    fn default() -> Self {
        FineTuneHyperparams {
            lora_alpha: 16,
            lora_dropout: 0.2,
            lora_rank: 4,
            bias: 0,
            optimizer: "PagedAdamW-8bit".to_string(),
            learning_rate: 1e-3,
            weight_decay: 0.001,
            fp16: true,
            max_grad_norm: 0.3,
            max_steps: 500,
            warmup_ratio: 0.03,
            scheduler: "cosine".to_string(),
            log_steps: 25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Queued,
    Running,
    Succeeded,
    Failed,
}

/// Status record for a hosted fine-tune job.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FineTuneJob {
    pub id: String,
    pub status: JobStatus,
    pub fine_tuned_model: Option<String>,
}

fn parse_job(value: &serde_json::Value) -> Result<FineTuneJob> {
    let id = value
        .get("id")
        .and_then(|v| v.as_str())
        .ok_or_else(|| Error::Protocol("job response missing id".into()))?
        .to_string();
    let status_str = value
        .get("status")
        .and_then(|v| v.as_str())
        .ok_or_else(|| Error::Protocol("job response missing status".into()))?;
    let status = match status_str {
        "queued" | "created" | "validating_files" | "pending" => JobStatus::Queued,
        "running" => JobStatus::Running,
        "succeeded" => JobStatus::Succeeded,
        "failed" | "cancelled" => JobStatus::Failed,
        other => return Err(Error::Protocol(format!("unknown job status `{other}`"))),
    };
    let fine_tuned_model = value
        .get("fine_tuned_model")
        .and_then(|v| v.as_str())
        .map(str::to_string);
    Ok(FineTuneJob {
        id,
        status,
        fine_tuned_model,
    })
}

impl ChatClient {
    /// Start a fine-tune job from previously uploaded file ids.
    pub fn create_finetune_job(
        &self,
        training_file: &str,
        validation_file: Option<&str>,
        base_model: &str,
        hyperparams: &FineTuneHyperparams,
    ) -> Result<FineTuneJob> {
        let mut body = serde_json::json!({
            "training_file": training_file,
            "model": base_model,
            "hyperparameters": hyperparams,
        });
        if let Some(validation) = validation_file {
            body["validation_file"] = serde_json::Value::String(validation.to_string());
        }
        let (value, _) = self.request_json("POST", "fine_tuning/jobs", Some(&body))?;
        parse_job(&value)
    }

    /// Poll a job by id. Idempotent.
    pub fn poll_finetune_job(&self, job_id: &str) -> Result<FineTuneJob> {
        let (value, _) = self.request_json("GET", &format!("fine_tuning/jobs/{job_id}"), None)?;
        parse_job(&value)
    }

    pub fn cancel_finetune_job(&self, job_id: &str) -> Result<FineTuneJob> {
        let (value, _) =
            self.request_json("POST", &format!("fine_tuning/jobs/{job_id}/cancel"), None)?;
        parse_job(&value)
    }
}
