//! Chat-completions provider. Replies are parsed as a full `SolverConfig`
//! JSON object and admitted only after validation and the frozen-half check.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::stub::StubProvider;
use super::{admit, Layer, MutationError, MutationProvider, MutationRequest, MutationResponse};
use crate::solvers::{bounds, SolverConfig};

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "SOLVEVO_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmSettings {
    /// Base URL; `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    /// Extra attempts after an invalid reply before falling back to the stub.
    pub max_retries: u32,
    pub max_in_flight: usize,
    pub timeout_s: f64,
    pub audit_path: Option<PathBuf>,
    #[serde(skip)]
    pub api_key: Option<String>,
}

impl Default for LlmSettings {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".to_string(),
            model: "gpt-5-mini".to_string(),
            temperature: 0.7,
            max_retries: 3,
            max_in_flight: 4,
            timeout_s: 120.0,
            audit_path: None,
            api_key: None,
        }
    }
}

struct Limiter {
    active: Mutex<usize>,
    freed: Condvar,
    max: usize,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn acquire(&self) -> Permit<'_> {
        let mut n = self.active.lock().expect("limiter lock");
        while *n >= self.max {
            n = self.freed.wait(n).expect("limiter lock");
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.active.lock().expect("limiter lock") -= 1;
        self.0.freed.notify_one();
    }
}

pub struct LlmProvider {
    settings: LlmSettings,
    client: reqwest::blocking::Client,
    limiter: Limiter,
    audit: Option<Mutex<File>>,
}

impl LlmProvider {
    /// Reads the API key from [`API_KEY_ENV`] when the settings carry none.
    pub fn new(mut settings: LlmSettings) -> Result<Self, MutationError> {
        if settings.api_key.is_none() {
            settings.api_key = std::env::var(API_KEY_ENV).ok();
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(settings.timeout_s))
            .build()
            .map_err(|e| MutationError::Unreachable(e.to_string()))?;
        let audit = match &settings.audit_path {
            Some(p) => Some(Mutex::new(
                OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(p)
                    .map_err(|e| MutationError::Audit(format!("{}: {e}", p.display())))?,
            )),
            None => None,
        };
        Ok(Self {
            limiter: Limiter {
                active: Mutex::new(0),
                freed: Condvar::new(),
                max: settings.max_in_flight.max(1),
            },
            settings,
            client,
            audit,
        })
    }

    fn log(&self, entry: Value) -> Result<(), MutationError> {
        if let Some(f) = &self.audit {
            let mut f = f.lock().expect("audit lock");
            writeln!(f, "{entry}").map_err(|e| MutationError::Audit(e.to_string()))?;
        }
        Ok(())
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.settings.base_url.trim_end_matches('/'))
    }

    fn call(&self, messages: &[Value]) -> Result<(String, Value), MutationError> {
        let body = json!({
            "model": self.settings.model,
            "temperature": self.settings.temperature,
            "messages": messages,
        });
        let mut req = self.client.post(self.url()).json(&body);
        if let Some(k) = &self.settings.api_key {
            req = req.bearer_auth(k);
        }
        let resp = req.send().map_err(|e| MutationError::Unreachable(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| MutationError::Unreachable(e.to_string()))?;
        self.log(json!({"request": body, "status": status.as_u16(), "response": text}))?;
        if !status.is_success() {
            return Err(MutationError::Unreachable(format!("HTTP {status}")));
        }
        let reply: Value = serde_json::from_str(&text).map_err(|e| MutationError::InvalidReply(e.to_string()))?;
        let content = reply["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| MutationError::InvalidReply("missing choices[0].message.content".into()))?
            .to_string();
        Ok((content, body))
    }
}

fn system_prompt(layer: Layer) -> String {
    let scope = match layer {
        Layer::Mdl => "Propose a new search mechanism: edit fields under \"mechanism\" only. Aim for a lower terminal log-gap, or an equal one with faster decay.",
        Layer::Mcl => "Simplify the mechanism without changing its behavior: edit fields under \"mechanism\" only.",
        Layer::Ssl1 => "Shorten the schedule: edit fields under \"schedule\" only. Reduce runtime by at least 5% while keeping solution quality.",
        Layer::Ssl2 => "Reallocate the schedule: edit fields under \"schedule\" only and do not raise time_limit_s. Aim for a lower terminal log-gap.",
    };
    format!(
        "You tune a metaheuristic solver configuration. {scope} \
         Operators: local_improvement.operator in {{\"2opt\",\"or-opt\",\"2opt+or-opt\"}}, scan in {{\"first\",\"best\"}}, \
         perturbation.operator in {{\"2opt_kick\",\"double_bridge\"}}. Bounds: knn_k {:?}, top_k {:?}, gls_lambda {:?}, \
         weight {:?}, lam {:?}, kick_strength {:?}, alpha {:?}, beta {:?}, rho {:?}, n_ants {:?}; schedule counts >= 1, time_limit_s > 0. \
         Reply with one JSON object of exactly the same shape as the input configuration and nothing else.",
        bounds::KNN_K,
        bounds::TOP_K,
        bounds::GLS_LAMBDA,
        bounds::WEIGHT,
        bounds::LAM,
        bounds::KICK_STRENGTH,
        bounds::ALPHA,
        bounds::BETA,
        bounds::RHO,
        bounds::N_ANTS,
    )
}

/// Outermost `{...}` span, which tolerates code fences and prose around it.
fn extract_json(content: &str) -> Option<&str> {
    let start = content.find('{')?;
    let end = content.rfind('}')?;
    (end > start).then(|| &content[start..=end])
}

impl MutationProvider for LlmProvider {
    fn name(&self) -> &str {
        "llm"
    }

    fn propose(&self, request: &MutationRequest) -> Result<MutationResponse, MutationError> {
        let _permit = self.limiter.acquire();
        let parent = serde_json::to_string_pretty(&request.parent).expect("config serializes");
        let feedback = serde_json::to_string(&request.feedback).expect("feedback serializes");
        let mut messages = vec![
            json!({"role": "system", "content": system_prompt(request.layer)}),
            json!({"role": "user", "content": format!("Task: {}\nParent metrics: {feedback}\nParent configuration:\n{parent}", request.task)}),
        ];
        let mut last_err = String::new();
        for attempt in 0..=self.settings.max_retries {
            let (content, _) = self.call(&messages)?;
            let parsed = extract_json(&content)
                .ok_or_else(|| MutationError::InvalidReply("no JSON object in reply".into()))
                .and_then(|s| serde_json::from_str::<SolverConfig>(s).map_err(|e| MutationError::InvalidReply(e.to_string())))
                .and_then(|c| admit(request, &c).map(|_| c));
            match parsed {
                Ok(candidate) => {
                    return Ok(MutationResponse {
                        candidate,
                        note: format!("llm attempt {}", attempt + 1),
                    })
                }
                Err(e) => {
                    last_err = e.to_string();
                    log::debug!("{} reply rejected: {last_err}", request.layer);
                    messages.push(json!({"role": "assistant", "content": content}));
                    messages.push(json!({"role": "user", "content": format!("That reply was rejected: {last_err}. Reply with the corrected JSON object only.")}));
                }
            }
        }
        let mut fallback = StubProvider.propose(request)?;
        fallback.note = format!("stub fallback after {} invalid replies ({last_err})", self.settings.max_retries + 1);
        self.log(json!({"layer": request.layer, "fallback": fallback.note}))?;
        Ok(fallback)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mutation::Feedback;
    use crate::problems::Task;
    use std::io::{BufRead, BufReader, Read};
    use std::net::TcpListener;
    use std::thread;

    /// Serves the given chat replies in order, one per connection.
    fn serve(replies: Vec<String>) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        thread::spawn(move || {
            for content in replies {
                let (mut stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut body = vec![0; len];
                reader.read_exact(&mut body).unwrap();
                let payload = json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string();
                write!(
                    stream,
                    "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                    payload.len()
                )
                .unwrap();
            }
        });
        format!("http://{addr}")
    }

    fn request(layer: Layer) -> MutationRequest {
        MutationRequest {
            layer,
            task: Task::Tsp,
            parent: SolverConfig::seed(Task::Tsp),
            feedback: Feedback::default(),
            seed: 5,
        }
    }

    fn provider(base_url: String, audit: Option<PathBuf>) -> LlmProvider {
        LlmProvider::new(LlmSettings {
            base_url,
            audit_path: audit,
            timeout_s: 5.0,
            api_key: Some("test".into()),
            ..LlmSettings::default()
        })
        .unwrap()
    }

    #[test]
    fn valid_reply_is_admitted() {
        let mut cand = SolverConfig::seed(Task::Tsp);
        cand.schedule.time_limit_s = 8.0;
        let reply = format!("```json\n{}\n```", serde_json::to_string(&cand).unwrap());
        let dir = tempfile::tempdir().unwrap();
        let audit = dir.path().join("audit.jsonl");
        let p = provider(serve(vec![reply]), Some(audit.clone()));
        let r = p.propose(&request(Layer::Ssl1)).unwrap();
        assert_eq!(r.candidate, cand);
        let log = std::fs::read_to_string(audit).unwrap();
        assert_eq!(log.lines().count(), 1);
        assert!(!log.contains("Bearer"));
    }

    #[test]
    fn frozen_violations_retry_then_fall_back() {
        let mut bad = SolverConfig::seed(Task::Tsp);
        bad.schedule.time_limit_s = 8.0;
        let bad = serde_json::to_string(&bad).unwrap();
        let p = provider(serve(vec![bad.clone(), "not json".into(), bad.clone(), bad]), None);
        let req = request(Layer::Mdl);
        let r = p.propose(&req).unwrap();
        assert!(r.note.starts_with("stub fallback"));
        assert_eq!(r.candidate, StubProvider.propose(&req).unwrap().candidate);
    }

    #[test]
    fn unreachable_endpoint_is_an_error() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        drop(listener);
        let p = provider(format!("http://{addr}"), None);
        assert!(matches!(p.propose(&request(Layer::Mdl)), Err(MutationError::Unreachable(_))));
    }
}
