use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::qa::{Provenance, RenderedQuestion};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DialogueError {
    #[error("a dialogue must start with a user turn")]
    FirstNotUser,
    #[error("turns {0} and {1} have the same role")]
    NotAlternating(usize, usize),
    #[error("the last turn must be a user turn")]
    LastNotUser,
}

/// Alternating user/assistant turns, starting with the user. When built
/// from rendered questions, the question behind the final user turn rides
/// along as a side channel.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dialogue {
    turns: Vec<Message>,
    question: Option<Box<RenderedQuestion>>,
}

impl Dialogue {
    /// Checks the alternation invariant.
    pub fn from_turns(turns: Vec<Message>) -> Result<Self, DialogueError> {
        if let Some(first) = turns.first() {
            if first.role != Role::User {
                return Err(DialogueError::FirstNotUser);
            }
        }
        for i in 1..turns.len() {
            if turns[i].role == turns[i - 1].role {
                return Err(DialogueError::NotAlternating(i - 1, i));
            }
        }
        Ok(Self {
            turns,
            question: None,
        })
    }

    pub fn user(text: impl Into<String>) -> Self {
        Self {
            turns: vec![Message::user(text)],
            question: None,
        }
    }

    /// One user turn holding the full question text.
    pub fn ask(q: &RenderedQuestion) -> Self {
        Self {
            turns: vec![Message::user(q.text.clone())],
            question: Some(Box::new(q.clone())),
        }
    }

    /// Appends an assistant reply and asks `q` without repeating the
    /// context narrative.
    pub fn follow_up(mut self, reply: impl Into<String>, q: &RenderedQuestion) -> Self {
        self.turns.push(Message::assistant(reply));
        self.turns.push(Message::user(q.question.clone()));
        self.question = Some(Box::new(q.clone()));
        self
    }

    pub fn turns(&self) -> &[Message] {
        &self.turns
    }

    pub fn question(&self) -> Option<&RenderedQuestion> {
        self.question.as_deref()
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.question().and_then(|q| q.provenance.as_ref())
    }

    pub fn last_user(&self) -> Result<&str, DialogueError> {
        match self.turns.last() {
            Some(m) if m.role == Role::User => Ok(&m.content),
            _ => Err(DialogueError::LastNotUser),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for Sampling {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            max_tokens: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("HTTP status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed reply: {0}")]
    Malformed(String),
    #[error("environment variable `{0}` is not set")]
    MissingToken(String),
}

impl ClientError {
    /// Transport failures and server-side statuses are worth retrying.
    pub fn is_transient(&self) -> bool {
        match self {
            ClientError::Transport(_) => true,
            ClientError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// Anything that produces one chat completion for a message list.
pub trait ChatClient: Send + Sync {
    fn complete(&self, messages: &[Message], sampling: &Sampling) -> Result<String, ClientError>;
}

/// Endpoint settings for the chat-completion wire protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteConfig {
    pub base_url: String,
    pub path: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub token_env: Option<String>,
    pub timeout_secs: u64,
    pub attempts: u32,
    pub backoff_ms: u64,
    /// Bound on concurrent requests.
    pub max_in_flight: usize,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8000".into(),
            path: "/v1/chat/completions".into(),
            model: "default".into(),
            token_env: None,
            timeout_secs: 60,
            attempts: 3,
            backoff_ms: 500,
            max_in_flight: 4,
        }
    }
}

#[derive(Serialize)]
struct RequestBody<'a> {
    model: &'a str,
    messages: &'a [Message],
    temperature: f64,
    max_tokens: u32,
}

/// Serialized request body. Field order is fixed, so the bytes depend only
/// on the arguments.
pub fn request_body(model: &str, messages: &[Message], sampling: &Sampling) -> Vec<u8> {
    serde_json::to_vec(&RequestBody {
        model,
        messages,
        temperature: sampling.temperature,
        max_tokens: sampling.max_tokens,
    })
    .expect("request body serializes")
}

/// First choice text of a chat-completion reply. Accepts both
/// `choices[0].message.content` and the older `choices[0].text`.
pub fn parse_reply(body: &str) -> Result<String, ClientError> {
    let v: serde_json::Value =
        serde_json::from_str(body).map_err(|e| ClientError::Malformed(e.to_string()))?;
    let first = v
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| ClientError::Malformed("no choices".into()))?;
    first
        .pointer("/message/content")
        .or_else(|| first.get("text"))
        .and_then(|t| t.as_str())
        .map(str::to_string)
        .ok_or_else(|| ClientError::Malformed("first choice has no text".into()))
}

/// Blocking HTTP client with retry and exponential backoff.
pub struct HttpClient {
    config: RemoteConfig,
    token: Option<String>,
    http: reqwest::blocking::Client,
    slots: Semaphore,
}

impl HttpClient {
    pub fn new(config: RemoteConfig) -> Result<Self, ClientError> {
        let token = match &config.token_env {
            Some(var) => Some(
                std::env::var(var).map_err(|_| ClientError::MissingToken(var.clone()))?,
            ),
            None => None,
        };
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        let slots = Semaphore::new(config.max_in_flight.max(1));
        Ok(Self {
            config,
            token,
            http,
            slots,
        })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn url(&self) -> String {
        format!(
            "{}/{}",
            self.config.base_url.trim_end_matches('/'),
            self.config.path.trim_start_matches('/')
        )
    }

    fn once(&self, body: &[u8]) -> Result<String, ClientError> {
        let _permit = self.slots.acquire();
        let mut req = self
            .http
            .post(self.url())
            .header("content-type", "application/json")
            .body(body.to_vec());
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        let resp = req
            .send()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .text()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(ClientError::Status { status, body: text });
        }
        parse_reply(&text)
    }
}

impl ChatClient for HttpClient {
    fn complete(&self, messages: &[Message], sampling: &Sampling) -> Result<String, ClientError> {
        let body = request_body(&self.config.model, messages, sampling);
        let attempts = self.config.attempts.max(1);
        let mut delay = Duration::from_millis(self.config.backoff_ms);
        let mut attempt = 1;
        loop {
            match self.once(&body) {
                Ok(text) => return Ok(text),
                Err(e) if e.is_transient() && attempt < attempts => {
                    log::warn!("request attempt {attempt} failed: {e}; retrying");
                    std::thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Counting semaphore bounding in-flight requests.
struct Semaphore {
    free: std::sync::Mutex<usize>,
    cv: std::sync::Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(n: usize) -> Self {
        Self {
            free: std::sync::Mutex::new(n),
            cv: std::sync::Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|p| p.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|p| p.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|p| p.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}
