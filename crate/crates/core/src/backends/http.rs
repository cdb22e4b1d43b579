//! HTTP chat-completions backend for OpenAI-compatible services.
//!
//! Wire format: `POST {base_url}/v1/chat/completions` with
//! `{"model", "messages": [{"role": "user", "content": prompt}],
//! "logprobs", "max_tokens"}`. The client reads
//! `choices[0].message.content`, `choices[0].logprobs.content[*].logprob`,
//! and `usage.prompt_tokens` / `usage.completion_tokens`. Server-reported
//! usage takes precedence over the offline token counter. Requesting
//! logprobs and not receiving them is an error, never a silent confidence
//! of zero.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    count_tokens, parse_tagged_output, BackendError, GenerationRequest, GenerationResponse,
    ModelBackend, ANSWER_MARKER,
};
use crate::types::Answer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpBackendConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    /// Retry a failed request once before giving up.
    #[serde(default)]
    pub retry_on_transport: bool,
}

fn default_timeout_secs() -> u64 {
    60
}

pub struct HttpBackend {
    config: HttpBackendConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    logprobs: bool,
    max_tokens: u32,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
    #[serde(default)]
    logprobs: Option<Logprobs>,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct Logprobs {
    #[serde(default)]
    content: Option<Vec<TokenLogprob>>,
}

#[derive(Deserialize)]
struct TokenLogprob {
    token: String,
    logprob: f64,
}

#[derive(Deserialize)]
struct Usage {
    #[serde(default)]
    prompt_tokens: Option<u64>,
    #[serde(default)]
    completion_tokens: Option<u64>,
}

impl HttpBackend {
    /// Build the client; reads the API key from the configured environment
    /// variable. A named-but-unset variable is an error.
    pub fn new(config: HttpBackendConfig) -> Result<Self, BackendError> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                BackendError::Transport(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(Self {
            config,
            api_key,
            client,
        })
    }

    fn endpoint(&self) -> String {
        format!(
            "{}/v1/chat/completions",
            self.config.base_url.trim_end_matches('/')
        )
    }

    fn send(&self, body: &ChatRequest<'_>) -> Result<ChatResponse, BackendError> {
        let mut request = self.client.post(self.endpoint()).json(body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request
            .send()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(BackendError::Transport(format!(
                "service returned status {status}"
            )));
        }
        response
            .json()
            .map_err(|e| BackendError::Transport(format!("malformed response: {e}")))
    }

    /// Logprobs of the tokens lying after the last `[Answer]:` marker.
    /// Tokens are matched by walking their concatenation against the
    /// completion text; a token straddling the marker boundary is excluded.
    fn answer_span_logprobs(content: &str, tokens: &[TokenLogprob]) -> Vec<f64> {
        let Some(marker_at) = content.rfind(ANSWER_MARKER) else {
            return Vec::new();
        };
        let span_start = marker_at + ANSWER_MARKER.len();
        let mut offset = 0usize;
        let mut logprobs = Vec::new();
        for entry in tokens {
            if offset >= span_start {
                // Positive values are floating-point noise from the service;
                // probabilities never exceed 1.
                logprobs.push(entry.logprob.min(0.0));
            }
            offset += entry.token.len();
        }
        logprobs
    }
}

impl ModelBackend for HttpBackend {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        let body = ChatRequest {
            model: &self.config.model,
            messages: [ChatMessage {
                role: "user",
                content: &request.prompt,
            }],
            logprobs: request.want_logprobs,
            max_tokens: request.max_tokens,
        };
        let parsed = match self.send(&body) {
            Ok(parsed) => parsed,
            Err(first_error) if self.config.retry_on_transport => {
                self.send(&body).map_err(|retry_error| {
                    BackendError::Transport(format!(
                        "{first_error}; retry failed: {retry_error}"
                    ))
                })?
            }
            Err(e) => return Err(e),
        };

        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::Transport("response carries no choices".into()))?;
        let content = choice.message.content.unwrap_or_default();
        if content.trim().is_empty() {
            return Err(BackendError::Refusal);
        }

        let token_logprobs = if request.want_logprobs {
            let tokens = choice
                .logprobs
                .and_then(|l| l.content)
                .ok_or(BackendError::MissingLogprobs)?;
            if tokens.iter().any(|t| t.logprob.is_nan()) {
                return Err(BackendError::Transport("NaN logprob in response".into()));
            }
            let span = Self::answer_span_logprobs(&content, &tokens);
            if span.is_empty() {
                return Err(BackendError::Parse(format!(
                    "no tokens after the final {ANSWER_MARKER} marker"
                )));
            }
            span
        } else {
            Vec::new()
        };

        let tagged = parse_tagged_output(&content)?;
        let usage = parsed.usage.unwrap_or(Usage {
            prompt_tokens: None,
            completion_tokens: None,
        });
        Ok(GenerationResponse {
            answer: Answer {
                text: tagged.answer_text().to_string(),
                token_logprobs,
                token_count_in: usage
                    .prompt_tokens
                    .unwrap_or_else(|| count_tokens(&request.prompt)),
                token_count_out: usage
                    .completion_tokens
                    .unwrap_or_else(|| count_tokens(&content)),
            },
            raw_text: content,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    /// Minimal one-shot HTTP server: accepts `hits` requests, captures each
    /// body, responds with the canned payload.
    fn serve(payload: &'static str, hits: usize) -> (String, std::thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let mut bodies = Vec::new();
            for _ in 0..hits {
                let (mut stream, _) = listener.accept().unwrap();
                let mut buf = vec![0u8; 65536];
                let mut read = 0usize;
                let body_start;
                loop {
                    let n = stream.read(&mut buf[read..]).unwrap();
                    read += n;
                    if let Some(at) = find_header_end(&buf[..read]) {
                        body_start = at;
                        break;
                    }
                }
                let headers = String::from_utf8_lossy(&buf[..body_start]).to_string();
                let content_length = headers
                    .lines()
                    .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(|v| v.trim().parse::<usize>().unwrap()))
                    .unwrap_or(0);
                while read - body_start < content_length {
                    let n = stream.read(&mut buf[read..]).unwrap();
                    read += n;
                }
                bodies.push(String::from_utf8_lossy(&buf[body_start..read]).to_string());
                let response = format!(
                    "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
                    payload.len(),
                    payload
                );
                stream.write_all(response.as_bytes()).unwrap();
            }
            bodies
        });
        (format!("http://{addr}"), handle)
    }

    fn find_header_end(buf: &[u8]) -> Option<usize> {
        buf.windows(4).position(|w| w == b"\r\n\r\n").map(|p| p + 4)
    }

    fn config(base_url: String) -> HttpBackendConfig {
        HttpBackendConfig {
            base_url,
            model: "test-model".into(),
            api_key_env: None,
            timeout_secs: 5,
            retry_on_transport: false,
        }
    }

    const GOOD_PAYLOAD: &str = r#"{
        "choices": [{
            "message": {"content": "[Strategy]: add the parts\n[Answer]: 6"},
            "logprobs": {"content": [
                {"token": "[Strategy]: add the parts\n", "logprob": -0.9},
                {"token": "[Answer]:", "logprob": -0.5},
                {"token": " 6", "logprob": -0.1}
            ]}
        }],
        "usage": {"prompt_tokens": 120, "completion_tokens": 11}
    }"#;

    #[test]
    fn happy_path_parses_answer_span_and_usage() {
        let (url, server) = serve(GOOD_PAYLOAD, 1);
        let backend = HttpBackend::new(config(url)).unwrap();
        let resp = backend
            .generate(&GenerationRequest::new("what is 2 + 4? [Answer]:", 64))
            .unwrap();
        assert_eq!(resp.answer.text, "6");
        assert_eq!(resp.answer.token_logprobs, vec![-0.1]);
        assert_eq!(resp.answer.token_count_in, 120);
        assert_eq!(resp.answer.token_count_out, 11);

        let bodies = server.join().unwrap();
        let body: serde_json::Value = serde_json::from_str(&bodies[0]).unwrap();
        assert_eq!(body["model"], "test-model");
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["logprobs"], true);
        assert_eq!(body["max_tokens"], 64);
    }

    #[test]
    fn missing_logprobs_is_an_error() {
        let payload = r#"{"choices": [{"message": {"content": "[Answer]: 6"}}], "usage": {}}"#;
        let (url, server) = serve(payload, 1);
        let backend = HttpBackend::new(config(url)).unwrap();
        let err = backend
            .generate(&GenerationRequest::new("question", 64))
            .unwrap_err();
        assert!(matches!(err, BackendError::MissingLogprobs));
        server.join().unwrap();
    }

    #[test]
    fn empty_completion_is_a_refusal() {
        let payload = r#"{"choices": [{"message": {"content": ""}}]}"#;
        let (url, server) = serve(payload, 1);
        let backend = HttpBackend::new(config(url)).unwrap();
        let err = backend
            .generate(&GenerationRequest::new("question", 64))
            .unwrap_err();
        assert!(matches!(err, BackendError::Refusal));
        server.join().unwrap();
    }

    #[test]
    fn unreachable_host_is_a_transport_error() {
        // Port 1 is essentially never listening.
        let backend = HttpBackend::new(config("http://127.0.0.1:1".into())).unwrap();
        let err = backend
            .generate(&GenerationRequest::new("question", 64))
            .unwrap_err();
        assert!(matches!(err, BackendError::Transport(_)));
    }

    #[test]
    fn missing_api_key_env_fails_construction() {
        let mut cfg = config("http://127.0.0.1:1".into());
        cfg.api_key_env = Some("CASCADE_TEST_KEY_THAT_DOES_NOT_EXIST".into());
        assert!(matches!(
            HttpBackend::new(cfg),
            Err(BackendError::Transport(_))
        ));
    }
}
