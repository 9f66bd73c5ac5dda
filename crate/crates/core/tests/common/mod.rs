#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;

use counterfact::answerer::{ChatClient, ClientError, Message, RemoteConfig, Sampling};

/// Minimal HTTP server answering every POST with `reply(request_body)`.
/// The reply is (status, body). Request bodies are recorded.
pub struct Stub {
    pub base_url: String,
    pub bodies: Arc<Mutex<Vec<String>>>,
}

fn read_request(stream: &mut TcpStream) -> Option<String> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut len = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).ok()? == 0 {
            return None;
        }
        let l = line.trim_end();
        if l.is_empty() {
            break;
        }
        if let Some((k, v)) = l.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                len = v.trim().parse().ok()?;
            }
        }
    }
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body).ok()?;
    String::from_utf8(body).ok()
}

pub fn chat_reply(text: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
}

impl Stub {
    pub fn start<F>(reply: F) -> Stub
    where
        F: Fn(&str) -> (u16, String) + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let bodies = Arc::new(Mutex::new(Vec::new()));
        let seen = bodies.clone();
        let reply = Arc::new(reply);
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let seen = seen.clone();
                let reply = reply.clone();
                thread::spawn(move || {
                    let Some(body) = read_request(&mut stream) else { return };
                    seen.lock().unwrap().push(body.clone());
                    let (status, out) = reply(&body);
                    let resp = format!(
                        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{out}",
                        out.len()
                    );
                    let _ = stream.write_all(resp.as_bytes());
                });
            }
        });
        Stub {
            base_url: format!("http://{addr}"),
            bodies,
        }
    }

    pub fn config(&self) -> RemoteConfig {
        RemoteConfig {
            base_url: self.base_url.clone(),
            model: "stub".into(),
            timeout_secs: 5,
            backoff_ms: 1,
            ..RemoteConfig::default()
        }
    }
}

/// In-process client returning a fixed text.
pub struct Fixed(pub &'static str);

impl ChatClient for Fixed {
    fn complete(&self, _: &[Message], _: &Sampling) -> Result<String, ClientError> {
        Ok(self.0.to_string())
    }
}

/// Hand-coded candy structure 1: thresholds 4, 6, 8, 10.
pub fn candy_truth(n: [i64; 4], force_a: Option<bool>, force_b: Option<bool>) -> [bool; 4] {
    let a = force_a.unwrap_or(n[0] >= 4);
    let b = force_b.unwrap_or(n[1] >= 6);
    let c = (a && b) || n[2] >= 8;
    let d = (a && b) || n[3] >= 10;
    [a, b, c, d]
}

/// Reads the four candy counts back out of a rendered narrative.
pub fn candy_counts(text: &str) -> [i64; 4] {
    let mut out = [0; 4];
    for (k, name) in ["Anna gets ", "Bill gets ", "Cory gets ", "Dave gets "].iter().enumerate() {
        let at = text.find(name).expect("count present") + name.len();
        let digits: String = text[at..].chars().take_while(|c| c.is_ascii_digit()).collect();
        out[k] = digits.parse().unwrap();
    }
    out
}
