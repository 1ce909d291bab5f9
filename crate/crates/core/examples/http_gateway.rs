//! Talk to an HTTP completion/embedding service. A throwaway local server
//! plays the service: it rejects the first completion request with 429 to
//! show the retry, then answers.
//!
//!     cargo run --example http_gateway

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::time::Duration;

use serde_json::{json, Value};
use textnav::gateway::{CompletionRequest, EmbeddingRequest, GatewayConfig, HttpGateway, LmGateway};

fn serve(listener: TcpListener) {
    let mut completions = 0;
    for stream in listener.incoming() {
        let Ok(mut stream) = stream else { continue };
        let mut reader = BufReader::new(stream.try_clone().expect("clone socket"));
        let mut request_line = String::new();
        reader.read_line(&mut request_line).ok();
        let mut length = 0;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).ok();
            if line.trim().is_empty() {
                break;
            }
            if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                length = v.trim().parse().unwrap_or(0);
            }
        }
        let mut body = vec![0; length];
        reader.read_exact(&mut body).ok();
        let body: Value = serde_json::from_slice(&body).unwrap_or_default();
        let (status, reply) = if request_line.contains("/completions") {
            completions += 1;
            if completions == 1 {
                ("429 Too Many Requests", json!({ "error": "slow down" }))
            } else {
                ("200 OK", json!({ "choices": [{ "text": " a hallway with a wooden door\nStep 4:" }] }))
            }
        } else {
            let n = body["input"].as_array().map_or(0, Vec::len);
            let data: Vec<Value> = (0..n).map(|i| json!({ "index": i, "embedding": [1.0, i as f64, 2.0] })).collect();
            ("200 OK", json!({ "data": data }))
        };
        let text = reply.to_string();
        let _ = write!(
            stream,
            "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
            text.len()
        );
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let base = format!("http://{}/v1", listener.local_addr()?);
    std::thread::spawn(move || serve(listener));

    let mut config = GatewayConfig::new(base, "example-key");
    config.initial_backoff = Duration::from_millis(50);
    let gateway = HttpGateway::new(config);
    println!("{gateway:?}");

    let answer = gateway.complete(&CompletionRequest::greedy_line("### Trajectory:\nStep 3:\n...\nYou chose:", 32))?;
    println!("completion (cut at the first newline): {answer:?}");

    let vectors = gateway.embed(&EmbeddingRequest::new(["go to the kitchen", "stop by the sofa"]))?;
    for v in &vectors {
        let norm: f32 = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        println!("embedding {v:?} (norm {norm:.6})");
    }
    Ok(())
}
