//! Shared test support: a seeded synthetic corpus, its images and probe
//! confidences, a tiny HTTP server standing in for the model server, and an
//! in-process CLI runner.

#![allow(dead_code)]

pub mod oracle;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use debias_core::corpus::Corpus;
use debias_core::region::RasterImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

pub const WIDTH: u32 = 64;
pub const HEIGHT: u32 = 48;

const PLACES: [&str; 5] = ["kitchen", "garden", "office", "station", "library"];
const OBJECTS: [&str; 10] = [
    "cup", "book", "umbrella", "bicycle", "phone", "lamp", "bottle", "bag", "guitar", "laptop",
];
const VERBS: [&str; 6] = ["holding", "carrying", "watching", "fixing", "cleaning", "moving"];
const FILLERS: [&str; 10] = [
    "they are planning a surprise party",
    "nobody noticed a broken fence",
    "someone left a note on a door",
    "he prefers tea over coffee",
    "she was thinking about an exam",
    "they just moved to town",
    "kids are playing outside",
    "a dog barked all night",
    "our neighbors were away",
    "he sold his old car",
];
// Answer frames are built from stopwords, so only the object or place word
// can match the question or fall outside the scene.
const OBJECT_FRAMES: [&str; 6] = [
    "she has the",
    "he had the",
    "they have the",
    "you own the",
    "i am with the",
    "we had all the",
];
const PLACE_FRAMES: [&str; 6] = [
    "she was at the",
    "he was by the",
    "they were at the",
    "we will be at the",
    "you are off to the",
    "i am at the",
];
const BALANCED_FRAMES: [&str; 3] = ["they had the", "it was the", "we did the"];

/// Splits on spaces, keeping bracketed tags and `?` as their own tokens.
fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, xs: &'a [T]) -> &'a T {
    &xs[rng.random_range(0..xs.len())]
}

fn distinct<'a>(rng: &mut ChaCha8Rng, xs: &'a [&'a str], k: usize, avoid: &str) -> Vec<&'a str> {
    let mut out: Vec<&str> = Vec::new();
    while out.len() < k {
        let x = *pick(rng, xs);
        if x != avoid && !out.contains(&x) {
            out.push(x);
        }
    }
    out
}

/// One generated sample plus what the generator knows about it.
#[derive(Debug, Clone)]
pub struct Generated {
    pub line: Value,
    /// Distractors share the question's object phrase, so overlap ties.
    pub balanced: bool,
}

/// Question-answering samples in the corpus line format. The correct answer
/// names either the question's object or its place. About three quarters
/// pair it with unrelated distractors; the rest have distractors that
/// overlap the question exactly as much.
pub fn generate(n: usize, seed: u64) -> Vec<Generated> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let person = format!("[person{}]", rng.random_range(1..=3));
            let verb = *pick(&mut rng, &VERBS);
            let obj = *pick(&mut rng, &OBJECTS);
            let place = *pick(&mut rng, &PLACES);
            let question = format!("why is {person} {verb} the {obj} in the {place} ?");
            let answer = if rng.random_bool(0.6) {
                format!("{} {obj}", pick(&mut rng, &OBJECT_FRAMES))
            } else {
                format!("{} {place}", pick(&mut rng, &PLACE_FRAMES))
            };
            let balanced = rng.random_bool(0.25);
            let distractors: Vec<String> = if balanced {
                BALANCED_FRAMES.iter().map(|f| format!("{f} {obj}")).collect()
            } else {
                distinct(&mut rng, &FILLERS, 3, "")
                    .into_iter()
                    .map(String::from)
                    .collect()
            };
            let correct = rng.random_range(0..4usize);
            let mut options = distractors;
            options.insert(correct, answer);

            let other = *pick(&mut rng, &OBJECTS);
            let bx = |rng: &mut ChaCha8Rng| {
                let w = rng.random_range(12..=24) as f64;
                let h = rng.random_range(10..=20) as f64;
                let x0 = rng.random_range(0..=(WIDTH as i64 - w as i64)) as f64;
                let y0 = rng.random_range(0..=(HEIGHT as i64 - h as i64)) as f64;
                [x0, y0, x0 + w, y0 + h]
            };
            let b_obj = bx(&mut rng);
            let b_other = bx(&mut rng);
            let cx = rng.random_range(8..56) as f64;
            let objects = json!([
                {"label": obj, "box": b_obj},
                {"label": other, "box": b_other},
                {"label": "person", "poly": [[cx, 4.0], [cx + 8.0, 30.0], [cx - 8.0, 30.0]]},
            ]);
            let line = json!({
                "id": format!("s{i:03}"),
                "question": toks(&question),
                "options": options.iter().map(|o| json!({"text": toks(o)})).collect::<Vec<_>>(),
                "correct": correct,
                "visual": {
                    "image": format!("img_{i:03}.png"),
                    "w": WIDTH,
                    "h": HEIGHT,
                    "objects": objects,
                    "caption": toks(&format!("a {obj} near a {other}")),
                },
                "prov": {"kind": "orig"},
            });
            Generated { line, balanced }
        })
        .collect()
}

pub fn jsonl(lines: impl IntoIterator<Item = Value>) -> String {
    lines.into_iter().map(|v| format!("{v}\n")).collect()
}

pub fn corpus_text(n: usize, seed: u64) -> String {
    jsonl(generate(n, seed).into_iter().map(|g| g.line))
}

pub fn corpus(n: usize, seed: u64) -> Corpus {
    debias::format::parse_corpus(&corpus_text(n, seed)).expect("fixture corpus parses")
}

/// A textured RGB image: a gradient plus seeded noise.
pub fn image(seed: u64) -> RasterImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity((WIDTH * HEIGHT * 3) as usize);
    for y in 0..HEIGHT {
        for x in 0..WIDTH {
            let n: u8 = rng.random_range(0..32);
            data.push((x * 3) as u8 + n);
            data.push((y * 4) as u8 + n);
            data.push(128u8.wrapping_add(n));
        }
    }
    RasterImage::from_raw(WIDTH, HEIGHT, 3, data).unwrap()
}

pub fn write_images(dir: &Path, n: usize, seed: u64) {
    std::fs::create_dir_all(dir).unwrap();
    for i in 0..n {
        let img = image(seed.wrapping_mul(1000).wrapping_add(i as u64));
        std::fs::write(dir.join(format!("img_{i:03}.png")), debias::io::encode_png(&img)).unwrap();
    }
}

/// Uniform probe confidences, except every fifth sample where the
/// question-answer model puts 0.4 on the correct option.
pub fn confidences_text(samples: &[Generated]) -> String {
    let mut lines = Vec::new();
    for (i, g) in samples.iter().enumerate() {
        let id = g.line["id"].as_str().unwrap();
        let correct = g.line["correct"].as_u64().unwrap() as usize;
        for model in ["QA", "IA", "AO"] {
            let p: Vec<f64> = if model == "QA" && i % 5 == 0 {
                (0..4).map(|k| if k == correct { 0.4 } else { 0.2 }).collect()
            } else {
                vec![0.25; 4]
            };
            lines.push(json!({"id": id, "model": model, "p": p}));
        }
    }
    jsonl(lines)
}

/// Runs the CLI in-process and returns its exit code.
pub fn debias<S: AsRef<str>>(args: &[S]) -> i32 {
    let argv = std::iter::once("debias".to_string()).chain(args.iter().map(|s| s.as_ref().to_string()));
    debias::run(argv)
}

pub type Handler = dyn Fn(usize, &str, Value) -> (u16, Value) + Send + Sync;

/// A one-request-per-connection JSON server on a loopback port.
pub struct MockServer {
    pub url: String,
    hits: Arc<AtomicUsize>,
}

impl MockServer {
    /// `handler` gets the zero-based request number, the path and the body.
    pub fn start(handler: impl Fn(usize, &str, Value) -> (u16, Value) + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        let handler: Arc<Handler> = Arc::new(handler);
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let k = counter.fetch_add(1, Ordering::SeqCst);
                let handler = handler.clone();
                thread::spawn(move || {
                    let mut reader = BufReader::new(stream.try_clone().unwrap());
                    let mut request_line = String::new();
                    if reader.read_line(&mut request_line).is_err() {
                        return;
                    }
                    let path = request_line.split_whitespace().nth(1).unwrap_or("/").to_string();
                    let mut len = 0usize;
                    loop {
                        let mut h = String::new();
                        if reader.read_line(&mut h).is_err() || h == "\r\n" || h.is_empty() {
                            break;
                        }
                        if let Some((name, value)) = h.split_once(':') {
                            if name.eq_ignore_ascii_case("content-length") {
                                len = value.trim().parse().unwrap_or(0);
                            }
                        }
                    }
                    let mut body = vec![0u8; len];
                    if reader.read_exact(&mut body).is_err() {
                        return;
                    }
                    let req: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
                    let (status, resp) = handler(k, &path, req);
                    let payload = resp.to_string();
                    let _ = write!(
                        stream,
                        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                        payload.len()
                    );
                    let _ = stream.flush();
                });
            }
        });
        Self { url, hits }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

/// A loopback URL nothing listens on.
pub fn dead_url() -> String {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", l.local_addr().unwrap());
    drop(l);
    url
}
