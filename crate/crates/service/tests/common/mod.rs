#![allow(dead_code)]

use std::io::{BufRead, BufReader, Cursor, Write};
use std::net::{SocketAddr, TcpListener};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Duration;

use gaitworks_core::classifier::{train, GaitModel, ModelConfig, Network, Sample, TrainConfig};
use gaitworks_core::gait_repr::{load_samples, resample_grid, EnergyImage, EnergyKind, ENERGY_SIZE};
use gaitworks_core::silhouette::ColorFrame;
use gaitworks_core::synthkit::{generate_dataset, generate_sequence_with, preset, DatasetOptions, SequenceOptions};
use gaitworks_core::{GaitClass, Representation, Severity};
use gaitworks_service::{spawn_local, AppState, Config, Mailer};

pub const GEI_SIDE: usize = 64;

pub struct Fixture {
    pub gei: GaitModel,
    /// Untrained, full-size: exercises the default layer geometry.
    pub sei: GaitModel,
    /// A held-out 224×224 GEI from the training distribution, as PNG.
    pub gei_png: Vec<u8>,
    pub gei_png_label: GaitClass,
    pub training_accuracy: f64,
}

fn training_data() -> (Vec<Sample>, Vec<Sample>) {
    let dir = tempfile::tempdir().unwrap();
    let opts = DatasetOptions {
        n_subjects: 6,
        seqs_per_class: 2,
        seed: 11,
        ..DatasetOptions::default()
    };
    generate_dataset(dir.path(), &opts).unwrap();
    let full = load_samples(dir.path(), EnergyKind::Gei).unwrap();
    let small = full
        .iter()
        .map(|s| Sample {
            pixels: resample_grid(&s.pixels, ENERGY_SIZE, ENERGY_SIZE, GEI_SIDE, GEI_SIDE),
            ..s.clone()
        })
        .collect();
    (full, small)
}

pub fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let (full, small) = training_data();
        let held_out = full.iter().position(|s| s.subject == 6).unwrap();
        let train_set: Vec<Sample> = small.iter().filter(|s| s.subject != 6).cloned().collect();
        let mut net = Network::build(ModelConfig::with_input(GEI_SIDE, GEI_SIDE), 5).unwrap();
        let cfg = TrainConfig {
            batch_size: 16,
            max_epochs: 30,
            patience: 4,
            min_delta: 1e-3,
            seed: 5,
            ..TrainConfig::default()
        };
        let report = train(&mut net, &train_set, &cfg).unwrap();
        let training_accuracy = report.history.last().map(|e| e.accuracy).unwrap_or(0.0);
        let sample = &full[held_out];
        let gei_png = EnergyImage::from_data(EnergyKind::Gei, sample.pixels.clone())
            .unwrap()
            .to_png_bytes()
            .unwrap();
        Fixture {
            gei: GaitModel::new(Representation::Gei, net),
            sei: GaitModel::new(
                Representation::Sei,
                Network::build(ModelConfig::default(), 9).unwrap(),
            ),
            gei_png,
            gei_png_label: GaitClass::from_index(sample.label).unwrap(),
            training_accuracy,
        }
    })
}

pub fn test_config() -> Config {
    Config {
        session_ttl: Duration::from_secs(600),
        ..Config::default()
    }
}

pub async fn start(config: Config, mailer: Option<Arc<dyn Mailer>>) -> String {
    let f = fixture();
    let state = AppState::new(config, vec![f.gei.clone(), f.sei.clone()], mailer).unwrap();
    let addr = spawn_local(state).await.unwrap();
    format!("http://{addr}")
}

pub fn png_of_frame(frame: &ColorFrame) -> Vec<u8> {
    let img = image::RgbImage::from_raw(frame.width as u32, frame.height as u32, frame.pixels.clone()).unwrap();
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).unwrap();
    out.into_inner()
}

pub fn zip_of(entries: &[(String, Vec<u8>)]) -> Vec<u8> {
    let mut buf = Cursor::new(Vec::new());
    let mut w = zip::ZipWriter::new(&mut buf);
    for (name, data) in entries {
        let opts = zip::write::SimpleFileOptions::default().compression_method(zip::CompressionMethod::Deflated);
        w.start_file(name.as_str(), opts).unwrap();
        w.write_all(data).unwrap();
    }
    w.finish().unwrap();
    buf.into_inner()
}

/// A green-screen walk of `class`, as numbered PNG frames.
pub fn walk_frames(class: GaitClass, severity: Severity, seed: u64) -> (Vec<ColorFrame>, ColorFrame) {
    let seq = generate_sequence_with(
        &preset(class, severity),
        &SequenceOptions {
            n_frames: 64,
            seed,
            jitter: 0.5,
            ..SequenceOptions::default()
        },
    )
    .unwrap();
    (seq.color_frames(2.0, seed + 1), seq.background(2.0, seed + 2))
}

pub fn archive(frames: &[ColorFrame], background: Option<&ColorFrame>) -> Vec<u8> {
    let mut entries: Vec<(String, Vec<u8>)> = frames
        .iter()
        .enumerate()
        .map(|(i, f)| (format!("frame_{i:04}.png"), png_of_frame(f)))
        .collect();
    if let Some(b) = background {
        entries.push(("background.png".into(), png_of_frame(b)));
    }
    zip_of(&entries)
}

pub fn hemiplegic_archive() -> Vec<u8> {
    let (frames, bg) = walk_frames(GaitClass::Hemiplegic, Severity::Sev2, 4242);
    archive(&frames, Some(&bg))
}

/// The same frame repeated: a figure that never moves.
pub fn static_archive() -> Vec<u8> {
    let (frames, bg) = walk_frames(GaitClass::Normal, Severity::Na, 99);
    let still = vec![frames[0].clone(); 40];
    archive(&still, Some(&bg))
}

pub fn form(file: Vec<u8>, representation: &str, fps: Option<&str>) -> reqwest::multipart::Form {
    let mut f = reqwest::multipart::Form::new()
        .part("file", reqwest::multipart::Part::bytes(file).file_name("upload"))
        .text("representation", representation.to_string());
    if let Some(fps) = fps {
        f = f.text("fps", fps.to_string());
    }
    f
}

pub async fn classify(base: &str, file: Vec<u8>, representation: &str) -> reqwest::Response {
    reqwest::Client::new()
        .post(format!("{base}/api/classify"))
        .multipart(form(file, representation, None))
        .send()
        .await
        .unwrap()
}

/// Asserts a JSON error body with the given status and code.
pub async fn expect_error(resp: reqwest::Response, status: u16, code: &str) -> serde_json::Value {
    assert_eq!(resp.status().as_u16(), status);
    assert_eq!(
        resp.headers()[reqwest::header::CONTENT_TYPE].to_str().unwrap(),
        "application/json"
    );
    let body: serde_json::Value = resp.json().await.unwrap();
    assert_eq!(body["error"]["code"], code, "{body}");
    assert!(body["error"]["message"].as_str().is_some_and(|m| !m.is_empty()));
    body
}

pub fn decode_png(bytes: &[u8]) -> image::DynamicImage {
    image::load_from_memory_with_format(bytes, image::ImageFormat::Png).unwrap()
}

/// A minimal SMTP server that accepts every message and keeps its DATA.
pub struct SmtpStub {
    pub addr: SocketAddr,
    pub messages: Arc<Mutex<Vec<String>>>,
}

impl SmtpStub {
    pub fn start() -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let messages = Arc::new(Mutex::new(Vec::new()));
        let sink = messages.clone();
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let sink = sink.clone();
                std::thread::spawn(move || {
                    let mut out = stream.try_clone().unwrap();
                    let mut reader = BufReader::new(stream);
                    let _ = out.write_all(b"220 stub ESMTP\r\n");
                    let mut line = String::new();
                    loop {
                        line.clear();
                        if reader.read_line(&mut line).unwrap_or(0) == 0 {
                            break;
                        }
                        let cmd = line.trim_end().to_ascii_uppercase();
                        if cmd.starts_with("EHLO") || cmd.starts_with("HELO") {
                            let _ = out.write_all(b"250 stub\r\n");
                        } else if cmd.starts_with("DATA") {
                            let _ = out.write_all(b"354 go ahead\r\n");
                            let mut data = String::new();
                            loop {
                                line.clear();
                                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == ".\r\n" {
                                    break;
                                }
                                data.push_str(&line);
                            }
                            sink.lock().unwrap().push(data);
                            let _ = out.write_all(b"250 queued\r\n");
                        } else if cmd.starts_with("QUIT") {
                            let _ = out.write_all(b"221 bye\r\n");
                            break;
                        } else {
                            let _ = out.write_all(b"250 ok\r\n");
                        }
                    }
                });
            }
        });
        Self { addr, messages }
    }

    pub fn url(&self) -> String {
        format!("smtp://{}", self.addr)
    }
}
