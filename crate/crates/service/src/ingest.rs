//! Turning uploaded bytes into pipeline inputs: PNG sniffing, ZIP frame
//! archives, and the optional external decoder for anything else.

use std::io::Read;
use std::path::Path;
use std::process::Command;

use gaitworks_core::gait_repr::{EnergyImage, EnergyKind, PipelineInput, PoseFrame, SilhouetteSequence};
use gaitworks_core::par;
use gaitworks_core::silhouette::{segment_sequence, ColorFrame};
use gaitworks_core::Representation;

use crate::error::ApiError;

const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";
const ZIP_MAGIC: &[u8] = b"PK\x03\x04";
const EMPTY_ZIP_MAGIC: &[u8] = b"PK\x05\x06";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadKind {
    Png,
    Zip,
    Other,
}

pub fn sniff(bytes: &[u8]) -> PayloadKind {
    if bytes.starts_with(PNG_MAGIC) {
        PayloadKind::Png
    } else if bytes.starts_with(ZIP_MAGIC) || bytes.starts_with(EMPTY_ZIP_MAGIC) {
        PayloadKind::Zip
    } else {
        PayloadKind::Other
    }
}

/// The useful members of a frame archive, each sorted by frame number.
#[derive(Debug, Default, Clone)]
pub struct FrameSet {
    pub frames: Vec<(String, Vec<u8>)>,
    pub poses: Vec<(String, Vec<u8>)>,
    pub background: Option<Vec<u8>>,
}

/// Sort key: the last run of digits in the file stem, then the name.
pub fn frame_key(name: &str) -> (u64, String) {
    let stem = name.rsplit('/').next().unwrap_or(name);
    let stem = stem.rsplit_once('.').map_or(stem, |(s, _)| s);
    let digits: String = stem
        .chars()
        .rev()
        .skip_while(|c| !c.is_ascii_digit())
        .take_while(|c| c.is_ascii_digit())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    (digits.parse().unwrap_or(u64::MAX), name.to_string())
}

impl FrameSet {
    fn add(&mut self, name: &str, bytes: Vec<u8>) {
        let base = name.rsplit('/').next().unwrap_or(name);
        if base.starts_with('.') || name.starts_with("__MACOSX") {
            return;
        }
        let lower = base.to_ascii_lowercase();
        if lower == "background.png" {
            self.background = Some(bytes);
        } else if lower.ends_with(".png") {
            self.frames.push((name.to_string(), bytes));
        } else if lower.ends_with(".json") {
            self.poses.push((name.to_string(), bytes));
        }
    }

    fn sort(&mut self) {
        self.frames.sort_by_cached_key(|(n, _)| frame_key(n));
        self.poses.sort_by_cached_key(|(n, _)| frame_key(n));
    }
}

/// Reads a ZIP archive, refusing to inflate more than `max_inflated` bytes.
pub fn read_zip(bytes: &[u8], max_inflated: usize) -> Result<FrameSet, ApiError> {
    let mut archive = zip::ZipArchive::new(std::io::Cursor::new(bytes))
        .map_err(|e| ApiError::malformed(format!("unreadable ZIP archive: {e}")))?;
    let mut set = FrameSet::default();
    let mut total = 0usize;
    for i in 0..archive.len() {
        let mut entry = archive
            .by_index(i)
            .map_err(|e| ApiError::malformed(format!("ZIP entry {i}: {e}")))?;
        if entry.is_dir() {
            continue;
        }
        let name = entry.name().to_string();
        let mut buf = Vec::new();
        let budget = (max_inflated - total) as u64 + 1;
        (&mut entry)
            .take(budget)
            .read_to_end(&mut buf)
            .map_err(|e| ApiError::malformed(format!("ZIP entry {name}: {e}")))?;
        total += buf.len();
        if total > max_inflated {
            return Err(ApiError::too_large(max_inflated));
        }
        set.add(&name, buf);
    }
    set.sort();
    Ok(set)
}

/// Reads the PNG and JSON files of a directory (the decoder's output).
pub fn read_dir(dir: &Path) -> Result<FrameSet, ApiError> {
    let mut set = FrameSet::default();
    let entries = std::fs::read_dir(dir).map_err(|e| ApiError::internal(format!("decoder output: {e}")))?;
    for entry in entries.flatten() {
        let path = entry.path();
        if !path.is_file() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        let bytes = std::fs::read(&path).map_err(|e| ApiError::internal(format!("{name}: {e}")))?;
        set.add(&name, bytes);
    }
    set.sort();
    Ok(set)
}

/// Runs the configured decoder on an opaque upload. The command is run by
/// `sh -c` after substituting `{input}` and `{output}`.
pub fn run_decoder(cmd: &str, bytes: &[u8]) -> Result<FrameSet, ApiError> {
    let work = tempfile::tempdir().map_err(|e| ApiError::internal(format!("decoder workspace: {e}")))?;
    let input = work.path().join("upload.bin");
    let output = work.path().join("frames");
    std::fs::write(&input, bytes).map_err(|e| ApiError::internal(format!("decoder input: {e}")))?;
    std::fs::create_dir(&output).map_err(|e| ApiError::internal(format!("decoder output: {e}")))?;
    let script = cmd
        .replace("{input}", &shell_quote(&input))
        .replace("{output}", &shell_quote(&output));
    let result = Command::new("sh")
        .arg("-c")
        .arg(&script)
        .output()
        .map_err(|e| ApiError::internal(format!("cannot run decoder: {e}")))?;
    if !result.status.success() {
        let stderr = String::from_utf8_lossy(&result.stderr);
        let tail: String = stderr.trim().chars().rev().take(200).collect::<Vec<_>>().into_iter().rev().collect();
        return Err(ApiError::unsupported(format!("the decoder could not read this upload: {tail}")));
    }
    let set = read_dir(&output)?;
    if set.frames.is_empty() {
        return Err(ApiError::unsupported("the decoder produced no frames"));
    }
    Ok(set)
}

fn shell_quote(p: &Path) -> String {
    format!("'{}'", p.to_string_lossy().replace('\'', r"'\''"))
}

fn decode_frame(name: &str, bytes: &[u8], index: usize) -> Result<ColorFrame, ApiError> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| ApiError::malformed(format!("{name}: {e}")))?;
    ColorFrame::from_image(img, index).map_err(|e| ApiError::malformed(format!("{name}: {e}")))
}

fn canvas_from_poses(poses: &[PoseFrame]) -> (usize, usize) {
    let (mut w, mut h) = (1.0f64, 1.0f64);
    for k in poses.iter().flat_map(|p| p.keypoints().iter()).filter(|k| k.is_confident()) {
        w = w.max(k.x + 16.0);
        h = h.max(k.y + 16.0);
    }
    (w.ceil() as usize, h.ceil() as usize)
}

/// Builds the silhouette (GEI) or rasterized-skeleton (SEI) sequence.
pub fn pipeline_input(set: &FrameSet, representation: Representation, fps: f64) -> Result<PipelineInput, ApiError> {
    match representation {
        Representation::Gei => {
            if set.frames.is_empty() {
                return Err(ApiError::malformed("the archive holds no PNG frames"));
            }
            let frames = par::map_range(set.frames.len(), |i| {
                let (name, bytes) = &set.frames[i];
                decode_frame(name, bytes, i)
            })
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
            let background = set
                .background
                .as_ref()
                .map(|b| decode_frame("background.png", b, 0))
                .transpose()?;
            let masks = segment_sequence(&frames, background.as_ref())?;
            Ok(PipelineInput::silhouettes(SilhouetteSequence::new(masks, fps, None)?))
        }
        Representation::Sei => {
            if set.poses.is_empty() {
                return Err(ApiError::malformed("an SEI archive needs one pose JSON file per frame"));
            }
            let poses = set
                .poses
                .iter()
                .map(|(name, bytes)| {
                    serde_json::from_slice::<PoseFrame>(bytes)
                        .map_err(|e| ApiError::malformed(format!("{name}: {e}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let (w, h) = match set.frames.first() {
                Some((name, bytes)) => {
                    let f = decode_frame(name, bytes, 0)?;
                    (f.width, f.height)
                }
                None => canvas_from_poses(&poses),
            };
            Ok(PipelineInput::poses(&poses, w, h, fps, None)?)
        }
    }
}

/// A directly uploaded energy image: 224×224, 8-bit grayscale.
pub fn energy_png(bytes: &[u8], representation: Representation) -> Result<EnergyImage, ApiError> {
    image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| ApiError::malformed(format!("unreadable PNG: {e}")))?;
    EnergyImage::from_png_bytes(EnergyKind::from(representation), bytes)
        .map_err(|e| ApiError::bad_request("invalid_image", e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn zip_of(entries: &[(&str, &[u8])]) -> Vec<u8> {
        let mut buf = std::io::Cursor::new(Vec::new());
        let mut w = zip::ZipWriter::new(&mut buf);
        for (name, data) in entries {
            w.start_file(*name, zip::write::SimpleFileOptions::default()).unwrap();
            w.write_all(data).unwrap();
        }
        w.finish().unwrap();
        buf.into_inner()
    }

    #[test]
    fn sniffing() {
        assert_eq!(sniff(b"\x89PNG\r\n\x1a\nrest"), PayloadKind::Png);
        assert_eq!(sniff(&zip_of(&[("a.png", b"x")])), PayloadKind::Zip);
        assert_eq!(sniff(&zip_of(&[])), PayloadKind::Zip);
        assert_eq!(sniff(b"RIFF....AVI "), PayloadKind::Other);
        assert_eq!(sniff(b""), PayloadKind::Other);
    }

    #[test]
    fn frames_sort_numerically() {
        let z = zip_of(&[
            ("seq/frame_10.png", b"c"),
            ("seq/frame_2.png", b"b"),
            ("seq/frame_1.png", b"a"),
            ("seq/background.png", b"bg"),
            ("seq/notes.txt", b"ignored"),
            ("__MACOSX/seq/._frame_1.png", b"junk"),
            ("seq/pose_2.json", b"p2"),
            ("seq/pose_1.json", b"p1"),
        ]);
        let set = read_zip(&z, 1 << 20).unwrap();
        let names: Vec<&[u8]> = set.frames.iter().map(|(_, b)| b.as_slice()).collect();
        assert_eq!(names, [b"a", b"b", b"c"]);
        assert_eq!(set.background.as_deref(), Some(&b"bg"[..]));
        assert_eq!(set.poses[0].1, b"p1");
    }

    #[test]
    fn inflation_is_bounded() {
        let big = vec![0u8; 10_000];
        let z = zip_of(&[("a.png", &big), ("b.png", &big)]);
        assert!(read_zip(&z, 15_000).is_err());
        assert!(read_zip(&z, 20_000).is_ok());
    }

    #[test]
    fn garbage_zip_is_malformed() {
        let mut z = zip_of(&[("a.png", b"x")]);
        z.truncate(12);
        assert_eq!(read_zip(&z, 1 << 20).unwrap_err().code, "malformed_payload");
    }

    #[test]
    fn frame_keys() {
        assert_eq!(frame_key("f0007.png").0, 7);
        assert_eq!(frame_key("dir9/x.png").0, u64::MAX);
        assert!(frame_key("a2.png") < frame_key("a10.png"));
    }

    #[test]
    fn decoder_output_is_collected() {
        let cmd = "printf x > {output}/frame_2.png && cp {input} {output}/frame_1.png";
        let set = run_decoder(cmd, b"raw").unwrap();
        assert_eq!(set.frames.len(), 2);
        assert_eq!(set.frames[0].1, b"raw");
        let err = run_decoder("echo nope >&2; exit 3", b"raw").unwrap_err();
        assert_eq!(err.status.as_u16(), 415);
        assert!(err.message.contains("nope"));
    }

    #[test]
    fn color_png_is_not_an_energy_image() {
        let img = image::RgbImage::new(224, 224);
        let mut bytes = Vec::new();
        img.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png).unwrap();
        assert_eq!(energy_png(&bytes, Representation::Gei).unwrap_err().code, "invalid_image");
        let small = image::GrayImage::new(100, 100);
        let mut bytes = Vec::new();
        small.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png).unwrap();
        assert_eq!(energy_png(&bytes, Representation::Gei).unwrap_err().code, "invalid_image");
    }
}
