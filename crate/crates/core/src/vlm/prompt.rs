use base64::Engine;
use image::codecs::jpeg::JpegEncoder;
use image::RgbImage;
use serde_json::{json, Value};

use super::{ChunkFrame, ChunkSample, SceneProfile, VlmConfig};

pub const PREVIOUS_OPEN: &str = "<previous_moment>";
pub const PREVIOUS_CLOSE: &str = "</previous_moment>";

const VEHICLE_CLAUSE: &str =
    "Vehicle anomalies count as DANGER: crashes, accidents, a vehicle striking a person, or vehicles driving into pedestrians.";

const RESPONSE_FORMAT: &str = "Reply with exactly one JSON object and nothing else: \
{\"level\": \"SAFE\" | \"WARNING\" | \"DANGER\", \"summary\": \"<one or two sentences describing what is happening>\"}";

fn scene_text(profile: SceneProfile) -> String {
    let base = "You are a safety monitor watching a fixed surveillance camera. \
DANGER means violence between people (fighting, punching, kicking, pushing someone down) or a weapon. \
WARNING means a person falling, collapsing, lying motionless, or behavior that may escalate.";
    let scene = match profile {
        SceneProfile::Indoor => format!(
            "{base} The camera is indoors (corridor, store, or office). Also treat a person collapsing near stairs or doors as WARNING."
        ),
        SceneProfile::OutdoorIntersection => format!(
            "{base} The camera overlooks a road intersection. {VEHICLE_CLAUSE} Also flag pedestrians in the roadway against traffic as WARNING."
        ),
        SceneProfile::OutdoorPark => format!(
            "{base} The camera overlooks a park. This scene has no road traffic, so you will not look for vehicles. \
Running, playing, and exercising are normal and SAFE."
        ),
        SceneProfile::Generic => format!("{base} {VEHICLE_CLAUSE}"),
    };
    format!("{scene} Everything else is SAFE.")
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptPayload {
    pub chunk_index: u64,
    pub system: String,
    /// OpenAI-style user content parts, text and `image_url` interleaved.
    pub content: Vec<Value>,
    pub context_count: usize,
    pub action_count: usize,
}

impl PromptPayload {
    pub fn messages(&self) -> Value {
        json!([
            {"role": "system", "content": self.system},
            {"role": "user", "content": self.content},
        ])
    }

    pub fn request_body(&self, cfg: &VlmConfig) -> Value {
        json!({
            "model": cfg.model,
            "messages": self.messages(),
            "max_tokens": cfg.max_tokens,
            "temperature": cfg.temperature,
            "top_p": cfg.top_p,
        })
    }

    /// All text parts joined by newlines, system text first.
    pub fn text(&self) -> String {
        std::iter::once(self.system.as_str())
            .chain(self.content.iter().filter_map(|p| p.get("text").and_then(Value::as_str)))
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn image_count(&self) -> usize {
        self.content.iter().filter(|p| p["type"] == "image_url").count()
    }
}

pub fn jpeg_data_url(img: &RgbImage, quality: u8) -> String {
    let mut buf = Vec::new();
    JpegEncoder::new_with_quality(&mut buf, quality)
        .encode_image(img)
        .expect("in-memory jpeg encoding of an RGB buffer");
    format!("data:image/jpeg;base64,{}", base64::engine::general_purpose::STANDARD.encode(buf))
}

fn push_frames(content: &mut Vec<Value>, frames: &[ChunkFrame], quality: u8) {
    for f in frames {
        content.push(json!({"type": "text", "text": format!("t={:.2}s", f.ts_ms as f64 / 1000.0)}));
        content.push(json!({"type": "image_url", "image_url": {"url": jpeg_data_url(&f.image, quality)}}));
    }
}

pub fn build_prompt(chunk: &ChunkSample, previous_summary: Option<&str>, cfg: &VlmConfig) -> PromptPayload {
    let mut content = Vec::new();
    if cfg.memory_loop {
        if let Some(prev) = previous_summary {
            content.push(json!({
                "type": "text",
                "text": format!("Summary of the previous moment:\n{PREVIOUS_OPEN}\n{prev}\n{PREVIOUS_CLOSE}"),
            }));
        }
    }
    if !chunk.context_frames.is_empty() {
        content.push(json!({
            "type": "text",
            "text": format!(
                "Context: {} earlier frames sampled at {} FPS, oldest first.",
                chunk.context_frames.len(),
                cfg.history_fps
            ),
        }));
        push_frames(&mut content, &chunk.context_frames, cfg.jpeg_quality);
    }
    content.push(json!({
        "type": "text",
        "text": format!(
            "Action: the last {} s as {} frames at {} FPS, oldest first. Judge this window.",
            cfg.chunk_duration_sec,
            chunk.action_frames.len(),
            cfg.recent_fps
        ),
    }));
    push_frames(&mut content, &chunk.action_frames, cfg.jpeg_quality);
    content.push(json!({"type": "text", "text": RESPONSE_FORMAT}));
    PromptPayload {
        chunk_index: chunk.chunk_index,
        system: scene_text(cfg.scene_profile),
        content,
        context_count: chunk.context_frames.len(),
        action_count: chunk.action_frames.len(),
    }
}
