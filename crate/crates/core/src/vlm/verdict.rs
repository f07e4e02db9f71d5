use serde::{Deserialize, Serialize};

use crate::risk::RiskLevel;

pub const SUMMARY_LIMIT: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ParseMode {
    Structured,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VlmVerdict {
    pub level: RiskLevel,
    pub summary: String,
    pub raw_response: String,
    pub chunk_index: u64,
    pub parse_mode: ParseMode,
}

impl VlmVerdict {
    pub fn unavailable(chunk_index: u64) -> Self {
        VlmVerdict {
            level: RiskLevel::Safe,
            summary: "inference unavailable".into(),
            raw_response: String::new(),
            chunk_index,
            parse_mode: ParseMode::Fallback,
        }
    }
}

const DANGER_WORDS: &[&str] = &[
    "danger", "fight", "fighting", "punch", "punching", "kick", "kicking", "assault", "attack", "attacking",
    "violence", "violent", "weapon", "knife", "gun", "stab", "crash", "collision", "accident", "hit by",
];

const WARNING_WORDS: &[&str] = &[
    "warning", "fall", "falling", "fell", "fallen", "collapse", "stumble", "trip", "push", "pushing", "shove",
    "suspicious", "unsafe", "risk", "argument", "aggressive", "caution",
];

const NEGATIONS: &[&str] = &["no", "not", "without", "none", "never", "nothing", "neither", "nor"];

fn level_from_str(s: &str) -> Option<RiskLevel> {
    match s.trim().to_ascii_uppercase().as_str() {
        "SAFE" => Some(RiskLevel::Safe),
        "WARNING" => Some(RiskLevel::Warning),
        "DANGER" => Some(RiskLevel::Danger),
        _ => None,
    }
}

/// Every balanced `{...}` span in `text`, in order of their opening brace.
fn brace_spans(text: &str) -> impl Iterator<Item = &str> {
    let bytes = text.as_bytes();
    (0..bytes.len()).filter(|&i| bytes[i] == b'{').filter_map(move |start| {
        let (mut depth, mut in_str, mut esc) = (0usize, false, false);
        for (j, &b) in bytes.iter().enumerate().skip(start) {
            if in_str {
                match (esc, b) {
                    (true, _) => esc = false,
                    (false, b'\\') => esc = true,
                    (false, b'"') => in_str = false,
                    _ => {}
                }
                continue;
            }
            match b {
                b'"' => in_str = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        return Some(&text[start..=j]);
                    }
                }
                _ => {}
            }
        }
        None
    })
}

fn structured(text: &str) -> Option<(RiskLevel, String)> {
    brace_spans(text).find_map(|span| {
        let v: serde_json::Value = serde_json::from_str(span).ok()?;
        let obj = v.as_object()?;
        let level = obj.iter().find(|(k, _)| k.eq_ignore_ascii_case("level"))?.1.as_str().and_then(level_from_str)?;
        let summary = obj
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case("summary"))
            .and_then(|(_, v)| v.as_str())
            .unwrap_or_default()
            .to_string();
        Some((level, summary))
    })
}

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric() && c != '\'')
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase().replace("n't", " not").trim().to_string())
        .flat_map(|w| w.split(' ').map(str::to_string).collect::<Vec<_>>())
        .collect()
}

/// True if `table` has an un-negated hit. A hit is negated when one of the
/// three preceding words is a negation.
fn keyword_hit(ws: &[String], table: &[&str]) -> bool {
    table.iter().any(|kw| {
        let kw: Vec<&str> = kw.split(' ').collect();
        ws.windows(kw.len()).enumerate().any(|(i, win)| {
            win.iter().zip(&kw).all(|(a, b)| a == b)
                && !ws[i.saturating_sub(3)..i].iter().any(|p| NEGATIONS.contains(&p.as_str()))
        })
    })
}

fn truncate_chars(s: &str, n: usize) -> String {
    s.chars().take(n).collect()
}

pub fn parse_verdict(text: &str) -> (RiskLevel, String, ParseMode) {
    if let Some((level, summary)) = structured(text) {
        return (level, summary, ParseMode::Structured);
    }
    let ws = words(text);
    let level = if keyword_hit(&ws, DANGER_WORDS) {
        RiskLevel::Danger
    } else if keyword_hit(&ws, WARNING_WORDS) {
        RiskLevel::Warning
    } else {
        RiskLevel::Safe
    };
    (level, truncate_chars(text, SUMMARY_LIMIT), ParseMode::Fallback)
}
