use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::{PersonaConfig, PersonaError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SongContext {
    pub song_name: String,
    /// Verbatim LRC text; only ever placed into prompts.
    #[serde(default)]
    pub lyrics_lrc: String,
    /// Seconds.
    pub duration: f64,
    /// Session-clock seconds.
    #[serde(default)]
    pub start_time: f64,
    #[serde(default)]
    pub is_first_song: bool,
}

impl SongContext {
    pub fn new(song_name: impl Into<String>, duration: f64, start_time: f64, is_first_song: bool) -> Self {
        Self {
            song_name: song_name.into(),
            lyrics_lrc: String::new(),
            duration,
            start_time,
            is_first_song,
        }
    }

    pub fn with_lyrics(mut self, lrc: impl Into<String>) -> Self {
        self.lyrics_lrc = lrc.into();
        self
    }

    pub fn validate(&self) -> Result<(), PersonaError> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(PersonaError::Song("duration must be > 0"));
        }
        if !(self.start_time.is_finite() && self.start_time >= 0.0) {
            return Err(PersonaError::Song("start_time must be >= 0"));
        }
        Ok(())
    }

    pub fn end_time(&self) -> f64 {
        self.start_time + self.duration
    }
}

const TIME_FORMAT: &str = "%Y-%m-%d %H:%M";

/// Single left-to-right pass: known `{Token}`s are substituted, anything
/// else (including braces inside substituted values) is copied verbatim.
pub fn render_template(template: &str, ctx: &SongContext, persona: &PersonaConfig, now: NaiveDateTime) -> String {
    let mut out = String::with_capacity(template.len() + ctx.lyrics_lrc.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        let Some(close) = tail.find('}') else {
            out.push_str(tail);
            return out;
        };
        match &tail[1..close] {
            "Time" => out.push_str(&now.format(TIME_FORMAT).to_string()),
            "SongName" => out.push_str(&ctx.song_name),
            "Lrc" => out.push_str(&ctx.lyrics_lrc),
            "AnchorName" => out.push_str(&persona.persona_name),
            _ => {
                // unknown token: emit the brace and rescan after it so a
                // nested "{{SongName}" still resolves the inner token
                out.push('{');
                rest = &tail[1..];
                continue;
            }
        }
        rest = &tail[close + 1..];
    }
    out.push_str(rest);
    out
}
