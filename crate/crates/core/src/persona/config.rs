use std::path::Path;
use std::sync::Arc;

use arc_swap::ArcSwap;
use serde::{Deserialize, Serialize};

use super::PersonaError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaConfig {
    #[serde(rename = "PersonaName")]
    pub persona_name: String,
    #[serde(rename = "Description")]
    pub description: String,
    #[serde(rename = "SystemPrompt")]
    pub system_prompt: String,
    #[serde(rename = "VoiceType")]
    pub voice_type: String,
    #[serde(rename = "SpeedRatio")]
    pub speed_ratio: f64,
    #[serde(rename = "PitchRatio")]
    pub pitch_ratio: f64,
    #[serde(rename = "PromptT1_FirstPlay")]
    pub prompt_t1_first_play: String,
    #[serde(rename = "PromptT1_Transition")]
    pub prompt_t1_transition: String,
    #[serde(rename = "PromptT2_Empathy")]
    pub prompt_t2_empathy: String,
    #[serde(rename = "PromptT3_Story")]
    pub prompt_t3_story: String,
    #[serde(rename = "PromptT4_Outro")]
    pub prompt_t4_outro: String,
}

fn non_empty(field: &'static str, v: &str) -> Result<(), PersonaError> {
    if v.trim().is_empty() {
        return Err(PersonaError::Invalid {
            field,
            reason: "must be non-empty",
        });
    }
    Ok(())
}

fn positive(field: &'static str, v: f64) -> Result<(), PersonaError> {
    if !(v.is_finite() && v > 0.0) {
        return Err(PersonaError::Invalid {
            field,
            reason: "must be a positive finite ratio",
        });
    }
    Ok(())
}

impl PersonaConfig {
    pub fn validate(&self) -> Result<(), PersonaError> {
        non_empty("PersonaName", &self.persona_name)?;
        non_empty("PromptT1_FirstPlay", &self.prompt_t1_first_play)?;
        non_empty("PromptT1_Transition", &self.prompt_t1_transition)?;
        non_empty("PromptT2_Empathy", &self.prompt_t2_empathy)?;
        non_empty("PromptT3_Story", &self.prompt_t3_story)?;
        non_empty("PromptT4_Outro", &self.prompt_t4_outro)?;
        positive("SpeedRatio", self.speed_ratio)?;
        positive("PitchRatio", self.pitch_ratio)?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("persona serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PersonaError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load_file(path: impl AsRef<Path>) -> Result<Self, PersonaError> {
        load_persona(&std::fs::read_to_string(path)?)
    }
}

/// Parses and validates a persona document. Missing fields are rejected.
pub fn load_persona(json: &str) -> Result<PersonaConfig, PersonaError> {
    let cfg: PersonaConfig = serde_json::from_str(json)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Names of the personas compiled into the crate.
pub const BUNDLED_PERSONAS: [&str; 2] = ["shiguang", "suwanli"];

pub fn bundled_persona(name: &str) -> Result<PersonaConfig, PersonaError> {
    let text = match name.trim_end_matches(".json") {
        "shiguang" => include_str!("../../personas/shiguang.json"),
        "suwanli" => include_str!("../../personas/suwanli.json"),
        other => return Err(PersonaError::UnknownPersona(other.to_string())),
    };
    load_persona(text)
}

/// The active persona. Readers get a consistent `Arc` snapshot; a swap
/// replaces the pointer in one atomic store.
#[derive(Debug)]
pub struct PersonaStore {
    active: ArcSwap<PersonaConfig>,
}

impl PersonaStore {
    pub fn new(initial: PersonaConfig) -> Result<Self, PersonaError> {
        initial.validate()?;
        Ok(Self {
            active: ArcSwap::from_pointee(initial),
        })
    }

    pub fn current(&self) -> Arc<PersonaConfig> {
        self.active.load_full()
    }

    /// Replaces the active persona; an invalid config leaves it unchanged.
    pub fn hot_swap(&self, next: PersonaConfig) -> Result<(), PersonaError> {
        next.validate()?;
        self.active.store(Arc::new(next));
        Ok(())
    }

    pub fn hot_swap_json(&self, json: &str) -> Result<(), PersonaError> {
        self.hot_swap(load_persona(json)?)
    }

    pub fn hot_swap_file(&self, path: impl AsRef<Path>) -> Result<(), PersonaError> {
        self.hot_swap(PersonaConfig::load_file(path)?)
    }
}
