//! Keyword-routed quick reactions to danmaku.
//!
//! Rules are tried in order and the first rule with a matching keyword wins.
//! A cooldown (one global timer by default) rate-limits fires; comments that
//! match nothing never touch it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{EventKind, LiveEvent};

#[derive(Debug, Error)]
pub enum ReactionError {
    #[error("reaction rules JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("rule {0} has no keywords")]
    NoKeywords(usize),
    #[error("rule {0} has an empty template")]
    EmptyTemplate(usize),
    #[error("cooldown window must be >= 0, got {0}")]
    BadWindow(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Technical,
    Emotional,
    Cocreation,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Technical => "technical",
            Category::Emotional => "emotional",
            Category::Cocreation => "cocreation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReactionMode {
    /// Template text goes straight to TTS.
    StaticSpeech,
    /// Template is an LLM prompt; the reply is spoken.
    LlmEmpathy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactionRule {
    pub category: Category,
    pub keywords: Vec<String>,
    pub mode: ReactionMode,
    /// May contain `{user}` and `{content}`.
    pub template: String,
}

impl ReactionRule {
    fn matches(&self, lowered: &str) -> bool {
        self.keywords.iter().any(|k| lowered.contains(&k.to_ascii_lowercase()))
    }
}

pub fn default_rules() -> Vec<ReactionRule> {
    let rule = |category, keywords: &[&str], mode, template: &str| ReactionRule {
        category,
        keywords: keywords.iter().map(|s| s.to_string()).collect(),
        mode,
        template: template.to_string(),
    };
    vec![
        rule(
            Category::Technical,
            &["怎么写", "suno", "AI"],
            ReactionMode::StaticSpeech,
            "看到{user}问怎么做的。我用 Suno 写旋律，歌词是自己一句句改出来的，下播后可以在粉丝群里聊细节。",
        ),
        rule(
            Category::Emotional,
            &["加油", "不容易", "坚持"],
            ReactionMode::LlmEmpathy,
            "弹幕用户{user}在鼓励你：{content}。请用一两句真诚、不煽情的话回应这位朋友。",
        ),
        rule(
            Category::Cocreation,
            &["写一首", "定制", "提词"],
            ReactionMode::StaticSpeech,
            "谢谢{user}的提议！把你想写的故事发在评论区，下一期我挑一个做成歌。",
        ),
    ]
}

pub fn load_rules(json: &str) -> Result<Vec<ReactionRule>, ReactionError> {
    let rules: Vec<ReactionRule> = serde_json::from_str(json)?;
    validate_rules(&rules)?;
    Ok(rules)
}

pub fn validate_rules(rules: &[ReactionRule]) -> Result<(), ReactionError> {
    for (i, r) in rules.iter().enumerate() {
        if r.keywords.is_empty() || r.keywords.iter().any(|k| k.is_empty()) {
            return Err(ReactionError::NoKeywords(i));
        }
        if r.template.trim().is_empty() {
            return Err(ReactionError::EmptyTemplate(i));
        }
    }
    Ok(())
}

/// Index of the first rule matching `content`, ASCII case-insensitively.
pub fn classify_rule(content: &str, rules: &[ReactionRule]) -> Option<usize> {
    let lowered = content.to_ascii_lowercase();
    rules.iter().position(|r| r.matches(&lowered))
}

pub fn classify(content: &str, rules: &[ReactionRule]) -> Option<Category> {
    classify_rule(content, rules).map(|i| rules[i].category)
}

pub fn render_reaction(template: &str, user: &str, content: &str) -> String {
    let mut out = String::with_capacity(template.len() + user.len() + content.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        if let Some(after) = tail.strip_prefix("{user}") {
            out.push_str(user);
            rest = after;
        } else if let Some(after) = tail.strip_prefix("{content}") {
            out.push_str(content);
            rest = after;
        } else {
            out.push('{');
            rest = &tail[1..];
        }
    }
    out.push_str(rest);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CooldownScope {
    #[default]
    Global,
    PerCategory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReactionConfig {
    pub rules: Vec<ReactionRule>,
    pub scope: CooldownScope,
    /// Seconds.
    pub window: f64,
}

impl Default for ReactionConfig {
    fn default() -> Self {
        Self {
            rules: default_rules(),
            scope: CooldownScope::Global,
            window: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome")]
pub enum ReactionOutcome {
    Fired {
        category: Category,
        mode: ReactionMode,
        /// Speech text for static rules, the LLM prompt for empathy rules.
        text: String,
    },
    CoolingDown {
        category: Category,
    },
    NoMatch,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EngagementCounters {
    pub fired_by_category: BTreeMap<Category, u64>,
    pub suppressed: u64,
    pub no_match: u64,
}

impl EngagementCounters {
    pub fn fired_total(&self) -> u64 {
        self.fired_by_category.values().sum()
    }
}

#[derive(Debug, Clone)]
pub struct ReactionEngine {
    cfg: ReactionConfig,
    last_fire: BTreeMap<Option<Category>, f64>,
    counters: EngagementCounters,
}

impl ReactionEngine {
    pub fn new(cfg: ReactionConfig) -> Result<Self, ReactionError> {
        validate_rules(&cfg.rules)?;
        if !(cfg.window.is_finite() && cfg.window >= 0.0) {
            return Err(ReactionError::BadWindow(cfg.window));
        }
        Ok(Self {
            cfg,
            last_fire: BTreeMap::new(),
            counters: EngagementCounters::default(),
        })
    }

    pub fn config(&self) -> &ReactionConfig {
        &self.cfg
    }

    pub fn counters(&self) -> &EngagementCounters {
        &self.counters
    }

    /// Non-danmaku events are ignored as `NoMatch` without being counted.
    pub fn maybe_react(&mut self, event: &LiveEvent, now: f64) -> ReactionOutcome {
        if event.kind != EventKind::Danmaku {
            return ReactionOutcome::NoMatch;
        }
        let Some(idx) = classify_rule(&event.content, &self.cfg.rules) else {
            self.counters.no_match += 1;
            return ReactionOutcome::NoMatch;
        };
        let rule = &self.cfg.rules[idx];
        let key = match self.cfg.scope {
            CooldownScope::Global => None,
            CooldownScope::PerCategory => Some(rule.category),
        };
        if let Some(&last) = self.last_fire.get(&key) {
            if now - last < self.cfg.window {
                self.counters.suppressed += 1;
                return ReactionOutcome::CoolingDown {
                    category: rule.category,
                };
            }
        }
        self.last_fire.insert(key, now);
        *self.counters.fired_by_category.entry(rule.category).or_default() += 1;
        ReactionOutcome::Fired {
            category: rule.category,
            mode: rule.mode,
            text: render_reaction(&rule.template, &event.user, &event.content),
        }
    }
}
