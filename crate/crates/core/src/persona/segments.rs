use serde::{Deserialize, Serialize};

use super::{PersonaConfig, PersonaError, SongContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Segment {
    T1a,
    T1b,
    T2,
    T3,
    T4,
}

impl Segment {
    pub const ALL: [Segment; 5] = [Segment::T1a, Segment::T1b, Segment::T2, Segment::T3, Segment::T4];

    pub fn as_str(self) -> &'static str {
        match self {
            Segment::T1a => "T1a",
            Segment::T1b => "T1b",
            Segment::T2 => "T2",
            Segment::T3 => "T3",
            Segment::T4 => "T4",
        }
    }

    /// Progress window as fractions of song duration. T1 runs from song
    /// start until the T2 window opens.
    pub fn window(self) -> (f64, f64) {
        match self {
            Segment::T1a | Segment::T1b => (0.0, 0.15),
            Segment::T2 => (0.15, 0.25),
            Segment::T3 => (0.45, 0.55),
            Segment::T4 => (0.85, 0.95),
        }
    }

    pub fn target_chars(self) -> u32 {
        match self {
            Segment::T1a => 80,
            Segment::T1b => 60,
            Segment::T2 => 100,
            Segment::T3 => 80,
            Segment::T4 => 80,
        }
    }

    /// (input, output) token budgets.
    pub fn token_budget(self) -> (u32, u32) {
        match self {
            Segment::T1a => (180, 80),
            Segment::T1b => (130, 60),
            Segment::T2 => (220, 100),
            Segment::T3 => (200, 80),
            Segment::T4 => (210, 80),
        }
    }

    pub fn template(self, p: &PersonaConfig) -> &str {
        match self {
            Segment::T1a => &p.prompt_t1_first_play,
            Segment::T1b => &p.prompt_t1_transition,
            Segment::T2 => &p.prompt_t2_empathy,
            Segment::T3 => &p.prompt_t3_story,
            Segment::T4 => &p.prompt_t4_outro,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SegmentState {
    Pending,
    Inflight,
    Spoken,
    Skipped,
}

/// Trigger positions as fractions of song duration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentConfig {
    pub t2_trigger: f64,
    pub t3_trigger: f64,
    pub t4_trigger: f64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            t2_trigger: 0.20,
            t3_trigger: 0.50,
            t4_trigger: 0.90,
        }
    }
}

impl SegmentConfig {
    pub fn validate(&self) -> Result<(), PersonaError> {
        for (segment, got) in [
            (Segment::T2, self.t2_trigger),
            (Segment::T3, self.t3_trigger),
            (Segment::T4, self.t4_trigger),
        ] {
            let (lo, hi) = segment.window();
            if !(lo..=hi).contains(&got) {
                return Err(PersonaError::TriggerOutsideWindow { segment, got });
            }
        }
        Ok(())
    }

    fn trigger_fraction(&self, s: Segment) -> f64 {
        match s {
            Segment::T1a | Segment::T1b => 0.0,
            Segment::T2 => self.t2_trigger,
            Segment::T3 => self.t3_trigger,
            Segment::T4 => self.t4_trigger,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentPlan {
    pub segment: Segment,
    /// Session-clock seconds.
    pub trigger_time: f64,
    pub window: (f64, f64),
    /// Session-clock seconds; end of the window.
    pub deadline: f64,
    pub target_chars: u32,
    pub input_token_budget: u32,
    pub output_token_budget: u32,
    pub state: SegmentState,
}

/// The four segments of one song in trigger order.
pub fn plan_segments(ctx: &SongContext, cfg: &SegmentConfig) -> Result<Vec<SegmentPlan>, PersonaError> {
    ctx.validate()?;
    cfg.validate()?;
    let opener = if ctx.is_first_song { Segment::T1a } else { Segment::T1b };
    Ok([opener, Segment::T2, Segment::T3, Segment::T4]
        .into_iter()
        .map(|segment| {
            let window = segment.window();
            let (input, output) = segment.token_budget();
            SegmentPlan {
                segment,
                trigger_time: ctx.start_time + cfg.trigger_fraction(segment) * ctx.duration,
                window,
                deadline: ctx.start_time + window.1 * ctx.duration,
                target_chars: segment.target_chars(),
                input_token_budget: input,
                output_token_budget: output,
                state: SegmentState::Pending,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_song_200s() {
        let plans = plan_segments(&SongContext::new("a", 200.0, 0.0, true), &SegmentConfig::default()).unwrap();
        let expect = [
            (Segment::T1a, 0.0, 30.0),
            (Segment::T2, 40.0, 50.0),
            (Segment::T3, 100.0, 110.0),
            (Segment::T4, 180.0, 190.0),
        ];
        assert_eq!(plans.len(), 4);
        for (p, (seg, trig, dl)) in plans.iter().zip(expect) {
            assert_eq!(p.segment, seg);
            assert!(
                (p.trigger_time - trig).abs() < 1e-9 && (p.deadline - dl).abs() < 1e-9,
                "{p:?}"
            );
        }
        assert_eq!(
            plans.iter().map(|p| p.target_chars).collect::<Vec<_>>(),
            vec![80, 100, 80, 80]
        );
        assert!(plans.iter().all(|p| p.state == SegmentState::Pending));
    }

    #[test]
    fn later_song_uses_transition() {
        let plans = plan_segments(&SongContext::new("b", 150.0, 300.0, false), &SegmentConfig::default()).unwrap();
        assert_eq!(plans[0].segment, Segment::T1b);
        assert_eq!(plans[0].trigger_time, 300.0);
        assert_eq!(plans[0].target_chars, 60);
        assert_eq!(plans[3].trigger_time, 300.0 + 135.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(plan_segments(&SongContext::new("z", 0.0, 0.0, true), &SegmentConfig::default()).is_err());
        let cfg = SegmentConfig {
            t3_trigger: 0.6,
            ..SegmentConfig::default()
        };
        assert!(matches!(
            plan_segments(&SongContext::new("z", 100.0, 0.0, true), &cfg),
            Err(PersonaError::TriggerOutsideWindow {
                segment: Segment::T3,
                ..
            })
        ));
    }
}
