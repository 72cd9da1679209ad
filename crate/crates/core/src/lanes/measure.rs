/// Text width in pixels for lane scheduling. Real-font backends implement
/// this; [`GlyphWidthModel`] is the deterministic default.
pub trait TextMeasure: Send + Sync {
    fn width(&self, text: &str) -> f64;
}

/// Two-tier glyph model: CJK and fullwidth code points are
/// `glyph_width * wide_factor` wide, everything else `glyph_width`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlyphWidthModel {
    pub glyph_width: f64,
    pub wide_factor: f64,
}

impl GlyphWidthModel {
    pub fn new(glyph_width: f64, wide_factor: f64) -> Self {
        Self {
            glyph_width,
            wide_factor,
        }
    }
}

impl TextMeasure for GlyphWidthModel {
    fn width(&self, text: &str) -> f64 {
        text.chars()
            .map(|c| {
                if is_wide(c) {
                    self.glyph_width * self.wide_factor
                } else {
                    self.glyph_width
                }
            })
            .sum()
    }
}

const WIDE_RANGES: &[(u32, u32)] = &[
    (0x1100, 0x115F),   // Hangul Jamo
    (0x2E80, 0x303E),   // CJK radicals, punctuation
    (0x3041, 0x33FF),   // kana, CJK compatibility
    (0x3400, 0x4DBF),   // CJK ext A
    (0x4E00, 0x9FFF),   // CJK unified
    (0xA000, 0xA4CF),   // Yi
    (0xAC00, 0xD7A3),   // Hangul syllables
    (0xF900, 0xFAFF),   // CJK compatibility ideographs
    (0xFE30, 0xFE4F),   // CJK compatibility forms
    (0xFF00, 0xFF60),   // fullwidth forms
    (0xFFE0, 0xFFE6),   // fullwidth signs
    (0x20000, 0x2FFFD), // CJK ext B..
    (0x30000, 0x3FFFD),
];

pub fn is_wide(c: char) -> bool {
    let cp = c as u32;
    WIDE_RANGES.iter().any(|&(lo, hi)| (lo..=hi).contains(&cp))
}
