use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// The thirteen emotion categories.
///
/// Declaration order is alphabetical with `NoEmotion` last; it is the order of
/// every probability vector and the tie-break order of every argmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmotionCategory {
    Anger,
    Boredom,
    Disgust,
    Fear,
    Guilt,
    Joy,
    Pride,
    Relief,
    Sadness,
    Shame,
    Surprise,
    Trust,
    NoEmotion,
}

impl EmotionCategory {
    pub const COUNT: usize = 13;

    pub const ALL: [EmotionCategory; Self::COUNT] = [
        EmotionCategory::Anger,
        EmotionCategory::Boredom,
        EmotionCategory::Disgust,
        EmotionCategory::Fear,
        EmotionCategory::Guilt,
        EmotionCategory::Joy,
        EmotionCategory::Pride,
        EmotionCategory::Relief,
        EmotionCategory::Sadness,
        EmotionCategory::Shame,
        EmotionCategory::Surprise,
        EmotionCategory::Trust,
        EmotionCategory::NoEmotion,
    ];

    /// Label order used inside the classification prompt text.
    pub const PROMPT_ORDER: [EmotionCategory; Self::COUNT] = [
        EmotionCategory::Anger,
        EmotionCategory::Disgust,
        EmotionCategory::Fear,
        EmotionCategory::Guilt,
        EmotionCategory::Joy,
        EmotionCategory::Sadness,
        EmotionCategory::Shame,
        EmotionCategory::Pride,
        EmotionCategory::Boredom,
        EmotionCategory::Surprise,
        EmotionCategory::Trust,
        EmotionCategory::Relief,
        EmotionCategory::NoEmotion,
    ];

    /// Position in [`EmotionCategory::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Surface word used in prompts, records and labels.
    pub fn as_str(self) -> &'static str {
        match self {
            EmotionCategory::Anger => "anger",
            EmotionCategory::Boredom => "boredom",
            EmotionCategory::Disgust => "disgust",
            EmotionCategory::Fear => "fear",
            EmotionCategory::Guilt => "guilt",
            EmotionCategory::Joy => "joy",
            EmotionCategory::Pride => "pride",
            EmotionCategory::Relief => "relief",
            EmotionCategory::Sadness => "sadness",
            EmotionCategory::Shame => "shame",
            EmotionCategory::Surprise => "surprise",
            EmotionCategory::Trust => "trust",
            EmotionCategory::NoEmotion => "no-emotion",
        }
    }
}

impl fmt::Display for EmotionCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EmotionCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let needle = s.trim().to_ascii_lowercase().replace(['_', ' '], "-");
        Self::ALL
            .into_iter()
            .find(|e| e.as_str() == needle)
            .ok_or_else(|| Error::validation("emotion", format!("unknown emotion {s:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_alphabetical_with_no_emotion_last() {
        let names: Vec<_> = EmotionCategory::ALL.iter().map(|e| e.as_str()).collect();
        let mut sorted = names[..12].to_vec();
        sorted.sort();
        assert_eq!(&names[..12], sorted.as_slice());
        assert_eq!(names[12], "no-emotion");
        for (i, e) in EmotionCategory::ALL.iter().enumerate() {
            assert_eq!(e.index(), i);
        }
    }

    #[test]
    fn prompt_order_is_a_permutation() {
        let mut p = EmotionCategory::PROMPT_ORDER.to_vec();
        p.sort();
        assert_eq!(p, EmotionCategory::ALL.to_vec());
    }

    #[test]
    fn parses_and_serializes() {
        assert_eq!("No-Emotion".parse::<EmotionCategory>().unwrap(), EmotionCategory::NoEmotion);
        assert_eq!("no_emotion".parse::<EmotionCategory>().unwrap(), EmotionCategory::NoEmotion);
        assert!("happiness".parse::<EmotionCategory>().is_err());
        assert_eq!(serde_json::to_string(&EmotionCategory::NoEmotion).unwrap(), "\"no-emotion\"");
    }
}
