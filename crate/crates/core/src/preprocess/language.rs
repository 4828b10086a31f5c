//! Character-trigram language identification.
//!
//! The bundled detector scores text against per-language trigram
//! frequency tables built from short reference passages (see `data/lang`).
//! Scoring is multinomial naive Bayes with additive smoothing; confidence is
//! the posterior mass of the winning language.

use std::collections::HashMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub tag: String,
    pub confidence: f64,
}

impl Detection {
    pub fn undetermined() -> Self {
        Detection {
            tag: "und".into(),
            confidence: 0.0,
        }
    }
}

pub trait LanguageDetector: Send + Sync {
    /// `text` is non-empty after trimming.
    fn detect(&self, text: &str) -> Detection;
}

const PROFILES: &[(&str, &str)] = &[
    ("en", include_str!("../../data/lang/en.txt")),
    ("de", include_str!("../../data/lang/de.txt")),
    ("fr", include_str!("../../data/lang/fr.txt")),
    ("es", include_str!("../../data/lang/es.txt")),
    ("it", include_str!("../../data/lang/it.txt")),
    ("pt", include_str!("../../data/lang/pt.txt")),
    ("nl", include_str!("../../data/lang/nl.txt")),
    ("sv", include_str!("../../data/lang/sv.txt")),
    ("da", include_str!("../../data/lang/da.txt")),
    ("pl", include_str!("../../data/lang/pl.txt")),
    ("tr", include_str!("../../data/lang/tr.txt")),
    ("ru", include_str!("../../data/lang/ru.txt")),
];

struct Profile {
    tag: &'static str,
    counts: HashMap<[char; 3], u32>,
    total: f64,
}

#[derive(Default)]
pub struct TrigramDetector {
    _private: (),
}

impl TrigramDetector {
    pub fn new() -> Self {
        TrigramDetector::default()
    }

    pub fn languages(&self) -> Vec<&'static str> {
        profiles().iter().map(|p| p.tag).collect()
    }
}

fn profiles() -> &'static [Profile] {
    static CELL: OnceLock<Vec<Profile>> = OnceLock::new();
    CELL.get_or_init(|| {
        PROFILES
            .iter()
            .map(|(tag, text)| {
                let mut counts = HashMap::new();
                let mut total = 0.0;
                for g in trigrams(text) {
                    *counts.entry(g).or_insert(0) += 1;
                    total += 1.0;
                }
                Profile { tag, counts, total }
            })
            .collect()
    })
}

fn is_supported_script(c: char) -> bool {
    c.is_ascii_alphabetic()
        || matches!(c, '\u{00C0}'..='\u{024F}')
        || matches!(c, '\u{0400}'..='\u{04FF}')
}

/// Space-padded trigrams of every word made of supported-script letters.
fn trigrams(text: &str) -> Vec<[char; 3]> {
    let mut out = Vec::new();
    for word in text.split(|c: char| !c.is_alphabetic()) {
        if word.is_empty() || !word.chars().all(is_supported_script) {
            continue;
        }
        let mut chars = vec![' '];
        chars.extend(word.chars().flat_map(char::to_lowercase));
        chars.push(' ');
        out.extend(chars.windows(3).map(|w| [w[0], w[1], w[2]]));
    }
    out
}

impl LanguageDetector for TrigramDetector {
    fn detect(&self, text: &str) -> Detection {
        let grams = trigrams(text);
        if grams.is_empty() {
            return Detection::undetermined();
        }
        // Smoothing mass spread over an assumed trigram space.
        const SMOOTH: f64 = 0.5;
        const SPACE: f64 = 20_000.0;
        let scores: Vec<f64> = profiles()
            .iter()
            .map(|p| {
                let denom = (p.total + SMOOTH * SPACE).ln();
                grams
                    .iter()
                    .map(|g| {
                        let c = p.counts.get(g).copied().unwrap_or(0) as f64;
                        (c + SMOOTH).ln() - denom
                    })
                    .sum()
            })
            .collect();
        let (best, max) = scores
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, s)| if s > acc.1 { (i, s) } else { acc });
        let mass: f64 = scores.iter().map(|s| (s - max).exp()).sum();
        Detection {
            tag: profiles()[best].tag.into(),
            confidence: 1.0 / mass,
        }
    }
}

/// Detects the language of `text` with the bundled detector.
pub fn detect_language(text: &str) -> Result<Detection> {
    if text.trim().is_empty() {
        return Err(Error::InvalidArgument("language detection needs non-empty text".into()));
    }
    Ok(TrigramDetector::new().detect(text))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn english_review() {
        let d = detect_language("the graphics are amazing and immersive").unwrap();
        assert_eq!(d.tag, "en");
        assert!(d.confidence > 0.5 && d.confidence <= 1.0);
    }

    #[test]
    fn german_review_is_not_english() {
        let d = detect_language("das Spiel ist wunderbar und macht Spaß").unwrap();
        assert_ne!(d.tag, "en");
        assert_eq!(d.tag, "de");
    }

    #[test]
    fn other_languages() {
        let cases = [
            ("le jeu est vraiment génial mais il y a trop de bogues", "fr"),
            ("el juego es muy divertido pero tiene muchos errores", "es"),
            ("il gioco è bellissimo ma ci sono troppi errori", "it"),
            ("игра очень интересная но много ошибок", "ru"),
            ("het spel is echt leuk maar er zijn te veel fouten", "nl"),
        ];
        for (text, tag) in cases {
            assert_eq!(detect_language(text).unwrap().tag, tag, "{text}");
        }
    }

    #[test]
    fn empty_is_rejected() {
        assert!(detect_language("").is_err());
        assert!(detect_language("   ").is_err());
    }

    #[test]
    fn unknown_script_is_undetermined() {
        let d = detect_language("这个游戏非常好玩").unwrap();
        assert_eq!(d, Detection::undetermined());
        assert_eq!(detect_language("12345 !!!").unwrap().tag, "und");
    }

    #[test]
    fn bundles_at_least_ten_languages() {
        assert!(TrigramDetector::new().languages().len() >= 10);
    }
}
