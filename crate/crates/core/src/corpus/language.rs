//! Pluggable language tagging with a small built-in heuristic.

use std::collections::HashSet;
use std::fs;
use std::io;
use std::path::Path;

use crate::analysis::normalize;

pub trait LanguageDetector: Send + Sync {
    /// BCP-47 primary tag, or `None` when unsure.
    fn detect(&self, text: &str) -> Option<String>;
}

pub fn tag_language(text: &str, detector: &dyn LanguageDetector) -> Option<String> {
    detector.detect(text)
}

const BUNDLED: &[(&str, &str)] = &[
    ("de", include_str!("../../data/stopwords/de.txt")),
    ("en", include_str!("../../data/stopwords/en.txt")),
    ("es", include_str!("../../data/stopwords/es.txt")),
    ("fr", include_str!("../../data/stopwords/fr.txt")),
    ("nl", include_str!("../../data/stopwords/nl.txt")),
    ("pt", include_str!("../../data/stopwords/pt.txt")),
];

/// One lowercase word per line; blank lines and `#` comments skipped.
pub fn parse_wordlist(text: &str) -> HashSet<String> {
    text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).map(str::to_lowercase).collect()
}

/// Script ranges first (Hangul, Kana, Han, Cyrillic), then a stopword
/// vote. The vote needs a unique winner with at least `min_hits` hits
/// covering at least `min_ratio` of the tokens.
#[derive(Debug, Clone)]
pub struct HeuristicDetector {
    lists: Vec<(String, HashSet<String>)>,
    pub min_hits: usize,
    pub min_ratio: f64,
}

impl HeuristicDetector {
    pub fn bundled() -> Self {
        Self::new(BUNDLED.iter().map(|(lang, text)| (lang.to_string(), parse_wordlist(text))).collect())
    }

    pub fn new(mut lists: Vec<(String, HashSet<String>)>) -> Self {
        lists.sort_by(|a, b| a.0.cmp(&b.0));
        Self { lists, min_hits: 1, min_ratio: 0.2 }
    }

    /// Loads `<lang>.txt` files from a directory.
    pub fn from_dir(dir: &Path) -> io::Result<Self> {
        let mut lists = Vec::new();
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            let Some(lang) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            lists.push((lang.to_string(), parse_wordlist(&fs::read_to_string(&path)?)));
        }
        Ok(Self::new(lists))
    }

    pub fn languages(&self) -> impl Iterator<Item = &str> {
        self.lists.iter().map(|(l, _)| l.as_str())
    }

    /// Stopword hits per language, in language order.
    pub fn votes(&self, tokens: &[&str]) -> Vec<(&str, usize)> {
        self.lists
            .iter()
            .map(|(lang, words)| (lang.as_str(), tokens.iter().filter(|t| words.contains(**t)).count()))
            .collect()
    }
}

fn script_tag(text: &str) -> Option<&'static str> {
    let (mut hangul, mut kana, mut han, mut cyrillic, mut letters) = (0usize, 0usize, 0usize, 0usize, 0usize);
    for c in text.chars() {
        if !c.is_alphabetic() {
            continue;
        }
        letters += 1;
        match c as u32 {
            0x1100..=0x11FF | 0x3130..=0x318F | 0xAC00..=0xD7AF => hangul += 1,
            0x3040..=0x30FF | 0x31F0..=0x31FF | 0xFF66..=0xFF9F => kana += 1,
            0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xF900..=0xFAFF | 0x20000..=0x2FA1F => han += 1,
            0x0400..=0x052F => cyrillic += 1,
            _ => {}
        }
    }
    if letters == 0 || 2 * (hangul + kana + han + cyrillic) < letters {
        return None;
    }
    if hangul > 0 {
        Some("ko")
    } else if kana > 0 {
        Some("ja")
    } else if han > 0 {
        Some("zh")
    } else if cyrillic > 0 {
        Some("ru")
    } else {
        None
    }
}

impl LanguageDetector for HeuristicDetector {
    fn detect(&self, text: &str) -> Option<String> {
        if let Some(tag) = script_tag(text) {
            return Some(tag.to_string());
        }
        let normalized = normalize(text);
        let tokens: Vec<&str> = normalized.split(' ').filter(|t| !t.is_empty()).collect();
        if tokens.is_empty() {
            return None;
        }
        let votes = self.votes(&tokens);
        let best = votes.iter().map(|(_, n)| *n).max()?;
        let mut winners = votes.iter().filter(|(_, n)| *n == best);
        let (lang, hits) = winners.next()?;
        if winners.next().is_some() || *hits < self.min_hits || (*hits as f64) < self.min_ratio * tokens.len() as f64 {
            return None;
        }
        Some(lang.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripts() {
        let d = HeuristicDetector::bundled();
        assert_eq!(d.detect("한국어 검색").as_deref(), Some("ko"));
        assert_eq!(d.detect("東京の天気").as_deref(), Some("ja"));
        assert_eq!(d.detect("北京天气").as_deref(), Some("zh"));
        assert_eq!(d.detect("погода в москве").as_deref(), Some("ru"));
    }

    #[test]
    fn stopword_vote() {
        let d = HeuristicDetector::bundled();
        assert_eq!(d.detect("the quick brown fox").as_deref(), Some("en"));
        assert_eq!(d.detect("wie wird das wetter").as_deref(), Some("de"));
        assert_eq!(d.detect("recette de la tarte aux pommes").as_deref(), Some("fr"));
        assert_eq!(d.detect(""), None);
        assert_eq!(d.detect("xkcd 927"), None);
        // "de" alone is claimed by several lists: no unique winner.
        assert_eq!(d.detect("de"), None);
    }

    #[test]
    fn ratio_threshold() {
        let d = HeuristicDetector::bundled();
        assert_eq!(d.detect("the alpha beta gamma delta epsilon"), None);
    }
}
