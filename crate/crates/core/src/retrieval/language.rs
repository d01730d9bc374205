use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Language {
    #[serde(rename = "EN", alias = "en")]
    En,
    #[serde(rename = "ZH", alias = "zh")]
    Zh,
    #[serde(rename = "FR", alias = "fr")]
    Fr,
    #[serde(rename = "DE", alias = "de")]
    De,
    #[serde(rename = "JA", alias = "ja")]
    Ja,
    #[serde(rename = "RU", alias = "ru")]
    Ru,
}

impl Language {
    pub const ALL: [Language; 6] = [
        Language::En,
        Language::Zh,
        Language::Fr,
        Language::De,
        Language::Ja,
        Language::Ru,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Language::En => "EN",
            Language::Zh => "ZH",
            Language::Fr => "FR",
            Language::De => "DE",
            Language::Ja => "JA",
            Language::Ru => "RU",
        }
    }

    pub fn english_name(self) -> &'static str {
        match self {
            Language::En => "English",
            Language::Zh => "Chinese",
            Language::Fr => "French",
            Language::De => "German",
            Language::Ja => "Japanese",
            Language::Ru => "Russian",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown language `{0}` (expected one of EN, ZH, FR, DE, JA, RU)")]
pub struct UnknownLanguage(pub String);

impl FromStr for Language {
    type Err = UnknownLanguage;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Language::ALL
            .into_iter()
            .find(|l| l.code().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownLanguage(s.to_owned()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot determine the language of {0:?}")]
pub struct ClassificationAmbiguous(pub String);

fn is_kana(c: char) -> bool {
    matches!(c, '\u{3040}'..='\u{309F}' | '\u{30A0}'..='\u{30FF}' | '\u{31F0}'..='\u{31FF}' | '\u{FF66}'..='\u{FF9F}')
}

fn is_han(c: char) -> bool {
    matches!(c, '\u{4E00}'..='\u{9FFF}' | '\u{3400}'..='\u{4DBF}' | '\u{F900}'..='\u{FAFF}' | '\u{20000}'..='\u{2FA1F}')
}

fn is_cyrillic(c: char) -> bool {
    matches!(c, '\u{0400}'..='\u{052F}')
}

fn is_latin(c: char) -> bool {
    c.is_ascii_alphabetic() || (matches!(c, '\u{00C0}'..='\u{024F}') && c.is_alphabetic())
}

const EN_WORDS: &[&str] = &[
    "the", "is", "are", "what", "which", "who", "whose", "of", "for", "and", "to", "a", "an",
    "how", "many", "with", "by", "on", "from", "all", "that", "list", "show", "find", "each",
    "their", "has", "have", "do", "does", "was", "were", "when", "where", "me", "give", "return",
    "there", "than", "most",
];
const FR_WORDS: &[&str] = &[
    "le", "la", "les", "des", "du", "de", "un", "une", "est", "sont", "quel", "quelle", "quels",
    "quelles", "qui", "et", "pour", "dans", "avec", "par", "combien", "tous", "toutes", "au",
    "aux", "sur", "ce", "cette", "ces", "leur", "leurs", "où", "quand", "donnez", "liste",
    "affichez", "qu", "ont", "y", "il", "elle",
];
const DE_WORDS: &[&str] = &[
    "der", "die", "das", "den", "dem", "des", "ein", "eine", "einen", "ist", "sind", "was",
    "welche", "welcher", "welches", "wer", "und", "für", "mit", "von", "im", "auf", "wie", "viele",
    "alle", "zu", "zum", "zur", "nicht", "wann", "wo", "gib", "zeige", "liste", "haben", "hat",
    "es", "gibt",
];

fn latin_language(text: &str) -> Language {
    let lower = text.to_lowercase();
    let mut scores = [0u32; 3];
    for word in lower
        .split(|c: char| !(is_latin(c)))
        .filter(|w| !w.is_empty())
    {
        for (score, list) in scores.iter_mut().zip([EN_WORDS, FR_WORDS, DE_WORDS]) {
            if list.contains(&word) {
                *score += 2;
            }
        }
    }
    for c in lower.chars() {
        match c {
            'é' | 'è' | 'ê' | 'à' | 'ç' | 'ù' | 'œ' | 'î' | 'ô' | 'â' | 'ë' | 'ï' | 'û' => {
                scores[1] += 1
            }
            'ä' | 'ö' | 'ü' | 'ß' => scores[2] += 1,
            _ => {}
        }
    }
    let langs = [Language::En, Language::Fr, Language::De];
    // ties keep the earlier language, so no signal means English
    let mut best = 0;
    for i in 1..3 {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    langs[best]
}

/// Script-based language detection. Any kana means Japanese; otherwise the
/// dominant script decides, and Latin text is split by stop words and
/// diacritics.
pub fn classify_language(text: &str) -> Result<Language, ClassificationAmbiguous> {
    let (mut han, mut cyr, mut latin) = (0usize, 0usize, 0usize);
    for c in text.chars() {
        if is_kana(c) {
            return Ok(Language::Ja);
        }
        if is_han(c) {
            han += 1;
        } else if is_cyrillic(c) {
            cyr += 1;
        } else if is_latin(c) {
            latin += 1;
        }
    }
    if han + cyr + latin == 0 {
        return Err(ClassificationAmbiguous(text.to_owned()));
    }
    // one Han character carries about as much as a short Latin word
    let han_weight = han * 3;
    if han_weight >= cyr && han_weight >= latin {
        Ok(Language::Zh)
    } else if cyr >= latin {
        Ok(Language::Ru)
    } else {
        Ok(latin_language(text))
    }
}
