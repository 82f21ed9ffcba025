//! Unit inventories, the pronunciation lexicon and text tokenization.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BLANK: &str = "<blk>";
pub const BLANK_ID: u32 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitKind {
    Character,
    Syllable,
}

impl fmt::Display for UnitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UnitKind::Character => f.write_str("character"),
            UnitKind::Syllable => f.write_str("syllable"),
        }
    }
}

/// An ordered unit inventory with the CTC blank at index 0.
#[derive(Debug, Clone)]
pub struct UnitSet {
    id: String,
    kind: UnitKind,
    units: Vec<String>,
    index: HashMap<String, u32>,
    // Whether the source listed "<blk>" itself; kept so writing reproduces it.
    explicit_blank: bool,
}

impl UnitSet {
    /// Builds a set from units in order, prepending the blank unless the
    /// first unit already is the blank.
    pub fn new<I, S>(id: impl Into<String>, kind: UnitKind, units: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut all = vec![BLANK.to_string()];
        let mut index = HashMap::new();
        index.insert(BLANK.to_string(), BLANK_ID);
        let mut explicit_blank = false;
        for (line, unit) in units.into_iter().enumerate() {
            let unit = unit.into();
            if line == 0 && unit == BLANK {
                explicit_blank = true;
                continue;
            }
            if unit.is_empty() {
                return Err(Error::BadFormat(format!("empty unit at entry {}", line + 1)));
            }
            if index.contains_key(&unit) {
                return Err(Error::DuplicateUnit {
                    unit,
                    line: line + 1,
                });
            }
            index.insert(unit.clone(), all.len() as u32);
            all.push(unit);
        }
        if all.len() < 2 {
            return Err(Error::EmptyUnitSet);
        }
        Ok(UnitSet {
            id: id.into(),
            kind,
            units: all,
            index,
            explicit_blank,
        })
    }

    /// Parses the one-unit-per-line text format. Lines starting with '#'
    /// are comments; blank lines are skipped.
    pub fn parse(id: impl Into<String>, kind: UnitKind, text: &str) -> Result<Self> {
        let units = text
            .lines()
            .map(|l| l.trim_end_matches('\r'))
            .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
            .map(|l| l.trim().to_string());
        UnitSet::new(id, kind, units)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn kind(&self) -> UnitKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn blank_index(&self) -> u32 {
        BLANK_ID
    }

    pub fn units(&self) -> &[String] {
        &self.units
    }

    pub fn get(&self, unit: &str) -> Option<u32> {
        self.index.get(unit).copied()
    }

    /// Unit string for an id. Panics on out-of-range ids.
    pub fn unit(&self, id: u32) -> &str {
        &self.units[id as usize]
    }

    pub fn contains_id(&self, id: u32) -> bool {
        (id as usize) < self.units.len()
    }

    /// Joins unit strings. Character units concatenate, syllables are
    /// space-separated.
    pub fn render(&self, ids: &[u32]) -> String {
        let sep = match self.kind {
            UnitKind::Character => "",
            UnitKind::Syllable => " ",
        };
        ids.iter()
            .map(|&i| self.unit(i))
            .collect::<Vec<_>>()
            .join(sep)
    }

    pub fn to_text(&self) -> String {
        let skip = if self.explicit_blank { 0 } else { 1 };
        let mut out = String::new();
        for unit in &self.units[skip..] {
            out.push_str(unit);
            out.push('\n');
        }
        out
    }
}

/// Loads a unit set; the id is the file stem.
pub fn load_unit_set(path: impl AsRef<Path>, kind: UnitKind) -> Result<UnitSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    UnitSet::parse(id, kind, &text)
}

pub fn write_unit_set(set: &UnitSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, set.to_text()).map_err(|e| Error::io(path, e))
}

/// Maps each character to its pronunciations; the first is the primary one.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: HashMap<String, Vec<String>>,
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, ch: impl Into<String>, prons: Vec<String>) {
        self.entries.insert(ch.into(), prons);
    }

    /// Parses `char<TAB>syll1 syll2 ...` lines and checks every entry
    /// against both inventories.
    pub fn parse(text: &str, chars: &UnitSet, sylls: &UnitSet) -> Result<Self> {
        let mut lex = Lexicon::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: String| Error::BadLexicon { line: n + 1, reason };
            let (ch, prons) = line
                .split_once('\t')
                .ok_or_else(|| bad("missing tab".into()))?;
            if chars.get(ch).is_none() {
                return Err(bad(format!("character {ch:?} not in unit set")));
            }
            let prons: Vec<String> = prons.split_whitespace().map(str::to_string).collect();
            if prons.is_empty() {
                return Err(bad(format!("no pronunciation for {ch:?}")));
            }
            if let Some(p) = prons.iter().find(|p| sylls.get(p).is_none()) {
                return Err(bad(format!("syllable {p:?} not in unit set")));
            }
            lex.entries.insert(ch.to_string(), prons);
        }
        Ok(lex)
    }

    pub fn load(path: impl AsRef<Path>, chars: &UnitSet, sylls: &UnitSet) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Lexicon::parse(&text, chars, sylls)
    }

    /// Entries sorted by character, one per line.
    pub fn to_text(&self) -> String {
        let mut keys: Vec<&String> = self.entries.keys().collect();
        keys.sort();
        let mut out = String::new();
        for k in keys {
            out.push_str(k);
            out.push('\t');
            out.push_str(&self.entries[k].join(" "));
            out.push('\n');
        }
        out
    }

    pub fn pronunciations(&self, ch: &str) -> Option<&[String]> {
        self.entries.get(ch).map(Vec::as_slice)
    }

    pub fn primary(&self, ch: &str) -> Option<&str> {
        self.entries.get(ch).and_then(|p| p.first()).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// One id per Unicode scalar, whitespace skipped.
pub fn tokenize_chars(text: &str, set: &UnitSet) -> Result<Vec<u32>> {
    let mut buf = [0u8; 4];
    text.chars()
        .enumerate()
        .filter(|(_, c)| !c.is_whitespace())
        .map(|(pos, c)| {
            let s: &str = c.encode_utf8(&mut buf);
            set.get(s).ok_or_else(|| Error::OutOfVocabulary {
                unit: s.to_string(),
                position: pos,
            })
        })
        .collect()
}

/// Primary pronunciation of every character, as syllable unit ids.
pub fn syllabify(text: &str, lexicon: &Lexicon, sylls: &UnitSet) -> Result<Vec<u32>> {
    let mut buf = [0u8; 4];
    let mut out = Vec::new();
    for (pos, c) in text.chars().enumerate() {
        if c.is_whitespace() {
            continue;
        }
        let s: &str = c.encode_utf8(&mut buf);
        let oov = || Error::OutOfVocabulary {
            unit: s.to_string(),
            position: pos,
        };
        let syl = lexicon.primary(s).ok_or_else(oov)?;
        out.push(sylls.get(syl).ok_or_else(oov)?);
    }
    Ok(out)
}

/// Syllabifies character unit ids directly.
pub fn syllabify_ids(chars: &[u32], char_set: &UnitSet, lexicon: &Lexicon, sylls: &UnitSet) -> Result<Vec<u32>> {
    chars
        .iter()
        .enumerate()
        .map(|(pos, &id)| {
            let ch = char_set.unit(id);
            lexicon
                .primary(ch)
                .and_then(|s| sylls.get(s))
                .ok_or_else(|| Error::OutOfVocabulary {
                    unit: ch.to_string(),
                    position: pos,
                })
        })
        .collect()
}
