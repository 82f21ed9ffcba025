//! Pinyin syllable structure and a cost-table edit distance between
//! pronunciations.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

/// Initials, two-letter ones first so a prefix scan finds the longest match.
pub const INITIALS: [&str; 23] = [
    "zh", "ch", "sh", "b", "p", "m", "f", "d", "t", "n", "l", "g", "k", "h", "j", "q", "x", "r", "z", "c", "s", "y", "w",
];

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Syllable {
    pub initial: String,
    pub final_: String,
    pub tone: u8,
}

impl std::fmt::Display for Syllable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}{}{}", self.initial, self.final_, self.tone)
    }
}

pub fn parse_syllable(s: &str) -> Result<Syllable> {
    let bad = || Error::BadSyllable(s.to_string());
    let (body, tone) = s.split_at(s.len().checked_sub(1).ok_or_else(bad)?);
    let tone = match tone.as_bytes() {
        [d @ b'0'..=b'4'] => d - b'0',
        _ => return Err(bad()),
    };
    let initial = INITIALS.iter().find(|i| body.starts_with(*i)).copied().unwrap_or("");
    let final_ = &body[initial.len()..];
    if final_.is_empty() {
        return Err(bad());
    }
    Ok(Syllable {
        initial: initial.to_string(),
        final_: final_.to_string(),
        tone,
    })
}

/// Substitution costs between pronunciation components.
///
/// Components in a shared group substitute at that group's cost; any other
/// mismatch costs `substitution`, which also caps the cost of replacing one
/// whole syllable by another inside [`phrase_distance`].
#[derive(Debug, Clone, PartialEq)]
pub struct CostTable {
    pub initial_groups: Vec<(Vec<String>, f64)>,
    pub final_groups: Vec<(Vec<String>, f64)>,
    pub tone_cost: f64,
    pub substitution: f64,
    pub insertion: f64,
    pub deletion: f64,
}

impl Default for CostTable {
    fn default() -> Self {
        let groups = |sets: &[&[&str]]| {
            sets.iter()
                .map(|g| (g.iter().map(|s| s.to_string()).collect(), 0.5))
                .collect()
        };
        CostTable {
            initial_groups: groups(&[&["zh", "z"], &["ch", "c"], &["sh", "s"], &["n", "l"], &["f", "h"]]),
            final_groups: groups(&[&["in", "ing"], &["en", "eng"], &["an", "ang"]]),
            tone_cost: 0.2,
            substitution: 1.0,
            insertion: 1.0,
            deletion: 1.0,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CostFile {
    #[serde(default)]
    initial_groups: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    final_groups: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    costs: BTreeMap<String, f64>,
}

impl CostTable {
    /// Parses the sectioned key-value format:
    ///
    /// ```text
    /// [initial_groups]
    /// "zh z" = 0.5
    /// [final_groups]
    /// "in ing" = 0.5
    /// [costs]
    /// tone = 0.2
    /// ```
    ///
    /// A section that is present replaces the compiled-in default for it.
    pub fn parse(text: &str) -> Result<Self> {
        let file: CostFile = toml::from_str(text).map_err(|e| Error::BadFormat(format!("cost table: {e}")))?;
        let mut table = CostTable::default();
        let groups = |m: BTreeMap<String, f64>| -> Vec<(Vec<String>, f64)> {
            m.into_iter()
                .map(|(k, v)| (k.split_whitespace().map(str::to_string).collect(), v))
                .collect()
        };
        if let Some(g) = file.initial_groups {
            table.initial_groups = groups(g);
        }
        if let Some(g) = file.final_groups {
            table.final_groups = groups(g);
        }
        for (key, value) in file.costs {
            let slot = match key.as_str() {
                "tone" => &mut table.tone_cost,
                "substitution" => &mut table.substitution,
                "insertion" => &mut table.insertion,
                "deletion" => &mut table.deletion,
                other => return Err(Error::BadFormat(format!("cost table: unknown cost {other:?}"))),
            };
            *slot = value;
        }
        let all = table
            .initial_groups
            .iter()
            .chain(&table.final_groups)
            .map(|g| g.1)
            .chain([table.tone_cost, table.substitution, table.insertion, table.deletion]);
        if let Some(c) = all.into_iter().find(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::BadFormat(format!("cost table: invalid cost {c}")));
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        CostTable::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    fn component(&self, groups: &[(Vec<String>, f64)], a: &str, b: &str) -> f64 {
        if a == b {
            return 0.0;
        }
        groups
            .iter()
            .filter(|(g, _)| g.iter().any(|x| x == a) && g.iter().any(|x| x == b))
            .map(|g| g.1)
            .fold(self.substitution, f64::min)
    }
}

pub fn syllable_distance(a: &Syllable, b: &Syllable, costs: &CostTable) -> f64 {
    let tone = if a.tone == b.tone { 0.0 } else { costs.tone_cost };
    costs.component(&costs.initial_groups, &a.initial, &b.initial)
        + costs.component(&costs.final_groups, &a.final_, &b.final_)
        + tone
}

/// Levenshtein distance over syllables divided by the longer length.
pub fn phrase_distance(a: &[Syllable], b: &[Syllable], costs: &CostTable) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 0.0;
    }
    let mut prev: Vec<f64> = (0..=b.len()).map(|j| j as f64 * costs.insertion).collect();
    let mut cur = vec![0.0; b.len() + 1];
    for (i, sa) in a.iter().enumerate() {
        cur[0] = (i + 1) as f64 * costs.deletion;
        for (j, sb) in b.iter().enumerate() {
            let sub = syllable_distance(sa, sb, costs).min(costs.substitution);
            cur[j + 1] = (prev[j] + sub)
                .min(prev[j + 1] + costs.deletion)
                .min(cur[j] + costs.insertion);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()] / longest as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn syl(s: &str) -> Syllable {
        parse_syllable(s).unwrap()
    }

    fn syls(s: &[&str]) -> Vec<Syllable> {
        s.iter().map(|x| syl(x)).collect()
    }

    #[test]
    fn parse_splits_longest_initial() {
        assert_eq!(
            syl("zhong1"),
            Syllable {
                initial: "zh".into(),
                final_: "ong".into(),
                tone: 1
            }
        );
        assert_eq!(syl("an4").initial, "");
        assert_eq!(syl("an4").final_, "an");
        assert_eq!(syl("ma0").tone, 0);
        assert_eq!(syl("shi4").to_string(), "shi4");
    }

    #[test]
    fn parse_rejects_malformed() {
        for s in ["zh1", "zhong", "zhong5", "", "1"] {
            assert!(matches!(parse_syllable(s), Err(Error::BadSyllable(_))), "{s}");
        }
    }

    #[test]
    fn syllable_distance_defaults() {
        let c = CostTable::default();
        assert_eq!(syllable_distance(&syl("zhong1"), &syl("zhong1"), &c), 0.0);
        assert!((syllable_distance(&syl("zhang1"), &syl("zhang4"), &c) - 0.2).abs() < 1e-12);
        assert!((syllable_distance(&syl("zhang1"), &syl("zang1"), &c) - 0.5).abs() < 1e-12);
        assert!((syllable_distance(&syl("lin2"), &syl("ning2"), &c) - 1.0).abs() < 1e-12);
        assert!((syllable_distance(&syl("ba1"), &syl("po3"), &c) - 2.2).abs() < 1e-12);
    }

    #[test]
    fn phrase_distance_cases() {
        let c = CostTable::default();
        assert_eq!(phrase_distance(&syls(&["zhong1", "guo2"]), &syls(&["zhong1", "guo2"]), &c), 0.0);
        assert_eq!(phrase_distance(&syls(&["zhong1"]), &[], &c), 1.0);
        assert_eq!(phrase_distance(&[], &[], &c), 0.0);
        let d = phrase_distance(&syls(&["zhang1", "hai3"]), &syls(&["zang1", "hai3"]), &c);
        assert!((d - 0.25).abs() < 1e-12);
    }

    #[test]
    fn cost_table_file_overrides_sections() {
        let t = CostTable::parse("[initial_groups]\n\"l r\" = 0.3\n[costs]\ntone = 0.4\n").unwrap();
        assert!((syllable_distance(&syl("lu4"), &syl("ru4"), &t) - 0.3).abs() < 1e-12);
        assert!((syllable_distance(&syl("zang1"), &syl("zhang1"), &t) - 1.0).abs() < 1e-12);
        assert!((syllable_distance(&syl("an1"), &syl("ang1"), &t) - 0.5).abs() < 1e-12);
        assert!((t.tone_cost - 0.4).abs() < 1e-12);
        assert!(CostTable::parse("[costs]\nbogus = 1\n").is_err());
        assert!(CostTable::parse("[costs]\ntone = -1\n").is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn syllable() -> impl Strategy<Value = Syllable> {
            let initials = prop::sample::select(vec!["", "zh", "z", "ch", "c", "sh", "s", "n", "l", "f", "h", "b", "m"]);
            let finals = prop::sample::select(vec!["a", "an", "ang", "in", "ing", "en", "eng", "ong", "u", "i"]);
            (initials, finals, 0u8..5).prop_map(|(i, f, t)| Syllable {
                initial: i.to_string(),
                final_: f.to_string(),
                tone: t,
            })
        }

        proptest! {
            #[test]
            fn symmetric(a in prop::collection::vec(syllable(), 0..6), b in prop::collection::vec(syllable(), 0..6)) {
                let c = CostTable::default();
                prop_assert!((phrase_distance(&a, &b, &c) - phrase_distance(&b, &a, &c)).abs() < 1e-12);
            }

            #[test]
            fn normalized_range(a in prop::collection::vec(syllable(), 0..6), b in prop::collection::vec(syllable(), 0..6)) {
                let d = phrase_distance(&a, &b, &CostTable::default());
                prop_assert!((0.0..=1.0).contains(&d));
            }

            #[test]
            fn zero_iff_equal(a in syllable(), b in syllable()) {
                let d = syllable_distance(&a, &b, &CostTable::default());
                prop_assert_eq!(d == 0.0, a == b);
            }
        }
    }
}
