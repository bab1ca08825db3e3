//! Surface resolution and cluster quality filters.
//!
//! An entity's surface string is the anchor text most likely to link to its
//! Wikipedia page in the target language, falling back to its label. Resolved
//! clusters are then screened by a fixed sequence of heuristics; see
//! [`reject_reasons`].

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_properties::{GeneralCategory, UnicodeGeneralCategory};

use crate::formats::{validate_record, AnchorEntry, DatasetLimits, DatasetRecord, Outlier};
use crate::generator::RawGroup;
use crate::graph::{EntityId, KnowledgeGraph};

/// Per-language page title to most probable anchor.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnchorIndex {
    language: String,
    winners: HashMap<String, (String, f64)>,
}

fn normalize_title(title: &str) -> String {
    title.trim().replace('_', " ")
}

impl AnchorIndex {
    pub fn empty(language: &str) -> Self {
        Self {
            language: language.to_owned(),
            winners: HashMap::new(),
        }
    }

    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn len(&self) -> usize {
        self.winners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.winners.is_empty()
    }

    /// Winning anchor and its probability `P(anchor | title)`. Underscores and
    /// spaces in titles are interchangeable.
    pub fn lookup(&self, title: &str) -> Option<(&str, f64)> {
        self.winners.get(&normalize_title(title)).map(|(a, p)| (a.as_str(), *p))
    }
}

/// Aggregate anchor counts per title and keep the argmax of
/// `count(anchor, title) / count(*, title)`. Ties go to the smaller anchor.
pub fn build_anchor_index<I>(entries: I, language: &str) -> AnchorIndex
where
    I: IntoIterator<Item = AnchorEntry>,
{
    let mut counts: HashMap<String, HashMap<String, u64>> = HashMap::new();
    for e in entries {
        *counts
            .entry(normalize_title(&e.target_title))
            .or_default()
            .entry(e.anchor)
            .or_default() += e.count;
    }
    let winners = counts
        .into_iter()
        .map(|(title, anchors)| {
            let total: u64 = anchors.values().sum();
            let (anchor, count) = anchors
                .into_iter()
                .max_by(|(a1, c1), (a2, c2)| c1.cmp(c2).then_with(|| a2.cmp(a1)))
                .expect("every title has at least one anchor");
            (title, (anchor, count as f64 / total as f64))
        })
        .collect();
    AnchorIndex {
        language: language.to_owned(),
        winners,
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RefineError {
    #[error("unknown entity {0}")]
    UnknownEntity(EntityId),
    #[error("entity {0} has neither an anchor nor a label in {1}")]
    Unresolvable(EntityId, String),
}

/// Surface string for `id` in the index's language.
pub fn resolve_surface(idx: &AnchorIndex, g: &KnowledgeGraph, id: &EntityId) -> Result<String, RefineError> {
    let ix = g
        .node(id.as_str())
        .ok_or_else(|| RefineError::UnknownEntity(id.clone()))?;
    let entity = g.entity(ix);
    let lang = idx.language();
    if let Some((anchor, _)) = entity.wiki_titles.get(lang).and_then(|t| idx.lookup(t)) {
        return Ok(anchor.to_owned());
    }
    entity
        .label(lang)
        .map(str::to_owned)
        .ok_or_else(|| RefineError::Unresolvable(id.clone(), lang.to_owned()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LanguageProfile {
    pub language: String,
    /// Character-based affix rules for Chinese and Japanese.
    pub cjk_mode: bool,
    /// Also compare first/last whitespace-delimited words.
    pub word_affix_check: bool,
    pub stop_prefixes: Vec<String>,
    pub stop_suffixes: Vec<String>,
    pub single_char_filter_enabled: bool,
    pub affix_window: usize,
    pub digit_dup_threshold: usize,
    pub affix_dup_threshold: usize,
    /// CJK mode: this many surfaces sharing a first or last non-kana character
    /// reject the cluster.
    pub cjk_char_min: usize,
}

impl Default for LanguageProfile {
    fn default() -> Self {
        Self {
            language: "en".into(),
            cjk_mode: false,
            word_affix_check: false,
            stop_prefixes: ["Category:", "Template:", "Wikipedia:", "Portal:", "Help:", "List of "]
                .map(String::from)
                .to_vec(),
            stop_suffixes: Vec::new(),
            single_char_filter_enabled: true,
            affix_window: 6,
            digit_dup_threshold: 2,
            affix_dup_threshold: 3,
            cjk_char_min: 6,
        }
    }
}

impl LanguageProfile {
    /// Built-in profile for a language code.
    pub fn for_language(code: &str) -> Self {
        let base = Self {
            language: code.to_owned(),
            ..Self::default()
        };
        match code {
            "en" => Self {
                word_affix_check: true,
                ..base
            },
            "ja" => Self {
                cjk_mode: true,
                single_char_filter_enabled: false,
                stop_prefixes: ["Category:", "カテゴリ:", "Template:", "Wikipedia:"]
                    .map(String::from)
                    .to_vec(),
                stop_suffixes: vec!["一覧".into()],
                ..base
            },
            "zh" => Self {
                cjk_mode: true,
                single_char_filter_enabled: false,
                stop_prefixes: ["Category:", "分类:", "Template:", "Wikipedia:"]
                    .map(String::from)
                    .to_vec(),
                stop_suffixes: vec!["列表".into(), "一覽".into(), "一览".into()],
                ..base
            },
            "de" => Self {
                stop_prefixes: ["Category:", "Kategorie:", "Liste "].map(String::from).to_vec(),
                ..base
            },
            "es" => Self {
                stop_prefixes: ["Category:", "Categoría:", "Anexo:"].map(String::from).to_vec(),
                ..base
            },
            _ => base,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ViolationCode {
    DigitDuplicates,
    AffixOverlap,
    StopAffix,
    SingleChar,
    TooFewAfterDedup,
}

/// A failed cluster check with the surfaces that triggered it, sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub detail: Vec<String>,
}

fn is_kana(c: char) -> bool {
    matches!(c,
        '\u{3040}'..='\u{309F}'
        | '\u{30A0}'..='\u{30FF}'
        | '\u{31F0}'..='\u{31FF}'
        | '\u{FF66}'..='\u{FF9F}')
}

fn strip_digits(s: &str) -> String {
    s.chars()
        .filter(|c| c.general_category() != GeneralCategory::DecimalNumber)
        .collect()
}

/// Surfaces in every bucket whose size passes `too_many`.
fn crowded<'a, K: Ord>(
    keyed: impl Iterator<Item = (K, &'a str)>,
    too_many: impl Fn(usize) -> bool,
) -> BTreeSet<&'a str> {
    let mut buckets: BTreeMap<K, Vec<&str>> = BTreeMap::new();
    for (k, s) in keyed {
        buckets.entry(k).or_default().push(s);
    }
    buckets.into_values().filter(|b| too_many(b.len())).flatten().collect()
}

fn affix_offenders<'a>(distinct: &[&'a str], p: &LanguageProfile) -> BTreeSet<&'a str> {
    let chars: Vec<(Vec<char>, &str)> = distinct.iter().map(|s| (s.chars().collect(), *s)).collect();
    let mut out = BTreeSet::new();
    let over = |n: usize| n > p.affix_dup_threshold;

    if p.cjk_mode {
        let at_least = |n: usize| n >= p.cjk_char_min;
        let firsts = chars
            .iter()
            .filter_map(|(c, s)| c.first().filter(|c| !is_kana(**c)).map(|c| (*c, *s)));
        out.extend(crowded(firsts, at_least));
        let lasts = chars
            .iter()
            .filter_map(|(c, s)| c.last().filter(|c| !is_kana(**c)).map(|c| (*c, *s)));
        out.extend(crowded(lasts, at_least));
        let two = chars.iter().filter(|(c, _)| c.len() >= 2);
        out.extend(crowded(two.clone().map(|(c, s)| (c[..2].to_vec(), *s)), over));
        out.extend(crowded(two.map(|(c, s)| (c[c.len() - 2..].to_vec(), *s)), over));
        return out;
    }

    let w = p.affix_window;
    let long = chars.iter().filter(|(c, _)| c.len() >= w);
    out.extend(crowded(long.clone().map(|(c, s)| (c[..w].to_vec(), *s)), over));
    out.extend(crowded(long.map(|(c, s)| (c[c.len() - w..].to_vec(), *s)), over));

    if p.word_affix_check {
        let words: Vec<(Vec<&str>, &str)> = distinct
            .iter()
            .map(|s| (s.split_whitespace().collect::<Vec<_>>(), *s))
            .filter(|(ws, _)| ws.len() >= 2)
            .collect();
        out.extend(crowded(words.iter().map(|(ws, s)| (ws[0], *s)), over));
        out.extend(crowded(words.iter().map(|(ws, s)| (ws[ws.len() - 1], *s)), over));
    }
    out
}

fn has_stop_affix(s: &str, p: &LanguageProfile) -> bool {
    p.stop_prefixes.iter().any(|x| s.starts_with(x.as_str())) || p.stop_suffixes.iter().any(|x| s.ends_with(x.as_str()))
}

fn violation(code: ViolationCode, detail: BTreeSet<&str>) -> Option<Violation> {
    (!detail.is_empty()).then(|| Violation {
        code,
        detail: detail.into_iter().map(str::to_owned).collect(),
    })
}

/// Run the cluster checks in fixed order and return every violation found.
/// The checks see the cluster with exact duplicates collapsed, so the result
/// does not depend on the order of `cluster`.
pub fn reject_reasons(cluster: &[String], profile: &LanguageProfile, min_size: usize) -> Vec<Violation> {
    let mut seen = HashSet::new();
    let distinct: Vec<&str> = cluster.iter().map(String::as_str).filter(|s| seen.insert(*s)).collect();
    let mut out = Vec::new();

    let stripped: Vec<(String, &str)> = distinct.iter().map(|s| (strip_digits(s), *s)).collect();
    out.extend(violation(
        ViolationCode::DigitDuplicates,
        crowded(stripped.iter().map(|(k, s)| (k.as_str(), *s)), |n| {
            n > profile.digit_dup_threshold
        }),
    ));

    out.extend(violation(
        ViolationCode::AffixOverlap,
        affix_offenders(&distinct, profile),
    ));

    out.extend(violation(
        ViolationCode::StopAffix,
        distinct
            .iter()
            .copied()
            .filter(|s| has_stop_affix(s, profile))
            .collect(),
    ));

    if profile.single_char_filter_enabled {
        let singles: BTreeSet<&str> = distinct.iter().copied().filter(|s| s.chars().count() == 1).collect();
        if singles.len() > 1 {
            out.extend(violation(ViolationCode::SingleChar, singles));
        }
    }

    if distinct.len() < min_size {
        let mut detail: BTreeSet<&str> = distinct.iter().copied().collect();
        if detail.is_empty() {
            detail.insert("<empty cluster>");
        }
        out.extend(violation(ViolationCode::TooFewAfterDedup, detail));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RefineReject {
    Violations(Vec<Violation>),
    NoOutliers,
    /// The resolved group broke a dataset invariant the checks do not cover,
    /// e.g. a configured cluster size above the dataset maximum.
    Invalid(String),
}

/// Resolve a raw group to surfaces and screen it.
///
/// Duplicate cluster surfaces keep their first (most prominent) occurrence.
/// Outliers that duplicate a cluster surface or an earlier outlier, or fail
/// to resolve, are dropped. A stop affix on any surface rejects the group.
pub fn refine_group(
    raw: &RawGroup,
    idx: &AnchorIndex,
    g: &KnowledgeGraph,
    profile: &LanguageProfile,
    limits: &DatasetLimits,
) -> Result<DatasetRecord, RefineReject> {
    let resolved: Vec<String> = raw
        .cluster_ids
        .iter()
        .filter_map(|id| resolve_surface(idx, g, id).ok())
        .collect();
    let mut violations = reject_reasons(&resolved, profile, limits.min_cluster);

    let outliers: Vec<Outlier> = raw
        .outlier_ids
        .iter()
        .filter_map(|(tier, id)| {
            resolve_surface(idx, g, id)
                .ok()
                .map(|surface| Outlier { tier: *tier, surface })
        })
        .collect();
    let stopped: BTreeSet<&str> = outliers
        .iter()
        .map(|o| o.surface.as_str())
        .filter(|s| has_stop_affix(s, profile))
        .collect();
    if !stopped.is_empty() {
        match violations.iter_mut().find(|v| v.code == ViolationCode::StopAffix) {
            Some(v) => {
                v.detail.extend(stopped.into_iter().map(str::to_owned));
                v.detail.sort();
                v.detail.dedup();
            }
            None => violations.extend(violation(ViolationCode::StopAffix, stopped)),
        }
        violations.sort_by_key(|v| v.code);
    }
    if !violations.is_empty() {
        return Err(RefineReject::Violations(violations));
    }

    let mut seen = HashSet::new();
    let cluster: Vec<String> = resolved.into_iter().filter(|s| seen.insert(s.clone())).collect();
    let outliers: Vec<Outlier> = outliers
        .into_iter()
        .filter(|o| seen.insert(o.surface.clone()))
        .collect();
    if outliers.is_empty() {
        return Err(RefineReject::NoOutliers);
    }

    let class_label = g
        .node(raw.class_id.as_str())
        .and_then(|ix| g.entity(ix).label(idx.language()))
        .unwrap_or(raw.class_id.as_str())
        .to_owned();
    let record = DatasetRecord {
        class_id: raw.class_id.clone(),
        class_label,
        language: idx.language().to_owned(),
        cluster,
        outliers,
    };
    validate_record(&record, limits).map_err(RefineReject::Invalid)?;
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(list: &[&str]) -> Vec<String> {
        list.iter().map(|x| x.to_string()).collect()
    }

    fn codes(v: &[Violation]) -> Vec<ViolationCode> {
        v.iter().map(|x| x.code).collect()
    }

    fn entry(anchor: &str, title: &str, count: u64) -> AnchorEntry {
        AnchorEntry {
            anchor: anchor.into(),
            target_title: title.into(),
            count,
        }
    }

    #[test]
    fn single_entry_has_probability_one() {
        let idx = build_anchor_index(vec![entry("a", "T", 5)], "en");
        assert_eq!(idx.lookup("T"), Some(("a", 1.0)));
    }

    #[test]
    fn most_probable_anchor_wins() {
        let idx = build_anchor_index(
            vec![
                entry("Man Utd", "Manchester_United_F.C.", 300),
                entry("Manchester United", "Manchester_United_F.C.", 500),
                entry("The Red Devils", "Manchester_United_F.C.", 200),
            ],
            "en",
        );
        assert_eq!(idx.lookup("Manchester United F.C."), Some(("Manchester United", 0.5)));
    }

    #[test]
    fn anchor_ties_prefer_smaller_string() {
        let idx = build_anchor_index(vec![entry("b", "T", 2), entry("a", "T", 2)], "en");
        assert_eq!(idx.lookup("T"), Some(("a", 0.5)));
    }

    #[test]
    fn january_years_are_digit_duplicates() {
        let c = s(&[
            "January 2010",
            "January 2012",
            "January 2014",
            "January 2016",
            "March",
            "April",
            "May",
        ]);
        assert!(codes(&reject_reasons(&c, &LanguageProfile::for_language("en"), 7))
            .contains(&ViolationCode::DigitDuplicates));
        // exactly two collisions is allowed
        let c = s(&[
            "January 2010",
            "January 2012",
            "a1",
            "Rohan",
            "Shire",
            "Arnor",
            "Gondor",
        ]);
        assert!(!codes(&reject_reasons(&c, &LanguageProfile::for_language("en"), 7))
            .contains(&ViolationCode::DigitDuplicates));
    }

    #[test]
    fn fullwidth_digits_are_digits() {
        let c = s(&["２０１０年", "２０１２年", "２０１４年"]);
        let v = reject_reasons(&c, &LanguageProfile::for_language("ja"), 3);
        assert_eq!(codes(&v), vec![ViolationCode::DigitDuplicates]);
    }

    #[test]
    fn cjk_affix_rules() {
        let p = LanguageProfile::for_language("zh");
        // six sharing a last character
        let c = s(&["北京市", "上海市", "广州市", "深圳市", "天津市", "重庆市", "香港"]);
        assert!(codes(&reject_reasons(&c, &p, 7)).contains(&ViolationCode::AffixOverlap));
        // five is fine
        let c = s(&["北京市", "上海市", "广州市", "深圳市", "天津市", "重庆", "香港"]);
        assert!(reject_reasons(&c, &p, 7).is_empty());
        // four sharing two leading characters
        let c = s(&["中华民国", "中华人民", "中华书局", "中华网", "日本", "韩国", "美国"]);
        assert!(codes(&reject_reasons(&c, &p, 7)).contains(&ViolationCode::AffixOverlap));
        // kana boundary characters are not compared
        let p = LanguageProfile::for_language("ja");
        let c = s(&["東京ス", "大阪ス", "京都ス", "奈良ス", "神戸ス", "札幌ス", "仙台"]);
        assert!(reject_reasons(&c, &p, 7).is_empty());
    }

    #[test]
    fn clean_cluster_passes() {
        let c = s(&[
            "Mordor", "Rohan", "Shire", "Arnor", "Gondor", "Narnia", "Oz", "Lilliput",
        ]);
        assert!(reject_reasons(&c, &LanguageProfile::for_language("en"), 7).is_empty());
    }

    #[test]
    fn too_few_after_dedup() {
        let c = s(&["Mordor", "Mordor", "Rohan", "Shire", "Arnor", "Arnor", "Gondor"]);
        let v = reject_reasons(&c, &LanguageProfile::for_language("en"), 7);
        assert_eq!(codes(&v), vec![ViolationCode::TooFewAfterDedup]);
        assert_eq!(v[0].detail.len(), 5);
    }

    #[test]
    fn single_char_filter_can_be_disabled() {
        let c = s(&["a", "b", "Mordor", "Rohan", "Shire", "Arnor", "Gondor"]);
        let mut p = LanguageProfile::for_language("en");
        assert_eq!(codes(&reject_reasons(&c, &p, 7)), vec![ViolationCode::SingleChar]);
        p.single_char_filter_enabled = false;
        assert!(reject_reasons(&c, &p, 7).is_empty());
    }
}
